import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fostersim.datamodel import (
    CohortTable,
    CountTable,
    DemographicKey,
    EpisodeRecord,
    EpisodeTable,
    Race,
    StayClass,
    ValidationError,
    aggregate_admissions,
    all_keys,
    check_age,
    days_to_months,
    format_month,
    parse_month,
)


@pytest.mark.parametrize("text,index", [("2000-11", 0), ("2001-11", 12), ("2017-10", 203), ("2017-11", 204)])
def test_parse_month_examples(text, index):
    assert parse_month(text) == index
    assert format_month(index) == text


@pytest.mark.parametrize("text", ["2000-10", "1999-12", "2017-13", "2017-00", "17-01", "2017/01", "", "abcd-ef"])
def test_parse_month_rejects(text):
    with pytest.raises(ValidationError) as err:
        parse_month(text)
    assert repr(text) in str(err.value) or text in str(err.value)


@given(st.integers(min_value=0, max_value=(2030 - 2000) * 12 + 1))
def test_month_round_trip(index):
    assert parse_month(format_month(index)) == index


def test_enum_ordering_and_keys():
    assert [r.value for r in sorted(Race, key=lambda r: r.index)] == ["B", "W"]
    assert len(StayClass) == 2
    keys = all_keys()
    assert len(keys) == 36 and keys == sorted(keys)
    with pytest.raises(ValidationError):
        check_age(18)


@pytest.mark.parametrize(
    "kwargs",
    [dict(los_days=0), dict(admit_age=-1), dict(admit_age=18), dict(admit_month=-1)],
)
def test_episode_record_validation(kwargs):
    base = dict(youth_id="y", race=Race.WHITE, admit_month=3, admit_age=4, los_days=10, discharged=True)
    with pytest.raises(ValidationError):
        EpisodeRecord(**{**base, **kwargs})


def _table(rows):
    return EpisodeTable.from_records(r if isinstance(r, EpisodeRecord) else EpisodeRecord(*r) for r in rows)


def test_aggregate_examples():
    empty = aggregate_admissions(EpisodeTable.empty(), 0, 5)
    assert empty.total() == 0 and empty.counts.shape == (2, 18, 5)
    m = parse_month("2005-03")
    three = _table([(f"y{i}", Race.BLACK, m, 1, 30, True) for i in range(3)])
    assert aggregate_admissions(three)[(DemographicKey(Race.BLACK, 1), m)] == 3
    pair = _table([("a", Race.BLACK, 4, 7, 3, True), ("b", Race.WHITE, 4, 7, 3, False)])
    table = aggregate_admissions(pair)
    assert table[(DemographicKey(Race.BLACK, 7), 4)] == 1
    assert table[(DemographicKey(Race.WHITE, 7), 4)] == 1
    assert table[(DemographicKey(Race.WHITE, 7), 99)] == 0  # absent cells read zero


record = st.builds(
    EpisodeRecord,
    youth_id=st.text(alphabet="abc123", min_size=1, max_size=6),
    race=st.sampled_from(list(Race)),
    admit_month=st.integers(0, 40),
    admit_age=st.integers(0, 17),
    los_days=st.integers(1, 3000),
    discharged=st.booleans(),
)


@given(st.lists(record, max_size=40), st.randoms())
def test_aggregate_permutation_invariant_and_conserves_mass(records, rnd):
    shuffled = list(records)
    rnd.shuffle(shuffled)
    a = aggregate_admissions(_table(records), 0, 41)
    b = aggregate_admissions(_table(shuffled), 0, 41)
    assert np.array_equal(a.counts, b.counts)
    assert a.total() == len(records)


@given(st.lists(record, max_size=30))
def test_episode_csv_round_trip(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("csv") / "episodes.csv"
    table = _table(records)
    table.write_csv(path, header_comment="meta")
    back = EpisodeTable.read_csv(path)
    assert list(back) == list(table)


def test_csv_rejects_unknown_column_and_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("youth_id,race,admit_month,admit_age,los_days,discharged,extra\n")
    with pytest.raises(ValidationError, match="unknown column"):
        EpisodeTable.read_csv(p)
    p.write_text("youth_id,race,admit_month,admit_age,los_days,discharged\n"
                 "a,B,2001-01,3,10,1\n"
                 "b,X,2001-01,3,10,1\n")
    with pytest.raises(ValidationError, match="line 3"):
        EpisodeTable.read_csv(p)
    p.write_text("youth_id,race,admit_month,admit_age,los_days,discharged\na,B,2001-01,3,0,1\n")
    with pytest.raises(ValidationError, match="los_days"):
        EpisodeTable.read_csv(p)


def test_count_tables_reject_negatives_and_window():
    with pytest.raises(ValidationError):
        CountTable(-np.ones((2, 18, 3)))
    t = CountTable(np.arange(2 * 18 * 4, dtype=float).reshape(2, 18, 4), start=10)
    w = t.window(8, 12)
    assert w.counts[..., :2].sum() == 0
    assert np.array_equal(w.counts[..., 2:], t.counts[..., :2])


def test_cohort_csv_round_trip(tmp_path):
    c = CohortTable(np.random.default_rng(0).random((2, 2, 18, 3)), start=5)
    c.write_csv(tmp_path / "c.csv", header_comment="h")
    back = CohortTable.read_csv(tmp_path / "c.csv")
    assert back.start == 5 and np.array_equal(back.counts, c.counts)


def test_days_to_months():
    assert days_to_months(30.44) == pytest.approx(1.0)
