import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracle import monte_carlo_in_care, random_instance

from fostersim.datamodel import CohortTable, CountTable, DemographicKey, Race, StayClass, ValidationError
from fostersim.estimate import ClassSplit, DeltaModel, DischargeFunction
from fostersim.simulate import (
    ConfigError,
    PipelineRates,
    births_by_duration,
    forecast_admissions,
    in_care,
    pipeline_counts,
    split_cohorts,
)

KEY = DemographicKey(Race.BLACK, 1)


def delta(mu, sigma, last, key=KEY):
    return DeltaModel(key, mu, sigma, -5.0, True, float(last))


def flat_discharge(value, key=KEY, top=40):
    surv = [1.0] + [value] * top
    return {
        (key, stay): DischargeFunction(key, stay, tuple(range(top + 1)), tuple(surv))
        for stay in StayClass
    }


# forecasts -----------------------------------------------------------------

def test_frozen_walk():
    out = forecast_admissions([delta(0, 0, 37)], 6, seed=1, start=204)
    assert out.months == range(204, 210)
    assert np.all(out.counts[KEY.race.index, KEY.admit_age] == 37)


def test_drifting_walk():
    out = forecast_admissions([delta(1, 0, 10)], 12, seed=1)
    assert out.get(KEY, 11) == 22


def test_walk_clamps_at_zero():
    out = forecast_admissions([delta(-5, 0, 1)], 3, seed=1)
    assert out.counts[KEY.race.index, KEY.admit_age].tolist() == [0, 0, 0]


def test_forecast_seeded_and_reproducible():
    models = [delta(0.2, 4, 100), delta(-0.1, 6, 80, DemographicKey(Race.WHITE, 9))]
    a = forecast_admissions(models, 12, seed=5).counts
    b = forecast_admissions(models[::-1], 12, seed=5).counts
    c = forecast_admissions(models, 12, seed=6).counts
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_forecast_errors():
    with pytest.raises(ConfigError, match="horizon"):
        forecast_admissions([delta(0, 1, 5)], 0, seed=0)
    with pytest.raises(ConfigError, match="duplicate"):
        forecast_admissions([delta(0, 1, 5), delta(0, 1, 5)], 3, seed=0)


# cohort split ----------------------------------------------------------------

def _counts(value, months=1):
    t = CountTable.zeros(0, months)
    t.counts[KEY.race.index, KEY.admit_age] = value
    return t


@pytest.mark.parametrize("n,p,expected", [(10, 0.7, (7, 3)), (10, 1.0, (10, 0)), (0, 0.4, (0, 0))])
def test_split_cohorts(n, p, expected):
    ledger = split_cohorts(_counts(n), [ClassSplit(KEY, p)])
    got = (ledger.get(StayClass.LONG, KEY.race, 1, 0), ledger.get(StayClass.SHORT, KEY.race, 1, 0))
    assert got == pytest.approx(expected)


def test_split_requires_every_key():
    with pytest.raises(ConfigError, match="split"):
        split_cohorts(_counts(4), [])


# in care -----------------------------------------------------------------------

def test_instant_discharge_empties_care():
    ledger = CohortTable.zeros(0, 12)
    ledger.counts[:, KEY.race.index, KEY.admit_age] = 40
    assert in_care(ledger, flat_discharge(0.0), range(12)).counts.sum() == 0


def test_hand_traced_walk():
    ledger = CohortTable.zeros(0, 3)
    ledger.counts[StayClass.LONG.index, KEY.race.index, 1] = 5
    out = in_care(ledger, flat_discharge(1.0), range(3))
    assert out.get(StayClass.LONG, Race.BLACK, 1, 2) == 15
    assert out.counts[..., 2].sum() == 15


def test_age_advances_at_six_then_every_twelve_months():
    assert births_by_duration(np.arange(1, 32)).tolist() == [0] * 5 + [1] * 12 + [2] * 12 + [3] * 2
    ledger = CohortTable.zeros(0, 1)
    ledger.counts[StayClass.LONG.index, KEY.race.index, 1] = 1
    out = in_care(ledger, flat_discharge(1.0), range(20))
    ages = [int(np.nonzero(out.counts[0, 0, :, t])[0][0]) for t in range(20)]
    assert ages == [1] * 5 + [2] * 12 + [3] * 3


def test_discharge_keyed_by_admitted_age():
    old = DemographicKey(Race.BLACK, 2)
    discharge = {**flat_discharge(1.0, KEY), **flat_discharge(0.0, old)}
    ledger = CohortTable.zeros(0, 1)
    ledger.counts[StayClass.LONG.index, KEY.race.index, 1] = 10
    out = in_care(ledger, discharge, range(8))
    # the cohort turns 2 after six months but keeps its admitted-age survival
    assert out.get(StayClass.LONG, Race.BLACK, 2, 7) == 10


def test_youth_past_seventeen_leave_the_series():
    key = DemographicKey(Race.WHITE, 17)
    ledger = CohortTable.zeros(0, 1)
    ledger.counts[StayClass.LONG.index, key.race.index, 17] = 3
    out = in_care(ledger, flat_discharge(1.0, key), range(10))
    assert out.counts[..., :5].sum() == 15 and out.counts[..., 5:].sum() == 0


def test_month_zero_counts_only_first_cohort():
    ledger = CohortTable.zeros(0, 4)
    ledger.counts[StayClass.SHORT.index, KEY.race.index, 1] = [8, 9, 10, 11]
    surv = (1.0, 0.25, 0.0)
    discharge = {(KEY, s): DischargeFunction(KEY, s, (0, 1, 2), surv) for s in StayClass}
    out = in_care(ledger, discharge, [0])
    assert out.counts.sum() == pytest.approx(8 * 0.25)


def test_missing_discharge_function():
    ledger = CohortTable.zeros(0, 2)
    ledger.counts[StayClass.LONG.index, KEY.race.index, 1] = 1
    with pytest.raises(ConfigError, match="discharge"):
        in_care(ledger, {}, range(2))


def test_in_care_matches_per_youth_monte_carlo():
    ledger, discharge, months = random_instance(np.random.default_rng(99))
    expected = in_care(ledger, discharge, months).counts
    simulated = monte_carlo_in_care(ledger, discharge, months, seed=1).counts
    big = expected >= 10
    assert big.any()
    assert np.max(np.abs(simulated[big] - expected[big]) / expected[big]) < 0.01


def _cell_by_cell(ledger, discharge, months):
    """Sequential reference: one walk per (class, race, age, month) cell."""
    out = CohortTable.zeros(months[0], len(months))
    for c in StayClass:
        for r in Race:
            for a in range(18):
                for i, t in enumerate(months):
                    total, age, d = 0.0, a, 1
                    while age >= 0 and t - d + 1 >= ledger.start:
                        if d >= 6 and (d - 6) % 12 == 0:
                            age -= 1
                            if age < 0:
                                break
                        fn = discharge.get((DemographicKey(r, age), c))
                        n = ledger.get(c, r, age, t - d + 1)
                        if n:
                            total += n * fn(d)
                        d += 1
                    out.counts[c.index, r.index, a, i] = total
    return out


def test_vectorised_walk_equals_cell_by_cell_walk():
    ledger, discharge, months = random_instance(np.random.default_rng(5))
    months = list(months)
    a = in_care(ledger, discharge, months).counts
    b = _cell_by_cell(ledger, discharge, months).counts
    assert np.array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 3.0))
def test_in_care_monotone_in_ledger(seed, factor):
    rng = np.random.default_rng(seed)
    ledger, discharge, months = random_instance(rng)
    bigger = CohortTable(ledger.counts * factor + rng.random(ledger.counts.shape) * (ledger.counts > 0), 0)
    small = in_care(ledger, discharge, months).counts
    large = in_care(bigger, discharge, months).counts
    assert np.all(large >= small)


def test_in_care_deterministic():
    ledger, discharge, months = random_instance(np.random.default_rng(3))
    assert np.array_equal(in_care(ledger, discharge, months).counts, in_care(ledger, discharge, months).counts)


def test_in_care_months_must_be_consecutive():
    with pytest.raises(ValidationError):
        in_care(CohortTable.zeros(0, 3), {}, [0, 2])


# pipeline ------------------------------------------------------------------------

def test_default_rates():
    rates = PipelineRates.default()
    for race in Race:
        assert rates.screen_in(StayClass.LONG, race) == 0.70
        assert rates.substantiate(StayClass.LONG, race) == 0.70
        assert rates.substantiate(StayClass.SHORT, race) == 0.10
    assert rates.screen_in(StayClass.SHORT, Race.WHITE) == 0.10
    assert rates.screen_in(StayClass.SHORT, Race.BLACK) == 0.10
    assert PipelineRates.default(0.06).screen_in(StayClass.SHORT, Race.BLACK) == 0.06


def test_pipeline_examples():
    admitted = CohortTable.zeros(0, 1)
    admitted.counts[StayClass.LONG.index, 0, 3, 0] = 49
    screened, reported = pipeline_counts(admitted, PipelineRates.default())
    assert screened.counts.max() == pytest.approx(70)
    assert reported.counts.max() == pytest.approx(100)
    same, also = pipeline_counts(admitted, PipelineRates.uniform(1.0))
    assert np.array_equal(same.counts, admitted.counts) and np.array_equal(also.counts, admitted.counts)
    zeros = pipeline_counts(CohortTable.zeros(0, 2), PipelineRates.default())
    assert all(z.counts.sum() == 0 for z in zeros)


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.integers(0, 2**32 - 1))
def test_pipeline_round_trip_and_ordering(scr, sub, seed):
    rates = PipelineRates(scr=((scr, 0.7), (0.1, scr)), sub=((sub, 0.7), (0.1, sub)))
    admitted = CohortTable(np.random.default_rng(seed).random((2, 2, 18, 3)) * 100)
    screened, reported = pipeline_counts(admitted, rates)
    back = reported.counts * rates.scr_array[:, :, None, None] * rates.sub_array[:, :, None, None]
    assert np.allclose(back, admitted.counts, rtol=1e-9, atol=0)
    assert np.all(reported.counts >= screened.counts) and np.all(screened.counts >= admitted.counts)


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.5, float("nan")])
def test_rates_rejected(bad):
    with pytest.raises(ConfigError):
        PipelineRates.uniform(bad)


def test_rates_json_round_trip():
    rates = PipelineRates.default(0.08)
    assert PipelineRates.from_json(rates.to_json()) == rates
    with pytest.raises(ConfigError, match="rates"):
        PipelineRates.from_json({"scr": {}})
