import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fostersim.datamodel import (
    CohortTable,
    DemographicKey,
    EpisodeRecord,
    EpisodeTable,
    Race,
    StayClass,
    ValidationError,
)
from fostersim.estimate import fit_discharge
from fostersim.intervene import ScenarioConfig, run_scenario
from fostersim.metrics import ValidationReport, disparity, observed_in_care, pearson
from fostersim.simulate import in_care

series = arrays(float, st.integers(3, 40), elements=st.floats(-1e3, 1e3))


def test_pearson_self_and_antisymmetry():
    x = np.array([1.0, 4.0, 2.0, 8.0, 5.0])
    assert pearson(x, x).r == pytest.approx(1.0)
    assert pearson(x, -x).r == pytest.approx(-1.0)
    assert math.isinf(pearson(x, x).t_stat)


def test_pearson_t_statistic():
    x = np.arange(10.0)
    y = np.array([1, 3, 2, 5, 4, 6, 8, 7, 9, 12.0])
    c = pearson(x, y)
    assert c.r == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)
    assert c.t_stat == pytest.approx(c.r * math.sqrt(8 / (1 - c.r ** 2)))
    assert c.n == 10


@given(series, st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_invariant(x, a, b):
    y = np.sin(np.arange(x.size)) * 10 + x
    assume(np.ptp(x) > 1e-3 and np.ptp(y) > 1e-3)
    try:
        base = pearson(x, y).r
    except ValidationError:
        return
    assert pearson(a * x + b, y).r == pytest.approx(base, abs=1e-12)
    assert pearson(x, a * y + b).r == pytest.approx(base, abs=1e-12)
    assert abs(base) <= 1.0


@pytest.mark.parametrize("x,y", [([1, 2, 3], [1, 2]), ([1, 2], [1, 2]), ([1, 1, 1], [1, 2, 3])])
def test_pearson_errors(x, y):
    with pytest.raises(ValidationError):
        pearson(x, y)


def test_disparity():
    assert disparity([5, 6], [3, 4]).tolist() == [2, 2]
    with pytest.raises(ValidationError):
        disparity([1, 2], [1])


@given(arrays(float, st.integers(0, 30), elements=st.floats(-1e6, 1e6)))
def test_disparity_of_equal_series_is_zero(x):
    assert np.all(disparity(x, x) == 0)


def test_baseline_disparity_is_positive(ny_bundle):
    result = run_scenario(ScenarioConfig(seed=0), ny_bundle)
    total = result.in_care_totals().sum(axis=0)
    assert np.all(disparity(total[0], total[1]) > 0)


def _episodes(rows):
    return EpisodeTable.from_records(EpisodeRecord(f"y{i}", *r) for i, r in enumerate(rows))


def test_observed_in_care_hand_trace():
    table = _episodes([
        (Race.BLACK, 0, 1, 100, True),    # 3.3 months: in care at d = 1, 2, 3
        (Race.WHITE, 2, 17, 40, False),   # open; turns 18 at d = 6
    ])
    out = observed_in_care(table, range(0, 10))
    b = out.counts[0].sum(axis=0).tolist()
    w = out.counts[1].sum(axis=0).tolist()
    assert b == [1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
    assert w == [0, 0, 1, 1, 1, 1, 1, 0, 0, 0]


def test_observed_matches_expected_for_a_single_cohort():
    key = DemographicKey(Race.WHITE, 6)
    rng = np.random.default_rng(0)
    los = np.maximum(1, rng.exponential(200, 400).astype(int))
    table = _episodes([(Race.WHITE, 3, 6, int(d), True) for d in los])
    fn = fit_discharge(table.los_months, key, StayClass.LONG)
    ledger = CohortTable.zeros(3, 1)
    ledger.counts[StayClass.LONG.index, 1, 6, 0] = len(los)
    expected = in_care(ledger, {(key, StayClass.LONG): fn}, range(3, 60)).counts.sum(axis=(0, 1))
    observed = observed_in_care(table, range(3, 60)).counts.sum(axis=0)
    assert np.allclose(expected, observed)


def test_validation_report(tmp_path):
    sim = np.array([[10.0, 11, 12, 14], [5, 5.5, 6, 6]])
    act = np.array([[10.0, 11.5, 12, 13], [5, 5, 6, 7]])
    report = ValidationReport.build([204, 205, 206, 207], sim, act)
    assert report.correlations["B"].r == pytest.approx(np.corrcoef(sim[0], act[0])[0, 1])
    assert report.proportion_black()[0] == pytest.approx(10 / 15)
    report.dump(tmp_path / "v.json")
    doc = json.loads((tmp_path / "v.json").read_text())
    assert doc["format_version"] == 1 and doc["months"][0] == "2017-11"
    assert set(doc["correlations"]["W"]) == {"pearson_r", "n", "t_stat"}
