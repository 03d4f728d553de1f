"""Admission forecasts, cohort splitting, in-care accumulation and pipeline back-computation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import (
    AGES,
    CLASSES,
    N_AGES,
    RACES,
    CohortTable,
    CountTable,
    DemographicKey,
    Race,
    StayClass,
    ValidationError,
)
from .estimate import ClassSplit, DeltaModel, DischargeFunction
from .synth import key_rng

FORECAST_STREAM = 1


class ConfigError(ValidationError):
    """Invalid simulation configuration."""


def forecast_admissions(models: list[DeltaModel], horizon_months: int, seed: int, start: int = 0) -> CountTable:
    """Random-walk admissions for months ``[start, start + horizon_months)``.

    Each key's walk starts from its last observed count and is clamped at
    zero; counts stay real-valued.
    """
    if horizon_months < 1:
        raise ConfigError(f"horizon must be >= 1 month, got {horizon_months}")
    table = CountTable.zeros(start, horizon_months)
    seen = set()
    for model in models:
        key = model.key
        if key in seen:
            raise ConfigError(f"duplicate delta model for {key}")
        seen.add(key)
        rng = key_rng(seed, key, FORECAST_STREAM)
        steps = rng.normal(model.mu, model.sigma, horizon_months) if model.sigma > 0 else np.full(horizon_months, model.mu)
        n = model.last_observed
        row = table.counts[key.race.index, key.admit_age]
        for i, step in enumerate(steps):
            n = max(0.0, n + step)
            row[i] = n
    return table


def split_cohorts(admissions: CountTable, splits: dict[DemographicKey, ClassSplit] | list[ClassSplit]) -> CohortTable:
    """Divide admissions into long/short cohorts by each key's long-stay share."""
    if not isinstance(splits, dict):
        splits = {s.key: s for s in splits}
    ledger = CohortTable.zeros(admissions.start, admissions.counts.shape[2])
    for race in RACES:
        for age in AGES:
            row = admissions.counts[race.index, age]
            key = DemographicKey(race, age)
            if key not in splits:
                if row.any():
                    raise ConfigError(f"no long/short split for {key}")
                continue
            p = splits[key].p_long
            ledger.counts[StayClass.LONG.index, race.index, age] = p * row
            ledger.counts[StayClass.SHORT.index, race.index, age] = (1.0 - p) * row
    return ledger


def births_by_duration(durations: np.ndarray) -> np.ndarray:
    """Birthdays passed after ``d`` months in care: one at 6 months, then yearly."""
    d = np.asarray(durations)
    return np.where(d >= 6, (d - 6) // 12 + 1, 0)


def _survival_grid(discharge, ledger: CohortTable, max_d: int) -> np.ndarray:
    """Survival values indexed [class, race, admit_age, d] for d = 0..max_d."""
    grid = np.zeros((len(CLASSES), len(RACES), N_AGES, max_d + 1))
    d = np.arange(max_d + 1, dtype=float)
    for stay in CLASSES:
        for race in RACES:
            for age in AGES:
                fn = discharge.get((DemographicKey(race, age), stay))
                if fn is None:
                    if ledger.counts[stay.index, race.index, age].any():
                        raise ConfigError(f"no discharge function for {race.value}{age}/{stay.value}")
                    continue
                grid[stay.index, race.index, age] = fn(d)
    return grid


def in_care(
    ledger: CohortTable,
    discharge: dict[tuple[DemographicKey, StayClass], DischargeFunction] | list[DischargeFunction],
    months,
) -> CohortTable:
    """Youth remaining in care per (class, race, current age, month).

    For a query (age a, month t) the walk visits admission months t, t-1, ...
    at durations d = 1, 2, ...; the admitted age drops by one at d = 6, 18,
    30, ...  Each visited cohort contributes its size times the survival of
    its (race, admitted age, class) at duration d.  Cohorts before the ledger
    start, or admitted younger than 0, are not reached.
    """
    if not isinstance(discharge, dict):
        discharge = {(f.key, f.stay): f for f in discharge}
    months = list(months)
    if not months:
        return CohortTable.zeros(0, 0)
    first, last = min(months), max(months)
    if months != list(range(first, last + 1)):
        raise ValidationError("in_care months must be consecutive")
    lo = max(ledger.start, 0)
    max_d = last - lo + 1
    out = CohortTable.zeros(first, last - first + 1)
    if max_d < 1:
        return out
    surv = _survival_grid(discharge, ledger, max_d)
    t = np.arange(first, last + 1)
    for d in range(1, max_d + 1):
        shift = int(births_by_duration(d))
        if shift >= N_AGES:
            break
        admit = t - d + 1
        ok = admit >= lo
        if not ok.any():
            continue
        idx = admit[ok] - ledger.start
        inside = idx < ledger.counts.shape[3]
        cols = np.nonzero(ok)[0][inside]
        idx = idx[inside]
        if idx.size == 0:
            continue
        # current age a reads cohorts admitted at a - shift
        cohorts = ledger.counts[:, :, : N_AGES - shift][..., idx]
        weight = surv[:, :, : N_AGES - shift, d][..., None]
        out.counts[:, :, shift:, cols] += cohorts * weight
    return out


@dataclass(frozen=True)
class PipelineRates:
    """Screen-in and substantiation rates indexed [class, race]."""

    scr: tuple[tuple[float, float], tuple[float, float]]
    sub: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self):
        for name in ("scr", "sub"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (2, 2):
                raise ConfigError(f"rates.{name} must be indexed [class][race]")
            if not ((arr > 0) & (arr <= 1)).all():
                raise ConfigError(f"rates.{name} must lie in (0, 1], got {arr.tolist()}")

    @classmethod
    def default(cls, short_black_scr: float = 0.10) -> "PipelineRates":
        return cls(scr=((0.70, 0.70), (short_black_scr, 0.10)), sub=((0.70, 0.70), (0.10, 0.10)))

    @classmethod
    def uniform(cls, value: float) -> "PipelineRates":
        return cls(scr=((value, value), (value, value)), sub=((value, value), (value, value)))

    def screen_in(self, stay: StayClass, race: Race) -> float:
        return self.scr[stay.index][race.index]

    def substantiate(self, stay: StayClass, race: Race) -> float:
        return self.sub[stay.index][race.index]

    def with_short_black_scr(self, value: float) -> "PipelineRates":
        scr = ((self.scr[0][0], self.scr[0][1]), (value, self.scr[1][1]))
        return PipelineRates(scr=scr, sub=self.sub)

    @property
    def scr_array(self) -> np.ndarray:
        return np.asarray(self.scr, dtype=float)

    @property
    def sub_array(self) -> np.ndarray:
        return np.asarray(self.sub, dtype=float)

    def to_json(self) -> dict:
        return {
            name: {c.value: {r.value: getattr(self, name)[c.index][r.index] for r in RACES} for c in CLASSES}
            for name in ("scr", "sub")
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineRates":
        try:
            grids = {
                name: tuple(tuple(float(doc[name][c.value][r.value]) for r in RACES) for c in CLASSES)
                for name in ("scr", "sub")
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"rates: expected scr/sub blocks keyed by class then race ({exc})") from None
        return cls(**grids)


def pipeline_counts(admitted: CohortTable, rates: PipelineRates) -> tuple[CohortTable, CohortTable]:
    """Back out screened-in and reported counts from admissions.

    screened_in = admitted / sub and reported = admitted / (sub * scr), per
    (class, race).
    """
    sub = rates.sub_array[:, :, None, None]
    scr = rates.scr_array[:, :, None, None]
    screened = CohortTable(admitted.counts / sub, admitted.start)
    reported = CohortTable(admitted.counts / (sub * scr), admitted.start)
    return screened, reported
