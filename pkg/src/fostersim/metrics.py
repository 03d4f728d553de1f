"""Validation statistics: Pearson correlation, disparity series and observed in-care counts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .datamodel import (
    MONTH_LENGTH_DAYS,
    N_AGES,
    RACES,
    CountTable,
    EpisodeTable,
    ValidationError,
    format_month,
)
from .simulate import births_by_duration

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Correlation:
    r: float
    n: int
    t_stat: float

    def to_json(self) -> dict:
        t = self.t_stat if math.isfinite(self.t_stat) else str(self.t_stat)
        return {"pearson_r": self.r, "n": self.n, "t_stat": t}


def pearson(x, y) -> Correlation:
    """Sample Pearson correlation with t = r * sqrt((n - 2) / (1 - r^2))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"pearson: series must be 1-D and equal length, got {x.shape} and {y.shape}")
    n = x.size
    if n < 3:
        raise ValidationError(f"pearson: need at least 3 points, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValidationError("pearson: series has zero variance")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    t = math.copysign(math.inf, r) if abs(r) == 1.0 else r * math.sqrt((n - 2) / (1.0 - r * r))
    return Correlation(r, n, t)


def disparity(black, white) -> np.ndarray:
    """Elementwise Black minus white."""
    b = np.asarray(black, dtype=float)
    w = np.asarray(white, dtype=float)
    if b.shape != w.shape:
        raise ValidationError(f"disparity: length mismatch {b.shape} vs {w.shape}")
    return b - w


def observed_in_care(episodes: EpisodeTable, months, los_days=None) -> CountTable:
    """Count episodes in care per (race, current age, month).

    An episode admitted in month t' is in care at month t when its stay in
    months exceeds d = t - t' + 1, matching the discharge-function
    convention; open episodes count as in care.  Current age advances on the
    same birthday schedule as the cohort walk and youth past 17 are dropped.
    ``los_days`` overrides the recorded stays (e.g. with uncensored truth).
    """
    months = list(months)
    if not months:
        return CountTable.zeros(0, 0)
    first, last = min(months), max(months)
    out = CountTable.zeros(first, last - first + 1)
    if len(episodes) == 0:
        return out
    days = episodes.los_days if los_days is None else np.asarray(los_days)
    stay = days / MONTH_LENGTH_DAYS
    open_ = ~episodes.discharged if los_days is None else np.zeros(len(episodes), bool)
    for i, t in enumerate(range(first, last + 1)):
        d = t - episodes.admit_month + 1
        age = episodes.admit_age + births_by_duration(np.maximum(d, 0))
        here = (d >= 1) & ((stay > d) | open_) & (age < N_AGES)
        np.add.at(out.counts[:, :, i], (episodes.race[here], age[here]), 1.0)
    return out


@dataclass
class ValidationReport:
    """Forecast-versus-actual comparison per race."""

    months: list[int]
    simulated: dict[str, list[float]]
    actual: dict[str, list[float]]
    correlations: dict[str, Correlation] = field(default_factory=dict)

    @classmethod
    def build(cls, months, simulated: np.ndarray, actual: np.ndarray) -> "ValidationReport":
        """``simulated`` and ``actual`` are (race, month) total arrays."""
        sim = {r.value: [float(v) for v in simulated[r.index]] for r in RACES}
        act = {r.value: [float(v) for v in actual[r.index]] for r in RACES}
        corr = {r.value: pearson(simulated[r.index], actual[r.index]) for r in RACES}
        return cls(list(months), sim, act, corr)

    def proportion_black(self, which: str = "simulated") -> list[float]:
        series = getattr(self, which)
        b, w = np.asarray(series["B"]), np.asarray(series["W"])
        total = b + w
        return [float(v) for v in np.divide(b, total, out=np.zeros_like(b), where=total > 0)]

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "months": [format_month(m) for m in self.months],
            "simulated": self.simulated,
            "actual": self.actual,
            "proportion_black": {"simulated": self.proportion_black("simulated"), "actual": self.proportion_black("actual")},
            "correlations": {k: v.to_json() for k, v in self.correlations.items()},
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")
