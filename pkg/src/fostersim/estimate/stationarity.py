"""Entry-rate deltas and the lag-0 Dickey-Fuller check."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..datamodel import DemographicKey, Race, ValidationError

DF_CRITICAL_5PCT = -2.86
DF_MIN_LENGTH = 25
MIN_MONTHS = 24


@dataclass(frozen=True)
class DeltaModel:
    key: DemographicKey
    mu: float
    sigma: float
    df_stat: float
    stationary: bool
    last_observed: float

    def to_json(self) -> dict:
        return {
            "race": self.key.race.value, "age": self.key.admit_age, "mu": self.mu,
            "sigma": self.sigma, "df_stat": _finite_or_str(self.df_stat),
            "stationary": self.stationary, "last_observed": self.last_observed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DeltaModel":
        return cls(
            DemographicKey(Race(doc["race"]), int(doc["age"])), float(doc["mu"]), float(doc["sigma"]),
            float(doc["df_stat"]), bool(doc["stationary"]), float(doc["last_observed"]),
        )


def _finite_or_str(v: float):
    return v if math.isfinite(v) else str(v)


def df_test(series) -> tuple[float, bool]:
    """Regress Δx_t on a constant and x_{t-1}; return (t-ratio of the slope, stationary).

    A constant series has no defined regression and is reported stationary
    with a statistic of -inf.
    """
    x = np.asarray(series, dtype=float)
    if x.size < DF_MIN_LENGTH:
        raise ValidationError(f"Dickey-Fuller test needs >= {DF_MIN_LENGTH} observations, got {x.size}")
    if np.ptp(x) == 0:
        return -math.inf, True
    dx = np.diff(x)
    lag = x[:-1]
    design = np.column_stack([np.ones_like(lag), lag])
    coef, _, rank, _ = np.linalg.lstsq(design, dx, rcond=None)
    resid = dx - design @ coef
    dof = dx.size - 2
    s2 = resid @ resid / dof
    if rank < 2:
        return -math.inf, True
    cov = s2 * np.linalg.inv(design.T @ design)
    if cov[1, 1] <= 0:
        return -math.inf, True
    stat = float(coef[1] / math.sqrt(cov[1, 1]))
    return stat, stat < DF_CRITICAL_5PCT


def fit_entry_delta(series: dict[int, float], key: DemographicKey) -> DeltaModel:
    """Fit a normal to month-over-month admission changes for one key."""
    if len(series) < MIN_MONTHS:
        raise ValidationError(f"{key}: need >= {MIN_MONTHS} months of admissions, got {len(series)}")
    months = sorted(series)
    if months[-1] - months[0] + 1 != len(months):
        raise ValidationError(f"{key}: admission series has gaps between {months[0]} and {months[-1]}")
    counts = np.array([series[m] for m in months], dtype=float)
    deltas = np.diff(counts)
    mu = float(deltas.mean())
    sigma = float(deltas.std(ddof=1))
    if deltas.size >= DF_MIN_LENGTH:
        stat, stationary = df_test(deltas)
    else:
        stat, stationary = math.nan, False
    if not stationary:
        warnings.warn(f"{key}: admission differences fail the stationarity check (DF={stat:.2f})", stacklevel=2)
    return DeltaModel(key, mu, sigma, stat, stationary, float(counts[-1]))
