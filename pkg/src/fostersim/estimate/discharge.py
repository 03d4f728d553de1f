"""Empirical survival curves over whole-month knots, linearly interpolated."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..datamodel import DemographicKey, StayClass, ValidationError

MIN_SAMPLES = 20


@dataclass(frozen=True)
class DischargeFunction:
    """Probability that a youth is still in care ``d`` months after admission."""

    key: DemographicKey
    stay: StayClass
    durations: tuple[float, ...]
    survival: tuple[float, ...]

    def __post_init__(self):
        d = np.asarray(self.durations, dtype=float)
        s = np.asarray(self.survival, dtype=float)
        if d.size == 0 or d.size != s.size:
            raise ValidationError("discharge knots must be non-empty and paired")
        if d[0] != 0 or s[0] != 1.0:
            raise ValidationError("discharge function must start at (0, 1)")
        if np.any(np.diff(d) <= 0):
            raise ValidationError("knot durations must be strictly increasing")
        if np.any(np.diff(s) > 0) or s.min() < 0 or s.max() > 1:
            raise ValidationError("survival must be non-increasing within [0, 1]")

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        out = np.interp(d, self.durations, self.survival, right=0.0)
        out = np.where(d < 0, 1.0, out)
        return out if out.ndim else float(out)

    def median(self) -> float:
        """Smallest duration at which the interpolated curve reaches 0.5."""
        s = np.asarray(self.survival)
        d = np.asarray(self.durations)
        i = int(np.argmax(s <= 0.5))
        if i == 0:
            return 0.0
        s0, s1 = s[i - 1], s[i]
        return float(d[i - 1] + (s0 - 0.5) / (s0 - s1) * (d[i] - d[i - 1]))

    def inverse(self, u):
        """Duration at which survival equals ``u`` (vectorised, u in (0, 1])."""
        s = np.asarray(self.survival)[::-1]
        d = np.asarray(self.durations)[::-1]
        return np.interp(u, s, d)

    def to_json(self) -> dict:
        return {
            "race": self.key.race.value, "age": self.key.admit_age, "class": self.stay.value,
            "knots": [[d, s] for d, s in zip(self.durations, self.survival)],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DischargeFunction":
        from ..datamodel import Race
        knots = doc["knots"]
        return cls(
            DemographicKey(Race(doc["race"]), int(doc["age"])), StayClass(doc["class"]),
            tuple(float(k[0]) for k in knots), tuple(float(k[1]) for k in knots),
        )


def fit_discharge(los_months, key: DemographicKey, stay: StayClass) -> DischargeFunction:
    sample = np.sort(np.asarray(los_months, dtype=float))
    if sample.size < MIN_SAMPLES:
        raise ValidationError(
            f"{key}/{stay.value}: need >= {MIN_SAMPLES} uncensored stays for a discharge function, got {sample.size}"
        )
    if (sample < 0).any():
        raise ValidationError(f"{key}/{stay.value}: negative length of stay")
    top = max(1, math.ceil(sample[-1]))
    knots = np.arange(top + 1, dtype=float)
    above = sample.size - np.searchsorted(sample, knots, side="right")
    survival = above / sample.size
    survival[0] = 1.0
    return DischargeFunction(key, stay, tuple(knots.tolist()), tuple(survival.tolist()))
