"""Synthetic episode tables drawn from known ground-truth parameters.

Admissions per (race, age) follow a clamped, rounded random walk; each admitted
youth is long-term with probability ``p_long`` and stays ``exp(Normal)`` days.
Episodes still open at the end of the table are censored.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .datamodel import (
    MONTH_LENGTH_DAYS,
    RACES,
    CountTable,
    DemographicKey,
    EpisodeTable,
    Race,
    ValidationError,
    check_age,
)


@dataclass(frozen=True)
class KeyTruth:
    base: float
    mu: float
    sigma: float
    p_long: float
    mean_long: float
    sd_long: float
    mean_short: float
    sd_short: float

    def __post_init__(self):
        if not self.base > 0:
            raise ValidationError(f"base admissions must be > 0, got {self.base}")
        if self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.p_long <= 1.0:
            raise ValidationError(f"p_long must lie in [0, 1], got {self.p_long}")
        if self.sd_long <= 0 or self.sd_short <= 0:
            raise ValidationError("log-LOS standard deviations must be > 0")
        if not self.mean_long > self.mean_short:
            raise ValidationError("mean_long must exceed mean_short")

    @property
    def median_long_days(self) -> float:
        return math.exp(self.mean_long)

    @property
    def median_short_days(self) -> float:
        return math.exp(self.mean_short)


@dataclass
class GroundTruth:
    keys: dict[DemographicKey, KeyTruth]

    def __getitem__(self, key: DemographicKey) -> KeyTruth:
        return self.keys[key]

    def to_json(self) -> dict:
        return {
            "keys": [
                {"race": k.race.value, "age": k.admit_age, **asdict(v)}
                for k, v in sorted(self.keys.items())
            ]
        }

    @classmethod
    def from_json(cls, doc) -> "GroundTruth":
        """Accept ``"ny"`` for the built-in regime or an explicit key list.

        An explicit document may carry a ``defaults`` block merged under every
        key entry.
        """
        if doc == "ny" or doc is None:
            return ny_regime()
        if isinstance(doc, dict) and doc.get("preset") == "ny":
            return ny_regime(scale=float(doc.get("scale", 1.0)))
        defaults = doc.get("defaults", {})
        keys = {}
        for i, entry in enumerate(doc.get("keys", [])):
            merged = {**defaults, **entry}
            try:
                key = DemographicKey(Race(merged.pop("race")), check_age(merged.pop("age")))
                keys[key] = KeyTruth(**{f: float(merged[f]) for f in KeyTruth.__dataclass_fields__})
            except (KeyError, ValueError, TypeError) as exc:
                raise ValidationError(f"ground_truth.keys[{i}]: {exc}") from None
        if not keys:
            raise ValidationError("ground_truth.keys must not be empty")
        return cls(keys)


# Monthly admission-difference normals reported for NY (mean, sd), by race then age.
NY_DELTAS = {
    Race.BLACK: {1: (0.25, 7.1), 5: (0.15, 5.2), 9: (0.10, 3.8), 13: (0.09, 5.9)},
    Race.WHITE: {1: (-0.05, 6.0), 5: (0.01, 5.8), 9: (0.04, 4.1), 13: (0.025, 4.8)},
}
# Median stay lengths in days at admitted age 10: (short, long).
MEDIAN_STAYS = {Race.BLACK: (9.0, 804.0), Race.WHITE: (10.0, 680.0)}


def ny_regime(scale: float = 1.0, sd_long: float = 0.5, sd_short: float = 0.5) -> GroundTruth:
    """Ground truth shaped after the NY findings.

    Delta normals interpolate the four reported ages linearly (flat beyond
    them); short-stay share falls from 28% at age 0 to 12% at age 17, inside the
    reported 10-30% band; Black
    youth are admitted at higher base volumes than white youth.  ``scale``
    multiplies base volumes only.
    """
    keys = {}
    for race in RACES:
        anchors = sorted(NY_DELTAS[race].items())
        ages = [a for a, _ in anchors]
        short_med, long_med = MEDIAN_STAYS[race]
        for age in range(18):
            mu = float(np.interp(age, ages, [m for _, (m, _) in anchors]))
            sigma = float(np.interp(age, ages, [s for _, (_, s) in anchors]))
            p_short = 0.28 - 0.16 * age / 17
            base = (300.0 - 4.0 * age) if race is Race.BLACK else (220.0 - 3.0 * age)
            keys[DemographicKey(race, age)] = KeyTruth(
                base=base * scale,
                mu=mu,
                sigma=sigma,
                p_long=round(1.0 - p_short, 6),
                mean_long=math.log(long_med),
                sd_long=sd_long,
                mean_short=math.log(short_med),
                sd_short=sd_short,
            )
    return GroundTruth(keys)


def key_rng(seed: int, key: DemographicKey, stream: int = 0) -> np.random.Generator:
    """Independent generator for one key; identical regardless of call order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, key.race.index, key.admit_age]))


def admission_walk(truth: KeyTruth, months: int, rng: np.random.Generator) -> np.ndarray:
    counts = np.empty(months, dtype=np.int64)
    deltas = rng.normal(truth.mu, truth.sigma, size=months) if truth.sigma > 0 else np.full(months, truth.mu)
    n = float(max(0.0, np.rint(truth.base)))
    for t in range(months):
        counts[t] = n
        n = max(0.0, float(np.rint(n + deltas[t])))
    return counts


def _draw_key(kt: KeyTruth, key: DemographicKey, start: int, months: int, seed: int):
    rng = key_rng(seed, key)
    counts = admission_walk(kt, months, rng)
    total = int(counts.sum())
    admit = np.repeat(np.arange(start, start + months), counts)
    is_long = rng.random(total) < kt.p_long
    z = np.where(
        is_long,
        rng.normal(kt.mean_long, kt.sd_long, total),
        rng.normal(kt.mean_short, kt.sd_short, total),
    )
    los = np.maximum(1, np.rint(np.exp(z))).astype(np.int64)
    return counts, admit, is_long, los


def generate_labelled(truth: GroundTruth, start: int, months: int, seed: int):
    """Draw an episode table plus, per row, the true class (True = long) and the
    uncensored stay length in days."""
    if months < 0:
        raise ValidationError(f"months must be >= 0, got {months}")
    if start < 0:
        raise ValidationError(f"start month must be >= 0, got {start}")
    end = start + months
    parts, labels, true_los = [], [], []
    for key in sorted(truth.keys):
        counts, admit, is_long, los = _draw_key(truth.keys[key], key, start, months, seed)
        total = len(admit)
        if total == 0:
            continue
        available = (end - admit) * MONTH_LENGTH_DAYS
        censored = los > available
        observed = np.where(censored, np.maximum(1, np.floor(available)).astype(np.int64), los)
        within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        ids = [f"{key.race.value}{key.admit_age:02d}-{m:04d}-{i:05d}" for m, i in zip(admit.tolist(), within.tolist())]
        parts.append(EpisodeTable(ids, np.full(total, key.race.index), admit, np.full(total, key.admit_age), observed, ~censored))
        labels.append(is_long)
        true_los.append(los)
    if not parts:
        return EpisodeTable.empty(), np.zeros(0, bool), np.zeros(0, np.int64)
    return EpisodeTable.concat(parts), np.concatenate(labels), np.concatenate(true_los)


def generate_episodes(truth: GroundTruth, start: int, months: int, seed: int) -> EpisodeTable:
    """Draw an episode table covering admission months ``[start, start + months)``.

    Episodes whose stay runs past the table end are emitted with
    ``discharged=False`` and the days observed so far.
    """
    return generate_labelled(truth, start, months, seed)[0]


CONTINUATION_STREAM = 2


def generate_continuation(truth: GroundTruth, history: CountTable, months: int, seed: int):
    """Extend a drawn history by ``months`` admission months with fresh noise.

    Each key's walk resumes from its final history count; the draws use a
    stream disjoint from both the history and the forecasts.  Returns the
    episodes with their uncensored stays (all marked discharged) and the
    true class labels.
    """
    if months < 1:
        raise ValidationError(f"months must be >= 1, got {months}")
    start = history.months.stop
    parts, labels = [], []
    for key in sorted(truth.keys):
        kt = truth.keys[key]
        rng = key_rng(seed, key, CONTINUATION_STREAM)
        deltas = rng.normal(kt.mu, kt.sigma, months) if kt.sigma > 0 else np.full(months, kt.mu)
        n = history.get(key, start - 1)
        counts = np.empty(months, dtype=np.int64)
        for t in range(months):
            n = max(0.0, float(np.rint(n + deltas[t])))
            counts[t] = n
        total = int(counts.sum())
        if total == 0:
            continue
        admit = np.repeat(np.arange(start, start + months), counts)
        is_long = rng.random(total) < kt.p_long
        z = np.where(is_long, rng.normal(kt.mean_long, kt.sd_long, total), rng.normal(kt.mean_short, kt.sd_short, total))
        los = np.maximum(1, np.rint(np.exp(z))).astype(np.int64)
        within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        ids = [f"{key.race.value}{key.admit_age:02d}-{m:04d}-{i:05d}" for m, i in zip(admit.tolist(), within.tolist())]
        parts.append(EpisodeTable(ids, np.full(total, key.race.index), admit, np.full(total, key.admit_age), los, np.ones(total, bool)))
        labels.append(is_long)
    if not parts:
        return EpisodeTable.empty(), np.zeros(0, bool)
    return EpisodeTable.concat(parts), np.concatenate(labels)
