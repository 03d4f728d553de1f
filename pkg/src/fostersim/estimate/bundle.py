"""Fit every model object for all (race, age) keys and (de)serialise the result."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from ..datamodel import (
    CLASSES,
    CountTable,
    DemographicKey,
    EpisodeTable,
    Race,
    StayClass,
    ValidationError,
    aggregate_admissions,
    all_keys,
    days_to_months,
)
from .discharge import DischargeFunction, fit_discharge
from .mixture import ClassSplit, StayMixtureModel, assign_long, fit_los_mixture
from .stationarity import DeltaModel, fit_entry_delta

FORMAT_VERSION = 1
# Stays from the most recent admission cohorts are mostly still open at the end
# of the history, and dropping only the open ones leaves the short stays behind.
DEFAULT_LOS_MATURITY = 72


@dataclass
class FittedBundle:
    history_start: int
    history_end: int  # exclusive
    admissions: CountTable
    delta_models: dict[DemographicKey, DeltaModel]
    mixtures: dict[DemographicKey, StayMixtureModel]
    splits: dict[DemographicKey, ClassSplit]
    discharge: dict[tuple[DemographicKey, StayClass], DischargeFunction]

    @property
    def keys(self) -> list[DemographicKey]:
        return sorted(self.delta_models)

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "history_start": self.history_start,
            "history_end": self.history_end,
            "admissions": {
                "start": self.admissions.start,
                "counts": self.admissions.counts.tolist(),
            },
            "delta_models": [self.delta_models[k].to_json() for k in sorted(self.delta_models)],
            "mixtures": [self.mixtures[k].to_json() for k in sorted(self.mixtures)],
            "splits": [self.splits[k].to_json() for k in sorted(self.splits)],
            "discharge": [self.discharge[k].to_json() for k in sorted(self.discharge)],
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json(cls, doc: dict) -> "FittedBundle":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValidationError(f"fitted bundle: unsupported format_version {doc.get('format_version')!r}")

        def key_of(d):
            return DemographicKey(Race(d["race"]), int(d["age"]))

        mixtures = {}
        for d in doc["mixtures"]:
            mixtures[key_of(d)] = StayMixtureModel(
                key_of(d), int(d["k"]), tuple(d["weights"]), tuple(d["means"]), tuple(d["variances"]),
                float(d["aic"]), float(d["log_likelihood"]), int(d.get("n", 0)),
            )
        discharge = {}
        for d in doc["discharge"]:
            f = DischargeFunction.from_json(d)
            discharge[(f.key, f.stay)] = f
        return cls(
            int(doc["history_start"]),
            int(doc["history_end"]),
            CountTable(np.array(doc["admissions"]["counts"], dtype=float), int(doc["admissions"]["start"])),
            {key_of(d): DeltaModel.from_json(d) for d in doc["delta_models"]},
            mixtures,
            {key_of(d): ClassSplit(key_of(d), float(d["p_long"])) for d in doc["splits"]},
            discharge,
        )

    @classmethod
    def load(cls, path) -> "FittedBundle":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        try:
            return cls.from_json(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed fitted bundle ({exc})") from None


def fit_bundle(
    episodes: EpisodeTable,
    history_start: int = 0,
    history_end: int | None = None,
    keys: list[DemographicKey] | None = None,
    seed: int = 0,
    los_maturity_months: int = DEFAULT_LOS_MATURITY,
) -> FittedBundle:
    """Fit all models on episodes admitted in ``[history_start, history_end)``.

    Censored episodes count toward admissions but are left out of the
    stay-length and discharge fits, which also skip cohorts admitted in the
    final ``los_maturity_months`` of the history.
    """
    if len(episodes) == 0:
        raise ValidationError("cannot fit models from an empty episode table")
    if history_end is None:
        history_end = int(episodes.admit_month.max()) + 1
    window = episodes.subset((episodes.admit_month >= history_start) & (episodes.admit_month < history_end))
    admissions = aggregate_admissions(window, history_start, history_end)
    if keys is None:
        present = {(int(r), int(a)) for r, a in zip(window.race, window.admit_age)}
        keys = [k for k in all_keys() if (k.race.index, k.admit_age) in present]
    los_end = history_end - los_maturity_months
    if los_maturity_months < 0 or los_end <= history_start:
        raise ValidationError(
            f"los_maturity_months={los_maturity_months} leaves no admission cohorts in "
            f"[{history_start}, {history_end}) for stay-length fitting"
        )
    deltas, mixtures, splits, discharge = {}, {}, {}, {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for key in keys:
            deltas[key] = fit_entry_delta(admissions.series(key), key)
    for key in keys:
        rows = window.for_key(key)
        done = rows.subset(rows.discharged & (rows.admit_month < los_end))
        log_los = np.log(done.los_days.astype(float))
        mixture = fit_los_mixture(log_los, key, seed=seed)
        is_long = assign_long(mixture, log_los)
        mixtures[key] = mixture
        splits[key] = ClassSplit(key, float(is_long.mean()) if is_long.size else 0.0)
        months = days_to_months(done.los_days)
        for stay, mask in zip(CLASSES, (is_long, ~is_long)):
            discharge[(key, stay)] = fit_discharge(months[mask], key, stay)
    return FittedBundle(history_start, history_end, admissions, deltas, mixtures, splits, discharge)
