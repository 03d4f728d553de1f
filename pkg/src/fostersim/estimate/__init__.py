"""Estimators for entry deltas, stay-length mixtures, class splits and discharge curves."""

from .bundle import FittedBundle, fit_bundle
from .discharge import DischargeFunction, fit_discharge
from .mixture import ClassSplit, StayMixtureModel, assign_long, fit_los_mixture, split_proportions
from .stationarity import DeltaModel, df_test, fit_entry_delta

__all__ = [
    "ClassSplit", "DeltaModel", "DischargeFunction", "FittedBundle", "StayMixtureModel",
    "assign_long", "df_test", "fit_bundle", "fit_discharge", "fit_entry_delta",
    "fit_los_mixture", "split_proportions",
]
