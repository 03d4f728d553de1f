"""Algorithmic screen-in intervention.

Synthetic 2-D profiles stand in for case features.  A logistic regression is
trained to separate admitted youth from reported-but-not-admitted youth, then
given full control over screen-in during the forecast horizon.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .datamodel import (
    CLASSES,
    RACES,
    CohortTable,
    Race,
    StayClass,
    ValidationError,
    format_month,
)
from .estimate import FittedBundle
from .metrics import disparity
from .simulate import ConfigError, PipelineRates, forecast_admissions, in_care, pipeline_counts, split_cohorts

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TRAINING_STREAM = 2
DEPLOYMENT_STREAM = 3

# Long-stay profile means; short-stay profiles are standard normal at the origin.
SEPARABILITY = {"low": (1.0, 1.0), "moderate": (2.0, 2.0), "high": (10.0, 10.0)}
SHORT_BLACK_SCR_VALUES = (0.06, 0.08, 0.10)
MODES = ("baseline", "algorithm")


class TrainingError(ValueError):
    """The history cannot produce a usable training set or model."""


@dataclass(frozen=True)
class ProfileDistribution:
    stay: StayClass
    mean: tuple[float, float]
    covariance: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if np.asarray(self.mean).shape != (2,) or cov.shape != (2, 2):
            raise ConfigError("profile distribution needs a 2-vector mean and a 2x2 covariance")
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() <= 0:
            raise ConfigError(f"profile covariance must be symmetric positive definite, got {cov.tolist()}")

    @property
    def cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(np.asarray(self.covariance, dtype=float))


def profile_distributions(separability: str = "moderate") -> dict[StayClass, ProfileDistribution]:
    if separability not in SEPARABILITY:
        raise ConfigError(f"separability must be one of {sorted(SEPARABILITY)}, got {separability!r}")
    return {
        StayClass.LONG: ProfileDistribution(StayClass.LONG, SEPARABILITY[separability]),
        StayClass.SHORT: ProfileDistribution(StayClass.SHORT, (0.0, 0.0)),
    }


def sample_profiles(count: int, dist: ProfileDistribution, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. feature vectors, shape (count, 2)."""
    if count < 0:
        raise ValidationError(f"profile count must be >= 0, got {count}")
    z = rng.standard_normal((count, 2))
    return z @ dist.cholesky.T + np.asarray(dist.mean, dtype=float)


@dataclass(frozen=True)
class Profile:
    features: tuple[float, float]
    race: Race
    stay: StayClass
    admit_age: int
    month: int
    label: bool


@dataclass
class ProfileSet:
    """Columnar profiles; race and class codes follow their enum indices."""

    features: np.ndarray
    race: np.ndarray
    stay: np.ndarray
    age: np.ndarray
    month: np.ndarray
    label: np.ndarray

    def __len__(self) -> int:
        return len(self.label)

    def __iter__(self):
        for i in range(len(self)):
            yield Profile(
                (float(self.features[i, 0]), float(self.features[i, 1])),
                RACES[self.race[i]],
                CLASSES[self.stay[i]],
                int(self.age[i]),
                int(self.month[i]),
                bool(self.label[i]),
            )

    @classmethod
    def from_profiles(cls, profiles) -> "ProfileSet":
        profiles = list(profiles)
        return cls(
            np.array([p.features for p in profiles], dtype=float).reshape(-1, 2),
            np.array([p.race.index for p in profiles], dtype=np.int64),
            np.array([p.stay.index for p in profiles], dtype=np.int64),
            np.array([p.admit_age for p in profiles], dtype=np.int64),
            np.array([p.month for p in profiles], dtype=np.int64),
            np.array([p.label for p in profiles], dtype=bool),
        )


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def _expand(cells: np.ndarray, counts: np.ndarray, dists, label: bool, rng) -> ProfileSet:
    """Draw ``counts[i]`` profiles for each (class, race, age, month) cell."""
    n = int(counts.sum())
    stay = np.repeat(cells[:, 0], counts)
    features = np.empty((n, 2))
    for c in CLASSES:
        mask = stay == c.index
        features[mask] = sample_profiles(int(mask.sum()), dists[c], rng)
    return ProfileSet(
        features, np.repeat(cells[:, 1], counts), stay, np.repeat(cells[:, 2], counts),
        np.repeat(cells[:, 3], counts), np.full(n, label),
    )


@dataclass
class TrainingSet:
    profiles: ProfileSet
    n_positive: int
    n_negative_before: int


def build_training_set(
    history_admitted: CohortTable,
    rates: PipelineRates,
    dists: dict[StayClass, ProfileDistribution],
    rng: np.random.Generator,
) -> TrainingSet:
    """Admitted youth are positives; reported-but-not-admitted youth are negatives.

    Counts are rounded half away from zero.  Negatives are downsampled
    uniformly without replacement to match the positives; since features are
    drawn i.i.d. per class, only the sampled negatives are ever generated.
    """
    if history_admitted.counts.size == 0:
        raise TrainingError("training history is empty")
    _, reported = pipeline_counts(history_admitted, rates)
    pos = round_half_away(history_admitted.counts)
    neg = np.maximum(round_half_away(reported.counts) - pos, 0)
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0:
        raise TrainingError("training history contains no admitted youth")
    if n_neg < n_pos:
        raise TrainingError(
            f"only {n_neg} reported-but-not-admitted youth for {n_pos} admitted; cannot balance the training set"
        )
    flat_neg = neg.reshape(-1)
    kept = rng.multivariate_hypergeometric(flat_neg, n_pos, method="marginals").reshape(neg.shape)
    cells_pos = np.argwhere(pos > 0)
    cells_neg = np.argwhere(kept > 0)
    cells_pos[:, 3] += history_admitted.start
    positives = _expand(cells_pos, pos[pos > 0], dists, True, rng)
    negatives_cells = cells_neg.copy()
    negatives_cells[:, 3] += history_admitted.start
    negatives = _expand(negatives_cells, kept[kept > 0], dists, False, rng)
    merged = ProfileSet(*(np.concatenate([getattr(positives, f), getattr(negatives, f)]) for f in
                          ("features", "race", "stay", "age", "month", "label")))
    return TrainingSet(merged, n_pos, n_neg)


@numba.njit(cache=True)
def _loss_grad_kernel(w0, w1, b, x, y):
    n = x.shape[0]
    loss = 0.0
    g0 = g1 = gb = 0.0
    for i in range(n):
        z = x[i, 0] * w0 + x[i, 1] * w1 + b
        # log(1 + e^z) without overflow
        if z > 0:
            sp = z + math.log1p(math.exp(-z))
            p = 1.0 / (1.0 + math.exp(-z))
        else:
            e = math.exp(z)
            sp = math.log1p(e)
            p = e / (1.0 + e)
        loss += sp - y[i] * z
        r = p - y[i]
        g0 += r * x[i, 0]
        g1 += r * x[i, 1]
        gb += r
    return loss / n, g0 / n, g1 / n, gb / n


def loss_and_grad(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Mean cross-entropy of sigmoid(x @ w + b) and its gradient."""
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    loss, g0, g1, gb = _loss_grad_kernel(float(w[0]), float(w[1]), float(b), x, y)
    return loss, np.array([g0, g1]), gb


@dataclass(frozen=True)
class ScreenInModel:
    weights: tuple[float, float]
    bias: float
    threshold: float = field(default=0.5, init=False)

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (*self.weights, self.bias)):
            raise TrainingError("logistic regression produced non-finite parameters")

    def probability(self, features: np.ndarray) -> np.ndarray:
        z = np.asarray(features, dtype=float) @ np.asarray(self.weights) + self.bias
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.probability(features) >= self.threshold

    def to_json(self) -> dict:
        return {"weights": list(self.weights), "bias": self.bias, "threshold": self.threshold}


@dataclass
class TrainingLog:
    losses: list[float]
    step_halvings: int
    converged: bool


def train_logreg(
    features: np.ndarray,
    labels: np.ndarray,
    learning_rate: float = 0.1,
    epochs: int = 500,
    tol: float = 1e-8,
) -> tuple[ScreenInModel, TrainingLog]:
    """Full-batch gradient descent on standardized features.

    The step is halved (with a warning) whenever an epoch would raise the
    loss, so the recorded loss never increases.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2 or len(x) != len(y):
        raise TrainingError("training data must be an (n, 2) feature array with n labels")
    if len(y) == 0 or y.min() == y.max():
        raise TrainingError("training data must contain both labels")
    center = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    xs = np.ascontiguousarray((x - center) / scale)
    w, b = np.zeros(2), 0.0
    lr = learning_rate
    loss, gw, gb = loss_and_grad(w, b, xs, y)
    losses, halvings, converged = [loss], 0, False
    for _ in range(epochs):
        while True:
            w_new, b_new = w - lr * gw, b - lr * gb
            new_loss, new_gw, new_gb = loss_and_grad(w_new, b_new, xs, y)
            if new_loss <= loss or lr < 1e-12:
                break
            lr *= 0.5
            halvings += 1
            log.warning("logistic regression loss rose; halving step to %g", lr)
        w, b, gw, gb = w_new, b_new, new_gw, new_gb
        change = loss - new_loss
        loss = new_loss
        losses.append(loss)
        if change < tol:
            converged = True
            break
    raw_w = w / scale
    raw_b = b - float(raw_w @ center)
    return ScreenInModel((float(raw_w[0]), float(raw_w[1])), float(raw_b)), TrainingLog(losses, halvings, converged)


@dataclass(frozen=True)
class ScenarioConfig:
    separability: str = "moderate"
    short_black_scr: float | None = 0.10
    rates: PipelineRates = field(default_factory=PipelineRates.default)
    horizon: int = 12
    seed: int = 0
    mode: str = "baseline"
    training_window: int = 12
    learning_rate: float = 0.1
    epochs: int = 500

    def __post_init__(self):
        if self.separability not in SEPARABILITY:
            raise ConfigError(f"separability must be one of {sorted(SEPARABILITY)}, got {self.separability!r}")
        if self.short_black_scr is not None and not any(
            math.isclose(self.short_black_scr, v) for v in SHORT_BLACK_SCR_VALUES
        ):
            raise ConfigError(f"short_black_scr must be one of {SHORT_BLACK_SCR_VALUES}, got {self.short_black_scr}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1 month, got {self.horizon}")
        if self.training_window < 1:
            raise ConfigError(f"training_window must be >= 1 month, got {self.training_window}")

    @property
    def effective_rates(self) -> PipelineRates:
        if self.short_black_scr is None:
            return self.rates
        return self.rates.with_short_black_scr(self.short_black_scr)

    def to_json(self) -> dict:
        return {
            "separability": self.separability,
            "short_black_scr": self.short_black_scr,
            "rates": self.rates.to_json(),
            "horizon": self.horizon,
            "seed": self.seed,
            "mode": self.mode,
            "training_window": self.training_window,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"scenario: unknown field(s) {sorted(unknown)}")
        if "rates" in doc:
            doc["rates"] = PipelineRates.from_json(doc["rates"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"scenario: {exc}") from None

    def with_overrides(self, **changes) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    horizon_start: int
    admitted: CohortTable  # horizon months only
    in_care: CohortTable
    screened: CohortTable | None = None
    reported: CohortTable | None = None
    model: ScreenInModel | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def months(self) -> range:
        return self.in_care.months

    def in_care_totals(self) -> np.ndarray:
        """(class, race, month)."""
        return self.in_care.totals()

    def admitted_totals(self) -> np.ndarray:
        return self.admitted.totals()

    def total_in_care(self) -> float:
        return float(self.in_care.counts.sum())

    def disparity(self, stay: StayClass, which: str = "in_care") -> np.ndarray:
        tot = self.in_care_totals() if which == "in_care" else self.admitted_totals()
        return disparity(tot[stay.index, Race.BLACK.index], tot[stay.index, Race.WHITE.index])

    def series_rows(self):
        care, adm = self.in_care_totals(), self.admitted_totals()
        for i, month in enumerate(self.months):
            for c in CLASSES:
                for r in RACES:
                    yield (format_month(month), c.value, r.value, repr(float(care[c.index, r.index, i])),
                           repr(float(adm[c.index, r.index, i])))

    def write_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("month", "class", "race", "in_care", "admitted"))
            writer.writerows(self.series_rows())

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_json(),
            "horizon": [format_month(m) for m in self.months],
            "total_in_care": self.total_in_care(),
            "disparity_in_care": {c.value: self.disparity(c).tolist() for c in CLASSES},
            "model": self.model.to_json() if self.model else None,
            "diagnostics": self.diagnostics,
        }

    def dump_json(self, path, extra: dict | None = None) -> None:
        doc = self.to_json()
        if extra:
            doc.update(extra)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def _confusion(model: ScreenInModel, data: ProfileSet) -> dict:
    pred = model.predict(data.features)
    out = {}
    for c in CLASSES:
        for r in RACES:
            m = (data.stay == c.index) & (data.race == r.index)
            y, p = data.label[m], pred[m]
            out[f"{c.value}/{r.value}"] = {
                "tp": int((y & p).sum()), "fp": int((~y & p).sum()),
                "tn": int((~y & ~p).sum()), "fn": int((y & ~p).sum()),
            }
    return out


def deploy(
    reported: np.ndarray,
    model: ScreenInModel,
    dists: dict[StayClass, ProfileDistribution],
    rates: PipelineRates,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Screen every reported youth with the model, then substantiate.

    ``reported`` holds integer counts shaped (class, race, age, month).
    Returns (screened, admitted) integer arrays of the same shape.  Each
    screened-in youth is admitted independently with its class and race
    substantiation rate, so per cell the admitted count is binomial.
    """
    screened = np.zeros_like(reported)
    admitted = np.zeros_like(reported)
    for c in CLASSES:
        block = reported[c.index]
        flat = block.reshape(-1)
        feats = sample_profiles(int(flat.sum()), dists[c], rng)
        hit = model.predict(feats).astype(np.int64)
        # profiles are laid out cell by cell in C order
        bounds = np.concatenate([[0], np.cumsum(flat)])
        cum = np.concatenate([[0], np.cumsum(hit)])
        screened[c.index] = (cum[bounds[1:]] - cum[bounds[:-1]]).reshape(block.shape)
        for r in RACES:
            admitted[c.index, r.index] = rng.binomial(screened[c.index, r.index], rates.substantiate(c, r))
    return screened, admitted


def run_scenario(config: ScenarioConfig, fitted: FittedBundle) -> ScenarioResult:
    """Forecast the horizon after ``fitted``'s history, with or without the screen-in model."""
    start = fitted.history_end
    horizon = range(start, start + config.horizon)
    models = [fitted.delta_models[k] for k in fitted.keys]
    forecast = forecast_admissions(models, config.horizon, config.seed, start=start)
    history = split_cohorts(fitted.admissions, fitted.splits)
    future = split_cohorts(forecast, fitted.splits)
    diagnostics: dict = {}
    screened = reported = model = None
    if config.mode == "algorithm":
        rates = config.effective_rates
        dists = profile_distributions(config.separability)
        lo = max(history.start, start - config.training_window)
        window = history.window(lo, start)
        assert window.months.stop <= horizon.start, "training data overlaps the horizon"
        train_rng = np.random.default_rng(np.random.SeedSequence([config.seed, TRAINING_STREAM]))
        data = build_training_set(window, rates, dists, train_rng)
        model, tlog = train_logreg(data.profiles.features, data.profiles.label, config.learning_rate, config.epochs)
        pred = model.predict(data.profiles.features)
        diagnostics["training"] = {
            "window": [format_month(window.start), format_month(window.months.stop - 1)],
            "positives": data.n_positive,
            "negatives_before_downsampling": data.n_negative_before,
            "negatives": int((~data.profiles.label).sum()),
            "epochs": len(tlog.losses) - 1,
            "final_loss": tlog.losses[-1],
            "step_halvings": tlog.step_halvings,
            "converged": tlog.converged,
            "accuracy": float((pred == data.profiles.label).mean()),
            "confusion": _confusion(model, data.profiles),
            "learning_rate": config.learning_rate,
            "max_epochs": config.epochs,
        }
        _, rep = pipeline_counts(future, rates)
        rep_int = round_half_away(rep.counts)
        deploy_rng = np.random.default_rng(np.random.SeedSequence([config.seed, DEPLOYMENT_STREAM]))
        scr_int, adm_int = deploy(rep_int, model, dists, rates, deploy_rng)
        if not ((adm_int <= scr_int) & (scr_int <= rep_int)).all():
            raise AssertionError("pipeline ordering violated: admitted <= screened <= reported")
        future = CohortTable(adm_int.astype(float), start)
        screened = CohortTable(scr_int.astype(float), start)
        reported = CohortTable(rep_int.astype(float), start)
    ledger = CohortTable(np.concatenate([history.counts, future.counts], axis=3), history.start)
    care = in_care(ledger, fitted.discharge, horizon)
    return ScenarioResult(config, start, future, care, screened, reported, model, diagnostics)
