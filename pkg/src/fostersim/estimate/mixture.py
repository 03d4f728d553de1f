"""One-dimensional Gaussian mixtures over log length-of-stay.

EM runs on the distinct sample values weighted by their multiplicity, which
gives the same likelihood and updates as the full sample: stays are recorded
in whole days, so a large table has only a few thousand distinct log-LOS
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ..datamodel import DemographicKey, ValidationError

MAX_COMPONENTS = 5
N_RESTARTS = 20
MAX_ITER = 500
TOL = 1e-6
VAR_FLOOR = 1e-4
MIN_SAMPLES = 50
LOG_2PI = math.log(2 * math.pi)


class MonotonicityError(RuntimeError):
    """EM log-likelihood decreased between iterations."""


@dataclass(frozen=True)
class StayMixtureModel:
    key: DemographicKey
    k: int
    weights: tuple[float, ...]
    means: tuple[float, ...]
    variances: tuple[float, ...]
    aic: float
    log_likelihood: float
    n: int = 0

    def log_joint(self, x) -> np.ndarray:
        """log(weight_k * density_k(x)) with shape (len(x), k)."""
        x = np.asarray(x, dtype=float)[:, None]
        w, m, v = (np.asarray(a) for a in (self.weights, self.means, self.variances))
        with np.errstate(divide="ignore"):
            return np.log(w) - 0.5 * (LOG_2PI + np.log(v)) - (x - m) ** 2 / (2 * v)

    def log_pdf(self, x) -> np.ndarray:
        return _logsumexp(self.log_joint(x), axis=-1)

    def to_json(self) -> dict:
        return {
            "race": self.key.race.value, "age": self.key.admit_age, "k": self.k,
            "weights": list(self.weights), "means": list(self.means),
            "variances": list(self.variances), "aic": self.aic,
            "log_likelihood": self.log_likelihood, "n": self.n,
        }


@dataclass
class EMResult:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float
    n_iter: int
    converged: bool
    trace: list[float]


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    return np.squeeze(top, axis=axis) + np.log(np.sum(np.exp(a - top), axis=axis))


def aic(log_likelihood: float, k: int) -> float:
    return 2 * (3 * k - 1) - 2 * log_likelihood


def weighted_quantiles(values: np.ndarray, counts: np.ndarray, probs) -> np.ndarray:
    cdf = (np.cumsum(counts) - 0.5 * counts) / counts.sum()
    return np.interp(probs, cdf, values)


@numba.njit(cache=True)
def _em_single(x, c, mu, var, w, max_iter, tol, var_floor, trace):
    """EM for one starting point, updating ``mu``/``var``/``w`` in place.

    Each pass over the data evaluates the log-likelihood of the current
    parameters and accumulates the statistics for the next M-step.  Returns
    (iterations, converged, monotone); ``trace[:iterations + 1]`` holds the
    log-likelihood after each update.
    """
    k = mu.size
    n = c.sum()
    lj = np.empty(k)
    s0 = np.empty(k)
    s1 = np.empty(k)
    s2 = np.empty(k)
    half_log_2pi = 0.5 * np.log(2.0 * np.pi)
    it = 0
    converged = False
    monotone = True
    while True:
        s0[:] = 0.0
        s1[:] = 0.0
        s2[:] = 0.0
        ll = 0.0
        for i in range(x.size):
            top = -np.inf
            for j in range(k):
                if w[j] > 0.0:
                    d = x[i] - mu[j]
                    lj[j] = np.log(w[j]) - half_log_2pi - 0.5 * np.log(var[j]) - d * d / (2.0 * var[j])
                else:
                    lj[j] = -np.inf
                if lj[j] > top:
                    top = lj[j]
            tot = 0.0
            for j in range(k):
                lj[j] = np.exp(lj[j] - top)
                tot += lj[j]
            ll += c[i] * (top + np.log(tot))
            for j in range(k):
                r = c[i] * lj[j] / tot
                s0[j] += r
                s1[j] += r * x[i]
                s2[j] += r * x[i] * x[i]
        trace[it] = ll
        if it > 0:
            prev = trace[it - 1]
            if ll < prev - 1e-9 * max(1.0, abs(prev)):
                monotone = False
            if (ll - prev) / n < tol:
                converged = True
                break
        if it == max_iter:
            break
        for j in range(k):
            if s0[j] > 0.0:
                m = s1[j] / s0[j]
                v = s2[j] / s0[j] - m * m
                mu[j] = m
                var[j] = v if v > var_floor else var_floor
            w[j] = s0[j] / n
        it += 1
    return it, converged, monotone


def run_em(
    values: np.ndarray,
    counts: np.ndarray,
    means: np.ndarray,
    variances: np.ndarray,
    weights: np.ndarray | None = None,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
    var_floor: float = VAR_FLOOR,
) -> list[EMResult]:
    """Run EM from each starting point (rows of ``means``/``variances``/``weights``).

    A run stops once its per-sample log-likelihood gain falls below ``tol``
    or after ``max_iter`` updates.  Raises :class:`MonotonicityError` if any
    run's likelihood drops between iterations.
    """
    x = np.asarray(values, dtype=float)
    shift = float(np.average(x, weights=counts))
    xs = x - shift
    c = np.asarray(counts, dtype=float)
    mu0 = np.array(means, dtype=float, ndmin=2)
    var0 = np.maximum(np.array(variances, dtype=float, ndmin=2), var_floor)
    r, k = mu0.shape
    w0 = np.full((r, k), 1.0 / k) if weights is None else np.array(weights, dtype=float, ndmin=2)
    results = []
    for i in range(r):
        mu, var, w = mu0[i] - shift, var0[i].copy(), w0[i].copy()
        trace = np.empty(max_iter + 1)
        iters, converged, monotone = _em_single(xs, c, mu, var, w, max_iter, tol, var_floor, trace)
        if not monotone:
            raise MonotonicityError(f"EM log-likelihood decreased in restart {i} (k={k})")
        results.append(EMResult(w, mu + shift, var, float(trace[iters]), int(iters), bool(converged),
                                trace[:iters + 1].tolist()))
    return results


def initial_points(values, counts, k: int, restarts: int, seed: int):
    """Quantile-placed means with seeded jitter; restart 0 is unjittered."""
    sd = math.sqrt(max(np.average((values - np.average(values, weights=counts)) ** 2, weights=counts), VAR_FLOOR))
    base = weighted_quantiles(values, counts, (np.arange(k) + 0.5) / k)
    means = np.empty((restarts, k))
    weights = np.empty((restarts, k))
    for r in range(restarts):
        if r == 0:
            means[r], weights[r] = base, 1.0 / k
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, k, r]))
        means[r] = base + rng.normal(0.0, 0.25 * sd, k)
        raw = rng.uniform(0.5, 1.5, k)
        weights[r] = raw / raw.sum()
    variances = np.full((restarts, k), sd ** 2 / k)
    return means, variances, weights


def fit_k(values, counts, k: int, restarts: int = N_RESTARTS, seed: int = 0) -> EMResult:
    means, variances, weights = initial_points(values, counts, k, restarts, seed)
    results = run_em(values, counts, means, variances, weights)
    return max(results, key=lambda res: res.log_likelihood)


def fit_los_mixture(log_los, key: DemographicKey, max_k: int = MAX_COMPONENTS,
                    restarts: int = N_RESTARTS, seed: int = 0) -> StayMixtureModel:
    """Fit mixtures with 1..max_k components and keep the lowest-AIC one."""
    sample = np.asarray(log_los, dtype=float)
    if sample.size < MIN_SAMPLES:
        raise ValidationError(f"{key}: need >= {MIN_SAMPLES} uncensored stays to fit a mixture, got {sample.size}")
    if not np.isfinite(sample).all():
        raise ValidationError(f"{key}: log-LOS sample contains non-finite values")
    values, counts = np.unique(sample, return_counts=True)
    counts = counts.astype(float)
    if values.size == 1:
        ll = float(sample.size * (-0.5 * (LOG_2PI + math.log(VAR_FLOOR))))
        return StayMixtureModel(key, 1, (1.0,), (float(values[0]),), (VAR_FLOOR,), aic(ll, 1), ll, int(sample.size))
    best = None
    for k in range(1, max_k + 1):
        res = fit_k(values, counts, k, restarts, seed)
        score = aic(res.log_likelihood, k)
        if best is None or score < best[0]:
            best = (score, k, res)
    score, k, res = best
    order = np.argsort(res.means)
    return StayMixtureModel(
        key, k,
        tuple(float(v) for v in res.weights[order]),
        tuple(float(v) for v in res.means[order]),
        tuple(float(v) for v in res.variances[order]),
        float(score), float(res.log_likelihood), int(sample.size),
    )


LONG_THRESHOLD_DAYS = 90.0


@dataclass(frozen=True)
class ClassSplit:
    key: DemographicKey
    p_long: float

    @property
    def p_short(self) -> float:
        return 1.0 - self.p_long

    def to_json(self) -> dict:
        return {"race": self.key.race.value, "age": self.key.admit_age, "p_long": self.p_long}


def long_components(mixture: StayMixtureModel) -> np.ndarray:
    """Boolean mask of components treated as long-stay.

    With two components the higher-mean one is long.  A single component is
    long when its mean is at least 90 days.  With three or more, every
    component whose mean reaches 90 days is long (the highest always is), so
    an extra component that splits one stay class does not flip its members.
    """
    means = np.asarray(mixture.means)
    mask = np.zeros(mixture.k, dtype=bool)
    if mixture.k == 2:
        mask[np.argmax(means)] = True
    else:
        mask = means >= math.log(LONG_THRESHOLD_DAYS)
        if mixture.k > 2:
            mask[np.argmax(means)] = True
    return mask


def assign_long(mixture: StayMixtureModel, log_los) -> np.ndarray:
    """True where a stay's posterior favours the long-stay components."""
    x = np.asarray(log_los, dtype=float)
    mask = long_components(mixture)
    if mask.all() or not mask.any():
        return np.full(x.shape, bool(mask.all()))
    lj = mixture.log_joint(x)
    return _logsumexp(lj[:, mask], axis=1) > _logsumexp(lj[:, ~mask], axis=1)


def split_proportions(mixture: StayMixtureModel, log_los) -> ClassSplit:
    x = np.asarray(log_los, dtype=float)
    if x.size == 0:
        raise ValidationError(f"{mixture.key}: cannot split an empty sample")
    return ClassSplit(mixture.key, float(assign_long(mixture, x).mean()))
