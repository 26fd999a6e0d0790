"""
Mean value-based amplitude estimation from per-threshold exceedance counts.

For every transition level T_k the fraction of samples whose code is at
least k is compared with its phase-averaged expectation

    g(theta; T) = int_0^1 [1 - F(T - theta * sin(2 pi u))] du,

which is monotone in theta for fixed T != 0. Each informative threshold is
inverted for theta and the per-threshold values are averaged.

Quadrature notes. Over one period sin(2 pi u) has the same distribution as
sin(t) with t uniform on [-pi/2, pi/2] where the sine is monotone, so the
integral is taken there. With small sigma the integrand is nearly a step;
outside the band where |T - theta sin t| < 10 sigma it equals 0 or 1 to
better than 1e-23 and is integrated in closed form, and Gauss-Legendre
(order 256, doubled until two results agree to 1e-12) covers the band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtr, roots_legendre

from .errors import EstimationFailed
from .quantizer import QuantizerModel
from .signal import NoiseModel, Record

DISCARD_THRESHOLD = 0.2
THETA_RANGE = (1e-6, 1.0)
G_TOL = 1e-10
QUAD_ORDER = 256
QUAD_TOL = 1e-12
QUAD_MAX_ORDER = 4096
NOISELESS_CUTOFF = 1e-8  # in units of the quantizer step
_BAND = 10.0
_SQRT2PI = math.sqrt(2 * math.pi)

SATURATED_ZERO = "saturated_zero"
SATURATED_ONE = "saturated_one"
NEAR_HALF = "near_half"
NO_BRACKET = "no_bracket"


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    x, w = roots_legendre(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True, eq=False)
class ThresholdCounts:
    """Exceedance counts Z_{N,k} for k = 1..L-1 (array index k - 1)."""

    n_samples: int
    counts: np.ndarray

    @property
    def zbar(self) -> np.ndarray:
        return self.counts / self.n_samples


@dataclass
class EstimationResult:
    theta_hat: float
    per_threshold: list = field(default_factory=list)
    discarded: list = field(default_factory=list)
    weights: list | None = None
    method: str = "mvbe"

    @property
    def M(self) -> int:
        return len(self.per_threshold)

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "theta_hat": self.theta_hat,
            "M": self.M,
            "per_threshold": [{"k": k, "theta": t} for k, t in self.per_threshold],
            "discarded": [{"k": k, "reason": r} for k, r in self.discarded],
        }
        if self.weights is not None:
            d["weights"] = list(self.weights)
        return d


def threshold_counts(record: Record, code_count: int | None = None) -> ThresholdCounts:
    """Count, for each transition k, the samples with code >= k."""
    if code_count is None:
        if record.quantizer is None:
            raise ValueError("record carries no quantizer; pass code_count")
        code_count = record.quantizer.code_count
    hist = np.bincount(record.codes, minlength=code_count)
    if hist.size > code_count:
        raise ValueError(f"record has codes above {code_count - 1}")
    # Z_k = #{code >= k} = reversed cumulative histogram, k = 1..L-1
    tail = np.cumsum(hist[::-1])[::-1]
    return ThresholdCounts(record.n_samples, tail[1:].astype(np.int64))


# ---------------------------------------------------------------------------
# phase-averaged crossing probability


def _band_limits(theta, T, sigma):
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.arcsin(np.clip((T - _BAND * sigma) / theta, -1.0, 1.0))
        hi = np.arcsin(np.clip((T + _BAND * sigma) / theta, -1.0, 1.0))
    return lo, hi


def _band_quadrature(theta, T, sigma, order, power=1):
    """Phase average of p(t)**power (power 1 or 2) at one quadrature order.

    ``theta`` must be positive; arrays of equal shape (K,).
    """
    x, w = _gauss_legendre(order)
    ta, tb = _band_limits(theta, T, sigma)
    half = 0.5 * (tb - ta)
    t = (0.5 * (tb + ta))[:, None] + half[:, None] * x
    s = (T[:, None] - theta[:, None] * np.sin(t)) / sigma
    p = ndtr(-s)
    if power == 2:
        p *= p
    return (0.5 * np.pi - tb + half * (p @ w)) / np.pi


def _slope_quadrature(theta, T, sigma, order):
    """d g / d theta = (1/pi) int phi(s) sin(t) / sigma dt over the band."""
    x, w = _gauss_legendre(order)
    ta, tb = _band_limits(theta, T, sigma)
    half = 0.5 * (tb - ta)
    t = (0.5 * (tb + ta))[:, None] + half[:, None] * x
    st = np.sin(t)
    s = (T[:, None] - theta[:, None] * st) / sigma
    dens = np.exp(-0.5 * s * s) / _SQRT2PI
    return half * ((dens * st) @ w) / (np.pi * sigma)


def _converged(fn, theta, T, sigma, order=QUAD_ORDER, tol=QUAD_TOL, max_order=QUAD_MAX_ORDER):
    """Evaluate ``fn`` doubling the order until successive results agree."""
    out = np.empty(theta.shape)
    used = np.full(theta.shape, order)
    idx = np.arange(theta.size)
    prev = fn(theta, T, sigma, order)
    n = order
    while idx.size and n < max_order:
        n *= 2
        cur = fn(theta[idx], T[idx], sigma, n)
        done = np.abs(cur - prev) < tol
        out[idx[done]] = cur[done]
        used[idx[done]] = n // 2
        idx = idx[~done]
        prev = cur[~done]
    if idx.size:
        out[idx] = prev
        used[idx] = n
    return out, used


def crossing_probabilities(theta, T, sigma: float, order: int = QUAD_ORDER) -> np.ndarray:
    """Vectorized g(theta; T) for Gaussian noise; see :func:`crossing_probability`."""
    theta, T = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(T, dtype=float))
    shape = theta.shape
    theta = theta.ravel().copy()
    T = T.ravel().copy()
    out = np.empty(theta.shape)
    if sigma == 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.clip(T / theta, -1.0, 1.0)
        out = 0.5 - np.arcsin(r) / np.pi
        zero = theta == 0
        out[zero] = (T[zero] < 0).astype(float)
        return out.reshape(shape)
    zero = theta == 0
    out[zero] = ndtr(-T[zero] / sigma)
    pos = ~zero
    if pos.any():
        out[pos], _ = _converged(_band_quadrature, theta[pos], T[pos], sigma, order)
    return out.reshape(shape)


def crossing_probability(theta: float, T: float, noise: NoiseModel) -> float:
    """Phase-averaged probability that theta*sin(2 pi U) + eta exceeds T.

    For sigma == 0 this is the step-function limit 1/2 - arcsin(T/theta)/pi
    (clipped to [0, 1] once |T| >= theta).
    """
    return float(crossing_probabilities(theta, T, noise.sigma))


def crossing_slope(theta, T, sigma: float) -> np.ndarray:
    """d g / d theta, vectorized over (theta, T)."""
    theta, T = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(T, dtype=float))
    shape = theta.shape
    theta = theta.ravel().copy()
    T = T.ravel().copy()
    if sigma == 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = T / theta
            out = np.where(np.abs(r) < 1, r / (np.pi * theta * np.sqrt(1 - r * r)), 0.0)
        return out.reshape(shape)
    out, _ = _converged(_slope_quadrature, theta, T, sigma)
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# inversion


def solve_thresholds(zbar, T, sigma: float, theta_range=THETA_RANGE, tol: float = G_TOL, max_iter: int = 200):
    """Bisection for g(theta; T_k) = zbar_k, all thresholds at once.

    Returns an array of roots with NaN where no sign change brackets a root
    inside ``theta_range``.
    """
    zbar = np.asarray(zbar, dtype=float).ravel()
    T = np.asarray(T, dtype=float).ravel()
    lo, hi = map(float, theta_range)
    K = zbar.size
    roots = np.full(K, np.nan)
    if K == 0:
        return roots
    if sigma == 0:
        # closed-form inverse of the step-function limit
        with np.errstate(divide="ignore", invalid="ignore"):
            th = T / np.sin((0.5 - zbar) * np.pi)
        ok = (th >= lo) & (th <= hi) & np.isfinite(th)
        roots[ok] = th[ok]
        return roots

    f_lo = crossing_probabilities(np.full(K, lo), T, sigma) - zbar
    f_hi = crossing_probabilities(np.full(K, hi), T, sigma) - zbar
    roots[np.abs(f_lo) <= tol] = lo
    at_hi = (np.abs(f_hi) <= tol) & np.isnan(roots)
    roots[at_hi] = hi
    bracketed = np.isnan(roots) & (np.sign(f_lo) * np.sign(f_hi) < 0)
    idx = np.flatnonzero(bracketed)
    order = QUAD_ORDER
    while idx.size:
        found = _bisect(zbar[idx], T[idx], sigma, lo, hi, np.sign(f_lo[idx]), order, tol, max_iter)
        # a root is accepted once the quadrature at this order is confirmed converged
        g_n = _band_quadrature(found, T[idx], sigma, order)
        g_c, _ = _converged(_band_quadrature, found, T[idx], sigma, order)
        good = np.abs(g_n - g_c) < QUAD_TOL
        roots[idx[good]] = found[good]
        idx = idx[~good]
        if order >= QUAD_MAX_ORDER:
            roots[idx] = found[~good]
            break
        order *= 2
    return roots


def _bisect(z, T, sigma, lo, hi, sign_lo, order, tol, max_iter):
    a = np.full(z.size, lo)
    b = np.full(z.size, hi)
    out = np.full(z.size, np.nan)
    act = np.arange(z.size)
    for _ in range(max_iter):
        if not act.size:
            break
        m = 0.5 * (a[act] + b[act])
        fm = _band_quadrature(m, T[act], sigma, order) - z[act]
        done = (np.abs(fm) <= tol) | (b[act] - a[act] <= 4 * np.finfo(float).eps * m)
        out[act[done]] = m[done]
        move_lo = np.sign(fm) == sign_lo[act]
        a[act] = np.where(move_lo, m, a[act])
        b[act] = np.where(move_lo, b[act], m)
        act = act[~done]
    out[act] = 0.5 * (a[act] + b[act])
    return out


def invert_threshold(zbar_k: float, T: float, noise: NoiseModel, theta_range=THETA_RANGE) -> float | None:
    """theta in ``theta_range`` with g(theta; T) = zbar_k, or None without a bracket."""
    r = solve_thresholds([zbar_k], [T], noise.sigma, theta_range)[0]
    return None if np.isnan(r) else float(r)


# ---------------------------------------------------------------------------
# combination


def _screen(zbar, discard_threshold):
    reasons = np.full(zbar.size, "", dtype=object)
    reasons[zbar <= 0] = SATURATED_ZERO
    reasons[zbar >= 1] = SATURATED_ONE
    near = (reasons == "") & (np.abs(zbar - 0.5) <= discard_threshold)
    reasons[near] = NEAR_HALF
    return reasons


def _combine(ks, thetas, discarded, method, weights=None):
    if not ks:
        raise EstimationFailed(discarded)
    per = [(int(k), float(t)) for k, t in zip(ks, thetas)]
    if weights is None:
        theta_hat = math.fsum(thetas) / len(thetas)
    else:
        w = np.asarray(weights, dtype=float)
        theta_hat = math.fsum(w * thetas) / math.fsum(w)
        weights = [float(v) for v in w]
    return EstimationResult(theta_hat, per, sorted(discarded), weights, method)


def _variance_weights(zbar, T, thetas, n_samples, sigma, mode):
    if mode == "empirical":
        var = zbar * (1 - zbar) / n_samples
    else:
        g1 = crossing_probabilities(thetas, T, sigma)
        if sigma > 0:
            g2, _ = _converged(lambda a, b, s, n: _band_quadrature(a, b, s, n, power=2), thetas, T, sigma)
        else:
            g2 = g1
        var = np.maximum(g1 - g2, 0.0) / n_samples
    slope = crossing_slope(thetas, T, sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = slope**2 / var
    if not np.all(np.isfinite(w)):
        # zero-variance thresholds dominate: keep only those, equally weighted
        w = (~np.isfinite(w)).astype(float)
    return w


def estimate(
    counts: ThresholdCounts,
    model: QuantizerModel,
    noise: NoiseModel,
    *,
    discard_threshold: float = DISCARD_THRESHOLD,
    theta_range=THETA_RANGE,
    weighting: str = "mean",
) -> EstimationResult:
    """Amplitude estimate from exceedance counts.

    Thresholds with zbar in {0, 1} or |zbar - 0.5| <= ``discard_threshold``
    are dropped; the rest are inverted and combined. ``weighting`` is
    ``"mean"`` (plain average), ``"empirical"`` or ``"theoretical"``
    (inverse variance of zbar propagated through dg/dtheta).

    Raises:
        EstimationFailed: if no threshold survives.
    """
    if weighting not in ("mean", "empirical", "theoretical"):
        raise ValueError(f"unknown weighting {weighting!r}")
    zbar = counts.zbar
    T = model.transitions
    if zbar.size != T.size:
        raise ValueError("counts do not match the quantizer's thresholds")
    reasons = _screen(zbar, discard_threshold)
    cand = np.flatnonzero(reasons == "")
    sigma = noise.sigma if noise.sigma >= NOISELESS_CUTOFF * model.step else 0.0
    roots = solve_thresholds(zbar[cand], T[cand], sigma, theta_range)
    reasons[cand[np.isnan(roots)]] = NO_BRACKET
    ok = ~np.isnan(roots)
    keep = cand[ok]
    thetas = roots[ok]
    discarded = [(int(k) + 1, str(r)) for k, r in enumerate(reasons) if r]
    weights = None
    if weighting != "mean" and keep.size:
        weights = _variance_weights(zbar[keep], T[keep], thetas, counts.n_samples, sigma, weighting)
    method = "mvbe" if weighting == "mean" else f"mvbe_{weighting}"
    return _combine((keep + 1).tolist(), thetas, discarded, method, weights)


def estimate_noiseless(
    counts: ThresholdCounts,
    model: QuantizerModel,
    *,
    discard_threshold: float = DISCARD_THRESHOLD,
) -> EstimationResult:
    """Closed-form per-threshold estimate T_k / sin((1/2 - zbar_k) pi)."""
    zbar = counts.zbar
    T = model.transitions
    reasons = _screen(zbar, discard_threshold)
    keep = np.flatnonzero(reasons == "")
    thetas = T[keep] / np.sin((0.5 - zbar[keep]) * np.pi)
    discarded = [(int(k) + 1, str(r)) for k, r in enumerate(reasons) if r]
    return _combine((keep + 1).tolist(), thetas, discarded, "mvbe_noiseless")


def estimate_record(record: Record, model: QuantizerModel | None = None, noise: NoiseModel | None = None, **kw):
    """Convenience wrapper: counts + :func:`estimate` in one call."""
    model = model or record.quantizer
    noise = noise or record.noise
    return estimate(threshold_counts(record, model.code_count), model, noise, **kw)
