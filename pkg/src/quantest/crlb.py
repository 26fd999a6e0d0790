"""
Cramér-Rao bound for the amplitude from quantized Gaussian-noise samples.

Each sample is a categorical variable over the L codes with

    p_{n,k}   = Phi((T_{k+1} - theta x_n)/sigma) - Phi((T_k - theta x_n)/sigma)
    dp/dtheta = -x_n [phi_sigma(T_{k+1} - theta x_n) - phi_sigma(T_k - theta x_n)]

with T_0 = -inf, T_L = +inf. Samples are independent, so the Fisher
information is the sum over n and k of (dp/dtheta)^2 / p, and the bound
is its reciprocal. No additive quantization-noise approximation is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import UnboundedCRLBError, UnsupportedNoiseError
from .quantizer import QuantizerModel
from .signal import NoiseModel, SineParams, unit_sine

P_FLOOR = 1e-30
_CHUNK = 1 << 20


@dataclass(frozen=True)
class CellProbability:
    p: float
    dp_dtheta: float


def _require_noise(noise):
    if not noise.sigma > 0:
        raise UnsupportedNoiseError("Fisher information is singular for sigma == 0")


def _cells(theta, x, noise, model):
    """(p, dp/dtheta) with shape (len(x), L)."""
    s = noise.sigma
    edges = np.concatenate(([-np.inf], model.transitions, [np.inf]))
    mean = theta * np.asarray(x, dtype=float)[:, None]
    z = (edges[None, :] - mean) / s
    # upper-tail form where both edges sit above the mean avoids cancellation
    cdf = ndtr(z)
    sf = ndtr(-z)
    lo, hi = z[:, :-1], z[:, 1:]
    p = np.where(lo > 0, sf[:, :-1] - sf[:, 1:], cdf[:, 1:] - cdf[:, :-1])
    with np.errstate(over="ignore"):
        dens = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * s)
    dens[~np.isfinite(z)] = 0.0
    dp = -np.asarray(x, dtype=float)[:, None] * (dens[:, 1:] - dens[:, :-1])
    return p, dp


def cell_probabilities(params: SineParams, noise: NoiseModel, model: QuantizerModel, n: int) -> list[CellProbability]:
    """Per-code probability and amplitude derivative for sample index ``n``."""
    _require_noise(noise)
    x = unit_sine(params.frequency, params.phase, [n])
    p, dp = _cells(params.amplitude, x, noise, model)
    return [CellProbability(float(a), float(b)) for a, b in zip(p[0], dp[0])]


def cell_arrays(params: SineParams, noise: NoiseModel, model: QuantizerModel, n_samples: int):
    """Arrays p[n, k] and dp[n, k] for n < n_samples."""
    _require_noise(noise)
    x = unit_sine(params.frequency, params.phase, np.arange(n_samples))
    return _cells(params.amplitude, x, noise, model)


def fisher_information(params: SineParams, noise: NoiseModel, model: QuantizerModel, n_samples: int) -> float:
    """Exact Fisher information of the amplitude over N samples."""
    _require_noise(noise)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = unit_sine(params.frequency, params.phase, np.arange(n_samples))
    return fisher_information_x(params.amplitude, x, noise, model)


def fisher_information_x(theta: float, x, noise: NoiseModel, model: QuantizerModel) -> float:
    """Fisher information for an explicit unit-amplitude sample pattern ``x``."""
    _require_noise(noise)
    x = np.asarray(x, dtype=float)
    rows = max(1, _CHUNK // model.code_count)
    parts = []
    for start in range(0, x.size, rows):
        p, dp = _cells(theta, x[start : start + rows], noise, model)
        keep = p > P_FLOOR
        # per-sample partial sums keep the reduction order fixed
        parts.extend(np.where(keep, dp * dp / np.where(keep, p, 1.0), 0.0).sum(axis=1).tolist())
    return math.fsum(parts)


def crlb_amplitude(params: SineParams, noise: NoiseModel, model: QuantizerModel, n_samples: int) -> float:
    """1 / I(theta); raises UnboundedCRLBError when I(theta) == 0."""
    info = fisher_information(params, noise, model, n_samples)
    if not info > 0:
        raise UnboundedCRLBError("Fisher information is zero; the amplitude is not identifiable")
    return 1.0 / info


def score(theta: float, x, codes, noise: NoiseModel, model: QuantizerModel) -> np.ndarray:
    """d log-likelihood / d theta for each record (rows of ``codes``)."""
    p, dp = _cells(theta, x, noise, model)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > P_FLOOR, dp / p, 0.0)
    codes = np.atleast_2d(codes)
    n = np.arange(codes.shape[1])
    return ratio[n[None, :], codes].sum(axis=1)
