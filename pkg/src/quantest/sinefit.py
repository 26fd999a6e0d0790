"""
Least-squares sine fits used as baselines.

fit3 solves the linear model  y_n ~ A cos(w n) + B sin(w n) + C  with
w = 2 pi lambda known. fit4 adds the frequency and refines it by
Gauss-Newton, linearizing around the current lambda with the extra column
2 pi n (-A sin(w n) + B cos(w n)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, IllConditionedError
from .quantizer import QuantizerModel, midpoint_table
from .signal import Record

MAX_COND = 1e10


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    phase: float
    offset: float
    frequency: float | None
    residual_rms: float
    iterations: int
    in_phase: float = 0.0
    quadrature: float = 0.0


def decode(record: Record | np.ndarray, model: QuantizerModel, mode: str = "nominal", gain: float = 1.0) -> np.ndarray:
    """Map codes to reconstruction values divided by ``gain``.

    ``nominal`` uses the output levels y[k]; ``midpoint`` uses the cell
    midpoints of the actual transition levels.
    """
    if not gain > 0:
        raise ValueError("gain must be positive")
    codes = record.codes if isinstance(record, Record) else np.asarray(record)
    if mode == "nominal":
        table = model.output_levels
    elif mode == "midpoint":
        table = midpoint_table(model)
    else:
        raise ValueError(f"unknown decode mode {mode!r}")
    return table[codes] / gain


def fold_frequency(lam: float) -> float:
    """Alias a normalized frequency into [0, 0.5]; the amplitude is unchanged."""
    f = lam % 1.0
    return 1.0 - f if f > 0.5 else f


def _solve_normal(D, y):
    # columns are equilibrated so the frequency column's scale does not count
    scale = np.linalg.norm(D, axis=0)
    if np.any(scale == 0):
        raise IllConditionedError("sine-fit design has an all-zero column")
    Ds = D / scale
    G = Ds.T @ Ds
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > MAX_COND:
        raise IllConditionedError(f"sine-fit design is ill-conditioned (cond={cond:.3g})")
    return np.linalg.solve(G, Ds.T @ y) / scale


def _design3(n, lam):
    w = 2 * np.pi * np.mod(lam * n, 1.0)
    return np.column_stack([np.cos(w), np.sin(w), np.ones(n.size)])


def _result(beta, resid, lam, iterations, four):
    A, B, C = beta[:3]
    # A cos + B sin = amp * sin(w n + phase)
    return FitResult(
        amplitude=math.hypot(A, B),
        phase=math.atan2(A, B),
        offset=float(C),
        frequency=float(lam) if four else None,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        iterations=iterations,
        in_phase=float(A),
        quadrature=float(B),
    )


def fit3(samples, lam: float) -> FitResult:
    """Three-parameter fit (amplitude, phase, offset) at known frequency.

    Raises:
        IllConditionedError: for N < 4 or lambda too close to 0 or 1/2.
    """
    y = np.asarray(samples, dtype=float)
    if y.size < 4:
        raise IllConditionedError("fit3 needs at least 4 samples")
    if not 0 < lam < 0.5:
        raise IllConditionedError(f"fit3 needs 0 < lambda < 0.5, got {lam}")
    n = np.arange(y.size, dtype=float)
    D = _design3(n, lam)
    beta = _solve_normal(D, y)
    return _result(beta, y - D @ beta, lam, 1, four=False)


def spectral_peak(samples) -> float:
    """Coarse frequency estimate from a zero-padded FFT (grid of 4N bins in [0, 1/2))."""
    y = np.asarray(samples, dtype=float)
    N = y.size
    mag = np.abs(np.fft.rfft(y - y.mean(), n=8 * N))
    mag[0] = 0.0
    return float(np.argmax(mag) / (8 * N))


def fit4(samples, lam_init: float | None = None, max_iter: int = 50, rtol: float = 1e-12) -> FitResult:
    """Four-parameter fit with Gauss-Newton frequency refinement.

    Stops once |d lambda| < rtol * lambda. Without ``lam_init`` the start
    value comes from :func:`spectral_peak`.

    Raises:
        ConvergenceError: after ``max_iter`` iterations; ``last`` holds the
            final iterate as a FitResult.
    """
    y = np.asarray(samples, dtype=float)
    lam = spectral_peak(y) if lam_init is None else float(lam_init)
    first = fit3(y, lam)
    A, B, C = first.in_phase, first.quadrature, first.offset
    n = np.arange(y.size, dtype=float)
    last = first
    for it in range(1, max_iter + 1):
        D3 = _design3(n, lam)
        w = 2 * np.pi * np.mod(lam * n, 1.0)
        dcol = 2 * np.pi * n * (-A * np.sin(w) + B * np.cos(w))
        D = np.column_stack([D3, dcol])
        beta = _solve_normal(D, y)
        A, B, C, dlam = beta
        lam = lam + dlam
        if not 0 < lam < 0.5:
            raise ConvergenceError(f"frequency left (0, 0.5): {lam}", last)
        D3 = _design3(n, lam)
        last = _result(np.array([A, B, C]), y - D3 @ np.array([A, B, C]), lam, it, four=True)
        if abs(dlam) < rtol * lam:
            # final linear solve at the converged frequency
            beta3 = _solve_normal(D3, y)
            return _result(beta3, y - D3 @ beta3, lam, it, four=True)
    raise ConvergenceError(f"fit4 did not converge in {max_iter} iterations", last)
