"""
Static ADC characteristic with arbitrary monotone transition levels.

A ``b``-bit quantizer has ``L = 2**b`` output codes and ``L - 1`` transition
levels ``T_1 < ... < T_{L-1}``. Code ``k`` is produced when the input lies in
the half-open cell ``[T_k, T_{k+1})`` with sentinels ``T_0 = -inf`` and
``T_L = +inf``. Nominal output levels are

    y[k] = -(L/2 - 1) * step + k * step,   k = 0..L-1

and the uniform transition grid is

    T_k = -((L - 1)/2) * step + k * step,  k = 1..L-1

so every uniform transition sits halfway between two output levels.
All values are in normalized full-scale units (input range [-1, 1]).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAX_BITS = 16


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def nominal_output_levels(bits: int, step: float) -> np.ndarray:
    L = 2**bits
    return -(L / 2 - 1) * step + np.arange(L) * step


@dataclass(frozen=True, eq=False)
class QuantizerModel:
    """Immutable quantizer description.

    Attributes:
        bits: resolution b.
        step: quantization step (LSB) in normalized units.
        transitions: strictly increasing levels T_1..T_{L-1}.
        output_levels: nominal code values y[0..L-1].
    """

    bits: int
    step: float
    transitions: np.ndarray
    output_levels: np.ndarray

    def __post_init__(self):
        L = 2**self.bits
        t = _frozen(self.transitions)
        y = _frozen(self.output_levels)
        if t.shape != (L - 1,):
            raise ValidationError(f"expected {L - 1} transition levels for {self.bits} bits, got {t.size}")
        if y.shape != (L,):
            raise ValidationError(f"expected {L} output levels, got {y.size}")
        if not np.all(np.isfinite(t)):
            raise ValidationError("transition levels must be finite")
        if np.any(np.diff(t) <= 0):
            bad = int(np.flatnonzero(np.diff(t) <= 0)[0]) + 2
            raise ValidationError(f"transition levels must be strictly increasing (violation at k={bad})")
        if not self.step > 0:
            raise ValidationError("step must be positive")
        object.__setattr__(self, "transitions", t)
        object.__setattr__(self, "output_levels", y)

    @property
    def code_count(self) -> int:
        return 2**self.bits

    @property
    def overload_bound(self) -> float:
        """Largest noiseless amplitude that keeps the input inside [-1, 1]."""
        return (self.code_count - 1) / 2 * self.step

    def quantize(self, value):
        return quantize(self, value)

    def is_equivalent(self, other: "QuantizerModel") -> bool:
        return (
            self.bits == other.bits
            and self.step == other.step
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.output_levels, other.output_levels)
        )

    def __eq__(self, other):
        if not isinstance(other, QuantizerModel):
            return NotImplemented
        return self.is_equivalent(other)

    __hash__ = None


def _check_bits(bits):
    if not isinstance(bits, (int, np.integer)) or isinstance(bits, bool):
        raise ValidationError(f"bits must be an integer, got {bits!r}")
    if not 1 <= bits <= MAX_BITS:
        raise ValidationError(f"bits must be in [1, {MAX_BITS}], got {bits}")
    return int(bits)


def make_uniform(bits: int, step: float | None = None) -> QuantizerModel:
    """Ideal uniform quantizer; ``step`` defaults to the full-scale value 2/L."""
    bits = _check_bits(bits)
    L = 2**bits
    if step is None:
        step = 2.0 / L
    if not step > 0:
        raise ValidationError("step must be positive")
    k = np.arange(1, L)
    transitions = -((L - 1) / 2) * step + k * step
    return QuantizerModel(bits, float(step), transitions, nominal_output_levels(bits, step))


def make_resistor_ladder(
    bits: int,
    full_scale: tuple[float, float] = (-1.0, 1.0),
    relative_sigma: float = 0.03,
    seed: int = 0,
) -> QuantizerModel:
    """Non-uniform but monotone quantizer built from a random resistor string.

    ``L`` resistances are drawn from Normal(1, relative_sigma); non-positive
    draws are redrawn. The k-th transition is the normalized tap voltage
    ``lo + (hi - lo) * sum(R[:k]) / sum(R)``.
    """
    bits = _check_bits(bits)
    if relative_sigma < 0:
        raise ValidationError("relative_sigma must be non-negative")
    lo, hi = map(float, full_scale)
    if not hi > lo:
        raise ValidationError("full_scale must satisfy lo < hi")
    L = 2**bits
    rng = np.random.Generator(np.random.PCG64(seed))
    r = 1.0 + relative_sigma * rng.standard_normal(L)
    bad = r <= 0
    while np.any(bad):
        r[bad] = 1.0 + relative_sigma * rng.standard_normal(int(bad.sum()))
        bad = r <= 0
    if relative_sigma == 0:
        transitions = lo + (hi - lo) * np.arange(1, L) / L
    else:
        c = np.cumsum(r)
        transitions = lo + (hi - lo) * c[:-1] / c[-1]
    step = (hi - lo) / L
    return QuantizerModel(bits, step, transitions, nominal_output_levels(bits, step))


def from_transitions(levels, step: float | None = None) -> QuantizerModel:
    """Model from externally calibrated transition levels.

    ``step`` defaults to the mean spacing between the first and last level.
    """
    t = np.asarray(levels, dtype=float).ravel()
    n = t.size
    L = n + 1
    if n < 1 or L & (L - 1):
        raise ValidationError(f"number of transition levels must be 2**b - 1, got {n}")
    bits = L.bit_length() - 1
    if bits > MAX_BITS:
        raise ValidationError(f"at most {MAX_BITS} bits supported")
    if np.any(np.diff(t) <= 0):
        bad = int(np.flatnonzero(np.diff(t) <= 0)[0]) + 2
        raise ValidationError(f"transition levels must be strictly increasing (violation at k={bad})")
    if step is None:
        step = (t[-1] - t[0]) / (n - 1) if n > 1 else 1.0
    return QuantizerModel(bits, float(step), t, nominal_output_levels(bits, step))


def quantize(model: QuantizerModel, value):
    """Output code(s) for the given input value(s).

    Returns ``k`` with ``T_k <= value < T_{k+1}``; scalars in, int out.
    """
    codes = np.searchsorted(model.transitions, value, side="right")
    if np.ndim(codes) == 0:
        return int(codes)
    return codes.astype(np.int64)


def inl(model: QuantizerModel) -> np.ndarray:
    """Integral nonlinearity in LSB, relative to the line through T_1 and T_{L-1}.

    Entry ``i`` refers to transition ``k = i + 1``.
    """
    t = model.transitions
    n = t.size
    if n < 2:
        return np.zeros(n)
    ideal = t[0] + np.arange(n) * (t[-1] - t[0]) / (n - 1)
    out = (t - ideal) / model.step
    # rounding residue of the reference line, not nonlinearity
    out[np.abs(out) < 1e-9] = 0.0
    out[0] = out[-1] = 0.0
    return out


def dnl(model: QuantizerModel) -> np.ndarray:
    """Width of interior code bins 1..L-2 relative to step, minus one."""
    return np.diff(model.transitions) / model.step - 1.0


def midpoint_table(model: QuantizerModel) -> np.ndarray:
    """Per-code reconstruction values (T_k + T_{k+1}) / 2.

    Edge codes are unbounded cells, so they get T_1 - step/2 and
    T_{L-1} + step/2.
    """
    t = model.transitions
    table = np.empty(model.code_count)
    table[0] = t[0] - model.step / 2
    table[-1] = t[-1] + model.step / 2
    table[1:-1] = 0.5 * (t[:-1] + t[1:])
    return table


def read_levels(path) -> np.ndarray:
    """Read a transition-level file: one decimal real per line."""
    path = Path(path)
    values = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                values.append(float(s))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: cannot parse {s!r} as a real number") from None
    t = np.array(values)
    if t.size > 1 and np.any(np.diff(t) <= 0):
        bad = int(np.flatnonzero(np.diff(t) <= 0)[0]) + 2
        raise ValidationError(f"{path}: levels not strictly increasing at entry {bad}")
    return t


def write_levels(path, model_or_levels) -> None:
    levels = getattr(model_or_levels, "transitions", model_or_levels)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for v in levels:
            fh.write(f"{float(v)!r}\n")


def write_inl_csv(path, model: QuantizerModel) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "inl_lsb"])
        for k, v in enumerate(inl(model), start=1):
            w.writerow([k, repr(float(v))])
