"""Sine-wave stimulus, additive Gaussian noise, and quantized records."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError
from .quantizer import QuantizerModel, from_transitions, make_uniform, quantize

RNG_ALGORITHM = "PCG64"


@dataclass(frozen=True)
class SineParams:
    """Amplitude, normalized frequency (cycles/sample) and initial phase (rad)."""

    amplitude: float
    frequency: float
    phase: float = 0.0


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean i.i.d. Gaussian noise with standard deviation ``sigma``."""

    sigma: float
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValidationError(f"unsupported noise kind {self.kind!r}")
        if not self.sigma >= 0:
            raise ValidationError("sigma must be non-negative")

    def cdf(self, x):
        """Noise CDF F(x); a unit step (F(0) = 1) when sigma == 0."""
        x = np.asarray(x, dtype=float)
        if self.sigma == 0:
            return (x >= 0).astype(float)
        return ndtr(x / self.sigma)


@dataclass(frozen=True, eq=False)
class Record:
    """One acquisition: N output codes plus optional provenance."""

    codes: np.ndarray
    quantizer: QuantizerModel | None = None
    params: SineParams | None = None
    noise: NoiseModel | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.codes)
        if c.ndim != 1 or c.size == 0:
            raise ValidationError("record must hold a non-empty 1-D code sequence")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(c == np.round(c)):
                raise ValidationError("codes must be integers")
            c = c.astype(np.int64)
        if self.quantizer is not None:
            L = self.quantizer.code_count
            if c.min() < 0 or c.max() > L - 1:
                raise ValidationError(f"codes must lie in [0, {L - 1}]")
        c = np.array(c, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "codes", c)

    @property
    def n_samples(self) -> int:
        return self.codes.size


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def near_rational(lam: float, max_denominator: int = 20, tol: float = 1e-6) -> Fraction | None:
    """Closest p/q with q <= max_denominator when within ``tol`` of ``lam``."""
    for q in range(1, max_denominator + 1):
        p = round(lam * q)
        if abs(lam - p / q) < tol:
            return Fraction(p, q)
    return None


def check_frequency(lam: float) -> None:
    frac = near_rational(lam)
    if frac is not None:
        warnings.warn(
            f"normalized frequency {lam} is within 1e-6 of {frac}; phases cluster on "
            f"{frac.denominator} values and the phase-average model does not hold",
            RuntimeWarning,
            stacklevel=3,
        )


def unit_sine(frequency: float, phase: float, n) -> np.ndarray:
    """sin(2*pi*<frequency*n> + phase), with the fractional part taken first."""
    n = np.asarray(n, dtype=float)
    return np.sin(2 * np.pi * np.mod(frequency * n, 1.0) + phase)


def sine_value(params: SineParams, n):
    """theta * sin(2*pi*lambda*n + phi0); scalar in, float out."""
    v = params.amplitude * unit_sine(params.frequency, params.phase, n)
    return float(v) if np.ndim(v) == 0 else v


def generate_record(
    params: SineParams,
    noise: NoiseModel,
    model: QuantizerModel,
    n_samples: int,
    seed: int,
    rng: np.random.Generator | None = None,
) -> Record:
    """Quantize theta*x_n + eta_n for n = 0..N-1.

    The noise stream comes from a PCG64 generator seeded with ``seed``
    unless an explicit ``rng`` is supplied.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    check_frequency(params.frequency)
    if rng is None:
        rng = make_rng(seed)
    n = np.arange(n_samples)
    v = params.amplitude * unit_sine(params.frequency, params.phase, n)
    if noise.sigma > 0:
        v = v + noise.sigma * rng.standard_normal(n_samples)
    codes = quantize(model, v)
    return Record(codes, model, params, noise, seed)


def record_metadata(record: Record, include_transitions: bool = False) -> dict:
    q = record.quantizer
    meta = {}
    if q is not None:
        meta["bits"] = q.bits
        meta["step"] = q.step
    if record.noise is not None:
        meta["sigma"] = record.noise.sigma
    if record.params is not None:
        meta["lam"] = record.params.frequency
        meta["theta"] = record.params.amplitude
        meta["phase"] = record.params.phase
    meta["n_samples"] = record.n_samples
    if record.seed is not None:
        meta["seed"] = record.seed
        meta["rng"] = RNG_ALGORITHM
    meta.update(record.meta)
    if include_transitions and q is not None:
        meta["transitions"] = [float(v) for v in q.transitions]
    return meta


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_record(path, record: Record, include_transitions: bool = False) -> Path:
    """Write ``n,code`` CSV plus a JSON metadata sidecar; returns the sidecar path."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "code"])
        for i, c in enumerate(record.codes.tolist()):
            w.writerow([i, c])
    side = sidecar_path(path)
    meta = record_metadata(record, include_transitions)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return side


def read_record_codes(path) -> np.ndarray:
    path = Path(path)
    codes = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["n", "code"]:
            raise ValidationError(f"{path}:1: expected header 'n,code'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                n, c = int(row[0]), int(row[1])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-integer field in {row!r}") from None
            if n != len(codes):
                raise ValidationError(f"{path}:{lineno}: sample index {n} out of sequence")
            if c < 0:
                raise ValidationError(f"{path}:{lineno}: negative code {c}")
            codes.append(c)
    if not codes:
        raise ValidationError(f"{path}: no samples")
    return np.array(codes, dtype=np.int64)


def read_metadata(path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        return {}
    try:
        return json.loads(side.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{side}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def read_record(path, model: QuantizerModel | None = None) -> Record:
    """Load a record; the quantizer comes from ``model`` or the sidecar."""
    codes = read_record_codes(path)
    meta = read_metadata(path)
    if model is None:
        if "transitions" in meta:
            model = from_transitions(meta["transitions"], meta.get("step"))
        elif "bits" in meta:
            model = make_uniform(int(meta["bits"]), meta.get("step"))
    noise = NoiseModel(float(meta["sigma"])) if "sigma" in meta else None
    params = None
    if "lam" in meta:
        params = SineParams(float(meta.get("theta", math.nan)), float(meta["lam"]), float(meta.get("phase", 0.0)))
    return Record(codes, model, params, noise, meta.get("seed"))

