"""
Monte Carlo harness: bias sweeps, variance against the Cramér-Rao bound,
and the phase-average approximation error e(N, R).

Record ``r`` of every amplitude cell uses the PCG64 stream seeded with
``seed + r``; when the phase policy is ``random`` the initial phase is the
first draw of that stream. Results never depend on thread scheduling.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import mvbe, sinefit
from .crlb import crlb_amplitude
from .errors import ConvergenceError, EstimationFailed, IllConditionedError, QuantestError, ValidationError
from .quantizer import QuantizerModel, from_transitions, make_resistor_ladder, make_uniform, read_levels, write_inl_csv
from .signal import NoiseModel, SineParams, generate_record, make_rng, unit_sine

ESTIMATORS = ("lse3", "lse4", "lse4_midpoint", "mvbe", "mvbe_noiseless")
PHASE_POLICIES = ("fixed", "random")


def max_workers() -> int:
    env = os.environ.get("QUANTEST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"QUANTEST_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _pmap(fn, items):
    items = list(items)
    workers = min(max_workers(), len(items)) if items else 1
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class QuantizerSpec:
    kind: str = "uniform"
    bits: int = 10
    step: float | None = None
    relative_sigma: float = 0.03
    ladder_seed: int = 0
    full_scale: list = field(default_factory=lambda: [-1.0, 1.0])
    path: str | None = None

    def build(self) -> QuantizerModel:
        if self.kind == "uniform":
            return make_uniform(self.bits, self.step)
        if self.kind == "ladder":
            return make_resistor_ladder(self.bits, tuple(self.full_scale), self.relative_sigma, self.ladder_seed)
        if self.kind == "file":
            if not self.path:
                raise ValidationError("quantizer.path is required for kind 'file'")
            return from_transitions(read_levels(self.path), self.step)
        raise ValidationError(f"quantizer.kind must be uniform, ladder or file, got {self.kind!r}")


@dataclass
class ExperimentConfig:
    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)
    theta_grid: list = field(default_factory=lambda: [0.5])
    lam: float = 0.1234
    phase_policy: str = "fixed"
    phase: float = 0.0
    sigma_over_delta: float = 0.3
    n_samples: int = 2000
    n_records: int = 100
    seed: int = 0
    estimators: list = field(default_factory=lambda: ["lse3", "mvbe"])
    gain: float = 1.0
    discard_threshold: float = mvbe.DISCARD_THRESHOLD
    theta_max: float = 2.0
    weighting: str = "mean"

    def validate(self):
        if self.n_records < 1:
            raise ValidationError("n_records must be >= 1")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if self.phase_policy not in PHASE_POLICIES:
            raise ValidationError(f"phase_policy must be one of {PHASE_POLICIES}")
        if self.sigma_over_delta < 0:
            raise ValidationError("sigma_over_delta must be non-negative")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ValidationError(f"estimators: unknown {bad}; valid are {list(ESTIMATORS)}")
        if not self.theta_grid:
            raise ValidationError("theta_grid must not be empty")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValidationError(f"unknown config field(s): {', '.join(unknown)}")
        q = data.pop("quantizer", {})
        if isinstance(q, dict):
            qnames = {f.name for f in dataclasses.fields(QuantizerSpec)}
            bad = sorted(set(q) - qnames)
            if bad:
                raise ValidationError(f"unknown quantizer field(s): {', '.join(bad)}")
            q = QuantizerSpec(**q)
        cfg = cls(quantizer=q, **data)
        typed = {
            "lam": float, "phase": float, "sigma_over_delta": float, "gain": float,
            "discard_threshold": float, "theta_max": float, "n_samples": int, "n_records": int, "seed": int,
        }
        for name, typ in typed.items():
            value = getattr(cfg, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"field {name!r} must be numeric, got {value!r}")
            if typ is int and value != int(value):
                raise ValidationError(f"field {name!r} must be an integer, got {value!r}")
            setattr(cfg, name, typ(value))
        cfg.theta_grid = [float(t) for t in cfg.theta_grid]
        return cfg.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# rows


@dataclass
class SweepRow:
    theta_true: float
    estimator: str
    mean_estimate: float
    bias: float
    bias_over_delta: float
    abs_error_over_delta: float
    std_dev: float
    records_used: int
    failures: int
    flag: str = ""


@dataclass
class VarianceRow:
    theta_true: float
    theta_over_delta: float
    estimator: str
    variance: float
    crlb: float
    ratio: float
    records_used: int
    failures: int


@dataclass
class ErrorRow:
    N: int
    R: int
    seed: int
    g: float
    e: float


# ---------------------------------------------------------------------------
# per-record work


def run_estimator(name: str, record, model: QuantizerModel, noise: NoiseModel, cfg: ExperimentConfig) -> float:
    """One named estimator on one record; raises a QuantestError on failure."""
    if name.startswith("lse"):
        lam = sinefit.fold_frequency(cfg.lam)
        mode = "midpoint" if name == "lse4_midpoint" else "nominal"
        y = sinefit.decode(record, model, mode, cfg.gain)
        fit = sinefit.fit3(y, lam) if name == "lse3" else sinefit.fit4(y, lam)
        return fit.amplitude
    counts = mvbe.threshold_counts(record, model.code_count)
    if name == "mvbe":
        res = mvbe.estimate(
            counts, model, noise,
            discard_threshold=cfg.discard_threshold,
            theta_range=(mvbe.THETA_RANGE[0], cfg.theta_max),
            weighting=cfg.weighting,
        )
    elif name == "mvbe_noiseless":
        res = mvbe.estimate_noiseless(counts, model, discard_threshold=cfg.discard_threshold)
    else:
        raise ValidationError(f"unknown estimator {name!r}")
    return res.theta_hat


def _record_phase(cfg, rng):
    if cfg.phase_policy == "random":
        return float(rng.uniform(0.0, 2 * np.pi))
    return cfg.phase


def _simulate_cell(cfg, model, noise, theta, r):
    rng = make_rng(cfg.seed + r)
    phase = _record_phase(cfg, rng)
    params = SineParams(theta, cfg.lam, phase)
    rec = generate_record(params, noise, model, cfg.n_samples, cfg.seed + r, rng=rng)
    out = {}
    for name in cfg.estimators:
        try:
            out[name] = run_estimator(name, rec, model, noise, cfg)
        except (EstimationFailed, IllConditionedError, ConvergenceError):
            out[name] = None
    return phase, out


def _check_grid(cfg, model):
    over = [t for t in cfg.theta_grid if t >= model.overload_bound]
    if over:
        warnings.warn(
            f"theta values {over} reach the overload bound {model.overload_bound:.6g}",
            RuntimeWarning,
            stacklevel=3,
        )


def _simulate(cfg: ExperimentConfig):
    cfg.validate()
    model = cfg.quantizer.build()
    _check_grid(cfg, model)
    noise = NoiseModel(cfg.sigma_over_delta * model.step)
    thetas = sorted(cfg.theta_grid)
    tasks = [(t, r) for t in thetas for r in range(cfg.n_records)]
    with warnings.catch_warnings():
        # one frequency warning per run is enough
        warnings.simplefilter("once", RuntimeWarning)
        results = _pmap(lambda tr: _simulate_cell(cfg, model, noise, tr[0], tr[1]), tasks)
    by_theta = {t: [] for t in thetas}
    for (t, _), res in zip(tasks, results):
        by_theta[t].append(res)
    return model, noise, by_theta


def _mean(values):
    return math.fsum(values) / len(values)


def _sample_var(values):
    if len(values) < 2:
        return math.nan
    m = _mean(values)
    return math.fsum((v - m) ** 2 for v in values) / (len(values) - 1)


def run_bias_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    """Bias and spread of every configured estimator over the amplitude grid."""
    model, _, by_theta = _simulate(cfg)
    delta = model.step
    rows = []
    for theta, results in by_theta.items():
        for name in sorted(cfg.estimators):
            vals = [est[name] for _, est in results if est[name] is not None]
            fails = len(results) - len(vals)
            if vals:
                m = _mean(vals)
                abs_err = _mean([abs(v - theta) for v in vals]) / delta
                rows.append(SweepRow(theta, name, m, m - theta, (m - theta) / delta, abs_err,
                                     math.sqrt(_sample_var(vals)) if len(vals) > 1 else math.nan,
                                     len(vals), fails))
            else:
                nan = math.nan
                rows.append(SweepRow(theta, name, nan, nan, nan, nan, nan, 0, fails, "all_failed"))
    return rows


def run_variance_vs_crlb(cfg: ExperimentConfig) -> list[VarianceRow]:
    """Empirical estimator variance divided by the amplitude CRLB."""
    if not cfg.sigma_over_delta > 0:
        raise ValidationError("variance study needs sigma_over_delta > 0")
    model, noise, by_theta = _simulate(cfg)
    rows = []
    for theta, results in by_theta.items():
        phases = sorted({ph for ph, _ in results}) if cfg.phase_policy == "random" else [cfg.phase]
        bounds = [crlb_amplitude(SineParams(theta, cfg.lam, ph), noise, model, cfg.n_samples) for ph in phases]
        bound = _mean(bounds)
        for name in sorted(cfg.estimators):
            vals = [est[name] for _, est in results if est[name] is not None]
            var = _sample_var(vals)
            rows.append(VarianceRow(theta, theta / model.step, name, var, bound, var / bound,
                                    len(vals), len(results) - len(vals)))
    return rows


def approximation_error(
    N_grid,
    R_grid,
    T: float,
    theta: float,
    noise: NoiseModel,
    lam: float,
    seed: int,
    phase: float = 0.0,
    direct: bool = False,
) -> list[ErrorRow]:
    """|g - (1/NR) sum_i Z_{N,i}| for fixed-phase records of N samples.

    With a fixed phase the R records share x_n, so the count summed over
    records at sample n is Binomial(R, p_n); that draw replaces the explicit
    loop over records unless ``direct`` is set.
    """
    g = mvbe.crossing_probability(theta, T, noise)
    rows = []
    for N in N_grid:
        N = int(N)
        x = unit_sine(lam, phase, np.arange(N))
        if noise.sigma > 0:
            p = ndtr((theta * x - T) / noise.sigma)
        else:
            p = (theta * x > T).astype(float)
        for R in R_grid:
            R = int(R)
            rng = make_rng([seed, N, R])
            if direct:
                total = 0
                for _ in range(R):
                    eta = noise.sigma * rng.standard_normal(N)
                    total += int(np.count_nonzero(theta * x + eta > T))
            else:
                total = int(rng.binomial(R, p).sum())
            rows.append(ErrorRow(N, R, seed, g, abs(g - total / (N * R))))
    return rows


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _sort_key(row):
    d = dataclasses.asdict(row)
    return tuple(d[k] for k in ("theta_true", "estimator", "N", "R", "seed") if k in d)


def emit_csv(rows, path, row_type=None) -> Path:
    """Write dataclass rows as UTF-8 CSV with one header row.

    Rows are sorted by amplitude then estimator name (or N, R for error
    tables). ``row_type`` supplies the header when ``rows`` is empty.
    """
    path = Path(path)
    rows = list(rows)
    if row_type is None:
        if not rows:
            raise ValueError("row_type is required for an empty table")
        row_type = type(rows[0])
    names = [f.name for f in dataclasses.fields(row_type)]
    rows.sort(key=_sort_key)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in rows:
                d = dataclasses.asdict(row)
                w.writerow([_fmt(d[n]) for n in names])
    except OSError as exc:
        raise QuantestError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


# ---------------------------------------------------------------------------
# figure bundles

FIG3_LAMBDA = math.sqrt(2) - 1
FIG3_SIGMA = 0.1
FIG3_N_GRID = (1000, 2000, 5000, 10000, 20000, 40000, 60000, 80000, 100000, 120000)
FIG3_R_GRID = (1000, 50000)
FIG4_LADDER_SEED = 20150401
FIG2_LADDER_SEED = 20150402


def figure_configs(fig_id: str, seed: int = 0) -> dict:
    """Preloaded parameter bundles keyed by output file stem."""
    if fig_id == "fig2":
        base = dict(
            theta_grid=list(np.linspace(0.1, 0.9, 20)),
            lam=0.1234, phase_policy="random", sigma_over_delta=0.3,
            n_samples=2000, n_records=100, seed=seed, estimators=["lse3"],
        )
        return {
            "fig2a_bias": ExperimentConfig(quantizer=QuantizerSpec("uniform", 10), **base),
            "fig2c_bias": ExperimentConfig(
                quantizer=QuantizerSpec("ladder", 10, ladder_seed=FIG2_LADDER_SEED), **base
            ),
        }
    if fig_id == "fig4":
        N = 32193
        return {
            "fig4_bias": ExperimentConfig(
                quantizer=QuantizerSpec("ladder", 12, ladder_seed=FIG4_LADDER_SEED),
                theta_grid=list(np.linspace(0.05, 1.0, 20)),
                lam=1050 * math.pi / N, phase_policy="fixed", phase=0.0, sigma_over_delta=0.21,
                n_samples=N, n_records=10, seed=seed,
                estimators=["lse4", "lse4_midpoint", "mvbe", "mvbe_noiseless"],
            )
        }
    if fig_id == "fig5":
        return {
            "fig5_bias": ExperimentConfig(
                quantizer=QuantizerSpec("uniform", 2),
                theta_grid=list(np.linspace(0.4, 0.95, 12)),
                lam=0.723457, phase_policy="fixed", phase=0.4876, sigma_over_delta=0.12,
                n_samples=106777, n_records=10, seed=seed, estimators=["lse3", "mvbe"],
            )
        }
    if fig_id == "fig6":
        delta = 2.0 / 256
        return {
            "fig6_variance": ExperimentConfig(
                quantizer=QuantizerSpec("uniform", 8),
                theta_grid=list(delta * np.linspace(1.0, 10.0, 19)),
                lam=0.1234, phase_policy="fixed", phase=0.0, sigma_over_delta=0.2,
                n_samples=1000, n_records=100, seed=seed, estimators=["lse3", "mvbe"],
            )
        }
    raise ValidationError(f"unknown figure {fig_id!r}; valid ids are {', '.join(FIGURES)}")


FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6")
_INL_FILES = {"fig2c_bias": "fig2b_inl", "fig4_bias": "fig4_inl"}


def run_figure(fig_id: str, out_dir, seed: int = 0) -> list[Path]:
    """Write the CSV set for one figure; returns the written paths."""
    if fig_id not in FIGURES:
        raise ValidationError(f"unknown figure {fig_id!r}; valid ids are {', '.join(FIGURES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fig_id == "fig3":
        rows = approximation_error(FIG3_N_GRID, FIG3_R_GRID, 1.0, 1.0, NoiseModel(FIG3_SIGMA), FIG3_LAMBDA, seed)
        written.append(emit_csv(rows, out / "fig3_error.csv", ErrorRow))
        return written
    for stem, cfg in figure_configs(fig_id, seed).items():
        if fig_id == "fig6":
            written.append(emit_csv(run_variance_vs_crlb(cfg), out / f"{stem}.csv", VarianceRow))
        else:
            written.append(emit_csv(run_bias_sweep(cfg), out / f"{stem}.csv", SweepRow))
        if stem in _INL_FILES:
            inl_path = out / f"{_INL_FILES[stem]}.csv"
            write_inl_csv(inl_path, cfg.quantizer.build())
            written.append(inl_path)
    return written
