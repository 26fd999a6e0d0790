"""Command-line front end: ``quantest <gen|estimate|sweep|crlb|inl|figs>``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import mvbe, sinefit
from .crlb import crlb_amplitude, fisher_information
from .errors import QuantestError, ValidationError
from .experiments import (
    FIGURES,
    QuantizerSpec,
    SweepRow,
    VarianceRow,
    emit_csv,
    load_config,
    run_bias_sweep,
    run_figure,
    run_variance_vs_crlb,
)
from .quantizer import from_transitions, read_levels, write_inl_csv
from .signal import NoiseModel, SineParams, generate_record, read_record, write_record

log = logging.getLogger("quantest")

METHODS = {
    "mvbe": "mvbe",
    "mvbe0": "mvbe_noiseless",
    "lse3": "lse3",
    "lse4": "lse4",
    "lse4mid": "lse4_midpoint",
}


@dataclass
class RecordConfig:
    """Single-record settings used by ``gen`` and ``crlb``."""

    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)
    theta: float = 0.5
    lam: float = 0.1234
    phase: float = 0.0
    sigma_over_delta: float = 0.3
    n_samples: int = 1000
    seed: int = 0

    @classmethod
    def load(cls, path) -> "RecordConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        except OSError as exc:
            raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValidationError(f"unknown config field(s): {', '.join(unknown)}")
        q = data.pop("quantizer", {})
        try:
            cfg = cls(quantizer=QuantizerSpec(**q), **data)
        except TypeError as exc:
            raise ValidationError(f"bad quantizer specification: {exc}") from None
        for name in ("theta", "lam", "phase", "sigma_over_delta"):
            v = getattr(cfg, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValidationError(f"field {name!r} must be numeric, got {v!r}")
        for name in ("n_samples", "seed"):
            v = getattr(cfg, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(f"field {name!r} must be an integer, got {v!r}")
        if cfg.n_samples < 1:
            raise ValidationError("field 'n_samples' must be >= 1")
        if cfg.sigma_over_delta < 0:
            raise ValidationError("field 'sigma_over_delta' must be non-negative")
        return cfg


def _write_json(data, out):
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    cfg = RecordConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    model = cfg.quantizer.build()
    noise = NoiseModel(cfg.sigma_over_delta * model.step)
    rec = generate_record(SineParams(cfg.theta, cfg.lam, cfg.phase), noise, model, cfg.n_samples, cfg.seed)
    side = write_record(args.out, rec, include_transitions=cfg.quantizer.kind != "uniform")
    log.info("wrote %s and %s", args.out, side)
    return 0


def _load_model(args, record):
    if args.levels:
        return from_transitions(read_levels(args.levels))
    if record.quantizer is None:
        raise ValidationError("no quantizer: pass --levels or provide a metadata sidecar")
    return record.quantizer


def cmd_estimate(args) -> int:
    rec = read_record(args.record)
    model = _load_model(args, rec)
    if rec.codes.max() >= model.code_count:
        raise ValidationError(f"record holds codes above {model.code_count - 1}")
    method = METHODS[args.method]
    report = {"record": str(args.record), "method": method, "n_samples": rec.n_samples, "bits": model.bits}
    if method.startswith("mvbe"):
        counts = mvbe.threshold_counts(rec, model.code_count)
        if method == "mvbe":
            sigma = args.sigma if args.sigma is not None else (rec.noise.sigma if rec.noise else None)
            if sigma is None:
                raise ValidationError("noise sigma unknown: pass --sigma")
            result = mvbe.estimate(counts, model, NoiseModel(sigma), theta_range=(mvbe.THETA_RANGE[0], args.theta_max))
            report["sigma"] = sigma
        else:
            result = mvbe.estimate_noiseless(counts, model)
        report.update(result.to_dict())
        report["method"] = method
    else:
        lam = args.lam if args.lam is not None else (rec.params.frequency if rec.params else None)
        mode = "midpoint" if method == "lse4_midpoint" else "nominal"
        y = sinefit.decode(rec, model, mode, args.gain)
        if method == "lse3":
            if lam is None:
                raise ValidationError("lse3 needs the frequency: pass --lam")
            fit = sinefit.fit3(y, sinefit.fold_frequency(lam))
        else:
            fit = sinefit.fit4(y, None if lam is None else sinefit.fold_frequency(lam))
        report.update(dataclasses.asdict(fit))
        report["theta_hat"] = fit.amplitude
    if args.out:
        _write_json(report, args.out)
    print(f"theta_hat = {report['theta_hat']!r}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.study == "crlb":
        emit_csv(run_variance_vs_crlb(cfg), args.out, VarianceRow)
    else:
        emit_csv(run_bias_sweep(cfg), args.out, SweepRow)
    log.info("wrote %s", args.out)
    return 0


def cmd_crlb(args) -> int:
    cfg = RecordConfig.load(args.config)
    model = cfg.quantizer.build()
    noise = NoiseModel(cfg.sigma_over_delta * model.step)
    params = SineParams(cfg.theta, cfg.lam, cfg.phase)
    info = fisher_information(params, noise, model, cfg.n_samples)
    out = {
        "theta": cfg.theta,
        "n_samples": cfg.n_samples,
        "sigma": noise.sigma,
        "fisher_information": info,
        "crlb": crlb_amplitude(params, noise, model, cfg.n_samples),
    }
    out["crlb_over_delta2"] = out["crlb"] / model.step**2
    _write_json(out, args.out)
    return 0


def cmd_inl(args) -> int:
    if args.levels:
        model = from_transitions(read_levels(args.levels))
    elif args.config:
        model = RecordConfig.load(args.config).quantizer.build()
    else:
        raise ValidationError("inl needs --levels or --config")
    write_inl_csv(args.out, model)
    return 0


def cmd_figs(args) -> int:
    paths = run_figure(args.figure, args.out, seed=args.seed if args.seed is not None else 0)
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quantest", description="Sine amplitude estimation from quantized data.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a quantized record")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("estimate", help="estimate the amplitude of a recorded sine wave")
    e.add_argument("record")
    e.add_argument("--levels")
    e.add_argument("--sigma", type=float)
    e.add_argument("--method", choices=sorted(METHODS), default="mvbe")
    e.add_argument("--lam", type=float, help="normalized frequency for the sine fits")
    e.add_argument("--gain", type=float, default=1.0)
    e.add_argument("--theta-max", type=float, default=2.0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sweep", help="Monte Carlo sweep over an amplitude grid")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--study", choices=["bias", "crlb"], default="bias")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("crlb", help="Cramér-Rao bound for one configuration")
    c.add_argument("--config", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_crlb)

    i = sub.add_parser("inl", help="export the INL profile as CSV")
    i.add_argument("--config")
    i.add_argument("--levels")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_inl)

    f = sub.add_parser("figs", help="reproduce one figure's tables")
    f.add_argument("figure", help=f"one of {', '.join(FIGURES)}")
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_figs)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except mvbe.EstimationFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        for k, reason in exc.discarded:
            print(f"  k={k}: {reason}", file=sys.stderr)
        return 2
    except (QuantestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
