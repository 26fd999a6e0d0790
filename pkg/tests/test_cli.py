import csv
import json

import numpy as np
import pytest

from quantest.cli import main
from quantest.mvbe import estimate, threshold_counts
from quantest.signal import NoiseModel, SineParams, generate_record, read_metadata, read_record
from quantest.quantizer import make_resistor_ladder, make_uniform


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def two_bit_cfg(tmp_path):
    return write_json(
        tmp_path / "gen.json",
        {"quantizer": {"kind": "uniform", "bits": 2}, "theta": 0.9, "n_samples": 1000, "seed": 1,
         "lam": 0.723457, "phase": 0.4876, "sigma_over_delta": 0.12},
    )


def test_gen_minimal(tmp_path, two_bit_cfg):
    out = tmp_path / "rec.csv"
    assert main(["gen", "--config", two_bit_cfg, "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,code" and len(lines) == 1001
    first = (out.read_bytes(), (tmp_path / "rec.meta.json").read_bytes())
    assert main(["gen", "--config", two_bit_cfg, "--out", str(out)]) == 0
    assert (out.read_bytes(), (tmp_path / "rec.meta.json").read_bytes()) == first


def test_gen_seed_override(tmp_path, two_bit_cfg):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["gen", "--config", two_bit_cfg, "--out", str(a)])
    main(["gen", "--config", two_bit_cfg, "--out", str(b), "--seed", "2"])
    assert a.read_bytes() != b.read_bytes()
    assert read_metadata(b)["seed"] == 2


def test_gen_bad_config(tmp_path, capsys):
    cfg = write_json(tmp_path / "g.json", {"theta": 0.5, "n_sample": 10})
    assert main(["gen", "--config", cfg, "--out", str(tmp_path / "r.csv")]) == 1
    assert "n_sample" in capsys.readouterr().err


def test_ladder_record_replay_matches_in_process(tmp_path, capsys):
    cfg = write_json(
        tmp_path / "gen.json",
        {"quantizer": {"kind": "ladder", "bits": 12, "ladder_seed": 7}, "theta": 0.6, "n_samples": 8000,
         "seed": 3, "lam": 0.1234, "sigma_over_delta": 0.21},
    )
    rec_path = tmp_path / "rec.csv"
    assert main(["gen", "--config", cfg, "--out", str(rec_path)]) == 0
    meta = read_metadata(rec_path)
    model = make_resistor_ladder(12, seed=7)
    assert meta["transitions"] == model.transitions.tolist()

    report = tmp_path / "rep.json"
    assert main(["estimate", str(rec_path), "--out", str(report)]) == 0
    printed = capsys.readouterr().out
    data = json.loads(report.read_text())
    noise = NoiseModel(0.21 * model.step)
    rec = generate_record(SineParams(0.6, 0.1234), noise, model, 8000, seed=3)
    direct = estimate(threshold_counts(rec), model, noise, theta_range=(1e-6, 2.0))
    assert data["theta_hat"] == direct.theta_hat
    assert repr(direct.theta_hat) in printed
    assert data["M"] == direct.M
    assert {"per_threshold", "discarded", "method"} <= set(data)


def test_estimate_with_levels_file(tmp_path):
    model = make_uniform(4)
    levels = tmp_path / "levels.txt"
    levels.write_text("\n".join(repr(v) for v in model.transitions.tolist()) + "\n")
    rec = generate_record(SineParams(0.7, 0.1234), NoiseModel(0.01), model, 3000, seed=0)
    path = tmp_path / "r.csv"
    path.write_text("n,code\n" + "".join(f"{i},{c}\n" for i, c in enumerate(rec.codes)))
    rep = tmp_path / "rep.json"
    for method in ("mvbe", "mvbe0", "lse3", "lse4", "lse4mid"):
        args = ["estimate", str(path), "--levels", str(levels), "--sigma", "0.01", "--lam", "0.1234",
                "--method", method, "--out", str(rep)]
        assert main(args) == 0
        assert json.loads(rep.read_text())["theta_hat"] == pytest.approx(0.7, abs=0.02)


def test_estimate_failure_exit(tmp_path, capsys):
    path = tmp_path / "flat.csv"
    path.write_text("n,code\n" + "".join(f"{i},0\n" for i in range(50)))
    levels = tmp_path / "lv.txt"
    levels.write_text("-0.5\n0\n0.5\n")
    rc = main(["estimate", str(path), "--levels", str(levels), "--sigma", "0.01"])
    err = capsys.readouterr().err
    assert rc == 2
    assert "saturated_zero" in err and "k=3" in err


def test_estimate_parse_errors(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("n,code\n0,1\n1,one\n")
    assert main(["estimate", str(path), "--sigma", "0.1"]) == 1
    assert ":3" in capsys.readouterr().err
    good = tmp_path / "good.csv"
    good.write_text("n,code\n0,1\n1,2\n")
    levels = tmp_path / "lv.txt"
    levels.write_text("0.1\n0.2\nzero\n")
    assert main(["estimate", str(good), "--levels", str(levels), "--sigma", "0.1"]) == 1
    assert ":3" in capsys.readouterr().err
    assert main(["estimate", str(good), "--sigma", "0.1"]) == 1
    assert "--levels" in capsys.readouterr().err


def test_fig5_bundle_via_files(tmp_path):
    cfg = write_json(
        tmp_path / "gen.json",
        {"quantizer": {"kind": "uniform", "bits": 2}, "theta": 0.9, "n_samples": 106777, "seed": 11,
         "lam": 0.723457, "phase": 0.4876, "sigma_over_delta": 0.12},
    )
    rec = tmp_path / "r.csv"
    rep = tmp_path / "rep.json"
    assert main(["gen", "--config", cfg, "--out", str(rec)]) == 0
    assert main(["estimate", str(rec), "--out", str(rep)]) == 0
    assert abs(json.loads(rep.read_text())["theta_hat"] - 0.9) <= 0.05 * 0.5


def test_crlb_and_inl(tmp_path):
    cfg = write_json(
        tmp_path / "c.json",
        {"quantizer": {"kind": "uniform", "bits": 8}, "theta": 0.03, "n_samples": 1000, "sigma_over_delta": 0.2},
    )
    out = tmp_path / "crlb.json"
    assert main(["crlb", "--config", cfg, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["crlb"] == pytest.approx(1 / data["fisher_information"])
    assert data["crlb_over_delta2"] == pytest.approx(data["crlb"] / (2 / 256) ** 2)
    inl_out = tmp_path / "inl.csv"
    assert main(["inl", "--config", cfg, "--out", str(inl_out)]) == 0
    rows = list(csv.DictReader(inl_out.open()))
    assert len(rows) == 255 and all(float(r["inl_lsb"]) == 0.0 for r in rows)
    assert main(["inl", "--out", str(inl_out)]) == 1


def test_sweep(tmp_path):
    cfg = write_json(
        tmp_path / "s.json",
        {"quantizer": {"kind": "uniform", "bits": 6}, "theta_grid": [0.4], "n_samples": 400, "n_records": 4,
         "estimators": ["lse3", "mvbe"]},
    )
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["estimator"] for r in rows] == ["lse3", "mvbe"]
    out2 = tmp_path / "var.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out2), "--study", "crlb"]) == 0
    assert "ratio" in out2.read_text().splitlines()[0]


def test_figs_unknown(tmp_path, capsys):
    assert main(["figs", "fig9", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    for fid in ("fig2", "fig3", "fig4", "fig5", "fig6"):
        assert fid in err


def test_figs_fig5_schema(tmp_path):
    with pytest.warns(RuntimeWarning, match="overload"):
        assert main(["figs", "fig5", "--out", str(tmp_path)]) == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["fig5_bias.csv"]
    rows = list(csv.DictReader((tmp_path / "fig5_bias.csv").open()))
    assert {r["estimator"] for r in rows} == {"lse3", "mvbe"}
    assert "bias_over_delta" in rows[0]
    assert len(rows) == 24


def test_figs_fig3(tmp_path):
    assert main(["figs", "fig3", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "fig3_error.csv").open()))
    assert sorted({int(r["R"]) for r in rows}) == [1000, 50000]
    assert np.all(np.array([float(r["e"]) for r in rows]) >= 0)


def test_write_failure_exit(tmp_path, two_bit_cfg):
    assert main(["gen", "--config", two_bit_cfg, "--out", str(tmp_path / "no" / "r.csv")]) == 1


def test_read_record_uses_sidecar(tmp_path, two_bit_cfg):
    out = tmp_path / "rec.csv"
    main(["gen", "--config", two_bit_cfg, "--out", str(out)])
    rec = read_record(out)
    assert rec.quantizer == make_uniform(2)
    assert rec.params.frequency == 0.723457
