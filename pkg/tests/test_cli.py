from __future__ import annotations

import csv
import json

import pytest
import yaml

from clustered_layers import cli
from clustered_layers.errors import NumericalError

DISK = {
    "problem": {"p": 4.0, "domain": {"name": "disk", "radius": 1.0}, "h": 1 / 64, "psi": "analytic"},
    "curve": {"initial": {"shape": "circle", "radius": 0.45}, "points": 128},
    "layers": {"N": 2, "eps": [0.04, 0.035, 0.03, 0.025, 0.02], "order": 1},
}


def _write(tmp_path, cfg, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def _rows(path):
    with path.open() as fh:
        first = fh.readline()
        assert first.startswith("# config_hash=")
        return list(csv.DictReader(fh))


def _main(cfg_path, out, command, *extra):
    return cli.main([command, "--config", str(cfg_path), "--out", str(out), *extra])


# ------------------------------------------------------------ config ---- #
def test_p_below_three_allowed_without_layers(tmp_path):
    cfg = _write(tmp_path, {"problem": {"p": 1.5}})
    assert cli.load_config(cfg).problem["p"] == 1.5


def test_p_below_three_rejected_with_layers(tmp_path, capsys):
    cfg = _write(tmp_path, {"problem": {"p": 1.5}, "layers": {"N": 1, "eps": [0.05]}})
    assert _main(cfg, tmp_path / "o", "profile") == 2
    assert "p > 3" in capsys.readouterr().err


@pytest.mark.parametrize(
    "raw,needle",
    [
        ({"problem": {"p": 0.5}}, "exceed 1"),
        ({"problem": {"p": 4.0}, "layers": {"N": 2, "eps": [0.02, 0.03]}}, "strictly decreasing"),
        ({"problem": {"p": 4.0}, "extra": {}}, "unknown config blocks"),
        ({"layers": {"N": 1, "eps": [0.1]}}, "problem"),
        ({"problem": {"p": 4.0}, "toda": {"convention": "other"}}, "convention"),
        ({"problem": {"p": 4.0, "psi": "analytic", "domain": {"name": "square"}}}, "analytic"),
    ],
)
def test_config_validation(raw, needle):
    with pytest.raises(cli.ValidationError, match=needle):
        cli.ExperimentConfig.from_dict(raw)


def test_missing_or_broken_file(tmp_path):
    assert _main(tmp_path / "nope.yaml", tmp_path / "o", "profile") == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("problem: [unclosed")
    assert _main(bad, tmp_path / "o", "profile") == 2


def test_bad_thread_count(tmp_path):
    cfg = _write(tmp_path, {"problem": {"p": 2.0}})
    assert _main(cfg, tmp_path / "o", "profile", "--threads", "0") == 2


def test_hash_depends_on_seed_and_content():
    a = cli.ExperimentConfig.from_dict({"problem": {"p": 4.0}})
    b = cli.ExperimentConfig.from_dict({"problem": {"p": 4.0}}, seed=1)
    c = cli.ExperimentConfig.from_dict({"problem": {"p": 4.0, "h": 0.02}})
    assert len({a.hash, b.hash, c.hash}) == 3
    assert a.hash == cli.ExperimentConfig.from_dict({"problem": {"p": 4.0}}).hash


# ----------------------------------------------------------- profile ---- #
def test_profile_row_and_determinism(tmp_path):
    cfg = _write(tmp_path, {"problem": {"p": 2.0}, "profile": {"exponents": [2.0, 4.0]}})
    assert _main(cfg, tmp_path / "a", "profile") == 0
    assert _main(cfg, tmp_path / "b", "profile") == 0
    first = (tmp_path / "a" / "profile.csv").read_bytes()
    assert first == (tmp_path / "b" / "profile.csv").read_bytes()
    rows = _rows(tmp_path / "a" / "profile.csv")
    assert float(rows[0]["p"]) == 2.0
    assert abs(float(rows[0]["w_center"]) - 3.0) < 1e-8
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["commands"]["profile"]["files"] == ["profile.csv", "profile.json"]
    assert "numpy" in manifest["versions"]


def test_profile_accepts_p_one_and_a_half(tmp_path):
    cfg = _write(tmp_path, {"problem": {"p": 1.5}})
    assert _main(cfg, tmp_path / "o", "profile") == 0
    row = _rows(tmp_path / "o" / "profile.csv")[0]
    assert float(row["w_center"]) > 1.0 and float(row["alpha_fit"]) > 0


def test_mixed_provenance_rejected(tmp_path, capsys):
    out = tmp_path / "o"
    assert _main(_write(tmp_path, {"problem": {"p": 2.0}}, "a.yaml"), out, "profile") == 0
    assert _main(_write(tmp_path, {"problem": {"p": 3.0}}, "b.yaml"), out, "profile") == 2
    assert "belongs to config" in capsys.readouterr().err
    # the same config may add more products to its own directory
    assert _main(tmp_path / "a.yaml", out, "profile") == 0


def test_partial_outputs_removed(tmp_path, monkeypatch):
    def failing(pipe, out):
        out.csv("half.csv", ["a"], [[1.0]])
        raise NumericalError("boom")

    monkeypatch.setitem(cli.HANDLERS, "profile", failing)
    cfg = _write(tmp_path, {"problem": {"p": 2.0}})
    assert _main(cfg, tmp_path / "o", "profile") == 3
    assert not (tmp_path / "o" / "half.csv").exists()


# ------------------------------------------------------- layer runs ---- #
def test_assemble_requires_curve_block(tmp_path, capsys):
    cfg = dict(DISK)
    cfg.pop("curve")
    assert _main(_write(tmp_path, cfg), tmp_path / "o", "assemble") == 2
    assert "'curve'" in capsys.readouterr().err


def test_toda_marks_resonant_rows(tmp_path):
    assert _main(_write(tmp_path, DISK), tmp_path / "o", "toda") == 0
    rows = {float(r["eps"]): r["status"] for r in _rows(tmp_path / "o" / "toda.csv")}
    assert rows[0.04] == "resonant"
    assert rows[0.03] == "ok"


def test_all_resonant_assemble_exits_four(tmp_path):
    cfg = {**DISK, "layers": {"N": 2, "eps": [0.04]}}
    assert _main(_write(tmp_path, cfg), tmp_path / "o", "assemble") == 4
    assert not any(f.suffix == ".csv" for f in (tmp_path / "o").glob("*"))


def test_sweep_and_provenance_of_every_file(tmp_path):
    out = tmp_path / "o"
    path = _write(tmp_path, DISK)
    for command in ("geometry", "field", "sweep"):
        assert _main(path, out, command) == 0
    rows = _rows(out / "sweep.csv")
    ok = [r for r in rows if r["status"] == "ok"]
    assert len(ok) >= 4
    report = json.loads((out / "sweep.json").read_text())
    assert report["slopes"]["1"] >= report["slopes"]["0"] + 0.3
    geo = json.loads((out / "geometry.json").read_text())
    assert abs(geo["mean_radius"] - 0.54947) < 1e-4
    h = cli.load_config(path).hash
    for f in out.iterdir():
        if f.suffix == ".json":
            assert json.loads(f.read_text())["config_hash"] == h
        else:
            assert f.read_text().startswith(f"# config_hash={h}")


def test_assemble_with_newton(tmp_path):
    cfg = {
        **DISK,
        "problem": {**DISK["problem"], "h": 1 / 128},
        "layers": {"N": 1, "eps": [0.05], "order": 1, "newton": True},
    }
    assert _main(_write(tmp_path, cfg), tmp_path / "o", "assemble") == 0
    rep = json.loads((tmp_path / "o" / "assemble.json").read_text())["reports"][0]
    assert rep["census"] == 1 and rep["newton_history"][-1] < 1e-10
    assert (tmp_path / "o" / "solution_eps0.05.csv").exists()
