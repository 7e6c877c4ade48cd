import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cocyclelab import cli, io
from cocyclelab.errors import ConfigError

GOLDEN = Path(__file__).resolve().parent / "golden"
sys.path.insert(0, str(GOLDEN))
import regenerate  # noqa: E402

CONFIGS = sorted((GOLDEN / "configs").glob("*.json"))


def load(name):
    return json.loads((GOLDEN / "configs" / f"{name}.json").read_text())


def assert_close(a, b, path=""):
    if isinstance(a, dict):
        assert isinstance(b, dict) and a.keys() == b.keys(), path
        for k in a:
            assert_close(a[k], b[k], f"{path}/{k}")
    elif isinstance(a, list):
        assert isinstance(b, list) and len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            assert_close(x, y, f"{path}[{i}]")
    elif isinstance(a, float) or isinstance(b, float):
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12), path
    else:
        assert a == b, path


def csv_close(text_a, text_b):
    ra = [r.split(",") for r in text_a.strip().split("\n")]
    rb = [r.split(",") for r in text_b.strip().split("\n")]
    assert ra[0] == rb[0] and len(ra) == len(rb)
    for x, y in zip(ra[1:], rb[1:]):
        for u, v in zip(x, y):
            try:
                fu, fv = float(u), float(v)
            except ValueError:
                assert u == v
                continue
            assert fv == pytest.approx(fu, rel=1e-9, abs=1e-12) or (math.isnan(fu) and math.isnan(fv))


# goldens

@pytest.mark.parametrize("cfg", CONFIGS, ids=[c.stem for c in CONFIGS])
def test_pipeline_matches_golden(cfg, tmp_path):
    status = regenerate.run_config(cfg, tmp_path)
    exp = GOLDEN / "expected" / cfg.stem
    want = json.loads((exp / io.REPORT_NAME).read_text())
    got = regenerate.strip_report(tmp_path / io.REPORT_NAME)
    assert status == want.pop("exit_status")
    assert_close(want, json.loads(io.dumps(got)))
    for f in want["files"]:
        csv_close((exp / f).read_text(), regenerate.csv_body(tmp_path / f))


# determinism

@pytest.mark.parametrize("name", ["growth-bound", "boundedness", "uniform-time"])
def test_workers_do_not_change_results(name, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(load(name), out=str(a), workers=1)[0] == cli.run(load(name), out=str(b),
                                                                   workers=3)[0]
    ra, rb = regenerate.strip_report(a / "report.json"), regenerate.strip_report(b / "report.json")
    assert ra == rb
    for f in ra["files"]:
        assert regenerate.csv_body(a / f) == regenerate.csv_body(b / f)


def test_summary_hash_is_stable_across_reruns(tmp_path):
    hashes = []
    for rep in ("r1", "r2"):
        for name in ("closing-demo", "spectrum"):
            cli.run(load(name), out=str(tmp_path / rep / name))
        hashes.append(io.report_summary(tmp_path / rep)["summary_hash"])
    assert hashes[0] == hashes[1]


def test_seed_override_changes_hash(tmp_path):
    _, _, _, h0 = cli.resolve(load("spectrum"))
    _, _, _, h1 = cli.resolve(load("spectrum"), seed=5)
    _, _, _, h2 = cli.resolve(load("spectrum"), workers=4, out="x")
    assert h0 != h1 and h0 == h2


def test_summary_mixed_verdicts(tmp_path):
    cli.run(load("closing-demo"), out=str(tmp_path / "ok"))
    cfg = load("boundedness")
    cfg["params"]["expect"] = "unbounded"
    assert cli.run(cfg, out=str(tmp_path / "bad"))[0] == cli.EXIT_FAIL
    s = io.report_summary(tmp_path)
    assert s["verdict"] == "fail" and s["failing"] == ["boundedness"]
    assert cli.main(["summary", str(tmp_path)]) == cli.EXIT_FAIL


def test_summary_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        io.report_summary(tmp_path)
    (tmp_path / "x").mkdir()
    (tmp_path / "x" / "report.json").write_text("{not json")
    with pytest.raises(ValueError):
        io.report_summary(tmp_path)
    assert cli.main(["summary", str(tmp_path)]) == cli.EXIT_CONFIG


# config errors

@pytest.mark.parametrize("mutate", [
    lambda c: c.pop("system"),
    lambda c: c.__setitem__("bogus", 1),
    lambda c: c["generator"].__setitem__("kind", "nope"),
    lambda c: c["generator"].__setitem__("m", 0),
    lambda c: c["params"].__setitem__("points", "many"),
    lambda c: c["system"].__setitem__("transitions", [[1, 1], [1, 2]]),
])
def test_invalid_configs_exit_2(mutate, tmp_path):
    cfg = load("boundedness")
    mutate(cfg)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["boundedness", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_config_error_messages(tmp_path):
    cfg = load("spectrum")
    cfg["generator"]["m"] = 99
    with pytest.raises(ConfigError, match="generator/m"):
        io.validate_config(cfg)
    with pytest.raises(ConfigError):
        io.load_config(tmp_path / "missing.json")
    assert cli.main(["spectrum", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["transfer", "--config", str(GOLDEN / "configs" / "spectrum.json")]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_schema_subcommand(capsys):
    assert cli.main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert set(schema["required"]) == {"pipeline", "system", "generator"}


def test_console_script_runs(tmp_path):
    out = subprocess.run([sys.executable, "-m", "cocyclelab.cli", "closing-demo", "--config",
                          str(GOLDEN / "configs" / "closing-demo.json"), "--out",
                          str(tmp_path / "o")], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == str(tmp_path / "o")


def test_default_out_dir_uses_env(monkeypatch, tmp_path):
    monkeypatch.setenv(io.OUT_ENV, str(tmp_path))
    status, out_dir = cli.run(load("closing-demo"))
    assert status == 0 and Path(out_dir).parent == tmp_path
    assert Path(out_dir).name.startswith("closing-demo-")


# serialization

def test_non_finite_values_serialize():
    text = io.dumps({"a": math.inf, "b": [-math.inf, math.nan], "c": np.float64(1.5),
                     "d": np.int64(3), "e": np.bool_(True)})
    back = json.loads(text)
    assert back == {"a": "inf", "b": ["-inf", "nan"], "c": 1.5, "d": 3, "e": True}


def test_csv_roundtrip(tmp_path):
    p = tmp_path / "t.csv"
    io.write_csv(p, ["x", "flag"], [[0.1, True], [1e-300, False]])
    version, cols, rows = io.read_csv(p)
    assert version == io.FORMAT_VERSION and cols == ["x", "flag"]
    assert float(rows[0][0]) == 0.1 and float(rows[1][0]) == 1e-300 and rows[1][1] == "false"
    bad = tmp_path / "bad.csv"
    bad.write_text("x\n1\n")
    with pytest.raises(ValueError):
        io.read_csv(bad)


def test_content_hash_ignores_key_order():
    assert io.content_hash({"a": 1, "b": [1.0, 2]}) == io.content_hash({"b": [1.0, 2], "a": 1})
