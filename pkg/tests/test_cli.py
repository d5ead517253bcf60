import json
from pathlib import Path

import jsonschema
import pytest

from broadcast_stability.cli import main
from broadcast_stability.reproduce import load_reference

ROOT = Path(__file__).resolve().parents[1]
SCHEMA = json.loads((ROOT / "schemas" / "config.schema.json").read_text())


def write(tmp_path, doc, name="cfg.json"):
    f = tmp_path / name
    f.write_text(json.dumps(doc))
    return f


COLLISION = {"model": "collision", "n_sources": 3, "m_destinations": 2, "q_solo": 0.8}
MPR = {"model": "mpr2x2", "q_solo": [[0.8, 0.6], [0.5, 0.7]], "q_joint": [[0.1, 0.05], [0.05, 0.25]]}


@pytest.mark.parametrize("path", sorted((ROOT / "configs").glob("*.json")), ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    jsonschema.validate(json.loads(path.read_text()), SCHEMA)


def test_rates_csv(tmp_path):
    cfg = write(tmp_path, {"channel": COLLISION, "p": [0.3, 0.3, 0.3]})
    assert main(["rates", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "rates.csv").read_text().splitlines()
    assert lines[0].startswith("# channel:")
    rows = [ln.split(",") for ln in lines if not ln.startswith("#")]
    assert rows[0] == ["policy", "source", "p", "mu_b", "mu_e"]
    assert float(rows[1][3]) == pytest.approx(0.3 * 0.49 * 0.685714, abs=1e-6)
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["subcommand"] == "rates" and manifest["files"] == ["rates.csv"]
    assert manifest["version"]


def test_region2_single_point(tmp_path):
    cfg = write(tmp_path, {"channel": MPR, "kind": "stability-exact", "lambda1": [0.1]})
    jsonschema.validate(json.loads(cfg.read_text()), SCHEMA)
    assert main(["region2", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = [ln for ln in (tmp_path / "o" / "region2_stability-exact.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(rows) == 2


def test_bounds_and_byte_identical_rerun(tmp_path):
    cfg = write(tmp_path, {"channel": COLLISION, "rows": [[0.05, 0.05]], "solver": {"samples": 128}})
    for out in ("a", "b"):
        assert main(["bounds", "--config", str(cfg), "--out", str(tmp_path / out), "--seed", "3"]) == 0
    a = (tmp_path / "a" / "bounds.csv").read_bytes()
    assert a == (tmp_path / "b" / "bounds.csv").read_bytes()
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["solver"]["seed"] == 3 and m["solver"]["samples"] == 128


def test_simulate_with_trace(tmp_path):
    doc = {"channel": COLLISION, "lam": [0.05, 0.05, 0.05], "p": [0.3, 0.3, 0.3], "trace_stride": 100}
    cfg = write(tmp_path, doc)
    jsonschema.validate(doc, SCHEMA)
    for out in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / out), "--horizon", "20000", "--seed", "1"]) == 0
    for f in ("simulate.csv", "trace.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    trace = [ln for ln in (tmp_path / "a" / "trace.csv").read_text().splitlines() if not ln.startswith("#")]
    assert trace[0] == "slot,Q1,Q2,Q3" and len(trace) == 201


@pytest.mark.parametrize(
    "doc, argv",
    [
        ({"channel": {"model": "collision", "n_sources": 2, "m_destinations": 2, "q_solo": [0.8, 0.0]}, "p": [0.5, 0.5]}, ["rates"]),
        ({"channel": {"model": "mpr2x2", "q_solo": [[0.5, 0.5], [0.5, 0.5]], "q_joint": [[0.9, 0.1], [0.1, 0.1]]}, "p": [0.5, 0.5]}, ["rates"]),
        ({"channel": COLLISION}, ["rates"]),
        ({"channel": MPR, "rows": [[0.1]]}, ["bounds"]),
        ({"channel": COLLISION, "lam": [0.1, 0.1, 1.5], "p": [0.5, 0.5, 0.5]}, ["simulate"]),
        ({"channel": COLLISION, "solver": {"speed": 3}}, ["reproduce", "table3"]),
        ({"channel": MPR, "lambda1": [0.1], "kind": "stability-lower"}, ["region2"]),
    ],
)
def test_invalid_input_exit_code(tmp_path, doc, argv):
    cfg = write(tmp_path, doc)
    assert main(argv + ["--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_unreadable_config_and_bad_flags(tmp_path):
    assert main(["rates", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["rates", "--config", str(bad)]) == 2
    assert main(["rates", "--seed", "-1"]) == 2
    assert main(["nonsense"]) == 2


def test_reference_data():
    t2, t3 = load_reference("table2"), load_reference("table3")
    assert len(t2) == 12 and len(t3) == 8
    assert t3[0].values == {"stability-upper": 0.2078, "stability-lower": 0.1939, "throughput": 0.1939}
    assert all(len(r.fixed) == r.channel.n_sources - 1 for r in t2 + t3)


def test_reproduce_table2(tmp_path, capsys):
    assert main(["reproduce", "table2", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "table2.csv").read_text()
    assert '# pass: true' in text
    rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert len(rows) == 13
    assert "PASS" in capsys.readouterr().out


def test_reproduce_fig4(tmp_path):
    assert main(["reproduce", "fig4", "--grid", "10", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.glob("fig4_*.csv")) == ["fig4_M15.csv", "fig4_M2.csv", "fig4_M5.csv"]
