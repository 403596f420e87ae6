import json

from trifactor.cli import main

from test_harness import MINIMAL


def write(tmp_path, text, name="s.scenario"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", write(tmp_path, MINIMAL)]) == 0
    assert capsys.readouterr().out.strip() == "OK"


def test_validate_errors_exit_2(tmp_path, capsys):
    assert main(["validate", write(tmp_path, "nodecount = 3\n")]) == 2
    assert "nodecount" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.scenario")]) == 2
    assert main(["validate", write(tmp_path, MINIMAL), "--override", "duration=-1"]) == 2


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["trace", "diamond.scenario"]) == 2   # --seed is required


def test_run_seeds(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, MINIMAL), "--out", str(out), "--seeds", "5"]) == 0
    lines = (out / "runs.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 5
    assert (out / "summary.csv").exists()
    assert (out / "trust_events" / "TripleFactor_5.csv").exists()


def test_run_override(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, MINIMAL), "--out", str(out), "--seeds", "1",
                 "--override", 'security_mode="Baseline"']) == 0
    assert len((out / "runs.csv").read_text().splitlines()) == 2


def test_compare_table(capsys):
    assert main(["compare", "diamond.scenario", "--override", 'protocol="AODV"',
                 "--override", 'security_mode="Baseline"']) == 0
    out = capsys.readouterr().out
    header = next(line for line in out.splitlines() if line.startswith("metric"))
    assert "AODV/Baseline" in header and "AODV/TripleFactor" in header
    pdr = next(line for line in out.splitlines() if line.startswith("pdr "))
    base, tf = [float(cell.split("±")[0]) for cell in pdr.split("  ")[1:] if cell.strip()]
    assert tf > base


def test_trace_dumps_json_lines(capsys):
    assert main(["trace", "diamond.scenario", "--seed", "1", "--mode", "TripleFactor"]) == 0
    rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    kinds = {r["type"] for r in rows}
    assert kinds == {"run", "event", "metric", "trust", "report"}
    assert rows[0]["security_mode"] == "TripleFactor"
    assert rows[-1]["type"] == "report" and rows[-1]["blacklist_events"] == 1
    events = [(r["time"], r["seq"]) for r in rows if r["type"] == "event"]
    assert events == sorted(events)


def test_runtime_failure_exit_1(tmp_path, monkeypatch, capsys):
    import trifactor.cli as cli

    def boom(*a, **kw):
        raise RuntimeError("simulated crash")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert main(["run", write(tmp_path, MINIMAL), "--out", str(tmp_path / "o")]) == 1
    assert "simulated crash" in capsys.readouterr().err
