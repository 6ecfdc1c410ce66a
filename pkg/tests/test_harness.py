import json
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from nomasched.cli import main
from nomasched.harness import (ExperimentSpec, Guards, SpecError, cell_seed, emit_report,
                               load_report, run_experiment)
from nomasched.online import bms
from nomasched.scenario import ScenarioParams, generate_instance


def spec(**kw):
    base = dict(name="t", scenario={"n": 3, "M": 2}, algorithms=["bms"], axis="m",
                values=[6], seeds=[0])
    base.update(kw)
    return ExperimentSpec(**base)


def test_single_cell_single_row():
    rows = run_experiment(spec())
    assert len(rows) == 1 and rows[0].error is None and rows[0].algorithm == "bms"


def test_spec_validation():
    with pytest.raises(SpecError):
        spec(algorithms=[])
    with pytest.raises(SpecError):
        spec(algorithms=["zz"], scenario={"n": 3, "M": 3})
    with pytest.raises(SpecError):
        spec(algorithms=["ranking"])
    with pytest.raises(SpecError):
        spec(axis="colour")
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"name": "x"})


def test_cell_seed_stable_and_distinct():
    assert cell_seed(0, "m", 10, 1) == cell_seed(0, "m", 10, 1)
    assert len({cell_seed(0, "m", v, r) for v in (10, 20) for r in range(5)}) == 10
    assert 0 <= cell_seed(3, "e_max", 23.5, 0) < 2**63


def test_csv_round_trip(tmp_path):
    s = spec(algorithms=["bms", "ath", "zz", "selfish", "opt"], values=[4, 6], seeds=[0, 1, 2])
    rows = run_experiment(s)
    written = emit_report(rows, tmp_path, s.name)
    assert (tmp_path / "t.csv") in written and (tmp_path / "t.svg") in written
    again = load_report(tmp_path / "t.csv")
    key = lambda r: (r.axis_value, r.algorithm, r.seed, r.nsd, r.runtime_ms)
    assert [key(r) for r in again] == [key(r) for r in rows]
    ET.fromstring((tmp_path / "t.svg").read_text())


def test_byte_identical_reruns(tmp_path):
    s = spec(algorithms=["bms", "ath", "rl"], values=[5, 8], seeds=[0, 1],
             scenario={"n": 3, "M": 2, "k": 2}, learner={"rounds": 3})
    emit_report(run_experiment(s), tmp_path / "a", s.name)
    emit_report(run_experiment(s, jobs=2), tmp_path / "b", s.name)
    for f in ("t.csv", "t_power.csv", "t.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_guard_failures_are_per_cell(tmp_path):
    s = spec(algorithms=["bms", "opt"], values=[3, 6], scenario={"n": 2, "M": 2, "k": 2})
    rows = run_experiment(s)
    bad = [r for r in rows if r.error]
    assert [(r.axis_value, r.algorithm) for r in bad] == [(6, "opt")]
    assert "GuardError" in bad[0].error
    assert sum(r.error is None for r in rows) == 3
    emit_report(rows, tmp_path, "g")
    errors = json.loads((tmp_path / "g_errors.json").read_text())
    assert errors[0]["algorithm"] == "opt"
    relaxed = run_experiment(s, Guards().override("horizon.max_devices", "6"))
    assert all(r.error is None for r in relaxed)


def test_every_cell_validated():
    s = spec(algorithms=["bms", "ath", "zz", "selfish", "opt", "pl", "ql", "rl"],
             values=[3, 4], seeds=[0, 1], scenario={"n": 2, "M": 2, "k": 2, "power_level": 2},
             learner={"rounds": 4})
    rows = run_experiment(s)
    assert all(r.error is None for r in rows)
    opt = {(r.axis_value, r.seed): r.nsd for r in rows if r.algorithm == "opt"}
    assert all(r.nsd <= opt[r.axis_value, r.seed] for r in rows)


def test_learner_power_profile(tmp_path):
    s = spec(algorithms=["pl", "ql", "rl"], values=[6], seeds=[0, 1],
             scenario={"n": 3, "M": 2, "k": 20}, learner={"rounds": 5})
    emit_report(run_experiment(s), tmp_path, "power_profile")
    lines = (tmp_path / "power_profile_power.csv").read_text().splitlines()
    assert lines[0] == "axis_value,algorithm,seed,frame,mean_pc"
    assert len(lines) == 1 + 3 * 2 * 20


def test_empty_table_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "none", "x")
    assert not (tmp_path / "none").exists()


def test_bms_runtime_subquadratic():
    def timed(m):
        inst = generate_instance(ScenarioParams(m=m, n=20, M=20, seed=m))
        best = float("inf")
        for _ in range(3):
            start = time.perf_counter()
            bms(inst, 0)
            best = min(best, time.perf_counter() - start)
        return best

    t500, t1000, t2000 = timed(500), timed(1000), timed(2000)
    # quadratic growth would multiply by 4 per doubling
    assert t2000 / t500 < 16 * 0.6
    assert t2000 / t1000 < 4 * 0.75


# ---- command line -------------------------------------------------------------------

def test_cli_pipeline(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    assert main(["gen", "--param", "m=5", "--param", "n=3", "--seed", "2",
                 "--out", str(inst)]) == 0
    assert main(["oracle", str(inst)]) == 0
    out = capsys.readouterr().out
    assert json.loads(out[out.index("{"):])["method"] == "dp"
    assert main(["oracle", str(inst), "--method", "ilp"]) == 0
    assert main(["export-lp", str(inst), "--out", str(tmp_path / "m.lp")]) == 0
    assert (tmp_path / "m.lp").read_text().startswith("\\")

    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"name": "demo", "scenario": {"n": 3, "M": 2},
                               "algorithms": ["bms", "ath"], "axis": "m",
                               "values": [4, 6], "seeds": [0, 1]}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "res"), "--jobs", "2"]) == 0
    assert main(["report", str(tmp_path / "res" / "demo.csv"), "--out",
                 str(tmp_path / "again.svg")]) == 0
    ET.fromstring((tmp_path / "again.svg").read_text())
    assert main(["gen", "--param", "m=4", "--param", "n=2", "--count", "3",
                 "--out", str(tmp_path / "many")]) == 0
    assert len(list((tmp_path / "many").glob("*.json"))) == 3


def test_cli_strict_and_structured_errors(tmp_path, capsys):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"name": "g", "scenario": {"n": 2, "M": 2, "k": 2},
                               "algorithms": ["opt"], "axis": "m", "values": [6],
                               "seeds": [0]}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--strict"]) != 0
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "cell_failure"
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--strict",
                 "--guard-override", "horizon.max_devices=6"]) == 0

    broken = tmp_path / "broken.json"
    broken.write_text('{"format": "nomasched-instance/1", "system": ')
    capsys.readouterr()
    assert main(["oracle", str(broken)]) != 0
    payload = json.loads(capsys.readouterr().err)
    assert payload["error"] == "instance_format" and "line" in payload["location"]
