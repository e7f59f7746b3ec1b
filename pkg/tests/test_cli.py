import io
import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import pytest

from campa.algebra import equivalent, expr_from_json
from campa.cli import SCHEMA, run
from campa.core_types import Max, Recv, Scale, Send, Var, sized

ROOT = Path(__file__).resolve().parent.parent
PROTO = ROOT / "protocols"


def call(*argv):
    out = io.StringIO()
    code = run([str(a) for a in argv], out)
    return code, out.getvalue()


def call_json(*argv):
    code, text = call(*argv, "--format", "json")
    return code, json.loads(text)


def test_check_reports_well_formed_and_deadlock_free():
    code, text = call("check", PROTO / "scatter_gather.camp")
    assert code == 0
    assert text.strip() == "well-formed; deadlock-free (k=1)"


def test_check_with_unroll_counts():
    code, doc = call_json("check", PROTO / "ping_pong.camp", "--unroll", "3")
    assert code == 0 and doc["results"]["unroll"] == [3]
    code, _ = call("check", PROTO / "ping_pong.camp", "--unroll", "1,2")
    assert code == 3


def test_check_detects_the_receive_first_ring():
    code, text = call("check", PROTO / "receive_first_ring.camp")
    assert code == 1 and "DEADLOCK" in text


def test_unprojectable_protocol_points_at_the_failing_arm(tmp_path, capsys):
    f = tmp_path / "bad.camp"
    f.write_text("protocol bad {\n  roles p, q, r;\n  p->q{l1. q->r:<t^1>. end,\n       l2. r->q:<t^1>. end}\n}\n")
    code, _ = call("check", f)
    assert code == 1
    err = capsys.readouterr().err
    assert "role r" in err and "branch path l2" in err
    assert err.startswith(f"error: {f}:4:8: role r:")


def test_parse_error_has_a_position(tmp_path, capsys):
    f = tmp_path / "broken.camp"
    f.write_text("protocol x { roles p, q; p->q:<t^1> end }")
    assert call("check", f)[0] == 1
    assert f"{f}:1:" in capsys.readouterr().err


def test_usage_errors_exit_3(tmp_path):
    assert call("check", tmp_path / "missing.camp")[0] == 3
    with pytest.raises(SystemExit) as info:
        run(["cost"], io.StringIO())
    assert info.value.code == 3
    with pytest.raises(SystemExit) as info:
        run(["frobnicate", "x"], io.StringIO())
    assert info.value.code == 3


def test_cost_json_matches_scatter_gather():
    code, doc = call_json("cost", PROTO / "scatter_gather.camp")
    assert code == 0
    assert doc["schema"] == SCHEMA and doc["command"] == "cost"
    assert set(doc) >= {"inputs", "results", "warnings", "provenance"}
    assert doc["provenance"]["seed"] == 42
    eqs = {k: expr_from_json(v["expr"]) for k, v in doc["results"]["equations"].items()}
    cs1, cs2, cr1, cr2 = Send(sized("tau1")), Send(sized("tau2")), Recv(sized("tau1")), Recv(sized("tau2"))
    c1 = Var("c1")
    assert equivalent(eqs["p"], Scale(2, cs1))
    assert equivalent(eqs["s"], Max(cr2, cs1) + cs1 + cr1 + c1 + cs2 + cr2)


def test_cost_with_bindings_evaluates():
    code, doc = call_json("cost", PROTO / "master_worker5.camp", "--bind", PROTO / "mw5.bind.json")
    assert code == 0
    vals = doc["results"]["values"]
    assert all(Fraction(v["exact"]) >= 0 for v in vals.values())


def test_project_prints_every_role():
    code, text = call("project", PROTO / "ping_pong.camp")
    assert code == 0
    assert [line.split(":")[0] for line in text.splitlines()] == ["p", "q"]
    code, text = call("project", PROTO / "ping_pong.camp", "--role", "q")
    assert text.startswith("q: rec X. p?<tau1")


def test_latency_command():
    code, doc = call_json("latency", PROTO / "ping_pong.camp")
    assert code == 0 and doc["results"]["stabilized_at"] >= 1
    code, doc = call_json("latency", PROTO / "pipeline.camp", "--relative", "q")
    assert code == 0
    code, _ = call("latency", PROTO / "scatter_gather.camp")
    assert code == 1


def test_simulate_is_deterministic_for_a_seed():
    a = call_json("simulate", PROTO / "master_worker3.camp", "--seed", "7")
    b = call_json("simulate", PROTO / "master_worker3.camp", "--seed", "7")
    assert a == b and a[0] == 0
    assert a[1]["results"]["complete"] and not a[1]["results"]["deadlocked"]


def test_optimize_exit_codes():
    code, doc = call_json("optimize", PROTO / "ring3_optimized.camp", "--against", PROTO / "ring3_uniform.camp",
                          "--check-deadlock", "--check-cost", "--zero-send")
    assert code == 0
    assert doc["results"]["related"] and doc["results"]["cost"]["holds"]
    assert doc["results"]["deadlock"]["deadlock_free"]
    code, doc = call_json("optimize", PROTO / "receive_first_ring.camp", "--against", PROTO / "ring3_uniform.camp")
    assert code == 1 and doc["results"]["reasons"]
    code, doc = call_json("optimize", PROTO / "g1.camp", "--against", PROTO / "g2.camp", "--check-cost")
    assert code == 2 and not doc["results"]["cost"]["holds"]


def test_deploy_cost_master_worker():
    code, doc = call_json("deploy-cost", PROTO / "master_worker5.camp", "--arch", PROTO / "mw5.arch.json",
                          "--bind", PROTO / "mw5.bind.json")
    assert code == 0
    vals = {k: Fraction(v["exact"]) for k, v in doc["results"]["values"].items()}
    assert vals == {"m1": 12, "m2": 65, "w1": 26, "w2": 26, "w3": 25, "w4": 25, "w5": 35}


def test_fit_command():
    code, doc = call_json("fit", PROTO / "send_profile.csv", "--at", "2.5", "--at", "3")
    assert code == 0
    assert Fraction(doc["results"]["values"]["2.5"]["exact"]) == Fraction(31, 5)
    assert Fraction(doc["results"]["values"]["3"]["exact"]) == 9
    assert call("fit", PROTO / "send_profile.csv", "--at", "5")[0] == 1


def test_console_script_exit_code():
    done = subprocess.run([sys.executable, "-m", "campa.cli", "check", str(PROTO / "receive_first_ring.camp")],
                          capture_output=True, text=True)
    assert done.returncode == 1
