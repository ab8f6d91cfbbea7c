from __future__ import annotations

import csv
import io
import json
import math

import pytest

from nhfield.cli import feasible_points, git_hash, main
from nhfield.model import builtin, model_to_dict


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(capsys, *argv):
    code, out, _ = run(capsys, *argv)
    return code, json.loads(out)


def checks(rep):
    return {c["name"]: c for c in rep["checks"]}


@pytest.fixture
def knife_config(tmp_path):
    path = tmp_path / "knife.json"
    path.write_text(json.dumps({"t_end": 0.5, "h": 0.01, "q0": [0, 0, 0.3], "v0": [math.cos(0.3), math.sin(0.3), 1.0]}))
    return path


class TestCheck:
    def test_rod_is_flagged_degenerate(self, capsys):
        code, rep = report(capsys, "check", "cosserat", "--samples", "3")
        c = checks(rep)
        assert code == 1 and not rep["pass"]
        assert not c["regularity"]["pass"] and c["constraint_rank"]["pass"]
        assert "v6_1" in rep["details"]["degenerate_velocities"]
        assert rep["details"]["form_mode"] == "explicit"

    def test_knife_edge_passes(self, capsys):
        code, rep = report(capsys, "check", "knife_edge", "--samples", "4")
        assert code == 0 and all(c["pass"] for c in rep["checks"])
        assert all("tolerance" in c for c in rep["checks"])

    def test_free_particle_notes_no_constraints(self, capsys):
        code, rep = report(capsys, "check", "free_particle")
        assert code == 0 and rep["details"]["m"] == 0
        assert "vacuous" in rep["details"]["note"]

    def test_explicit_point(self, capsys):
        code, rep = report(capsys, "check", "knife_edge", "--point", "0,0,0,1,0,2")
        assert code == 0 and rep["details"]["points"] == 1

    def test_point_with_wrong_length(self, capsys):
        code, _, err = run(capsys, "check", "knife_edge", "--point", "0,0,0")
        assert code == 2 and "point" in err

    def test_unknown_model(self, capsys):
        code, _, err = run(capsys, "check", "pendulum")
        assert code == 2 and err

    def test_model_file(self, capsys, tmp_path):
        path = tmp_path / "knife.json"
        path.write_text(json.dumps(model_to_dict(builtin("knife_edge"))))
        code, rep = report(capsys, "check", str(path), "--samples", "2")
        assert code == 0 and rep["model"] == "knife_edge"

    def test_broken_model_file(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"name": "x", "n": 1, "k": 1, "lagrangian": "v1_1^^2"}')
        code, _, err = run(capsys, "check", str(path))
        assert code == 2 and "offset" in err

    def test_flags_after_or_before_subcommand(self, capsys):
        a = report(capsys, "check", "knife_edge", "--seed", "7", "--samples", "2")[1]
        b = report(capsys, "--seed", "7", "check", "knife_edge", "--samples", "2")[1]
        assert a == b and a["seed"] == 7

    def test_seed_changes_samples(self, capsys):
        a = report(capsys, "check", "knife_edge", "--samples", "2")[1]
        b = report(capsys, "check", "knife_edge", "--samples", "2", "--seed", "1")[1]
        assert a["details"]["per_point"] != b["details"]["per_point"]

    def test_feasible_points_land_on_constraints(self):
        m = builtin("knife_edge")
        for w in feasible_points(m, 5, 42):
            x = w.flat()
            assert abs(m.Phi[0](x)) < 1e-12


class TestSimulate:
    def test_knife_edge_run(self, capsys, tmp_path, knife_config):
        out = tmp_path / "run.csv"
        code, rep = report(capsys, "simulate", "knife_edge", str(knife_config), "--out", str(out))
        assert code == 0 and rep["details"]["status"] == "ok"
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert len(rows) == 51
        assert max(float(r["phi_max"]) for r in rows) < 1e-8
        assert json.loads((tmp_path / "run.csv.json").read_text()) == rep

    def test_rod_equilibrium_is_stationary(self, capsys, tmp_path):
        cfg = tmp_path / "rod.json"
        cfg.write_text(json.dumps({"t_end": 0.003, "h": 0.001, "M": 8}))
        out = tmp_path / "rod.csv"
        code, rep = report(capsys, "simulate", "cosserat", str(cfg), "--out", str(out))
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert len(rows) == 4 * 8
        for name in ("q1", "q2", "q3"):
            first = [r[name] for r in rows[:8]]
            last = [r[name] for r in rows[-8:]]
            assert first == last

    def test_bad_step_names_field(self, capsys, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"t_end": 1.0, "h": -1}))
        code, _, err = run(capsys, "simulate", "knife_edge", str(cfg), "--out", str(tmp_path / "x.csv"))
        assert code == 2 and "h" in err and "positive" in err

    def test_infeasible_start(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"t_end": 1.0, "h": 0.1, "q0": [0, 0, 0], "v0": [0, 1, 0]}))
        code, _, _ = run(capsys, "simulate", "knife_edge", str(cfg), "--out", str(tmp_path / "x.csv"))
        assert code == 2

    def test_numerical_failure_keeps_partial_output(self, capsys, tmp_path):
        model = tmp_path / "blowup.json"
        model.write_text(json.dumps({"name": "blowup", "n": 1, "k": 1, "lagrangian": "0.5*v1_1^2 + 0.25*q1^4"}))
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"t_end": 5.0, "h": 0.001, "q0": [1.0], "v0": [1.0]}))
        out = tmp_path / "x.csv"
        code, rep = report(capsys, "simulate", str(model), str(cfg), "--out", str(out))
        assert code == 3 and rep["details"]["partial"] and rep["details"]["stop_reason"] == "aborted"
        assert out.exists() and len(out.read_text().splitlines()) > 1

    def test_drift_stops_the_run(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"t_end": 1.0, "h": 0.01, "q0": [0, 0, 0.3], "v0": [math.cos(0.3), math.sin(0.3), 1.0],
                                   "drift_tol": 1e-300, "projection_every": 0}))
        code, rep = report(capsys, "simulate", "knife_edge", str(cfg), "--out", str(tmp_path / "x.csv"))
        assert code == 3 and rep["details"]["stop_reason"] == "drift"
        assert not checks(rep)["constraint_drift"]["pass"]

    def test_feasibility_flag_overrides_config(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"t_end": 0.1, "h": 0.01, "q0": [0, 0, 0], "v0": [1, 1e-6, 0], "drift_tol": 1e-4}))
        out = str(tmp_path / "x.csv")
        assert run(capsys, "simulate", "knife_edge", str(cfg), "--out", out)[0] == 2
        assert run(capsys, "simulate", "knife_edge", str(cfg), "--out", out, "--tol-feas", "1e-5")[0] == 0


class TestOtherCommands:
    def test_project(self, capsys):
        code, rep = report(capsys, "project", "knife_edge", "--point", f"0,0,{math.pi / 2},0,1,0.8")
        assert code == 0
        d = rep["details"]
        assert d["projected"][0] == pytest.approx([-0.8, 0.0, 0.0], abs=1e-12)
        assert d["multipliers"][0][0] == pytest.approx(0.8, abs=1e-12)

    def test_project_csv(self, capsys):
        code, out, _ = run(capsys, "project", "knife_edge", "--point", "0,0,0,1,0,1", "--format", "csv")
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[0] == ["kind", "A", "index", "value"]
        assert ["lambda", "1", "1", "1"] in rows

    def test_momentum_on_stored_run(self, capsys, tmp_path, knife_config):
        out = tmp_path / "run.csv"
        run(capsys, "simulate", "knife_edge", str(knife_config), "--out", str(out))
        res = tmp_path / "res.csv"
        code, rep = report(capsys, "momentum", "knife_edge", str(out), "--section", "rotation", "--out", str(res))
        assert code == 0 and rep["details"]["horizontal"]
        assert rep["details"]["residual"]["max"] < 1e-10
        assert len(res.read_text().splitlines()) == 1 + 49

    def test_momentum_on_rod(self, capsys, tmp_path):
        cfg = tmp_path / "rod.json"
        cfg.write_text(json.dumps({"t_end": 0.01, "h": 0.001, "M": 16, "profiles": {"v3": 0.5}}))
        out = tmp_path / "rod.csv"
        run(capsys, "simulate", "cosserat", str(cfg), "--out", str(out))
        code, rep = report(capsys, "momentum", "cosserat", str(out), "--section", "main")
        assert code == 0 and rep["details"]["bc"] == "free"
        assert checks(rep)["annihilation"]["pass"]

    def test_unknown_section(self, capsys, tmp_path, knife_config):
        out = tmp_path / "run.csv"
        run(capsys, "simulate", "knife_edge", str(knife_config), "--out", str(out))
        code, _, _ = run(capsys, "momentum", "knife_edge", str(out), "--section", "spin")
        assert code == 2

    def test_algebra(self, capsys, tmp_path):
        path = tmp_path / "r3.json"
        forms = [[[0, 0, 1], [0, 0, 0], [-1, 0, 0]], [[0, 0, 0], [0, 0, 1], [0, -1, 0]]]
        path.write_text(json.dumps({"forms": forms, "V": [[1, 0, 0], [0, 1, 0]], "W": [[0, 0, 1]]}))
        code, rep = report(capsys, "algebra", str(path))
        cls = rep["details"]["classification"]
        assert code == 0
        assert cls["isotropic"] and cls["coisotropic"] and cls["lagrangian"] and not cls["ksymplectic"]
        assert rep["details"]["dim_W"] + rep["details"]["dim_W_perp"] == 2

    def test_algebra_bad_input(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"forms": [[[0, 1], [-1, 0]]], "V": [[1, 0, 0]], "W": []}))
        code, _, _ = run(capsys, "algebra", str(path))
        assert code == 2

    def test_missing_subcommand(self, capsys):
        assert run(capsys)[0] == 2


class TestDeterminism:
    def test_check_is_byte_identical(self, capsys):
        a = run(capsys, "check", "knife_edge", "--samples", "3")[1]
        b = run(capsys, "check", "knife_edge", "--samples", "3")[1]
        assert a == b and "timings" not in a

    def test_simulate_is_byte_identical(self, capsys, tmp_path, knife_config):
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            run(capsys, "simulate", "knife_edge", str(knife_config), "--out", str(out))
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_timings_are_opt_in(self, capsys):
        _, rep = report(capsys, "check", "free_particle", "--timings")
        assert "timings" in rep

    def test_content_hash(self):
        assert git_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
