"""Command-line interface: exit codes, outputs, determinism, library parity."""

import json
import os

import numpy as np
import pytest

from defgpa import (
    CveConfig,
    Shape,
    ShapeSet,
    cross_validation_error,
    estimate_prior_for_set,
    rmse_d,
    rmse_r,
    save_shapes,
    solve,
)
from defgpa.cli import RunConfig, build_models, main
from conftest import affine_models, full_set


def write_set(path, shape_set):
    save_shapes(shape_set, path, format="json")
    return str(path)


@pytest.fixture
def identical_pair(rng, tmp_path):
    pts = rng.normal(size=(2, 8))
    ss = ShapeSet((Shape(pts, np.ones(8, bool)), Shape(pts.copy(), np.ones(8, bool))))
    return ss, write_set(tmp_path / "toy.json", ss)


@pytest.fixture
def rigid_file(rng, tmp_path):
    ss = full_set(rng, 2, 8, 3, kind="rigid")
    return ss, write_set(tmp_path / "rigid.json", ss)


class TestSolveCommand:
    def test_identical_shapes_zero_rmse(self, identical_pair, tmp_path, capsys):
        _, path = identical_pair
        out = str(tmp_path / "sol.json")
        code = main(["solve", "--input", path, "--model", "affine", "--output", out])
        assert code == 0
        doc = json.loads(open(out).read())
        assert doc["metrics"]["rmse_r"] < 1e-8
        assert os.path.exists(os.path.splitext(out)[0] + ".metrics.json")

    def test_tps_records_nine_control_points(self, rigid_file, tmp_path):
        _, path = rigid_file
        out = str(tmp_path / "sol.json")
        code = main(["solve", "--input", path, "--model", "tps", "--ctrl", "3",
                     "--theta", "10", "--output", out])
        assert code == 0
        doc = json.loads(open(out).read())
        for model in doc["models"]:
            assert model["type"] == "tps"
            assert len(model["centers"][0]) == 9

    def test_malformed_json_exits_2_without_output(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        out = str(tmp_path / "never.json")
        code = main(["solve", "--input", str(bad), "--output", out])
        assert code == 2
        assert not os.path.exists(out)

    def test_missing_input_exits_runtime(self, tmp_path):
        code = main(["solve", "--input", str(tmp_path / "absent.json")])
        assert code in (1, 2)

    def test_byte_deterministic(self, rigid_file, tmp_path):
        _, path = rigid_file
        out1 = str(tmp_path / "a.json")
        out2 = str(tmp_path / "b.json")
        assert main(["solve", "--input", path, "--model", "tps", "--theta", "3",
                     "--output", out1]) == 0
        assert main(["solve", "--input", path, "--model", "tps", "--theta", "3",
                     "--output", out2]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()

    def test_condition_flags_serialize_as_booleans(self, rigid_file, tmp_path):
        _, path = rigid_file
        out = str(tmp_path / "sol.json")
        assert main(["solve", "--input", path, "--output", out]) == 0
        doc = json.loads(open(out).read())
        assert doc["conditions"]["all_pass"] is True
        assert doc["conditions"]["shapes"][0]["witness_found"] is True

    def test_library_parity(self, rigid_file, tmp_path):
        ss, path = rigid_file
        out = str(tmp_path / "sol.json")
        assert main(["solve", "--input", path, "--model", "affine", "--output", out]) == 0
        doc = json.loads(open(out).read())
        config = RunConfig(input=path, model="affine")
        models = build_models(ss, config)
        sol = solve(ss, models)
        np.testing.assert_allclose(np.array(doc["reference"]), sol.reference, atol=1e-12)
        assert doc["metrics"]["rmse_r"] == pytest.approx(rmse_r(sol, ss, models), abs=1e-12)
        assert doc["metrics"]["rmse_d"] == pytest.approx(rmse_d(sol, ss, models), abs=1e-12)


class TestSweepCommand:
    def test_rows_and_monotonicity(self, rng, tmp_path):
        ss = full_set(rng, 2, 10, 3, kind="smooth", noise=0.02)
        path = write_set(tmp_path / "set.json", ss)
        out = str(tmp_path / "grid.csv")
        code = main(["sweep", "--input", path, "--model", "tps", "--ctrl", "3",
                     "--thetas", "100,1,0.01", "--output", out])
        assert code == 0
        lines = open(out).read().strip().splitlines()
        assert lines[0] == "theta,rmse_r,rmse_d,cve"
        rows = [dict(zip(lines[0].split(","), map(float, l.split(",")))) for l in lines[1:]]
        assert len(rows) == 3
        assert rows[1]["rmse_r"] <= rows[0]["rmse_r"] + 1e-10
        assert rows[2]["rmse_r"] <= rows[1]["rmse_r"] + 1e-10

    def test_matches_individual_commands(self, rng, tmp_path, monkeypatch):
        monkeypatch.setenv("DEFGPA_THREADS", "1")
        ss = full_set(rng, 2, 9, 3, kind="smooth", noise=0.05)
        path = write_set(tmp_path / "set.json", ss)
        out = str(tmp_path / "grid.csv")
        assert main(["sweep", "--input", path, "--model", "tps", "--theta", "1",
                     "--thetas", "10,0.1", "--output", out, "--cve-group", "1"]) == 0
        lines = open(out).read().strip().splitlines()
        row = dict(zip(lines[0].split(","), map(float, lines[1].split(","))))

        sol_out = str(tmp_path / "one.json")
        assert main(["solve", "--input", path, "--model", "tps", "--theta", "10",
                     "--output", sol_out, "--cve-group", "1"]) == 0
        doc = json.loads(open(sol_out).read())
        assert doc["metrics"]["rmse_r"] == pytest.approx(row["rmse_r"], abs=1e-10)
        assert doc["metrics"]["rmse_d"] == pytest.approx(row["rmse_d"], abs=1e-10)
        assert doc["metrics"]["cve"] == pytest.approx(row["cve"], abs=1e-10)

    def test_single_point_grid_rejected(self, rigid_file, tmp_path):
        _, path = rigid_file
        assert main(["sweep", "--input", path, "--model", "tps",
                     "--thetas", "1", "--output", str(tmp_path / "g.csv")]) == 2


class TestCveCommand:
    def test_noiseless_rigid(self, rigid_file, tmp_path, capsys):
        _, path = rigid_file
        out = str(tmp_path / "cve.json")
        code = main(["cve", "--input", path, "--model", "affine", "--group", "1",
                     "--output", out])
        assert code == 0
        doc = json.loads(open(out).read())
        assert doc["cve"] < 1e-6
        assert doc["predicted"]["n"] == 3

    def test_group_equal_m_rejected(self, rigid_file, tmp_path):
        _, path = rigid_file
        assert main(["cve", "--input", path, "--group", "8"]) == 2

    def test_parity_with_library(self, rng, tmp_path):
        ss = full_set(rng, 2, 8, 3, kind="affine", noise=0.05)
        path = write_set(tmp_path / "set.json", ss)
        out = str(tmp_path / "cve.json")
        assert main(["cve", "--input", path, "--model", "affine", "--group", "2",
                     "--output", out]) == 0
        doc = json.loads(open(out).read())
        models = affine_models(ss)
        sol = solve(ss, models)
        cve, _ = cross_validation_error(ss, models, nu=sol.nu, config=CveConfig(2))
        assert doc["cve"] == pytest.approx(cve, abs=1e-12)

    def test_tps_on_partial_data(self, rng, tmp_path):
        from conftest import mask_set
        ss = mask_set(rng, full_set(rng, 2, 12, 4, kind="smooth", noise=0.05), 0.2,
                      min_joint=2 + 3)
        path = write_set(tmp_path / "set.json", ss)
        out = str(tmp_path / "cve.json")
        assert main(["cve", "--input", path, "--model", "tps", "--ctrl", "3",
                     "--theta", "5", "--group", "1", "--output", out]) == 0
        doc = json.loads(open(out).read())
        assert doc["cve"] >= 0
        # invisible landmarks stay null in the predicted shapes
        for shape_doc, shape in zip(doc["predicted"]["shapes"], ss):
            for j, pt in enumerate(shape_doc["points"]):
                assert (pt is None) == (not shape.visibility[j])


class TestPriorCommand:
    def test_identical_shapes(self, identical_pair, capsys):
        ss, path = identical_pair
        assert main(["prior", "--input", path]) == 0
        out = json.loads(capsys.readouterr().out.strip())
        centered = ss[0].points - ss[0].points.mean(axis=1, keepdims=True)
        expected = np.sort(np.linalg.eigvalsh(centered @ centered.T))[::-1]
        np.testing.assert_allclose(out["lambdas"], expected, atol=1e-9)

    def test_parity_with_library(self, rng, tmp_path, capsys):
        from conftest import mask_set
        ss = mask_set(rng, full_set(rng, 2, 10, 3, kind="affine"), 0.2)
        path = write_set(tmp_path / "set.json", ss)
        assert main(["prior", "--input", path]) == 0
        out = json.loads(capsys.readouterr().out.strip())
        np.testing.assert_allclose(out["lambdas"], estimate_prior_for_set(ss).lambdas,
                                   atol=1e-12)

    def test_empty_input(self, tmp_path):
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps({"d": 2, "m": 3, "shapes": []}))
        assert main(["prior", "--input", str(empty)]) == 2


class TestCsvInput:
    def test_solve_from_csv_manifest(self, rng, tmp_path):
        ss = full_set(rng, 2, 8, 3, kind="affine")
        manifest = tmp_path / "set.csv"
        save_shapes(ss, manifest, format="csv")
        out = str(tmp_path / "sol.json")
        code = main(["solve", "--input", str(manifest), "--input-format", "csv",
                     "--model", "affine", "--output", out])
        assert code == 0
        doc = json.loads(open(out).read())
        assert doc["metrics"]["rmse_r"] < 1e-8


class TestReflectionRefAndThreads:
    def test_reflection_ref_by_shape_id(self, rigid_file, tmp_path):
        _, path = rigid_file
        out_idx = str(tmp_path / "ref_idx.json")
        out_id = str(tmp_path / "ref_id.json")
        assert main(["solve", "--input", path, "--reflection-ref", "1",
                     "--output", out_idx]) == 0
        assert main(["solve", "--input", path, "--reflection-ref", "s1",
                     "--output", out_id]) == 0
        a = json.loads(open(out_idx).read())["reference"]
        b = json.loads(open(out_id).read())["reference"]
        np.testing.assert_allclose(np.array(a), np.array(b), atol=0)

    def test_unknown_shape_id_rejected(self, rigid_file):
        _, path = rigid_file
        assert main(["solve", "--input", path, "--reflection-ref", "nope"]) == 2

    def test_sweep_deterministic_across_thread_counts(self, rng, tmp_path, monkeypatch):
        ss = full_set(rng, 2, 9, 3, kind="smooth", noise=0.05)
        path = write_set(tmp_path / "set.json", ss)
        outs = []
        for threads, name in (("1", "serial.csv"), ("3", "parallel.csv")):
            monkeypatch.setenv("DEFGPA_THREADS", threads)
            out = str(tmp_path / name)
            assert main(["sweep", "--input", path, "--model", "tps",
                         "--thetas", "10,1,0.1", "--output", out]) == 0
            outs.append(open(out, "rb").read())
        assert outs[0] == outs[1]


class TestUsage:
    def test_unknown_model(self, rigid_file):
        _, path = rigid_file
        assert main(["solve", "--input", path, "--model", "rigid"]) == 2

    def test_bad_theta_for_tps(self, rigid_file):
        _, path = rigid_file
        assert main(["solve", "--input", path, "--model", "tps", "--theta", "-1"]) == 2

    def test_nu_accepts_auto_and_number(self, rigid_file, tmp_path):
        _, path = rigid_file
        assert main(["solve", "--input", path, "--nu", "auto",
                     "--output", str(tmp_path / "s1.json")]) == 0
        assert main(["solve", "--input", path, "--nu", "0.5",
                     "--output", str(tmp_path / "s2.json")]) == 0
        assert main(["solve", "--input", path, "--nu", "bogus"]) == 2
