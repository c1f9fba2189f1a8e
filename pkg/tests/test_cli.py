"""End-to-end tests of the command-line interface."""

import csv
import json

import numpy as np
import pytest

from sigquad.cli import main
from sigquad.proxy import load_weights
from sigquad.qnet import integrate_segment, marginalize


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestTrain:
    def test_constant_csv_gives_constant_net(self, tmp_path):
        csv_path = tmp_path / "samples.csv"
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 1, size=(64, 2))
        with open(csv_path, "w") as handle:
            handle.write("x1,x2,f\n")
            for p in pts:
                handle.write(f"{p[0]},{p[1]},2.5\n")
        out = tmp_path / "weights.json"
        assert run_cli("train", "--samples", csv_path, "--out", out) == 0
        net, box = load_weights(out)
        probe = box.denormalize_targets(net.evaluate(box.normalize_points(pts[:8])))
        np.testing.assert_allclose(probe, 2.5, atol=1e-12)

    def test_rerun_is_byte_identical(self, tmp_path):
        out_a = tmp_path / "a.json"
        out_b = tmp_path / "b.json"
        args = ["train", "--family", "gm", "--d", "2", "--n", "256", "--k", "4", "--seed", "7"]
        run_cli(*args, "--out", out_a)
        run_cli(*args, "--out", out_b)
        a = out_a.read_bytes()
        b = out_b.read_bytes().replace(out_b.name.encode(), out_a.name.encode())
        assert a == b

    def test_report_contains_fit_stats(self, tmp_path):
        out = tmp_path / "w.json"
        run_cli("train", "--family", "gm", "--d", "2", "--n", "256", "--k", "8", "--out", out)
        report = json.loads((out.parent / "w.json.report.json").read_text())
        assert {"mse", "iterations", "wall_time_s", "holdout_rmse"} <= set(report)
        assert report["mse"] >= 0

    def test_trains_3d_mixture_with_35_neurons(self, tmp_path):
        # family seed 0 draws a 35-component 3D mixture, matched with k=35
        out = tmp_path / "w3.json"
        run_cli(
            "train", "--family", "gm", "--d", "3", "--n", "2048", "--k", "35",
            "--seed", "3", "--family-seed", "0", "--out", out,
        )
        report = json.loads((out.parent / "w3.json.report.json").read_text())
        assert report["holdout_rmse"] < 0.05


class TestIntegrate:
    @pytest.fixture()
    def trained(self, tmp_path):
        out = tmp_path / "w.json"
        run_cli(
            "train", "--family", "gm", "--d", "2", "--n", "512", "--k", "8",
            "--seed", "1", "--out", out,
        )
        return out

    def test_constant_weight_file_value(self, tmp_path, capsys):
        # zero output weights: the integral is volume * denormalized bias
        from sigquad.proxy import DomainMap, ProxyNet, save_weights

        net = ProxyNet(w1=np.zeros((2, 2)), b1=np.zeros(2), w2=np.zeros(2), b2=0.25)
        box = DomainMap([0.0, 0.0], [2.0, 2.0], 0.0, 1.0)
        path = tmp_path / "const.json"
        save_weights(path, net, box)
        assert run_cli("integrate", "--weights", path) == 0
        value = float(capsys.readouterr().out.strip().splitlines()[-1])
        # b2=0.25 normalized maps to 0.625 in [0,1]; box volume is 4
        assert value == pytest.approx(4.0 * 0.625, rel=1e-12)

    def test_full_box_flag_matches_plain(self, trained, capsys):
        run_cli("integrate", "--weights", trained)
        plain = float(capsys.readouterr().out.strip().splitlines()[-1])
        run_cli("integrate", "--weights", trained, "--box", "0:1,0:1")
        boxed = float(capsys.readouterr().out.strip().splitlines()[-1])
        assert boxed == pytest.approx(plain, rel=1e-10)

    def test_json_record_written(self, trained, tmp_path, capsys):
        record_path = tmp_path / "record.json"
        run_cli("integrate", "--weights", trained, "--out", record_path)
        capsys.readouterr()
        doc = json.loads(record_path.read_text())
        assert "value" in doc and "config" in doc and "build" in doc

    def test_marginal_grid_csv(self, trained, tmp_path, capsys):
        out = tmp_path / "marginal.csv"
        run_cli("integrate", "--weights", trained, "--marginalize", "0", "--grid", "9", "--out", out)
        capsys.readouterr()
        with open(out) as handle:
            rows = list(csv.DictReader(line for line in handle if not line.startswith("#")))
        assert len(rows) == 9
        net, box = load_weights(trained)
        marginal = marginalize(net, [0])
        x2 = float(rows[3]["x2"])
        hat = marginal(np.array([2.0 * x2 - 1.0]))
        span = box.range_hi - box.range_lo
        want = 0.5 * (0.5 * span * (hat + 2.0) + box.range_lo * 2.0)
        assert float(rows[3]["value"]) == pytest.approx(want, rel=1e-10)

    def test_segment_matches_library_path(self, trained, capsys):
        run_cli("integrate", "--weights", trained, "--segment", "0.1,0.2 0.9,0.8")
        value = float(capsys.readouterr().out.strip().splitlines()[-1])
        net, box = load_weights(trained)
        p0, p1 = np.array([0.1, 0.2]), np.array([0.9, 0.8])
        q0, q1 = box.normalize_points(p0), box.normalize_points(p1)
        hat = integrate_segment(net, q0, q1)
        norm_len = float(np.linalg.norm(q1 - q0))
        true_len = float(np.linalg.norm(p1 - p0))
        span = box.range_hi - box.range_lo
        want = true_len / norm_len * (0.5 * span * (hat + norm_len) + box.range_lo * norm_len)
        assert value == pytest.approx(want, rel=1e-10)


class TestBench:
    def test_one_cell_one_row(self, tmp_path):
        out = tmp_path / "bench.csv"
        assert (
            run_cli(
                "bench", "--study", "convergence", "--family", "hr", "--d", "2",
                "--n-schedule", "32", "--integrands", "1", "--reps", "1",
                "--estimators", "MC", "--out", out,
            )
            == 0
        )
        lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == "estimator,family,d,k,N,nu,rep,seed,value,reference,rel_error"
        assert len(lines) == 2

    def test_identical_config_identical_rows(self, tmp_path):
        args = [
            "bench", "--study", "convergence", "--family", "gm", "--d", "2",
            "--n-schedule", "32,64", "--integrands", "2", "--reps", "2",
            "--estimators", "MC,QMC", "--seed", "3",
        ]
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli(*args, "--out", out_a)
        run_cli(*args, "--out", out_b)
        rows_a = [l for l in out_a.read_text().splitlines() if not l.startswith("#")]
        rows_b = [l for l in out_b.read_text().splitlines() if not l.startswith("#")]
        assert rows_a == rows_b

    def test_cv_study_table(self, tmp_path):
        out = tmp_path / "cv.csv"
        run_cli(
            "bench", "--study", "cv", "--family", "hr", "--d", "2", "--n", "128",
            "--nus", "0,0.5,1", "--integrands", "1", "--reps", "2", "--out", out,
        )
        with open(out) as handle:
            rows = list(csv.DictReader(line for line in handle if not line.startswith("#")))
        kinds = {row["estimator"] for row in rows}
        assert kinds == {"MC", "QMC", "CV_QNET"}
        nus = {row["nu"] for row in rows if row["estimator"] == "CV_QNET"}
        assert len(nus) == 3

    def test_dims_study_table(self, tmp_path):
        out = tmp_path / "dims.csv"
        run_cli(
            "bench", "--study", "dims", "--family", "hr", "--dims", "2,3",
            "--n", "64", "--integrands", "2", "--reps", "1",
            "--estimators", "MC", "--out", out,
        )
        with open(out) as handle:
            rows = list(csv.DictReader(line for line in handle if not line.startswith("#")))
        assert {row["d"] for row in rows} == {"2", "3"}
        assert len(rows) == 4

    def test_subdomain_study_table(self, tmp_path):
        out = tmp_path / "zp.csv"
        run_cli(
            "bench", "--study", "subdomain", "--k", "8", "--n", "1024",
            "--sizes", "0.125", "--boxes", "5", "--out", out,
        )
        with open(out) as handle:
            rows = list(csv.DictReader(line for line in handle if not line.startswith("#")))
        assert len(rows) == 5
        assert all(row["family"] == "zoneplate@0.125" for row in rows)
        assert all(float(row["rel_error"]) >= 0 for row in rows)
