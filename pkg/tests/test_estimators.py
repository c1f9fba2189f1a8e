"""Tests for the MC/QMC/proxy/control-variate estimators and study harness."""

import csv
import math

import numpy as np
import pytest

from sigquad.estimators import (
    EstimateRecord,
    REL_ERROR_FLOOR,
    convergence_study,
    cv_estimate,
    derive_seed,
    halton,
    mc_estimate,
    qmc_estimate,
    qnet_estimate,
    summarize,
    write_records_csv,
)
from sigquad.integrands import reference_integral, sample_family
from sigquad.proxy import TrainConfig

from helpers import random_net

BOX2 = (np.zeros(2), np.ones(2))


def _constant(c):
    return lambda pts: np.full(len(pts), c)


class TestHalton:
    def test_unscrambled_first_points_2d(self):
        # radical-inverse values in bases 2 and 3, starting at index 1
        pts = halton(4, 2)
        want = np.array(
            [[1 / 2, 1 / 3], [1 / 4, 2 / 3], [3 / 4, 1 / 9], [1 / 8, 4 / 9]]
        )
        np.testing.assert_allclose(pts, want, atol=1e-15)

    def test_scrambled_deterministic_and_in_range(self):
        a = halton(512, 5, seed=42)
        b = halton(512, 5, seed=42)
        np.testing.assert_array_equal(a, b)
        assert np.all((a >= 0) & (a < 1))
        assert not np.allclose(a, halton(512, 5, seed=43))

    def test_scrambled_preserves_uniformity(self):
        pts = halton(4096, 2, seed=3)
        np.testing.assert_allclose(pts.mean(axis=0), 0.5, atol=0.02)

    def test_validation(self):
        with pytest.raises(ValueError):
            halton(0, 2)
        with pytest.raises(ValueError):
            halton(4, 17)


class TestRecord:
    def test_rel_error_definition(self):
        rec = EstimateRecord(value=1.1, estimator="MC", n=4, seed=0, reference=1.0)
        assert rec.rel_error == pytest.approx(0.1 / (1.0 + REL_ERROR_FLOOR))

    def test_estimator_kind_validated(self):
        with pytest.raises(ValueError):
            EstimateRecord(value=0.0, estimator="BOGUS", n=1, seed=0)


class TestMCEstimate:
    def test_exact_on_constants(self):
        for n in (1, 7, 100):
            rec = mc_estimate(_constant(2.5), BOX2, n, seed=1, reference=2.5)
            assert rec.value == pytest.approx(2.5, abs=1e-12)

    def test_bit_identical_reruns(self):
        spec = sample_family("gm", 2, seed=0)
        a = mc_estimate(spec.evaluate, BOX2, 512, seed=9)
        b = mc_estimate(spec.evaluate, BOX2, 512, seed=9)
        assert a.value == b.value

    def test_volume_scaling(self):
        box = (np.array([0.0, 0.0]), np.array([2.0, 3.0]))
        rec = mc_estimate(_constant(1.0), box, 10, seed=0)
        assert rec.value == pytest.approx(6.0, abs=1e-12)

    def test_convergence_slope_half(self):
        spec = sample_family("hr", 2, seed=4)
        ref = reference_integral(spec)
        xs, ys = [], []
        for n in (2**6, 2**8, 2**10, 2**12, 2**14):
            errs = [
                mc_estimate(spec.evaluate, BOX2, n, derive_seed("mc-slope", n, r), reference=ref).rel_error
                for r in range(8)
            ]
            xs.append(math.log2(n))
            ys.append(math.log2(math.sqrt(np.mean(np.square(errs)))))
        slope = np.polyfit(xs, ys, 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.1)


class TestQMCEstimate:
    def test_exact_on_constants(self):
        rec = qmc_estimate(_constant(-0.75), BOX2, 33, seed=5, reference=-0.75)
        assert rec.value == pytest.approx(-0.75, abs=1e-12)

    def test_faster_than_mc_on_smooth(self):
        spec = sample_family("gm", 2, seed=4)
        ref = reference_integral(spec)
        xs, ys = [], []
        for n in (2**4, 2**6, 2**8, 2**10, 2**12, 2**14):
            errs = [
                qmc_estimate(spec.evaluate, BOX2, n, derive_seed("qmc-slope", n, r), reference=ref).rel_error
                for r in range(8)
            ]
            xs.append(math.log2(n))
            ys.append(math.log2(math.sqrt(np.mean(np.square(errs)))))
        slope = np.polyfit(xs, ys, 1)[0]
        assert slope <= -0.8


class TestQnetEstimate:
    def test_constant_target_is_exact(self):
        rec = qnet_estimate(_constant(3.25), BOX2, 64, seed=2, reference=3.25)
        assert rec.rel_error < 1e-6
        assert "constant_target" in rec.flags

    def test_self_realizable_target(self):
        # the integrand is itself a k-neuron net, so the proxy family
        # contains the truth and the estimate should be nearly exact
        rng = np.random.default_rng(71)
        truth = random_net(rng, d=2, k=3, weight_scale=1.5)

        def f(pts):
            return truth.evaluate(2.0 * pts - 1.0)  # view truth on [0,1]^2

        from sigquad.qnet import integrate

        ref = integrate(truth) / 4.0  # d(normalized)/d(unit box) volume factor
        rec = qnet_estimate(f, BOX2, 2048, k=3, seed=6, reference=ref)
        assert rec.rel_error < 1e-4

    def test_fixed_sample_seed_isolates_fit_noise(self):
        spec = sample_family("gm", 2, seed=8)
        a = qnet_estimate(spec.evaluate, BOX2, 256, seed=1, sample_seed=123)
        b = qnet_estimate(spec.evaluate, BOX2, 256, seed=2, sample_seed=123)
        c = qnet_estimate(spec.evaluate, BOX2, 256, seed=1, sample_seed=123)
        assert a.value != b.value  # fit stochasticity
        assert a.value == c.value  # same samples + same fit seed

    def test_default_neuron_rule_applied(self):
        spec = sample_family("gm", 2, seed=8)
        rec = qnet_estimate(spec.evaluate, BOX2, 4096, seed=1, fit_config=TrainConfig(max_iterations=5))
        assert rec.k == 16


class TestCVEstimate:
    def test_nu_zero_equals_qnet_per_seed(self):
        spec = sample_family("gm", 2, seed=12)
        ref = reference_integral(spec)
        cv = cv_estimate(spec.evaluate, BOX2, 512, nu=0.0, inner="QMC", seed=31, reference=ref)
        qn = qnet_estimate(spec.evaluate, BOX2, 512, seed=31, reference=ref)
        assert cv.value == qn.value
        cv_mc = cv_estimate(spec.evaluate, BOX2, 512, nu=0.0, inner="MC", seed=31, reference=ref)
        qn_mc = qnet_estimate(spec.evaluate, BOX2, 512, seed=31, sampling="uniform", reference=ref)
        assert cv_mc.value == qn_mc.value

    def test_nu_one_equals_pure_inner_per_seed(self):
        spec = sample_family("hr", 2, seed=13)
        for inner, pure in (("MC", mc_estimate), ("QMC", qmc_estimate)):
            cv = cv_estimate(spec.evaluate, BOX2, 256, nu=1.0, inner=inner, seed=17)
            base = pure(spec.evaluate, BOX2, 256, seed=17)
            assert cv.value == base.value

    def test_tiny_nu_falls_back_with_flag(self):
        spec = sample_family("gm", 2, seed=14)
        rec = cv_estimate(spec.evaluate, BOX2, 16, nu=0.01, inner="MC", seed=3)
        assert rec.nu == 0.0
        assert "cv_fallback_nu0" in rec.flags

    def test_exact_on_constants_any_nu(self):
        for nu in (0.0, 0.25, 0.5, 1.0):
            rec = cv_estimate(_constant(1.5), BOX2, 64, nu=nu, inner="QMC", seed=4, reference=1.5)
            assert rec.value == pytest.approx(1.5, abs=1e-12)

    def test_sample_split_counts(self):
        # ceil((1-nu)N) training + floor(nu N) integration = N
        for n, nu in ((100, 0.33), (4096, 0.25), (7, 0.5)):
            n_train = math.ceil((1 - nu) * n)
            assert n_train + math.floor(nu * n) == n

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            cv_estimate(_constant(1.0), BOX2, 16, nu=1.5, inner="MC", seed=0)
        with pytest.raises(ValueError):
            cv_estimate(_constant(1.0), BOX2, 16, nu=0.5, inner="IS", seed=0)


class TestConvergenceStudy:
    def test_single_cell_single_record(self):
        records = convergence_study("hr", 2, [64], 1, 1, estimators=("MC",), master_seed=5)
        assert len(records) == 1
        assert records[0].estimator == "MC"
        assert records[0].family == "hr"
        assert records[0].rel_error is not None

    def test_grid_shape_and_determinism(self):
        kwargs = dict(
            family="gm",
            d=2,
            n_schedule=[32, 64],
            n_integrands=2,
            reps=2,
            estimators=("MC", "QMC"),
            master_seed=9,
        )
        a = convergence_study(**kwargs)
        b = convergence_study(**kwargs)
        assert len(a) == 2 * 2 * 2 * 2
        assert [r.value for r in a] == [r.value for r in b]

    def test_parallel_matches_serial(self):
        kwargs = dict(
            family="hr",
            d=2,
            n_schedule=[64],
            n_integrands=2,
            reps=2,
            estimators=("MC", "QMC"),
            master_seed=11,
        )
        serial = convergence_study(**kwargs, n_jobs=1)
        parallel = convergence_study(**kwargs, n_jobs=2)
        assert [r.value for r in serial] == [r.value for r in parallel]

    def test_qnet_reuses_sample_set_across_reps(self):
        records = convergence_study(
            "gm",
            2,
            [128],
            1,
            2,
            estimators=("QNET",),
            master_seed=13,
            fit_config=TrainConfig(max_iterations=3),
        )
        # same sample seed but different fit seeds: close but unequal
        assert records[0].value != records[1].value
        mc = convergence_study("gm", 2, [128], 1, 2, estimators=("MC",), master_seed=13)
        assert mc[0].seed != mc[1].seed


class TestSummarize:
    def test_rrmse_math(self):
        records = [
            EstimateRecord(value=1.1, estimator="MC", n=8, seed=0, reference=1.0, family="gm", d=2, rep=0),
            EstimateRecord(value=0.9, estimator="MC", n=8, seed=1, reference=1.0, family="gm", d=2, rep=1),
        ]
        rows = summarize(records)
        assert len(rows) == 1
        row = rows[0]
        want = math.sqrt((0.1**2 + 0.1**2) / 2) / (1.0 + REL_ERROR_FLOOR)
        assert row["rrmse"] == pytest.approx(want, rel=1e-9)
        assert row["count"] == 2
        assert row["mean"] == pytest.approx(1.0)

    def test_cells_split_by_estimator_and_n(self):
        records = [
            EstimateRecord(value=1.0, estimator="MC", n=8, seed=0),
            EstimateRecord(value=1.0, estimator="MC", n=16, seed=0),
            EstimateRecord(value=1.0, estimator="QMC", n=8, seed=0),
        ]
        assert len(summarize(records)) == 3


class TestCSV:
    def test_header_schema_frozen(self, tmp_path):
        path = tmp_path / "out.csv"
        write_records_csv(path, [], config={"x": 1}, build="test-build")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# config:")
        assert lines[1] == "# build: test-build"
        assert lines[2] == "estimator,family,d,k,N,nu,rep,seed,value,reference,rel_error"

    def test_round_trip_values(self, tmp_path):
        rec = EstimateRecord(
            value=1.2345678901234567,
            estimator="CV_QNET",
            n=64,
            seed=7,
            k=4,
            nu=0.25,
            reference=1.25,
            family="hr",
            d=3,
            rep=2,
        )
        path = tmp_path / "out.csv"
        write_records_csv(path, [rec])
        with open(path) as handle:
            rows = list(csv.DictReader(line for line in handle if not line.startswith("#")))
        assert len(rows) == 1
        row = rows[0]
        assert float(row["value"]) == rec.value
        assert row["estimator"] == "CV_QNET"
        assert int(row["N"]) == 64
        assert float(row["nu"]) == 0.25
        assert float(row["rel_error"]) == rec.rel_error


class TestSeedDerivation:
    def test_stable_and_distinct(self):
        assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
        assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
        assert derive_seed(1, "a") != derive_seed(1, "b")
