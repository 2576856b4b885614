import numpy as np
import pytest
from helpers import small_cantilever

from topopt2d import DensityField, DegenerateSensitivityError, InputError
from topopt2d.errors import NumericalError
from topopt2d.simp import (OcParams, OptimizationTrace, bisect_lambda,
                           choose_threshold, oc_update, run_simp,
                           threshold_binarize)

X_MIN = 1e-3


def random_instance(rng, shape, volume_fraction):
    x = rng.uniform(0.25, 0.85, shape)
    x *= volume_fraction * x.size / x.sum()
    x = np.clip(x, X_MIN, 1.0)
    sens = -rng.uniform(0.05, 5.0, shape)
    return x, sens


class TestBisectLambda:
    def test_single_element_closed_form(self):
        # x * (4 / lam)^0.5 = 0.5 with x = 0.5 gives lam = 4
        params = OcParams(volume_fraction=0.5, move_limit=1.0, eta=0.5)
        lam = bisect_lambda(np.array([[0.5]]), np.array([[-4.0]]), params, X_MIN)
        assert lam == pytest.approx(4.0, rel=1e-9)

    def test_volume_postcondition(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            x, sens = random_instance(rng, (4, 5), 0.5)
            params = OcParams(volume_fraction=0.5)
            lam = bisect_lambda(x, sens, params, X_MIN)
            assert lam > 0
            updated = oc_update(x, sens, params, X_MIN)
            assert abs(updated.sum() - 0.5 * x.size) <= 1e-4 * x.size

    def test_volume_monotone_in_lambda(self):
        from topopt2d.simp import _clamped_update
        rng = np.random.default_rng(1)
        x, sens = random_instance(rng, (3, 3), 0.5)
        params = OcParams(volume_fraction=0.5)
        for lam in (0.1, 1.0, 10.0):
            v1 = _clamped_update(x, sens, lam, params, X_MIN).sum()
            v2 = _clamped_update(x, sens, 2 * lam, params, X_MIN).sum()
            assert v2 <= v1 + 1e-12

    def test_degenerate_all_zero(self):
        params = OcParams(volume_fraction=0.5)
        with pytest.raises(DegenerateSensitivityError):
            bisect_lambda(np.full((2, 2), 0.5), np.zeros((2, 2)), params, X_MIN)

    def test_unreachable_volume_errors(self):
        # tiny move limit cannot lift x = x_min to volume 0.9
        params = OcParams(volume_fraction=0.9, move_limit=0.05)
        x = np.full((3, 3), X_MIN)
        sens = -np.ones((3, 3))
        with pytest.raises(NumericalError):
            bisect_lambda(x, sens, params, X_MIN)


class TestOcUpdate:
    def test_uniform_fixed_point(self):
        params = OcParams(volume_fraction=0.4)
        x = np.full((4, 4), 0.4)
        sens = np.full((4, 4), -2.0)
        updated = oc_update(x, sens, params, X_MIN)
        assert np.allclose(updated, x, atol=1e-9)

    def test_scale_invariance(self):
        rng = np.random.default_rng(2)
        params = OcParams(volume_fraction=0.5)
        for alpha in (1e-3, 1.0, 1e3, 7.3):
            x, sens = random_instance(rng, (4, 4), 0.5)
            a = oc_update(x, sens, params, X_MIN)
            b = oc_update(x, alpha * sens, params, X_MIN)
            assert np.abs(a - b).max() <= 1e-9

    def test_matches_dense_lambda_scan(self):
        # brute-force scan over a fine lambda grid around the bracket
        from topopt2d.simp import _clamped_update
        x = np.array([[0.3, 0.7], [0.5, 0.5]])
        sens = np.array([[-1.0, -4.0], [-2.5, -0.5]])
        params = OcParams(volume_fraction=0.5)
        target = 0.5 * x.size
        coarse = np.geomspace(1e-6, 1e6, 20001)
        vols = np.array([_clamped_update(x, sens, lam, params, X_MIN).sum()
                         for lam in coarse])
        best = coarse[np.argmin(np.abs(vols - target))]
        fine = np.arange(best * 0.98, best * 1.02, 1e-6)
        vols = np.array([_clamped_update(x, sens, lam, params, X_MIN).sum()
                         for lam in fine])
        lam_scan = fine[np.argmin(np.abs(vols - target))]
        expected = _clamped_update(x, sens, lam_scan, params, X_MIN)
        assert np.allclose(oc_update(x, sens, params, X_MIN), expected, atol=1e-5)

    def test_move_limit_and_box(self):
        rng = np.random.default_rng(3)
        params = OcParams(volume_fraction=0.5, move_limit=0.2)
        for _ in range(20):
            x, sens = random_instance(rng, (5, 4), 0.5)
            updated = oc_update(x, sens, params, X_MIN)
            assert np.all(np.abs(updated - x) <= params.move_limit + 1e-12)
            assert np.all(updated >= X_MIN)
            assert np.all(updated <= 1.0)

    def test_determinism(self):
        rng = np.random.default_rng(4)
        x, sens = random_instance(rng, (6, 3), 0.5)
        params = OcParams(volume_fraction=0.5)
        a = oc_update(x, sens, params, X_MIN)
        b = oc_update(x.copy(), sens.copy(), params, X_MIN)
        assert np.array_equal(a, b)

    def test_rejects_positive_sensitivities(self):
        params = OcParams(volume_fraction=0.5)
        with pytest.raises(InputError):
            oc_update(np.full((2, 2), 0.5), np.full((2, 2), 1.0), params, X_MIN)


class TestRunSimp:
    def test_zero_iterations(self):
        problem = small_cantilever(4, 2)
        params = OcParams(volume_fraction=0.5, max_iters=0)
        initial = DensityField.uniform(problem.mesh, 0.5)
        final, trace = run_simp(problem, params, initial)
        assert np.array_equal(final.values, initial.values)
        assert len(trace.records) == 1
        assert trace.records[0].iteration == 0
        assert trace.records[0].compliance > 0

    def test_compliance_drops(self):
        problem = small_cantilever(8, 4)
        params = OcParams(volume_fraction=0.5, max_iters=15)
        final, trace = run_simp(problem, params, DensityField.uniform(problem.mesh, 0.5))
        c = trace.compliances()
        assert c[-1] < c[0]

    def test_trace_volumes_feasible(self):
        problem = small_cantilever(8, 4)
        params = OcParams(volume_fraction=0.4, max_iters=10)
        snapshot_iters = tuple(range(11))
        final, trace = run_simp(problem, params,
                                DensityField.uniform(problem.mesh, 0.4),
                                snapshot_iters)
        n = problem.mesh.n_elements
        assert np.all(np.abs(trace.volumes() - 0.4 * n) <= 1e-3 * n)
        # re-sum the snapshots independently of the recorded volume column
        for it, snap in trace.snapshots.items():
            assert abs(snap.sum() - 0.4 * n) <= 1e-3 * n

    def test_infeasible_initial_rejected(self):
        problem = small_cantilever(4, 2)
        params = OcParams(volume_fraction=0.5, max_iters=3)
        with pytest.raises(InputError):
            run_simp(problem, params, DensityField.uniform(problem.mesh, 0.9))

    def test_determinism(self):
        problem = small_cantilever(6, 4)
        params = OcParams(volume_fraction=0.5, max_iters=6)
        x0 = DensityField.uniform(problem.mesh, 0.5)
        a, _ = run_simp(problem, params, x0)
        b, _ = run_simp(problem, params, x0)
        assert np.array_equal(a.values, b.values)


class TestThresholdBinarize:
    def test_threshold_semantics(self):
        field = np.array([[0.49, 0.50], [0.51, 0.1]])
        out = threshold_binarize(field, 0.5)
        assert out.binary
        assert np.array_equal(out.values, [[0.0, 1.0], [1.0, 0.0]])

    def test_threshold_at_x_min_keeps_everything(self):
        rng = np.random.default_rng(5)
        field = rng.uniform(X_MIN, 1.0, (3, 4))
        out = threshold_binarize(field, X_MIN)
        assert np.array_equal(out.values, np.ones((3, 4)))

    def test_idempotent_on_binary(self):
        field = np.array([[0.0, 1.0], [1.0, 0.0]])
        for threshold in (0.2, 0.5, 1.0):
            assert np.array_equal(threshold_binarize(field, threshold).values, field)

    def test_rejects_bad_threshold(self):
        with pytest.raises(InputError):
            threshold_binarize(np.ones((2, 2)), 0.0)
        with pytest.raises(InputError):
            threshold_binarize(np.ones((2, 2)), 1.5)


class TestChooseThreshold:
    def test_four_element_example(self):
        field = np.array([[0.1, 0.4], [0.8, 0.9]])
        threshold = choose_threshold(field, 2.0)
        assert 0.4 < threshold <= 0.8
        assert threshold_binarize(field, threshold).volume() == 2.0

    def test_target_full_volume(self):
        field = np.array([[0.3, 0.5], [0.7, 0.2]])
        threshold = choose_threshold(field, 4.0)
        assert threshold <= 0.2
        assert threshold_binarize(field, threshold).volume() == 4.0

    def test_within_one_element_of_exhaustive(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            field = rng.uniform(0.0015, 1.0, (5, 5))
            target = float(rng.uniform(1, 24))
            threshold = choose_threshold(field, target)
            got = abs(threshold_binarize(field, threshold).volume() - target)
            candidates = np.unique(field)
            best = min(abs((field >= c).sum() - target) for c in candidates)
            assert got <= best + 1.0

    def test_tie_breaks_toward_smaller_threshold(self):
        # volumes 3 (L=0.3) and 1 (L=0.9) are equidistant from target 2;
        # the tie goes to the smaller threshold, i.e. the larger structure
        field = np.array([[0.3, 0.3, 0.9]])
        threshold = choose_threshold(field, 2.0)
        assert threshold == 0.3
        assert threshold_binarize(field, threshold).volume() == 3.0
