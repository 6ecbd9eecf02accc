import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtlunmix.core import Hyperparams, NonFiniteError, UnmixError
from mtlunmix.mtlnet import build_state, objective
from mtlunmix.optimizer import (STEP_INIT, STEP_MAX, STEP_MIN, RpropState, gradcheck,
                                irprop_step, train)
from mtlunmix.synthgen import make_scene


def one_coord(prev_grad, step, prev_update=0.0, prev_j=np.inf):
    rs = RpropState(np.array([step]), np.array([prev_grad]), np.array([prev_update]),
                    prev_j=prev_j)
    return rs


class TestIrpropStep:
    def test_same_sign_grows_step(self):
        rs = one_coord(prev_grad=1.0, step=0.1)
        theta, rs = irprop_step(np.array([1.0]), np.array([2.0]), rs, 1.0)
        assert rs.step[0] == pytest.approx(0.12, abs=1e-15)
        assert theta[0] == pytest.approx(1.0 - 0.12, abs=1e-15)
        assert rs.prev_grad[0] == 2.0

    def test_sign_flip_with_higher_j_backtracks(self):
        rs = one_coord(prev_grad=1.0, step=0.12, prev_update=-0.12, prev_j=1.0)
        theta, rs = irprop_step(np.array([0.88]), np.array([-1.0]), rs, 2.0)
        assert theta[0] == pytest.approx(1.0, abs=1e-15)
        assert rs.step[0] == 0.06
        assert rs.prev_grad[0] == 0.0

    def test_sign_flip_with_lower_j_holds(self):
        rs = one_coord(prev_grad=1.0, step=0.12, prev_update=-0.12, prev_j=3.0)
        theta, rs = irprop_step(np.array([0.88]), np.array([-1.0]), rs, 2.0)
        assert theta[0] == 0.88
        assert rs.step[0] == 0.06
        assert rs.prev_grad[0] == 0.0

    def test_zero_gradient_is_a_no_op(self):
        rs = RpropState.fresh(4)
        theta, rs = irprop_step(np.arange(4.0), np.zeros(4), rs, 1.0)
        np.testing.assert_array_equal(theta, np.arange(4.0))
        np.testing.assert_array_equal(rs.step, STEP_INIT)

    def test_after_flip_next_step_does_not_adapt(self):
        rs = one_coord(prev_grad=1.0, step=0.12, prev_update=-0.12, prev_j=1.0)
        theta, rs = irprop_step(np.array([0.88]), np.array([-1.0]), rs, 2.0)
        theta, rs = irprop_step(theta, np.array([-1.0]), rs, 1.5)
        # stored gradient was 0, so the "= 0" branch: plain step of size 0.06
        assert rs.step[0] == 0.06
        assert theta[0] == pytest.approx(1.06, abs=1e-15)

    def test_errors(self):
        rs = RpropState.fresh(2)
        with pytest.raises(NonFiniteError):
            irprop_step(np.zeros(2), np.array([np.nan, 0.0]), rs, 1.0)
        with pytest.raises(NonFiniteError):
            irprop_step(np.zeros(2), np.zeros(2), rs, np.inf)
        with pytest.raises(UnmixError):
            irprop_step(np.zeros(3), np.zeros(3), rs, 1.0)

    def test_bad_constants(self):
        with pytest.raises(UnmixError):
            RpropState.fresh(2, eta_minus=1.5)

    @given(seed=st.integers(0, 2**31), n_steps=st.integers(1, 60))
    def test_steps_stay_in_bounds(self, seed, n_steps):
        rng = np.random.default_rng(seed)
        rs = RpropState.fresh(16)
        theta = np.zeros(16)
        for _ in range(n_steps):
            g = rng.standard_normal(16) * rng.choice([0.0, 1.0, 1e6], 16)
            irprop_step(theta, g, rs, float(rng.uniform()))
            assert np.all((rs.step >= STEP_MIN) & (rs.step <= STEP_MAX))

    @given(seed=st.integers(0, 2**31))
    def test_backtrack_restores_value_two_steps_back(self, seed):
        rng = np.random.default_rng(seed)
        rs = RpropState.fresh(10)
        theta = rng.standard_normal(10)
        j = 1.0
        for _ in range(30):
            before = theta.copy()
            g_prev = rs.prev_grad.copy()
            g = rng.standard_normal(10)
            j_new = j + rng.normal()
            prior = before - rs.prev_update
            increased = j_new > rs.prev_j
            irprop_step(theta, g, rs, j_new)
            flip = g * g_prev < 0
            if increased:
                np.testing.assert_allclose(theta[flip], prior[flip], rtol=0, atol=1e-12)
            else:
                np.testing.assert_array_equal(theta[flip], before[flip])
            j = j_new


def tiny_lmm(seed=0):
    cube, _ = make_scene(10, 8, 8, 2, "lmm", None, 1.0, seed)
    from mtlunmix.pipeline import initialize
    from mtlunmix.core import normalize
    scaled, _ = normalize(cube)
    state, _ = initialize(scaled, 2, Hyperparams(), "vca", seed)
    return scaled, state


class TestTrain:
    def test_zero_iterations(self):
        X, state = tiny_lmm()
        best, hist = train(X, state, max_iters=0)
        assert len(hist.records) == 1
        np.testing.assert_array_equal(best.flat(), state.flat())
        assert hist.stop_reason == "max_iters"

    def test_halves_objective(self):
        X, state = tiny_lmm()
        j0 = objective(state, X).j_total
        _, hist = train(X, state, max_iters=500)
        assert hist.best_j < 0.5 * j0

    def test_divergence_returns_init(self):
        X, state = tiny_lmm()
        bad = state.copy()
        bad.we = [W * 1e6 for W in bad.we]
        bad.wa = [W * 1e6 for W in bad.wa]
        best, hist = train(X, bad, max_iters=50)
        assert hist.diverged and hist.stop_reason == "diverged"
        np.testing.assert_array_equal(best.flat(), bad.flat())

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_at_start(self):
        X, state = tiny_lmm()
        bad = state.copy()
        bad.we = [W * 1e200 for W in bad.we]
        best, hist = train(X, bad, max_iters=5)
        assert hist.diverged and not hist.records and np.isnan(hist.best_j)

    def test_best_j_monotone_and_returned(self):
        X, state = tiny_lmm(1)
        best, hist = train(X, state, max_iters=200)
        seq = hist.best_sequence()
        assert np.all(np.diff(seq) <= 0)
        assert all(hist.best_j <= r["j"] for r in hist.records)
        assert objective(best, X).j_total == hist.best_j

    def test_converged_stop(self):
        X, state = tiny_lmm()
        _, hist = train(X, state, max_iters=5000, rel_tol=1.0, patience=3)
        assert hist.stop_reason == "converged"
        assert len(hist.records) == 4

    def test_deterministic(self):
        X, state = tiny_lmm(2)
        _, h1 = train(X, state.copy(), max_iters=60)
        _, h2 = train(X, state.copy(), max_iters=60)
        assert h1.records == h2.records

    def test_callback(self):
        X, state = tiny_lmm()
        seen = []
        train(X, state, max_iters=3, callback=lambda it, parts, s: seen.append(it))
        assert seen == [0, 1, 2, 3]


class TestGradcheck:
    def test_tanh_seed_11(self):
        rep = gradcheck("tanh", seed=11)
        assert rep.passed and rep.frac_excluded == 0.0

    def test_relu_seed_11(self):
        rep = gradcheck("relu", seed=11)
        assert rep.passed
        assert "frac_excluded" in rep.as_dict()

    def test_coarse_step_fails(self):
        rep = gradcheck("tanh", seed=11, h=1e-1)
        assert not rep.passed and rep.max_rel_err > 1e-4

    def test_parameter_cap(self):
        with pytest.raises(UnmixError):
            gradcheck("tanh", dims=dict(K=3, P=40, N=200, widths_e=(50, 150),
                                        widths_a=(10, 20)))


def test_build_state_and_train_on_raw_matrix():
    X = np.random.default_rng(0).uniform(0.1, 1.0, (10, 20))
    E = X[:, :2].copy()
    A = np.full((2, 20), 0.5)
    state = build_state(E, A, Hyperparams(widths_e=(3, 5), widths_a=(3,)), seed=0)
    _, hist = train(X, state, max_iters=10)
    assert len(hist.records) == 11
