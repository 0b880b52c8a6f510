import numpy as np
import pytest
from hypothesis import given, strategies as st

from ubama.bid import (
    BidProblemSpec,
    backtrack_step,
    bid_objective,
    bid_solve,
    bid_x_update,
    bid_y_update_entropy,
    bid_y_update_euclidean,
    build_bid_problem,
    grad_x_hminus,
    grad_y_hminus,
    make_bid_instance,
    phi_robust,
    phi_robust_grad,
)
from ubama.errors import LineSearchError
from ubama.linops import circ_conv, gaussian_kernel
from ubama.metrics import snr
from ubama.solver import evaluate_phi


def small_spec(seed=0, **kw):
    r = np.random.default_rng(seed)
    b = np.clip(circ_conv(r.random((8, 8)), gaussian_kernel(3, 1.0)), 0, 1)
    return BidProblemSpec(b, kshape=(3, 3), **kw)


def test_phi_examples():
    assert phi_robust(np.zeros(5), 1e4) == 0.0
    assert phi_robust(np.array([1.0]), 1.0) == pytest.approx(np.log(2.0))
    assert phi_robust(np.array([0.01, -0.01]), 1e4) == pytest.approx(2 * np.log(2.0))
    np.testing.assert_allclose(phi_robust_grad(np.array([0.0, 1.0, -1.0]), 1.0), [0.0, 1.0, -1.0])


def test_gradients_match_finite_differences():
    spec = small_spec(1)
    r = np.random.default_rng(2)
    h = 1e-7
    for _ in range(20):
        x = r.random(spec.b.shape)
        y = r.dirichlet(np.ones(9)).reshape(3, 3)
        dx = r.standard_normal(x.shape)
        dy = r.standard_normal(y.shape)
        f = lambda xx, yy: -bid_objective(spec, xx, yy)
        fd_x = (f(x + h * dx, y) - f(x - h * dx, y)) / (2 * h)
        fd_y = (f(x, y + h * dy) - f(x, y - h * dy)) / (2 * h)
        an_x = np.vdot(grad_x_hminus(spec, x, y), dx)
        an_y = np.vdot(grad_y_hminus(spec, x, y), dy)
        assert abs(fd_x - an_x) <= 1e-5 * max(1.0, abs(an_x))
        assert abs(fd_y - an_y) <= 1e-5 * max(1.0, abs(an_y))


def test_x_update_clamps_to_box():
    spec = small_spec()
    y = np.full((3, 3), 1 / 9)
    x = bid_x_update(spec, spec.b, y, 1e-3)
    assert x.min() >= 0 and x.max() <= 1
    assert np.any(x == 0) or np.any(x == 1)


@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-2, 1e8))
def test_y_updates_stay_on_simplex(seed, d):
    spec = small_spec(seed % 50)
    r = np.random.default_rng(seed)
    x = r.random(spec.b.shape)
    y = r.dirichlet(np.ones(9)).reshape(3, 3)
    for step in (bid_y_update_euclidean, bid_y_update_entropy):
        yn = step(spec, x, y, d)
        assert yn.shape == (3, 3)
        assert np.all(yn >= 0)
        assert abs(yn.sum() - 1) <= 1e-10


def test_y_updates_approach_current_kernel_for_huge_step_scalar():
    # the displacement is |grad|/d, so keep the data weight moderate
    spec = small_spec(3, lam=1e3)
    x = spec.b
    y = np.random.default_rng(0).dirichlet(np.ones(9)).reshape(3, 3)
    for step in (bid_y_update_euclidean, bid_y_update_entropy):
        assert np.abs(step(spec, x, y, 1e12) - y).max() <= 1e-8


def test_entropy_update_zero_and_constant_gradient():
    spec = small_spec()
    y = np.random.default_rng(2).dirichlet(np.ones(9)).reshape(3, 3)
    for g in (np.zeros((3, 3)), np.full((3, 3), 7.5)):
        np.testing.assert_allclose(bid_y_update_entropy(spec, spec.b, y, 3.0, grad=g), y,
                                   atol=1e-15)


def test_uniform_kernel_stays_uniform_under_symmetric_gradient():
    spec = small_spec()
    y = np.full((3, 3), 1 / 9)
    np.testing.assert_allclose(bid_y_update_euclidean(spec, spec.b, y, 1.0, grad=np.ones((3, 3))),
                               y, atol=1e-15)


def test_entropy_update_is_the_mirror_minimizer():
    spec = small_spec(4)
    r = np.random.default_rng(1)
    x = r.random(spec.b.shape)
    y = r.dirichlet(np.ones(9)).reshape(3, 3)
    d = 5e3
    s = grad_y_hminus(spec, x, y)
    yn = bid_y_update_entropy(spec, x, y, d)

    def model(z):
        return -np.vdot(z - y, s) + d * np.sum(z * np.log(z / y) - z + y)

    for _ in range(30):
        z = r.dirichlet(np.ones(9)).reshape(3, 3)
        w = 0.99 * yn + 0.01 * z
        assert model(w) >= model(yn) - 1e-9


def test_entropy_update_needs_positive_kernel():
    spec = small_spec()
    y = np.zeros((3, 3))
    y[1, 1] = 1
    with pytest.raises(ValueError):
        bid_y_update_entropy(spec, spec.b, y, 1.0)


@pytest.mark.parametrize("L", [0.37, 3.0, 250.0])
def test_backtracking_quadratic_oracle(L):
    # F(z) = L/2 |z|^2, candidate z - grad/s: accepted iff s >= L/2
    z0 = np.array([1.0, -2.0])
    F = lambda z: 0.5 * L * float(z @ z)
    s, z, val = backtrack_step(F, lambda s: z0 - L * z0 / s, 1e-6, F(z0), tol=0.0)
    assert L / 2 <= s < L
    assert val <= F(z0)


def test_backtracking_accepts_first_candidate_at_stationary_point():
    calls = []

    def candidate(s):
        calls.append(s)
        return np.zeros(2)

    s, _, _ = backtrack_step(lambda z: 0.0, candidate, 8.0, 0.0)
    assert s == 4.0 and calls == [4.0]


def test_backtracking_gives_up():
    with pytest.raises(LineSearchError):
        backtrack_step(lambda z: 1.0, lambda s: s, 1.0, 0.0, max_doublings=5)


def test_engine_objective_is_negated_hminus():
    spec = small_spec(5)
    problem = build_bid_problem(spec)
    y = np.full((3, 3), 1 / 9)
    assert evaluate_phi(problem, spec.b, y) == pytest.approx(bid_objective(spec, spec.b, y))


@pytest.mark.parametrize("mode", ["euclidean", "entropy"])
def test_short_solve_feasible_and_monotone(mode):
    spec = small_spec(6, y_mode=mode)
    res = bid_solve(spec, maxit=60)
    phis = [r.phi for r in res.trace]
    assert all(b <= a + 1e-12 for a, b in zip(phis, phis[1:]))
    assert res.x.min() >= 0 and res.x.max() <= 1
    assert abs(res.y.sum() - 1) <= 1e-10 and res.y.min() >= 0
    assert res.iterations == 60 and len(res.c_history) == 60


def test_single_tap_kernel_stays_fixed():
    spec = BidProblemSpec(np.random.default_rng(0).random((8, 8)), kshape=(1, 1))
    res = bid_solve(spec, maxit=20)
    np.testing.assert_array_equal(res.y, [[1.0]])


def test_delta_kernel_sharp_input_is_near_stationary():
    x = np.clip(np.random.default_rng(4).random((16, 16)), 0, 1)
    y0 = np.zeros((3, 3))
    y0[1, 1] = 1.0
    spec = BidProblemSpec(x, kshape=(3, 3))
    res = bid_solve(spec, maxit=20, y0=y0)
    phis = [r.phi for r in res.trace]
    assert all(b <= a + 1e-12 for a, b in zip(phis, phis[1:]))
    assert np.abs(res.x - x).max() <= 0.05


def test_non_blind_with_true_kernel_improves_snr():
    x_true, k_true, spec = make_bid_instance(32, seed=1)
    res = bid_solve(spec, maxit=100, y0=k_true, update_y=False, x_ref=x_true)
    assert res.trace[-1].snr > snr(x_true, spec.b)
    np.testing.assert_array_equal(res.y, k_true)


def test_spec_validation():
    with pytest.raises(ValueError):
        BidProblemSpec(np.zeros((8, 8)), kshape=(2, 3))
    with pytest.raises(ValueError):
        BidProblemSpec(np.zeros((8, 8)), y_mode="kl")
    with pytest.raises(ValueError):
        bid_solve(small_spec(), y0=np.ones((3, 3)))
