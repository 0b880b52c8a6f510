import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ubama.errors import InnerSolverError
from ubama.linops import SamplingMask
from ubama.prox import CappedNormParams, nuclear_norm, shrink, svt
from ubama.rpca import (
    RpcaProblemSpec,
    adca_x_block,
    build_rpca_problem,
    dca_admm_subproblem,
    default_caps,
    rpca_defaults,
    rpca_metrics,
    rpca_objective,
    rpca_solve,
    synth_gen,
    ubama_rpca_solve,
    ubama_rpca_step,
    video_error,
)
from ubama.solver import descent_audit, evaluate_phi


@pytest.fixture(scope="module")
def inst():
    return synth_gen(32, 2, seed=5)


def test_defaults_synthetic():
    tau, lam = rpca_defaults(256, 256, 0.9, 0.01)
    assert tau == pytest.approx(0.0625)
    # sqrt(0.9 * sqrt(8 * 256 * 0.9) * 0.01)
    assert lam == pytest.approx(0.62161, abs=1e-4)


def test_defaults_video():
    tau, lam = rpca_defaults(100, 400, 1.0, 0.1, video=True)
    assert tau == pytest.approx(0.05)
    assert lam == pytest.approx(3.0)


def test_synth_gen_protocol():
    g = synth_gen(64, 2, seed=42)
    assert np.linalg.matrix_rank(g.X_star) == 2
    frac = np.count_nonzero(g.Y_star) / 64 ** 2
    assert abs(frac - 0.05) <= 2 / 64 ** 2
    assert np.abs(g.Y_star).max() <= 10
    np.testing.assert_array_equal(g.B[~g.mask.indicator], 0.0)
    np.testing.assert_allclose(g.B[g.mask.indicator],
                               (g.X_star + g.Y_star + g.noise)[g.mask.indicator])
    again = synth_gen(64, 2, seed=42)
    np.testing.assert_array_equal(g.B, again.B)


def test_default_caps_median_rule():
    B = np.diag([3.0, 2.0, 1.0])
    caps = default_caps(B, SamplingMask.full((3, 3)), "median")
    assert caps.kappa1 == pytest.approx(3.0)
    assert caps.kappa2 == pytest.approx(0.3)


def test_objective_example():
    spec = RpcaProblemSpec(np.zeros((2, 2)), SamplingMask.full((2, 2)), 0.5, 2.0,
                           CappedNormParams(1.0, 0.5))
    X = np.diag([3.0, 0.5])
    Y = np.array([[0.0, -2.0], [0.2, 0.0]])
    # min(3,1)+min(.5,1) + .5*(min(2,.5)+min(.2,.5)) + 1/4 * |X+Y|^2
    expected = 1.5 + 0.5 * 0.7 + 0.25 * (9 + 4 + 0.04 + 0.25)
    assert rpca_objective(spec, X, Y) == pytest.approx(expected)
    problem, _ = build_rpca_problem(spec)
    assert evaluate_phi(problem, X, Y) == pytest.approx(expected)


def test_step_fixed_point_at_zero():
    spec = RpcaProblemSpec(np.zeros((5, 4)), SamplingMask.full((5, 4)), 0.5, 0.3,
                           CappedNormParams(1.0, 1.0))
    X, Y = ubama_rpca_step(spec, np.zeros((5, 4)), np.zeros((5, 4)))
    assert not X.any() and not Y.any()


def test_closed_form_step_matches_engine(inst):
    spec = inst.spec()
    res = ubama_rpca_solve(spec, eps=1e-14, maxit=3)
    X, Y = np.zeros_like(spec.B), np.zeros_like(spec.B)
    for _ in range(3):
        X, Y = ubama_rpca_step(spec, X, Y)
    np.testing.assert_allclose(res.x, X, atol=1e-10)
    np.testing.assert_allclose(res.y, Y, atol=1e-10)


def test_huge_caps_give_plain_proximal_scheme(inst):
    caps = CappedNormParams(1e12, 1e12)
    spec = inst.spec(caps=caps)
    res = ubama_rpca_solve(spec, eps=1e-14, maxit=10)
    X, Y = np.zeros_like(spec.B), np.zeros_like(spec.B)
    P = lambda Z: np.where(spec.mask.indicator, Z, 0.0)
    for _ in range(10):
        X = svt(X - P(X + Y - spec.B) / spec.mu, spec.lam / spec.mu)
        Y = shrink(Y - P(X + Y - spec.B) / spec.nu, spec.lam * spec.tau / spec.nu)
    assert np.abs(res.x - X).max() <= 1e-10
    assert np.abs(res.y - Y).max() <= 1e-10


@given(st.integers(0, 2 ** 32 - 1))
def test_x_step_minimizes_its_subproblem(seed):
    g = synth_gen(8, 1, seed=seed % 1000)
    spec = g.spec()
    r = np.random.default_rng(seed)
    Xk, Yk = r.standard_normal((2, 8, 8))
    xi = build_rpca_problem(spec)[0].select_xi(Xk)
    Xn, _ = ubama_rpca_step(spec, Xk, Yk)
    P = spec.P

    def obj(X):
        # exact coupling plus the kernel (mu I - P)/lam
        D = X - Xk
        R = P(X + Yk - spec.B)
        return (nuclear_norm(X) - np.vdot(xi, X) + 0.5 / spec.lam * np.vdot(R, R)
                + 0.5 / spec.lam * (spec.mu * np.vdot(D, D) - np.vdot(D, P(D))))

    base = obj(Xn)
    for _ in range(10):
        assert obj(Xn + 1e-4 * r.standard_normal(Xn.shape)) >= base - 1e-10


def test_ubama_descent_audit(inst):
    res = ubama_rpca_solve(inst.spec(), maxit=200)
    assert descent_audit(res.trace).ok


def test_adca_x_block_full_mask_oracle():
    r = np.random.default_rng(0)
    B = r.standard_normal((10, 8))
    spec = RpcaProblemSpec(B, SamplingMask.full(B.shape), 0.3, 0.8, CappedNormParams(1.0, 1.0))
    xi = 0.2 * r.standard_normal(B.shape)
    Yk = 0.1 * r.standard_normal(B.shape)
    X, info = adca_x_block(spec, xi, Yk, inner_tol=1e-10, maxit=5000)
    exact = svt(B - Yk + spec.lam * xi, spec.lam)
    assert np.linalg.norm(X - exact) <= 1e-6 * max(1.0, np.linalg.norm(exact))
    assert info["primal"] <= 1e-10 and info["dual"] <= 1e-10


def test_adca_y_block_vanishes_off_mask(inst):
    spec = inst.spec()
    res = rpca_solve(spec, "adca", maxit=3)
    assert not res.y[~spec.mask.indicator].any()


def test_dca_admm_residuals_within_tolerance(inst):
    spec = inst.spec()
    problem, _ = build_rpca_problem(spec)
    Z = np.zeros_like(spec.B)
    X, Y, info = dca_admm_subproblem(spec, problem.select_xi(Z), np.zeros_like(Z), Z, Z,
                                     inner_tol=1e-5, maxit=2000)
    assert info["primal"] <= 1e-5 and info["dual"] <= 1e-5


def test_inner_cap_raises(inst):
    spec = inst.spec()
    with pytest.raises(InnerSolverError):
        adca_x_block(spec, np.zeros_like(spec.B), np.zeros_like(spec.B), inner_tol=1e-15, maxit=3)


def test_metrics_against_truth(inst):
    m = rpca_metrics(inst.X_star, inst.Y_star, inst)
    assert m.rel_x == 0 and m.rel_y == 0
    assert m.rank == 2 and m.nnz == np.count_nonzero(inst.Y_star)
    assert math.isnan(m.obj)
    m2 = rpca_metrics(2 * inst.X_star, np.zeros_like(inst.Y_star), inst, inst.spec())
    assert m2.rel_x == pytest.approx(1.0) and m2.rel_y == pytest.approx(1.0)
    assert m2.nnz == 0 and math.isfinite(m2.obj)


def test_video_error():
    A = np.ones((3, 3))
    mask = SamplingMask.full((3, 3))
    assert video_error(A, np.zeros_like(A), A, mask) == 0.0
    assert video_error(2 * A, np.zeros_like(A), A, mask) == pytest.approx(1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        RpcaProblemSpec(np.zeros((2, 2)), SamplingMask.full((2, 2)), 0.1, 0.1,
                        CappedNormParams(1, 1), mu=1.0)
    with pytest.raises(ValueError):
        rpca_solve(synth_gen(8, 1).spec(), "pca")
    with pytest.raises(ValueError):
        synth_gen(4, 5)


def test_gap_rule_separates_signal_from_outliers():
    g = synth_gen(64, 2, seed=42)
    s = np.linalg.svd(g.B, compute_uv=False)
    caps = default_caps(g.B, g.mask)
    assert s[2] < caps.kappa1 < s[1]
    assert caps.kappa1 == pytest.approx(np.sqrt(s[1] * s[2]))
    assert default_caps(g.B, g.mask, "median").kappa1 == pytest.approx(1.5 * np.median(s))
    with pytest.raises(ValueError):
        default_caps(g.B, g.mask, "mean")


def test_gap_rule_exact_low_rank():
    B = np.diag([5.0, 4.0, 0.0, 0.0])
    caps = default_caps(B, SamplingMask.full(B.shape))
    assert caps.kappa1 == pytest.approx(2.0)
