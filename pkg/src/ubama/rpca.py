"""Capped-norm robust PCA from incomplete, noisy observations.

Model::

    min_{X, Y}  ||X||_* - g1(X; k1) + tau (||Y||_1 - g2(Y; k2))
                + 1/(2 lambda) ||P_Omega(X + Y - B)||_F^2

with ``g1 = sum max(sigma_i - k1, 0)`` and ``g2 = sum max(|Y_ij| - k2, 0)``.

Solvers
-------
``ubama``
    Bregman kernels ``M = (mu I - P)/lambda`` and ``N = (nu I - P)/lambda``
    make both block updates closed-form (SVT and shrinkage).
``adca``
    Alternating DC steps without proximal terms; the X-block is solved by an
    inner ADMM, the Y-block in closed form.
``dca_admm``
    Classic DCA on the joint variable; each convex subproblem is solved by a
    three-block ADMM on the splitting ``W = X + Y``.
"""

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InnerSolverError
from .linops import SamplingMask, random_mask
from .metrics import relative_error
from .prox import (BregmanKernel, CappedNormParams, _svd, capped_l1_excess, shrink,
                   subgrad_capped_l1, subgrad_capped_trace, svt)
from .rng import seeded_rng
from .solver import (GeneralizedDcProblem, IterationRecord, SolveResult, SolverConfig,
                     evaluate_phi, evaluate_psi, relative_change, run)

__all__ = [
    "RpcaProblemSpec",
    "SyntheticRpcaInstance",
    "rpca_defaults",
    "default_caps",
    "synth_gen",
    "build_rpca_problem",
    "rpca_objective",
    "ubama_rpca_step",
    "ubama_rpca_solve",
    "adca_x_block",
    "adca_rpca_solve",
    "dca_admm_subproblem",
    "dca_admm_solve",
    "rpca_solve",
    "RpcaMetrics",
    "rpca_metrics",
    "video_error",
]


def rpca_defaults(m, n, sr, delta, video=False):
    """Weights ``(tau, lam)``.

    Synthetic data: ``tau = 1/sqrt(n)``, ``lam = sqrt(sr * sqrt(8 n sr) * delta)``.
    Video data: ``tau = 1/sqrt(max(m, n))``, ``lam = (sqrt(m) + sqrt(n)) delta sqrt(sr)``.
    """
    if not 0 < sr <= 1:
        raise ValueError(f"sample rate must lie in (0, 1], got {sr}")
    if delta < 0:
        raise ValueError(f"noise level must be nonnegative, got {delta}")
    if video:
        return 1.0 / math.sqrt(max(m, n)), (math.sqrt(m) + math.sqrt(n)) * delta * math.sqrt(sr)
    return 1.0 / math.sqrt(n), math.sqrt(sr * math.sqrt(8.0 * n * sr) * delta)


def default_caps(B, mask, rule="gap"):
    """Caps ``(kappa1, kappa2)`` from the observed data alone.

    ``kappa2 = 0.1 * max |B|``. For ``kappa1`` the singular values ``s`` of
    ``P(B)`` are scanned for the largest ratio ``s[i] / s[i+1]`` within the
    top half of the spectrum and the cap is placed at the geometric midpoint
    ``sqrt(s[i] s[i+1])``, separating the low-rank signal from the bulk
    produced by outliers and noise. ``rule="median"`` gives the plain
    ``1.5 * median(s)`` instead; on sparse-outlier data that value lies inside
    the outlier bulk, so spurious directions are never shrunk.
    """
    PB = np.where(mask.indicator, B, 0.0)
    s = np.linalg.svd(PB, compute_uv=False)
    kappa2 = 0.1 * float(np.max(np.abs(B)))
    if rule == "median" or s.size < 2:
        return CappedNormParams(1.5 * float(np.median(s)), kappa2)
    if rule != "gap":
        raise ValueError(f"unknown cap rule {rule!r}")
    half = max(1, s.size // 2)
    top, below = s[:half], s[1:half + 1]
    ratios = np.where(below > 0, top / np.where(below > 0, below, 1.0), np.inf)
    i = int(np.argmax(ratios))
    if below[i] == 0:
        # exact rank i + 1: any cap inside (0, s[i]) separates; take the midpoint
        return CappedNormParams(0.5 * float(s[i]), kappa2)
    return CappedNormParams(float(np.sqrt(s[i] * below[i])), kappa2)


@dataclass
class RpcaProblemSpec:
    B: np.ndarray
    mask: SamplingMask
    tau: float
    lam: float
    caps: CappedNormParams
    mu: float = 1.01
    nu: float = 1.01

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        if self.B.shape != self.mask.shape:
            raise ValueError("observation and mask shapes differ")
        if not (self.tau > 0 and self.lam > 0):
            raise ValueError(f"tau and lambda must be positive, got {self.tau}, {self.lam}")
        if not (self.mu > 1 and self.nu > 1):
            raise ValueError(f"mu and nu must exceed 1, got {self.mu}, {self.nu}")

    def P(self, Z):
        return np.where(self.mask.indicator, Z, 0.0)


@dataclass
class SyntheticRpcaInstance:
    X_star: np.ndarray
    Y_star: np.ndarray
    noise: np.ndarray
    mask: SamplingMask
    B: np.ndarray
    seed: int
    sample_rate: float
    delta: float

    def spec(self, caps=None, mu=1.01, nu=1.01, cap_rule="gap"):
        """Problem spec with default weights and caps (overridable)."""
        m, n = self.B.shape
        tau, lam = rpca_defaults(m, n, self.sample_rate, self.delta)
        caps = default_caps(self.B, self.mask, cap_rule) if caps is None else caps
        return RpcaProblemSpec(self.B, self.mask, tau, lam, caps, mu, nu)


def synth_gen(n, r, sparse_frac=0.05, sr=0.9, delta=0.01, seed=0):
    """Low-rank plus sparse plus noise test matrix, observed through a random mask.

    ``X* = Q R^T`` with ``n x r`` standard Gaussian factors; ``Y*`` has exactly
    ``round(sparse_frac n^2)`` nonzeros drawn uniformly from ``[-10, 10]``;
    the noise is Gaussian with standard deviation ``delta``; the mask is
    Bernoulli(``sr``).
    """
    if r > n:
        raise ValueError(f"rank {r} exceeds dimension {n}")
    rng = seeded_rng(seed)
    Q = rng.standard_normal((n, r))
    R = rng.standard_normal((n, r))
    X_star = Q @ R.T
    Y_star = np.zeros(n * n)
    support = rng.choice(n * n, size=int(round(sparse_frac * n * n)), replace=False)
    Y_star[support] = rng.uniform(-10.0, 10.0, size=support.size)
    Y_star = Y_star.reshape(n, n)
    noise = delta * rng.standard_normal((n, n))
    mask = random_mask((n, n), sr, rng)
    B = np.where(mask.indicator, X_star + Y_star + noise, 0.0)
    return SyntheticRpcaInstance(X_star, Y_star, noise, mask, B, seed, sr, delta)


def rpca_objective(spec, X, Y):
    k1, k2 = spec.caps.kappa1, spec.caps.kappa2
    r = spec.P(X + Y - spec.B)
    s = np.linalg.svd(X, compute_uv=False)
    return float(np.sum(np.minimum(s, k1))
                 + spec.tau * np.sum(np.minimum(np.abs(Y), k2))
                 + 0.5 / spec.lam * np.vdot(r, r))


class _SpectralCache:
    """Thin SVDs of the most recently seen matrices, keyed by identity.

    One outer iteration touches the same iterate in the SVT output, the
    subgradient selection and both objective evaluations; caching avoids
    recomputing the factorization each time. References are held so that
    identities cannot be recycled while cached.
    """

    def __init__(self, size=4):
        self.size = size
        self.entries = []

    def svd(self, X):
        for A, factors in self.entries:
            if A is X:
                return factors
        factors = _svd(X)
        self.entries.append((X, factors))
        if len(self.entries) > self.size:
            self.entries.pop(0)
        return factors

    def put(self, X, factors):
        self.entries.append((X, factors))
        if len(self.entries) > self.size:
            self.entries.pop(0)


def build_rpca_problem(spec):
    """Engine callbacks and kernel pair for the UBAMA solver."""
    lam, tau = spec.lam, spec.tau
    k1, k2 = spec.caps.kappa1, spec.caps.kappa2
    cache = _SpectralCache()

    def sv(X):
        return cache.svd(X)[1]

    def subgrad_g1(X):
        U, s, Vt = cache.svd(X)
        keep = s >= k1
        return U[:, keep] @ Vt[keep]

    def h_plus(X, Y):
        r = spec.P(X + Y - spec.B)
        return 0.5 / lam * float(np.vdot(r, r))

    def solve_x(Xk, Yk, u, kernel):
        mu = spec.mu
        Z = Xk - spec.P(Xk + Yk - spec.B) / mu + (lam / mu) * u
        U, s, Vt = _svd(Z)
        s = np.maximum(s - lam / mu, 0.0)
        keep = s > 0
        X = (U[:, keep] * s[keep]) @ Vt[keep]
        cache.put(X, (U[:, keep], s[keep], Vt[keep]))
        return X

    def solve_y(Xn, Yk, v, kernel):
        nu = spec.nu
        Z = Yk - spec.P(Xn + Yk - spec.B) / nu + (lam / nu) * v
        return shrink(Z, lam * tau / nu)

    psi = BregmanKernel.operator_quadratic(lambda Z: (spec.mu * Z - spec.P(Z)) / lam,
                                           modulus=(spec.mu - 1.0) / lam)
    phi = BregmanKernel.operator_quadratic(lambda Z: (spec.nu * Z - spec.P(Z)) / lam,
                                           modulus=(spec.nu - 1.0) / lam)
    problem = GeneralizedDcProblem(
        solve_x=solve_x,
        solve_y=solve_y,
        f1=lambda X: float(np.sum(sv(X))),
        g1=lambda X: float(np.sum(np.maximum(sv(X) - k1, 0.0))),
        f2=lambda Y: tau * float(np.abs(Y).sum()),
        g2=lambda Y: tau * capped_l1_excess(Y, k2),
        h_plus=h_plus,
        subgrad_g1=subgrad_g1,
        subgrad_g2=lambda Y: tau * subgrad_capped_l1(Y, k2),
        name="rpca-ubama",
    )
    return problem, (psi, phi)


def ubama_rpca_step(spec, Xk, Yk):
    """One closed-form UBAMA iteration; returns ``(X^{k+1}, Y^{k+1})``.

    ``X+ = SVT(X - P(X + Y - B)/mu + (lam/mu) xi, lam/mu)`` and
    ``Y+ = shrink(Y - P(X+ + Y - B)/nu + (lam tau/nu) eta, lam tau/nu)``.
    """
    xi = subgrad_capped_trace(Xk, spec.caps.kappa1)
    Xn = svt(Xk - spec.P(Xk + Yk - spec.B) / spec.mu + (spec.lam / spec.mu) * xi,
             spec.lam / spec.mu)
    eta = subgrad_capped_l1(Yk, spec.caps.kappa2)
    t = spec.lam * spec.tau / spec.nu
    Yn = shrink(Yk - spec.P(Xn + Yk - spec.B) / spec.nu + t * eta, t)
    return Xn, Yn


def ubama_rpca_solve(spec, eps=1e-4, maxit=500, X0=None, Y0=None, audit=True,
                     record_time=True):
    problem, kernels = build_rpca_problem(spec)
    config = SolverConfig(kernels=kernels, eps=eps, max_iter=maxit, audit=audit,
                          record_time=record_time)
    X0 = np.zeros_like(spec.B) if X0 is None else X0
    Y0 = np.zeros_like(spec.B) if Y0 is None else Y0
    return run(problem, config, X0, Y0)


def _residuals(primal, dual, W):
    # both residuals scaled like the outer stopping rule: ||.|| / max(1, ||W||)
    scale = max(1.0, float(np.linalg.norm(W)))
    return primal / scale, dual / scale


def adca_x_block(spec, xi, Yk, X0=None, inner_tol=1e-4, maxit=500, rho=None, state=None):
    """``argmin ||X||_* - <xi, X> + 1/(2 lam) ||P(X + Y^k - B)||^2`` by ADMM.

    Splitting ``X = W``; updates are SVT in ``X``, an entrywise quadratic in
    ``W`` and a scaled dual ascent. Stops when the primal residual
    ``||X - W||`` and the dual residual ``||W - W_prev||``, both divided by
    ``max(1, ||W||)``, are ``<= inner_tol``. ``state`` carries the scaled dual
    between calls (warm start).

    Returns
    -------
    X : ndarray
    info : dict
        ``iterations``, ``primal``, ``dual``.
    """
    lam = spec.lam
    rho = 1.0 / lam if rho is None else rho
    obs = spec.mask.indicator
    C = spec.B - Yk
    X = np.zeros_like(spec.B) if X0 is None else X0.copy()
    W = X.copy()
    U = np.zeros_like(X) if state is None or "U" not in state else state["U"]
    for it in range(1, maxit + 1):
        X = svt(W - U + xi / rho, 1.0 / rho)
        W_old = W
        V = X + U
        W = np.where(obs, (C / lam + rho * V) / (1.0 / lam + rho), V)
        U = U + X - W
        rp, rd = _residuals(np.linalg.norm(X - W), np.linalg.norm(W - W_old), W)
        if rp <= inner_tol and rd <= inner_tol:
            if state is not None:
                state["U"] = U
            return X, {"iterations": it, "primal": rp, "dual": rd}
    raise InnerSolverError(f"X-block ADMM hit {maxit} iterations (primal {rp:.2e}, dual {rd:.2e})")


def _adca_y_block(spec, eta, Xn):
    # off Omega the minimizer of tau|y| - tau*eta*y with |eta| <= 1 is 0
    t = spec.lam * spec.tau
    Z = shrink(spec.B - Xn + t * eta, t)
    return np.where(spec.mask.indicator, Z, 0.0)


def _baseline_run(spec, step, eps, maxit, X0, Y0, record_time):
    problem, _ = build_rpca_problem(spec)
    X = np.zeros_like(spec.B) if X0 is None else np.array(X0, dtype=float)
    Y = np.zeros_like(spec.B) if Y0 is None else np.array(Y0, dtype=float)
    phi0 = evaluate_phi(problem, X, Y)
    trace = [IterationRecord(0, phi0, phi0, math.nan, 0.0 if record_time else math.nan)]
    t0 = time.perf_counter()
    converged = False
    state = {}
    for k in range(1, maxit + 1):
        xi = problem.select_xi(X)
        eta = problem.select_eta(Y)
        Xn, Yn = step(X, Y, xi, eta, state)
        tol = max(relative_change(Xn, X), relative_change(Yn, Y))
        phi = evaluate_phi(problem, Xn, Yn)
        psi = evaluate_psi(problem, Xn, xi, Yn, eta, X, Y)
        elapsed = (time.perf_counter() - t0) * 1e3 if record_time else math.nan
        trace.append(IterationRecord(k, phi, psi, tol, elapsed))
        X, Y = Xn, Yn
        if tol <= eps:
            converged = True
            break
    return SolveResult(X, Y, trace, converged, "converged" if converged else "max_iter")


def adca_rpca_solve(spec, eps=1e-4, maxit=500, inner_tol=1e-4, X0=None, Y0=None,
                    record_time=True):
    """Alternating DC baseline: exact block minimizations after linearizing the caps."""
    def step(X, Y, xi, eta, state):
        # the engine's eta is already scaled by tau; the Y-block wants the raw sign pattern
        Xn, _ = adca_x_block(spec, xi, Y, X0=X, inner_tol=inner_tol, state=state)
        eta_raw = subgrad_capped_l1(Y, spec.caps.kappa2)
        return Xn, _adca_y_block(spec, eta_raw, Xn)

    return _baseline_run(spec, step, eps, maxit, X0, Y0, record_time)


def dca_admm_subproblem(spec, xi, eta, X0, Y0, inner_tol=1e-4, maxit=500, rho=None, state=None):
    """Joint convex subproblem of DCA solved by ADMM.

    ``min ||X||_* + tau||Y||_1 - <xi, X> - tau <eta, Y> + 1/(2 lam)||P(X + Y - B)||^2``
    with the constraint ``W = X + Y``, penalty ``rho = 1/lam``; one sweep
    updates ``X`` (SVT), ``Y`` (shrink), ``W`` (entrywise quadratic) and the
    scaled dual ``U``. ``state`` carries the dual between calls (warm start).

    Returns ``(X, Y, info)``.
    """
    lam, tau = spec.lam, spec.tau
    rho = 1.0 / lam if rho is None else rho
    obs = spec.mask.indicator
    X, Y = X0.copy(), Y0.copy()
    W = X + Y
    U = np.zeros_like(X) if state is None or "U" not in state else state["U"]
    for it in range(1, maxit + 1):
        X = svt(W - Y - U + xi / rho, 1.0 / rho)
        Y = shrink(W - X - U + tau * eta / rho, tau / rho)
        W_old = W
        V = X + Y + U
        W = np.where(obs, (spec.B / lam + rho * V) / (1.0 / lam + rho), V)
        U = U + X + Y - W
        rp, rd = _residuals(np.linalg.norm(X + Y - W), np.linalg.norm(W - W_old), W)
        if rp <= inner_tol and rd <= inner_tol:
            if state is not None:
                state["U"] = U
            return X, Y, {"iterations": it, "primal": rp, "dual": rd}
    raise InnerSolverError(f"DCA-ADMM subproblem hit {maxit} iterations "
                           f"(primal {rp:.2e}, dual {rd:.2e})")


def dca_admm_solve(spec, eps=1e-4, maxit=500, inner_tol=1e-4, X0=None, Y0=None,
                   record_time=True):
    """DCA outer loop; each convex subproblem handed to :func:`dca_admm_subproblem`."""
    def step(X, Y, xi, eta, state):
        eta_raw = subgrad_capped_l1(Y, spec.caps.kappa2)
        Xn, Yn, _ = dca_admm_subproblem(spec, xi, eta_raw, X, Y, inner_tol, state=state)
        return Xn, Yn

    return _baseline_run(spec, step, eps, maxit, X0, Y0, record_time)


def rpca_solve(spec, method="ubama", eps=1e-4, maxit=500, inner_tol=1e-4, record_time=True):
    if method == "ubama":
        return ubama_rpca_solve(spec, eps, maxit, record_time=record_time)
    if method == "adca":
        return adca_rpca_solve(spec, eps, maxit, inner_tol, record_time=record_time)
    if method == "dca_admm":
        return dca_admm_solve(spec, eps, maxit, inner_tol, record_time=record_time)
    raise ValueError(f"unknown RPCA method {method!r}")


@dataclass
class RpcaMetrics:
    rel_x: float
    rel_y: float
    rank: int
    nnz: int
    obj: float


def rpca_metrics(X, Y, instance, spec: Optional[RpcaProblemSpec] = None):
    """Relative errors against the ground truth, numerical rank, support size, objective.

    Rank counts singular values above ``1e-8 * sigma_max``; the support counts
    entries with ``|Y_ij| > 1e-8``.
    """
    s = np.linalg.svd(X, compute_uv=False)
    rank = int(np.sum(s > 1e-8 * s[0])) if s.size and s[0] > 0 else 0
    nnz = int(np.sum(np.abs(Y) > 1e-8))
    obj = rpca_objective(spec, X, Y) if spec is not None else math.nan
    return RpcaMetrics(relative_error(X, instance.X_star), relative_error(Y, instance.Y_star),
                       rank, nnz, obj)


def video_error(X, Y, A, mask):
    """``||P(X + Y - A)||_F / ||P(A)||_F`` against a clean reference ``A``."""
    num = np.linalg.norm(np.where(mask.indicator, X + Y - A, 0.0))
    return float(num / np.linalg.norm(np.where(mask.indicator, A, 0.0)))
