"""Weighted anisotropic-minus-isotropic TV restoration.

Model, with ``y`` a penalized copy of the image gradient ``D x``::

    min_{x, y}  1/2 ||S K x - b||^2 + tau (||y||_1 - alpha ||y||_{2,1})
                + beta/2 ||D x - y||^2

``S`` is a sampling mask and ``K`` a periodic blur (or the identity). Two
solvers share the same y-update (one shrinkage step against the linearized
concave part):

* ``ubama``: x-kernel ``1/2 ||.||^2_M`` with ``M = mu K^T K - K^T S^T S K``,
  which turns the x-update into one FFT solve;
* ``palm``: x-kernel with ``M = c I - beta D^T D`` (a linearized coupling
  term), solved inexactly by preconditioned conjugate gradients.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linops
from .errors import InnerSolverError, NumericalError
from .linops import Convolution, SamplingMask, diff_adjoint, diff_forward
from .prox import BregmanKernel, iso_tv_norm, shrink, subgrad_iso_tv
from .solver import GeneralizedDcProblem, SolverConfig, run

__all__ = [
    "TvProblemSpec",
    "tv_defaults",
    "tv_objective",
    "ubama_tv_x_step",
    "ubama_tv_y_step",
    "palm_constants",
    "palm_tv_x_step",
    "pcg",
    "PcgInfo",
    "build_tv_problem",
    "tv_solve",
    "phantom",
    "make_tv_instance",
]


def tv_defaults(delta, deblur):
    """Model weights ``(tau, beta, alpha)`` for a noise level ``delta``.

    Denoising/inpainting (``K = I``) scales with the noise: ``(0.7 delta,
    50 delta)``; deblurring uses the fixed pair ``(4e-4, 2e-2)``. ``alpha`` is
    always 0.1.
    """
    if delta < 0:
        raise ValueError(f"noise level must be nonnegative, got {delta}")
    if deblur:
        return 4e-4, 2e-2, 0.1
    if delta == 0:
        raise ValueError("delta = 0 gives zero weights for the K = I scenario")
    return 0.7 * delta, 50.0 * delta, 0.1


@dataclass
class TvProblemSpec:
    """Data and weights of one TV restoration instance.

    ``kernel=None`` means ``K = I``; ``mask=None`` means every pixel is seen.
    ``nu`` defaults to ``0.1 * beta``.
    """

    b: np.ndarray
    tau: float
    alpha: float
    beta: float
    mask: Optional[SamplingMask] = None
    kernel: Optional[np.ndarray] = None
    delta: float = 0.0
    mu: float = 1.01
    nu: Optional[float] = None
    conv: Optional[Convolution] = field(init=False, default=None, repr=False)

    def __post_init__(self):
        self.b = linops.as_image(self.b)
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.tau < 0 or self.beta <= 0:
            raise ValueError(f"need tau >= 0 and beta > 0, got {self.tau}, {self.beta}")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.mask is None:
            self.mask = SamplingMask.full(self.b.shape)
        if self.mask.shape != self.b.shape:
            raise ValueError("mask and image shapes differ")
        if self.nu is None:
            self.nu = 0.1 * self.beta
        if self.kernel is not None:
            self.conv = Convolution(self.kernel, self.b.shape)

    @property
    def shape(self):
        return self.b.shape

    def K(self, x):
        return x if self.conv is None else self.conv(x)

    def Kt(self, u):
        return u if self.conv is None else self.conv.adjoint(u)

    def SK(self, x):
        return self.mask(self.K(x))

    def normal(self, x):
        """``K^T S^T S K x``."""
        return self.Kt(self.mask(self.K(x)))

    def KtK(self, x):
        return x if self.conv is None else self.conv.gram(x)

    def Ktb(self):
        return self.Kt(self.mask(self.b))


def tv_objective(spec, x, y):
    r = spec.SK(x) - spec.b
    dx = diff_forward(x) - y
    return float(0.5 * np.vdot(r, r)
                 + spec.tau * (np.abs(y).sum() - spec.alpha * iso_tv_norm(y))
                 + 0.5 * spec.beta * np.vdot(dx, dx))


def ubama_tv_x_step(spec, xk, yk, u=None):
    """Exact x-update with the ``M = mu K^T K - K^T S^T S K`` kernel.

    Solves ``(beta D^T D + mu K^T K) x = K^T S^T b + beta D^T y^k
    + (mu K^T K - K^T S^T S K) x^k (+ u)``.
    """
    rhs = spec.Ktb() + spec.beta * diff_adjoint(yk) + spec.mu * spec.KtK(xk) - spec.normal(xk)
    if u is not None:
        rhs = rhs + u
    return linops.solve_tv_x_system(spec.beta, spec.mu, spec.conv, rhs)


def ubama_tv_y_step(spec, x_next, yk, eta, nu=None, tilt=None):
    """One-shot y-update ``shrink((beta Dx + nu y^k + tau alpha eta)/(beta+nu), tau/(beta+nu))``.

    ``tilt`` replaces ``tau * alpha * eta`` when given (the engine passes the
    already-scaled subgradient).
    """
    nu = spec.nu if nu is None else nu
    if tilt is None:
        tilt = spec.tau * spec.alpha * np.asarray(eta)
    s = spec.beta + nu
    return shrink((spec.beta * diff_forward(x_next) + nu * yk + tilt) / s, spec.tau / s)


@dataclass
class PcgInfo:
    iterations: int
    residual: float
    converged: bool


def pcg(apply_A, b, tol=1e-6, maxit=500, precond=None, x0=None):
    """Preconditioned conjugate gradients for a symmetric positive definite map.

    Stops when ``||b - A x|| <= tol * ||b||``. ``precond`` applies an
    approximate inverse of ``A`` (identity when omitted).

    Returns
    -------
    x : ndarray
    info : PcgInfo
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), PcgInfo(0, 0.0, True)
    M = (lambda r: r) if precond is None else precond
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x)
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return x, PcgInfo(0, res, True)
    z = M(r)
    p = z.copy()
    rz = np.vdot(r, z)
    for it in range(1, maxit + 1):
        Ap = apply_A(p)
        curv = np.vdot(p, Ap)
        if curv <= 0:
            raise NumericalError(f"non-positive curvature {curv:.3e} at PCG iteration {it}")
        alpha = rz / curv
        x = x + alpha * p
        r = r - alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, PcgInfo(it, res, True)
        z = M(r)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, PcgInfo(maxit, res, False)


def palm_constants(spec):
    """``(c, d, nu)`` for the PALM baseline.

    ``c = 1.01 (||SK||^2 + 8 beta)`` with ``||SK||^2`` bounded by the peak of
    ``|K^|^2`` and ``||D^T D|| <= 8``; ``d = 1.01 beta`` and ``nu = d - beta``.
    """
    sk2 = 1.0 if spec.conv is None else float(np.max(np.abs(spec.conv.otf)) ** 2)
    c = 1.01 * (sk2 + 8.0 * spec.beta)
    d = 1.01 * spec.beta
    return c, d, d - spec.beta


def _normal_diagonal(spec):
    if spec.conv is None:
        return spec.mask.indicator.astype(float)
    k2 = spec.conv.kernel ** 2
    return linops.circ_conv_adjoint_image(spec.mask.indicator.astype(float), k2)


def palm_tv_x_step(spec, xk, yk, c, pcg_tol=1e-5, maxit=1000, u=None):
    """Inexact x-update ``(K^T S^T S K + c I)^{-1}(K^T S^T b + c x^k - beta D^T(Dx^k - y^k))``.

    Jacobi-preconditioned CG, warm-started at ``x^k``.
    """
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    rhs = spec.Ktb() + c * xk - spec.beta * diff_adjoint(diff_forward(xk) - yk)
    if u is not None:
        rhs = rhs + u
    diag = _normal_diagonal(spec) + c
    x, info = pcg(lambda v: spec.normal(v) + c * v, rhs, tol=pcg_tol, maxit=maxit,
                  precond=lambda r: r / diag, x0=xk)
    if not info.converged:
        raise InnerSolverError(f"PCG reached {maxit} iterations at residual {info.residual:.3e}")
    return x


def build_tv_problem(spec, method="ubama", pcg_tol=1e-5):
    """Assemble the engine callbacks and kernel pair for ``method``.

    Returns
    -------
    problem : GeneralizedDcProblem
    kernels : tuple of BregmanKernel
    """
    tau, alpha, beta = spec.tau, spec.alpha, spec.beta

    def f1(x):
        r = spec.SK(x) - spec.b
        return 0.5 * float(np.vdot(r, r))

    def h_plus(x, y):
        d = diff_forward(x) - y
        return 0.5 * beta * float(np.vdot(d, d))

    def solve_y(x_next, yk, v, kernel):
        return ubama_tv_y_step(spec, x_next, yk, None, nu=kernel.weight, tilt=v)

    if method == "ubama":
        def M(v):
            return spec.mu * spec.KtK(v) - spec.normal(v)

        low = 1.0 if spec.conv is None else float(np.min(np.abs(spec.conv.otf)) ** 2)
        psi = BregmanKernel.operator_quadratic(M, modulus=(spec.mu - 1.0) * low)
        phi = BregmanKernel.quadratic(spec.nu)

        def solve_x(xk, yk, u, kernel):
            return ubama_tv_x_step(spec, xk, yk, u)
    elif method == "palm":
        c, _, nu_palm = palm_constants(spec)
        psi = BregmanKernel.operator_quadratic(
            lambda v: c * v - beta * diff_adjoint(diff_forward(v)), modulus=c - 8.0 * beta)
        phi = BregmanKernel.quadratic(nu_palm)

        def solve_x(xk, yk, u, kernel):
            return palm_tv_x_step(spec, xk, yk, c, pcg_tol, u=u)
    else:
        raise ValueError(f"unknown TV method {method!r}")

    problem = GeneralizedDcProblem(
        solve_x=solve_x,
        solve_y=solve_y,
        f1=f1,
        f2=lambda y: tau * float(np.abs(y).sum()),
        g2=lambda y: tau * alpha * iso_tv_norm(y),
        h_plus=h_plus,
        subgrad_g2=lambda y: tau * alpha * subgrad_iso_tv(y),
        name=f"tv-{method}",
    )
    return problem, (psi, phi)


def tv_solve(spec, method="ubama", eps=1e-4, maxit=1000, pcg_tol=1e-5, x_ref=None,
             x0=None, audit=True, record_time=True):
    """Restore an image; returns the engine's :class:`~ubama.solver.SolveResult`.

    Starts from ``x0`` (default: the observation ``b``) and ``y0 = D x0``.
    With ``x_ref`` the trace carries the SNR of every iterate.
    """
    from .metrics import snr

    problem, kernels = build_tv_problem(spec, method, pcg_tol)
    config = SolverConfig(kernels=kernels, eps=eps, max_iter=maxit, audit=audit,
                          record_time=record_time)
    x0 = spec.b.copy() if x0 is None else np.asarray(x0, dtype=float)
    monitor = None if x_ref is None else (lambda x, y: snr(x_ref, x))
    return run(problem, config, x0, diff_forward(x0), monitor=monitor)


def phantom(n=64):
    """Piecewise-constant grayscale test image in ``[0, 1]``."""
    i, j = np.mgrid[0:n, 0:n] / n
    img = np.full((n, n), 0.15)
    img[(0.12 < i) & (i < 0.45) & (0.1 < j) & (j < 0.55)] = 0.85
    img[(i - 0.68) ** 2 + (j - 0.3) ** 2 < 0.18 ** 2] = 0.55
    img[(i - 0.35) ** 2 / 0.04 + (j - 0.75) ** 2 / 0.012 < 1] = 1.0
    img[(0.6 < i) & (i < 0.9) & (0.6 < j) & (j < 0.9) & (i + j < 1.6)] = 0.35
    img[(0.2 < i) & (i < 0.3) & (0.2 < j) & (j < 0.3)] = 0.0
    return img


def make_tv_instance(n=64, delta=0.1, sample_rate=0.5, deblur=False, radius=2, seed=0):
    """Seeded degraded observation of :func:`phantom`.

    Returns
    -------
    x_true : ndarray
    spec : TvProblemSpec
        With default weights from :func:`tv_defaults`.
    """
    from .rng import seeded_rng

    rng = seeded_rng(seed)
    x_true = phantom(n)
    mask = linops.random_mask(x_true.shape, sample_rate, rng)
    kernel = linops.disk_kernel(radius) if deblur else None
    blurred = x_true if kernel is None else linops.circ_conv(x_true, kernel)
    b = mask(blurred + delta * rng.standard_normal(x_true.shape))
    tau, beta, alpha = tv_defaults(delta, deblur)
    spec = TvProblemSpec(b=b, tau=tau, alpha=alpha, beta=beta, mask=mask, kernel=kernel,
                         delta=delta)
    return x_true, spec
