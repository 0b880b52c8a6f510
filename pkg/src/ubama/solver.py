"""Generic Bregman alternating minimization engine for two-block DC problems.

The model is ::

    min_{x, y}  f1(x) - g1(x) + f2(y) - g2(y) + h_plus(x, y) - h_minus(x, y)

with ``f1, f2, g1, g2`` convex and ``h_minus`` smooth. One outer iteration:

1. ``xi  in dg1(x^k)`` and ``eta in dg2(y^k)`` (concave parts majorized through
   the Fenchel-Young inequality; the conjugate minimization is equivalent to
   picking a subgradient),
2. ``x^{k+1} = argmin f1(x) + h_plus(x, y^k) - <x - x^k, u> + B_psi(x, x^k)``
   with ``u = xi + grad_x h_minus(x^k, y^k)``,
3. ``y^{k+1} = argmin f2(y) + h_plus(x^{k+1}, y) - <y - y^k, v> + B_phi(y, y^k)``
   with ``v = eta + grad_y h_minus(x^{k+1}, y^k)``.

Problems supply both subproblem solvers; the engine owns the bookkeeping of the
objective ``Phi``, the surrogate ``Psi``, the stopping rule and the descent
audit.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import NumericalError, StepError

__all__ = [
    "GeneralizedDcProblem",
    "SolverConfig",
    "SolverState",
    "StepResult",
    "IterationRecord",
    "SolveResult",
    "AuditReport",
    "ubama_step",
    "evaluate_phi",
    "evaluate_psi",
    "relative_change",
    "run",
    "descent_audit",
]

log = logging.getLogger(__name__)


def _zero(*args):
    return 0.0


def _inner(a, b):
    return float(np.vdot(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))


@dataclass
class GeneralizedDcProblem:
    """Callbacks describing one instance of the two-block DC model.

    Unset scalar components default to the zero function and unset gradients
    and subgradient selectors to zero arrays, so reduced models (no concave
    part, no ``h_minus``) only fill in what they use.

    ``solve_x(x_k, y_k, u, kernel)`` and ``solve_y(x_next, y_k, v, kernel)``
    must return the exact minimizers of the two proximal subproblems.
    ``lipschitz_x`` and ``lipschitz_y`` are upper bounds on the block Lipschitz
    moduli of ``grad h_minus``; kernels must be more strongly convex than these.
    Optional ``conj_g1`` / ``conj_g2`` evaluate the conjugates directly; when
    absent, ``Psi`` uses the Fenchel equality at the selection point.
    """

    solve_x: Callable
    solve_y: Callable
    f1: Callable = _zero
    g1: Callable = _zero
    f2: Callable = _zero
    g2: Callable = _zero
    h_plus: Callable = _zero
    h_minus: Callable = _zero
    grad_x_hminus: Optional[Callable] = None
    grad_y_hminus: Optional[Callable] = None
    subgrad_g1: Optional[Callable] = None
    subgrad_g2: Optional[Callable] = None
    conj_g1: Optional[Callable] = None
    conj_g2: Optional[Callable] = None
    lipschitz_x: float = 0.0
    lipschitz_y: float = 0.0
    name: str = ""

    def select_xi(self, x):
        return np.zeros_like(x) if self.subgrad_g1 is None else self.subgrad_g1(x)

    def select_eta(self, y):
        return np.zeros_like(y) if self.subgrad_g2 is None else self.subgrad_g2(y)

    def gx(self, x, y):
        return np.zeros_like(x) if self.grad_x_hminus is None else self.grad_x_hminus(x, y)

    def gy(self, x, y):
        return np.zeros_like(y) if self.grad_y_hminus is None else self.grad_y_hminus(x, y)


@dataclass
class SolverConfig:
    """Kernels, stopping tolerance and iteration cap.

    ``kernels`` is either a fixed pair ``(psi, phi)`` of :class:`BregmanKernel`
    or a callable ``k -> (psi_k, phi_k)``.
    """

    kernels: object
    eps: float = 1e-4
    max_iter: int = 1000
    audit: bool = True
    record_time: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")

    def kernels_at(self, k):
        return self.kernels(k) if callable(self.kernels) else self.kernels

    def margin(self, problem, k=0):
        """``min(rho1 - lambda1+, rho2 - lambda2+)``; positive for compliant kernels."""
        psi, phi = self.kernels_at(k)
        return min(psi.modulus - problem.lipschitz_x, phi.modulus - problem.lipschitz_y)


@dataclass
class SolverState:
    x: np.ndarray
    y: np.ndarray
    k: int = 0


@dataclass
class StepResult:
    """Outcome of one outer iteration.

    ``xi``/``eta`` were selected at the previous iterate ``(x_prev, y_prev)``;
    ``u``/``v`` are the linear tilts fed to the two subproblems.
    """

    state: SolverState
    x_prev: np.ndarray
    y_prev: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    v: np.ndarray


@dataclass
class IterationRecord:
    k: int
    phi: float
    psi: float
    tol: float
    time_ms: float = math.nan
    snr: float = math.nan


@dataclass
class SolveResult:
    x: np.ndarray
    y: np.ndarray
    trace: List[IterationRecord]
    converged: bool
    status: str

    @property
    def iterations(self):
        return len(self.trace) - 1


def ubama_step(problem, state, config):
    """Run one outer iteration and return the new state plus the tilts used."""
    psi, phi = config.kernels_at(state.k)
    x, y = state.x, state.y
    xi = problem.select_xi(x)
    eta = problem.select_eta(y)
    u = xi + problem.gx(x, y)
    try:
        x_new = problem.solve_x(x, y, u, psi)
    except Exception as exc:
        raise StepError("x", exc) from exc
    v = eta + problem.gy(x_new, y)
    try:
        y_new = problem.solve_y(x_new, y, v, phi)
    except Exception as exc:
        raise StepError("y", exc) from exc
    return StepResult(SolverState(x_new, y_new, state.k + 1), x, y, xi, eta, u, v)


def evaluate_phi(problem, x, y):
    val = (problem.f1(x) - problem.g1(x) + problem.f2(y) - problem.g2(y)
           + problem.h_plus(x, y) - problem.h_minus(x, y))
    if not math.isfinite(val):
        raise NumericalError(f"objective is not finite ({val})")
    return float(val)


def evaluate_psi(problem, x, xi, y, eta, xi_at=None, eta_at=None):
    """Surrogate ``f1 + g1*(xi) - <x, xi> + f2 + g2*(eta) - <y, eta> + h``.

    ``xi_at`` / ``eta_at`` are the points where the subgradients were selected;
    the conjugates are then ``g*(xi) = <xi_at, xi> - g(xi_at)``. They default
    to ``x`` and ``y``, in which case ``Psi`` equals ``Phi``.
    """
    xi_at = x if xi_at is None else xi_at
    eta_at = y if eta_at is None else eta_at
    if problem.conj_g1 is not None:
        c1 = problem.conj_g1(xi)
    else:
        c1 = _inner(xi_at, xi) - problem.g1(xi_at)
    if problem.conj_g2 is not None:
        c2 = problem.conj_g2(eta)
    else:
        c2 = _inner(eta_at, eta) - problem.g2(eta_at)
    val = (problem.f1(x) + c1 - _inner(x, xi) + problem.f2(y) + c2 - _inner(y, eta)
           + problem.h_plus(x, y) - problem.h_minus(x, y))
    if not math.isfinite(val):
        raise NumericalError(f"surrogate is not finite ({val})")
    return float(val)


def relative_change(new, old):
    return float(np.linalg.norm(np.ravel(new - old)) / max(1.0, np.linalg.norm(np.ravel(old))))


def run(problem, config, x0, y0, monitor=None):
    """Iterate until the stopping quantity ``Tol <= eps`` or ``max_iter`` steps.

    ``Tol = max(|x+ - x| / max(1, |x|), |y+ - y| / max(1, |y|))``.

    Parameters
    ----------
    problem : GeneralizedDcProblem
    config : SolverConfig
    x0, y0 : ndarray
        Starting point; must give a finite objective.
    monitor : callable, optional
        ``monitor(x, y) -> float`` evaluated after every step and stored as the
        record's ``snr`` field.

    Returns
    -------
    SolveResult
        Final iterates and one :class:`IterationRecord` per step, preceded by
        a record for the starting point (``k = 0``, ``psi = phi``).
    """
    x0 = np.array(x0, dtype=float)
    y0 = np.array(y0, dtype=float)
    if config.margin(problem) <= 0:
        log.warning("kernel moduli do not dominate the Lipschitz bounds of grad h_minus; "
                    "descent is not guaranteed")
    phi0 = evaluate_phi(problem, x0, y0)
    snr0 = monitor(x0, y0) if monitor is not None else math.nan
    trace = [IterationRecord(0, phi0, phi0, math.nan, 0.0 if config.record_time else math.nan, snr0)]
    state = SolverState(x0, y0, 0)
    converged = False
    t0 = time.perf_counter()
    while state.k < config.max_iter:
        step = ubama_step(problem, state, config)
        new = step.state
        tol = max(relative_change(new.x, state.x), relative_change(new.y, state.y))
        phi = evaluate_phi(problem, new.x, new.y)
        if config.audit:
            psi = evaluate_psi(problem, new.x, step.xi, new.y, step.eta, step.x_prev, step.y_prev)
        else:
            psi = math.nan
        elapsed = (time.perf_counter() - t0) * 1e3 if config.record_time else math.nan
        snr = monitor(new.x, new.y) if monitor is not None else math.nan
        trace.append(IterationRecord(new.k, phi, psi, tol, elapsed, snr))
        state = new
        if tol <= config.eps:
            converged = True
            break
    status = "converged" if converged else "max_iter"
    return SolveResult(state.x, state.y, trace, converged, status)


@dataclass
class AuditReport:
    """Violations of ``Phi(z+) <= Psi(w+) <= Phi(z)`` along a trace."""

    checked: int
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    @property
    def first_violation(self):
        return self.violations[0] if self.violations else None


def descent_audit(trace, rtol=1e-9):
    """Check the descent chain on consecutive records.

    For every ``k`` the trace must satisfy, with slack ``rtol * (1 + |Phi(z^k)|)``:
    ``Phi(z^{k+1}) <= Psi(w^{k+1}) <= Phi(z^k)``, hence both sequences are
    nonincreasing. Violations are reported, never raised.
    """
    report = AuditReport(checked=max(0, len(trace) - 1))
    for prev, cur in zip(trace, trace[1:]):
        slack = rtol * (1.0 + abs(prev.phi))
        if math.isnan(cur.psi):
            report.violations.append(f"k={cur.k}: surrogate not recorded")
            continue
        if cur.phi > cur.psi + rtol * (1.0 + abs(cur.phi)):
            report.violations.append(f"k={cur.k}: Phi={cur.phi!r} exceeds Psi={cur.psi!r}")
        if cur.psi > prev.phi + slack:
            report.violations.append(f"k={cur.k}: Psi={cur.psi!r} exceeds previous Phi={prev.phi!r}")
        if cur.phi > prev.phi + slack:
            report.violations.append(f"k={cur.k}: Phi increased {prev.phi!r} -> {cur.phi!r}")
        if not math.isnan(prev.psi) and cur.psi > prev.psi + rtol * (1.0 + abs(prev.psi)):
            report.violations.append(f"k={cur.k}: Psi increased {prev.psi!r} -> {cur.psi!r}")
    return report
