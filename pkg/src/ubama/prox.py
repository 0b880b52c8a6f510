"""Proximal operators, projections, subgradient selectors and Bregman kernels.

Every function here is pure: inputs are never modified and no state is kept
between calls.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import NumericalError

__all__ = [
    "shrink",
    "svt",
    "proj_box",
    "proj_simplex",
    "BregmanKernel",
    "bregman_distance",
    "CappedNormParams",
    "nuclear_norm",
    "capped_trace_excess",
    "capped_l1_excess",
    "subgrad_capped_trace",
    "subgrad_capped_l1",
    "iso_tv_norm",
    "subgrad_iso_tv",
]


def shrink(a, t):
    """Soft-thresholding ``sign(a) * max(|a| - t, 0)``, the prox of ``t*||.||_1``.

    Parameters
    ----------
    a : array_like
        Input of any shape.
    t : float
        Nonnegative threshold.

    Returns
    -------
    numpy.ndarray
        Array of the same shape as ``a``.
    """
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - t, 0.0)


def _svd(A):
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise NumericalError("SVD of a matrix with non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        # divide-and-conquer occasionally fails where the QR-iteration driver does not
        try:
            U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD did not converge: {exc}") from exc
    # LAPACK already returns descending order; keep the canonical form explicit.
    order = np.argsort(s)[::-1]
    return U[:, order], s[order], Vt[order]


def svt(A, t):
    """Singular value thresholding, the prox of ``t*||.||_*``.

    Returns ``U @ diag(shrink(s, t)) @ Vt`` for the thin SVD ``A = U diag(s) Vt``.
    """
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    U, s, Vt = _svd(A)
    s = np.maximum(s - t, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vt[keep]


def proj_box(x, lo, hi):
    """Euclidean projection onto ``[lo, hi]^n`` (componentwise clamp)."""
    if lo > hi:
        raise ValueError(f"empty box: lo={lo} > hi={hi}")
    return np.clip(np.asarray(x, dtype=float), lo, hi)


def proj_simplex(v):
    """Euclidean projection onto the unit simplex ``{x >= 0, sum(x) = 1}``.

    Sort-based method: with ``u`` sorted descending, the threshold is
    ``theta = (sum(u[:rho]) - 1) / rho`` for the largest ``rho`` keeping
    ``u[rho-1] > theta``. Works on the flattened input; the output keeps the
    input's shape.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("cannot project an empty vector onto the simplex")
    flat = v.ravel()
    u = np.sort(flat)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, u.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1] + 1
    theta = css[rho - 1] / rho
    return np.maximum(flat - theta, 0.0).reshape(v.shape)


@dataclass(frozen=True)
class BregmanKernel:
    """A strongly convex kernel ``psi`` and the distance it induces.

    Kinds
    -----
    ``"quadratic"``
        ``psi(x) = (weight/2) ||x||^2``.
    ``"operator"``
        ``psi(x) = (1/2) <x, M x>`` with ``M`` given by ``operator`` (a callable
        applying a symmetric positive (semi)definite map). ``modulus`` must be
        declared by the caller.
    ``"entropy"``
        ``psi(x) = weight * sum(x log x)`` on the nonnegative orthant, with
        ``0 log 0 = 0``.

    ``modulus`` is the strong-convexity constant used by the descent audit;
    for the entropy kernel it is ``weight``, valid on the unit box (hence on
    the simplex).
    """

    kind: str
    weight: float = 1.0
    operator: Optional[Callable] = None
    modulus: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("quadratic", "operator", "entropy"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "operator":
            if self.operator is None:
                raise ValueError("operator kernel needs an operator")
            if self.modulus is None:
                raise ValueError("operator kernel needs a declared modulus")
        elif self.weight <= 0:
            raise ValueError(f"kernel weight must be positive, got {self.weight}")
        if self.modulus is None:
            object.__setattr__(self, "modulus", float(self.weight))

    @classmethod
    def quadratic(cls, weight=1.0):
        return cls("quadratic", weight=float(weight))

    @classmethod
    def operator_quadratic(cls, operator, modulus):
        return cls("operator", operator=operator, modulus=float(modulus))

    @classmethod
    def entropy(cls, weight=1.0):
        return cls("entropy", weight=float(weight))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * self.weight * float(np.vdot(x, x))
        if self.kind == "operator":
            return 0.5 * float(np.vdot(x, self.operator(x)))
        if np.any(x < 0):
            raise NumericalError("entropy kernel evaluated outside the nonnegative orthant")
        return self.weight * float(np.sum(_xlogx(x)))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return self.weight * x
        if self.kind == "operator":
            return self.operator(x)
        if np.any(x <= 0):
            raise NumericalError("entropy kernel gradient needs strictly positive arguments")
        return self.weight * (1.0 + np.log(x))

    def distance(self, x, y):
        return bregman_distance(self, x, y)

    def check_positive_definite(self, shape, trials=20, seed=0):
        """Probe ``<v, M v> > 0`` on seeded Gaussian vectors (operator kind)."""
        if self.kind != "operator":
            return True
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            v = rng.standard_normal(shape)
            if np.vdot(v, self.operator(v)) <= 0:
                return False
        return True


def _xlogx(x):
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def bregman_distance(kernel, x, y):
    """``psi(x) - psi(y) - <grad psi(y), x - y>`` via each kind's closed form."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    d = x - y
    if kernel.kind == "quadratic":
        return 0.5 * kernel.weight * float(np.vdot(d, d))
    if kernel.kind == "operator":
        return 0.5 * float(np.vdot(d, kernel.operator(d)))
    if np.any(y <= 0):
        raise NumericalError("entropy distance needs a strictly positive second argument")
    if np.any(x < 0):
        raise NumericalError("entropy distance needs a nonnegative first argument")
    pos = x > 0
    terms = y - x
    terms[pos] += x[pos] * np.log(x[pos] / y[pos])
    return kernel.weight * float(np.sum(terms))


@dataclass(frozen=True)
class CappedNormParams:
    """Caps for the capped trace norm (``kappa1``) and capped l1 norm (``kappa2``)."""

    kappa1: float
    kappa2: float

    def __post_init__(self):
        if not (self.kappa1 > 0 and self.kappa2 > 0):
            raise ValueError(f"caps must be positive, got {self.kappa1}, {self.kappa2}")


def nuclear_norm(X):
    return float(np.sum(np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)))


def capped_trace_excess(X, kappa1):
    """``sum_i max(sigma_i(X) - kappa1, 0)``; convex, so ``||X||_* - this`` is DC."""
    s = np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)
    return float(np.sum(np.maximum(s - kappa1, 0.0)))


def capped_l1_excess(Y, kappa2):
    """``sum_ij max(|Y_ij| - kappa2, 0)``."""
    return float(np.sum(np.maximum(np.abs(np.asarray(Y, dtype=float)) - kappa2, 0.0)))


def subgrad_capped_trace(X, kappa1):
    """A member of the subdifferential of :func:`capped_trace_excess` at ``X``.

    Singular directions with ``sigma_i >= kappa1`` get weight 1, the rest 0
    (ties resolve to 1).
    """
    if kappa1 <= 0:
        raise ValueError(f"kappa1 must be positive, got {kappa1}")
    U, s, Vt = _svd(X)
    keep = s >= kappa1
    return U[:, keep] @ Vt[keep]


def subgrad_capped_l1(Y, kappa2):
    """Entrywise ``sign(Y)`` where ``|Y| >= kappa2`` and 0 elsewhere."""
    if kappa2 <= 0:
        raise ValueError(f"kappa2 must be positive, got {kappa2}")
    Y = np.asarray(Y, dtype=float)
    return np.where(np.abs(Y) >= kappa2, np.sign(Y), 0.0)


def iso_tv_norm(y):
    """Grouped l2,1 norm of a paired field of shape ``(2, ...)``."""
    y = np.asarray(y, dtype=float)
    return float(np.sum(np.sqrt(y[0] ** 2 + y[1] ** 2)))


def subgrad_iso_tv(y):
    """Per-pixel unit vector ``(y0, y1) / |(y0, y1)|``, and ``(0, 0)`` on zero pairs."""
    y = np.asarray(y, dtype=float)
    norm = np.sqrt(y[0] ** 2 + y[1] ** 2)
    out = np.zeros_like(y)
    nz = norm > 0
    out[:, nz] = y[:, nz] / norm[nz]
    return out
