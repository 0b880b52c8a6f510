"""Seeded oracle suites for the proximal and linear-operator primitives.

Each suite draws its own cases from a fixed seed and compares the fast
implementation against an independent reference: brute-force grids, KKT
enumeration, optimality conditions, definitional formulas or dense matrices.
``python -m ubama prox-check`` runs them all.
"""

import itertools
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import linops, prox

__all__ = ["SuiteResult", "SUITES", "run_suites"]

CASES = 200


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failed: int = 0
    failures: List[str] = field(default_factory=list)

    def record(self, ok, detail=""):
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.failures) < 10:
                self.failures.append(detail)

    @property
    def ok(self):
        return self.failed == 0 and self.passed > 0


def _grid_argmin_1d(f, lo, hi, step=1e-4, refine=20):
    """Coarse-to-fine grid minimization of a scalar function on ``[lo, hi]``."""
    t = np.linspace(lo, hi, 2001)
    best = t[np.argmin(f(t))]
    h = t[1] - t[0]
    while h > step / refine:
        t = np.linspace(best - 2 * h, best + 2 * h, 81)
        best = t[np.argmin(f(t))]
        h = t[1] - t[0]
    return best


def check_shrink(seed=0, cases=CASES):
    res = SuiteResult("shrink")
    rng = np.random.default_rng(seed)
    for i in range(cases):
        a = rng.uniform(-5, 5)
        t = rng.uniform(0, 3) if i % 10 else 0.0
        got = prox.shrink(np.array([a]), t)[0]
        ref = _grid_argmin_1d(lambda x: t * np.abs(x) + 0.5 * (x - a) ** 2, -6.0, 6.0)
        res.record(abs(got - ref) <= 1e-4, f"a={a}, t={t}: {got} vs grid {ref}")
    return res


def check_svt(seed=1, cases=CASES):
    """Subgradient optimality: ``(A - Z)/t = U1 V1^T + W`` with ``|W|_2 <= 1``, ``U1^T W = 0``, ``W V1 = 0``."""
    res = SuiteResult("svt")
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        m, n = rng.integers(1, 7, size=2)
        A = rng.standard_normal((m, n)) * rng.uniform(0.5, 3)
        t = rng.uniform(0.05, 2.0)
        Z = prox.svt(A, t)
        U, s, Vt = np.linalg.svd(Z, full_matrices=False)
        r = int(np.sum(s > 1e-10))
        U1, V1 = U[:, :r], Vt[:r].T
        G = (A - Z) / t
        W = G - U1 @ V1.T
        err = max(np.linalg.norm(U1.T @ W), np.linalg.norm(W @ V1),
                  max(np.linalg.norm(G, 2) - 1.0, 0.0))
        res.record(err <= 1e-8, f"shape {(m, n)}, t={t}: residual {err:.2e}")
    return res


def check_proj_box(seed=2, cases=CASES):
    """Variational inequality ``<v - p, z - p> <= 0`` for all box corners ``z`` and random points."""
    res = SuiteResult("proj_box")
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        n = rng.integers(1, 5)
        lo = rng.uniform(-2, 1)
        hi = lo + rng.uniform(0, 2)
        v = rng.uniform(-4, 4, size=n)
        p = prox.proj_box(v, lo, hi)
        corners = np.array(list(itertools.product((lo, hi), repeat=n)))
        probes = np.vstack([corners, rng.uniform(lo, hi, size=(20, n))])
        worst = float(np.max((probes - p) @ (v - p)))
        inside = np.all(p >= lo) and np.all(p <= hi)
        res.record(inside and worst <= 1e-10, f"v={v}, box=[{lo}, {hi}]: {worst:.2e}")
    return res


def _simplex_kkt(v):
    """Exact projection by enumerating supports (small ``n`` only)."""
    n = v.size
    best, best_d = None, np.inf
    for k in range(1, n + 1):
        for S in itertools.combinations(range(n), k):
            S = list(S)
            theta = (v[S].sum() - 1.0) / k
            p = np.zeros(n)
            p[S] = v[S] - theta
            if np.all(p[S] >= 0):
                d = np.sum((p - v) ** 2)
                if d < best_d:
                    best, best_d = p, d
    return best


def check_proj_simplex(seed=3, cases=CASES):
    res = SuiteResult("proj_simplex")
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        n = rng.integers(1, 5)
        v = rng.uniform(-2, 2, size=n) * rng.choice([0.1, 1.0, 5.0])
        got = prox.proj_simplex(v)
        ref = _simplex_kkt(v)
        err = float(np.max(np.abs(got - ref)))
        res.record(err <= 1e-10, f"v={v}: {got} vs {ref}")
    return res


def check_bregman(seed=4, cases=CASES):
    """Closed forms against ``psi(x) - psi(y) - <grad psi(y), x - y>``."""
    res = SuiteResult("bregman_distance")
    rng = np.random.default_rng(seed)
    for i in range(cases):
        n = rng.integers(1, 6)
        kind = i % 3
        if kind == 0:
            k = prox.BregmanKernel.quadratic(rng.uniform(0.1, 5))
            x, y = rng.standard_normal(n), rng.standard_normal(n)
        elif kind == 1:
            B = rng.standard_normal((n, n))
            M = B @ B.T + 0.1 * np.eye(n)
            k = prox.BregmanKernel.operator_quadratic(lambda z, M=M: M @ z, 0.1)
            x, y = rng.standard_normal(n), rng.standard_normal(n)
        else:
            k = prox.BregmanKernel.entropy(rng.uniform(0.1, 5))
            x, y = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        got = k.distance(x, y)
        ref = k.value(x) - k.value(y) - float(np.dot(k.grad(y), x - y))
        ok = abs(got - ref) <= 1e-10 * (1 + abs(ref)) and got >= -1e-12
        res.record(ok, f"{k.kind}: {got} vs {ref}")
    return res


def check_capped_subgradients(seed=5, cases=CASES):
    """Convexity inequality ``g(X + d) >= g(X) + <xi, d> - 1e-8`` for both capped excesses."""
    res = SuiteResult("capped_subgradients")
    rng = np.random.default_rng(seed)
    for i in range(cases):
        m, n = rng.integers(1, 6, size=2)
        X = rng.standard_normal((m, n)) * 2
        kappa = rng.uniform(0.1, 3)
        if i % 2 == 0:
            g = lambda Z: prox.capped_trace_excess(Z, kappa)
            xi = prox.subgrad_capped_trace(X, kappa)
        else:
            g = lambda Z: prox.capped_l1_excess(Z, kappa)
            xi = prox.subgrad_capped_l1(X, kappa)
        gx = g(X)
        worst = np.inf
        for _ in range(10):
            d = rng.standard_normal((m, n)) * rng.choice([1e-3, 0.1, 1.0])
            worst = min(worst, g(X + d) - gx - float(np.vdot(xi, d)))
        res.record(worst >= -1e-8, f"case {i}: slack {worst:.2e}")
    return res


def check_iso_tv_subgradient(seed=6, cases=CASES):
    """``<xi, y> = |y|_{2,1}``, pointwise ``|xi| <= 1`` and the subgradient inequality."""
    res = SuiteResult("iso_tv_subgradient")
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        shape = (2,) + tuple(rng.integers(1, 5, size=2))
        y = rng.standard_normal(shape)
        y[:, rng.random(shape[1:]) < 0.2] = 0.0
        xi = prox.subgrad_iso_tv(y)
        norm = prox.iso_tv_norm(y)
        ok = abs(float(np.vdot(xi, y)) - norm) <= 1e-10 * (1 + norm)
        ok &= bool(np.all(np.sqrt(xi[0] ** 2 + xi[1] ** 2) <= 1 + 1e-12))
        for _ in range(5):
            z = y + rng.standard_normal(shape)
            ok &= prox.iso_tv_norm(z) >= norm + float(np.vdot(xi, z - y)) - 1e-10
        res.record(bool(ok), f"shape {shape}")
    return res


def _adjoint_gap(A, At, xshape, yshape, rng):
    x = rng.standard_normal(xshape)
    y = rng.standard_normal(yshape)
    Ax = A(x)
    lhs = float(np.vdot(Ax, y))
    rhs = float(np.vdot(x, At(y)))
    scale = np.linalg.norm(Ax) * np.linalg.norm(y) + np.linalg.norm(x) * np.linalg.norm(At(y))
    return abs(lhs - rhs) / max(scale, 1e-300)


def check_adjoints(seed=7, cases=CASES):
    """``<A x, y> = <x, A^T y>`` within 1e-10 relative for every operator pair."""
    res = SuiteResult("linops_adjoints")
    rng = np.random.default_rng(seed)
    for i in range(cases):
        m1, m2 = rng.integers(3, 12, size=2)
        kind = i % 5
        if kind == 0:
            gap = _adjoint_gap(linops.diff_forward, linops.diff_adjoint, (m1, m2), (2, m1, m2), rng)
        elif kind == 1:
            k = rng.random((2 * rng.integers(0, 2) + 1, 2 * rng.integers(0, 2) + 1))
            gap = _adjoint_gap(lambda x: linops.circ_conv(x, k),
                               lambda u: linops.circ_conv_adjoint_image(u, k),
                               (m1, m2), (m1, m2), rng)
        elif kind == 2:
            x = rng.random((m1, m2))
            ks = (2 * rng.integers(0, 2) + 1, 2 * rng.integers(0, 2) + 1)
            gap = _adjoint_gap(lambda k: linops.circ_conv(x, k),
                               lambda u: linops.circ_conv_adjoint_kernel(u, x, ks),
                               ks, (m1, m2), rng)
        elif kind == 3:
            gap = _adjoint_gap(linops.directional_grads, linops.directional_adjoint,
                               (m1, m2), (8, m1, m2), rng)
        else:
            mask = linops.random_mask((m1, m2), 0.5, rng)
            gap = _adjoint_gap(mask, mask, (m1, m2), (m1, m2), rng)
        res.record(gap <= 1e-10, f"operator {kind}, shape {(m1, m2)}: gap {gap:.2e}")
    return res


def _direct_conv(x, k):
    m1, m2 = x.shape
    n1, n2 = k.shape
    c1, c2 = n1 // 2, n2 // 2
    out = np.zeros_like(x)
    for i in range(m1):
        for j in range(m2):
            acc = 0.0
            for a in range(n1):
                for b in range(n2):
                    acc += k[a, b] * x[(i - (a - c1)) % m1, (j - (b - c2)) % m2]
            out[i, j] = acc
    return out


def check_convolution(seed=8, cases=CASES):
    """FFT convolution against the direct periodic double sum."""
    res = SuiteResult("circ_conv")
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        m1, m2 = rng.integers(3, 9, size=2)
        n1 = 2 * rng.integers(0, (m1 + 1) // 2) + 1
        n2 = 2 * rng.integers(0, (m2 + 1) // 2) + 1
        x = rng.standard_normal((m1, m2))
        k = rng.standard_normal((n1, n2))
        err = float(np.max(np.abs(linops.circ_conv(x, k) - _direct_conv(x, k))))
        res.record(err <= 1e-10 * (1 + np.abs(x).sum() * np.abs(k).max()), f"{(m1, m2)} * {(n1, n2)}: {err:.2e}")
    return res


SUITES = {
    "shrink": check_shrink,
    "svt": check_svt,
    "proj_box": check_proj_box,
    "proj_simplex": check_proj_simplex,
    "bregman_distance": check_bregman,
    "capped_subgradients": check_capped_subgradients,
    "iso_tv_subgradient": check_iso_tv_subgradient,
    "linops_adjoints": check_adjoints,
    "circ_conv": check_convolution,
}


def run_suites(names=None, cases=CASES):
    """Run the named suites (all by default) and return their results in order."""
    names = list(SUITES) if names is None else names
    return [SUITES[name](cases=cases) for name in names]
