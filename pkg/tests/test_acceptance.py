"""Acceptance gate: one test per headline criterion, each printing a PASS/FAIL line.

Failures here are real results, not flaky tests; the tolerances are fixed.
"""

import functools
import math
import time

import numpy as np
import pytest

from ubama.bid import bid_objective, bid_solve, grad_x_hminus, grad_y_hminus, make_bid_instance
from ubama.checks import run_suites
from ubama.cli import main
from ubama.linops import diff_adjoint, diff_forward
from ubama.metrics import snr
from ubama.rpca import rpca_metrics, rpca_solve, synth_gen
from ubama.solver import descent_audit
from ubama.tv import build_tv_problem, make_tv_instance, tv_solve

SEEDS = range(5)


@functools.lru_cache(maxsize=None)
def bid_run(seed, mode):
    x_true, k_true, spec = make_bid_instance(64, seed=seed, y_mode=mode)
    return x_true, k_true, spec, bid_solve(spec, maxit=2000, x_ref=x_true, record_time=False)


def test_descent_audit_all_applications(acceptance):
    t0 = time.perf_counter()
    violations, runs = [], 0
    for seed in SEEDS:
        _, spec = make_tv_instance(64, seed=seed)
        traces = {"tv": tv_solve(spec, "ubama", record_time=False).trace}
        traces["rpca"] = rpca_solve(synth_gen(64, 2, seed=seed).spec(), "ubama",
                                    record_time=False).trace
        traces["bid"] = bid_run(seed, "euclidean")[3].trace
        for app, trace in traces.items():
            runs += 1
            violations += [f"{app}/seed {seed}: {v}" for v in descent_audit(trace, rtol=1e-9).violations]
    elapsed = time.perf_counter() - t0
    ok = not violations and elapsed < 120
    first = violations[0] if violations else "none"
    acceptance("descent audit", ok,
               f"{runs} runs, {len(violations)} violations (first: {first}), {elapsed:.1f} s")


def test_prox_operator_oracles(acceptance):
    t0 = time.perf_counter()
    results = run_suites()
    elapsed = time.perf_counter() - t0
    bad = [r.name for r in results if not r.ok]
    fewest = min(r.passed + r.failed for r in results)
    ok = not bad and fewest >= 200 and elapsed < 60
    acceptance("prox/operator oracle suite", ok,
               f"{len(results)} suites, min {fewest} cases, failing {bad or 'none'}, {elapsed:.1f} s")


def _fd_gap(f, grad, z, dz, h):
    fd = (f(z + h * dz) - f(z - h * dz)) / (2 * h)
    an = float(np.vdot(grad, dz))
    return abs(fd - an) / max(1.0, abs(an))


def test_adjoints_and_gradients(acceptance):
    t0 = time.perf_counter()
    suites = {r.name: r for r in run_suites(["linops_adjoints", "circ_conv"])}
    worst = 0.0
    rng = np.random.default_rng(11)
    # TV coupling beta/2 |Dx - y|^2
    _, tv_spec = make_tv_instance(64, seed=0)
    tv_problem, _ = build_tv_problem(tv_spec)
    beta = tv_spec.beta
    for _ in range(20):
        x = rng.random((64, 64))
        y = rng.standard_normal((2, 64, 64))
        r = diff_forward(x) - y
        worst = max(worst, _fd_gap(lambda z: tv_problem.h_plus(z, y), beta * diff_adjoint(r), x,
                                   rng.standard_normal(x.shape), 1e-6))
        worst = max(worst, _fd_gap(lambda z: tv_problem.h_plus(x, z), -beta * r, y,
                                   rng.standard_normal(y.shape), 1e-6))
    # BID h_minus = -Phi, both blocks, at the default weights
    _, _, spec = make_bid_instance(64, seed=0)
    for _ in range(20):
        x = rng.random((64, 64))
        y = rng.dirichlet(np.ones(49)).reshape(7, 7)
        worst = max(worst, _fd_gap(lambda z: -bid_objective(spec, z, y), grad_x_hminus(spec, x, y),
                                   x, rng.standard_normal(x.shape), 1e-7))
        worst = max(worst, _fd_gap(lambda z: -bid_objective(spec, x, z), grad_y_hminus(spec, x, y),
                                   y, rng.standard_normal(y.shape), 1e-7))
    elapsed = time.perf_counter() - t0
    ok = all(s.ok for s in suites.values()) and worst <= 1e-5 and elapsed < 60
    acceptance("adjoint and gradient checks", ok,
               f"adjoint suites {'ok' if all(s.ok for s in suites.values()) else 'FAILED'}, "
               f"worst gradient gap {worst:.2e}, {elapsed:.1f} s")


def test_rpca_band_256(acceptance):
    t0 = time.perf_counter()
    rel, its = [], []
    for seed in range(10):
        inst = synth_gen(256, 8, sr=0.9, delta=0.01, seed=seed)
        res = rpca_solve(inst.spec(mu=1.01, nu=1.01), "ubama", eps=1e-4, record_time=False)
        rel.append(rpca_metrics(res.x, res.y, inst).rel_x)
        its.append(res.iterations)
    elapsed = time.perf_counter() - t0
    ok = np.mean(rel) <= 1e-2 and np.mean(its) <= 60 and elapsed < 180
    acceptance("RPCA (256,8) band", ok,
               f"avg relX {np.mean(rel):.4e} (<= 1e-2), avg iterations {np.mean(its):.1f} (<= 60), "
               f"{elapsed:.1f} s")


def test_tv_cross_method(acceptance):
    t0 = time.perf_counter()
    _, spec = make_tv_instance(64, 0.1, 0.5, seed=0)
    u = tv_solve(spec, "ubama", eps=1e-4, maxit=1000, record_time=False)
    p = tv_solve(spec, "palm", eps=1e-4, maxit=1000, pcg_tol=1e-5, record_time=False)
    gap = abs(u.trace[-1].phi - p.trace[-1].phi) / abs(p.trace[-1].phi)
    elapsed = time.perf_counter() - t0
    ok = gap <= 0.01 and u.iterations <= p.iterations and elapsed < 120
    acceptance("TV cross-method consistency", ok,
               f"objective gap {gap:.2e} (<= 1e-2), iterations UBAMA {u.iterations} vs "
               f"PALM {p.iterations}, {elapsed:.1f} s")


def test_tv_restoration_quality(acceptance):
    x_true, spec = make_tv_instance(64, 0.1, 0.5, seed=0)
    res = tv_solve(spec, "ubama", eps=1e-4, maxit=1000, x_ref=x_true, record_time=False)
    before, after = snr(x_true, spec.b), snr(x_true, res.x)
    ok = after >= before + 3 and res.converged and res.trace[-1].tol <= 1e-4
    acceptance("TV restoration quality", ok,
               f"SNR {before:.2f} -> {after:.2f} dB, Tol {res.trace[-1].tol:.2e} after "
               f"{res.iterations} iterations")


def test_rpca_baseline_parity(acceptance):
    inst = synth_gen(64, 2, seed=42)
    spec = inst.spec()
    rel, wall = {}, {}
    for method in ("ubama", "adca", "dca_admm"):
        # best of three runs keeps scheduler noise out of the timing comparison
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            res = rpca_solve(spec, method, eps=1e-4, record_time=False)
            times.append(time.perf_counter() - t0)
        wall[method] = min(times)
        rel[method] = rpca_metrics(res.x, res.y, inst).rel_x
    within = all(rel[m] <= 2 * rel["ubama"] for m in ("adca", "dca_admm"))
    fastest = all(wall["ubama"] < wall[m] for m in ("adca", "dca_admm"))
    detail = ", ".join(f"{m} relX {rel[m]:.3e} in {wall[m]:.2f} s" for m in rel)
    acceptance("RPCA baseline parity", within and fastest, detail)


def test_bid_feasibility_and_monotonicity(acceptance):
    problems = []
    for mode in ("euclidean", "entropy"):
        _, _, _, res = bid_run(0, mode)
        phis = [r.phi for r in res.trace]
        rises = sum(b > a + 1e-12 for a, b in zip(phis, phis[1:]))
        sum_err = abs(res.y.sum() - 1)
        if rises:
            problems.append(f"{mode}: {rises} increases")
        if sum_err > 1e-10 or res.y.min() < 0 or (mode == "entropy" and res.y.min() <= 0):
            problems.append(f"{mode}: kernel off the simplex ({sum_err:.1e})")
        if res.x.min() < 0 or res.x.max() > 1:
            problems.append(f"{mode}: image outside [0, 1]")
        if res.iterations > 2000:
            problems.append(f"{mode}: {res.iterations} iterations")
    x_true, k_true, spec = make_bid_instance(64, seed=0)
    ablation = bid_solve(spec, maxit=300, y0=k_true, update_y=False, x_ref=x_true, record_time=False)
    before, after = snr(x_true, spec.b), ablation.trace[-1].snr
    if not after > before:
        problems.append(f"non-blind SNR {before:.2f} -> {after:.2f}")
    acceptance("BID feasibility and monotonicity", not problems,
               f"{'; '.join(problems) or 'both modes feasible and monotone over 2000 iterations'}, "
               f"non-blind SNR {before:.2f} -> {after:.2f} dB")


@pytest.mark.parametrize("app", ["tv", "rpca", "bid"])
def test_determinism(app, tmp_path, acceptance, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"application = {app}\nseed = 3\nmaxit = 200\n")
    name = "trace_000.csv" if app == "rpca" else "trace.csv"
    blobs = []
    for d in ("first", "second"):
        assert main([app, "--config", str(cfg), "--out-dir", str(tmp_path / d)]) == 0
        blobs.append((tmp_path / d / name).read_bytes())
    acceptance(f"determinism ({app})", blobs[0] == blobs[1],
               f"{len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}")
