"""Command-line driver.

::

    ubama tv --config run.cfg --method palm --seed 3
    ubama rpca --config run.cfg --seed 7 --out-dir results/
    ubama bid --y-mode entropy --maxit 500
    ubama prox-check

Exit codes: 0 on success, 1 when a solver fails, 2 on usage or configuration
errors. The output directory defaults to ``$UBAMA_OUT_DIR`` or ``ubama-out``.
"""

import argparse
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .bid import bid_solve, make_bid_instance
from .checks import run_suites
from .config import METHODS, default_out_dir, load_config, parse_config
from .errors import ConfigError, FormatError, InnerSolverError, LineSearchError, NumericalError, StepError
from .io import TraceFile, image_read, image_write, summary_write, trace_write
from .linops import disk_kernel, random_mask, circ_conv
from .metrics import snr, ssim
from .rng import seeded_rng
from .rpca import RpcaProblemSpec, default_caps, rpca_defaults, rpca_metrics, rpca_solve, synth_gen
from .prox import CappedNormParams
from .tv import TvProblemSpec, make_tv_instance, tv_defaults, tv_solve

log = logging.getLogger("ubama")

SOLVER_ERRORS = (NumericalError, InnerSolverError, LineSearchError, StepError)


def _header(cfg, **resolved):
    h = {"application": cfg.application, "method": cfg.method, "version": __version__}
    for key, value in cfg.items():
        if key != "out_dir":  # where results go does not affect them
            h[f"config.{key}"] = value
    for key, value in resolved.items():
        h[key] = value
    if cfg.timing:
        h["started"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    return h


def _out_dir(cfg):
    path = cfg.out_dir or default_out_dir()
    os.makedirs(path, exist_ok=True)
    return path


def _tv_instance(cfg):
    if cfg.input is None:
        return make_tv_instance(cfg.n, cfg.noise_level, cfg.sampling, cfg.deblur, cfg.radius,
                                cfg.seed)
    # an input image is treated as ground truth and degraded with the seeded protocol
    x_true = image_read(cfg.input)
    rng = seeded_rng(cfg.seed)
    mask = random_mask(x_true.shape, cfg.sampling, rng)
    kernel = disk_kernel(cfg.radius) if cfg.deblur else None
    blurred = x_true if kernel is None else circ_conv(x_true, kernel)
    b = mask(blurred + cfg.noise_level * rng.standard_normal(x_true.shape))
    tau, beta, alpha = tv_defaults(cfg.noise_level, cfg.deblur)
    return x_true, TvProblemSpec(b=b, tau=tau, alpha=alpha, beta=beta, mask=mask, kernel=kernel,
                                 delta=cfg.noise_level)


def run_tv(cfg):
    x_true, spec = _tv_instance(cfg)
    if any(v is not None for v in (cfg.tau, cfg.beta, cfg.alpha)):
        spec = TvProblemSpec(b=spec.b, tau=cfg.tau or spec.tau, alpha=cfg.alpha or spec.alpha,
                             beta=cfg.beta or spec.beta, mask=spec.mask, kernel=spec.kernel,
                             delta=spec.delta)
    eps = cfg.eps or 1e-4
    maxit = cfg.maxit or 1000
    res = tv_solve(spec, cfg.method, eps, maxit, cfg.pcg_tol, x_ref=x_true, record_time=cfg.timing)
    out = _out_dir(cfg)
    header = _header(cfg, tau=spec.tau, beta=spec.beta, alpha=spec.alpha, mu=spec.mu, nu=spec.nu,
                     eps=eps, maxit=maxit, ssim_window="gaussian 11x11 sigma 1.5",
                     ssim_constants="(0.01)^2 (0.03)^2", status=res.status)
    trace_write(os.path.join(out, "trace.csv"), TraceFile(header, res.trace))
    image_write(os.path.join(out, "observed.png"), np.clip(spec.b, 0, 1))
    image_write(os.path.join(out, "restored.png"), np.clip(res.x, 0, 1))
    print(f"tv/{cfg.method}: {res.status} after {res.iterations} iterations, "
          f"Phi={res.trace[-1].phi:.6g}, SNR {snr(x_true, spec.b):.2f} -> {snr(x_true, res.x):.2f} dB, "
          f"SSIM {ssim(x_true, np.clip(res.x, 0, 1)):.4f}")
    return 0


def run_rpca(cfg):
    eps = cfg.eps or 1e-4
    maxit = cfg.maxit or 500
    out = _out_dir(cfg)
    rows = []
    for t in range(cfg.trials):
        seed = cfg.seed + t
        inst = synth_gen(cfg.n, cfg.rank, cfg.sparse_frac, cfg.sampling, cfg.noise_level, seed)
        tau, lam = rpca_defaults(cfg.n, cfg.n, cfg.sampling, cfg.noise_level)
        caps = default_caps(inst.B, inst.mask, cfg.cap_rule)
        caps = CappedNormParams(cfg.kappa1 or caps.kappa1, cfg.kappa2 or caps.kappa2)
        spec = RpcaProblemSpec(inst.B, inst.mask, cfg.tau or tau, cfg.lam or lam, caps, cfg.mu, cfg.nu)
        t0 = time.perf_counter()
        res = rpca_solve(spec, cfg.method, eps, maxit, cfg.inner_tol, record_time=cfg.timing)
        elapsed = time.perf_counter() - t0 if cfg.timing else math.nan
        m = rpca_metrics(res.x, res.y, inst, spec)
        header = _header(cfg, trial=t, trial_seed=seed, tau=spec.tau, lam=spec.lam,
                         kappa1=caps.kappa1, kappa2=caps.kappa2, eps=eps, maxit=maxit,
                         status=res.status)
        trace_write(os.path.join(out, f"trace_{t:03d}.csv"), TraceFile(header, res.trace))
        rows.append(dict(trial=t, seed=seed, rel_x=m.rel_x, rel_y=m.rel_y, rank=m.rank, nnz=m.nnz,
                         obj=m.obj, iters=res.iterations, time_s=elapsed))
        print(f"rpca/{cfg.method} trial {t} (seed {seed}): {res.status}, {res.iterations} iterations, "
              f"relX={m.rel_x:.4e} relY={m.rel_y:.4f} rank={m.rank} nnz={m.nnz}")
    summary_write(os.path.join(out, "summary.csv"), rows, _header(cfg))
    return 0


def run_bid(cfg):
    x_true, k_true, spec = make_bid_instance(cfg.n, cfg.ksize, cfg.sigma, cfg.noise, cfg.seed,
                                             y_mode=cfg.y_mode)
    if cfg.input is not None:
        x_true = image_read(cfg.input)
        b = np.clip(circ_conv(x_true, k_true)
                    + cfg.noise * seeded_rng(cfg.seed).standard_normal(x_true.shape), 0, 1)
        spec = type(spec)(b, kshape=spec.kshape, y_mode=cfg.y_mode)
    if cfg.lam is not None:
        spec.lam = cfg.lam
    if cfg.tau is not None:
        spec.tau = cfg.tau
    maxit = cfg.maxit or 2000
    res = bid_solve(spec, maxit=maxit, eps=cfg.eps, x_ref=x_true, record_time=cfg.timing)
    out = _out_dir(cfg)
    header = _header(cfg, lam=spec.lam, tau=spec.tau, y_mode=spec.y_mode, maxit=maxit,
                     backtracking=f"grow {spec.grow} shrink {spec.shrink} cap {spec.max_doublings}",
                     status=res.status)
    trace_write(os.path.join(out, "trace.csv"), TraceFile(header, res.trace))
    image_write(os.path.join(out, "blurry.png"), spec.b)
    image_write(os.path.join(out, "restored.png"), res.x)
    np.savetxt(os.path.join(out, "kernel.csv"), res.y, delimiter=",", fmt="%.17g")
    print(f"bid/{spec.y_mode}: {res.iterations} iterations, Phi={res.trace[-1].phi:.6g}, "
          f"SNR {snr(x_true, spec.b):.2f} -> {snr(x_true, res.x):.2f} dB")
    return 0


def run_prox_check(cfg):
    failures = 0
    for r in run_suites():
        status = "ok" if r.ok else "FAIL"
        print(f"{r.name:22s} {r.passed:4d} passed {r.failed:4d} failed  {status}")
        for detail in r.failures:
            print(f"    {detail}")
        failures += r.failed
    print(f"total failures: {failures}")
    return 0 if failures == 0 else 1


RUNNERS = {"tv": run_tv, "rpca": run_rpca, "bid": run_bid, "prox-check": run_prox_check}


def build_parser():
    parser = argparse.ArgumentParser(prog="ubama", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="application", required=True)
    for app in RUNNERS:
        p = sub.add_parser(app)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out-dir", dest="out_dir")
        if app == "prox-check":
            continue
        p.add_argument("--method", choices=METHODS[app])
        p.add_argument("--seed", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--maxit", type=int)
        if app == "bid":
            p.add_argument("--y-mode", dest="y_mode", choices=("euclidean", "entropy"))
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("config", "verbose") and v is not None}
    try:
        if args.config:
            # the subcommand overrides any application named in the file
            cfg = load_config(args.config, **overrides)
        else:
            cfg = parse_config("", **overrides)
    except ConfigError as exc:
        print(f"ubama: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return RUNNERS[cfg.application](cfg)
    except SOLVER_ERRORS as exc:
        print(f"ubama: solver failure: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"ubama: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"ubama: invalid parameters: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
