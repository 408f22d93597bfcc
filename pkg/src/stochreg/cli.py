"""Command-line front end.

Exit codes: 0 success, 1 a verification stage failed, 2 LMI infeasible,
3 assumption failure, 4 I/O or parse error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import constants as C
from .errors import (AssumptionError, ConfigError, DimensionError, InfeasibleError,
                     NumericalBreakdown, StochregError, SynthesisError)
from .io import (ProblemConfig, dumps, fmt, read_regulator, resolve_config, write_csv,
                 write_regulator)
from .lmi import build_M, min_lambda, sweep_lambda, verify_gains_lmi
from .pdmp import simulate
from . import pipeline as pl
from .verify import dynkin_check, gamma_0, mes_verdict, monte_carlo_moment

log = logging.getLogger("stochreg")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_ASSUMPTION = 3
EXIT_IO = 4

STAGES = ("assumptions", "stabilizer", "francis", "lmi", "montecarlo", "dynkin")


@dataclass
class RunReport:
    command: str
    config: str
    stages: dict = field(default_factory=dict)
    ok: bool = True

    def stage(self, name, **data):
        self.stages[name] = data

    def as_dict(self):
        out = {"command": self.command, "config": self.config, "ok": self.ok}
        out["stages"] = {s: self.stages.get(s, {"status": "skipped"}) for s in STAGES}
        for k, v in self.stages.items():
            if k not in STAGES:
                out["stages"][k] = v
        return out

    def write(self, out_dir):
        Path(out_dir, "report.json").write_text(dumps(_jsonable(self.as_dict())), encoding="utf-8")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _out_dir(args):
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _gamma_arg(s):
    if s == "maximize":
        return s
    v = float(s)
    if v < 0:
        raise argparse.ArgumentTypeError("gamma must be non-negative")
    return v


def _grid_arg(s):
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {s!r}") from None


def _check_assumptions(cfg, report, force):
    res = pl.assumptions(cfg)
    report.stage("assumptions", status="pass" if all(res.values()) else "fail",
                 **{k: v.as_dict() for k, v in res.items()})
    if not all(res.values()):
        failed = [k for k, v in res.items() if not v]
        if force:
            log.warning("assumptions failed (%s); continuing because of --force", ", ".join(failed))
        else:
            raise AssumptionError("assumption check failed: " + ", ".join(failed))
    return res


def _front_stages(front, report):
    report.stage("stabilizer", status="pass", beta_achieved=front.aug.beta_achieved)
    report.stage("francis", status="pass", residual=front.francis.residual,
                 R=front.francis.R)


def _load_regulator(args, cfg, report):
    """Regulator from ``--regulator`` or, failing that, synthesized in place."""
    if args.regulator:
        reg, meta = read_regulator(args.regulator)
        front = pl.front_end(cfg, reg)
        _front_stages(front, report)
        report.stage("lmi", status="loaded", path=str(args.regulator), **meta)
        return reg, front, meta
    d = pl.synthesize(cfg, gamma=getattr(args, "gamma", None), lam=getattr(args, "lam", None))
    _front_stages(d.front, report)
    meta = {"gamma": d.gamma, "lambda": d.lam}
    report.stage("lmi", status="pass", gamma=d.gamma, **{"lambda": d.lam},
                 certificate=d.lmi.certificate)
    return d.regulator, d.front, meta


def cmd_check(args, cfg, report):
    res = pl.assumptions(cfg)
    for k, v in res.items():
        line = f"{k:22s} {'pass' if v else 'FAIL'}"
        if v.warning:
            line += f"  ({v.warning})"
        if not v and v.witness:
            line += f"  witness={v.witness}"
        print(line)
    report.stage("assumptions", status="pass" if all(res.values()) else "fail",
                 **{k: v.as_dict() for k, v in res.items()})
    if not all(res.values()):
        report.ok = False
        return EXIT_ASSUMPTION
    return EXIT_OK


def cmd_synthesize(args, cfg, report):
    _check_assumptions(cfg, report, args.force)
    front = pl.front_end(cfg)
    _front_stages(front, report)
    gamma = cfg.gamma if args.gamma is None else args.gamma
    lam = cfg.lam if args.lam is None else args.lam
    d = pl.synthesize(cfg, gamma=gamma, lam=lam, front=front)
    ob = d.regulator.observer
    report.stage("lmi", status="pass", gamma=d.gamma, **{"lambda": d.lam},
                 certificate=d.lmi.certificate, Q=ob.Q, W=ob.W)
    out = _out_dir(args)
    write_regulator(out / "regulator.json", d.regulator,
                    meta={"gamma": d.gamma, "lambda": d.lam, "certificate": d.lmi.certificate,
                          "beta_achieved": front.aug.beta_achieved, "config": cfg.name})
    print(f"gamma={d.gamma:.6g} lambda={d.lam:g} certificate={d.lmi.certificate:.3e} "
          f"beta={front.aug.beta_achieved:.4g}")
    print(f"regulator written to {out / 'regulator.json'}")
    return EXIT_OK


def cmd_simulate(args, cfg, report):
    reg, front, meta = _load_regulator(args, cfg, report)
    cl = pl.closed_loop(cfg, reg, front)
    x0 = pl.initial_state(cfg, cl)
    seed = cfg.seed if args.seed is None else args.seed
    lam = cfg.lam if args.lam is None else args.lam
    path = simulate(cl, x0, cfg.horizon, cfg.output_dt, lam, seed)
    sl = cl.slices()
    p, n_p = cl.dims["p"], cl.dims["x_p"]
    header = (["t", "jump_flag"] + [f"e_p{i}" for i in range(p)] + [f"y_p{i}" for i in range(p)]
              + [f"y_w{i}" for i in range(p)] + [f"x_p{i}" for i in range(n_p)])
    yp = path.states @ cl.C_yp.T
    yw = path.states @ cl.C_yw.T
    xp = path.states[:, sl["x_p"]]
    rows = [[path.grid[k], bool(path.jump_flags[k]), *path.e_p[k], *yp[k], *yw[k], *xp[k]]
            for k in range(path.grid.size)]
    out = _out_dir(args)
    write_csv(out / "simulate.csv", header, rows)
    e0, eT = float(np.linalg.norm(path.e_p[0])), float(np.linalg.norm(path.e_p[-1]))
    report.stage("simulate", status="pass", seed=seed, n_jumps=int(path.jump_times.size),
                 e_p0=e0, e_pT=eT)
    print(f"{path.jump_times.size} samples, |e_p(0)|={e0:.3e}, |e_p(T)|={eT:.3e}")
    return EXIT_OK


def _montecarlo(args, cfg, cl, front, gamma, lam, report, out):
    N = cfg.N if args.N is None else args.N
    seed = cfg.seed if args.seed is None else args.seed
    x0 = pl.initial_state(cfg, cl)
    mc = monte_carlo_moment(cl, x0, N, cfg.horizon, cfg.output_dt, lam, seed, workers=args.workers)
    g0 = gamma_0(front.aug.beta_achieved, gamma)
    verdict = mes_verdict(mc, g0)
    write_csv(out / "montecarlo.csv", ["t", "m", "stderr", "ep_m", "ep_stderr"],
              zip(mc.grid, mc.m, mc.stderr, mc.ep_m, mc.ep_stderr))
    report.stage("montecarlo", status="pass" if verdict["pass"] else "fail", N=N, seed=seed,
                 **verdict)
    print(f"gamma_hat={verdict['gamma_hat']:.4g} (threshold {verdict['threshold']:.4g}), "
          f"m(T)/m(0)={verdict['ratio']:.3e} (bound {verdict['ratio_bound']:.3e}): "
          f"{'pass' if verdict['pass'] else 'FAIL'}")
    return verdict["pass"]


def cmd_montecarlo(args, cfg, report):
    reg, front, meta = _load_regulator(args, cfg, report)
    cl = pl.closed_loop(cfg, reg, front)
    gamma = args.gamma if isinstance(args.gamma, float) else float(meta.get("gamma", 0.0))
    lam = cfg.lam if args.lam is None else args.lam
    ok = _montecarlo(args, cfg, cl, front, gamma, lam, report, _out_dir(args))
    report.ok = ok
    return EXIT_OK if ok else EXIT_FAILED


def cmd_sweep(args, cfg, report):
    front = pl.front_end(cfg)
    aug = front.aug
    out = _out_dir(args)
    if args.gamma_grid is not None:
        grid = args.gamma_grid
        rows = []
        for g in grid:
            try:
                rows.append([g, min_lambda(aug.frakA, aug.H2, g, eps=cfg.epsilon)])
            except InfeasibleError:
                rows.append([g, None])
        write_csv(out / "sweep.csv", ["gamma", "lambda_min"], rows)
    else:
        grid = args.lambda_grid or [1.0, 2.0, 4.0, 8.0]
        vals = sweep_lambda(aug.frakA, aug.H2, grid, eps=cfg.epsilon)
        rows = [[lam, g] for lam, g in zip(grid, vals)]
        write_csv(out / "sweep.csv", ["lambda", "gamma_star"], rows)
    for r in rows:
        print(f"{fmt(r[0]):>10s} {fmt(r[1])}")
    report.stage("sweep", status="pass", rows=[[r[0], r[1] if r[1] is not None else "infeasible"]
                                               for r in rows])
    return EXIT_OK


def cmd_verify(args, cfg, report):
    if args.published_gains:
        if cfg.published_gains is None:
            raise ConfigError(f"{cfg.source}: no 'published_gains' block")
        front = pl.front_end(cfg)
        reg = pl.regulator_from_gains(front, cfg.published_gains["Q"], cfg.published_gains["W"])
        _front_stages(front, report)
        meta = {"gamma": cfg.published_gains["gamma"], "lambda": cfg.published_gains["lambda"]}
    elif args.regulator:
        reg, front, meta = _load_regulator(args, cfg, report)
    else:
        raise ConfigError("verify needs --regulator or --published-gains")
    gamma = args.gamma if isinstance(args.gamma, float) else float(meta.get("gamma", 0.0))
    lam = args.lam if args.lam is not None else float(meta.get("lambda", cfg.lam))
    tol = cfg.cert_tol if args.tol is None else args.tol
    aug = front.aug
    ob = reg.observer
    cert = verify_gains_lmi(aug.frakA, aug.H2, ob.Q, ob.W, lam, gamma, tol=tol, eps=cfg.epsilon)
    report.stage("lmi", status="pass", gamma=gamma, **{"lambda": lam},
                 certificate=cert.certificate, tol=tol)
    print(f"certified at gamma={gamma:g}, lambda={lam:g}: certificate={cert.certificate:.3e}"
          f" (tol {tol:g})")
    mb = build_M(aug.frakA, aug.H2, ob.Q, ob.W)
    seed = cfg.seed if args.seed is None else args.seed
    dk = dynkin_check(mb, cert.P1, cert.P2, lam, 2000, seed, gamma=gamma)
    # same slack as the certificate itself
    dk_ok = dk.max_UV <= max(tol, C.CERT_TOL) and -dk.min_eig <= max(tol, C.CERT_TOL)
    report.stage("dynkin", status="pass" if dk_ok else "fail", max_UV=dk.max_UV,
                 min_eig=dk.min_eig)
    print(f"dynkin: max UV={dk.max_UV:.3e}, min eig(-G)={dk.min_eig:.3e}")
    ok = dk_ok
    if not args.no_montecarlo:
        cl = pl.closed_loop(cfg, reg, front)
        ok = _montecarlo(args, cfg, cl, front, gamma, lam, report, _out_dir(args)) and ok
    report.ok = ok
    return EXIT_OK if ok else EXIT_FAILED


COMMANDS = {"check": cmd_check, "synthesize": cmd_synthesize, "simulate": cmd_simulate,
            "montecarlo": cmd_montecarlo, "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser():
    ap = argparse.ArgumentParser(prog="stochreg", description=(
        "Output regulation under Poisson-sampled measurements: design, LMI "
        "certification and Monte Carlo verification."))
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True,
                        help="problem JSON file, or 'example1' / 'example2'")
        sp.add_argument("--regulator", help="regulator JSON written by 'synthesize'")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default="stochreg_out", help="output directory")
        sp.add_argument("--gamma", type=_gamma_arg, help="decay rate, or 'maximize'")
        sp.add_argument("--lambda", dest="lam", type=float, help="mean sampling rate")
        sp.add_argument("--force", action="store_true", help="continue past failed assumptions")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("montecarlo", "verify"):
            sp.add_argument("-N", "--n-trajectories", dest="N", type=int)
            sp.add_argument("--workers", type=int, default=None,
                            help="threads for the ensemble (results do not depend on it)")
        if name == "verify":
            sp.add_argument("--published-gains", action="store_true",
                            help="verify the published gains stored in the config")
            sp.add_argument("--tol", type=float, help="certificate tolerance")
            sp.add_argument("--no-montecarlo", action="store_true")
        if name == "sweep":
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--lambda-grid", type=_grid_arg, help="comma-separated, increasing")
            g.add_argument("--gamma-grid", type=_grid_arg, help="comma-separated, increasing")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    report = RunReport(command=args.command, config=str(args.config))
    code = EXIT_OK
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(args.config)
        if getattr(args, "N", None) is not None and args.N < 2:
            raise ValueError("need N >= 2 trajectories")
        code = COMMANDS[args.command](args, cfg, report)
    except (ConfigError, DimensionError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        report.ok, code = False, EXIT_IO
    except AssumptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        report.ok, code = False, EXIT_ASSUMPTION
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        report.stage("lmi", status="infeasible", violation=exc.violation, message=str(exc))
        report.ok, code = False, EXIT_INFEASIBLE
    except (SynthesisError, NumericalBreakdown, StochregError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        report.ok, code = False, EXIT_FAILED
    report.stage("runtime", seconds=time.perf_counter() - t0, exit_code=code)
    if code != EXIT_IO:
        try:
            report.write(_out_dir(args))
        except OSError as exc:
            print(f"error: cannot write report ({exc})", file=sys.stderr)
            return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
