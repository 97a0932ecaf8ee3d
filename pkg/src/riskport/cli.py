"""Command-line front end: ``riskport <command> --config run.toml``.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration or input
error, 3 numerical failure, 4 a comparison's precondition does not hold.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import montecarlo, statics, verify
from .config import OUT_ENV, RunConfig, load_config
from .constrained import ClippedDualField
from .dual import DualField
from .errors import ConfigError, DomainError, ModelError, NumericError
from .policy import complete_market, feedback_policy, log_optimal_direction, policy_header

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PRECONDITION = 0, 1, 2, 3, 4
COMMANDS = ("evaluate", "policy", "verify", "approx", "simulate", "complete")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v) + 0.0:.17g}"  # + 0.0 folds -0.0 into 0.0


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def result(name: str, ok: bool | str, **info) -> None:
    """One machine-readable summary line per check; ``ok`` may be a verdict string."""
    extra = " ".join(f"{k}={_fmt(v) if not isinstance(v, (tuple, list)) else ','.join(map(_fmt, v))}"
                     for k, v in info.items())
    verdict = ok if isinstance(ok, str) else ("pass" if ok else "fail")
    print(f"RESULT {name} {verdict} {extra}".rstrip())


def _field(cfg: RunConfig, utility=None) -> DualField:
    return DualField(cfg.market, cfg.utility if utility is None else utility, nodes=cfg.nodes)


def _closed_form(u) -> bool:
    return u.params.get("kind") in ("log", "crra")


def cmd_evaluate(cfg: RunConfig) -> int:
    fld = _field(cfg)
    rows = []
    for t in cfg.times:
        lam = np.asarray(fld.lam(t, cfg.wealth))
        u = np.asarray(fld.indirect_utility(t, cfg.wealth))
        f = np.asarray(fld.risk_tolerance(t, cfg.wealth))
        rows += [[t, x, a, b, c, c / x] for x, a, b, c in zip(cfg.wealth, lam, u, f)]
    path = write_csv(cfg.out_dir / "evaluate.csv", ["t", "x", "lambda", "u", "f", "f_over_x"], rows)
    result("evaluate", True, rows=len(rows), file=str(path))
    return EXIT_OK


def cmd_policy(cfg: RunConfig) -> int:
    fld = _field(cfg)
    rows = [feedback_policy(fld, t, x).row() for t in cfg.times for x in cfg.wealth]
    path = write_csv(cfg.out_dir / "policy.csv", policy_header(cfg.market.n), rows)
    result("policy", True, rows=len(rows), file=str(path))
    return EXIT_OK


def _approx_rows(cfg: RunConfig):
    fld = _field(cfg)
    t, x = cfg.approx_point
    lam, f = float(fld.lam(t, x)), float(fld.risk_tolerance(t, x))
    rows, errors = [], []
    for m in cfg.m_values:
        clip = ClippedDualField(fld, m)
        lm, fm = float(clip.lambda_m(t, x)), float(clip.f_m(t, x))
        errors.append(abs(fm - f))
        rows.append([m, t, x, lm, fm, lam, f, errors[-1]])
    return rows, errors


def _converging(errors: list[float], floor: float = 1e-12) -> bool:
    e = np.maximum(np.asarray(errors), floor)
    return bool(np.all(np.diff(e) <= 0) and errors[-1] < 1e-3)


def cmd_approx(cfg: RunConfig) -> int:
    rows, errors = _approx_rows(cfg)
    header = ["m", "t", "x", "lambda_m", "f_m", "lambda", "f", "abs_error_f"]
    path = write_csv(cfg.out_dir / "approx.csv", header, rows)
    ok = _converging(errors)
    result("approx", ok, final_error=errors[-1], file=str(path))
    return EXIT_OK if ok else EXIT_FAIL


def _martingale(cfg: RunConfig, fld: DualField):
    sim = montecarlo.SimConfig(cfg.paths, cfg.steps, cfg.seed, *cfg.sim_start)
    reports = [montecarlo.martingale_test(fld, sim, fn) for fn in montecarlo.FUNCTIONALS]
    rows = [[r.functional, *row] for r in reports for row in r.rows()]
    return reports, rows


def cmd_simulate(cfg: RunConfig) -> int:
    fld = _field(cfg)
    reports, rows = _martingale(cfg, fld)
    write_csv(cfg.out_dir / "simulate.csv", ["functional", "checkpoint", "mean", "se", "z"], rows)
    ok = True
    for r in reports:
        result(f"martingale.{r.functional}", r.passed, max_abs_z=float(np.max(np.abs(r.z))),
               seeds=list(r.seeds))
        ok &= r.passed
    if cfg.euler_steps:
        sim = montecarlo.SimConfig(cfg.paths, cfg.euler_steps, cfg.seed, *cfg.sim_start)
        euler = montecarlo.simulate_euler(fld, sim)
        exact = montecarlo.simulate_exact(fld, sim, record=())
        e, x = euler.summaries["deflated_wealth"], exact.summaries["deflated_wealth"]
        se = float(np.hypot(e.se, x.se))
        agree = abs(e.mean - x.mean) <= 3 * se or abs(e.mean - x.mean) <= 1e-12
        write_csv(cfg.out_dir / "simulate_euler.csv",
                  ["scheme", "mean_deflated_terminal_wealth", "se", "floored"],
                  [["exact", x.mean, x.se, 0], ["euler", e.mean, e.se, euler.floored]])
        result("simulate.euler_vs_exact", agree, diff=e.mean - x.mean, combined_se=se,
               euler_bias=e.mean - sim.x, floored=euler.floored)
        ok &= agree
    return EXIT_OK if ok else EXIT_FAIL


def cmd_complete(cfg: RunConfig) -> int:
    done = complete_market(cfg.market, cfg.vol_level)
    n, d = cfg.market.n, cfg.market.drivers
    rows, worst = [], 0.0
    for t in cfg.times:
        comp = done.completion_rows(t) if d > n else np.zeros((0, d))
        theta = done.enlarged.theta(t)
        k = log_optimal_direction(done.enlarged, t)
        worst = max(worst, float(np.max(np.abs(k[n:]), initial=0.0)))
        rows.append([t, *comp.ravel(), *theta])
    header = ["t", *[f"row{i + 1}_{j + 1}" for i in range(d - n) for j in range(d)],
              *[f"theta_{j + 1}" for j in range(d)]]
    write_csv(cfg.out_dir / "complete.csv", header, rows)
    ok = worst < 1e-10
    result("complete", ok, synthetic_direction_max=worst, added_assets=d - n)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(cfg: RunConfig) -> int:
    fld = _field(cfg)
    status = EXIT_OK

    def fail():
        nonlocal status
        if status == EXIT_OK:
            status = EXIT_FAIL

    T = cfg.market.horizon
    pt = cfg.pde_times if cfg.pde_times is not None else cfg.times[cfg.times < T]
    px = cfg.pde_wealth if cfg.pde_wealth is not None else cfg.wealth
    grid = verify.pde_residual(fld, pt, px)
    tol = verify.CLOSED_FORM_TOL if _closed_form(cfg.utility) else verify.QUADRATURE_TOL
    write_csv(cfg.out_dir / "pde_residual.csv", ["t", "x", "residual"], grid.rows())
    result("pde", grid.passed(tol), max_abs=grid.max_abs, tolerance=tol, at=grid.argmax)
    if not grid.passed(tol):
        fail()

    term = verify.terminal_check(fld, cfg.wealth)
    result("terminal", term.passed, max_error=term.max_error)
    if not term.passed:
        fail()

    dual = verify.duality_error(fld, cfg.times, cfg.wealth)
    result("duality", dual < 1e-10, max_rel_error=dual)
    if dual >= 1e-10:
        fail()

    reports, rows = _martingale(cfg, fld)
    write_csv(cfg.out_dir / "martingale.csv", ["functional", "checkpoint", "mean", "se", "z"], rows)
    for r in reports:
        result(f"martingale.{r.functional}", r.passed, max_abs_z=float(np.max(np.abs(r.z))),
               seeds=list(r.seeds))
        if not r.passed:
            fail()

    stat_rows = []
    checks = []
    if cfg.comparison is not None:
        checks.append(statics.check_ordering(fld, _field(cfg, cfg.comparison), cfg.times, cfg.wealth))
    checks += [statics.check_wealth_monotonicity(fld, kind, cfg.times, cfg.wealth)
               for kind in cfg.monotonicity]
    for rep in checks:
        print(rep.summary())
        result(f"statics.{rep.claim}", rep.verdict, margin=rep.margin)
        stat_rows += [[rep.claim, *row] for row in rep.rows()]
        if rep.verdict == statics.PRECONDITION:
            status = EXIT_PRECONDITION
        elif not rep.passed:
            fail()
    if checks:
        write_csv(cfg.out_dir / "statics.csv", ["claim", "t", "x", "slack"], stat_rows)

    if "approx" in cfg.raw:
        rows, errors = _approx_rows(cfg)
        write_csv(cfg.out_dir / "approx.csv",
                  ["m", "t", "x", "lambda_m", "f_m", "lambda", "f", "abs_error_f"], rows)
        print("m        f_m                     abs_error_f")
        for row in rows:
            print(f"{row[0]:<8d} {row[4]:<23.17g} {row[7]:.3e}")
        ok = _converging(errors)
        result("approx", ok, final_error=errors[-1])
        if not ok:
            fail()
    return status


HANDLERS = {"evaluate": cmd_evaluate, "policy": cmd_policy, "verify": cmd_verify,
            "approx": cmd_approx, "simulate": cmd_simulate, "complete": cmd_complete}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskport", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    p.add_argument("--nodes", type=int, help="Gauss-Hermite node count")
    p.add_argument("--paths", type=int, help="Monte Carlo path count")
    p.add_argument("--seed", type=int, help="Monte Carlo seed")
    p.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
    return p


def resolve(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    if os.environ.get(OUT_ENV):
        cfg.out_dir = Path(os.environ[OUT_ENV])
    if args.out:
        cfg.out_dir = Path(args.out)
    if args.nodes is not None:
        if args.nodes < 1:
            raise ConfigError("--nodes must be positive")
        cfg.nodes = args.nodes
    if args.paths is not None:
        if args.paths < 2:
            raise ConfigError("--paths must be at least 2")
        cfg.paths = args.paths
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        cfg.seed = args.seed
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        if args.dry_run:
            print(json.dumps({"command": args.command, **cfg.plan()}, indent=2))
            return EXIT_OK
        return HANDLERS[args.command](cfg)
    except (ConfigError, DomainError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
