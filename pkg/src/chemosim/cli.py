"""Command-line entry point: run, verify, rescale, sweep, report.

Exit codes: 0 success, 1 usage/config/check failure, 2 solver abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import monitors as M
from .grid import write_snapshot
from .model import classify, params_from_dict
from .rescale import compute_L, compute_phi, epsilon_study, rescale_run
from .runs import ConfigError, IncompleteRun, initial_data, load_config, load_run, parse_config, write_run
from .solver import SolverAbort, advance

log = logging.getLogger("chemosim")

OK, FAIL, ABORT = 0, 1, 2
COEFF_STRIDE = 8  # write every 8th tau node of the coefficient fields


def _setup_logging() -> None:
    level = os.environ.get("SIM_LOG", "info").lower()
    if level not in ("error", "info", "debug"):
        level = "info"
    logging.basicConfig(level=getattr(logging, level.upper()), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format(x, ".17g") if isinstance(x, (float, np.floating)) else x for x in r])


# run -------------------------------------------------------------------------

def execute(cfg, out: Path) -> int:
    init = initial_data(cfg)
    try:
        traj = advance(init, cfg.params, cfg.grid, cfg.schedule, cfg.stop)
    except SolverAbort as e:
        log.error("solver abort: %s", e)
        return ABORT
    write_run(out, cfg, traj)
    log.info("run complete: %s (%d steps, stopped by %s)", out, traj.steps, traj.stopped_by)
    return OK


def cmd_run(args) -> int:
    if not args.config:
        log.error("run: --config is required")
        return FAIL
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out or cfg.out or "run")
        return execute(cfg, out)
    except (ConfigError, FileNotFoundError) as e:
        log.error("config error: %s", e)
        return FAIL


# verify ----------------------------------------------------------------------

def verify_dir(run_dir: Path) -> tuple[int, list]:
    cfg, traj, _ = load_run(run_dir)
    reports = M.run_all(traj, cfg.params)
    rdir = run_dir / "reports"
    rdir.mkdir(exist_ok=True)
    for r in reports:
        (rdir / f"{r.lemma_id}.json").write_text(json.dumps(r.to_json(), indent=2) + "\n")
        if r.inconclusive:
            log.warning("%s inconclusive: run stopped before v_tol", r.lemma_id)
        log.info("%s %s", r.lemma_id, "pass" if r.passed else "FAIL")
    return (OK if all(r.passed for r in reports) else FAIL), reports


def cmd_verify(args) -> int:
    try:
        code, _ = verify_dir(Path(args.run_dir))
    except (IncompleteRun, ConfigError) as e:
        log.error("%s", e)
        return FAIL
    except ValueError as e:
        log.error("verify: %s", e)
        return FAIL
    return code


# rescale ---------------------------------------------------------------------

def rescale_dir(run_dir: Path, tol: float = 0.05):
    cfg, traj, _ = load_run(run_dir)
    if not traj.reached_v_tol:
        raise ValueError(f"run stopped by {traj.stopped_by or 'unknown'}, v_tol not reached")
    rp = rescale_run(traj)
    out = run_dir / "rescale"
    (out / "coefficients").mkdir(parents=True, exist_ok=True)
    _write_csv(out / "phi.csv", ("t", "tau"), zip(rp.phi.t, rp.phi.tau))
    c = rp.coeffs
    for k in range(0, len(c.tau), COEFF_STRIDE):
        write_snapshot(out / "coefficients" / f"a_{k:04d}.csv", c.a[k], traj.grid, c.tau[k])
    rep = rp.report
    ok = rep.passed(tol) and c.bounds_ok and rep.v_decayed
    doc = {
        "L": rp.clock.L, "tail": rp.clock.tail, "tail_uncertainty": rp.clock.tail_uncertainty,
        "L_flagged": rp.clock.flagged, "rel_gap": rep.rel_gap, "heterogeneity": rep.heterogeneity,
        "tail_nodes": c.tail_nodes, "a_bounds": c.bounds, "lambda_hat": c.lambda_hat,
        "w_steps": rp.limit.steps, "w_mass": [rp.limit.mass[0], rp.limit.mass[-1]],
        "pass": {"rel_gap": rep.rel_gap <= tol, "coefficient_bounds": c.bounds_ok, "v_decayed": rep.v_decayed},
    }
    (out / "limit_report.json").write_text(json.dumps(doc, indent=2, default=float) + "\n")
    write_snapshot(out / "w_final.csv", rep.w_final, traj.grid, 1.0)
    return ok, rp


def cmd_rescale(args) -> int:
    try:
        ok, rp = rescale_dir(Path(args.run_dir))
    except (IncompleteRun, ConfigError, ValueError) as e:
        log.error("rescale: %s", e)
        return FAIL
    except SolverAbort as e:
        log.error("limit solve abort: %s", e)
        return ABORT
    log.info("rel_gap=%.3e L=%.6g", rp.report.rel_gap, rp.clock.L)
    return OK if ok else FAIL


# report ----------------------------------------------------------------------

def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        cfg, traj, _ = load_run(run_dir)
    except (IncompleteRun, ConfigError) as e:
        log.error("report: %s", e)
        return FAIL
    out = run_dir / "report"
    out.mkdir(exist_ok=True)
    t, s = traj.series("t"), traj.series("sup_v")
    _write_csv(out / "decay.csv", ("t", "sup_v", "log_sup_v"), zip(t, s, np.log(s)))
    _write_csv(out / "harnack.csv", ("t", "harnack_ratio"), zip(t, traj.series("harnack_ratio")))
    lad = M.ladder_scan(traj, cfg.params)
    rows = []
    for k, p in enumerate(lad.p):
        for i, st in enumerate(traj.snap_times):
            rows.append((k, float(p), st, float(lad.norms[i, k])))
    _write_csv(out / "ladder.csv", ("k", "p_k", "t", "normalized_norm"), rows)
    clock = compute_L(traj)
    phi = compute_phi(traj, clock.L)
    _write_csv(out / "phi.csv", ("t", "tau"), zip(phi.t, phi.tau))
    log.info("report written to %s", out)
    return OK


# sweep -----------------------------------------------------------------------

SWEEP_KEYS = {"m", "alpha", "ell", "epsilon"}


def _sweep_job(job):
    cfg_dict, base_dir, out = job
    cfg = parse_config(cfg_dict, base_dir)
    code = execute(cfg, Path(out))
    row = {"case": classify(cfg.params).value, **{k: getattr(cfg.params, k) for k in ("m", "alpha", "ell", "epsilon")},
           "exit": code, "lambda_hat": "", "L": "", "rel_gap": "", "checks_passed": "", "checks_total": ""}
    if code != OK:
        return row
    _, reports = verify_dir(Path(out))
    row["checks_passed"] = sum(r.passed for r in reports)
    row["checks_total"] = len(reports)
    harn = [r for r in reports if r.lemma_id == "L4.1-harnack"][0]
    row["lambda_hat"] = harn.measured["lambda_hat"]
    try:
        _, rp = rescale_dir(Path(out))
        row["L"], row["rel_gap"] = rp.clock.L, rp.report.rel_gap
    except ValueError:
        pass
    return row


def cmd_sweep(args) -> int:
    if not args.config:
        log.error("sweep: --config is required")
        return FAIL
    path = Path(args.config)
    try:
        sweep = json.loads(path.read_text())
        base = sweep.get("base", {})
        runs = sweep.get("runs", [])
        study = sweep.get("epsilon_study")
        if not runs and not study:
            raise ConfigError("runs: empty sweep")
        jobs_in = []
        for n, r in enumerate(runs):
            unknown = sorted(set(r) - SWEEP_KEYS)
            if unknown:
                raise ConfigError(f"runs[{n}].{unknown[0]}: unknown key")
            d = json.loads(json.dumps(base))
            d.setdefault("model", {}).update(r)
            try:
                parse_config(d, path.parent)
            except ConfigError as e:
                raise ConfigError(f"runs[{n}].{e}") from None
            jobs_in.append(d)
        if study is not None:
            eps = study.get("eps", [])
            if not eps:
                raise ConfigError("epsilon_study.eps: empty list")
            study_cfg = parse_config(base, path.parent)
    except (ConfigError, json.JSONDecodeError, FileNotFoundError) as e:
        log.error("sweep config error: %s", e)
        return FAIL

    out = Path(args.out or sweep.get("out") or "sweep")
    out.mkdir(parents=True, exist_ok=True)
    workers = args.jobs or os.cpu_count() or 1
    jobs = [(d, str(path.parent), str(out / f"run_{n:03d}")) for n, d in enumerate(jobs_in)]
    try:
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                rows = list(ex.map(_sweep_job, jobs))
        else:
            rows = [_sweep_job(j) for j in jobs]
        if rows:
            keys = list(rows[0])
            _write_csv(out / "summary.csv", ["run"] + keys, [[f"run_{n:03d}"] + [r[k] for k in keys]
                                                             for n, r in enumerate(rows)])
        if study is not None:
            table = epsilon_study(initial_data(study_cfg), study_cfg.params, study_cfg.grid, eps,
                                  T=float(study.get("T", 1.0)), jobs=workers)
            _write_csv(out / "cauchy.csv", ("eps_i", "eps_next", "gap"),
                       zip(table.eps, table.eps[1:], table.gaps))
            log.info("epsilon study gaps %s (decreasing: %s)", table.gaps, table.decreasing)
    except ConfigError as e:
        log.error("sweep: %s", e)
        return FAIL
    except SolverAbort as e:
        log.error("sweep abort: %s", e)
        return ABORT
    return OK if all(r["exit"] == OK for r in rows) else ABORT


# entry -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chemosim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="simulate one config")
    p.add_argument("--config", required=False)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_run)
    for name, fn, h in (("verify", cmd_verify, "run all estimate checks"),
                        ("rescale", cmd_rescale, "time-rescaled limit cross-validation"),
                        ("report", cmd_report, "emit plot-ready CSVs")):
        p = sub.add_parser(name, help=h)
        p.add_argument("run_dir")
        p.set_defaults(fn=fn)
    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.set_defaults(fn=cmd_sweep)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return OK if e.code == 0 else FAIL
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
