"""Run the standard scenario, persist it as a run directory, then verify and rescale it.

    python scripts/standard_scenario.py --ell 1 --out runs/standard_ell1
"""
import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from chemosim.cli import rescale_dir, verify_dir  # noqa: E402
from chemosim.runs import RunConfig, FieldSpec, write_run  # noqa: E402
from chemosim.solver import advance  # noqa: E402
from scenarios import standard  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--ell", type=float, default=0.0)
    ap.add_argument("--out", default="runs/standard")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    g, init, params = standard(args.n, args.ell)
    cfg = RunConfig(params, g,
                    FieldSpec("gaussian", {"center": [0.5, 0.5], "width": 0.1, "floor": 0.1}),
                    FieldSpec("constant", {"c": 1.0}))
    traj = advance(init, params, g, cfg.schedule, cfg.stop)
    out = Path(args.out)
    write_run(out, cfg, traj)
    code, reports = verify_dir(out)
    for r in reports:
        print(f"{r.lemma_id:14s} {'pass' if r.passed else 'FAIL'}{' (inconclusive)' if r.inconclusive else ''}")
    ok, rp = rescale_dir(out)
    print(f"L={rp.clock.L:.6g} rel_gap={rp.report.rel_gap:.3e} steps={traj.steps} wall={traj.wall_time:.1f}s")
    return 0 if code == 0 and ok else 1


if __name__ == "__main__":
    sys.exit(main())
