"""Successive sup-norm gaps of u(., T) as the regularization epsilon shrinks.

    python scripts/epsilon_study.py --kmin 3 --kmax 7 --T 1
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from chemosim.rescale import epsilon_study  # noqa: E402
from scenarios import standard  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--kmin", type=int, default=3)
    ap.add_argument("--kmax", type=int, default=7)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    g, init, params = standard(args.n)
    eps = [2.0 ** -k for k in range(args.kmin, args.kmax + 1)]
    tab = epsilon_study(init, params, g, eps, T=args.T, jobs=args.jobs)
    print("eps_i,eps_next,gap")
    for a, b, gap in zip(tab.eps, tab.eps[1:], tab.gaps):
        print(f"{a:g},{b:g},{gap:.6e}")
    print(f"strictly decreasing: {tab.decreasing}")
    return 0 if tab.decreasing else 1


if __name__ == "__main__":
    sys.exit(main())
