"""Eigenvalue classes of the four rate systems against their predicted regions.

Prints the default theorem grid plus, optionally, a custom (eta, g) grid.
Exits non-zero if any row disagrees with its prediction.
"""

import argparse
import sys

from hla_lab import experiments as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eta", type=float, nargs="*", default=[])
    ap.add_argument("--g", type=float, nargs="*", default=[])
    args = ap.parse_args()

    rows = ex.default_theorem_rows()
    if args.eta and args.g:
        rows += ex.theorem_grid(args.eta, args.g)
    for r in rows:
        ev = ", ".join(f"{e:.6g}" for e in r.eigenvalues)
        print(f"{r.rule:<6} eta={r.eta:<6g} g={r.g:<10.6g} [{ev}] {r.kind:<14} "
              f"{'ok' if r.consistent else 'MISMATCH (expected ' + r.predicted + ')'}")
    bad = sum(not r.consistent for r in rows)
    print(f"{len(rows) - bad}/{len(rows)} rows consistent")
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
