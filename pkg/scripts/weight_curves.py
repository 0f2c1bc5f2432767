"""Print unit-moment weight curves w(e) for several penalty orders."""
import argparse

import numpy as np

from powerlaw_portfolio.powerlaw import format_order, parse_order, weight_curve


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", action="append", type=parse_order, help="order, repeatable; default 2 3 4 10 inf")
    ap.add_argument("--max-excess", type=float, default=2.0)
    ap.add_argument("--n", type=int, default=9)
    args = ap.parse_args(argv)
    orders = args.p or [2.0, 3.0, 4.0, 10.0, np.inf]
    grid = np.linspace(-0.25 * args.max_excess, args.max_excess, args.n)
    print("excess " + " ".join(f"{'p=' + format_order(p):>9}" for p in orders))
    curves = [weight_curve(grid, p) for p in orders]
    for i, e in enumerate(grid):
        print(f"{e:6.3f} " + " ".join(f"{c[i]:9.4f}" for c in curves))


if __name__ == "__main__":
    main()
