"""Loss curves of the transformed logistic and hinge losses for y = +1.

Writes CSV columns yhat, logistic_e*, hinge_e* for plotting.
    python scripts/fig1_curves.py --out results/curves.csv
"""
import argparse
import csv
import sys

from expoloss.experiments import TransformPlotConfig, transform_plot_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="-")
    ap.add_argument("--c", type=float, default=0.005)
    ap.add_argument("--steps", type=int, default=601)
    args = ap.parse_args()

    cfg = TransformPlotConfig(c=args.c, steps=args.steps)
    header, rows = transform_plot_rows(cfg)
    f = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(f, lineterminator="\n")
    w.writerow(header)
    w.writerows([[f"{v:.10g}" for v in r] for r in rows])
    if f is not sys.stdout:
        f.close()


if __name__ == "__main__":
    main()
