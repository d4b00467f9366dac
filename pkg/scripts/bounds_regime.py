"""Sweep N and M and compare both uniform-convergence confidences.

L_R comes from the uniform-margin estimate of the transformed logistic loss,
L_l from its worst-case slope. Prints one row per (M, N).
"""
import argparse
import json

from expoloss.bounds import compare_bounds, lipschitz_small_uniform
from expoloss.losses import Base, LossSpec, loss_at_zero, loss_lipschitz
from expoloss.transform import TransformParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--e", type=float, default=0.6)
    ap.add_argument("--c", type=float, default=0.005)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--json", action="store_true", help="emit JSON lines instead of a table")
    args = ap.parse_args()

    loss = LossSpec(Base.LOGISTIC, TransformParams(args.e, args.c))
    L_l, C_l = loss_lipschitz(loss), loss_at_zero(loss.base)
    if not args.json:
        print(f"{'M':>5} {'N':>9} {'L_R':>8} {'L_l':>8} {'risk-Lip conf':>14} {'loss-Lip conf':>14}")
    for M in (1.0, 5.0, 10.0, 50.0):
        L_R = lipschitz_small_uniform(loss, M)
        for N in (10**3, 10**4, 10**5, 10**6):
            r = compare_bounds(N, args.d, M, args.epsilon, L_l, C_l, L_R)
            a, b = r["risk_lipschitz"]["confidence"], r["loss_lipschitz"]["confidence"]
            if args.json:
                print(json.dumps({"M": M, "N": N, "L_R": L_R, "L_l": L_l, "risk_lipschitz": a,
                                  "loss_lipschitz": b}))
            else:
                print(f"{M:5g} {N:9d} {L_R:8.4f} {L_l:8.3f} {a:14.6g} {b:14.6g}")


if __name__ == "__main__":
    main()
