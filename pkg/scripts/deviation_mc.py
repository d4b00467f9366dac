"""Monte-Carlo frequency of large risk-difference deviations against the Hoeffding bound."""
import argparse
import dataclasses

from expoloss.experiments import DeviationCheckConfig, run_deviation_check


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--e", type=float, default=1.0)
    args = ap.parse_args()

    for N, eps, rho in ((200, 0.1, 0.05), (1000, 0.05, 0.02)):
        cfg = dataclasses.replace(DeviationCheckConfig(), N=N, epsilon=eps, rho=rho, trials=args.trials, e=args.e)
        rep = run_deviation_check(cfg)["report"]
        print(f"N={N:5d} eps={eps:<5} rho={rho:<5} freq={rep['frequency']:.4f} "
              f"bound={rep['hoeffding_bound']:.4f} slack={rep['slack']:.4f} "
              f"{'ok' if rep['passed'] else 'VIOLATED'}")


if __name__ == "__main__":
    main()
