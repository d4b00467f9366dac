"""Planted-outlier Gaussians: test accuracy and weight direction for e = 1 vs e = 0.6.

    python scripts/outlier_trend.py --seeds 20 --out results/outliers.json
"""
import argparse
import dataclasses
from pathlib import Path

from expoloss.experiments import OutlierTrendConfig, dumps, run_outlier_trend


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--outlier-scale", type=float, default=5.0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    cfg = OutlierTrendConfig(seeds=args.seeds)
    cfg.data = dataclasses.replace(cfg.data, outlier_scale=args.outlier_scale)
    doc = run_outlier_trend(cfg)
    for r in doc["results"]:
        print(f"e={r['e']:<5} acc {r['mean_test_acc']:.4f} +- {r['std_test_acc']:.4f}"
              f"   angle {r['mean_angle_deg']:6.2f} +- {r['std_angle_deg']:.2f} deg")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(dumps(doc))


if __name__ == "__main__":
    main()
