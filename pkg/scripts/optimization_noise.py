"""Budget-capped VQE labels versus the potential trained on them.

Prints mean and std of label-vs-exact and MLP-vs-exact residuals on the
validation structures; the per-structure table goes to CSV.
"""

import argparse

from qmlp.harness import OptNoiseConfig, residual_summary, run_optimization_noise_study


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-iter", type=int, default=20, help="gradient steps per VQE run")
    ap.add_argument("--train-size", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/optimization_noise.csv")
    a = ap.parse_args()
    cfg = OptNoiseConfig(max_iter=a.max_iter, train_size=a.train_size, seed=a.seed,
                         output=a.out)
    s = residual_summary(run_optimization_noise_study(cfg))
    print(f"labels: {s['label_mean']:7.2f} +/- {s['label_std']:7.2f} meV/atom")
    print(f"MLP   : {s['mlp_mean']:7.2f} +/- {s['mlp_std']:7.2f} meV/atom")
    print(f"wrote {a.out}")


if __name__ == "__main__":
    main()
