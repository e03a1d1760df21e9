"""Energy-noise x training-set-size grid with CUR-selected H2 subsets.

    python3 scripts/size_sweep.py --sizes 5 10 20 50 --repeats 3
"""

import argparse

from qmlp.harness import DEFAULT_DELTA_E_MEV, SweepConfig, run_dataset_size_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[5, 10, 20, 50, 100, 200])
    ap.add_argument("--delta-e", type=float, nargs="+", default=[0.0, *DEFAULT_DELTA_E_MEV])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/size_sweep.csv")
    a = ap.parse_args()
    cfg = SweepConfig(delta_e=tuple(a.delta_e), sizes=tuple(a.sizes), repeats=a.repeats,
                      workers=a.workers, seed=a.seed, output=a.out)
    res = run_dataset_size_sweep(cfg)
    for row in res.rows:
        print(f"dE={row['delta_e_mev_atom']:>7}  n={row['size']:>4}  "
              f"RMSE={row['rmse_energy_mev_atom_mean']:9.2f} "
              f"+/- {row['rmse_energy_mev_atom_std']:.2f} meV/atom")
    print(f"wrote {a.out}")


if __name__ == "__main__":
    main()
