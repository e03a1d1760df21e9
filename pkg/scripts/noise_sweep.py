"""Label-noise grid on the built-in 20-structure H2 set.

Trains one potential per (delta_E, delta_F, repeat) cell and scores it on a
clean validation set. Writes results/noise_sweep.csv.

    python3 scripts/noise_sweep.py --repeats 3 --workers 1
"""

import argparse
from dataclasses import replace

from qmlp.harness import SweepConfig, run_noise_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--energy-noise-only", action="store_true",
                    help="vary energy noise only")
    ap.add_argument("--out", default="results/noise_sweep.csv")
    a = ap.parse_args()
    cfg = SweepConfig(repeats=a.repeats, workers=a.workers, seed=a.seed, output=a.out)
    if a.energy_noise_only:
        cfg = replace(cfg, delta_f=(0.0,))
    res = run_noise_sweep(cfg)
    for row in res.rows:
        print(f"dE={row['delta_e_mev_atom']:>7} meV/atom  dF={row['delta_f_ev_a']:>6} eV/A  "
              f"RMSE(E)={row['rmse_energy_mev_atom_mean']:9.2f} "
              f"+/- {row['rmse_energy_mev_atom_std']:.2f}")
    print(f"wrote {a.out}")


if __name__ == "__main__":
    main()
