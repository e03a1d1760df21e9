"""Gate-noise (T1 = T2 grid) and readout-noise studies on H2.

    python3 scripts/hardware_noise.py --coherence 100 500 2000 --sets 3
    python3 scripts/hardware_noise.py --part readout
"""

import argparse

from qmlp.harness import DEFAULT_COHERENCE_US, HardwareConfig, run_gate_noise_study, run_readout_study


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--coherence", type=float, nargs="+", default=list(DEFAULT_COHERENCE_US),
                    help="T1 = T2 values in microseconds")
    ap.add_argument("--sets", type=int, default=3, help="training sets per noise level")
    ap.add_argument("--shots", type=int, default=100000)
    ap.add_argument("--part", choices=["gate", "readout", "both"], default="both")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="results")
    a = ap.parse_args()
    cfg = HardwareConfig(coherence_us=tuple(a.coherence), n_sets=a.sets, shots=a.shots,
                         seed=a.seed, output_dir=a.out_dir)
    if a.part in ("gate", "both"):
        for r in run_gate_noise_study(cfg).rows:
            print(f"T={r['t1_t2_us']:7.0f} us  labels {r['label_rmse_mev_atom']:7.2f}  "
                  f"MLP {r['mlp_rmse_mean_mev_atom']:7.2f} +/- {r['mlp_rmse_std_mev_atom']:.2f}  "
                  f"noiseless ref {r['reference_rmse_mean_mev_atom']:.2f} meV/atom")
    if a.part in ("readout", "both"):
        summary, _ = run_readout_study(cfg)
        for r in summary.rows:
            tag = "mitigated  " if r["mitigated"] else "unmitigated"
            print(f"readout x{r['readout_factor']:<5} {tag}  labels "
                  f"{r['label_rmse_mev_atom']:7.2f}  MLP {r['mlp_rmse_vs_exact_mev_atom']:7.2f} "
                  f"meV/atom")
    print(f"CSV files in {a.out_dir}/")


if __name__ == "__main__":
    main()
