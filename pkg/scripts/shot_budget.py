"""Shot statistics for a Hamiltonian file (default: H2 at 1.4 bohr).

Reports the measurement budget for a target accuracy and compares the
empirical hit rate of sampled estimates with the Gaussian (erf) prediction.
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from qmlp.harness import MEV
from qmlp.quantum.measure import (ShotPlan, estimate_shot_budget, sample_energy,
                                  shot_probability, variance)
from qmlp.quantum.pauli import exact_ground_state, parse_hamiltonian, write_hamiltonian
from qmlp.rng import make_rng
from qmlp.systems import h2_hamiltonian


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hamiltonian", help="Pauli Hamiltonian file")
    ap.add_argument("--accuracy-mev", type=float, default=30.0)
    ap.add_argument("--p", type=float, default=0.99)
    ap.add_argument("--repeats", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    if a.hamiltonian:
        h = parse_hamiltonian(a.hamiltonian)
    else:
        path = Path(tempfile.mkdtemp()) / "h2.ham"
        write_hamiltonian(h2_hamiltonian(1.4), path)
        h = parse_hamiltonian(path)
    e0, psi = exact_ground_state(h)
    eps = a.accuracy_mev * MEV
    b = estimate_shot_budget(h, psi, eps, a.p)
    print(f"K={b.n_terms} terms, sigma^2={b.variance:.4g}, M={b.total:.3e} "
          f"(upper bound {b.total_max:.3e})")
    if h.n_qubits > 6:
        return
    rng = make_rng(a.seed, "shot-budget")
    var = variance(psi, h)
    for s in (10**2, 10**3, 10**4, 10**5):
        d = np.array([sample_energy(psi, h, ShotPlan(s), rng)[0] for _ in range(a.repeats)]) - e0
        print(f"S={s:>6}  std={d.std():.3e} Ha  p_emp={np.mean(np.abs(d) < eps):.3f}  "
              f"p_erf={float(shot_probability(eps, s, var)):.3f}")


if __name__ == "__main__":
    main()
