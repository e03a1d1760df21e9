"""Write a CUR-selected H2 training set, a validation set and their
Hamiltonian files, ready for the ``qmlp`` subcommands."""

import argparse
from pathlib import Path

from qmlp.data import write_structures
from qmlp.harness import H2Sets, h2_training_set, h2_validation_set
from qmlp.systems import write_h2_hamiltonians


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--train-size", type=int, default=20)
    ap.add_argument("--pool-size", type=int, default=200)
    ap.add_argument("--validation-size", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="data")
    a = ap.parse_args()
    sets = H2Sets(pool_size=a.pool_size, train_size=a.train_size,
                  validation_size=a.validation_size)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, ds in (("train", h2_training_set(sets, a.seed)),
                     ("validation", h2_validation_set(sets, a.seed))):
        write_structures(ds, out / f"{name}.data")
        write_h2_hamiltonians(ds, out / f"{name}_hamiltonians")
        print(f"{name}: {len(ds)} structures -> {out / name}.data")


if __name__ == "__main__":
    main()
