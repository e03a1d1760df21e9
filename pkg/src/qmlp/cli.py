"""Command-line entry point: ``qmlp <subcommand> ...``.

Every subcommand prints a JSON object on success. Failures exit nonzero with
one JSON line ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import harness
from .config import load_config
from .cur import feature_matrix, select_columns, select_rows, structure_matrix
from .data import HARTREE_TO_EV, convert_units, parse_structures, subsample, write_structures
from .descriptors import DEFAULT_CUTOFF, default_descriptor_set, fit_scaling
from .mlp import TrainConfig, evaluate, load_model, predict, save_model
from .quantum.circuits import build_ansatz
from .quantum.measure import ShotPlan, estimate_shot_budget, sample_energy
from .quantum.noise import NoiseModel, read_noise_model
from .quantum.pauli import exact_ground_state, parse_hamiltonian
from .quantum.vqe import Backend, LabelConfig, OptimizerConfig, label_dataset, vqe
from .rng import make_rng
from .systems import h2_bond_lengths, h2_dataset, water_dataset, write_h2_hamiltonians


@dataclass(frozen=True)
class TrainJob:
    model: harness.ModelConfig = harness.ModelConfig(r_c=DEFAULT_CUTOFF, n_angular=2)
    train: TrainConfig = TrainConfig()
    seed: int = 0


@dataclass(frozen=True)
class EngineConfig:
    """Flat VQE settings shared by ``vqe`` and ``label``."""

    ansatz: str = "h2_minimal"
    depth: int = 1
    backend: str = "exact"          # exact | sampled | noisy
    shots: int = 0                  # per term; 0 = exact noisy expectation
    noise_file: Optional[str] = None
    mitigate: bool = False
    method: str = "auto"
    max_iter: int = 200
    restarts: int = 1
    init: str = "zeros"
    repeats: int = 1
    seed: int = 0

    def backend_spec(self) -> Backend:
        plan = ShotPlan(self.shots, self.seed) if self.shots > 0 else None
        if self.backend == "exact":
            return Backend()
        if self.backend == "sampled":
            if plan is None:
                raise ValueError("sampled backend needs shots > 0")
            return Backend("sampled", plan=plan)
        noise = read_noise_model(self.noise_file) if self.noise_file else NoiseModel()
        return Backend("noisy", plan=plan, noise=noise, mitigate=self.mitigate)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(method=self.method, max_iter=self.max_iter,
                               restarts=self.restarts, init=self.init, seed=self.seed)


def _emit(obj) -> None:
    print(json.dumps(obj, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _load_data(path, units: str):
    ds = parse_structures(path)
    return convert_units(ds, "from_ev") if units == "ev" else ds


def _units_arg(p):
    p.add_argument("--units", choices=["hartree", "ev"], default="hartree",
                   help="units of the structure file: Hartree/Bohr (default) or eV/Angstrom")


def _config_args(p):
    p.add_argument("--config", help="key = value file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable; dotted keys for sections)")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_make_h2(a):
    bonds = h2_bond_lengths(a.n, a.seed, label=a.tag)
    ds = h2_dataset(bonds, a.seed, labels=a.labels, label=a.tag)
    if a.cur is not None:
        ds = subsample(ds, harness.cur_subset(ds, a.cur, a.seed, r_c=6.0))
    write_structures(ds, a.out)
    out = {"structures": len(ds), "path": a.out}
    if a.hamiltonians:
        out["hamiltonians"] = len(write_h2_hamiltonians(ds, a.hamiltonians))
    _emit(out)


def cmd_make_water(a):
    ds = water_dataset(a.n, a.seed)
    write_structures(ds, a.out)
    _emit({"structures": len(ds), "path": a.out})


def cmd_train(a):
    job = load_config(TrainJob, a.config, a.set)
    tr = _load_data(a.train, a.units)
    model = harness.fit_potential(tr, job.model, job.train, job.seed)
    save_model(model, a.out)
    out = {"model": a.out, "train": evaluate(model, tr)}
    if a.validation:
        out["validation"] = evaluate(model, _load_data(a.validation, a.units))
    _emit(out)


def cmd_evaluate(a):
    model = load_model(a.model)
    m = evaluate(model, _load_data(a.data, a.units))
    m["rmse_energy_mev_atom"] = m["rmse_energy"] * HARTREE_TO_EV * 1e3
    _emit(m)


def cmd_predict(a):
    model = load_model(a.model)
    ds = _load_data(a.data, a.units)
    pred = predict(model, ds, forces=not a.no_forces)
    if a.units == "ev":
        pred = convert_units(pred, "to_ev")
    write_structures(pred, a.out)
    _emit({"structures": len(pred), "path": a.out})


def cmd_vqe(a):
    cfg = load_config(EngineConfig, a.config, a.set)
    h = parse_hamiltonian(a.hamiltonian)
    circuit = build_ansatz(cfg.ansatz, h.n_qubits, cfg.depth)
    res = vqe(h, circuit, cfg.optimizer(), cfg.backend_spec(), seed=cfg.seed)
    out = {"energy": res.energy, "theta": res.theta, "converged": res.converged,
           "evaluations": res.n_evaluations}
    if h.n_qubits <= 12:
        out["exact"] = exact_ground_state(h)[0]
    _emit(out)


def cmd_sample(a):
    h = parse_hamiltonian(a.hamiltonian)
    e0, psi = exact_ground_state(h)
    rng = make_rng(a.seed, "cli-sample")
    est = [sample_energy(psi, h, ShotPlan(a.shots, a.seed), rng) for _ in range(a.repeats)]
    vals = np.array([e for e, _ in est])
    _emit({"exact": e0, "estimates": vals, "eps_stat": [s for _, s in est],
           "mean": float(vals.mean()), "std": float(vals.std())})


def cmd_budget(a):
    h = parse_hamiltonian(a.hamiltonian)
    accuracy = a.accuracy_mev * 1e-3 / HARTREE_TO_EV
    _, psi = exact_ground_state(h)
    b = estimate_shot_budget(h, psi, accuracy, a.p)
    _emit(asdict(b) | {"accuracy_ha": accuracy})


def cmd_label(a):
    cfg = load_config(EngineConfig, a.config, a.set)
    ds = _load_data(a.data, a.units)
    lab_cfg = LabelConfig(ansatz=cfg.ansatz, depth=cfg.depth, backend=cfg.backend_spec(),
                          optimizer=cfg.optimizer(), repeats=cfg.repeats, seed=cfg.seed)
    out = label_dataset(ds, a.hamiltonians, lab_cfg)
    write_structures(out, a.out)
    _emit({"structures": len(out), "path": a.out})


def cmd_select(a):
    ds = _load_data(a.data, a.units)
    pool = fit_scaling(ds, default_descriptor_set(ds.elements(), n_radial=a.n_radial,
                                                  n_angular=a.n_angular, r_c=a.cutoff,
                                                  angular=a.n_angular > 0))
    if a.mode == "structures":
        x = structure_matrix(ds, pool)
        res = select_rows(x, a.n, epsilon_stop=a.epsilon,
                          tags=[f"structure-{i}" for i in range(len(ds))])
    else:
        x = feature_matrix(ds, pool, a.element)
        funcs = [pool.functions[a.element][i] for i in pool.active(a.element)]
        res = select_columns(x, a.n, epsilon_stop=a.epsilon, tags=[f.line() for f in funcs])
    res.write_csv(a.out)
    _emit({"selected": list(res.indices), "epsilon": list(res.errors),
           "exhausted": res.exhausted, "path": a.out})


def _sweep_cfg(a):
    cfg = load_config(harness.SweepConfig, a.config, a.set)
    return replace(cfg, output=a.out) if a.out else cfg


def _summary(result):
    return {"rows": len(result.rows), "columns": result.columns}


def cmd_sweep_noise(a):
    _emit(_summary(harness.run_noise_sweep(_sweep_cfg(a))) | {"path": a.out})


def cmd_sweep_size(a):
    _emit(_summary(harness.run_dataset_size_sweep(_sweep_cfg(a))) | {"path": a.out})


def cmd_study_opt_noise(a):
    cfg = load_config(harness.OptNoiseConfig, a.config, a.set)
    if a.out:
        cfg = replace(cfg, output=a.out)
    table = harness.run_optimization_noise_study(cfg)
    _emit(harness.residual_summary(table) | {"path": cfg.output})


def cmd_study_hw_noise(a):
    cfg = load_config(harness.HardwareConfig, a.config, a.set)
    if a.out_dir:
        cfg = replace(cfg, output_dir=a.out_dir)
    parts = a.part or ["gate", "readout"]
    out = {}
    if "gate" in parts:
        out["gate_noise"] = harness.run_gate_noise_study(cfg).rows
    if "readout" in parts:
        out["readout"] = harness.run_readout_study(cfg)[0].rows
    _emit(out | {"output_dir": cfg.output_dir})


def cmd_report(a):
    """Validate CSV reports and print them as aligned text tables."""
    lines = []
    for path in a.inputs:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty file (no header)")
        for i, row in enumerate(rows[1:], start=2):
            for c, v in zip(rows[0], row):
                try:
                    if not math.isfinite(float(v)):
                        raise ValueError(f"{path}:{i}: non-finite {c}")
                except ValueError as exc:
                    if "non-finite" in str(exc):
                        raise
        width = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
        lines.append(f"== {path}")
        lines += ["  ".join(v.ljust(w) for v, w in zip(r, width)) for r in rows]
    text = "\n".join(lines) + "\n"
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmlp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-h2", help="random H2 structures (and Hamiltonian files)")
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tag", default="h2", help="label of the random stream")
    s.add_argument("--labels", choices=["exact", "energy", "none"], default="exact")
    s.add_argument("--cur", type=int, help="keep this many structures selected by CUR")
    s.add_argument("--hamiltonians", help="directory for <index>.ham files")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_make_h2)

    s = sub.add_parser("make-water", help="random unlabeled water geometries")
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_make_water)

    s = sub.add_parser("train", help="train a potential")
    s.add_argument("--train", required=True)
    s.add_argument("--validation")
    s.add_argument("--out", required=True, help="model file")
    _units_arg(s)
    _config_args(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="RMSE of a model on labeled structures")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    _units_arg(s)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="write model predictions as a structure file")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--no-forces", action="store_true")
    _units_arg(s)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("vqe", help="VQE on a Hamiltonian file")
    s.add_argument("--hamiltonian", required=True)
    _config_args(s)
    s.set_defaults(func=cmd_vqe)

    s = sub.add_parser("sample", help="shot-sampled energies of the exact ground state")
    s.add_argument("--hamiltonian", required=True)
    s.add_argument("--shots", type=int, default=1000, help="per Pauli term")
    s.add_argument("--repeats", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("budget", help="measurements needed for a target accuracy")
    s.add_argument("--hamiltonian", required=True)
    s.add_argument("--accuracy-mev", type=float, default=30.0)
    s.add_argument("--p", type=float, default=0.99)
    s.set_defaults(func=cmd_budget)

    s = sub.add_parser("label", help="label structures with VQE energies")
    s.add_argument("--data", required=True)
    s.add_argument("--hamiltonians", required=True, help="directory of <index>.ham files")
    s.add_argument("--out", required=True)
    _units_arg(s)
    _config_args(s)
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("select", help="CUR selection of features or structures")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", choices=["features", "structures"], default="features")
    s.add_argument("--element", default="H")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--epsilon", type=float, help="stop once the error drops below this")
    s.add_argument("--n-radial", type=int, default=8)
    s.add_argument("--n-angular", type=int, default=2)
    s.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF)
    s.add_argument("--out", required=True, help="CSV of picks")
    _units_arg(s)
    s.set_defaults(func=cmd_select)

    for name, func, help_ in [("sweep-noise", cmd_sweep_noise, "label-noise grid"),
                              ("sweep-size", cmd_sweep_size, "noise x dataset-size grid")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--out", help="CSV path")
        _config_args(s)
        s.set_defaults(func=func)

    s = sub.add_parser("study-opt-noise", help="budget-capped VQE labels vs MLP smoothing")
    s.add_argument("--out", help="CSV path")
    _config_args(s)
    s.set_defaults(func=cmd_study_opt_noise)

    s = sub.add_parser("study-hw-noise", help="gate-noise and readout-noise studies")
    s.add_argument("--out-dir", help="directory for the CSV files")
    s.add_argument("--part", action="append", choices=["gate", "readout"])
    _config_args(s)
    s.set_defaults(func=cmd_study_hw_noise)

    s = sub.add_parser("report", help="check CSV reports and print them as tables")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "command": args.command,
                          "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
