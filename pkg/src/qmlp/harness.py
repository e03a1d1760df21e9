"""Experiment orchestration: label-noise sweeps, dataset-size sweeps and the
optimization / hardware noise studies on H2, with CSV reports."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .cur import select_rows, structure_matrix
from .data import (EV_PER_ANGSTROM_TO_HA_PER_BOHR, HARTREE_TO_EV, Dataset, NoiseInjection,
                   compute_normalization, inject_noise, parse_structures,
                   subsample)
from .descriptors import DEFAULT_CUTOFF, default_descriptor_set, fit_scaling
from .mlp import (MlpArchitecture, MlpModel, TrainConfig, TrainingError, evaluate, init_model,
                  predict, train)
from .quantum.circuits import build_ansatz
from .quantum.measure import ShotPlan
from .quantum.noise import NoiseModel
from .quantum.vqe import Backend, LabelConfig, OptimizerConfig, label_dataset, vqe
from .rng import derive_seed, make_rng
from .systems import bond_length, h2_bond_lengths, h2_dataset, h2_hamiltonian

log = logging.getLogger(__name__)

MEV = 1e-3 / HARTREE_TO_EV  # Hartree per meV

DEFAULT_DELTA_E_MEV = (1000.0, 100.0, 10.0, 1.0, 0.1)          # meV/atom
DEFAULT_DELTA_F_EV_A = (10.0, 1.0, 0.1, 0.01, 0.001)          # eV/Angstrom
DEFAULT_COHERENCE_US = (100.0, 200.0, 500.0, 1000.0, 1500.0, 2000.0)

# Settles the 20-structure H2 fits at a few meV/atom on one CPU in seconds.
H2_TRAIN = TrainConfig(epochs=6000, learning_rate=1e-2, lr_decay=0.9995, lr_min=1e-4,
                       beta=0.0, patience=0)


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (10, 10)
    activation: str = "tanh"
    n_radial: int = 6
    n_angular: int = 0      # 0 disables angular functions
    r_c: float = 6.0        # Bohr; H2 bonds span at most 4.2


@dataclass(frozen=True)
class H2Sets:
    """Built-in H2 data: CUR-selected training sets from random pools and a
    random validation set, bond lengths in [0.6, 4.2] Bohr."""

    pool_size: int = 200
    train_size: int = 20
    validation_size: int = 50
    selection_radial: int = 16


def fit_potential(train_set: Dataset, model_cfg: ModelConfig, train_cfg: TrainConfig,
                  seed: int) -> MlpModel:
    """Descriptors, scaling and normalization fitted on ``train_set``, then trained.

    Model selection uses the training error only; validation data stay unseen.
    """
    elements = train_set.elements()
    ds = default_descriptor_set(elements, n_radial=model_cfg.n_radial,
                                n_angular=max(model_cfg.n_angular, 1),
                                r_c=model_cfg.r_c, angular=model_cfg.n_angular > 0)
    ds = fit_scaling(train_set, ds)
    norm = compute_normalization(train_set)
    model = init_model(MlpArchitecture(tuple(model_cfg.hidden), model_cfg.activation),
                       ds, norm, seed=seed)
    best, _ = train(model, train_set, replace(train_cfg, seed=seed))
    return best


def cur_subset(pool: Dataset, n: int, seed: int = 0, n_radial: int = 16,
               r_c: float = DEFAULT_CUTOFF) -> list:
    """Indices of ``n`` structures chosen by CUR on per-structure descriptor sums.

    If the descriptor matrix runs out of rank first, the remainder is drawn
    uniformly from the unselected structures.
    """
    if n > len(pool):
        raise ValueError(f"requested {n} structures from a pool of {len(pool)}")
    if n == len(pool):
        return list(range(n))
    ds = fit_scaling(pool, default_descriptor_set(pool.elements(), n_radial=n_radial,
                                                  angular=False, r_c=r_c))
    sel = select_rows(structure_matrix(pool, ds), n)
    picked = list(sel.indices)
    if len(picked) < n:
        rest = np.setdiff1d(np.arange(len(pool)), picked)
        extra = make_rng(seed, "cur-fill").choice(rest, n - len(picked), replace=False)
        picked += [int(i) for i in extra]
    return picked


def h2_training_set(sets: H2Sets, seed: int, set_index: int = 0, labels: str = "exact",
                    r_c: float = 6.0) -> Dataset:
    tag = f"h2-train-{set_index}"
    pool = h2_dataset(h2_bond_lengths(sets.pool_size, seed, label=tag), seed,
                      labels=labels, label=tag)
    idx = cur_subset(pool, sets.train_size, seed, sets.selection_radial, r_c)
    return subsample(pool, idx)


def h2_validation_set(sets: H2Sets, seed: int, labels: str = "exact") -> Dataset:
    return h2_dataset(h2_bond_lengths(sets.validation_size, seed, label="h2-val"), seed,
                      labels=labels, label="h2-val")


# ---------------------------------------------------------------------------
# Results and reports
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    """Rows of a report: coordinates, then metric means and stds, then seeds."""

    coordinates: tuple
    metrics: tuple
    rows: list = field(default_factory=list)

    @property
    def columns(self) -> list:
        return (list(self.coordinates) + [f"{m}_mean" for m in self.metrics]
                + [f"{m}_std" for m in self.metrics] + ["seeds"])

    def add(self, coords: dict, samples: dict, seeds) -> None:
        row = {c: coords[c] for c in self.coordinates}
        for m in self.metrics:
            v = np.asarray(samples[m], dtype=float)
            row[f"{m}_mean"] = float(v.mean())
            row[f"{m}_std"] = float(v.std())
        row["seeds"] = ";".join(str(int(s)) for s in seeds)
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


@dataclass
class Table:
    """Free-form report with fixed columns."""

    columns: list
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_report(results, path) -> Path:
    """Write ``results`` as CSV with a stable column order; NaN is refused."""
    columns = results.columns
    for i, row in enumerate(results.rows):
        for c in columns:
            v = row[c]
            if isinstance(v, (float, np.floating)) and not math.isfinite(v):
                raise ValueError(f"non-finite value in row {i}, column {c!r}: {v}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in results.rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def _run_jobs(fn, jobs, workers: int):
    """Map ``fn`` over ``jobs`` with at most ``workers`` processes, order preserved."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# Label-noise and dataset-size sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    delta_e: tuple = (0.0,) + DEFAULT_DELTA_E_MEV     # meV/atom
    delta_f: tuple = (0.0,) + DEFAULT_DELTA_F_EV_A    # eV/Angstrom
    sizes: tuple = (5, 10, 20, 50, 100, 200)          # dataset-size sweep only
    repeats: int = 3
    train_path: Optional[str] = None                  # structure file; built-in H2 if unset
    validation_path: Optional[str] = None
    output: Optional[str] = None
    seed: int = 0
    workers: int = 1
    model: ModelConfig = ModelConfig()
    train: TrainConfig = H2_TRAIN
    data: H2Sets = H2Sets()

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        for name in ("delta_e", "delta_f"):
            if any(v < 0 for v in getattr(self, name)):
                raise ValueError(f"{name} values must be non-negative")


def _base_sets(cfg: SweepConfig):
    if (cfg.train_path is None) != (cfg.validation_path is None):
        raise ValueError("give both train_path and validation_path, or neither")
    if cfg.train_path is not None:
        return parse_structures(cfg.train_path), parse_structures(cfg.validation_path)
    return (h2_training_set(cfg.data, cfg.seed, r_c=cfg.model.r_c),
            h2_validation_set(cfg.data, cfg.seed))


def _noise_cell(job):
    cfg, train_set, validation, de, df, r, seed = job
    noisy = inject_noise(train_set, NoiseInjection(de * MEV, df * EV_PER_ANGSTROM_TO_HA_PER_BOHR,
                                                   seed))
    try:
        model = fit_potential(noisy, cfg.model, cfg.train, seed)
    except TrainingError as exc:
        raise TrainingError(f"cell delta_e={de} meV/atom, delta_f={df} eV/A, "
                            f"repeat {r}: {exc}") from exc
    metrics = evaluate(model, validation)
    return (metrics["rmse_energy"] / MEV,
            metrics.get("rmse_forces", float("nan")) / EV_PER_ANGSTROM_TO_HA_PER_BOHR)


def run_noise_sweep(cfg: SweepConfig, train_set: Optional[Dataset] = None,
                    validation: Optional[Dataset] = None) -> SweepResult:
    """Inject noise into the training labels cell by cell, train, and score
    on the clean validation set. RMSEs in meV/atom and eV/Angstrom."""
    if train_set is None or validation is None:
        train_set, validation = _base_sets(cfg)
    train_set.require_nonempty("noise sweep")
    validation.require_nonempty("noise sweep validation")
    with_forces = train_set.has_forces and validation.has_forces
    if not train_set.has_forces and any(cfg.delta_f):
        raise ValueError("force noise requested but training set has no forces")
    metrics = ("rmse_energy_mev_atom",) + (("rmse_forces_ev_a",) if with_forces else ())
    result = SweepResult(("delta_e_mev_atom", "delta_f_ev_a"), metrics)
    cells = [(de, df) for de in cfg.delta_e for df in cfg.delta_f]
    jobs = []
    for ci, (de, df) in enumerate(cells):
        for r in range(cfg.repeats):
            jobs.append((cfg, train_set, validation, de, df, r,
                         derive_seed(cfg.seed, "noise-cell", ci, r)))
    out = _run_jobs(_noise_cell, jobs, cfg.workers)
    for ci, (de, df) in enumerate(cells):
        chunk = out[ci * cfg.repeats:(ci + 1) * cfg.repeats]
        samples = {"rmse_energy_mev_atom": [x[0] for x in chunk]}
        if with_forces:
            samples["rmse_forces_ev_a"] = [x[1] for x in chunk]
        seeds = [j[-1] for j in jobs[ci * cfg.repeats:(ci + 1) * cfg.repeats]]
        result.add({"delta_e_mev_atom": de, "delta_f_ev_a": df}, samples, seeds)
    if cfg.output:
        emit_report(result, cfg.output)
    return result


def _size_cell(job):
    cfg, pool, validation, de, size, r, seed = job
    idx = cur_subset(pool, size, seed, cfg.data.selection_radial, cfg.model.r_c)
    noisy = inject_noise(subsample(pool, idx), NoiseInjection(de * MEV, 0.0, seed))
    model = fit_potential(noisy, cfg.model, replace(cfg.train, beta=0.0), seed)
    return evaluate(model, validation)["rmse_energy"] / MEV


def run_dataset_size_sweep(cfg: SweepConfig, pool: Optional[Dataset] = None,
                           validation: Optional[Dataset] = None) -> SweepResult:
    """Energy-only training on CUR subsets of the pool over (delta_e, size)."""
    if pool is None or validation is None:
        if cfg.train_path is not None:
            pool, validation = _base_sets(cfg)
        else:
            tag = "h2-size-pool"
            pool = h2_dataset(h2_bond_lengths(cfg.data.pool_size, cfg.seed, label=tag),
                              cfg.seed, labels="energy", label=tag)
            validation = h2_validation_set(cfg.data, cfg.seed, labels="energy")
    for s in cfg.sizes:
        if s > len(pool):
            raise ValueError(f"size {s} exceeds the pool of {len(pool)} structures")
    pool = Dataset([replace(s, forces=None) for s in pool], units=pool.units)
    validation = Dataset([replace(s, forces=None) for s in validation], units=validation.units)
    result = SweepResult(("delta_e_mev_atom", "size"), ("rmse_energy_mev_atom",))
    cells = [(de, n) for de in cfg.delta_e for n in cfg.sizes]
    jobs = [(cfg, pool, validation, de, n, r, derive_seed(cfg.seed, "size-cell", ci, r))
            for ci, (de, n) in enumerate(cells) for r in range(cfg.repeats)]
    out = _run_jobs(_size_cell, jobs, cfg.workers)
    for ci, (de, n) in enumerate(cells):
        sl = slice(ci * cfg.repeats, (ci + 1) * cfg.repeats)
        result.add({"delta_e_mev_atom": de, "size": n},
                   {"rmse_energy_mev_atom": out[sl]}, [j[-1] for j in jobs[sl]])
    if cfg.output:
        emit_report(result, cfg.output)
    return result


# ---------------------------------------------------------------------------
# Optimization-noise study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptNoiseConfig:
    """Labels from budget-capped exact-backend VQE with random starts."""

    ansatz: str = "ry_cnot"
    depth: int = 1
    max_iter: int = 20
    learning_rate: float = 1.0
    init_scale: float = float(np.pi)   # starts uniform around the reference angles
    train_size: int = 100
    validation_size: int = 50
    pool_size: int = 400
    seed: int = 0
    output: Optional[str] = None
    model: ModelConfig = ModelConfig()
    train: TrainConfig = H2_TRAIN


def _capped_labels(ds: Dataset, cfg: OptNoiseConfig, tag: str) -> np.ndarray:
    opt = OptimizerConfig(method="gd", max_iter=cfg.max_iter, learning_rate=cfg.learning_rate,
                          init="random", init_scale=cfg.init_scale)
    out = []
    for i, s in enumerate(ds):
        h = h2_hamiltonian(bond_length(s))
        circuit = build_ansatz(cfg.ansatz, 2, cfg.depth)
        # start near the Hartree-Fock determinant where the ansatz allows it
        x0 = _hf_angles(cfg.ansatz, circuit.n_params)
        x0 = x0 + make_rng(cfg.seed, tag, "init", i).uniform(-cfg.init_scale, cfg.init_scale,
                                                             circuit.n_params)
        res = vqe(h, circuit, opt, Backend(), seed=derive_seed(cfg.seed, tag, i), x0=x0)
        out.append(res.energy)
    return np.array(out)


def _hf_angles(ansatz: str, n_params: int) -> np.ndarray:
    theta = np.zeros(n_params)
    if ansatz == "ry_cnot":
        theta[n_params - 2] = np.pi  # final-layer RY on qubit 0 gives |10>
    return theta


def run_optimization_noise_study(cfg: OptNoiseConfig) -> Table:
    """Per validation structure: exact energy, capped-VQE label and MLP prediction.

    The MLP is trained on capped-VQE labels of the training structures.
    """
    sets = H2Sets(pool_size=cfg.pool_size, train_size=cfg.train_size,
                  validation_size=cfg.validation_size)
    train_set = h2_training_set(sets, cfg.seed, labels="energy", r_c=cfg.model.r_c)
    validation = h2_validation_set(sets, cfg.seed, labels="energy")
    tr_labels = _capped_labels(train_set, cfg, "opt-train")
    va_labels = _capped_labels(validation, cfg, "opt-val")
    labeled = Dataset([replace(s, energy=float(e)) for s, e in zip(train_set, tr_labels)])
    model = fit_potential(labeled, cfg.model, replace(cfg.train, beta=0.0),
                          derive_seed(cfg.seed, "opt-model"))
    pred = predict(model, validation, forces=False).energies()
    exact = validation.energies()
    n = validation.atom_counts()
    table = Table(["index", "bond_length_bohr", "exact_ha", "label_ha", "mlp_ha",
                   "label_residual_mev_atom", "mlp_residual_mev_atom"])
    for i, s in enumerate(validation):
        table.rows.append({
            "index": i, "bond_length_bohr": bond_length(s), "exact_ha": float(exact[i]),
            "label_ha": float(va_labels[i]), "mlp_ha": float(pred[i]),
            "label_residual_mev_atom": float((va_labels[i] - exact[i]) / n[i] / MEV),
            "mlp_residual_mev_atom": float((pred[i] - exact[i]) / n[i] / MEV)})
    tr_res = (tr_labels - train_set.energies()) / train_set.atom_counts() / MEV
    log.info("training-label residuals: mean %.2f std %.2f meV/atom", tr_res.mean(), tr_res.std())
    if cfg.output:
        emit_report(table, cfg.output)
    return table


def residual_summary(table: Table) -> dict:
    lab = table.column("label_residual_mev_atom")
    mlp = table.column("mlp_residual_mev_atom")
    return {"label_mean": float(lab.mean()), "label_std": float(lab.std()),
            "mlp_mean": float(mlp.mean()), "mlp_std": float(mlp.std())}


# ---------------------------------------------------------------------------
# Hardware-noise study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HardwareConfig:
    coherence_us: tuple = DEFAULT_COHERENCE_US   # T1 = T2 grid
    n_sets: int = 3                              # independent training sets per level
    readout_factors: tuple = (1.0, 0.01)
    shots: int = 100000                          # per circuit, readout study
    vqe_iterations: int = 200
    seed: int = 0
    output_dir: Optional[str] = None
    model: ModelConfig = ModelConfig()
    train: TrainConfig = H2_TRAIN
    data: H2Sets = H2Sets(validation_size=20)


def _vqe_labels(ds: Dataset, backend: Backend, cfg: HardwareConfig, seed: int) -> np.ndarray:
    hams = [h2_hamiltonian(bond_length(s)) for s in ds]
    opt = OptimizerConfig(method="auto", max_iter=cfg.vqe_iterations, tol=1e-4)
    lab = label_dataset(ds, hams, LabelConfig(backend=backend, optimizer=opt, seed=seed))
    return lab.energies()


def _with_energies(ds: Dataset, energies) -> Dataset:
    return Dataset([replace(s, energy=float(e), forces=None) for s, e in zip(ds, energies)])


def _rmse_mev(pred, ref, atoms) -> float:
    return float(np.sqrt(np.mean(((np.asarray(pred) - ref) / atoms) ** 2)) / MEV)


def run_gate_noise_study(cfg: HardwareConfig) -> Table:
    """MLP accuracy against noiseless VQE energies as T1 = T2 grows.

    Gate noise only: energies are exact density-matrix expectations (no shot
    noise, no readout error).
    """
    validation = h2_validation_set(cfg.data, cfg.seed, labels="none")
    atoms_v = validation.atom_counts()
    exact_v = _vqe_labels(validation, Backend(), cfg, cfg.seed)
    sets = [h2_training_set(cfg.data, cfg.seed, k, labels="none", r_c=cfg.model.r_c)
            for k in range(cfg.n_sets)]
    exact_sets = [_vqe_labels(s, Backend(), cfg, cfg.seed) for s in sets]
    ref_rmse = []
    for k, s in enumerate(sets):
        model = fit_potential(_with_energies(s, exact_sets[k]), cfg.model, cfg.train,
                              derive_seed(cfg.seed, "gate-ref", k))
        ref_rmse.append(_rmse_mev(predict(model, validation, forces=False).energies(),
                                  exact_v, atoms_v))
    table = Table(["t1_t2_us", "label_rmse_mev_atom", "mlp_rmse_mean_mev_atom",
                   "mlp_rmse_std_mev_atom", "reference_rmse_mean_mev_atom",
                   "reference_rmse_std_mev_atom"])
    for level, t in enumerate(cfg.coherence_us):
        noise = NoiseModel().with_coherence(float(t)).without_readout()
        backend = Backend("noisy", noise=noise)
        noisy_v = _vqe_labels(validation, backend, cfg, cfg.seed)
        rmses = []
        for k, s in enumerate(sets):
            labels = _vqe_labels(s, backend, cfg, cfg.seed)
            model = fit_potential(_with_energies(s, labels), cfg.model, cfg.train,
                                  derive_seed(cfg.seed, "gate", level, k))
            rmses.append(_rmse_mev(predict(model, validation, forces=False).energies(),
                                   exact_v, atoms_v))
        table.rows.append({
            "t1_t2_us": float(t),
            "label_rmse_mev_atom": _rmse_mev(noisy_v, exact_v, atoms_v),
            "mlp_rmse_mean_mev_atom": float(np.mean(rmses)),
            "mlp_rmse_std_mev_atom": float(np.std(rmses)),
            "reference_rmse_mean_mev_atom": float(np.mean(ref_rmse)),
            "reference_rmse_std_mev_atom": float(np.std(ref_rmse))})
    if cfg.output_dir:
        emit_report(table, Path(cfg.output_dir) / "gate_noise.csv")
    return table


def run_readout_study(cfg: HardwareConfig):
    """Readout error at scaled rates, with and without calibration-matrix mitigation.

    Returns two tables: MLP validation RMSEs per condition, and per-structure
    validation energies (exact, unmitigated, mitigated) per readout factor.
    """
    sets = H2Sets(pool_size=cfg.data.pool_size, train_size=cfg.data.train_size,
                  validation_size=cfg.data.validation_size)
    train_set = h2_training_set(sets, cfg.seed, labels="none", r_c=cfg.model.r_c)
    validation = h2_validation_set(sets, cfg.seed, labels="none")
    atoms_t, atoms_v = train_set.atom_counts(), validation.atom_counts()
    exact_t = _vqe_labels(train_set, Backend(), cfg, cfg.seed)
    exact_v = _vqe_labels(validation, Backend(), cfg, cfg.seed)
    summary = Table(["readout_factor", "mitigated", "label_rmse_mev_atom",
                     "mlp_rmse_vs_exact_mev_atom", "mlp_rmse_vs_labels_mev_atom"])
    curves = Table(["readout_factor", "index", "bond_length_bohr", "exact_ha",
                    "unmitigated_ha", "mitigated_ha"])
    for fi, factor in enumerate(cfg.readout_factors):
        noise = NoiseModel().scale_readout(float(factor))
        energies = {}
        for mit in (False, True):
            backend = Backend("noisy", plan=ShotPlan(cfg.shots), noise=noise, mitigate=mit)
            seed = derive_seed(cfg.seed, "readout", fi, int(mit))
            lab_t = _vqe_labels(train_set, backend, cfg, seed)
            lab_v = _vqe_labels(validation, backend, cfg, seed)
            energies[mit] = lab_v
            model = fit_potential(_with_energies(train_set, lab_t), cfg.model, cfg.train,
                                  derive_seed(cfg.seed, "readout-model", fi, int(mit)))
            pred = predict(model, validation, forces=False).energies()
            summary.rows.append({
                "readout_factor": float(factor), "mitigated": int(mit),
                "label_rmse_mev_atom": _rmse_mev(lab_t, exact_t, atoms_t),
                "mlp_rmse_vs_exact_mev_atom": _rmse_mev(pred, exact_v, atoms_v),
                "mlp_rmse_vs_labels_mev_atom": _rmse_mev(pred, lab_v, atoms_v)})
        for i, s in enumerate(validation):
            curves.rows.append({
                "readout_factor": float(factor), "index": i,
                "bond_length_bohr": bond_length(s), "exact_ha": float(exact_v[i]),
                "unmitigated_ha": float(energies[False][i]),
                "mitigated_ha": float(energies[True][i])})
    if cfg.output_dir:
        emit_report(summary, Path(cfg.output_dir) / "readout.csv")
        emit_report(curves, Path(cfg.output_dir) / "readout_curves.csv")
    return summary, curves


def run_hardware_noise_study(cfg: HardwareConfig) -> dict:
    gate = run_gate_noise_study(cfg)
    summary, curves = run_readout_study(cfg)
    return {"gate_noise": gate, "readout": summary, "readout_curves": curves}
