"""Variational quantum eigensolver and dataset labeling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from ..data import Dataset
from ..rng import make_rng
from .circuits import Circuit, build_ansatz, measurement_gates, run_statevector
from .measure import ShotPlan, expectation, sample_counts, sample_energy, support_signs
from .noise import (NoiseModel, apply_readout, calibration_matrix, mitigate_readout,
                    readout_matrix, run_density)
from .pauli import PauliHamiltonian, parse_hamiltonian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Backend:
    """Where energies come from.

    ``exact``: noiseless statevector expectation. ``sampled``: statevector
    with shot sampling per ``plan``. ``noisy``: density matrix under
    ``noise``; with a ``plan`` outcomes are sampled and passed through the
    readout channel, without one the exact noisy distribution is used.
    ``mitigate`` applies calibration-matrix readout correction.
    """

    kind: str = "exact"
    plan: Optional[ShotPlan] = None
    noise: Optional[NoiseModel] = None
    mitigate: bool = False

    def __post_init__(self):
        if self.kind not in ("exact", "sampled", "noisy"):
            raise ValueError(f"unknown backend {self.kind!r}")
        if self.kind == "sampled" and self.plan is None:
            raise ValueError("sampled backend needs a shot plan")
        if self.kind == "noisy" and self.noise is None:
            raise ValueError("noisy backend needs a noise model")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "auto"        # auto | gd | nelder-mead
    max_iter: int = 200
    learning_rate: float = 0.3
    tol: float = 1e-7           # gradient norm (gd) or simplex size (nelder-mead)
    restarts: int = 1
    init: str = "zeros"         # zeros | random
    init_scale: float = np.pi   # random init draws from U(-scale, scale)
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("optimizer budget must be at least one iteration")
        if self.restarts < 1:
            raise ValueError("need at least one start")
        if self.method not in ("auto", "gd", "nelder-mead"):
            raise ValueError(f"unknown optimizer {self.method!r}")


@dataclass
class VqeResult:
    theta: np.ndarray
    energy: float
    trace: list
    converged: bool
    n_evaluations: int = 0
    start_energies: list = field(default_factory=list)


class EnergyFunction:
    """Energy estimator E(theta) for one Hamiltonian, circuit and backend."""

    def __init__(self, h: PauliHamiltonian, circuit: Circuit, backend: Backend,
                 rng: Optional[np.random.Generator] = None):
        if h.n_qubits != circuit.n_qubits:
            raise ValueError("circuit and Hamiltonian act on different qubit counts")
        self.h, self.circuit, self.backend = h, circuit, backend
        self.rng = rng if rng is not None else make_rng(0, "energy")
        self.trace = []
        self.calibration = None
        if backend.kind == "noisy":
            self._conf = readout_matrix(backend.noise, h.n_qubits)
            if backend.mitigate:
                self.calibration = calibration_matrix(backend.noise, h.n_qubits)
            self._meas = {p: Circuit(h.n_qubits, measurement_gates(p)) for p in h.strings}

    def __call__(self, theta) -> float:
        e = self.evaluate(theta)
        self.trace.append(e)
        return e

    def evaluate(self, theta) -> float:
        angles = self.circuit.gate_angles(theta)
        kind = self.backend.kind
        if kind == "exact":
            return expectation(run_statevector(self.circuit, angles), self.h)
        if kind == "sampled":
            psi = run_statevector(self.circuit, angles)
            return sample_energy(psi, self.h, self.backend.plan, self.rng)[0]
        return self._noisy(angles)

    def _noisy(self, angles) -> float:
        b = self.backend
        rho = run_density(self.circuit, angles, b.noise)
        shots = b.plan.per_term(len(self.h)) if b.plan is not None else None
        energy = 0.0
        for k, (c, p) in enumerate(self.h.terms):
            if set(p) == {"I"}:
                energy += c
                continue
            meas = self._meas[p]
            r = run_density(meas, [g.angle for g in meas.gates], b.noise, rho)
            probs = np.clip(np.diag(r).real, 0.0, None)
            if shots is None:
                dist = self._conf @ probs
            else:
                counts = sample_counts(probs, shots[k], self.rng)
                dist = apply_readout(counts, b.noise, self.rng).astype(float)
            if self.calibration is not None:
                dist = mitigate_readout(dist, self.calibration)
            dist = dist / dist.sum()
            energy += c * float(dist @ support_signs(p))
        return energy


def _parameter_shift_gradient(fn: EnergyFunction, theta: np.ndarray) -> np.ndarray:
    """Exact gradient for RY-parameterized circuits, summed over slot occurrences."""
    circuit = fn.circuit
    base = np.array(circuit.gate_angles(theta), dtype=float)
    grad = np.zeros_like(theta)
    for gi, g in enumerate(circuit.gates):
        if g.slot is None:
            continue
        plus, minus = base.copy(), base.copy()
        plus[gi] += np.pi / 2
        minus[gi] -= np.pi / 2
        ep = expectation(run_statevector(circuit, plus), fn.h)
        em = expectation(run_statevector(circuit, minus), fn.h)
        fn.trace += [ep, em]
        grad[g.slot] += 0.5 * (ep - em)
    return grad


def _gradient_descent(fn, x0, cfg: OptimizerConfig):
    theta = np.array(x0, dtype=float)
    converged = False
    for _ in range(cfg.max_iter):
        grad = _parameter_shift_gradient(fn, theta)
        if np.linalg.norm(grad) < cfg.tol:
            converged = True
            break
        theta = theta - cfg.learning_rate * grad
    return theta, fn(theta), converged


def _nelder_mead(fn, x0, cfg: OptimizerConfig):
    res = minimize(fn, np.array(x0, dtype=float), method="Nelder-Mead",
                   options={"maxiter": cfg.max_iter, "xatol": max(cfg.tol, 1e-10),
                            "fatol": np.inf, "initial_simplex": _simplex(x0)})
    theta = np.atleast_1d(res.x)
    # a fresh estimate at the optimum, as a device would report it
    return theta, fn(theta), bool(res.success)


def _simplex(x0):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    sim = np.tile(x0, (x0.size + 1, 1))
    for i in range(x0.size):
        sim[i + 1, i] += 0.5
    return sim


def vqe(h: PauliHamiltonian, circuit: Circuit, optimizer: OptimizerConfig = OptimizerConfig(),
        backend: Backend = Backend(), seed: Optional[int] = None,
        x0: Optional[Sequence[float]] = None) -> VqeResult:
    """Minimize the backend's energy estimate; the best of ``restarts`` starts wins."""
    seed = optimizer.seed if seed is None else seed
    method = optimizer.method
    if method == "auto":
        method = "gd" if backend.kind == "exact" else "nelder-mead"
    if method == "gd" and backend.kind != "exact":
        raise ValueError("parameter-shift gradient descent needs the exact backend")
    init_rng = make_rng(seed, "vqe-init")
    fn = EnergyFunction(h, circuit, backend, make_rng(seed, "vqe-shots"))
    best = None
    starts = []
    for r in range(optimizer.restarts):
        if x0 is not None and r == 0:
            start = np.asarray(x0, dtype=float)
        elif optimizer.init == "random" or r > 0:
            start = init_rng.uniform(-optimizer.init_scale, optimizer.init_scale,
                                     circuit.n_params)
        else:
            start = np.zeros(circuit.n_params)
        run = _gradient_descent if method == "gd" else _nelder_mead
        theta, energy, conv = run(fn, start, optimizer)
        starts.append(energy)
        if best is None or energy < best[1]:
            best = (theta, energy, conv)
    theta, energy, conv = best
    return VqeResult(np.asarray(theta), float(energy), list(fn.trace), conv,
                     len(fn.trace), starts)


# ---------------------------------------------------------------------------
# Dataset labeling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabelConfig:
    ansatz: str = "h2_minimal"
    depth: int = 1
    backend: Backend = Backend()
    optimizer: OptimizerConfig = OptimizerConfig()
    repeats: int = 1
    outlier_mads: float = 3.0
    seed: int = 0


def hamiltonian_path(directory, index: int) -> Path:
    return Path(directory) / f"{index}.ham"


def filtered_average(energies: Sequence[float], converged: Sequence[bool],
                     n_mads: float = 3.0) -> float:
    """Mean of the kept runs.

    Only converged runs are used when there are any. Runs whose energy exceeds
    the median by more than ``n_mads`` median absolute deviations are dropped.
    """
    e = np.asarray(energies, dtype=float)
    conv = np.asarray(converged, dtype=bool)
    if conv.any():
        e = e[conv]
    med = np.median(e)
    mad = np.median(np.abs(e - med))
    kept = e[e - med <= n_mads * mad]
    return float(kept.mean())


def label_structure(h: PauliHamiltonian, config: LabelConfig, index: int):
    """All VQE runs for one structure and the filtered label."""
    circuit = build_ansatz(config.ansatz, h.n_qubits, config.depth)
    runs = []
    for r in range(config.repeats):
        seed = int(make_rng(config.seed, "label", index, r).integers(2**31))
        runs.append(vqe(h, circuit, config.optimizer, config.backend, seed=seed))
    label = filtered_average([x.energy for x in runs], [x.converged for x in runs],
                             config.outlier_mads)
    return label, runs


def label_dataset(dataset: Dataset,
                  hamiltonians: Union[str, Path, Sequence[PauliHamiltonian], Callable],
                  config: LabelConfig = LabelConfig()) -> Dataset:
    """Replace energies with VQE labels; forces are removed.

    ``hamiltonians`` is a directory holding ``<index>.ham`` per structure, a
    sequence aligned with the dataset, or a callable ``index -> Hamiltonian``.
    """
    out = []
    for i, s in enumerate(dataset):
        if callable(hamiltonians):
            h = hamiltonians(i)
        elif isinstance(hamiltonians, (str, Path)):
            path = hamiltonian_path(hamiltonians, i)
            if not path.exists():
                raise FileNotFoundError(f"missing Hamiltonian file {path}")
            h = parse_hamiltonian(path)
        else:
            h = hamiltonians[i]
        energy, _ = label_structure(h, config, i)
        out.append(replace(s, energy=energy, forces=None))
    return Dataset(out, units=dataset.units)
