"""Coherence-limited gate noise, readout errors and calibration-matrix mitigation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .circuits import GATE_TIMES_NS, Circuit, Gate, apply_gate

MAX_DENSITY_QUBITS = 6


@dataclass(frozen=True)
class NoiseModel:
    """Identical-qubit noise parameters; defaults are the baseline backend.

    Gate errors are derived from T1/T2 and gate durations only. Readout
    probabilities are ``p(read 0 | 1)`` and ``p(read 1 | 0)``.
    """

    t1_us: float = 100.0
    t2_us: float = 100.0
    gate_times_ns: dict = field(default_factory=lambda: dict(GATE_TIMES_NS))
    readout_p0_given1: float = 0.04
    readout_p1_given0: float = 0.02
    qubit_frequency_ghz: float = 4.77
    anharmonicity_ghz: float = -0.334

    def __post_init__(self):
        if self.t1_us <= 0 or self.t2_us <= 0:
            raise ValueError("T1 and T2 must be positive")
        if self.t2_us > 2 * self.t1_us * (1 + 1e-12):
            raise ValueError("T2 must not exceed 2*T1")
        for p in (self.readout_p0_given1, self.readout_p1_given0):
            if not 0 <= p <= 1:
                raise ValueError("readout probabilities must lie in [0, 1]")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(np.inf, np.inf, readout_p0_given1=0.0, readout_p1_given0=0.0)

    def with_coherence(self, t_us: float) -> "NoiseModel":
        return replace(self, t1_us=t_us, t2_us=t_us)

    def scale_readout(self, factor: float) -> "NoiseModel":
        return replace(self, readout_p0_given1=self.readout_p0_given1 * factor,
                       readout_p1_given0=self.readout_p1_given0 * factor)

    def without_readout(self) -> "NoiseModel":
        return self.scale_readout(0.0)

    def confusion(self) -> np.ndarray:
        """Single-qubit matrix A[measured, prepared]."""
        a, b = self.readout_p1_given0, self.readout_p0_given1
        return np.array([[1 - a, b], [a, 1 - b]])

    def thermal_kraus(self, duration_ns: float) -> list:
        """Amplitude damping (T1) followed by pure dephasing (remainder of T2)."""
        t = duration_ns * 1e-3  # us
        if t == 0 or (np.isinf(self.t1_us) and np.isinf(self.t2_us)):
            return []
        gamma = 1.0 - np.exp(-t / self.t1_us)
        rate_phi = 1.0 / self.t2_us - 0.5 / self.t1_us
        lam = 1.0 - np.exp(-2.0 * t * max(rate_phi, 0.0))
        amp = [np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex),
               np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)]
        deph = [np.array([[1, 0], [0, np.sqrt(1 - lam)]], dtype=complex),
                np.array([[0, 0], [0, np.sqrt(lam)]], dtype=complex)]
        return [d @ a for d in deph for a in amp]

    def coherence_limited_error(self, duration_ns: float) -> float:
        """Average gate infidelity of the thermal channel alone."""
        ks = self.thermal_kraus(duration_ns)
        if not ks:
            return 0.0
        # average fidelity of a qubit channel: (2 + sum |tr K|^2) / 6
        f = (2 + sum(abs(np.trace(k)) ** 2 for k in ks)) / 6
        return float(1 - f)


_KEYS = {
    "t1_us": float, "t2_us": float,
    "readout_p0_given1": float, "readout_p1_given0": float,
    "qubit_frequency_ghz": float, "anharmonicity_ghz": float,
}


def write_noise_model(noise: NoiseModel, path) -> None:
    lines = [f"{k} = {getattr(noise, k)!r}" for k in _KEYS]
    lines += [f"gate_time_{g.lower()}_ns = {t!r}" for g, t in noise.gate_times_ns.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_noise_model(path) -> NoiseModel:
    """``key = value`` lines; percentages allowed for readout rates (``4%``)."""
    from ..config import read_key_values

    kv = read_key_values(path)
    kwargs, times = {}, dict(GATE_TIMES_NS)
    for k, v in kv.items():
        if k.startswith("gate_time_") and k.endswith("_ns"):
            times[k[len("gate_time_"):-3].upper()] = float(v)
        elif k in _KEYS:
            v = v.strip()
            kwargs[k] = float(v[:-1]) / 100 if v.endswith("%") else float(v)
        else:
            raise ValueError(f"{path}: unknown noise key {k!r}")
    return NoiseModel(gate_times_ns=times, **kwargs)


# ---------------------------------------------------------------------------
# Density-matrix simulation
# ---------------------------------------------------------------------------

def _apply_unitary(rho, mat, qubits, n):
    rho = apply_gate(rho, mat, qubits)
    return apply_gate(rho, mat.conj(), [n + q for q in qubits])


def _apply_channel(rho, kraus, q, n):
    out = np.zeros_like(rho)
    for k in kraus:
        out += _apply_unitary(rho, k, (q,), n)
    return out


def run_density(circuit: Circuit, angles, noise: NoiseModel,
                rho: Optional[np.ndarray] = None) -> np.ndarray:
    n = circuit.n_qubits
    if n > MAX_DENSITY_QUBITS:
        raise ValueError(f"density-matrix simulation limited to {MAX_DENSITY_QUBITS} qubits")
    dim = 2**n
    if rho is None:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
    t = np.asarray(rho, dtype=complex).reshape((2,) * (2 * n))
    kraus_cache = {}
    for g, a in zip(circuit.gates, angles):
        if g.name != "I":
            t = _apply_unitary(t, g.matrix(a), g.qubits, n)
        dur = noise.gate_times_ns.get(g.name, GATE_TIMES_NS[g.name])
        if dur not in kraus_cache:
            kraus_cache[dur] = noise.thermal_kraus(dur)
        ks = kraus_cache[dur]
        if ks:
            for q in g.qubits:
                t = _apply_channel(t, ks, q, n)
    return t.reshape(dim, dim)


def simulate_density(circuit: Circuit, theta, noise: NoiseModel) -> np.ndarray:
    """Density matrix after the circuit with thermal noise on every acted qubit."""
    return run_density(circuit, circuit.gate_angles(theta), noise)


# ---------------------------------------------------------------------------
# Readout
# ---------------------------------------------------------------------------

def readout_matrix(noise: NoiseModel, n_qubits: int) -> np.ndarray:
    """Exact 2^n confusion matrix (qubit 0 = most significant bit)."""
    a = noise.confusion()
    m = np.eye(1)
    for _ in range(n_qubits):
        m = np.kron(m, a)
    return m


def apply_readout(counts: np.ndarray, noise: NoiseModel,
                  rng: np.random.Generator) -> np.ndarray:
    """Flip each measured bit independently with the model's readout rates."""
    counts = np.asarray(counts, dtype=np.int64).copy()
    n = int(np.log2(counts.size))
    if 2**n != counts.size:
        raise ValueError("histogram length must be a power of two")
    p10, p01 = noise.readout_p1_given0, noise.readout_p0_given1
    if p10 == 0 and p01 == 0:
        return counts
    for q in range(n):
        bit = 1 << (n - 1 - q)
        new = np.zeros_like(counts)
        for b in np.flatnonzero(counts):
            c = counts[b]
            p = p01 if b & bit else p10
            flipped = rng.binomial(c, p) if p > 0 else 0
            new[b] += c - flipped
            new[b ^ bit] += flipped
        counts = new
    return counts


def calibration_matrix(noise: NoiseModel, n_qubits: int, shots: Optional[int] = None,
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Columns are measured distributions of each prepared basis state.

    Basis states are prepared with X gates under the full noise model; with
    ``shots=None`` the exact distributions are used.
    """
    dim = 2**n_qubits
    conf = readout_matrix(noise, n_qubits)
    cal = np.zeros((dim, dim))
    for b in range(dim):
        gates = [Gate("X", (q,)) for q in range(n_qubits) if b >> (n_qubits - 1 - q) & 1]
        circ = Circuit(n_qubits, gates)
        rho = run_density(circ, [0.0] * len(gates), noise)
        probs = conf @ np.clip(np.diag(rho).real, 0, None)
        if shots is None:
            cal[:, b] = probs
        else:
            cal[:, b] = rng.multinomial(shots, probs / probs.sum()) / shots
    return cal


def mitigate_readout(counts: np.ndarray, calibration: np.ndarray) -> np.ndarray:
    """Corrected outcome distribution: inverse calibration, projected onto the
    probability simplex by non-negative least squares when needed."""
    p = np.asarray(counts, dtype=float)
    p = p / p.sum()
    cond = np.linalg.cond(calibration)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError("calibration matrix is singular")
    x = np.linalg.solve(calibration, p)
    if np.any(x < 0):
        x, _ = nnls(calibration, p)
    return x / x.sum()
