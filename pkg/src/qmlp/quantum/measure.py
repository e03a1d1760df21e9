"""Pauli expectation values, measurement variance, shot sampling and budgets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import erf, erfinv

from .circuits import rotate_to_basis
from .pauli import PauliHamiltonian, apply_pauli, pauli_matrix


def _is_density(state) -> bool:
    return np.ndim(state) == 2


def pauli_expectations(state: np.ndarray, h: PauliHamiltonian) -> np.ndarray:
    """<P_k> for every term; ``state`` is a statevector or a density matrix."""
    dim = 2**h.n_qubits
    if np.shape(state)[0] != dim:
        raise ValueError(f"state dimension {np.shape(state)[0]} != 2^{h.n_qubits}")
    if _is_density(state):
        return np.array([np.trace(pauli_matrix(p) @ state).real for p in h.strings])
    return np.array([np.vdot(state, apply_pauli(p, state)).real for p in h.strings])


def expectation(state: np.ndarray, h: PauliHamiltonian) -> float:
    return float(h.coefficients @ pauli_expectations(state, h))


def variance(state: np.ndarray, h: PauliHamiltonian, mode: str = "per_term") -> float:
    """``per_term``: sum_k c_k^2 (1 - <P_k>^2); ``upper_bound``: (sum_k |c_k|)^2."""
    c = h.coefficients
    if mode == "upper_bound":
        return float(np.sum(np.abs(c)) ** 2)
    if mode != "per_term":
        raise ValueError(f"unknown variance mode {mode!r}")
    ev = pauli_expectations(state, h)
    return float(np.sum(c**2 * np.clip(1.0 - ev**2, 0.0, None)))


@dataclass(frozen=True)
class ShotPlan:
    """Shots per Pauli term: an int for uniform allocation or one value per term."""

    shots: Union[int, tuple] = 1000
    seed: int = 0

    def per_term(self, n_terms: int) -> np.ndarray:
        s = np.asarray(self.shots, dtype=np.int64)
        if s.ndim == 0:
            s = np.full(n_terms, int(s))
        if s.size != n_terms:
            raise ValueError(f"{s.size} shot counts for {n_terms} terms")
        if np.any(s < 1):
            raise ValueError("every term needs at least one shot")
        return s

    @classmethod
    def uniform(cls, total: int, n_terms: int, seed: int = 0) -> "ShotPlan":
        return cls(max(1, total // n_terms), seed)

    @classmethod
    def variance_weighted(cls, total: int, h: PauliHamiltonian, state, seed: int = 0):
        """Shots proportional to |c_k| * sigma_k (the variance-optimal split)."""
        ev = pauli_expectations(state, h)
        w = np.abs(h.coefficients) * np.sqrt(np.clip(1 - ev**2, 0, None))
        if w.sum() == 0:
            return cls.uniform(total, len(h), seed)
        s = np.maximum(1, np.floor(total * w / w.sum())).astype(int)
        return cls(tuple(int(x) for x in s), seed)


def support_signs(string: str) -> np.ndarray:
    """+1/-1 eigenvalue of a Z-basis outcome for the string's rotated parity."""
    n = len(string)
    mask = sum(1 << (n - 1 - q) for q, ch in enumerate(string) if ch != "I")
    idx = np.arange(2**n)
    v = idx & mask
    parity = np.zeros_like(v)
    while np.any(v):
        parity ^= v & 1
        v >>= 1
    return 1.0 - 2.0 * parity


def parity_statistics(counts: np.ndarray, string: str):
    """Mean and sample variance of the +/-1 outcomes in a histogram."""
    signs = support_signs(string)
    shots = counts.sum()
    mean = float(counts @ signs / shots)
    var = float(max(0.0, 1.0 - mean**2) * (shots / (shots - 1))) if shots > 1 else 0.0
    return mean, var


def sample_counts(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    return rng.multinomial(int(shots), p / p.sum())


def sample_energy(state: np.ndarray, h: PauliHamiltonian, plan: ShotPlan,
                  rng: Optional[np.random.Generator] = None):
    """Shot-sampled energy estimate and its statistical error.

    Each non-identity term is measured separately: the state is rotated into
    the term's eigenbasis, ``S_k`` computational-basis outcomes are drawn, and
    the term average is the mean outcome parity over its support.
    """
    from ..rng import make_rng

    rng = rng if rng is not None else make_rng(plan.seed, "shots")
    shots = plan.per_term(len(h))
    estimate, var_sum = 0.0, 0.0
    for (c, p), s in zip(h.terms, shots):
        if set(p) == {"I"}:
            estimate += c
            continue
        rotated = rotate_to_basis(state, p)
        counts = sample_counts(np.abs(rotated) ** 2, s, rng)
        mean, var = parity_statistics(counts, p)
        estimate += c * mean
        var_sum += c**2 * var / s
    return float(estimate), float(np.sqrt(var_sum))


def shot_probability(accuracy: float, shots, var: float):
    """Probability that a Gaussian estimate with this variance lands within ``accuracy``."""
    if var <= 0:
        raise ValueError("variance must be positive")
    shots = np.asarray(shots, dtype=float)
    if np.any(shots < 1):
        raise ValueError("need at least one shot")
    return erf(accuracy * np.sqrt(shots / (2.0 * var)))


def shots_for_probability(accuracy: float, p: float, var: float) -> int:
    """Smallest integer S with shot_probability(accuracy, S, var) >= p."""
    if var <= 0:
        return 1
    s = max(1, int(np.ceil(2.0 * var * (erfinv(p) / accuracy) ** 2)))
    while shot_probability(accuracy, s, var) < p:
        s += 1
    while s > 1 and shot_probability(accuracy, s - 1, var) >= p:
        s -= 1
    return s


@dataclass(frozen=True)
class ShotBudget:
    n_terms: int
    variance: float
    shots_per_term: int
    total: int
    variance_max: float
    shots_per_term_max: int
    total_max: int


def estimate_shot_budget(h: PauliHamiltonian, state: np.ndarray, accuracy: float,
                         p: float = 0.99) -> ShotBudget:
    """Total measurements M = K * S reaching ``p`` for the state's variance and
    for the coefficient-norm upper bound."""
    if not 0 < p <= 1 - 1e-9:
        raise ValueError("p must lie in (0, 1 - 1e-9]")
    if accuracy <= 0:
        raise ValueError("accuracy must be positive")
    k = len(h)
    var = variance(state, h, "per_term")
    var_max = variance(state, h, "upper_bound")
    s = shots_for_probability(accuracy, p, var)
    s_max = shots_for_probability(accuracy, p, var_max)
    return ShotBudget(k, var, s, k * s, var_max, s_max, k * s_max)
