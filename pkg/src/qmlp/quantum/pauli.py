"""Qubit Hamiltonians as weighted sums of Pauli strings.

Convention: the leftmost character of a Pauli string acts on qubit 0, and
qubit 0 is the most significant bit of a computational-basis index, so a
string's dense matrix is ``kron(p_0, p_1, ..., p_{n-1})``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

MAX_DENSE_QUBITS = 12


class HamiltonianFileError(ValueError):
    pass


@dataclass(frozen=True)
class PauliHamiltonian:
    terms: tuple  # ((coefficient, string), ...) with unique strings
    n_qubits: int

    def __post_init__(self):
        merged = {}
        for c, p in self.terms:
            p = str(p).upper()
            if len(p) != self.n_qubits:
                raise ValueError(f"string {p!r} has length {len(p)}, expected {self.n_qubits}")
            if set(p) - set("IXYZ"):
                raise ValueError(f"bad character in Pauli string {p!r}")
            c = float(c)
            if not np.isfinite(c):
                raise ValueError("non-finite coefficient")
            merged[p] = merged.get(p, 0.0) + c
        object.__setattr__(self, "terms", tuple((c, p) for p, c in merged.items()))

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms])

    @property
    def strings(self) -> list:
        return [p for _, p in self.terms]

    def __len__(self):
        return len(self.terms)

    def identity_coefficient(self) -> float:
        return sum(c for c, p in self.terms if set(p) == {"I"})

    def one_norm(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    def to_matrix(self) -> np.ndarray:
        if self.n_qubits > MAX_DENSE_QUBITS:
            raise ValueError(f"dense matrices limited to {MAX_DENSE_QUBITS} qubits")
        dim = 2**self.n_qubits
        m = np.zeros((dim, dim), dtype=complex)
        for c, p in self.terms:
            m += c * pauli_matrix(p)
        return m


def pauli_matrix(string: str) -> np.ndarray:
    return reduce(np.kron, (PAULI[ch] for ch in string), np.eye(1, dtype=complex))


def _masks(string: str):
    n = len(string)
    x = z = ny = 0
    for q, ch in enumerate(string):
        bit = 1 << (n - 1 - q)
        if ch in "XY":
            x |= bit
        if ch in "ZY":
            z |= bit
        if ch == "Y":
            ny += 1
    return x, z, ny


def _parity(values: np.ndarray) -> np.ndarray:
    """Popcount parity of integer array entries."""
    v = values.copy()
    p = np.zeros_like(v)
    while np.any(v):
        p ^= v & 1
        v >>= 1
    return p


def apply_pauli(string: str, state: np.ndarray) -> np.ndarray:
    """P|psi> for a statevector, without building the matrix."""
    x, z, ny = _masks(string)
    idx = np.arange(state.size)
    src = idx ^ x
    phase = (1j) ** ny * (1.0 - 2.0 * _parity(src & z))
    return phase * state[src]


def parse_hamiltonian(path) -> PauliHamiltonian:
    """Read ``<coefficient> <pauli_string>`` lines (Hartree); ``#`` starts a comment."""
    terms, n = [], None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise HamiltonianFileError(f"{path}:{lineno}: expected '<coefficient> <string>'")
        try:
            c = float(parts[0])
        except ValueError:
            raise HamiltonianFileError(f"{path}:{lineno}: bad coefficient {parts[0]!r}") from None
        p = parts[1].upper()
        if set(p) - set("IXYZ"):
            raise HamiltonianFileError(f"{path}:{lineno}: bad character in {parts[1]!r}")
        if n is None:
            n = len(p)
        elif len(p) != n:
            raise HamiltonianFileError(
                f"{path}:{lineno}: string length {len(p)} differs from {n}")
        terms.append((c, p))
    if n is None:
        raise HamiltonianFileError(f"{path}: no terms")
    return PauliHamiltonian(tuple(terms), n)


def write_hamiltonian(h: PauliHamiltonian, path, header: str = "") -> None:
    lines = [f"# {line}" for line in header.splitlines()]
    lines += [f"{c!r} {p}" for c, p in h.terms]
    Path(path).write_text("\n".join(lines) + "\n")


def exact_ground_state(h: PauliHamiltonian):
    """Lowest eigenvalue and eigenvector of the dense Hamiltonian."""
    if h.n_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"exact diagonalization limited to {MAX_DENSE_QUBITS} qubits")
    w, v = np.linalg.eigh(h.to_matrix())
    psi = v[:, 0]
    k = np.argmax(np.abs(psi))
    psi = psi * (abs(psi[k]) / psi[k])  # fix the global phase
    return float(w[0]), psi
