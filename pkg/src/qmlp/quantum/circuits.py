"""Parameterized circuits and the statevector simulator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# Native gate durations in ns. RZ is virtual; RY is two SX pulses.
GATE_TIMES_NS = {"I": 35.6, "SX": 35.6, "X": 35.6, "RZ": 0.0, "RY": 71.2, "CX": 430.0}

MAX_STATEVECTOR_QUBITS = 20

_SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_I = np.eye(2, dtype=complex)
_CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple
    slot: Optional[int] = None   # parameter index for RY
    angle: float = 0.0           # fixed angle (RZ, or RY without a slot)

    def matrix(self, theta: Optional[float] = None) -> np.ndarray:
        a = self.angle if theta is None else theta
        if self.name == "RY":
            c, s = np.cos(a / 2), np.sin(a / 2)
            return np.array([[c, -s], [s, c]], dtype=complex)
        if self.name == "RZ":
            return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])
        return {"SX": _SX, "X": _X, "I": _I, "CX": _CX}[self.name]


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple = ()
    n_params: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        used = set()
        for g in self.gates:
            if g.name not in GATE_TIMES_NS:
                raise ValueError(f"unsupported gate {g.name}")
            if any(not 0 <= q < self.n_qubits for q in g.qubits):
                raise ValueError(f"gate {g} acts outside {self.n_qubits} qubits")
            if len(set(g.qubits)) != len(g.qubits):
                raise ValueError(f"gate {g} repeats a qubit")
            if g.slot is not None:
                if g.name != "RY":
                    raise ValueError("only RY gates take variational parameters")
                used.add(g.slot)
        if used != set(range(self.n_params)):
            raise ValueError("every parameter slot must be referenced at least once")

    def gate_angles(self, theta) -> list:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        return [theta[g.slot] if g.slot is not None else g.angle for g in self.gates]

    def count(self, name: str) -> int:
        return sum(g.name == name for g in self.gates)

    def then(self, gates) -> "Circuit":
        return Circuit(self.n_qubits, self.gates + tuple(gates), self.n_params)


def build_ansatz(kind: str, n_qubits: int = 2, depth: int = 1) -> Circuit:
    """``h2_minimal``: X(0), RY(theta, 1), CX(1 -> 0).

    ``ry_cnot``: ``depth`` blocks of an RY layer followed by a linear CX
    cascade, then a final RY layer; n_qubits * (depth + 1) parameters.
    """
    if kind == "h2_minimal":
        if n_qubits != 2:
            raise ValueError("h2_minimal is a 2-qubit ansatz")
        gates = [Gate("X", (0,)), Gate("RY", (1,), slot=0), Gate("CX", (1, 0))]
        return Circuit(2, gates, 1)
    if kind == "ry_cnot":
        if depth < 1 or n_qubits < 1:
            raise ValueError("ry_cnot needs depth >= 1 and at least one qubit")
        gates, slot = [], 0
        for _ in range(depth):
            for q in range(n_qubits):
                gates.append(Gate("RY", (q,), slot=slot))
                slot += 1
            gates += [Gate("CX", (q, q + 1)) for q in range(n_qubits - 1)]
        for q in range(n_qubits):
            gates.append(Gate("RY", (q,), slot=slot))
            slot += 1
        return Circuit(n_qubits, gates, slot)
    raise ValueError(f"unknown ansatz kind {kind!r}")


def measurement_gates(string: str) -> list:
    """Native gates rotating each qubit's Pauli eigenbasis onto Z.

    X: RZ(pi/2) then SX (a Hadamard up to a trailing RZ); Y: SX.
    """
    gates = []
    for q, ch in enumerate(string):
        if ch == "X":
            gates += [Gate("RZ", (q,), angle=np.pi / 2), Gate("SX", (q,))]
        elif ch == "Y":
            gates.append(Gate("SX", (q,)))
    return gates


def apply_gate(tensor: np.ndarray, mat: np.ndarray, axes) -> np.ndarray:
    """Contract a (2^k x 2^k) matrix into the given tensor axes."""
    k = len(axes)
    op = mat.reshape((2,) * (2 * k))
    out = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def run_statevector(circuit: Circuit, angles, state: Optional[np.ndarray] = None) -> np.ndarray:
    n = circuit.n_qubits
    if n > MAX_STATEVECTOR_QUBITS:
        raise ValueError(f"statevector simulation limited to {MAX_STATEVECTOR_QUBITS} qubits")
    if state is None:
        psi = np.zeros((2,) * n, dtype=complex)
        psi[(0,) * n] = 1.0
    else:
        psi = np.asarray(state, dtype=complex).reshape((2,) * n)
    for g, a in zip(circuit.gates, angles):
        if g.name == "I":
            continue
        psi = apply_gate(psi, g.matrix(a), g.qubits)
    return psi.reshape(-1)


def simulate_statevector(circuit: Circuit, theta=()) -> np.ndarray:
    return run_statevector(circuit, circuit.gate_angles(theta))


def rotate_to_basis(state: np.ndarray, string: str) -> np.ndarray:
    n = len(string)
    return run_statevector(Circuit(n, measurement_gates(string)),
                           [g.angle for g in measurement_gates(string)], state)
