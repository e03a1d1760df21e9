"""Built-in molecular systems: a minimal-basis H2 qubit Hamiltonian and
random geometries for H2 and H2O.

The H2 Hamiltonian uses STO-3G (zeta = 1.24) with closed-form Gaussian
integrals. The Nalpha = Nbeta = 1 sector of the four spin orbitals maps onto
two qubits: qubit 0 is set when the alpha electron sits in sigma_g, qubit 1
when the beta electron sits in sigma_u. The Hartree-Fock determinant is
then |10> and the doubly excited one |01>.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import erf
from scipy.spatial.transform import Rotation

from .data import Dataset, Structure
from .quantum.pauli import PAULI, PauliHamiltonian, write_hamiltonian
from .rng import make_rng

STO3G_EXPONENTS = np.array([3.42525091, 0.62391373, 0.16885540])
STO3G_COEFFS = np.array([0.15432897, 0.53532814, 0.44463454])

H2_BOND_RANGE = (0.6, 4.2)  # Bohr


def _boys0(t):
    t = np.asarray(t, dtype=float)
    small = t < 1e-12
    safe = np.where(small, 1.0, t)
    return np.where(small, 1.0 - t / 3.0, 0.5 * np.sqrt(np.pi / safe) * erf(np.sqrt(safe)))


def _contracted():
    a = STO3G_EXPONENTS
    d = STO3G_COEFFS * (2 * a / np.pi) ** 0.75
    return a, d


def _ao_integrals(r: float):
    """Overlap, core Hamiltonian and two-electron integrals over two 1s AOs at z=0, z=r."""
    a, d = _contracted()
    centers = np.array([0.0, r])
    s = np.zeros((2, 2))
    t = np.zeros((2, 2))
    v = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            rab2 = (centers[i] - centers[j]) ** 2
            for p in range(3):
                for q in range(3):
                    ap, aq = a[p], a[q]
                    g, mu = ap + aq, ap * aq / (ap + aq)
                    dd = d[p] * d[q]
                    ov = (np.pi / g) ** 1.5 * np.exp(-mu * rab2)
                    s[i, j] += dd * ov
                    t[i, j] += dd * mu * (3 - 2 * mu * rab2) * ov
                    pz = (ap * centers[i] + aq * centers[j]) / g
                    for c in centers:
                        v[i, j] += dd * (-2 * np.pi / g) * np.exp(-mu * rab2) * _boys0(g * (pz - c) ** 2)
    eri = np.zeros((2, 2, 2, 2))
    idx = [(i, j, k, l) for i in range(2) for j in range(2) for k in range(2) for l in range(2)]
    for i, j, k, l in idx:
        val = 0.0
        for p in range(3):
            for q in range(3):
                g1 = a[p] + a[q]
                m1 = a[p] * a[q] / g1
                p1 = (a[p] * centers[i] + a[q] * centers[j]) / g1
                e1 = np.exp(-m1 * (centers[i] - centers[j]) ** 2)
                for u in range(3):
                    for w in range(3):
                        g2 = a[u] + a[w]
                        m2 = a[u] * a[w] / g2
                        p2 = (a[u] * centers[k] + a[w] * centers[l]) / g2
                        e2 = np.exp(-m2 * (centers[k] - centers[l]) ** 2)
                        pref = 2 * np.pi**2.5 / (g1 * g2 * np.sqrt(g1 + g2))
                        val += (d[p] * d[q] * d[u] * d[w] * pref * e1 * e2
                                * _boys0(g1 * g2 / (g1 + g2) * (p1 - p2) ** 2))
        eri[i, j, k, l] = val  # chemist's notation (ij|kl)
    return s, t + v, eri


def _fermion_ops(n_modes: int):
    """Jordan-Wigner annihilation operators as dense matrices."""
    a = np.array([[0, 1], [0, 0]], dtype=float)
    z = np.diag([1.0, -1.0])
    ops = []
    for m in range(n_modes):
        mats = [z] * m + [a] + [np.eye(2)] * (n_modes - m - 1)
        op = np.eye(1)
        for x in mats:
            op = np.kron(op, x)
        ops.append(op)
    return ops


def h2_sector_matrix(r: float) -> np.ndarray:
    """Electronic 4x4 Hamiltonian (no nuclear repulsion) in the two-qubit basis."""
    s, hcore, eri = _ao_integrals(r)
    c = np.array([[1, 1], [1, -1]], dtype=float)
    c[:, 0] /= np.sqrt(2 * (1 + s[0, 1]))
    c[:, 1] /= np.sqrt(2 * (1 - s[0, 1]))
    h_mo = c.T @ hcore @ c
    g_mo = np.einsum("pi,qj,rk,sl,pqrs->ijkl", c, c, c, c, eri)
    # spin orbitals: 0 g-alpha, 1 g-beta, 2 u-alpha, 3 u-beta
    spatial, spin = [0, 0, 1, 1], [0, 1, 0, 1]
    ops = _fermion_ops(4)
    ham = np.zeros((16, 16))
    for p in range(4):
        for q in range(4):
            if spin[p] == spin[q]:
                ham += h_mo[spatial[p], spatial[q]] * ops[p].T @ ops[q]
    for p in range(4):
        for q in range(4):
            for r_ in range(4):
                for t in range(4):
                    if spin[p] == spin[t] and spin[q] == spin[r_]:
                        coef = 0.5 * g_mo[spatial[p], spatial[t], spatial[q], spatial[r_]]
                        if coef:
                            ham += coef * ops[p].T @ ops[q].T @ ops[r_] @ ops[t]

    def occ_index(modes):
        return sum(1 << (3 - m) for m in modes)

    # qubit basis |q0 q1>: q0 = alpha in g, q1 = beta in u
    basis = []
    for q0 in (0, 1):
        for q1 in (0, 1):
            alpha = 0 if q0 else 2
            beta = 3 if q1 else 1
            basis.append(occ_index(sorted((alpha, beta))))
    return ham[np.ix_(basis, basis)]


def _pauli_decompose(m: np.ndarray, tol: float = 1e-14) -> list:
    n = int(np.log2(m.shape[0]))
    terms = []
    for code in np.ndindex(*(4,) * n):
        string = "".join("IXYZ"[k] for k in code)
        p = PAULI[string[0]]
        for ch in string[1:]:
            p = np.kron(p, PAULI[ch])
        c = np.trace(p @ m).real / 2**n
        if abs(c) > tol:
            terms.append((float(c), string))
    return terms


@lru_cache(maxsize=4096)
def h2_hamiltonian(r: float) -> PauliHamiltonian:
    """Two-qubit H2 Hamiltonian at bond length ``r`` (Bohr), nuclear repulsion included."""
    if r <= 0:
        raise ValueError("bond length must be positive")
    terms = _pauli_decompose(h2_sector_matrix(float(r)))
    terms.append((1.0 / r, "II"))
    return PauliHamiltonian(tuple(terms), 2)


def h2_exact_energy(r: float) -> float:
    m = h2_sector_matrix(float(r))
    return float(np.linalg.eigvalsh(m)[0] + 1.0 / r)


def h2_exact_force(r: float, h: float = 1e-4) -> float:
    """-dE/dr by a five-point stencil."""
    e = [h2_exact_energy(r + k * h) for k in (-2, -1, 1, 2)]
    return -(e[0] - 8 * e[1] + 8 * e[2] - e[3]) / (12 * h)


def _h2_structure(r: float, rng, energy: Optional[float], force: Optional[float],
                  comment: str) -> Structure:
    axis = Rotation.random(random_state=rng).apply([0.0, 0.0, 1.0])
    center = rng.uniform(-1, 1, 3)
    pos = np.array([center - 0.5 * r * axis, center + 0.5 * r * axis])
    forces = None
    if force is not None:
        # positive force pushes atoms apart
        forces = np.array([-force * axis, force * axis])
    return Structure(["H", "H"], pos, energy, forces, comment)


def h2_bond_lengths(n: int, seed: int = 0, bond_range=H2_BOND_RANGE, label: str = "h2") -> np.ndarray:
    rng = make_rng(seed, label, "bonds")
    return np.sort(rng.uniform(bond_range[0], bond_range[1], n))


def h2_dataset(bonds, seed: int = 0, labels: str = "exact", label: str = "h2") -> Dataset:
    """H2 structures at the given bond lengths with random orientation.

    ``labels``: ``exact`` (energy and forces from the minimal-basis full CI),
    ``energy`` (energy only) or ``none``.
    """
    rng = make_rng(seed, label, "orient")
    out = []
    for r in np.asarray(bonds, dtype=float):
        e = f = None
        if labels in ("exact", "energy"):
            e = h2_exact_energy(r)
        if labels == "exact":
            f = h2_exact_force(r)
        out.append(_h2_structure(r, rng, e, f, f"H2 r={float(r)!r}"))
    return Dataset(out)


def bond_length(structure: Structure) -> float:
    p = structure.positions
    return float(np.linalg.norm(p[1] - p[0]))


def write_h2_hamiltonians(dataset: Dataset, directory) -> list:
    """One ``<index>.ham`` per structure; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, s in enumerate(dataset):
        if list(s.species) != ["H", "H"]:
            raise ValueError(f"structure {i} is not H2")
        r = bond_length(s)
        path = directory / f"{i}.ham"
        write_hamiltonian(h2_hamiltonian(r), path, f"H2 STO-3G, r = {r!r} bohr")
        paths.append(path)
    return paths


def water_dataset(n: int, seed: int = 0) -> Dataset:
    """Unlabeled, randomly distorted and oriented water molecules (Bohr)."""
    rng = make_rng(seed, "water")
    out = []
    for _ in range(n):
        r1, r2 = rng.uniform(1.6, 2.2, 2)
        angle = np.deg2rad(rng.uniform(90, 125))
        local = np.array([[0.0, 0.0, 0.0],
                          [r1, 0.0, 0.0],
                          [r2 * np.cos(angle), r2 * np.sin(angle), 0.0]])
        pos = Rotation.random(random_state=rng).apply(local) + rng.uniform(-2, 2, 3)
        out.append(Structure(["O", "H", "H"], pos, comment="water"))
    return Dataset(out)
