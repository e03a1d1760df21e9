"""Structures, datasets, label normalization, label noise and error metrics.

All quantities are stored in atomic units: positions in Bohr, energies in
Hartree and forces in Hartree/Bohr.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .rng import make_rng

HARTREE_TO_EV = 27.211386245988
BOHR_TO_ANGSTROM = 0.529177210903
EV_PER_ANGSTROM_TO_HA_PER_BOHR = BOHR_TO_ANGSTROM / HARTREE_TO_EV

NO_FORCES_TAG = "[no-forces]"


class StructureFileError(ValueError):
    """Malformed structure file."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DegenerateStatisticsError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Structure:
    species: tuple
    positions: np.ndarray
    energy: Optional[float] = None
    forces: Optional[np.ndarray] = None
    comment: str = ""

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(str(s) for s in self.species))
        pos = _frozen(self.positions).reshape(-1, 3)
        object.__setattr__(self, "positions", pos)
        if len(self.species) != len(pos):
            raise ValueError(
                f"{len(self.species)} species but {len(pos)} positions"
            )
        if not np.all(np.isfinite(pos)):
            raise ValueError("non-finite coordinates")
        if self.forces is not None:
            f = _frozen(self.forces).reshape(-1, 3)
            if len(f) != len(pos):
                raise ValueError("forces and positions differ in length")
            object.__setattr__(self, "forces", f)
        if self.energy is not None:
            object.__setattr__(self, "energy", float(self.energy))

    @property
    def n_atoms(self) -> int:
        return len(self.species)

    def with_labels(self, energy=None, forces=None, keep_forces=True) -> "Structure":
        """Copy with new labels; ``None`` keeps the current value."""
        return replace(
            self,
            energy=self.energy if energy is None else energy,
            forces=(self.forces if keep_forces else None) if forces is None else forces,
        )

    def __eq__(self, other):
        if not isinstance(other, Structure):
            return NotImplemented
        if self.species != other.species or self.comment != other.comment:
            return False
        if self.energy != other.energy:
            return False
        if (self.forces is None) != (other.forces is None):
            return False
        if self.forces is not None and not np.array_equal(self.forces, other.forces):
            return False
        return np.array_equal(self.positions, other.positions)


@dataclass(frozen=True)
class Dataset:
    structures: tuple = ()
    units: str = "hartree/bohr"

    def __post_init__(self):
        object.__setattr__(self, "structures", tuple(self.structures))

    def __len__(self):
        return len(self.structures)

    def __iter__(self):
        return iter(self.structures)

    def __getitem__(self, i):
        return self.structures[i]

    @property
    def has_energies(self) -> bool:
        return len(self) > 0 and all(s.energy is not None for s in self)

    @property
    def has_forces(self) -> bool:
        return len(self) > 0 and all(s.forces is not None for s in self)

    def elements(self) -> list:
        return sorted({e for s in self for e in s.species})

    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self], dtype=float)

    def atom_counts(self) -> np.ndarray:
        return np.array([s.n_atoms for s in self], dtype=float)

    def require_nonempty(self, what="operation"):
        if len(self) == 0:
            raise ValueError(f"{what} requires a non-empty dataset")


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def parse_structures(path) -> Dataset:
    """Read an n2p2-style ``begin``/``end`` block file."""
    structures = []
    current = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            fields = line.split()
            if key == "begin":
                if current is not None:
                    raise StructureFileError("nested 'begin'", lineno)
                current = {"species": [], "pos": [], "forces": [], "energy": None,
                           "comment": "", "start": lineno}
                continue
            if current is None:
                raise StructureFileError(f"'{key}' outside begin/end block", lineno)
            if key == "end":
                structures.append(_finish_block(current))
                current = None
            elif key == "comment":
                current["comment"] = rest.strip()
            elif key == "atom":
                if len(fields) != 10:
                    raise StructureFileError(
                        f"atom line needs 10 fields, got {len(fields)}", lineno)
                try:
                    current["pos"].append([float(x) for x in fields[1:4]])
                    current["forces"].append([float(x) for x in fields[7:10]])
                    float(fields[5]), float(fields[6])
                except ValueError as exc:
                    raise StructureFileError(str(exc), lineno) from None
                current["species"].append(fields[4])
            elif key == "energy":
                if len(fields) != 2:
                    raise StructureFileError("energy line needs 1 value", lineno)
                try:
                    current["energy"] = float(fields[1])
                except ValueError as exc:
                    raise StructureFileError(str(exc), lineno) from None
            elif key in ("charge", "lattice"):
                if key == "lattice":
                    raise StructureFileError("periodic cells are not supported", lineno)
            else:
                raise StructureFileError(f"unknown keyword '{key}'", lineno)
    if current is not None:
        raise StructureFileError("unterminated block", current["start"])
    return Dataset(structures)


def _finish_block(block) -> Structure:
    comment = block["comment"]
    forces = block["forces"]
    if NO_FORCES_TAG in comment:
        comment = comment.replace(NO_FORCES_TAG, "").strip()
        forces = None
    if not block["species"]:
        raise StructureFileError("block without atoms", block["start"])
    try:
        return Structure(block["species"], block["pos"], block["energy"],
                         forces, comment)
    except ValueError as exc:
        raise StructureFileError(str(exc), block["start"]) from None


def _fmt(x: float) -> str:
    return repr(float(x))


def write_structures(dataset: Dataset, path) -> None:
    lines = []
    for s in dataset:
        lines.append("begin")
        comment = s.comment
        if s.forces is None:
            comment = f"{comment} {NO_FORCES_TAG}".strip()
        if comment:
            lines.append(f"comment {comment}")
        forces = s.forces if s.forces is not None else np.zeros_like(s.positions)
        for elem, r, f in zip(s.species, s.positions, forces):
            lines.append("atom {} {} {} {} 0.0 0.0 {} {} {}".format(
                *map(_fmt, r), elem, *map(_fmt, f)))
        if s.energy is not None:
            lines.append(f"energy {_fmt(s.energy)}")
        lines.append("charge 0.0")
        lines.append("end")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def convert_units(dataset: Dataset, direction: str) -> Dataset:
    """Convert between eV/Angstrom and the internal Hartree/Bohr convention.

    ``direction`` is ``"from_ev"`` (eV/Å input to Hartree/Bohr) or ``"to_ev"``.
    """
    if direction == "from_ev":
        lf, ef = 1.0 / BOHR_TO_ANGSTROM, 1.0 / HARTREE_TO_EV
    elif direction == "to_ev":
        lf, ef = BOHR_TO_ANGSTROM, HARTREE_TO_EV
    else:
        raise ValueError(f"unknown direction {direction!r}")
    out = []
    for s in dataset:
        out.append(replace(
            s,
            positions=s.positions * lf,
            energy=None if s.energy is None else s.energy * ef,
            forces=None if s.forces is None else s.forces * ef / lf,
        ))
    return Dataset(out, units="ev/angstrom" if direction == "to_ev" else "hartree/bohr")


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormParams:
    """Label normalization: per-atom energy shift and energy/length scales.

    Uses population standard deviations. ``c_length`` is 1 when the fitting
    dataset had no force labels.
    """

    mean_energy_per_atom: float
    c_energy: float
    c_length: float = 1.0

    def __post_init__(self):
        if not (self.c_energy > 0 and np.isfinite(self.c_energy)):
            raise ValueError("c_energy must be positive and finite")
        if not (self.c_length > 0 and np.isfinite(self.c_length)):
            raise ValueError("c_length must be positive and finite")

    @property
    def sigma_energy(self) -> float:
        return 1.0 / self.c_energy

    @classmethod
    def identity(cls) -> "NormParams":
        return cls(0.0, 1.0, 1.0)


def compute_normalization(dataset: Dataset) -> NormParams:
    dataset.require_nonempty("compute_normalization")
    if not dataset.has_energies:
        raise ValueError("all structures need energies")
    if len(dataset) < 2:
        raise DegenerateStatisticsError("need at least two structures")
    e = dataset.energies() / dataset.atom_counts()
    mean = float(e.mean())
    sigma_e = float(e.std())
    if not sigma_e > 1e-14 * max(1.0, abs(mean)):
        raise DegenerateStatisticsError("per-atom energies are all identical")
    c_length = 1.0
    if dataset.has_forces:
        f = np.concatenate([s.forces.ravel() for s in dataset])
        sigma_f = float(f.std())
        if sigma_f > 0:
            c_length = sigma_f / sigma_e
    return NormParams(mean, 1.0 / sigma_e, c_length)


def apply_normalization(dataset: Dataset, params: NormParams,
                        direction: str = "forward") -> Dataset:
    """Transform labels and positions into (or back out of) normalized units."""
    ce, cl, mu = params.c_energy, params.c_length, params.mean_energy_per_atom
    out = []
    for s in dataset:
        n = s.n_atoms
        if direction == "forward":
            energy = None if s.energy is None else (s.energy - n * mu) * ce
            forces = None if s.forces is None else s.forces * (ce / cl)
            pos = s.positions * cl
        elif direction == "inverse":
            energy = None if s.energy is None else s.energy / ce + n * mu
            forces = None if s.forces is None else s.forces * (cl / ce)
            pos = s.positions / cl
        else:
            raise ValueError(f"unknown direction {direction!r}")
        out.append(replace(s, positions=pos, energy=energy, forces=forces))
    return Dataset(out, units=dataset.units if direction == "inverse" else "normalized")


# ---------------------------------------------------------------------------
# Label noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseInjection:
    """Gaussian label noise. ``delta_e`` is per atom (Hartree/atom)."""

    delta_e: float = 0.0
    delta_f: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.delta_e < 0 or self.delta_f < 0:
            raise ValueError("noise standard deviations must be non-negative")


def inject_noise(dataset: Dataset, spec: NoiseInjection) -> Dataset:
    """Add N(0, delta_e * n_atoms) to energies and N(0, delta_f) to forces."""
    if spec.delta_e < 0 or spec.delta_f < 0:
        raise ValueError("noise standard deviations must be non-negative")
    if spec.delta_e == 0 and spec.delta_f == 0:
        return dataset
    rng = make_rng(spec.seed, "label-noise")
    out = []
    for s in dataset:
        energy, forces = s.energy, s.forces
        if spec.delta_e > 0:
            if energy is None:
                raise ValueError("energy noise requested for unlabeled structure")
            energy = energy + rng.normal(0.0, spec.delta_e * s.n_atoms)
        if spec.delta_f > 0:
            if forces is None:
                raise ValueError("force noise requested for structure without forces")
            forces = forces + rng.normal(0.0, spec.delta_f, size=forces.shape)
        out.append(replace(s, energy=energy, forces=forces))
    return Dataset(out, units=dataset.units)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _check_aligned(pred: Dataset, ref: Dataset):
    if len(pred) != len(ref):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(ref)}")
    for p, r in zip(pred, ref):
        if p.n_atoms != r.n_atoms:
            raise ValueError("atom count mismatch between aligned structures")


def rmse_energy(pred: Dataset, ref: Dataset) -> float:
    """Per-atom energy RMSE (Hartree/atom)."""
    _check_aligned(pred, ref)
    pred.require_nonempty("rmse_energy")
    d = (pred.energies() - ref.energies()) / ref.atom_counts()
    return float(np.sqrt(np.mean(d**2)))


def rmse_forces(pred: Dataset, ref: Dataset) -> float:
    """Force-component RMSE with a per-structure 1/(3 N_atoms) average."""
    _check_aligned(pred, ref)
    pred.require_nonempty("rmse_forces")
    if not (pred.has_forces and ref.has_forces):
        raise ValueError("forces missing")
    per = [np.mean((p.forces - r.forces) ** 2) for p, r in zip(pred, ref)]
    return float(np.sqrt(np.mean(per)))


def subsample(dataset: Dataset, indices: Sequence[int]) -> Dataset:
    idx = [int(i) for i in indices]
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate indices")
    for i in idx:
        if not 0 <= i < len(dataset):
            raise IndexError(f"index {i} out of range for {len(dataset)} structures")
    return Dataset([dataset[i] for i in idx], units=dataset.units)


def concat(datasets: Iterable[Dataset]) -> Dataset:
    return Dataset([s for d in datasets for s in d])
