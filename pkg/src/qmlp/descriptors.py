"""Atom-centered radial (G2) and angular (G3) symmetry functions.

Values and analytic Cartesian gradients are computed with a brute-force
neighbor scan; the systems handled here have at most a few hundred atoms and
no periodic boundaries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .data import Dataset, Structure

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = 12.0  # Bohr


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Cutoff
# ---------------------------------------------------------------------------

def cutoff(r, r_c: float):
    """tanh^3(1 - r/r_c) inside the cutoff sphere, zero outside."""
    r = np.asarray(r, dtype=float)
    t = np.tanh(1.0 - r / r_c)
    return np.where(r <= r_c, t**3, 0.0)


def cutoff_derivative(r, r_c: float):
    r = np.asarray(r, dtype=float)
    t = np.tanh(1.0 - r / r_c)
    return np.where(r <= r_c, -3.0 * t**2 * (1.0 - t**2) / r_c, 0.0)


# ---------------------------------------------------------------------------
# Function definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialSF:
    center: str
    neighbor: str
    eta: float
    r_s: float
    r_c: float = DEFAULT_CUTOFF

    def __post_init__(self):
        if self.r_c <= 0:
            raise ValueError("r_c must be positive")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        # a shift at exactly r_c arises from the shifted-grid generator
        if not 0 <= self.r_s <= self.r_c:
            raise ValueError("r_s must lie in [0, r_c]")

    def line(self) -> str:
        return f"G2 {self.center} {self.neighbor} {self.eta!r} {self.r_s!r} {self.r_c!r}"


@dataclass(frozen=True)
class AngularSF:
    center: str
    neighbors: tuple  # unordered pair, stored sorted
    eta: float
    lam: int
    zeta: float
    r_c: float = DEFAULT_CUTOFF

    def __post_init__(self):
        object.__setattr__(self, "neighbors", tuple(sorted(self.neighbors)))
        if len(self.neighbors) != 2:
            raise ValueError("angular functions take a pair of neighbor elements")
        if self.lam not in (-1, 1):
            raise ValueError("lambda must be -1 or +1")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.eta <= 0 or self.r_c <= 0:
            raise ValueError("eta and r_c must be positive")

    def line(self) -> str:
        e1, e2 = self.neighbors
        return (f"G3 {self.center} {e1} {e2} {self.eta!r} {self.lam} "
                f"{self.zeta!r} {self.r_c!r}")


SymmetryFunction = Union[RadialSF, AngularSF]


def generate_radial_params(n: int, r_c: float = DEFAULT_CUTOFF) -> list:
    """Two grids of (eta, r_s) pairs.

    The first grid is centered on the atom with widths ``(n**(m/n) / r_c)**2``
    for m = 0..n. The second places shifts at ``r_c / n**(m/n)`` and takes its
    widths from the spacing of consecutive shifts, for m = 0..n-1 (the spacing
    is undefined at m = n).

    Returns a list of ``(eta, r_s)`` tuples.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    centered = [((n ** (m / n)) / r_c) ** 2 for m in range(n + 1)]
    shifts = [r_c / n ** (m / n) for m in range(n + 1)]
    shifted = []
    for m in range(n):
        width = shifts[n - m] - shifts[n - m - 1]
        shifted.append((1.0 / width**2, shifts[m]))
    return [(eta, 0.0) for eta in centered] + shifted


def generate_angular_params(n_eta: int, zetas: Sequence[float] = (1, 4, 16),
                            r_c: float = DEFAULT_CUTOFF) -> list:
    """Cartesian product of widths, lambda in {-1, 1} and the given zetas.

    Returns ``(eta, lam, zeta)`` tuples.
    """
    zetas = list(zetas)
    if not zetas:
        raise ValueError("need at least one zeta")
    if len(set(zetas)) != len(zetas):
        raise ValueError("duplicate zeta values")
    if n_eta < 1:
        raise ValueError("need n_eta >= 1")
    etas = [((n_eta ** (m / n_eta)) / r_c) ** 2 for m in range(n_eta + 1)]
    return [(eta, lam, float(z)) for eta in etas for lam in (-1, 1) for z in zetas]


# ---------------------------------------------------------------------------
# Descriptor sets and scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scaling:
    g_min: float
    g_max: float
    g_mean: float

    @property
    def constant(self) -> bool:
        return not (self.g_max - self.g_min) > 1e-12 * max(1.0, abs(self.g_max))


@dataclass(frozen=True)
class DescriptorSet:
    """Per-element ordered symmetry functions, optionally with scaling stats."""

    functions: dict  # element -> tuple of SymmetryFunction
    scaling: Optional[dict] = None  # element -> tuple of Scaling

    def __post_init__(self):
        object.__setattr__(self, "functions",
                           {e: tuple(fs) for e, fs in self.functions.items()})
        for e, fs in self.functions.items():
            for f in fs:
                if f.center != e:
                    raise ValueError(f"function {f} filed under element {e}")
        if self.scaling is not None:
            object.__setattr__(self, "scaling",
                               {e: tuple(s) for e, s in self.scaling.items()})

    @property
    def elements(self) -> list:
        return sorted(self.functions)

    @property
    def fitted(self) -> bool:
        return self.scaling is not None

    def active(self, element: str) -> np.ndarray:
        """Indices of functions kept in scaled output (non-constant ones)."""
        n = len(self.functions[element])
        if self.scaling is None:
            return np.arange(n)
        return np.array([i for i, s in enumerate(self.scaling[element])
                         if not s.constant], dtype=int)

    def n_inputs(self, element: str, scaled: bool = True) -> int:
        if scaled and self.fitted:
            return len(self.active(element))
        return len(self.functions[element])

    def select(self, element: str, indices) -> "DescriptorSet":
        """Keep only ``indices`` of ``element``'s functions (scaling is dropped)."""
        funcs = dict(self.functions)
        funcs[element] = tuple(self.functions[element][i] for i in indices)
        return DescriptorSet(funcs)


def default_descriptor_set(elements: Sequence[str], n_radial: int = 6,
                           n_angular: int = 2, zetas=(1, 4, 16),
                           r_c: float = DEFAULT_CUTOFF,
                           angular: bool = True) -> DescriptorSet:
    """Candidate pool covering every neighbor element and element pair."""
    elements = sorted(set(elements))
    radial = generate_radial_params(n_radial, r_c)
    ang = generate_angular_params(n_angular, zetas, r_c) if angular else []
    funcs = {}
    for c in elements:
        fs = [RadialSF(c, nb, eta, rs, r_c) for nb in elements for eta, rs in radial]
        for pair in combinations_with_replacement(elements, 2):
            fs += [AngularSF(c, pair, eta, lam, z, r_c) for eta, lam, z in ang]
        funcs[c] = fs
    return DescriptorSet(funcs)


def fit_scaling(dataset: Dataset, descriptor_set: DescriptorSet) -> DescriptorSet:
    """Min/max/mean of every function over all atoms of its element."""
    dataset.require_nonempty("fit_scaling")
    raw = descriptor_set if not descriptor_set.fitted else DescriptorSet(descriptor_set.functions)
    collected = {e: [] for e in raw.elements}
    for s in dataset:
        values = compute_descriptors(s, raw, scaled=False, gradients=False).values
        for e, rows in values.items():
            if e in collected and len(rows):
                collected[e].append(rows)
    scaling = {}
    for e in raw.elements:
        if not collected[e]:
            raise ValueError(f"element {e} does not occur in the dataset")
        g = np.vstack(collected[e])
        stats = tuple(Scaling(float(lo), float(hi), float(mu))
                      for lo, hi, mu in zip(g.min(0), g.max(0), g.mean(0)))
        n_const = sum(st.constant for st in stats)
        if n_const:
            log.info("element %s: dropping %d constant symmetry functions", e, n_const)
        scaling[e] = stats
    return DescriptorSet(raw.functions, scaling)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class DescriptorOutput:
    """Descriptor values and gradients of one structure.

    ``atoms[e]`` lists the atom indices of element ``e`` in structure order;
    ``values[e]`` has shape (n_e, n_functions) and ``gradients[e]`` has shape
    (n_e, n_functions, n_atoms, 3) holding dG_ij / dR_mk (dense; entries for
    atoms outside the cutoff are zero).
    """

    atoms: dict
    values: dict
    gradients: Optional[dict] = None


class _Geometry:
    """Pair distances and unit vectors, shared by all functions."""

    def __init__(self, positions: np.ndarray, r_c_max: float):
        self.pos = positions
        diff = positions[None, :, :] - positions[:, None, :]  # R_j - R_i
        self.dist = np.sqrt(np.sum(diff**2, axis=-1))
        n = len(positions)
        off = ~np.eye(n, dtype=bool)
        if np.any(self.dist[off] == 0.0):
            raise GeometryError("two atoms share the same position")
        with np.errstate(invalid="ignore", divide="ignore"):
            self.unit = np.where(off[..., None], diff / self.dist[..., None], 0.0)
        self.diff = diff
        self.neighbors = [np.flatnonzero(off[i] & (self.dist[i] <= r_c_max))
                          for i in range(n)]


def _radial(i, geo: _Geometry, species, sf: RadialSF, grad):
    nb = geo.neighbors[i]
    nb = nb[(species[nb] == sf.neighbor) & (geo.dist[i, nb] <= sf.r_c)]
    if len(nb) == 0:
        return 0.0
    r = geo.dist[i, nb]
    gauss = np.exp(-sf.eta * (r - sf.r_s) ** 2)
    fc = cutoff(r, sf.r_c)
    value = float(np.sum(gauss * fc))
    if grad is not None:
        dg = gauss * (cutoff_derivative(r, sf.r_c) - 2.0 * sf.eta * (r - sf.r_s) * fc)
        vec = dg[:, None] * geo.unit[i, nb]  # d/dR_j
        grad[nb] += vec
        grad[i] -= vec.sum(0)
    return value


def _angular(i, geo: _Geometry, species, sf: AngularSF, grad):
    nb = geo.neighbors[i]
    nb = nb[geo.dist[i, nb] <= sf.r_c]
    if len(nb) < 2:
        return 0.0
    j, k = np.meshgrid(nb, nb, indexing="ij")
    e1, e2 = sf.neighbors
    sj, sk = species[j], species[k]
    mask = (j != k) & (((sj == e1) & (sk == e2)) | ((sj == e2) & (sk == e1)))
    j, k = j[mask], k[mask]
    if len(j) == 0:
        return 0.0
    rij, rik, rjk = geo.dist[i, j], geo.dist[i, k], geo.dist[j, k]
    uij, uik = geo.unit[i, j], geo.unit[i, k]
    cos = np.clip(np.sum(uij * uik, axis=1), -1.0, 1.0)
    base = 1.0 + sf.lam * cos
    ang = 2.0 ** (1.0 - sf.zeta) * base**sf.zeta
    rad = np.exp(-sf.eta * (rij**2 + rik**2 + rjk**2))
    fij, fik, fjk = cutoff(rij, sf.r_c), cutoff(rik, sf.r_c), cutoff(rjk, sf.r_c)
    fc = fij * fik * fjk
    value = float(np.sum(ang * rad * fc))
    if grad is not None:
        dang = 2.0 ** (1.0 - sf.zeta) * sf.zeta * sf.lam * base ** (sf.zeta - 1.0)
        # derivatives of cos w.r.t. R_j and R_k
        dcos_j = (uik - cos[:, None] * uij) / rij[:, None]
        dcos_k = (uij - cos[:, None] * uik) / rik[:, None]
        dfij = cutoff_derivative(rij, sf.r_c)
        dfik = cutoff_derivative(rik, sf.r_c)
        dfjk = cutoff_derivative(rjk, sf.r_c)
        # scalar radial derivatives of rad*fc w.r.t. each distance
        d_rij = rad * (-2.0 * sf.eta * rij * fc + dfij * fik * fjk)
        d_rik = rad * (-2.0 * sf.eta * rik * fc + fij * dfik * fjk)
        d_rjk = rad * (-2.0 * sf.eta * rjk * fc + fij * fik * dfjk)
        ujk = geo.unit[j, k]
        rf = rad * fc
        gj = (dang * rf)[:, None] * dcos_j + (ang * d_rij)[:, None] * uij \
            - (ang * d_rjk)[:, None] * ujk
        gk = (dang * rf)[:, None] * dcos_k + (ang * d_rik)[:, None] * uik \
            + (ang * d_rjk)[:, None] * ujk
        np.add.at(grad, j, gj)
        np.add.at(grad, k, gk)
        grad[i] -= gj.sum(0) + gk.sum(0)
    return value


def compute_descriptors(structure: Structure, descriptor_set: DescriptorSet,
                        scaled: bool = True, gradients: bool = True) -> DescriptorOutput:
    """Evaluate every function for every atom of ``structure``.

    With ``scaled=True`` (requires a fitted set) the values are centered and
    divided by ``G_max - G_min`` and constant functions are left out.
    """
    if scaled and not descriptor_set.fitted:
        raise ValueError("descriptor set has no scaling statistics; call fit_scaling")
    species = np.array(structure.species)
    unknown = set(structure.species) - set(descriptor_set.functions)
    if unknown:
        raise KeyError(f"unknown element(s) {sorted(unknown)}")
    funcs_all = [f for fs in descriptor_set.functions.values() for f in fs]
    r_max = max((f.r_c for f in funcs_all), default=DEFAULT_CUTOFF)
    geo = _Geometry(structure.positions, r_max)
    n = structure.n_atoms
    atoms, values, grads = {}, {}, {} if gradients else None
    for e in descriptor_set.elements:
        idx = np.flatnonzero(species == e)
        funcs = descriptor_set.functions[e]
        val = np.zeros((len(idx), len(funcs)))
        grd = np.zeros((len(idx), len(funcs), n, 3)) if gradients else None
        for a, i in enumerate(idx):
            for f, sf in enumerate(funcs):
                g = grd[a, f] if gradients else None
                if isinstance(sf, RadialSF):
                    val[a, f] = _radial(i, geo, species, sf, g)
                else:
                    val[a, f] = _angular(i, geo, species, sf, g)
        if scaled:
            keep = descriptor_set.active(e)
            st = [descriptor_set.scaling[e][i] for i in keep]
            mean = np.array([s.g_mean for s in st])
            width = np.array([s.g_max - s.g_min for s in st])
            val = (val[:, keep] - mean) / width
            if gradients:
                grd = grd[:, keep] / width[None, :, None, None]
        atoms[e] = idx
        values[e] = val
        if gradients:
            grads[e] = grd
    return DescriptorOutput(atoms, values, grads)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def write_descriptor_set(descriptor_set: DescriptorSet, path) -> None:
    """One function per line; ``scale`` lines index into the function lines."""
    lines, scales = [], []
    k = 0
    for e in descriptor_set.elements:
        for i, f in enumerate(descriptor_set.functions[e]):
            lines.append(f.line())
            if descriptor_set.fitted:
                s = descriptor_set.scaling[e][i]
                scales.append(f"scale {k} {s.g_min!r} {s.g_max!r} {s.g_mean!r}")
            k += 1
    Path(path).write_text("\n".join(lines + scales) + "\n")


def read_descriptor_set(path) -> DescriptorSet:
    funcs, scales = [], {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        p = line.split()
        try:
            if p[0] == "G2" and len(p) == 6:
                funcs.append(RadialSF(p[1], p[2], float(p[3]), float(p[4]), float(p[5])))
            elif p[0] == "G3" and len(p) == 8:
                funcs.append(AngularSF(p[1], (p[2], p[3]), float(p[4]), int(p[5]),
                                       float(p[6]), float(p[7])))
            elif p[0] == "scale" and len(p) == 5:
                scales[int(p[1])] = Scaling(float(p[2]), float(p[3]), float(p[4]))
            else:
                raise ValueError(f"unrecognized line '{line}'")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    by_elem, scale_by_elem = {}, {}
    for k, f in enumerate(funcs):
        by_elem.setdefault(f.center, []).append(f)
        if scales:
            if k not in scales:
                raise ValueError(f"{path}: missing scale line for function {k}")
            scale_by_elem.setdefault(f.center, []).append(scales[k])
    return DescriptorSet(by_elem, scale_by_elem or None)
