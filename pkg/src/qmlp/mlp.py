"""High-dimensional neural-network potential.

Each element has its own feedforward network mapping scaled symmetry
functions to an atomic energy (in normalized units); the structure energy is
the atomic sum. Forces follow from the chain rule through the descriptor
gradients. Training minimizes

    mean_s ((E*_pred - E*_ref) / N_s)^2 + beta * mean_s mean_comp (F*_pred - F*_ref)^2

in normalized units with Adam. Parameter gradients of the force term are
obtained by differentiating the network's directional derivative along the
descriptor-space force adjoint (a forward tangent pass followed by a reverse
pass through primal and tangent).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset, NormParams, Structure, rmse_energy, rmse_forces
from .descriptors import DescriptorSet, compute_descriptors, read_descriptor_set, \
    write_descriptor_set
from .rng import make_rng

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def _tanh(z):
    t = np.tanh(z)
    d1 = 1.0 - t * t
    return t, d1, -2.0 * t * d1


def _softplus(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return np.logaddexp(0.0, z), s, s * (1.0 - s)


ACTIVATIONS = {"tanh": _tanh, "softplus": _softplus}


@dataclass(frozen=True)
class MlpArchitecture:
    hidden: tuple = (25, 25)
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("need at least one non-empty hidden layer")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpModel:
    """Networks per element plus the descriptor set and label normalization.

    ``params[e]`` is a list of ``(W, b)`` with ``W`` of shape (n_in, n_out);
    the last pair is the linear output layer.
    """

    architecture: MlpArchitecture
    params: dict
    descriptors: DescriptorSet
    norm: NormParams

    @property
    def elements(self):
        return sorted(self.params)

    def copy(self) -> "MlpModel":
        return replace(self, params={e: [(w.copy(), b.copy()) for w, b in ps]
                                     for e, ps in self.params.items()})

    def flat_parameters(self) -> np.ndarray:
        parts = []
        for e in self.elements:
            for w, b in self.params[e]:
                parts += [w.ravel(), b.ravel()]
        return np.concatenate(parts)

    def set_flat_parameters(self, flat: np.ndarray) -> "MlpModel":
        flat = np.asarray(flat, dtype=float)
        new, k = {}, 0
        for e in self.elements:
            layers = []
            for w, b in self.params[e]:
                nw = flat[k:k + w.size].reshape(w.shape)
                k += w.size
                nb = flat[k:k + b.size].reshape(b.shape)
                k += b.size
                layers.append((nw.copy(), nb.copy()))
            new[e] = layers
        if k != flat.size:
            raise ValueError(f"expected {k} parameters, got {flat.size}")
        return replace(self, params=new)


def init_model(architecture: MlpArchitecture, descriptors: DescriptorSet,
               norm: NormParams, seed: int = 0,
               input_widths: Optional[dict] = None) -> MlpModel:
    """Random weights with N(0, 1/fan_in) entries, zero biases."""
    if not descriptors.fitted:
        raise ValueError("descriptor set must be fitted (fit_scaling) first")
    params = {}
    for e in descriptors.elements:
        n_in = descriptors.n_inputs(e)
        if input_widths is not None and input_widths.get(e, n_in) != n_in:
            raise ValueError(f"element {e}: input width {input_widths[e]} "
                             f"does not match {n_in} descriptors")
        if n_in == 0:
            raise ValueError(f"element {e} has no non-constant descriptors")
        rng = make_rng(seed, "init", e)
        sizes = [n_in, *architecture.hidden, 1]
        params[e] = [(rng.normal(0.0, 1.0 / np.sqrt(a), size=(a, b)), np.zeros(b))
                     for a, b in zip(sizes[:-1], sizes[1:])]
    return MlpModel(architecture, params, descriptors, norm)


# ---------------------------------------------------------------------------
# Prepared descriptor batches
# ---------------------------------------------------------------------------

@dataclass
class _Group:
    """Structures sharing one species sequence, with stacked descriptors."""

    members: np.ndarray      # indices into the dataset
    n_atoms: int
    values: dict             # e -> (S, n_e, n_in)
    grads: dict              # e -> (S, n_e, n_in, N, 3)
    energy_ref: Optional[np.ndarray] = None  # normalized, (S,)
    force_ref: Optional[np.ndarray] = None   # normalized, (S, N, 3)


def prepare(model: MlpModel, dataset: Dataset, gradients: bool = True) -> list:
    dataset.require_nonempty("prepare")
    keys = {}
    for i, s in enumerate(dataset):
        keys.setdefault(s.species, []).append(i)
    groups = []
    mu, ce, cl = model.norm.mean_energy_per_atom, model.norm.c_energy, model.norm.c_length
    for species, members in keys.items():
        outs = [compute_descriptors(dataset[i], model.descriptors, scaled=True,
                                    gradients=gradients) for i in members]
        vals = {e: np.stack([o.values[e] for o in outs]) for e in outs[0].values}
        grads = ({e: np.stack([o.gradients[e] for o in outs]) for e in outs[0].values}
                 if gradients else {})
        n = len(species)
        g = _Group(np.array(members), n, vals, grads)
        sub = [dataset[i] for i in members]
        if all(s.energy is not None for s in sub):
            g.energy_ref = np.array([(s.energy - n * mu) * ce for s in sub])
        if all(s.forces is not None for s in sub):
            g.force_ref = np.stack([s.forces for s in sub]) * (ce / cl)
        groups.append(g)
    return groups


# ---------------------------------------------------------------------------
# Network passes
# ---------------------------------------------------------------------------

def _forward(layers, act, x):
    """Returns output (A,) and cached (input, pre-activation, f, f', f'') per layer."""
    cache = []
    h = x
    for w, b in layers[:-1]:
        z = h @ w + b
        f, d1, d2 = act(z)
        cache.append((h, z, f, d1, d2))
        h = f
    w, b = layers[-1]
    return (h @ w + b)[:, 0], cache, h


def _input_gradient(layers, cache):
    """dE_atom/dG for every atom, shape (A, n_in)."""
    w_out = layers[-1][0]
    g = np.broadcast_to(w_out[:, 0], (cache[-1][0].shape[0], w_out.shape[0]))
    for (w, _), (_, _, _, d1, _) in zip(reversed(layers[:-1]), reversed(cache)):
        g = (g * d1) @ w.T
    return g


def _backward(layers, cache, h_last, e_adj, tangent=None):
    """Parameter gradients of  sum_a e_adj[a]*E_a + sum_a dE_a[tangent_a].

    ``tangent`` (A, n_in) is the descriptor-space direction whose directional
    derivative enters the objective with unit weight; ``None`` skips it.
    """
    grads = [None] * len(layers)
    w_out, _ = layers[-1]
    e_adj = e_adj[:, None]
    if tangent is not None:
        # forward tangent pass
        hdots = [tangent]
        zdots = []
        hd = tangent
        for (w, _), (_, _, _, d1, _) in zip(layers[:-1], cache):
            zd = hd @ w
            hd = d1 * zd
            zdots.append(zd)
            hdots.append(hd)
        gw = h_last.T @ e_adj + hdots[-1].T @ np.ones_like(e_adj)
        adj_hd = np.ones_like(e_adj) @ w_out.T
    else:
        gw = h_last.T @ e_adj
        adj_hd = None
    grads[-1] = (gw, e_adj.sum(0))
    adj_h = e_adj @ w_out.T
    for l in range(len(layers) - 2, -1, -1):
        w, _ = layers[l]
        h_in, z, f, d1, d2 = cache[l]
        adj_z = adj_h * d1
        if adj_hd is not None:
            adj_zd = adj_hd * d1
            adj_z = adj_z + adj_hd * zdots[l] * d2
            gw = h_in.T @ adj_z + hdots[l].T @ adj_zd
            adj_hd = adj_zd @ w.T
        else:
            gw = h_in.T @ adj_z
        grads[l] = (gw, adj_z.sum(0))
        adj_h = adj_z @ w.T
    return grads


def _group_forward(model: MlpModel, g: _Group, need_forces: bool):
    """Normalized energies (S,), dE*/dR (S, N, 3) and per-element caches."""
    act = ACTIVATIONS[model.architecture.activation]
    S = len(g.members)
    energy = np.zeros(S)
    dedr = np.zeros((S, g.n_atoms, 3)) if need_forces else None
    caches = {}
    for e, x in g.values.items():
        n_e, n_in = x.shape[1], x.shape[2]
        if n_e == 0:
            continue
        layers = model.params[e]
        out, cache, h_last = _forward(layers, act, x.reshape(S * n_e, n_in))
        energy += out.reshape(S, n_e).sum(1)
        caches[e] = (cache, h_last, out.reshape(S, n_e))
        if need_forces:
            dg = _input_gradient(layers, cache).reshape(S, n_e, n_in)
            dedr += np.einsum("saj,sajmk->smk", dg, g.grads[e])
    return energy, dedr, caches


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def _single_group(model, structure, gradients):
    return prepare(model, Dataset([structure]), gradients=gradients)[0]


def predict_energy(model: MlpModel, structure: Structure):
    """Total energy (Hartree) and per-atom energies in structure order."""
    _check_elements(model, structure)
    g = _single_group(model, structure, gradients=False)
    energy, _, caches = _group_forward(model, g, need_forces=False)
    mu, ce = model.norm.mean_energy_per_atom, model.norm.c_energy
    per_atom = np.zeros(structure.n_atoms)
    species = np.array(structure.species)
    for e, (_, _, out) in caches.items():
        per_atom[species == e] = out[0] / ce + mu
    return float(energy[0] / ce + structure.n_atoms * mu), per_atom


def predict_forces(model: MlpModel, structure: Structure) -> np.ndarray:
    _check_elements(model, structure)
    g = _single_group(model, structure, gradients=True)
    _, dedr, _ = _group_forward(model, g, need_forces=True)
    return -dedr[0] / model.norm.c_energy


def predict(model: MlpModel, dataset: Dataset, forces: bool = True,
            groups: Optional[list] = None) -> Dataset:
    """Dataset copy whose labels are the model's predictions."""
    groups = groups if groups is not None else prepare(model, dataset, gradients=forces)
    mu, ce = model.norm.mean_energy_per_atom, model.norm.c_energy
    energies = np.zeros(len(dataset))
    fs = [None] * len(dataset)
    for g in groups:
        en, dedr, _ = _group_forward(model, g, need_forces=forces)
        energies[g.members] = en / ce + g.n_atoms * mu
        if forces:
            for k, i in enumerate(g.members):
                fs[i] = -dedr[k] / ce
    out = [replace(s, energy=float(energies[i]), forces=fs[i])
           for i, s in enumerate(dataset)]
    return Dataset(out, units=dataset.units)


def _check_elements(model, structure):
    unknown = set(structure.species) - set(model.params)
    if unknown:
        raise KeyError(f"model has no network for element(s) {sorted(unknown)}")


def evaluate(model: MlpModel, dataset: Dataset, groups=None) -> dict:
    """Energy RMSE per atom and, when the labels have forces, force RMSE."""
    dataset.require_nonempty("evaluate")
    with_forces = dataset.has_forces
    pred = predict(model, dataset, forces=with_forces, groups=groups)
    metrics = {"rmse_energy": rmse_energy(pred, dataset)}
    if with_forces:
        metrics["rmse_forces"] = rmse_forces(pred, dataset)
    return metrics


# ---------------------------------------------------------------------------
# Loss and gradients
# ---------------------------------------------------------------------------

def loss_and_gradients(model: MlpModel, batch, beta: float = 0.0):
    """Loss in normalized units and its gradient as a flat array.

    ``batch`` is a Dataset or the list returned by :func:`prepare`.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    groups = prepare(model, batch) if isinstance(batch, Dataset) else batch
    n_struct = sum(len(g.members) for g in groups)
    cl = model.norm.c_length
    loss = 0.0
    grads = {e: [(np.zeros_like(w), np.zeros_like(b)) for w, b in ps]
             for e, ps in model.params.items()}
    for g in groups:
        if g.energy_ref is None:
            raise ValueError("energy labels missing")
        use_f = beta > 0
        if use_f and g.force_ref is None:
            raise ValueError("beta > 0 requires force labels")
        energy, dedr, caches = _group_forward(model, g, need_forces=use_f)
        S, N = len(g.members), g.n_atoms
        de = (energy - g.energy_ref) / N
        loss += np.sum(de**2) / n_struct
        e_adj_s = 2.0 * de / N / n_struct
        if use_f:
            fpred = -dedr / cl
            df = fpred - g.force_ref
            loss += beta * np.sum(df**2) / (3 * N) / n_struct
            f_adj = beta * 2.0 * df / (3 * N) / n_struct  # dL/dF*
        for e, (cache, h_last, _) in caches.items():
            n_e, n_in = g.values[e].shape[1:]
            e_adj = np.repeat(e_adj_s, n_e)
            tangent = None
            if use_f:
                # dL/d(dE/dG) = -(1/c_l) sum_mk dL/dF*_mk dG/dR_mk
                tangent = (-np.einsum("smk,sajmk->saj", f_adj, g.grads[e]) / cl
                           ).reshape(S * n_e, n_in)
            gl = _backward(model.params[e], cache, h_last, e_adj, tangent)
            grads[e] = [(a[0] + b[0], a[1] + b[1]) for a, b in zip(grads[e], gl)]
    flat = np.concatenate([np.concatenate([gw.ravel(), gb.ravel()])
                           for e in model.elements for gw, gb in grads[e]])
    return float(loss), flat


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 0          # 0 = full batch
    learning_rate: float = 1e-3
    lr_decay: float = 1.0        # multiplicative, per epoch
    lr_min: float = 1e-5
    beta: float = 1.0            # force-loss weight; 0 trains on energies only
    validation_fraction: float = 0.0
    patience: int = 50           # epochs without validation improvement
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in [0, 1)")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    train_rmse_energy: list = field(default_factory=list)
    val_rmse_energy: list = field(default_factory=list)
    train_rmse_forces: list = field(default_factory=list)
    val_rmse_forces: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_rmse_energy: float = float("inf")

    def __len__(self):
        return len(self.epochs)


def split_validation(dataset: Dataset, fraction: float, seed: int):
    n_val = int(round(fraction * len(dataset)))
    if n_val == 0:
        return dataset, None
    order = make_rng(seed, "split").permutation(len(dataset))
    val = sorted(order[:n_val])
    train = sorted(order[n_val:])
    return (Dataset([dataset[i] for i in train]),
            Dataset([dataset[i] for i in val]))


class _Adam:
    def __init__(self, n, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps

    def step(self, theta, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad**2
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train(model: MlpModel, train_set: Dataset, config: TrainConfig = TrainConfig(),
          validation: Optional[Dataset] = None):
    """Adam training with best-on-validation model selection and early stopping.

    Returns ``(best_model, history)``. Without a validation set (explicit or
    split off by ``validation_fraction``) the training energy RMSE is used for
    selection.
    """
    train_set.require_nonempty("train")
    if not train_set.has_energies:
        raise ValueError("training structures need energy labels")
    beta = config.beta if train_set.has_forces else 0.0
    if validation is None and config.validation_fraction > 0:
        train_set, validation = split_validation(train_set, config.validation_fraction,
                                                 config.seed)
    history = TrainHistory()
    if config.epochs == 0:
        return model.copy(), history

    tr_groups = prepare(model, train_set, gradients=train_set.has_forces)
    va_groups = prepare(model, validation, gradients=validation.has_forces) \
        if validation is not None else None
    theta = model.flat_parameters()
    opt = _Adam(theta.size, config.learning_rate)
    rng = make_rng(config.seed, "batches")
    n = len(train_set)
    bs = config.batch_size if 0 < config.batch_size < n else n
    best = model.copy()
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            idx = np.sort(order[start:start + bs])
            batch = tr_groups if bs == n else _subset_groups(tr_groups, idx)
            current = model.set_flat_parameters(theta)
            loss, grad = loss_and_gradients(current, batch, beta)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} (loss={loss}, "
                    f"|grad|={np.linalg.norm(grad)}, lr={opt.lr})")
            theta = opt.step(theta, grad)
        opt.lr = max(config.lr_min, opt.lr * config.lr_decay)
        current = model.set_flat_parameters(theta)
        tr = evaluate(current, train_set, groups=tr_groups)
        va = evaluate(current, validation, groups=va_groups) if validation is not None else tr
        history.epochs.append(epoch)
        history.train_rmse_energy.append(tr["rmse_energy"])
        history.val_rmse_energy.append(va["rmse_energy"])
        history.train_rmse_forces.append(tr.get("rmse_forces"))
        history.val_rmse_forces.append(va.get("rmse_forces"))
        if va["rmse_energy"] < history.best_val_rmse_energy:
            history.best_val_rmse_energy = va["rmse_energy"]
            history.best_epoch = epoch
            best = current
            since_best = 0
        else:
            since_best += 1
            if config.patience and since_best >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, history.best_epoch)
                break
    return best, history


def _subset_groups(groups, idx):
    """Restrict prepared groups to dataset positions ``idx``."""
    wanted = set(int(i) for i in idx)
    out = []
    for g in groups:
        sel = np.array([k for k, m in enumerate(g.members) if int(m) in wanted], dtype=int)
        if len(sel) == 0:
            continue
        out.append(_Group(
            g.members[sel], g.n_atoms,
            {e: v[sel] for e, v in g.values.items()},
            {e: v[sel] for e, v in g.grads.items()},
            None if g.energy_ref is None else g.energy_ref[sel],
            None if g.force_ref is None else g.force_ref[sel],
        ))
    return out


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def save_model(model: MlpModel, path, descriptor_path=None) -> None:
    """Text header followed by the flat parameter array, one value per line.

    The descriptor set is written next to the model unless ``descriptor_path``
    points to an existing file.
    """
    path = Path(path)
    if descriptor_path is None:
        descriptor_path = path.with_suffix(".descriptors")
        write_descriptor_set(model.descriptors, descriptor_path)
    descriptor_path = Path(descriptor_path)
    try:
        ref = descriptor_path.relative_to(path.parent)
    except ValueError:
        ref = descriptor_path.resolve()
    flat = model.flat_parameters()
    n = model.norm
    lines = [
        "# qmlp neural-network potential",
        "elements " + " ".join(model.elements),
        "hidden " + " ".join(str(h) for h in model.architecture.hidden),
        f"activation {model.architecture.activation}",
        f"norm {n.mean_energy_per_atom!r} {n.c_energy!r} {n.c_length!r}",
        f"descriptors {ref}",
    ]
    lines += [f"inputs {e} {model.params[e][0][0].shape[0]}" for e in model.elements]
    lines.append(f"parameters {flat.size}")
    lines += [repr(float(x)) for x in flat]
    path.write_text("\n".join(lines) + "\n")


def load_model(path) -> MlpModel:
    path = Path(path)
    header, values = {}, []
    inputs = {}
    lines = path.read_text().splitlines()
    it = iter(lines)
    for line in it:
        if not line.strip() or line.startswith("#"):
            continue
        key, *rest = line.split()
        if key == "inputs":
            inputs[rest[0]] = int(rest[1])
        elif key == "parameters":
            count = int(rest[0])
            values = [float(next(it)) for _ in range(count)]
            break
        else:
            header[key] = rest
    desc = Path(header["descriptors"][0])
    if not desc.is_absolute():
        desc = path.parent / desc
    descriptors = read_descriptor_set(desc)
    arch = MlpArchitecture(tuple(int(h) for h in header["hidden"]), header["activation"][0])
    norm = NormParams(*(float(x) for x in header["norm"]))
    model = init_model(arch, descriptors, norm, seed=0, input_widths=inputs)
    return model.set_flat_parameters(np.array(values))
