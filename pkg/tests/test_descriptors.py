import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from qmlp.data import Dataset, Structure
from qmlp.descriptors import (AngularSF, DescriptorSet, GeometryError, RadialSF, compute_descriptors,
                              cutoff, cutoff_derivative, default_descriptor_set, fit_scaling,
                              generate_angular_params, generate_radial_params,
                              read_descriptor_set, write_descriptor_set)

from conftest import random_water


def _one(structure, sf, center=0):
    ds = DescriptorSet({e: (sf,) if e == sf.center else () for e in structure.species})
    out = compute_descriptors(structure, ds, scaled=False, gradients=False)
    atoms = list(out.atoms[sf.center])
    return out.values[sf.center][atoms.index(center), 0]


def test_cutoff_values():
    assert cutoff(5.0, 5.0) == 0.0
    assert cutoff(0.0, 5.0) == pytest.approx(np.tanh(1.0) ** 3)
    # the quoted reference value is rounded; tanh(1)^3 = 0.4417442
    assert cutoff(0.0, 5.0) == pytest.approx(0.441752, abs=1e-5)
    assert cutoff(5.5, 5.0) == 0.0 and cutoff_derivative(5.5, 5.0) == 0.0


def test_cutoff_smooth_at_boundary():
    rc = 7.0
    r = rc * (1 - 1e-8)
    assert abs(cutoff(r, rc)) < 1e-20
    assert abs(cutoff_derivative(r, rc)) < 1e-14


@given(st.floats(0.01, 11.9))
def test_cutoff_derivative_fd(r):
    h = 1e-6
    fd = (cutoff(r + h, 12.0) - cutoff(r - h, 12.0)) / (2 * h)
    assert cutoff_derivative(r, 12.0) == pytest.approx(fd, abs=1e-8)


# -- G2 ----------------------------------------------------------------------

def test_g2_peak_and_additivity():
    sf = RadialSF("O", "H", eta=2.0, r_s=1.8, r_c=6.0)
    one = Structure(["O", "H"], [[0, 0, 0], [1.8, 0, 0]])
    assert _one(one, sf) == pytest.approx(float(cutoff(1.8, 6.0)))
    two = Structure(["O", "H", "H"], [[0, 0, 0], [1.8, 0, 0], [0, -1.8, 0]])
    assert _one(two, sf) == pytest.approx(2 * float(cutoff(1.8, 6.0)))


def test_g2_neighbor_filter_and_cutoff():
    sf = RadialSF("O", "H", eta=1.0, r_s=0.0, r_c=3.0)
    far = Structure(["O", "H"], [[0, 0, 0], [3.5, 0, 0]])
    assert _one(far, sf) == 0.0
    other = Structure(["O", "C"], [[0, 0, 0], [1.0, 0, 0]])
    assert _one(other, RadialSF("O", "H", 1.0, 0.0, 3.0)) == 0.0


# -- G3 ----------------------------------------------------------------------

def _linear(d=1.5):
    return Structure(["O", "H", "H"], [[0, 0, 0], [d, 0, 0], [-d, 0, 0]])


@pytest.mark.parametrize("zeta", [1.0, 4.0, 16.0])
def test_g3_linear_triplet(zeta):
    s = _linear()
    plus = AngularSF("O", ("H", "H"), 0.1, 1, zeta, 6.0)
    assert _one(s, plus) == pytest.approx(0.0, abs=1e-14)
    minus = AngularSF("O", ("H", "H"), 0.1, -1, zeta, 6.0)
    # prefactor 2^(1-zeta) (1 + 1)^zeta = 2 for each ordered pair (j, k)
    d = 1.5
    radial = np.exp(-0.1 * (2 * d**2 + 4 * d**2)) * cutoff(d, 6.0) ** 2 * cutoff(2 * d, 6.0)
    assert _one(s, minus) == pytest.approx(2 * 2 * radial, rel=1e-12)


def test_g3_outside_cutoff():
    s = Structure(["O", "H", "H"], [[0, 0, 0], [7, 0, 0], [0, 7, 0]])
    assert _one(s, AngularSF("O", ("H", "H"), 0.1, 1, 1.0, 6.0)) == 0.0


def test_g3_coincident_atoms_rejected():
    s = Structure(["O", "H", "H"], [[0, 0, 0], [0, 0, 0], [1, 0, 0]])
    with pytest.raises(GeometryError):
        _one(s, AngularSF("O", ("H", "H"), 0.1, 1, 1.0, 6.0))


def test_g3_additivity_over_neighbors():
    rng = np.random.default_rng(0)
    pos = rng.normal(0, 1.2, (4, 3))
    full = Structure(["O", "H", "H", "C"], pos)
    sf_hh = AngularSF("O", ("H", "H"), 0.2, -1, 4.0, 8.0)
    sf_hc = AngularSF("O", ("C", "H"), 0.2, -1, 4.0, 8.0)
    sub_hh = Structure(["O", "H", "H"], pos[:3])
    assert _one(full, sf_hh) == pytest.approx(_one(sub_hh, sf_hh), rel=1e-12)
    a = Structure(["O", "H", "C"], pos[[0, 1, 3]])
    b = Structure(["O", "H", "C"], pos[[0, 2, 3]])
    assert _one(full, sf_hc) == pytest.approx(_one(a, sf_hc) + _one(b, sf_hc), rel=1e-12)


# -- parameter generation ----------------------------------------------------

def test_radial_params():
    n, rc = 5, 10.0
    params = generate_radial_params(n, rc)
    centered = [p for p in params[: n + 1]]
    assert all(rs == 0 for _, rs in centered)
    assert centered[0][0] == pytest.approx(1 / rc**2)
    assert centered[-1][0] == pytest.approx(n**2 / rc**2)
    shifted = params[n + 1:]
    assert len(shifted) == n
    assert shifted[0][1] == pytest.approx(rc)
    assert all(eta > 0 for eta, _ in shifted)
    with pytest.raises(ValueError):
        generate_radial_params(1)


def test_angular_params_counting():
    assert len(generate_angular_params(1, (1,))) == 4
    assert len(generate_angular_params(2, (1, 4, 16))) == 18
    with pytest.raises(ValueError):
        generate_angular_params(2, (1, 1))
    with pytest.raises(ValueError):
        generate_angular_params(2, ())


def test_sf_validation():
    with pytest.raises(ValueError):
        RadialSF("H", "H", eta=-1, r_s=0)
    with pytest.raises(ValueError):
        RadialSF("H", "H", eta=1, r_s=13.0, r_c=12.0)
    with pytest.raises(ValueError):
        AngularSF("H", ("H", "H"), 1.0, 0, 1.0)


# -- sets, scaling, files ----------------------------------------------------

def test_scaling_range_and_constant_dropped(water_set):
    pool = default_descriptor_set(["H", "O"], n_radial=3, n_angular=1, zetas=(1, 4))
    ds = fit_scaling(water_set, pool)
    for s in water_set:
        out = compute_descriptors(s, ds)
        for v in out.values.values():
            assert np.all(v >= -1 - 1e-12) and np.all(v <= 1 + 1e-12)
    # O has no O neighbours: every O-O function is constant (zero) and dropped
    n_oo = sum(1 for f in pool.functions["O"] if isinstance(f, RadialSF) and f.neighbor == "O")
    assert ds.n_inputs("O") <= len(pool.functions["O"]) - n_oo


def test_scaling_single_structure(water_set):
    pool = default_descriptor_set(["H", "O"], n_radial=2, angular=False)
    ds = fit_scaling(Dataset([water_set[0]]), pool)
    raw = compute_descriptors(water_set[0], pool, scaled=False, gradients=False)
    np.testing.assert_allclose([s.g_min for s in ds.scaling["H"]], raw.values["H"].min(0))


def test_scaling_errors(water_set):
    pool = default_descriptor_set(["H", "O", "C"], n_radial=2, angular=False)
    with pytest.raises(ValueError, match="C"):
        fit_scaling(water_set, pool)
    with pytest.raises(ValueError):
        compute_descriptors(water_set[0], default_descriptor_set(["H", "O"]), scaled=True)
    with pytest.raises(KeyError):
        compute_descriptors(Structure(["N"], [[0, 0, 0]]), default_descriptor_set(["H"]),
                            scaled=False)


def test_descriptor_file_round_trip(tmp_path, water_set):
    ds = fit_scaling(water_set, default_descriptor_set(["H", "O"], n_radial=3, n_angular=1))
    p = tmp_path / "sf.txt"
    write_descriptor_set(ds, p)
    back = read_descriptor_set(p)
    assert back.functions == ds.functions and back.scaling == ds.scaling
    text = p.read_text()
    assert text.startswith("G2 ") and "\nG3 " in text and "\nscale " in text


# -- invariance and gradients ------------------------------------------------

@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(1)
    data = Dataset([random_water(rng) for _ in range(8)])
    return fit_scaling(data, default_descriptor_set(["H", "O"], n_radial=4, n_angular=1))


@given(st.integers(0, 2**31 - 1))
def test_rigid_motion_and_permutation_invariance(fitted, seed):
    rng = np.random.default_rng(seed)
    s = random_water(rng)
    rot = Rotation.random(random_state=rng).as_matrix()
    moved = Structure(s.species, s.positions @ rot.T + rng.normal(0, 5, 3))
    swapped = Structure(["O", "H", "H"], s.positions[[0, 2, 1]])
    a = compute_descriptors(s, fitted, gradients=False).values
    b = compute_descriptors(moved, fitted, gradients=False).values
    c = compute_descriptors(swapped, fitted, gradients=False).values
    for e in a:
        np.testing.assert_allclose(a[e], b[e], atol=1e-10)
        np.testing.assert_allclose(a[e], c[e][::-1] if e == "H" else c[e], atol=1e-10)


def test_gradients_match_finite_differences(fitted):
    rng = np.random.default_rng(5)
    h = 1e-5
    worst = 0.0
    for _ in range(5):
        s = random_water(rng)
        out = compute_descriptors(s, fitted)
        for m in range(3):
            for k in range(3):
                p, q = s.positions.copy(), s.positions.copy()
                p[m, k] += h
                q[m, k] -= h
                vp = compute_descriptors(Structure(s.species, p), fitted, gradients=False).values
                vq = compute_descriptors(Structure(s.species, q), fitted, gradients=False).values
                for e in out.values:
                    fd = (vp[e] - vq[e]) / (2 * h)
                    an = out.gradients[e][:, :, m, k]
                    scale = np.maximum(np.abs(fd), 1e-3)
                    worst = max(worst, float(np.max(np.abs(an - fd) / scale)))
    assert worst < 1e-6


def test_gradient_zero_for_far_atoms():
    sf = RadialSF("H", "H", 1.0, 0.0, 3.0)
    ds = DescriptorSet({"H": (sf,)})
    s = Structure(["H", "H", "H"], [[0, 0, 0], [1, 0, 0], [10, 0, 0]])
    g = compute_descriptors(s, ds, scaled=False).gradients["H"]
    assert np.all(g[0, 0, 2] == 0) and np.all(g[2, 0] == 0)
