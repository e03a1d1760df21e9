import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmlp.data import (HARTREE_TO_EV, NO_FORCES_TAG, Dataset, DegenerateStatisticsError,
                       NoiseInjection, NormParams, Structure, StructureFileError,
                       apply_normalization, compute_normalization, convert_units, inject_noise,
                       parse_structures, rmse_energy, rmse_forces, subsample, write_structures)

MEV = 1e-3 / HARTREE_TO_EV

BLOCK = """begin
comment two atoms
atom 0.0 0.0 0.0 H 0.0 0.0 0.1 0.2 0.3
atom 0.0 0.0 1.4 H 0.0 0.0 -0.1 -0.2 -0.3
energy -1.1
charge 0.0
end
"""


def _single(energy, n=1, forces=None):
    return Structure(["H"] * n, np.arange(3 * n, dtype=float).reshape(n, 3), energy, forces)


# -- parsing -----------------------------------------------------------------

def test_parse_one_block(tmp_path):
    p = tmp_path / "a.data"
    p.write_text("# header comment\n" + BLOCK)
    ds = parse_structures(p)
    assert len(ds) == 1
    s = ds[0]
    assert s.species == ("H", "H") and s.energy == -1.1
    assert s.comment == "two atoms"
    np.testing.assert_array_equal(s.forces[1], [-0.1, -0.2, -0.3])


def test_parse_empty_file_gives_empty_dataset(tmp_path):
    p = tmp_path / "e.data"
    p.write_text("")
    ds = parse_structures(p)
    assert len(ds) == 0
    with pytest.raises(ValueError):
        compute_normalization(ds)


def test_parse_short_atom_line_names_line(tmp_path):
    p = tmp_path / "bad.data"
    p.write_text(BLOCK.replace("atom 0.0 0.0 1.4 H 0.0 0.0 -0.1 -0.2 -0.3",
                               "atom 0.0 0.0 1.4 H 0.0 0.0 -0.1"))
    with pytest.raises(StructureFileError) as err:
        parse_structures(p)
    assert err.value.lineno == 4
    assert ":4" in str(err.value) or "line 4" in str(err.value)


@pytest.mark.parametrize("text", ["atom 0 0 0 H 0 0 0 0 0\n", "begin\nbegin\n", "begin\nenergy 1\n",
                                  "begin\nlattice 1 0 0\nend\n", "begin\nfoo\nend\n"])
def test_parse_rejects_malformed(tmp_path, text):
    p = tmp_path / "bad.data"
    p.write_text(text)
    with pytest.raises(StructureFileError):
        parse_structures(p)


def test_round_trip_water(tmp_path, water_set):
    p = tmp_path / "w.data"
    write_structures(water_set, p)
    assert parse_structures(p) == water_set


def test_round_trip_without_forces(tmp_path):
    ds = Dataset([_single(-0.5, 2), _single(-0.7, 2)])
    p = tmp_path / "nf.data"
    write_structures(ds, p)
    text = p.read_text()
    assert NO_FORCES_TAG in text
    assert "0.0 0.0 0.0\n" in text  # zero force columns
    back = parse_structures(p)
    assert back == ds and not back.has_forces


def test_write_empty_dataset(tmp_path):
    p = tmp_path / "empty.data"
    write_structures(Dataset([]), p)
    assert p.read_text() == ""


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3),
       st.floats(-1e3, 1e3, allow_nan=False))
def test_round_trip_floats_exact(tmp_path_factory, xyz, e):
    p = tmp_path_factory.mktemp("rt") / "x.data"
    ds = Dataset([Structure(["O"], [xyz], e, [xyz])])
    write_structures(ds, p)
    assert parse_structures(p) == ds


def test_structure_invariants():
    with pytest.raises(ValueError):
        Structure(["H", "H"], [[0, 0, 0]])
    with pytest.raises(ValueError):
        Structure(["H"], [[0, 0, np.nan]])
    with pytest.raises(ValueError):
        Structure(["H"], [[0, 0, 0]], forces=[[0, 0, 0], [1, 1, 1]])


def test_unit_conversion_round_trip(water_set):
    back = convert_units(convert_units(water_set, "to_ev"), "from_ev")
    for a, b in zip(back, water_set):
        np.testing.assert_allclose(a.positions, b.positions, rtol=1e-14)
        np.testing.assert_allclose(a.forces, b.forces, rtol=1e-14)
        assert a.energy == pytest.approx(b.energy, rel=1e-14)


# -- normalization -----------------------------------------------------------

def test_normalization_two_points():
    ds = Dataset([_single(-1.0), _single(1.0)])
    p = compute_normalization(ds)
    assert p.mean_energy_per_atom == pytest.approx(0.0)
    assert p.c_energy == pytest.approx(1.0)
    assert p.c_length == 1.0


def test_normalization_degenerate():
    with pytest.raises(DegenerateStatisticsError):
        compute_normalization(Dataset([_single(-2.0, 2), _single(-1.0, 1)]))
    with pytest.raises(DegenerateStatisticsError):
        compute_normalization(Dataset([_single(-2.0)]))


def test_normalization_water_like_moments():
    # per-atom mean -694.47 eV, sigma_E 0.11 eV/atom, sigma_F 1.225 eV/A
    rng = np.random.default_rng(3)
    n = 4000
    e_atom = rng.normal(size=n)
    e_atom = (e_atom - e_atom.mean()) / e_atom.std()
    f = rng.normal(size=(n, 3, 3))
    f = (f - f.mean()) / f.std()
    ev, ang = 1 / HARTREE_TO_EV, 1 / 0.529177210903
    mu, se, sf = -694.47 * ev, 0.11 * ev, 1.225 * ev / ang
    ds = Dataset([Structure(["O", "H", "H"], rng.normal(size=(3, 3)),
                            3 * (mu + se * e_atom[i]), sf * f[i]) for i in range(n)])
    p = compute_normalization(ds)
    assert p.mean_energy_per_atom == pytest.approx(mu, rel=1e-12)
    assert p.sigma_energy == pytest.approx(se, rel=1e-9)
    assert p.c_length == pytest.approx(sf / se, rel=1e-9)


finite = st.floats(-10, 10, allow_nan=False)


@st.composite
def labeled_sets(draw):
    n = draw(st.integers(2, 6))
    out = []
    for _ in range(n):
        k = draw(st.integers(1, 3))
        pos = np.array(draw(st.lists(finite, min_size=3 * k, max_size=3 * k))).reshape(k, 3)
        frc = np.array(draw(st.lists(finite, min_size=3 * k, max_size=3 * k))).reshape(k, 3)
        out.append(Structure(["H"] * k, pos, draw(st.floats(-50, 50)), frc))
    return Dataset(out)


@given(labeled_sets())
def test_forward_inverse_identity(ds):
    e = ds.energies() / ds.atom_counts()
    if e.std() < 1e-6:
        return
    p = compute_normalization(ds)
    back = apply_normalization(apply_normalization(ds, p, "forward"), p, "inverse")
    for a, b in zip(back, ds):
        assert a.energy == pytest.approx(b.energy, rel=1e-12, abs=1e-12)
        np.testing.assert_allclose(a.positions, b.positions, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(a.forces, b.forces, rtol=1e-12, atol=1e-12)


@given(labeled_sets())
def test_forward_moments(ds):
    e = ds.energies() / ds.atom_counts()
    if e.std() < 1e-6:
        return
    p = compute_normalization(ds)
    t = apply_normalization(ds, p, "forward")
    et = t.energies() / t.atom_counts()
    assert abs(et.mean()) < 1e-10
    assert abs(et.std() - 1) < 1e-10
    f = np.concatenate([s.forces.ravel() for s in t])
    if f.std() > 0:
        assert abs(f.std() - 1) < 1e-10


def test_no_forces_keeps_positions():
    ds = Dataset([_single(-1.0, 2), _single(0.5, 2)])
    p = compute_normalization(ds)
    assert p.c_length == 1.0
    t = apply_normalization(ds, p, "forward")
    np.testing.assert_array_equal(t[0].positions, ds[0].positions)
    assert t.energies().std() > 0


def test_normparams_validation():
    with pytest.raises(ValueError):
        NormParams(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        NormParams(0.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        apply_normalization(Dataset([_single(1.0)]), NormParams.identity(), "sideways")


# -- noise -------------------------------------------------------------------

def test_zero_noise_is_identity(water_set):
    assert inject_noise(water_set, NoiseInjection(0.0, 0.0, 5)) is water_set


def test_energy_noise_statistics():
    ds = Dataset([_single(0.0) for _ in range(10_000)])
    out = inject_noise(ds, NoiseInjection(10 * MEV, 0.0, seed=11))
    d = out.energies() - ds.energies()
    assert abs(d.std() / (10 * MEV) - 1) < 0.03


def test_energy_noise_scales_with_atoms():
    ds = Dataset([_single(0.0, 4) for _ in range(5000)])
    d = inject_noise(ds, NoiseInjection(1.0, 0.0, seed=2)).energies()
    assert abs(d.std() / 4 - 1) < 0.05


def test_noise_deterministic(water_set):
    spec = NoiseInjection(1e-3, 1e-2, seed=9)
    a, b = inject_noise(water_set, spec), inject_noise(water_set, spec)
    assert a == b
    assert inject_noise(water_set, NoiseInjection(1e-3, 1e-2, seed=10)) != a


def test_noise_errors():
    with pytest.raises(ValueError):
        NoiseInjection(-1.0, 0.0)
    with pytest.raises(ValueError):
        inject_noise(Dataset([_single(None)]), NoiseInjection(1.0, 0.0))
    with pytest.raises(ValueError):
        inject_noise(Dataset([_single(1.0)]), NoiseInjection(0.0, 1.0))


# -- metrics -----------------------------------------------------------------

def test_rmse_energy_examples():
    ref = Dataset([_single(0.0), _single(0.0)])
    assert rmse_energy(ref, ref) == 0.0
    sym = Dataset([_single(0.3), _single(-0.3)])
    assert rmse_energy(sym, ref) == pytest.approx(0.3)
    pred = Dataset([_single(3 * MEV, 2), _single(4 * MEV, 3)])
    ref2 = Dataset([_single(0.0, 2), _single(0.0, 3)])
    # per-atom errors 1.5 and 4/3 meV
    expected = np.sqrt((1.5**2 + (4 / 3) ** 2) / 2) * MEV
    assert rmse_energy(pred, ref2) == pytest.approx(expected)
    pred3 = Dataset([_single(3 * MEV), _single(4 * MEV)])
    assert rmse_energy(pred3, ref) / MEV == pytest.approx(np.sqrt(12.5))


def test_rmse_forces_example():
    ref = Dataset([_single(0.0, 1, np.zeros((1, 3)))])
    pred = Dataset([_single(0.0, 1, np.array([[1.0, 2.0, 2.0]]))])
    assert rmse_forces(pred, ref) == pytest.approx(np.sqrt(3))
    assert rmse_forces(ref, ref) == 0.0


def test_rmse_errors():
    a = Dataset([_single(0.0)])
    with pytest.raises(ValueError):
        rmse_energy(a, Dataset([_single(0.0), _single(1.0)]))
    with pytest.raises(ValueError):
        rmse_forces(a, a)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=8),
       st.randoms())
def test_rmse_permutation_invariant(pairs, rnd):
    pred = [_single(p, 1, np.full((1, 3), p)) for p, _ in pairs]
    ref = [_single(r, 1, np.full((1, 3), r)) for _, r in pairs]
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    e1 = rmse_energy(Dataset(pred), Dataset(ref))
    e2 = rmse_energy(Dataset([pred[i] for i in order]), Dataset([ref[i] for i in order]))
    f1 = rmse_forces(Dataset(pred), Dataset(ref))
    f2 = rmse_forces(Dataset([pred[i] for i in order]), Dataset([ref[i] for i in order]))
    assert e1 == pytest.approx(e2) and f1 == pytest.approx(f2)
    assert e1 >= 0 and (e1 == 0) == all(p == r for p, r in pairs)


def test_subsample():
    ds = Dataset([_single(float(i)) for i in range(3)])
    assert subsample(ds, range(3)) == ds
    assert len(subsample(ds, [])) == 0
    assert [s.energy for s in subsample(ds, [2, 0])] == [2.0, 0.0]
    with pytest.raises(IndexError):
        subsample(ds, [3])
    with pytest.raises(ValueError):
        subsample(ds, [1, 1])
