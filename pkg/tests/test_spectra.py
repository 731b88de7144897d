import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subwave.bem import compute_capacitance
from subwave.capmat import CapacitanceMatrix, hermitian_part, midpoint_alpha_grid
from subwave.geometry import ScenarioConfig, build_scenario, discretize
from subwave.qpgreen import GreenParams
from subwave.spectra import (
    DefectCountError,
    FrequencyParams,
    MassMatrix,
    SweepError,
    band_sweep,
    capacitance_sweep,
    classify_defects,
    eig_pencil,
    ipr,
    localization_center,
    mass_matrix,
    max_gap,
    relative_difference,
    spectra_from_capacitance,
    to_frequency,
)

SMALL = dict(half_width=4)
GRID = midpoint_alpha_grid(8)


def _herm(entries, alpha=0.5):
    return CapacitanceMatrix(alpha, np.asarray(entries, dtype=complex), hermitized=True)


@pytest.fixture(scope="module")
def small_sweeps():
    out = {}
    for name in ("uniform", "single_defect"):
        chain = build_scenario(ScenarioConfig(scenario=name, **SMALL))
        out[name] = (chain, capacitance_sweep(discretize(chain, 32), GRID, 200, threads=1))
    return out


def test_mass_matrix_examples():
    assert mass_matrix(build_scenario(ScenarioConfig(half_width=1))).diagonal[0] == pytest.approx(0.3848451000647498, abs=1e-15)
    ssh = mass_matrix(build_scenario(ScenarioConfig(scenario="ssh")))
    assert np.allclose(ssh.diagonal, 0.28274333882308139, rtol=0, atol=1e-15)
    d = mass_matrix(build_scenario(ScenarioConfig(scenario="single_defect", half_width=2))).diagonal
    assert d[2] / d[0] == pytest.approx((0.2 / 0.35) ** 2, rel=1e-14)
    with pytest.raises(ValueError):
        MassMatrix(np.array([1.0, 0.0]))


def test_eig_pencil_small_examples():
    s = eig_pencil(_herm([[2.0]]), MassMatrix(np.array([2.0])))
    assert s.eigenvalues[0] == pytest.approx(1.0, abs=1e-15)
    s = eig_pencil(_herm([[2.0, -1.0], [-1.0, 2.0]]), MassMatrix.identity(2))
    assert np.allclose(s.eigenvalues, [1.0, 3.0], rtol=0, atol=1e-14)


def test_eig_pencil_preconditions():
    with pytest.raises(ValueError, match="hermitized"):
        eig_pencil(CapacitanceMatrix(0.5, np.eye(2, dtype=complex)), MassMatrix.identity(2))
    with pytest.raises(ValueError, match="Hermitian"):
        eig_pencil(_herm([[1, 1j], [0, 1]]), MassMatrix.identity(2))
    with pytest.raises(ValueError, match="dimensions"):
        eig_pencil(_herm(np.eye(3)), MassMatrix.identity(2))


@settings(max_examples=30, deadline=None)
@given(
    st.integers(2, 7).flatmap(
        lambda n: st.tuples(
            st.lists(st.floats(-3, 3), min_size=2 * n * n, max_size=2 * n * n),
            st.lists(st.floats(0.1, 2.0), min_size=n, max_size=n),
        )
    )
)
def test_eig_pencil_contract(data):
    flat, masses = data
    n = len(masses)
    a = np.array(flat[: n * n]).reshape(n, n) + 1j * np.array(flat[n * n :]).reshape(n, n)
    C = hermitian_part(CapacitanceMatrix(0.3, a @ a.conj().T + np.eye(n)))
    M = MassMatrix(np.array(masses))
    s = eig_pencil(C, M)
    assert np.all(np.diff(s.eigenvalues) >= 0)
    gram = s.eigenvectors.conj().T @ (M.diagonal[:, None] * s.eigenvectors)
    assert np.abs(gram - np.eye(n)).max() < 1e-8
    assert s.residuals.max() <= 1e-10


def test_ipr_examples():
    assert ipr(np.eye(5)[2]) == 1.0
    assert ipr(np.ones(29)) == pytest.approx(1 / 29, rel=1e-15)
    with pytest.raises(ValueError):
        ipr(np.zeros(3))
    assert localization_center(np.array([0.1, -0.9, 0.3])) == 1


def test_relative_difference_and_gap():
    assert relative_difference(1, 2) == 0.5
    assert relative_difference(3.7, 3.7) == 0.0
    for bad in [(0, 1), (2, 1), (-1, 1)]:
        with pytest.raises(ValueError):
            relative_difference(*bad)
    assert max_gap([(1.0, 2.0), (3.5, 1.0), (2.0, 2.0)]) == 2.5
    with pytest.raises(DefectCountError):
        max_gap([(1.0, 2.0), (1.0,)])
    with pytest.raises(DefectCountError):
        max_gap([])


def test_to_frequency():
    with pytest.warns(UserWarning, match="contrast"):
        params = FrequencyParams(0.25, 2.0)
    assert to_frequency(4, params) == 2.0
    assert to_frequency(0.0) == 0.0
    assert to_frequency(31.5) == math.sqrt(1e-3 * 31.5)
    with pytest.raises(ValueError):
        to_frequency(-1.0)
    with pytest.raises(ValueError):
        FrequencyParams(0.0, 1.0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        FrequencyParams(0.5, 1.0)
    assert any("contrast" in str(x.message) for x in w)


def test_single_defect_at_zone_edge_has_one_isolated_localized_mode():
    chain = build_scenario(ScenarioConfig(scenario="single_defect"))
    uni = build_scenario(ScenarioConfig())
    p = GreenParams(math.pi, 200)
    s = eig_pencil(hermitian_part(compute_capacitance(discretize(chain, 64), p)), mass_matrix(chain))
    r = eig_pencil(hermitian_part(compute_capacitance(discretize(uni, 64), p)), mass_matrix(uni))
    outside = (s.eigenvalues > r.eigenvalues.max()) | (s.eigenvalues < r.eigenvalues.min())
    assert np.count_nonzero(outside) == 1
    j = int(np.flatnonzero(outside)[0])
    assert s.iprs[j] > 0.2
    assert localization_center(s.eigenvectors[:, j]) == len(chain) // 2


def test_uniform_against_itself_has_no_defects(small_sweeps):
    chain, Cs = small_sweeps["uniform"]
    band = spectra_from_capacitance(Cs, chain)
    rep = classify_defects(band, band)
    assert all(ix == [] for ix in rep.defect_indices)


@pytest.mark.parametrize("threshold", [0.15, 0.2, 0.25, 0.3])
def test_defect_classification_stable_in_threshold(small_sweeps, threshold):
    chain, Cs = small_sweeps["single_defect"]
    band = spectra_from_capacitance(Cs, chain)
    ref = spectra_from_capacitance(*reversed(small_sweeps["uniform"]))
    base = classify_defects(band, ref, ipr_threshold=0.2, expected=1)
    rep = classify_defects(band, ref, ipr_threshold=threshold, expected=1)
    assert rep.defect_indices == base.defect_indices


def test_expected_count_mismatch(small_sweeps):
    chain, Cs = small_sweeps["single_defect"]
    band = spectra_from_capacitance(Cs, chain)
    ref = spectra_from_capacitance(*reversed(small_sweeps["uniform"]))
    with pytest.raises(DefectCountError):
        classify_defects(band, ref, expected=2)
    short = spectra_from_capacitance(Cs[:4], chain)
    with pytest.raises(ValueError, match="grid"):
        classify_defects(short, ref)


def test_truncation_limits(small_sweeps):
    chain, Cs = small_sweeps["single_defect"]
    full = spectra_from_capacitance(Cs, chain).eigenvalues
    n = len(chain)
    assert np.abs(spectra_from_capacitance(Cs, chain, n - 1).eigenvalues - full).max() < 1e-12 * np.abs(full).max()
    errs = [np.abs(spectra_from_capacitance(Cs, chain, w).eigenvalues - full).max() for w in (1, 2, 3)]
    assert errs[0] > errs[1] > errs[2]


def test_band_sweep_shape_and_conjugation():
    chain = build_scenario(ScenarioConfig(**SMALL))
    band = band_sweep(chain, GRID, panels_per_disk=16, threads=1)
    ev = band.eigenvalues
    assert ev.shape == (8, 9)
    assert np.abs(ev - ev[::-1]).max() < 1e-8 * np.abs(ev).max()
    assert band.metadata["panels_per_disk"] == 16 and band.metadata["truncation"] is None


def test_sweep_independent_of_worker_count():
    chain = build_scenario(ScenarioConfig(scenario="single_defect", half_width=2))
    mesh = discretize(chain, 16)
    a = capacitance_sweep(mesh, GRID, 200, threads=1)
    b = capacitance_sweep(mesh, GRID, 200, threads=3)
    assert all(np.array_equal(x.entries, y.entries) and x.alpha == y.alpha for x, y in zip(a, b))


def test_sweep_errors_carry_alpha():
    mesh = discretize(build_scenario(ScenarioConfig(half_width=1)), 16)
    with pytest.raises(ValueError, match="exclude 0"):
        capacitance_sweep(mesh, [0.5, 0.0], 200)
    with pytest.raises(SweepError) as info:
        capacitance_sweep(mesh, [0.5, 1e-10, 4.0], 200, threads=1)
    failed = [a for a, _ in info.value.failures]
    assert failed == [1e-10, 4.0]


@pytest.mark.slow
def test_default_uniform_band_shape(sweeps):
    band = sweeps.band("uniform")
    assert band.eigenvalues.shape == (80, 29)
