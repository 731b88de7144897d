import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from subwave.capmat import (
    CapacitanceMatrix,
    DegenerateFitError,
    NonUniformGridError,
    alpha_dft,
    band_truncate,
    fit_decay,
    hermitian_part,
    log_linear_fit,
    midpoint_alpha_grid,
    write_capacitance_csv,
    write_decay_csv,
    write_dft_csv,
)

complex_entries = st.builds(complex, st.floats(-10, 10), st.floats(-10, 10))


def _mat(entries, alpha=0.5):
    return CapacitanceMatrix(alpha=alpha, entries=np.asarray(entries, dtype=complex))


def test_hermitian_part_of_hermitian_input_is_unchanged():
    a = np.array([[2.0, 1 - 1j], [1 + 1j, 3.0]])
    h = hermitian_part(_mat(a))
    assert np.array_equal(h.entries, a) and h.asymmetry == 0.0 and h.hermitized


def test_hermitian_part_closed_form():
    n = np.array([[1, 1j], [0, 1]])
    h = hermitian_part(_mat(n))
    assert h.entries[0, 1] == 0.5j and h.entries[1, 0] == -0.5j
    assert h.entries[0, 0] == 1 and h.entries[1, 1] == 1
    want = np.linalg.norm(n - n.conj().T) / np.linalg.norm(n)
    assert h.asymmetry == pytest.approx(want, rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(arrays(complex, (4, 4), elements=complex_entries))
def test_hermitian_part_exact_and_idempotent(a):
    h = hermitian_part(_mat(a))
    assert np.array_equal(h.entries, h.entries.conj().T)
    assert np.all(np.diag(h.entries).imag == 0)
    assert hermitian_part(h) is h
    again = hermitian_part(_mat(h.entries))
    assert np.array_equal(again.entries, h.entries)


def test_band_truncate_examples():
    ones = _mat(np.ones((3, 3)))
    assert np.count_nonzero(band_truncate(ones, 1).entries) == 7
    rnd = _mat(np.random.default_rng(0).normal(size=(5, 5)))
    assert np.array_equal(band_truncate(rnd, 4).entries, rnd.entries)
    assert np.array_equal(band_truncate(rnd, 9).entries, rnd.entries)
    with pytest.raises(ValueError):
        band_truncate(rnd, -1)


@settings(max_examples=30, deadline=None)
@given(arrays(complex, (6, 6), elements=complex_entries), st.integers(0, 6))
def test_band_truncate_idempotent_and_norm_nonincreasing(a, w):
    t = band_truncate(_mat(a), w)
    assert np.array_equal(band_truncate(t, w).entries, t.entries)
    assert np.linalg.norm(t.entries) <= np.linalg.norm(a) + 1e-12
    kept = np.abs(np.subtract.outer(np.arange(6), np.arange(6))) <= w
    assert np.array_equal(t.entries[kept], a[kept])


def _column_matrix(values, n=13):
    e = np.eye(n, dtype=complex) * 5.0
    c = n // 2
    e[c + 1 : c + 1 + len(values), c] = values
    return _mat(e)


def test_fit_decay_exact_geometric():
    fit = fit_decay(_column_matrix(0.3 ** np.arange(1, 6)), 5)
    assert abs(fit.rho - 0.3) < 1e-12 and fit.log_linear_r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.decaying
    assert [i for i, _ in fit.samples] == [1, 2, 3, 4, 5]


def test_fit_decay_constant_not_decaying():
    fit = fit_decay(_column_matrix(np.full(5, 0.7)), 5)
    assert abs(fit.rho - 1.0) < 1e-12 and fit.log_linear_r2 == 1.0
    assert not fit.decaying


def test_fit_decay_errors():
    with pytest.raises(DegenerateFitError):
        fit_decay(_column_matrix([0.1, 0.01, 0.0, 1e-4, 1e-5]), 5)
    with pytest.raises(ValueError):
        fit_decay(_column_matrix([0.1] * 5), 1)
    with pytest.raises(ValueError):
        fit_decay(_column_matrix([0.1] * 5, n=7), 5)


def test_log_linear_fit_recovers_line():
    slope, icpt, r2 = log_linear_fit([1, 2, 3, 4], np.exp(-0.8 * np.arange(1, 5) + 0.25))
    assert slope == pytest.approx(-0.8, abs=1e-12) and icpt == pytest.approx(0.25, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_midpoint_grid():
    g = midpoint_alpha_grid(80)
    assert len(g) == 80 and np.all(g != 0)
    assert np.allclose(g, -g[::-1], rtol=0, atol=1e-15)
    assert g[0] > -np.pi and g[-1] < np.pi
    with pytest.raises(ValueError):
        midpoint_alpha_grid(1)


def _family(values, alphas):
    return [_mat(np.array([[v]]), a) for v, a in zip(values, alphas)]


def test_alpha_dft_of_constant():
    g = midpoint_alpha_grid(32)
    s = alpha_dft(_family(np.full(32, 2.5), g), 0, 0, 6)
    assert abs(s.entries[6] - 2.5) < 1e-12
    assert np.abs(np.delete(s.entries, 6)).max() < 1e-12
    assert s.imag_residue < 1e-12


def test_alpha_dft_of_cosine():
    g = midpoint_alpha_grid(32)
    s = alpha_dft(_family(2 * np.cos(g) * 0.4, g), 0, 0, 4)
    p = s.p_offsets
    assert np.allclose(s.entries[np.abs(p) == 1], 0.4, rtol=0, atol=1e-12)
    assert np.abs(s.entries[np.abs(p) != 1]).max() < 1e-12


def test_alpha_dft_grid_checks():
    g = midpoint_alpha_grid(16)
    bad = g.copy()
    bad[3] += 0.01
    with pytest.raises(NonUniformGridError):
        alpha_dft(_family(np.ones(16), bad), 0, 0, 2)
    with pytest.raises(NonUniformGridError):
        alpha_dft(_family(np.ones(16), g), 0, 0, 5)
    # order of the list does not matter
    shuffled = _family(np.cos(g), g)[::-1]
    assert np.allclose(alpha_dft(shuffled, 0, 0, 2).entries, alpha_dft(_family(np.cos(g), g), 0, 0, 2).entries)


def test_csv_writers(tmp_path):
    g = midpoint_alpha_grid(4)
    Cs = [_mat(np.array([[1 / 3, 1j], [-1j, 2.0]]), a) for a in g]
    write_capacitance_csv(tmp_path / "c.csv", Cs)
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["alpha", "n", "q", "re", "im"] and len(rows) == 1 + 4 * 4
    assert rows[1][3] == "0.33333333333333331"  # 17 significant digits
    assert float(rows[1][0]) == g[0]

    fits = [fit_decay(_column_matrix(0.3 ** np.arange(1, 6)), 5)] * 4
    write_decay_csv(tmp_path / "d.csv", g, fits)
    rows = list(csv.reader(open(tmp_path / "d.csv")))
    assert rows[0] == ["alpha", "i", "abs_value"] and len(rows) == 1 + 4 * 5

    s = alpha_dft(_family(np.cos(midpoint_alpha_grid(8)), midpoint_alpha_grid(8)), 0, 0, 2)
    write_dft_csv(tmp_path / "p.csv", [s])
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["p", "n", "q", "value"] and [r[0] for r in rows[1:]] == ["-2", "-1", "0", "1", "2"]


@pytest.mark.slow
def test_default_uniform_sweep_asymmetry(sweeps):
    _, _, Cs = sweeps.get("uniform")
    assert max(C.asymmetry for C in Cs) < 1e-4


@pytest.mark.slow
@pytest.mark.parametrize(
    "scenario, kw",
    [("uniform", {}), ("single_defect", {}), ("two_defect", {"defect_separation": 1}), ("ssh", {})],
)
def test_decay_rate_below_one_across_grid(sweeps, scenario, kw):
    _, _, Cs = sweeps.get(scenario, **kw)
    assert all(fit_decay(C, 5).rho < 1 for C in Cs)


@pytest.mark.slow
def test_full_matrix_decays_in_both_directions(sweeps):
    _, chain, Cs = sweeps.get("uniform")
    c = len(chain) // 2
    # along p at fixed n; for n >= 2 the coupling is flat until |p| ~ n, so
    # a single line through all |p| only fits the two nearest columns
    for n in (0, 1):
        s = alpha_dft(Cs, c + n, c, 6)
        mags = np.abs(s.entries)
        assert s.imag_residue < 1e-8
        _, _, r2 = log_linear_fit(np.abs(s.p_offsets), mags)
        assert r2 > 0.99
    # along n at fixed p
    for p in (0, 1):
        mags = [abs(alpha_dft(Cs, c + n, c, 6).entries[6 + p]) for n in range(1, 6)]
        slope, _, r2 = log_linear_fit(range(1, 6), mags)
        assert slope < 0 and r2 > 0.99
