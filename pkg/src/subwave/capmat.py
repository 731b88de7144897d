"""Capacitance matrices: symmetrization, banded truncation, decay fits and
the Fourier transform over the Brillouin zone to full-crystal entries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "CapacitanceMatrix",
    "DecayFit",
    "FullMatrixSlice",
    "DegenerateFitError",
    "NonUniformGridError",
    "hermitian_part",
    "band_truncate",
    "fit_decay",
    "log_linear_fit",
    "alpha_dft",
    "midpoint_alpha_grid",
    "write_capacitance_csv",
    "write_decay_csv",
    "write_dft_csv",
]


class DegenerateFitError(ValueError):
    pass


class NonUniformGridError(ValueError):
    pass


@dataclass
class CapacitanceMatrix:
    alpha: float
    entries: np.ndarray
    hermitized: bool = False
    asymmetry: float = math.nan
    chain_id: str = ""
    condition: float = math.nan

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def hermitian_defect(self) -> float:
        c = self.entries
        return float(np.linalg.norm(c - c.conj().T) / np.linalg.norm(c))


@dataclass
class DecayFit:
    rho: float
    log_linear_r2: float
    samples: list[tuple[int, float]] = field(default_factory=list)

    @property
    def decaying(self) -> bool:
        # constant data fits rho = 1 only up to roundoff
        return self.rho < 1.0 - 1e-9


@dataclass
class FullMatrixSlice:
    """Full-crystal entries ``C^{p,q}_{0,n}`` for fixed ``(n, q)`` over ``p``."""

    n: int
    q: int
    p_offsets: np.ndarray
    entries: np.ndarray

    @property
    def imag_residue(self) -> float:
        scale = np.abs(self.entries).max()
        return float(np.abs(self.entries.imag).max() / scale) if scale > 0 else 0.0


def hermitian_part(C: CapacitanceMatrix) -> CapacitanceMatrix:
    """``(C + C^H) / 2`` with the relative Frobenius asymmetry recorded.

    Idempotent: an already hermitized matrix is returned unchanged.
    """
    if C.hermitized:
        return C
    a = C.entries
    norm = np.linalg.norm(a)
    asym = float(np.linalg.norm(a - a.conj().T) / norm) if norm > 0 else 0.0
    h = 0.5 * (a + a.conj().T)
    np.fill_diagonal(h, h.diagonal().real)
    return replace(C, entries=h, hermitized=True, asymmetry=asym)


def band_truncate(C: CapacitanceMatrix, bandwidth: int) -> CapacitanceMatrix:
    """Zero every entry farther than ``bandwidth`` from the diagonal.

    Bandwidth 1 keeps the diagonal and the first sub/super-diagonals
    (nearest-neighbour tight binding).  Kept entries are not rescaled.
    """
    if bandwidth < 0:
        raise ValueError("bandwidth must be >= 0")
    n = C.size
    i, j = np.indices((n, n))
    return replace(C, entries=np.where(np.abs(i - j) <= bandwidth, C.entries, 0))


def log_linear_fit(offsets, magnitudes) -> tuple[float, float, float]:
    """Least-squares line through ``(offset, ln magnitude)``.

    Returns ``(slope, intercept, r2)``; ``r2`` is 1 for exactly collinear
    data, including the constant case.
    """
    x = np.asarray(offsets, dtype=float)
    y = np.asarray(magnitudes, dtype=float)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise DegenerateFitError("decay fit needs strictly positive finite magnitudes")
    ly = np.log(y)
    slope, intercept = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(np.sum(ly**2))) else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def fit_decay(C: CapacitanceMatrix, max_offset: int = 5, center: int | None = None) -> DecayFit:
    """Fit ``|C[center + i, center]| ~ A rho^i`` for ``i = 1..max_offset``.

    ``center`` defaults to the middle row (the disk in cell 0 for the
    symmetric scenario chains).
    """
    if max_offset < 2:
        raise ValueError("max_offset must be >= 2")
    n = C.size
    c = n // 2 if center is None else center
    if c + max_offset >= n:
        raise ValueError("max_offset runs past the end of the chain")
    offsets = np.arange(1, max_offset + 1)
    mags = np.abs(C.entries[c + offsets, c])
    slope, _, r2 = log_linear_fit(offsets, mags)
    return DecayFit(float(math.exp(slope)), r2, [(int(i), float(m)) for i, m in zip(offsets, mags)])


def midpoint_alpha_grid(n_alpha: int) -> np.ndarray:
    """``alpha_j = -pi + (j + 1/2) 2 pi / N``; symmetric and never hits 0 for even N."""
    if n_alpha < 2:
        raise ValueError("need at least two alpha points")
    return -np.pi + (np.arange(n_alpha) + 0.5) * (2 * np.pi / n_alpha)


def _check_uniform(alphas: np.ndarray) -> None:
    n = len(alphas)
    step = 2 * np.pi / n
    diffs = np.diff(alphas)
    if not np.allclose(diffs, step, rtol=0, atol=1e-9):
        raise NonUniformGridError("alpha grid must be uniform with step 2 pi / N over one period")


def alpha_dft(Cs, n: int, q: int, p_max: int) -> FullMatrixSlice:
    """Full-crystal entries from the quasi-periodic ones.

    ``C^{p,q}_{0,n} = (1 / 2 pi) int C^alpha_{n,q} exp(-i alpha p) d alpha``,
    evaluated by the equal-weight rule on a uniform grid spanning one
    period.  ``n`` and ``q`` are row/column positions in the matrices.
    """
    alphas = np.array([c.alpha for c in Cs], dtype=float)
    order = np.argsort(alphas)
    alphas = alphas[order]
    _check_uniform(alphas)
    if len(alphas) < 4 * p_max:
        raise NonUniformGridError(f"need >= {4 * p_max} alpha points for p_max={p_max}")
    vals = np.array([Cs[i].entries[n, q] for i in order])
    p = np.arange(-p_max, p_max + 1)
    coeff = np.exp(-1j * np.outer(p, alphas)) @ vals / len(alphas)
    return FullMatrixSlice(n, q, p, coeff)


def _fmt(x: float) -> str:
    return repr(float(x)) if not math.isfinite(x) else f"{x:.17g}"


def write_capacitance_csv(path: Path, Cs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "n", "q", "re", "im"])
        for C in Cs:
            for (a, b), v in np.ndenumerate(C.entries):
                w.writerow([_fmt(C.alpha), a, b, _fmt(v.real), _fmt(v.imag)])


def write_decay_csv(path: Path, alphas, fits) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "i", "abs_value"])
        for a, fit in zip(alphas, fits):
            for i, m in fit.samples:
                w.writerow([_fmt(a), i, _fmt(m)])


def write_dft_csv(path: Path, slices) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "n", "q", "value"])
        for s in slices:
            for p, v in zip(s.p_offsets, s.entries):
                w.writerow([int(p), s.n, s.q, _fmt(v.real)])
