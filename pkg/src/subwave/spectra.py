"""Generalized eigenproblem ``C v = lambda M v`` over the Brillouin zone.

``M = diag(|D_n|)`` holds the disk areas.  Since ``M`` is diagonal and
positive the pencil is reduced exactly to the Hermitian matrix
``M^{-1/2} C M^{-1/2}``.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .bem import compute_capacitance
from .capmat import CapacitanceMatrix, band_truncate, hermitian_part
from .geometry import BoundaryMesh, ResonatorChain, discretize
from .qpgreen import GreenParams

__all__ = [
    "MassMatrix",
    "Spectrum",
    "BandStructure",
    "DefectReport",
    "FrequencyParams",
    "SweepError",
    "DefectCountError",
    "mass_matrix",
    "eig_pencil",
    "ipr",
    "localization_center",
    "capacitance_sweep",
    "band_sweep",
    "spectra_from_capacitance",
    "classify_defects",
    "relative_difference",
    "max_gap",
    "to_frequency",
    "write_band_csv",
]

log = logging.getLogger(__name__)

DEFAULT_IPR_THRESHOLD = 0.2
EDGE_EXCLUSION = 2  # pseudo-modes: localized within this many disks of a chain end


class SweepError(RuntimeError):
    """One or more alpha points of a sweep failed."""

    def __init__(self, failures: list[tuple[float, BaseException]]):
        self.failures = failures
        lines = ", ".join(f"alpha={a:.6g}: {e}" for a, e in failures)
        super().__init__(f"{len(failures)} alpha point(s) failed: {lines}")


class DefectCountError(RuntimeError):
    pass


@dataclass(frozen=True)
class MassMatrix:
    diagonal: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diagonal, dtype=float)
        if d.ndim != 1 or np.any(d <= 0):
            raise ValueError("mass matrix entries must be strictly positive")
        object.__setattr__(self, "diagonal", d)

    @classmethod
    def identity(cls, n: int) -> "MassMatrix":
        return cls(np.ones(n))


@dataclass
class Spectrum:
    alpha: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, normalized so that v^H M v = 1
    iprs: np.ndarray
    residuals: np.ndarray  # ||C v - lambda M v||_inf / ||C||_inf per pair


@dataclass
class BandStructure:
    alpha_grid: np.ndarray
    spectra: list[Spectrum]
    scenario_name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.spectra) != len(self.alpha_grid):
            raise ValueError("one spectrum per grid point required")
        sizes = {len(s.eigenvalues) for s in self.spectra}
        if len(sizes) > 1:
            raise ValueError("inconsistent spectrum sizes across the grid")

    @property
    def eigenvalues(self) -> np.ndarray:
        """``(n_alpha, N)`` array of ascending eigenvalues."""
        return np.array([s.eigenvalues for s in self.spectra])


@dataclass
class DefectReport:
    defect_bands: list[list[tuple[float, float]]]  # per alpha: (eigenvalue, ipr)
    defect_indices: list[list[int]]
    max_gap: float = math.nan
    max_relative_difference: float = math.nan
    rd_curve: list[tuple[float, float]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class FrequencyParams:
    delta: float = 1e-3
    mu1: float = 1.0

    def __post_init__(self):
        if not (self.delta > 0 and self.mu1 > 0):
            raise ValueError("delta and mu1 must be positive")
        if self.delta > 0.1:
            warnings.warn("contrast delta > 0.1: the leading-order frequency map is unreliable", stacklevel=2)


def mass_matrix(chain: ResonatorChain) -> MassMatrix:
    return MassMatrix(np.pi * chain.radii**2)


def ipr(v, M: MassMatrix | None = None) -> float:
    """Inverse participation ratio ``sum |v_n|^4 / (sum |v_n|^2)^2``."""
    a = np.abs(np.asarray(v)) ** 2
    s = a.sum()
    if s == 0:
        raise ValueError("zero vector has no participation ratio")
    return float((a**2).sum() / s**2)


def localization_center(v) -> int:
    """Index of the disk carrying the largest amplitude.

    A peak rather than a centroid: a mode split between both chain ends has
    its centroid in the middle of the chain.
    """
    return int(np.argmax(np.abs(np.asarray(v))))


def eig_pencil(C: CapacitanceMatrix, M: MassMatrix) -> Spectrum:
    if not C.hermitized:
        raise ValueError("eig_pencil needs a hermitized capacitance matrix (see hermitian_part)")
    c = C.entries
    if not np.array_equal(c, c.conj().T):
        raise ValueError("capacitance matrix is not exactly Hermitian")
    m = M.diagonal
    if c.shape != (len(m), len(m)):
        raise ValueError("capacitance and mass matrix dimensions differ")
    s = 1.0 / np.sqrt(m)
    a = c * np.outer(s, s)
    try:
        lam, u = scipy.linalg.eigh(a, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigen-iteration failed at alpha={C.alpha!r}: {exc}") from exc
    v = s[:, None] * u
    cnorm = np.abs(c).sum(axis=1).max()
    resid = np.abs(c @ v - (m[:, None] * v) * lam[None, :]).max(axis=0) / cnorm
    iprs = np.array([ipr(v[:, k]) for k in range(len(lam))])
    return Spectrum(C.alpha, lam, v, iprs, resid)


def _workers(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("SUBWAVE_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def capacitance_sweep(
    mesh: BoundaryMesh,
    alpha_grid: Sequence[float],
    fourier_terms: int = 200,
    threads: int | None = None,
) -> list[CapacitanceMatrix]:
    """Hermitized capacitance matrices on every grid point, in grid order."""
    alphas = [float(a) for a in alpha_grid]
    if any(a == 0.0 for a in alphas):
        raise ValueError("alpha grid must exclude 0")

    def one(a):
        try:
            return hermitian_part(compute_capacitance(mesh, GreenParams(a, fourier_terms)))
        except Exception as exc:  # collected and re-raised with alpha context
            return exc

    n = _workers(threads)
    if n == 1:
        results = [one(a) for a in alphas]
    else:
        with ThreadPoolExecutor(n) as pool:
            results = list(pool.map(one, alphas))
    failures = [(a, r) for a, r in zip(alphas, results) if isinstance(r, BaseException)]
    if failures:
        raise SweepError(failures)
    return results


def spectra_from_capacitance(
    Cs: Sequence[CapacitanceMatrix],
    chain: ResonatorChain,
    truncation: int | None = None,
    scenario_name: str | None = None,
    metadata: dict | None = None,
) -> BandStructure:
    M = mass_matrix(chain)
    specs = []
    for C in Cs:
        C = hermitian_part(C)
        if truncation is not None:
            C = band_truncate(C, truncation)
        specs.append(eig_pencil(C, M))
    meta = dict(metadata or {})
    meta["truncation"] = truncation
    return BandStructure(
        np.array([C.alpha for C in Cs]), specs, scenario_name or chain.scenario_name, meta
    )


def band_sweep(
    chain: ResonatorChain,
    alpha_grid: Sequence[float],
    truncation: int | None = None,
    panels_per_disk: int = 64,
    fourier_terms: int = 200,
    threads: int | None = None,
) -> BandStructure:
    """assemble -> densities -> capacitance -> hermitize -> [truncate] -> pencil, per alpha."""
    mesh = discretize(chain, panels_per_disk)
    Cs = capacitance_sweep(mesh, alpha_grid, fourier_terms, threads)
    meta = {"fourier_terms": fourier_terms, "panels_per_disk": panels_per_disk, "alpha_points": len(Cs)}
    return spectra_from_capacitance(Cs, chain, truncation, metadata=meta)


def relative_difference(l1: float, l2: float) -> float:
    """``1 - l1 / l2`` for ``0 < l1 <= l2``."""
    if not (0 < l1 <= l2):
        raise ValueError(f"need 0 < l1 <= l2, got l1={l1!r}, l2={l2!r}")
    return 1.0 - l1 / l2


def max_gap(pairs: Sequence[tuple[float, float]]) -> float:
    """Largest ``l2 - l1`` over per-alpha defect pairs."""
    if not pairs:
        raise DefectCountError("no defect pairs")
    gaps = []
    for k, pr in enumerate(pairs):
        if pr is None or len(pr) != 2:
            raise DefectCountError(f"grid point {k}: expected exactly two defect eigenvalues")
        l1, l2 = sorted(pr)
        gaps.append(l2 - l1)
    return float(max(gaps))


def to_frequency(lam: float, params: FrequencyParams = FrequencyParams()) -> float:
    """Leading-order subwavelength frequency ``sqrt(delta * lambda) * mu1``."""
    if lam < 0:
        raise ValueError("negative eigenvalue has no real frequency")
    return math.sqrt(params.delta * lam) * params.mu1


def classify_defects(
    band: BandStructure,
    reference: BandStructure | None,
    ipr_threshold: float = DEFAULT_IPR_THRESHOLD,
    expected: int | None = None,
    margin: float = 1e-6,
    edge_exclusion: int = EDGE_EXCLUSION,
) -> DefectReport:
    """Label eigenpairs outside the reference band range or strongly localized.

    Modes whose localization center lies within ``edge_exclusion`` disks of
    either chain end are pseudo-modes of the truncated chain and are never
    labeled.  Without a reference only the IPR criterion applies.

    When ``expected`` is given and more modes qualify, modes outside the
    reference range win over in-band localized ones (for two nearby defects
    a bulk disk between them can trap an in-band mode), ties broken by IPR.
    With ``expected == 2`` the two defect eigenvalues feed the gap and
    relative-difference metrics.
    """
    if reference is not None and (
        len(band.alpha_grid) != len(reference.alpha_grid)
        or not np.allclose(band.alpha_grid, reference.alpha_grid)
    ):
        raise ValueError("band and reference must share the alpha grid")
    bands, indices, dropped_notes = [], [], []
    refs = reference.spectra if reference is not None else [None] * len(band.spectra)
    for k, (spec, ref) in enumerate(zip(band.spectra, refs)):
        if ref is None:
            lo = hi = None
        else:
            lo, hi = ref.eigenvalues.min() - margin, ref.eigenvalues.max() + margin
        n = len(spec.eigenvalues)
        chosen, in_gap = [], set()
        for j, (lam, p) in enumerate(zip(spec.eigenvalues, spec.iprs)):
            center = localization_center(spec.eigenvectors[:, j])
            if center < edge_exclusion or center > n - 1 - edge_exclusion:
                continue
            outside = lo is not None and (lam < lo or lam > hi)
            if outside:
                in_gap.add(j)
            if outside or p > ipr_threshold:
                chosen.append(j)
        if expected is not None and len(chosen) > expected:
            # gap modes first, then the most localized in-band modes
            ranked = sorted(chosen, key=lambda j: (j not in in_gap, -spec.iprs[j]))
            dropped = ranked[expected:]
            chosen = sorted(ranked[:expected])
            dropped_notes.append((spec.alpha, dropped))
        if expected is not None and len(chosen) != expected:
            raise DefectCountError(
                f"alpha={spec.alpha:.6g}: found {len(chosen)} defect modes, expected {expected}"
            )
        indices.append(chosen)
        bands.append([(float(spec.eigenvalues[j]), float(spec.iprs[j])) for j in chosen])
    report = DefectReport(bands, indices)
    if dropped_notes:
        report.notes.append(
            f"{len(dropped_notes)} grid point(s) had extra in-band localized modes, not counted as defects"
        )
    if expected == 2:
        pairs = [tuple(sorted(l for l, _ in b)) for b in bands]
        report.max_gap = max_gap(pairs)
        report.rd_curve = [
            (float(a), relative_difference(*pr)) for a, pr in zip(band.alpha_grid, pairs)
        ]
        report.max_relative_difference = max(rd for _, rd in report.rd_curve)
    return report


def write_band_csv(path: Path, band: BandStructure, defect: DefectReport | None = None) -> None:
    flags = [set(ix) for ix in defect.defect_indices] if defect else [set()] * len(band.spectra)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "eig_index", "lambda", "ipr", "is_defect"])
        for spec, fl in zip(band.spectra, flags):
            for j, (lam, p) in enumerate(zip(spec.eigenvalues, spec.iprs)):
                w.writerow([f"{spec.alpha:.17g}", j, f"{lam:.17g}", f"{p:.17g}", int(j in fl)])
