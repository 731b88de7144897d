"""Collocation BEM for the quasi-periodic single-layer operator.

Densities are piecewise constant on the equal-arc panels of
:class:`~subwave.geometry.BoundaryMesh` and collocated at panel midpoints,
so ``S[i, j]`` is the integral of the kernel over panel ``j`` seen from node
``i``.

* Panels on different disks: Gauss-Legendre on the truncated spectral series
  (evaluated through :func:`~subwave.qpgreen.series_matrix`).
* Panels on the same disk: the kernel is split as ``ln|x| / (2 pi) + R``.  On
  a circle ``ln|x_i - y(theta)| = ln r + ln|2 sin((theta - theta_i) / 2)|``,
  whose panel integrals are differences of the Clausen function, exact for
  the self panel and its neighbours alike.  ``R`` is smooth and is
  integrated by Gauss-Legendre, with the self panel split at the node.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.special import spence

from .capmat import CapacitanceMatrix
from .geometry import BoundaryMesh
from .qpgreen import (
    LOG_COEFFICIENT,
    GreenParams,
    NearFieldGeometry,
    green,
    remainder_from_geometry,
    series_matrix,
)

__all__ = [
    "SingleLayerMatrix",
    "DensitySet",
    "NearSingularError",
    "assemble",
    "solve_densities",
    "capacitance",
    "condition_estimate",
    "compute_capacitance",
    "clausen",
    "single_layer_potential",
]

log = logging.getLogger(__name__)

DEFAULT_GAUSS_POINTS = 4
SAME_DISK_GAUSS_POINTS = 8
CONDITION_LIMIT = 1e12


class NearSingularError(np.linalg.LinAlgError):
    """Single-layer system too ill-conditioned to trust (alpha near 0)."""

    def __init__(self, alpha: float, cond: float):
        super().__init__(f"single-layer matrix near singular at alpha={alpha!r} (cond ~ {cond:.3e})")
        self.alpha = alpha
        self.cond = cond


@dataclass
class SingleLayerMatrix:
    entries: np.ndarray
    params: GreenParams
    mesh_id: str

    @property
    def hermitian_defect(self) -> float:
        s = self.entries
        return float(np.linalg.norm(s - s.conj().T) / np.linalg.norm(s))


@dataclass
class DensitySet:
    densities: np.ndarray  # (n_panels, n_disks); column n solves S phi = indicator of disk n
    params: GreenParams
    mesh_id: str
    condition: float = math.nan
    residual: float = math.nan  # max_n ||S phi_n - e_n||_inf / ||S||_inf


def clausen(theta) -> np.ndarray:
    """Clausen function ``Cl2(theta) = -int_0^theta ln|2 sin(t/2)| dt``."""
    theta = np.asarray(theta, dtype=float)
    # Li2(z) = spence(1 - z)
    return np.imag(spence(1.0 - np.exp(1j * theta)))


@lru_cache(maxsize=16)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=16)
def _log_sine_panel_integrals(panels: int) -> np.ndarray:
    """``L[i, j] = int ln|2 sin((theta - theta_i) / 2)| d theta`` over panel ``j``."""
    h = 2 * np.pi / panels
    # integral depends only on (j - i) mod P
    off = np.arange(panels)
    a = h * off - h / 2
    vals = clausen(a) - clausen(a + h)
    out = vals[(off[None, :] - off[:, None]) % panels]
    out.setflags(write=False)
    return out


@lru_cache(maxsize=8)
def _same_disk_geometry(radius: float, panels: int, n_gauss: int):
    """alpha-independent pieces of a same-disk block, cached per radius."""
    p = panels
    h = 2 * np.pi / p
    theta = h * (np.arange(p) + 0.5)
    lo = theta - h / 2
    # log part, exact: ln|x - y| = ln r + ln|2 sin(dtheta / 2)| on the circle
    log_part = LOG_COEFFICIENT * radius * (h * math.log(radius) + _log_sine_panel_integrals(p))

    xi, wq = _gauss(n_gauss)
    tq = lo[:, None] + 0.5 * h * (1 + xi)[None, :]  # (P, Q) source angles
    wts = 0.5 * h * radius * wq
    node = radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    src = radius * np.stack([np.cos(tq), np.sin(tq)], axis=-1)
    d = node[:, None, None, :] - src[None, :, :, :]
    # the self panel is overwritten below; keep its offsets away from 0
    d[np.arange(p), np.arange(p)] = 1.0
    regular = NearFieldGeometry.build(d[..., 0], d[..., 1])

    # self panel: split at the node so each half sees R only at an endpoint
    half = np.concatenate(
        [theta[:, None] - 0.25 * h * (1 + xi)[None, :], theta[:, None] + 0.25 * h * (1 + xi)[None, :]], axis=1
    )
    hsrc = radius * np.stack([np.cos(half), np.sin(half)], axis=-1)
    hd = node[:, None, :] - hsrc
    selfp = NearFieldGeometry.build(hd[..., 0], hd[..., 1])
    hw = np.concatenate([wts, wts]) / 2
    return log_part, regular, wts, selfp, hw


def _same_disk_block(radius: float, panels: int, params: GreenParams, n_gauss: int) -> np.ndarray:
    log_part, regular, wts, selfp, hw = _same_disk_geometry(float(radius), panels, n_gauss)
    # smooth remainder by Gauss-Legendre
    rem = remainder_from_geometry(params.alpha, regular) @ wts
    idx = np.arange(panels)
    rem[idx, idx] = remainder_from_geometry(params.alpha, selfp) @ hw
    return log_part + rem


def _panel_gauss_points(mesh: BoundaryMesh, i: int, n_gauss: int):
    disk = mesh.chain.disks[i]
    p = mesh.panels_per_disk
    h = 2 * np.pi / p
    xi, wq = _gauss(n_gauss)
    t = h * np.arange(p)[:, None] + 0.5 * h * (1 + xi)[None, :]
    pts = np.stack([disk.center[0] + disk.radius * np.cos(t), disk.center[1] + disk.radius * np.sin(t)], axis=-1)
    w = np.broadcast_to(0.5 * h * disk.radius * wq, t.shape)
    return pts, w


def assemble(
    mesh: BoundaryMesh,
    params: GreenParams,
    gauss_points: int = DEFAULT_GAUSS_POINTS,
    same_disk_gauss_points: int = SAME_DISK_GAUSS_POINTS,
) -> SingleLayerMatrix:
    """Discretized single-layer operator ``S[i, j] ~ int_panel_j G(x_i - y) dsigma(y)``."""
    params.require_nonzero()
    n = mesh.n_disks
    p = mesh.panels_per_disk
    chain = mesh.chain
    lo = np.array([d.center[1] - d.radius for d in chain.disks])
    hi = np.array([d.center[1] + d.radius for d in chain.disks])
    out = np.empty((mesh.n_panels, mesh.n_panels), dtype=complex)

    self_blocks: dict[float, np.ndarray] = {}
    for j, disk in enumerate(chain.disks):
        cols = mesh.disk_slice(j)
        key = disk.radius
        if key not in self_blocks:
            self_blocks[key] = _same_disk_block(disk.radius, p, params, same_disk_gauss_points)
        out[cols, cols] = self_blocks[key]

        pts, w = _panel_gauss_points(mesh, j, gauss_points)
        above = sorted((i for i in range(n) if lo[i] > hi[j]), key=lambda i: lo[i])
        below = sorted((i for i in range(n) if hi[i] < lo[j]), key=lambda i: -hi[i])
        # the nearest disk on each side needs many modes, the rest only a few
        for group in (above[:1], above[1:], below[:1], below[1:]):
            if not group:
                continue
            rows = np.concatenate([np.arange(i * p, (i + 1) * p) for i in group])
            out[rows, cols] = series_matrix(params, mesh.nodes[rows], pts, w)
        for i in set(range(n)) - set(above) - set(below) - {j}:
            # horizontally adjacent disks (custom chains): split form, still exact
            rows = mesh.disk_slice(i)
            g = green(params, mesh.nodes[rows][:, None, None, :] - pts[None])
            out[rows, cols] = np.einsum("ijq,jq->ij", g, w)

    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"non-finite single-layer entry at alpha={params.alpha!r}")
    return SingleLayerMatrix(out, params, mesh.mesh_id)


def condition_estimate(S: SingleLayerMatrix | np.ndarray) -> float:
    """LAPACK 1-norm condition estimate of ``S``."""
    a = S.entries if isinstance(S, SingleLayerMatrix) else np.asarray(S, dtype=complex)
    lu, _ = scipy.linalg.lu_factor(a, check_finite=False)
    return _cond_from_lu(a, lu)


def _cond_from_lu(a: np.ndarray, lu: np.ndarray) -> float:
    anorm = np.abs(a).sum(axis=0).max()
    gecon = scipy.linalg.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0:
        return math.inf
    return float(1.0 / rcond)


def solve_densities(S: SingleLayerMatrix, mesh: BoundaryMesh) -> DensitySet:
    """Solve ``S phi_n = 1_{dD_n}`` for every disk with one LU factorization."""
    S.params.require_nonzero()
    a = S.entries
    lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    cond = _cond_from_lu(a, lu)
    if cond > CONDITION_LIMIT:
        raise NearSingularError(S.params.alpha, cond)
    rhs = mesh.indicator()
    phi = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    snorm = np.abs(a).sum(axis=1).max()
    resid = np.abs(a @ phi - rhs).max() / snorm
    return DensitySet(phi, S.params, S.mesh_id, cond, float(resid))


def capacitance(densities: DensitySet, mesh: BoundaryMesh) -> CapacitanceMatrix:
    """``C[q, n] = -sum_{panels j on dD_q} w_j phi_n(j)``.

    Inside each disk the potential is constant, so the interior normal
    derivative vanishes and the jump relation makes the exterior flux equal
    to the density itself.
    """
    if densities.mesh_id != mesh.mesh_id:
        raise ValueError("densities were computed on a different mesh")
    weighted = mesh.weights[:, None] * densities.densities
    c = -(mesh.indicator().T @ weighted)
    return CapacitanceMatrix(
        alpha=densities.params.alpha,
        entries=c,
        chain_id=mesh.chain.chain_id,
    )


def compute_capacitance(mesh: BoundaryMesh, params: GreenParams) -> CapacitanceMatrix:
    """assemble -> solve_densities -> capacitance, in one call."""
    S = assemble(mesh, params)
    dens = solve_densities(S, mesh)
    C = capacitance(dens, mesh)
    C.condition = dens.condition
    return C


def single_layer_potential(
    mesh: BoundaryMesh, params: GreenParams, density: np.ndarray, points, gauss_points: int = 16
) -> np.ndarray:
    """Evaluate ``S[phi](x)`` off the boundary for a piecewise-constant density.

    Dense Gauss-Legendre per panel; intended for diagnostics at points a
    fair distance (several panel lengths) from the boundary.
    """
    x = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.zeros(len(x), dtype=complex)
    for j in range(mesh.n_disks):
        pts, w = _panel_gauss_points(mesh, j, gauss_points)
        g = green(params, x[:, None, None, :] - pts[None])
        out += np.einsum("xjq,jq,j->x", g, w, density[mesh.disk_slice(j)])
    return out
