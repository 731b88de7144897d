"""Lattice, resonator chains and panel meshes for a singly periodic strip.

The strip is the cell column ``{c <= x1 < c + 1}`` of the square lattice; it
is periodic in ``x1`` with period 1 and holds one circular inclusion per cell
``Y_{0,n}``.  Chains list the disks of a finite window of cells ordered by
height.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "LatticeSpec",
    "Disk",
    "ResonatorChain",
    "BoundaryMesh",
    "Scenario",
    "ScenarioConfig",
    "GeometryError",
    "build_scenario",
    "validate_geometry",
    "discretize",
    "ssh_heights",
    "chain_from_heights",
    "two_defect_cells",
]


class GeometryError(ValueError):
    """Raised for inadmissible chains or discretization requests."""


@dataclass(frozen=True)
class LatticeSpec:
    v1: tuple[float, float] = (1.0, 0.0)
    v2: tuple[float, float] = (0.0, 1.0)
    cell_height: float = 1.0

    def __post_init__(self):
        det = self.v1[0] * self.v2[1] - self.v1[1] * self.v2[0]
        if abs(det) < 1e-12:
            raise GeometryError("lattice vectors are linearly dependent")
        if abs(math.hypot(*self.v1) - 1.0) > 1e-12:
            raise GeometryError("|v1| must be 1")
        if not self.cell_height > 0:
            raise GeometryError("cell_height must be positive")


@dataclass(frozen=True)
class Disk:
    index: int
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"disk {self.index}: radius must be positive")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2


@dataclass(frozen=True)
class ResonatorChain:
    """Ordered disks of one periodic strip.

    ``wall`` is the left wall abscissa ``c`` of the strip; the right wall is
    at ``c + 1``.
    """

    disks: tuple[Disk, ...]
    lattice: LatticeSpec = field(default_factory=LatticeSpec)
    scenario_name: str = "custom"
    wall: float = 0.0

    def __post_init__(self):
        ys = [d.center[1] for d in self.disks]
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise GeometryError("disks must be sorted by height")
        idx = [d.index for d in self.disks]
        if idx and idx != list(range(idx[0], idx[0] + len(idx))):
            raise GeometryError("disk indices must be consecutive integers")

    def __len__(self) -> int:
        return len(self.disks)

    @property
    def centers(self) -> np.ndarray:
        return np.array([d.center for d in self.disks], dtype=float)

    @property
    def radii(self) -> np.ndarray:
        return np.array([d.radius for d in self.disks], dtype=float)

    @property
    def chain_id(self) -> str:
        body = ";".join(f"{d.center[0]!r},{d.center[1]!r},{d.radius!r}" for d in self.disks)
        return f"{self.scenario_name}[{len(self.disks)}]:{hashlib.sha1(body.encode()).hexdigest()[:8]}"

    def translated(self, t: float) -> "ResonatorChain":
        """Shift every center (and the strip walls) horizontally by ``t``."""
        disks = tuple(
            Disk(d.index, (d.center[0] + t, d.center[1]), d.radius) for d in self.disks
        )
        return ResonatorChain(disks, self.lattice, self.scenario_name, self.wall + t)

    def mirror_permutation(self, tol: float = 1e-12) -> np.ndarray | None:
        """Index map of the reflection about the chain midpoint, or None.

        Returns ``sigma`` with disk ``sigma[n]`` the mirror image of disk ``n``
        when the chain is invariant under ``y -> 2*mid - y``.
        """
        c = self.centers
        r = self.radii
        mid = 0.5 * (c[0, 1] + c[-1, 1])
        sigma = np.arange(len(c))[::-1]
        ok = (
            np.allclose(c[sigma, 1], 2 * mid - c[:, 1], atol=tol, rtol=0)
            and np.allclose(c[sigma, 0], c[:, 0], atol=tol, rtol=0)
            and np.allclose(r[sigma], r, atol=tol, rtol=0)
        )
        return sigma if ok else None

    def to_json(self) -> str:
        return json.dumps(
            {
                "scenario": self.scenario_name,
                "disks": [
                    {"index": d.index, "cx": d.center[0], "cy": d.center[1], "r": d.radius}
                    for d in self.disks
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ResonatorChain":
        rec = json.loads(text)
        disks = [Disk(int(d["index"]), (float(d["cx"]), float(d["cy"])), float(d["r"])) for d in rec["disks"]]
        disks.sort(key=lambda d: d.center[1])
        return cls(tuple(disks), scenario_name=rec.get("scenario", "custom"))


@dataclass(frozen=True)
class BoundaryMesh:
    """Equal-arc panels on every disk boundary, grouped disk by disk.

    Panel ``k`` of a disk spans angles ``[2 pi k / P, 2 pi (k+1) / P]``; its
    collocation node sits at the arc midpoint.
    """

    chain: ResonatorChain
    panels_per_disk: int
    nodes: np.ndarray  # (n_panels, 2)
    normals: np.ndarray  # (n_panels, 2)
    weights: np.ndarray  # (n_panels,)
    parent: np.ndarray  # (n_panels,) position of the parent disk in chain.disks
    angles: np.ndarray  # (n_panels,) node angle on the parent circle

    @property
    def n_panels(self) -> int:
        return len(self.weights)

    @property
    def n_disks(self) -> int:
        return len(self.chain.disks)

    @property
    def mesh_id(self) -> str:
        return f"{self.chain.chain_id}/P{self.panels_per_disk}"

    def disk_slice(self, i: int) -> slice:
        p = self.panels_per_disk
        return slice(i * p, (i + 1) * p)

    def indicator(self) -> np.ndarray:
        """0/1 matrix E with E[j, n] = 1 iff panel j lies on disk n."""
        e = np.zeros((self.n_panels, self.n_disks))
        e[np.arange(self.n_panels), self.parent] = 1.0
        return e

    def mirror_panel_permutation(self) -> np.ndarray | None:
        sigma = self.chain.mirror_permutation()
        if sigma is None:
            return None
        p = self.panels_per_disk
        k = np.arange(p)
        # y -> -y maps angle theta_k to -theta_k, i.e. panel k to panel p-1-k
        return (sigma[:, None] * p + (p - 1 - k)[None, :]).ravel()


class Scenario(str, Enum):
    uniform = "uniform"
    single_defect = "single_defect"
    two_defect = "two_defect"
    ssh = "ssh"
    custom = "custom"


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario = Scenario.uniform
    bulk_radius: float = 0.35
    defect_radius: float = 0.2
    half_width: int = 14
    defect_separation: int | None = None
    alpha_points: int = 80
    fourier_terms: int = 200
    panels_per_disk: int = 64
    band_truncation_width: int = 1
    output_dir: Path = Path("out")
    ssh_radius: float = 0.3
    ssh_cells: int = 15
    chain_file: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.alpha_points < 2:
            raise GeometryError("alpha_points must be >= 2")
        if self.fourier_terms < 1:
            raise GeometryError("fourier_terms must be >= 1")
        if self.panels_per_disk < 8:
            raise GeometryError("panels_per_disk must be >= 8")
        if self.half_width < 0:
            raise GeometryError("half_width must be >= 0")
        if self.band_truncation_width < 0:
            raise GeometryError("band_truncation_width must be >= 0")
        if self.scenario is Scenario.two_defect:
            if self.defect_separation is None:
                raise GeometryError("two_defect requires defect_separation")
            if self.defect_separation < 1:
                raise GeometryError("defect_separation must be >= 1")
            lo, hi = two_defect_cells(self.defect_separation)
            if max(-lo, hi) > self.half_width:
                raise GeometryError(
                    f"defect_separation={self.defect_separation} needs cells {lo}..{hi}, beyond half_width={self.half_width}"
                )
        if self.scenario is Scenario.custom and self.chain_file is None:
            raise GeometryError("custom scenario requires chain_file")


def two_defect_cells(separation: int) -> tuple[int, int]:
    """Cells of the two defects with ``separation`` bulk disks between them.

    Odd separations are centred on cell 0 (``l = 1, 3, 5`` puts the defects
    at ``+-1, +-2, +-3``); even ones sit one cell higher on top.
    """
    lower = -((separation + 1) // 2)
    return lower, lower + separation + 1


def chain_from_heights(
    heights, radii, name: str, x_center: float = 0.5, first_index: int = 0
) -> ResonatorChain:
    heights = np.asarray(heights, dtype=float)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), heights.shape)
    order = np.argsort(heights, kind="stable")
    disks = tuple(
        Disk(first_index + k, (x_center, float(heights[i])), float(radii[i]))
        for k, i in enumerate(order)
    )
    return ResonatorChain(disks, scenario_name=name)


def ssh_heights(variant: str = "interface", cells: int = 15) -> np.ndarray:
    """Disk heights of the dimerized two-phase chain.

    ``"literal"`` takes both half-chain formulas at face value (they
    overlap); ``"mirror"`` reflects the upper half-chain about ``y = 0``;
    ``"interface"`` takes the lower half-chain as ``-2n + 0.65, -2n + 1.35``
    for ``n = 1..cells``, which joins the two dimerization phases.
    """
    n = np.arange(1, cells + 1, dtype=float)
    upper = np.concatenate([2 * n - 1.65, 2 * n - 0.35])
    if variant == "literal":
        m = -n
        lower = np.concatenate([-2 * m + 0.65, -2 * m + 1.35])
    elif variant == "mirror":
        lower = -upper
    elif variant == "interface":
        lower = np.concatenate([-2 * n + 0.65, -2 * n + 1.35])
    else:
        raise ValueError(f"unknown ssh variant {variant!r}")
    return np.sort(np.concatenate([lower, upper]))


def build_scenario(config: ScenarioConfig) -> ResonatorChain:
    s = config.scenario
    if s is Scenario.custom:
        chain = ResonatorChain.from_json(Path(config.chain_file).read_text())
    elif s is Scenario.ssh:
        h = ssh_heights("interface", config.ssh_cells)
        chain = chain_from_heights(h, config.ssh_radius, s.value, first_index=-len(h) // 2)
    else:
        w = config.half_width
        cells = np.arange(-w, w + 1)
        radii = np.full(cells.shape, config.bulk_radius)
        if s is Scenario.single_defect:
            radii[cells == 0] = config.defect_radius
        elif s is Scenario.two_defect:
            lo, hi = two_defect_cells(config.defect_separation)
            radii[(cells == lo) | (cells == hi)] = config.defect_radius
        chain = chain_from_heights(cells + 0.5, radii, s.value, first_index=-w)
    problems = validate_geometry(chain)
    if problems:
        raise GeometryError("; ".join(problems))
    return chain


def validate_geometry(chain: ResonatorChain) -> list[str]:
    """List every overlap pair and every wall-clearance violation."""
    out = []
    c = chain.centers
    r = chain.radii
    for i in range(len(c)):
        for j in range(i + 1, len(c)):
            d = math.dist(c[i], c[j])
            if d <= r[i] + r[j]:
                out.append(
                    f"overlap: disks {chain.disks[i].index} and {chain.disks[j].index} "
                    f"(distance {d:.6g} <= {r[i] + r[j]:.6g})"
                )
    for d in chain.disks:
        left = d.center[0] - d.radius - chain.wall
        right = chain.wall + 1.0 - (d.center[0] + d.radius)
        if min(left, right) <= 0:
            out.append(f"wall: disk {d.index} has clearance {min(left, right):.6g} <= 0")
    return out


def discretize(chain: ResonatorChain, panels_per_disk: int = 64) -> BoundaryMesh:
    p = int(panels_per_disk)
    if p < 8 or p % 2:
        raise GeometryError(f"panels_per_disk must be even and >= 8, got {panels_per_disk}")
    theta = 2 * np.pi * (np.arange(p) + 0.5) / p
    unit = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    c = chain.centers
    r = chain.radii
    nodes = (c[:, None, :] + r[:, None, None] * unit[None]).reshape(-1, 2)
    normals = np.broadcast_to(unit, (len(c), p, 2)).reshape(-1, 2).copy()
    weights = np.repeat(2 * np.pi * r / p, p)
    parent = np.repeat(np.arange(len(c)), p)
    angles = np.tile(theta, len(c))
    return BoundaryMesh(chain, p, nodes, normals, weights, parent, angles)
