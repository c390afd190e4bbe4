"""AP and UE geometry generation for the deployment variants under study.

All placement routines are pure functions of their configuration and a seeded
numpy Generator, so identical inputs reproduce identical topologies and drops
can be generated concurrently without shared state.
"""

from __future__ import annotations

from dataclasses import dataclass
from io import StringIO

import numpy as np

from .errors import InfeasibleGeometry

DEFAULT_AP_HEIGHTS = (25.0, 35.0, 45.0)
DEFAULT_UE_HEIGHT = 1.5
# ~5 wavelengths at 3.5 GHz; keeps co-located antennas decorrelated
DEFAULT_MIN_SPACING = 0.43

# Relative pad on the antenna pitch so that pairwise separations stay
# >= min_spacing even after floating-point rounding of the positions.
_SPACING_PAD = 1.0 + 1e-9

_ANCHOR_RETRIES = 200
_AZIMUTH_RETRIES = 50


@dataclass(frozen=True)
class AreaSpec:
    """Rectangular service area with the allowed AP heights and UE height."""

    width: float = 200.0
    depth: float = 200.0
    ap_heights: tuple[float, ...] = DEFAULT_AP_HEIGHTS
    ue_height: float = DEFAULT_UE_HEIGHT

    def __post_init__(self) -> None:
        if self.width <= 0 or self.depth <= 0:
            raise ValueError("area dimensions must be positive")
        if self.ue_height <= 0 or any(h <= 0 for h in self.ap_heights):
            raise ValueError("all heights must be positive")
        if not self.ap_heights:
            raise ValueError("at least one AP height is required")
        object.__setattr__(self, "ap_heights", tuple(float(h) for h in self.ap_heights))


@dataclass
class ApLayout:
    """Antenna positions of L APs with N antennas each (M = L*N rows)."""

    antenna_positions: np.ndarray  # (M, 3)
    ap_index: np.ndarray  # (M,) int, antenna -> AP
    anchors: np.ndarray  # (L, 3) AP reference points
    mode: str
    min_spacing: float

    @property
    def L(self) -> int:
        return self.anchors.shape[0]

    @property
    def M(self) -> int:
        return self.antenna_positions.shape[0]

    @property
    def N(self) -> int:
        return self.M // self.L


@dataclass
class UeLayout:
    """UE positions with per-UE indoor/outdoor tags."""

    positions: np.ndarray  # (K, 3)
    indoor: np.ndarray  # (K,) bool
    mode: str

    @property
    def K(self) -> int:
        return self.positions.shape[0]


@dataclass
class Topology:
    """Complete deployment: area, AP antennas, and UEs."""

    area: AreaSpec
    aps: ApLayout
    ues: UeLayout

    @property
    def M(self) -> int:
        return self.aps.M

    @property
    def L(self) -> int:
        return self.aps.L

    @property
    def N(self) -> int:
        return self.aps.N

    @property
    def K(self) -> int:
        return self.ues.K

    def validate(self) -> None:
        """Check bookkeeping invariants; raises AssertionError on violation."""
        aps, area = self.aps, self.area
        assert aps.M == aps.L * aps.N
        counts = np.bincount(aps.ap_index, minlength=aps.L)
        assert np.all(counts == aps.N)
        pos = aps.antenna_positions
        assert np.all(pos[:, 0] >= 0) and np.all(pos[:, 0] <= area.width)
        assert np.all(pos[:, 1] >= 0) and np.all(pos[:, 1] <= area.depth)
        for l in range(aps.L):
            rows = pos[aps.ap_index == l]
            for i in range(len(rows)):
                d = np.linalg.norm(rows[i + 1 :] - rows[i], axis=1)
                assert np.all(d >= aps.min_spacing)
        upos = self.ues.positions
        assert np.all(upos[:, 0] >= 0) and np.all(upos[:, 0] <= area.width)
        assert np.all(upos[:, 1] >= 0) and np.all(upos[:, 1] <= area.depth)


def grid_shape(L: int) -> tuple[int, int]:
    """Squarest factorization L = a*b with a >= b; a counts cells along width."""
    best = (L, 1)
    for b in range(1, int(np.sqrt(L)) + 1):
        if L % b == 0:
            best = (L // b, b)
    return best


def place_aps(
    area: AreaSpec,
    L: int,
    N: int,
    mode: str = "random",
    min_spacing: float = DEFAULT_MIN_SPACING,
    rng: np.random.Generator | None = None,
) -> ApLayout:
    """Place L APs of N antennas each, either uniformly at random or on a grid.

    Each AP's antennas form a horizontal uniform linear array through the AP
    anchor with a random azimuth; the azimuth (and, failing that, the anchor)
    is redrawn until every antenna lies inside the area.
    """
    if L < 1 or N < 1:
        raise ValueError("L and N must be >= 1")
    if min_spacing <= 0:
        raise ValueError("min_spacing must be positive")
    if mode not in ("random", "grid"):
        raise ValueError(f"unknown AP placement mode: {mode!r}")
    rng = np.random.default_rng() if rng is None else rng

    pitch = min_spacing * _SPACING_PAD
    span = (N - 1) * pitch
    if span > np.hypot(area.width, area.depth):
        raise InfeasibleGeometry(
            f"array of {N} antennas at {min_spacing} m pitch does not fit "
            f"in a {area.width}x{area.depth} m area"
        )

    heights = np.asarray(area.ap_heights)
    if mode == "grid":
        cells_x, cells_y = grid_shape(L)
        cell_w = area.width / cells_x
        cell_d = area.depth / cells_y

    offsets = (np.arange(N) - (N - 1) / 2.0) * pitch
    anchors = np.empty((L, 3))
    positions = np.empty((L * N, 3))

    for l in range(L):
        placed = False
        for _ in range(_ANCHOR_RETRIES):
            if mode == "grid":
                cx, cy = l % cells_x, l // cells_x
                x = (cx + rng.uniform()) * cell_w
                y = (cy + rng.uniform()) * cell_d
            else:
                x = rng.uniform(0.0, area.width)
                y = rng.uniform(0.0, area.depth)
            z = heights[rng.integers(len(heights))]
            anchor = np.array([x, y, z])
            for _ in range(_AZIMUTH_RETRIES):
                theta = rng.uniform(0.0, 2.0 * np.pi)
                direction = np.array([np.cos(theta), np.sin(theta), 0.0])
                cand = anchor[None, :] + offsets[:, None] * direction[None, :]
                if (
                    cand[:, 0].min() >= 0.0
                    and cand[:, 0].max() <= area.width
                    and cand[:, 1].min() >= 0.0
                    and cand[:, 1].max() <= area.depth
                ):
                    anchors[l] = anchor
                    positions[l * N : (l + 1) * N] = cand
                    placed = True
                    break
            if placed:
                break
        if not placed:
            raise InfeasibleGeometry(
                f"could not fit the {N}-antenna array of AP {l} inside the area"
            )

    ap_index = np.repeat(np.arange(L), N)
    return ApLayout(positions, ap_index, anchors, mode, min_spacing)


def place_ues(
    area: AreaSpec,
    K: int,
    mode: str = "spread",
    cluster_radius: float = 15.0,
    indoor_fraction: float = 0.0,
    rng: np.random.Generator | None = None,
) -> UeLayout:
    """Place K UEs either spread uniformly over the area or clustered in a disc."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0.0 <= indoor_fraction <= 1.0:
        raise ValueError("indoor_fraction must be in [0, 1]")
    if mode not in ("spread", "clustered"):
        raise ValueError(f"unknown UE placement mode: {mode!r}")
    rng = np.random.default_rng() if rng is None else rng

    xy = np.empty((K, 2))
    if mode == "spread":
        xy[:, 0] = rng.uniform(0.0, area.width, K)
        xy[:, 1] = rng.uniform(0.0, area.depth, K)
    else:
        if cluster_radius <= 0:
            raise ValueError("cluster_radius must be positive for clustered mode")
        center = np.array([rng.uniform(0.0, area.width), rng.uniform(0.0, area.depth)])
        for k in range(K):
            for _ in range(10_000):
                r = cluster_radius * np.sqrt(rng.uniform())
                theta = rng.uniform(0.0, 2.0 * np.pi)
                p = center + r * np.array([np.cos(theta), np.sin(theta)])
                if 0.0 <= p[0] <= area.width and 0.0 <= p[1] <= area.depth:
                    xy[k] = p
                    break
            else:  # pragma: no cover - center is inside the area
                raise InfeasibleGeometry("cluster disc does not intersect the area")

    indoor = rng.uniform(size=K) < indoor_fraction
    positions = np.column_stack([xy, np.full(K, area.ue_height)])
    return UeLayout(positions, indoor, mode)


def make_topology(
    area: AreaSpec,
    L: int,
    N: int,
    K: int,
    ap_mode: str = "random",
    ue_mode: str = "spread",
    cluster_radius: float = 15.0,
    indoor_fraction: float = 0.0,
    min_spacing: float = DEFAULT_MIN_SPACING,
    rng: np.random.Generator | None = None,
) -> Topology:
    """Generate a full deployment (APs first, then UEs, from the same stream)."""
    rng = np.random.default_rng() if rng is None else rng
    aps = place_aps(area, L, N, ap_mode, min_spacing, rng)
    ues = place_ues(area, K, ue_mode, cluster_radius, indoor_fraction, rng)
    topo = Topology(area, aps, ues)
    topo.validate()
    return topo


def link_distance(a, b) -> float:
    """3-D Euclidean distance between two positions."""
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def link_distance_matrix(points_a: np.ndarray, points_b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances, shape (len(a), len(b))."""
    diff = points_a[:, None, :] - points_b[None, :, :]
    return np.linalg.norm(diff, axis=2)


def topology_to_table(topology: Topology) -> str:
    """Serialize a topology to plain CSV text (one row per antenna and UE).

    Columns: kind, id, x, y, z, tag (AP index for antennas, outdoor/indoor
    for UEs). Intended for reproducibility records and external plotting.
    """
    out = StringIO()
    out.write("kind,id,x,y,z,tag\n")
    aps = topology.aps
    for m in range(aps.M):
        x, y, z = (float(v) for v in aps.antenna_positions[m])
        out.write(f"antenna,{m},{x!r},{y!r},{z!r},{int(aps.ap_index[m])}\n")
    ues = topology.ues
    for k in range(ues.K):
        x, y, z = (float(v) for v in ues.positions[k])
        tag = "indoor" if ues.indoor[k] else "outdoor"
        out.write(f"ue,{k},{x!r},{y!r},{z!r},{tag}\n")
    return out.getvalue()
