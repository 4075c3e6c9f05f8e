"""Regular lattice construction, node classification and boundary cells.

Nodes sit at ``(i*dh, j*dh)`` with the origin at the lower-left corner of the
outer rectangle.  Node arrays use shape ``(nx, ny)`` and flat indices
``i*ny + j``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

log = logging.getLogger(__name__)

# geometric tolerance in units of dh
GEOM_TOL = 1e-10
# clipped cells smaller than this (in dh**2) are dropped from the material
SLIVER_FRACTION = 1e-3

# D2Q5 link directions, index = population index alpha
DIRECTIONS = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]], dtype=np.int64)

OUTER_LABELS = ("left", "right", "bottom", "top")
HOLE_LABEL = "hole"


class NodeClass(IntEnum):
    OUTSIDE = 0
    INTERIOR = 1
    SECOND_ROW = 2
    BOUNDARY = 3


@dataclass(frozen=True)
class Hole:
    center: tuple[float, float]
    diameter: float

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter


@dataclass(frozen=True)
class Geometry:
    """Rectangle ``[0, width] x [0, height]`` minus circular holes."""

    width: float
    height: float
    holes: tuple[Hole, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("rectangle sides must be positive")
        object.__setattr__(self, "holes", tuple(self.holes))
        for k, h in enumerate(self.holes):
            cx, cy = h.center
            r = h.radius
            if r <= 0:
                raise ValueError(f"hole {k}: diameter must be positive")
            if cx - r <= 0 or cx + r >= self.width or cy - r <= 0 or cy + r >= self.height:
                raise ValueError(f"hole {k} touches or crosses the outer rectangle")
            for m, g in enumerate(self.holes[:k]):
                if math.dist(h.center, g.center) <= r + g.radius:
                    raise ValueError(f"holes {m} and {k} intersect")

    @property
    def area(self) -> float:
        return self.width * self.height - sum(math.pi * h.radius**2 for h in self.holes)


@dataclass(frozen=True)
class InternalSegment:
    neighbor: int
    length: float
    normal: tuple[float, float]


@dataclass(frozen=True)
class ExternalSegment:
    length: float
    normal: tuple[float, float]
    midpoint: tuple[float, float]
    label: str


@dataclass(frozen=True)
class BoundaryCell:
    node: int
    volume: float
    internal: tuple[InternalSegment, ...]
    external: tuple[ExternalSegment, ...]

    def closure(self) -> np.ndarray:
        """Sum of length * outward normal over the whole cell boundary."""
        s = np.zeros(2)
        for seg in self.internal:
            s += seg.length * np.asarray(seg.normal)
        for seg in self.external:
            s += seg.length * np.asarray(seg.normal)
        return s


@dataclass
class Lattice:
    geometry: Geometry
    nx: int
    ny: int
    spacing: float
    node_class: np.ndarray
    neighbors: np.ndarray
    cells: dict[int, BoundaryCell] = field(default_factory=dict, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def material(self) -> np.ndarray:
        return self.node_class != NodeClass.OUTSIDE

    @property
    def boundary(self) -> np.ndarray:
        return self.node_class == NodeClass.BOUNDARY

    @property
    def second_row(self) -> np.ndarray:
        return self.node_class == NodeClass.SECOND_ROW

    @property
    def interior(self) -> np.ndarray:
        return self.node_class == NodeClass.INTERIOR

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx) * self.spacing
        y = np.arange(self.ny) * self.spacing
        return np.meshgrid(x, y, indexing="ij")

    def flat(self, i: int, j: int) -> int:
        return i * self.ny + j

    def unflat(self, k: int) -> tuple[int, int]:
        return divmod(int(k), self.ny)

    def position(self, k: int) -> tuple[float, float]:
        i, j = self.unflat(k)
        return (i * self.spacing, j * self.spacing)

    def nearest_material_node(self, x: float, y: float) -> int:
        X, Y = self.coordinates()
        d2 = np.where(self.material, (X - x) ** 2 + (Y - y) ** 2, np.inf)
        return int(np.argmin(d2))

    def counts(self) -> dict[str, int]:
        return {c.name.lower(): int(np.sum(self.node_class == c)) for c in NodeClass}

    def describe(self) -> str:
        c = self.counts()
        lines = [
            f"lattice {self.nx} x {self.ny}, spacing {self.spacing:.6g}",
            "  " + ", ".join(f"{k}={v}" for k, v in c.items()),
            f"  boundary cells: {len(self.cells)}, "
            f"total cell volume {sum(b.volume for b in self.cells.values()):.6g}",
        ]
        return "\n".join(lines)


def _conforming_count(length: float, dh: float, what: str) -> int:
    n = length / dh
    m = round(n)
    if m < 1 or abs(n - m) > 1e-9 * max(1.0, n):
        raise ValueError(f"{what} {length} is not a multiple of spacing {dh}")
    return m + 1


def _neighbor_table(nx: int, ny: int) -> np.ndarray:
    nb = np.full((5, nx, ny), -1, dtype=np.int64)
    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    for a in range(5):
        di, dj = DIRECTIONS[a]
        ii, jj = I + di, J + dj
        ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
        nb[a][ok] = ii[ok] * ny + jj[ok]
    return nb


def _circle_crosses_square(x, y, half, hole: Hole) -> bool:
    cx, cy = hole.center
    r = hole.radius
    dx = max(abs(x - cx) - half, 0.0)
    dy = max(abs(y - cy) - half, 0.0)
    dmin = math.hypot(dx, dy)
    dmax = math.hypot(abs(x - cx) + half, abs(y - cy) + half)
    return dmin < r < dmax


def _square_circle_points(x, y, half, hole: Hole, tol) -> list[tuple[float, float]]:
    """Crossings of a circle with the boundary of an axis-aligned square (ccw order)."""
    cx, cy = hole.center
    r = hole.radius
    corners = [(x - half, y - half), (x + half, y - half), (x + half, y + half), (x - half, y + half)]
    pts: list[tuple[float, float]] = []
    for a in range(4):
        p, q = np.asarray(corners[a]), np.asarray(corners[(a + 1) % 4])
        d = q - p
        f = p - np.array([cx, cy])
        A = d @ d
        B = 2 * f @ d
        C = f @ f - r * r
        disc = B * B - 4 * A * C
        if disc < 0:
            continue
        sq = math.sqrt(disc)
        for s in sorted(((-B - sq) / (2 * A), (-B + sq) / (2 * A))):
            if -1e-14 <= s < 1.0 - 1e-14:
                pt = tuple(p + s * d)
                if not pts or math.dist(pts[-1], pt) > tol:
                    pts.append(pt)
    if len(pts) > 1 and math.dist(pts[0], pts[-1]) <= tol:
        pts.pop()
    return pts


def _clip(poly, labels, point, normal, label):
    """Keep the part of a convex polygon with (p - point) . normal >= 0.

    ``labels[k]`` tags the edge from vertex k to vertex k+1; edges created on the
    clip line receive ``label``.
    """
    out, out_lab = [], []
    n = len(poly)
    if n == 0:
        return out, out_lab
    side = [(p[0] - point[0]) * normal[0] + (p[1] - point[1]) * normal[1] for p in poly]
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        sp, sq = side[k], side[(k + 1) % n]
        if sp >= 0:
            out.append(p)
            if sq >= 0:
                out_lab.append(labels[k])
            else:
                s = sp / (sp - sq)
                out_lab.append(labels[k])
                out.append((p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])))
                out_lab.append(label)
        elif sq >= 0:
            s = sp / (sp - sq)
            out.append((p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])))
            out_lab.append(labels[k])
    return out, out_lab


# square side label -> population index of the neighbor across it
_SIDE_DIRECTION = {"+x": 1, "+y": 2, "-x": 3, "-y": 4}


def _cell_polygon(geometry: Geometry, x: float, y: float, dh: float):
    half = 0.5 * dh
    tol = GEOM_TOL * dh
    poly = [(x - half, y - half), (x + half, y - half), (x + half, y + half), (x - half, y + half)]
    labels = ["-y", "+x", "+y", "-x"]
    for point, normal, label in (
        ((0.0, 0.0), (1.0, 0.0), "left"),
        ((geometry.width, 0.0), (-1.0, 0.0), "right"),
        ((0.0, 0.0), (0.0, 1.0), "bottom"),
        ((0.0, geometry.height), (0.0, -1.0), "top"),
    ):
        poly, labels = _clip(poly, labels, point, normal, label)
    for k, hole in enumerate(geometry.holes):
        if not _circle_crosses_square(x, y, half, hole):
            continue
        pts = _square_circle_points(x, y, half, hole, tol)
        if len(pts) < 2:
            continue
        if len(pts) > 2:
            log.info("hole %d crosses the cell at (%g, %g) %d times; using the widest chord",
                     k, x, y, len(pts))
            pairs = [(a, b) for a in range(len(pts)) for b in range(a + 1, len(pts))]
            a, b = max(pairs, key=lambda ab: math.dist(pts[ab[0]], pts[ab[1]]))
            pts = [pts[a], pts[b]]
        p, q = np.asarray(pts[0]), np.asarray(pts[1])
        mid = 0.5 * (p + q)
        t = q - p
        nrm = np.array([-t[1], t[0]])
        nrm /= np.linalg.norm(nrm)
        if (mid - np.asarray(hole.center)) @ nrm < 0:
            nrm = -nrm
        poly, labels = _clip(poly, labels, tuple(mid), tuple(nrm), HOLE_LABEL)
    return poly, labels


def _polygon_area(poly) -> float:
    a = 0.0
    n = len(poly)
    for k in range(n):
        x0, y0 = poly[k]
        x1, y1 = poly[(k + 1) % n]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


def compute_boundary_cell(lattice: Lattice, geometry: Geometry, node: int) -> BoundaryCell:
    """Clip the node-centered square to the material and split its boundary.

    Square sides facing a material neighbor become internal segments; sides
    facing an outside node, the outer rectangle and hole chords are external.
    """
    i, j = lattice.unflat(node)
    if lattice.node_class[i, j] == NodeClass.OUTSIDE:
        raise ValueError(f"node {node} is outside the material")
    dh = lattice.spacing
    x, y = i * dh, j * dh
    poly, labels = _cell_polygon(geometry, x, y, dh)
    volume = _polygon_area(poly)
    if volume < SLIVER_FRACTION * dh * dh:
        raise ValueError(f"cell of node {node} has degenerate volume {volume:.3e}")
    internal: list[InternalSegment] = []
    external: list[ExternalSegment] = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        length = math.dist(p, q)
        if length <= GEOM_TOL * dh:
            continue
        normal = ((q[1] - p[1]) / length + 0.0, -(q[0] - p[0]) / length + 0.0)
        lab = labels[k]
        if lab in _SIDE_DIRECTION:
            nb = lattice.neighbors[_SIDE_DIRECTION[lab], i, j]
            if nb >= 0 and lattice.node_class.flat[nb] != NodeClass.OUTSIDE:
                internal.append(InternalSegment(int(nb), length, normal))
                continue
            # side faces a node dropped from the material: surface of the nearest hole
            lab = HOLE_LABEL
        mid = (0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]))
        external.append(ExternalSegment(length, normal, mid, lab))
    return BoundaryCell(node, volume, tuple(internal), tuple(external))


def _touches_boundary(geometry: Geometry, i, j, nx, ny, dh) -> bool:
    if i in (0, nx - 1) or j in (0, ny - 1):
        return True
    x, y = i * dh, j * dh
    return any(_circle_crosses_square(x, y, 0.5 * dh, h) for h in geometry.holes)


def build_lattice(geometry: Geometry, dh: float) -> Lattice:
    nx = _conforming_count(geometry.width, dh, "width")
    ny = _conforming_count(geometry.height, dh, "height")
    neighbors = _neighbor_table(nx, ny)
    X, Y = np.meshgrid(np.arange(nx) * dh, np.arange(ny) * dh, indexing="ij")
    material = np.ones((nx, ny), dtype=bool)
    for k, h in enumerate(geometry.holes):
        inside = (X - h.center[0]) ** 2 + (Y - h.center[1]) ** 2 < h.radius**2
        if not inside.any():
            raise ValueError(f"hole {k} is too small to remove any lattice node")
        material &= ~inside

    touches = np.zeros((nx, ny), dtype=bool)
    for i in range(nx):
        for j in range(ny):
            if material[i, j]:
                touches[i, j] = _touches_boundary(geometry, i, j, nx, ny, dh)

    node_class = np.zeros((nx, ny), dtype=np.int8)
    while True:
        node_class[:] = NodeClass.OUTSIDE
        node_class[material] = NodeClass.INTERIOR
        # a material node with a missing D2Q5 neighbor has to carry a cell
        missing = np.zeros_like(material)
        for a in range(1, 5):
            nb = neighbors[a]
            has = nb >= 0
            nb_mat = np.zeros_like(material)
            nb_mat[has] = material.flat[nb[has]]
            missing |= ~nb_mat
        boundary = material & (touches | missing)
        node_class[boundary] = NodeClass.BOUNDARY
        lattice = Lattice(geometry, nx, ny, dh, node_class.copy(), neighbors)
        slivers = []
        cells = {}
        for k in np.flatnonzero(boundary):
            try:
                cells[int(k)] = compute_boundary_cell(lattice, geometry, int(k))
            except ValueError:
                slivers.append(int(k))
        if not slivers:
            break
        if not geometry.holes:
            raise ValueError("degenerate cells on a hole-free rectangle")
        log.info("dropping %d sliver node(s) next to holes", len(slivers))
        material.flat[slivers] = False

    for a in range(1, 5):
        nb = neighbors[a]
        has = nb >= 0
        nb_bnd = np.zeros_like(material)
        nb_bnd[has] = boundary.flat[nb[has]]
        node_class[(node_class == NodeClass.INTERIOR) & nb_bnd] = NodeClass.SECOND_ROW
    lattice.node_class = node_class
    lattice.cells = cells
    return lattice


def boundary_cells(lattice: Lattice) -> dict[int, BoundaryCell]:
    return lattice.cells
