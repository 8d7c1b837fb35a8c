"""Domains, node generators and fill/separation distances."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

SEPARATION_GAMMA = 0.25
DEFAULT_RESOLUTION = 512


class Domain(enum.Enum):
    """The two test geometries: ``(0,1)^2`` and ``(-1/2,1/2)^2 minus [0,1/2]^2``."""

    UNIT_SQUARE = "square"
    LSHAPE = "lshape"

    @classmethod
    def parse(cls, name: str) -> "Domain":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown domain {name!r}; expected 'square' or 'lshape'") from None

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self is Domain.UNIT_SQUARE:
            return np.array([0.0, 0.0]), np.array([1.0, 1.0])
        return np.array([-0.5, -0.5]), np.array([0.5, 0.5])

    @property
    def diam(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @property
    def vertices(self) -> np.ndarray:
        """Boundary polygon, counter-clockwise, first vertex not repeated."""
        if self is Domain.UNIT_SQUARE:
            return np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        return np.array(
            [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.0], [0.0, 0.0], [0.0, 0.5], [-0.5, 0.5]],
            dtype=float,
        )

    @property
    def segments(self) -> np.ndarray:
        """Boundary edges as an array of shape ``(k, 2, 2)``."""
        v = self.vertices
        return np.stack([v, np.roll(v, -1, axis=0)], axis=1)

    def contains(self, x) -> np.ndarray:
        """Membership in the closed domain (the closure of the open set)."""
        x = np.atleast_2d(x)
        lo, hi = self.bbox
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        if self is Domain.LSHAPE:
            inside &= (x[:, 0] <= 0.0) | (x[:, 1] <= 0.0)
        return inside

    def dist_to_boundary(self, x) -> np.ndarray:
        """Euclidean distance to the polygonal boundary."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        best = np.full(len(x), np.inf)
        for a, b in self.segments:
            ab = b - a
            t = np.clip(((x - a) @ ab) / (ab @ ab), 0.0, 1.0)
            best = np.minimum(best, np.linalg.norm(x - (a + t[:, None] * ab), axis=1))
        return best

    def box_dist_to_boundary(self, lo, hi) -> np.ndarray:
        """Smallest boundary distance over each axis-parallel box ``[lo, hi]``.

        Exact for these domains: every edge is axis-parallel, so it is a
        degenerate box and the box-box gap is the distance.
        """
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        best = np.full(len(lo), np.inf)
        for a, b in self.segments:
            slo, shi = np.minimum(a, b), np.maximum(a, b)
            gap = np.maximum(0.0, np.maximum(slo - hi, lo - shi))
            best = np.minimum(best, np.hypot(gap[:, 0], gap[:, 1]))
        return best

    def sample_grid(self, resolution: int) -> np.ndarray:
        """``resolution x resolution`` tensor grid on the bounding box, restricted to the domain."""
        lo, hi = self.bbox
        t = np.arange(resolution) / (resolution - 1)
        gx = lo[0] + (hi[0] - lo[0]) * t
        gy = lo[1] + (hi[1] - lo[1]) * t
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        return pts[self.contains(pts)]


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Interpolation points together with their domain and spacing measures."""

    points: np.ndarray
    domain: Domain
    h: float
    q: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_points(cls, points, domain: Domain, resolution: int = DEFAULT_RESOLUTION, **meta):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (N, 2)")
        if not np.all(domain.contains(pts)):
            raise ValueError("points outside the closed domain")
        pts.setflags(write=False)
        h = fill_distance(pts, resolution, domain)
        q = separation_distance(pts) if len(pts) > 1 else np.inf
        return cls(pts, domain, h, q, dict(meta))


def fill_distance(nodes, resolution: int = DEFAULT_RESOLUTION, domain: Domain | None = None) -> float:
    """Sampled fill distance: largest nearest-node distance over a sample grid.

    ``nodes`` is a :class:`NodeSet` or a point array (then ``domain`` is
    required).
    """
    if isinstance(nodes, NodeSet):
        domain, pts = nodes.domain, nodes.points
    else:
        pts = np.asarray(nodes, dtype=float)
    if domain is None:
        raise ValueError("domain required for a bare point array")
    if len(pts) == 0:
        raise ValueError("empty node set")
    if resolution < 64:
        raise ValueError("resolution must be at least 64")
    dist, _ = cKDTree(pts).query(domain.sample_grid(resolution))
    return float(dist.max())


def separation_distance(nodes) -> float:
    """Exact minimum pairwise distance."""
    pts = nodes.points if isinstance(nodes, NodeSet) else np.asarray(nodes, dtype=float)
    if len(pts) < 2:
        raise ValueError("separation distance needs at least two nodes")
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(dist[:, 1].min())


def nearest_neighbor_distances(points) -> np.ndarray:
    dist, _ = cKDTree(points).query(points, k=2)
    return dist[:, 1]


def _grid_coords(lo: float, hi: float, n: int) -> np.ndarray:
    # lo + side*k/(n-1) keeps the midpoint exact (LShape reentrant edges)
    return lo + (hi - lo) * np.arange(n) / (n - 1)


def uniform_nodes(domain: Domain, n: int, resolution: int = DEFAULT_RESOLUTION) -> NodeSet:
    """Tensor grid of spacing ``side/(n-1)`` on the bounding box, clipped to the closed domain."""
    if n < 2:
        raise ValueError("grid parameter n must be at least 2")
    lo, hi = domain.bbox
    X, Y = np.meshgrid(_grid_coords(lo[0], hi[0], n), _grid_coords(lo[1], hi[1], n), indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[domain.contains(pts)]
    return NodeSet.from_points(pts, domain, resolution, mode="uniform", n=n)


def local_spacing(domain: Domain, x, h: float, h_min: float) -> np.ndarray:
    """Target spacing ``min{h_min + dist(x, boundary), h}``."""
    return np.minimum(h_min + domain.dist_to_boundary(x), h)


def boundary_concentrated_nodes(domain: Domain, h: float, h_min: float, delta: float = 1.0,
                                resolution: int = DEFAULT_RESOLUTION) -> NodeSet:
    """Nodes graded towards the boundary.

    A quadtree on the bounding square is refined until every cell of width
    ``w`` satisfies ``w / sqrt(2) <= delta * min{h_min + d_cell, h}``, where
    ``d_cell`` is the smallest boundary distance over the cell. The cell
    corners are the nodes, so every point of a cell is within ``w/sqrt(2)``
    of a node and the covering condition holds by construction. Nodes whose
    nearest neighbour is closer than ``SEPARATION_GAMMA`` times their local
    spacing are dropped (none are for these domains).
    """
    lo, hi = domain.bbox
    side = float(hi[0] - lo[0])
    if not (0 < h_min <= h):
        raise ValueError(f"need 0 < h_min <= h, got h_min={h_min}, h={h}")
    if h > domain.diam:
        raise ValueError("h exceeds the domain diameter")
    if not (0 < delta <= 1):
        raise ValueError("delta must lie in (0, 1]")

    corners = []
    cells = lo[None, :].copy()
    w = side
    while len(cells):
        centers = cells + 0.5 * w
        cells = cells[domain.contains(centers)]
        dmin = domain.box_dist_to_boundary(cells, cells + w)
        split = w / np.sqrt(2.0) > delta * np.minimum(h_min + dmin, h)
        leaves = cells[~split]
        for off in ((0, 0), (w, 0), (0, w), (w, w)):
            corners.append(leaves + off)
        parents = cells[split]
        w *= 0.5
        cells = np.concatenate([parents + off for off in ((0, 0), (w, 0), (0, w), (w, w))]) \
            if len(parents) else parents
    pts = np.unique(np.concatenate(corners), axis=0)
    pts = pts[domain.contains(pts)]

    nn = nearest_neighbor_distances(pts)
    keep = nn >= SEPARATION_GAMMA * local_spacing(domain, pts, h, h_min) * (1 - 1e-12)
    pts = pts[keep]
    return NodeSet.from_points(pts, domain, resolution, mode="bdry", h_param=h, hmin=h_min, delta=delta)


def covering_violations(nodes: NodeSet, samples, h: float, h_min: float, delta: float = 1.0) -> int:
    """Number of sample points with no node within ``delta * min{h_min + dist, h}``."""
    samples = np.atleast_2d(samples)
    dist, _ = cKDTree(nodes.points).query(samples)
    bound = delta * local_spacing(nodes.domain, samples, h, h_min)
    return int(np.count_nonzero(dist > bound * (1 + 1e-12)))


def random_domain_points(domain: Domain, n: int, rng) -> np.ndarray:
    """``n`` uniformly distributed points in the domain (rejection sampling)."""
    lo, hi = domain.bbox
    out = []
    got = 0
    while got < n:
        x = rng.uniform(lo, hi, size=(2 * (n - got) + 16, 2))
        x = x[domain.contains(x)]
        out.append(x)
        got += len(x)
    return np.concatenate(out)[:n]


def write_nodes(path, nodes: NodeSet) -> None:
    """Plain-text node file: ``x y`` per line at 17 significant digits."""
    lines = [f"# domain: {nodes.domain.value}"]
    for key in ("mode", "n", "h_param", "hmin"):
        if key in nodes.meta:
            lines.append(f"# {key}: {nodes.meta[key]!r}")
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in nodes.points)
    Path(path).write_text("\n".join(lines) + "\n")


def read_points(path) -> tuple[np.ndarray, dict]:
    """Read a node file; returns the points and the ``# key: value`` header fields."""
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, val = s[1:].partition(":")
            if sep:
                header[key.strip()] = val.strip()
            continue
        a, b = s.split(" ")
        rows.append((float(a), float(b)))
    return np.array(rows, dtype=np.float64).reshape(-1, 2), header


def read_nodes(path, domain: Domain | None = None, resolution: int = DEFAULT_RESOLUTION) -> NodeSet:
    pts, header = read_points(path)
    if domain is None:
        if "domain" in header:
            domain = Domain.parse(header["domain"])
        else:
            domain = Domain.LSHAPE if np.any(pts < 0) else Domain.UNIT_SQUARE
    meta = {"mode": header.get("mode", "'file'").strip("'")}
    return NodeSet.from_points(pts, domain, resolution, **meta)
