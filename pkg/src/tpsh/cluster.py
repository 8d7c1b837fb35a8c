"""Geometric cluster trees and admissible block partitions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LEAF_SIZE = 32
DEFAULT_ETA = 2.0


@dataclass(eq=False)
class Cluster:
    """Contiguous index range ``[start, stop)`` of the permuted points."""

    start: int
    stop: int
    lo: np.ndarray
    hi: np.ndarray
    level: int = 0
    children: list["Cluster"] = field(default_factory=list)
    id: int = -1

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def diam(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def parts(self) -> list["Cluster"]:
        """Children, or ``[self]`` for a leaf."""
        return self.children or [self]

    def __repr__(self):
        return f"Cluster({self.start}:{self.stop}, level={self.level})"


def box_dist(a: Cluster, b: Cluster) -> float:
    gap = np.maximum(0.0, np.maximum(a.lo - b.hi, b.lo - a.hi))
    return float(np.linalg.norm(gap))


def is_admissible(a: Cluster, b: Cluster, eta: float) -> bool:
    dist = box_dist(a, b)
    return dist > 0.0 and max(a.diam, b.diam) <= eta * dist


class ClusterTree:
    """Binary tree from recursive midpoint bisection of bounding boxes.

    ``perm[k]`` is the original index of the point at position ``k``; every
    cluster owns a contiguous range of positions.
    """

    def __init__(self, points, leaf_size: int = DEFAULT_LEAF_SIZE):
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        pts = np.asarray(points, dtype=float)
        self.leaf_size = leaf_size
        self.perm = np.arange(len(pts))
        self.clusters: list[Cluster] = []
        self.root = self._build(pts, 0, len(pts), 0)
        self.points = pts[self.perm]

    def _build(self, pts, start, stop, level):
        idx = self.perm[start:stop]
        x = pts[idx]
        if len(x):
            lo, hi = x.min(axis=0), x.max(axis=0)
        else:
            lo = hi = np.zeros(pts.shape[1])
        node = Cluster(start, stop, lo, hi, level, id=len(self.clusters))
        self.clusters.append(node)
        if stop - start <= self.leaf_size:
            return node
        axis = int(np.argmax(hi - lo))
        mid = 0.5 * (lo[axis] + hi[axis])
        left = x[:, axis] < mid
        nleft = int(np.count_nonzero(left))
        if nleft == 0 or nleft == len(x):
            return node
        self.perm[start:stop] = np.concatenate([idx[left], idx[~left]])
        node.children = [
            self._build(pts, start, start + nleft, level + 1),
            self._build(pts, start + nleft, stop, level + 1),
        ]
        return node

    def __len__(self):
        return len(self.perm)

    def leaves(self):
        return [c for c in self.clusters if c.is_leaf]

    @property
    def depth(self) -> int:
        return max(c.level for c in self.clusters)


def build_cluster_tree(points, leaf_size: int = DEFAULT_LEAF_SIZE) -> ClusterTree:
    pts = points.points if hasattr(points, "points") else points
    return ClusterTree(pts, leaf_size)


@dataclass(eq=False)
class BlockNode:
    """Node of the block tree over ``rows x cols``.

    ``kind`` is ``"admissible"``, ``"dense"`` or ``"split"``; a split node
    holds ``children[i][j]`` for ``rows.parts()[i] x cols.parts()[j]``.
    """

    rows: Cluster
    cols: Cluster
    kind: str
    children: list[list["BlockNode"]] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return self.kind != "split"

    def leaves(self):
        stack = [self]
        while stack:
            b = stack.pop()
            if b.is_leaf:
                yield b
            else:
                for row in reversed(b.children):
                    stack.extend(reversed(row))


class BlockTree:
    """Admissibility-driven partition of ``I x I`` for a cluster tree."""

    def __init__(self, tree: ClusterTree, eta: float = DEFAULT_ETA):
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.tree = tree
        self.eta = eta
        self.root = self._build(tree.root, tree.root)

    def _build(self, s: Cluster, t: Cluster) -> BlockNode:
        if is_admissible(s, t, self.eta):
            return BlockNode(s, t, "admissible")
        if s.is_leaf and t.is_leaf:
            return BlockNode(s, t, "dense")
        node = BlockNode(s, t, "split")
        node.children = [[self._build(a, b) for b in t.parts()] for a in s.parts()]
        return node

    def leaves(self):
        return list(self.root.leaves())

    def coverage(self) -> int:
        return sum(b.rows.size * b.cols.size for b in self.leaves())

    def admissible_fraction(self) -> float:
        n = len(self.tree)
        adm = sum(b.rows.size * b.cols.size for b in self.leaves() if b.kind == "admissible")
        return adm / float(n * n) if n else 0.0


def build_block_tree(tree: ClusterTree, eta: float = DEFAULT_ETA) -> BlockTree:
    return BlockTree(tree, eta)
