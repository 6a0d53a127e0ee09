"""Regularization forests over latent dimensions and the forest penalty.

A forest is stored as a parent array: ``parent[i]`` is the parent of node
``i`` or ``-1`` for a root. Nodes are 0-based: in the default 13-node tree
``descendants(1) == [2, 3]``, which is nodes 3 and 4 in 1-based numbering.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# one root, four internal children, two leaves under each child (preorder)
DEFAULT_TREE = (-1, 0, 1, 1, 0, 4, 4, 0, 7, 7, 0, 10, 10)
DEFAULT_TREE_SIZE = len(DEFAULT_TREE)


@dataclass(frozen=True)
class Forest:
    parent: np.ndarray
    children: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    depth: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64)
        if parent.ndim != 1 or parent.size == 0:
            raise ValueError("forest must have at least one node")
        M = parent.size
        if np.any((parent < -1) | (parent >= M)):
            bad = int(np.flatnonzero((parent < -1) | (parent >= M))[0])
            raise ValueError(f"parent index out of range at node {bad}: {parent[bad]}")
        depth = np.full(M, -1, dtype=np.int64)
        for start in range(M):
            path = []
            node = start
            while node != -1 and depth[node] < 0:
                if node in path:
                    raise ValueError(f"cycle detected through node {node}")
                path.append(node)
                node = int(parent[node])
            base = -1 if node == -1 else depth[node]
            for k, n in enumerate(reversed(path), 1):
                depth[n] = base + k
        children = [[] for _ in range(M)]
        for i, p in enumerate(parent.tolist()):
            if p >= 0:
                children[p].append(i)
        parent.setflags(write=False)
        depth.setflags(write=False)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "children", tuple(tuple(c) for c in children))
        object.__setattr__(self, "depth", depth)

    @property
    def size(self) -> int:
        return int(self.parent.size)

    M = size

    @property
    def roots(self) -> list[int]:
        return np.flatnonzero(self.parent == -1).tolist()

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def tree_index(self) -> np.ndarray:
        """Per-node index of the tree it belongs to, trees numbered by root order."""
        root_rank = {r: k for k, r in enumerate(self.roots)}
        out = np.empty(self.size, dtype=np.int64)
        for i in range(self.size):
            node = i
            while self.parent[node] != -1:
                node = int(self.parent[node])
            out[i] = root_rank[node]
        return out

    def is_flat(self) -> bool:
        return bool(np.all(self.parent == -1))

    def to_text(self) -> str:
        return " ".join(str(int(p)) for p in self.parent) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "Forest":
        with open(path, encoding="utf-8") as fh:
            return parse_forest(fh.read())


def parse_forest(text: str) -> Forest:
    """Parse a whitespace-separated parent array (``-1`` marks a root)."""
    fields = text.replace("−", "-").split()
    if not fields:
        raise ValueError("empty forest specification")
    try:
        parent = [int(f) for f in fields]
    except ValueError as exc:
        raise ValueError(f"forest entries must be integers: {exc}") from None
    return Forest(np.array(parent))


def build_default_forest(num_trees: int = 4) -> Forest:
    """``num_trees`` disjoint copies of the 13-node default tree."""
    if num_trees < 1:
        raise ValueError("num_trees must be >= 1")
    base = np.array(DEFAULT_TREE)
    parts = []
    for k in range(num_trees):
        offset = k * DEFAULT_TREE_SIZE
        parts.append(np.where(base < 0, -1, base + offset))
    return Forest(np.concatenate(parts))


def flat_forest(size: int) -> Forest:
    """All-singleton forest; its penalty is the plain l1 norm."""
    return Forest(np.full(size, -1))


def descendants(forest: Forest, node: int) -> list[int]:
    """Strict descendants of ``node`` in preorder."""
    if not 0 <= node < forest.size:
        raise IndexError(f"node {node} out of range for forest of size {forest.size}")
    out = []
    stack = list(reversed(forest.children[node]))
    while stack:
        n = stack.pop()
        out.append(n)
        stack.extend(reversed(forest.children[n]))
    return out


def groups(forest: Forest) -> list[np.ndarray]:
    """Group of each node: the node itself followed by its descendants."""
    return [np.array([i] + descendants(forest, i), dtype=np.int64) for i in range(forest.size)]


def omega(forest: Forest, a) -> float:
    """Sum over nodes of the l2 norm of the node's group."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (forest.size,):
        raise ValueError(f"expected vector of length {forest.size}, got shape {a.shape}")
    return float(sum(np.linalg.norm(a[g]) for g in groups(forest)))


def omega_columns(forest: Forest, A_rows) -> np.ndarray:
    """Penalty of every row of ``A_rows`` (shape ``(n, M)``), vectorized over rows."""
    A_rows = np.asarray(A_rows, dtype=np.float64)
    if A_rows.ndim != 2 or A_rows.shape[1] != forest.size:
        raise ValueError(f"expected array of shape (n, {forest.size}), got {A_rows.shape}")
    total = np.zeros(A_rows.shape[0])
    for g in groups(forest):
        total += np.sqrt(np.einsum("ij,ij->i", A_rows[:, g], A_rows[:, g]))
    return total
