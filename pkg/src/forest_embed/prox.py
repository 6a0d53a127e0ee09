"""Proximal operators of the forest penalty and of the l1 norm.

The prox of ``t * omega`` is computed exactly by block-thresholding each
node's group once, deepest nodes first. Groups of one tree are nested or
disjoint, which is what makes the single leaf-to-root pass exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forest import Forest, groups

# group norms below this are treated as zero
NORM_EPS = 1e-15


@dataclass(frozen=True)
class ProxPlan:
    """Precomputed node order and group members for ``forest_prox``.

    ``order`` lists nodes by non-increasing depth so every node comes after
    all of its descendants. ``group_ptr``/``group_members`` hold the groups
    in that order as one flat array (the layout the compiled kernels use).
    """

    forest: Forest
    order: np.ndarray = field(init=False)
    groups: tuple[np.ndarray, ...] = field(init=False, repr=False)
    group_ptr: np.ndarray = field(init=False, repr=False)
    group_members: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        f = self.forest
        # deepest first; ties by node index for a fixed, reproducible order
        order = np.lexsort((np.arange(f.size), -f.depth)).astype(np.int64)
        all_groups = groups(f)
        ordered = tuple(all_groups[n] for n in order)
        ptr = np.zeros(len(ordered) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(g) for g in ordered])
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "groups", tuple(all_groups))
        object.__setattr__(self, "group_ptr", ptr)
        object.__setattr__(self, "group_members", np.concatenate(ordered))

    @property
    def size(self) -> int:
        return self.forest.size


def make_plan(forest: Forest) -> ProxPlan:
    return ProxPlan(forest)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def group_threshold(a, group, t: float) -> np.ndarray:
    """Block soft-thresholding of ``a[group]``; other coordinates are copied.

    Zeroes the group when its l2 norm is at most ``t``, otherwise scales it
    by ``1 - t / norm``. Single-coordinate groups reduce to scalar soft
    thresholding and are computed that way.
    """
    out = np.array(a, dtype=np.float64, copy=True)
    _group_threshold_inplace(out, np.asarray(group, dtype=np.int64), t)
    return out


def _group_threshold_inplace(a: np.ndarray, group: np.ndarray, t: float) -> None:
    if len(group) == 1:
        i = group[0]
        x = a[i]
        ax = abs(x)
        if ax <= t or ax < NORM_EPS:
            a[i] = 0.0
        elif x > 0:
            a[i] = ax - t
        else:
            a[i] = -(ax - t)
        return
    sub = a[group]
    r = np.sqrt(np.dot(sub, sub))
    if r <= t or r < NORM_EPS:
        a[group] = 0.0
    else:
        a[group] = sub * (1.0 - t / r)


def forest_prox(plan: ProxPlan, a, t: float) -> np.ndarray:
    """argmin_u 0.5 * ||u - a||^2 + t * omega(u)."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (plan.size,):
        raise ValueError(f"expected vector of length {plan.size}, got shape {a.shape}")
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    out = a.copy()
    for node in plan.order:
        _group_threshold_inplace(out, plan.groups[node], t)
    return out


def l1_prox(a, t: float) -> np.ndarray:
    """Coordinate-wise soft thresholding, ``sign(x) * max(|x| - t, 0)``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    a = np.asarray(a, dtype=np.float64)
    out = np.abs(a) - t
    np.maximum(out, 0.0, out=out)
    res = np.where(a < 0, -out, out)
    res[res == 0] = 0.0  # no negative zeros
    return res


def prox_objective(forest: Forest, u, a, t: float) -> float:
    from .forest import omega
    u = np.asarray(u, dtype=np.float64)
    return 0.5 * float(np.sum((u - np.asarray(a)) ** 2)) + t * omega(forest, u)
