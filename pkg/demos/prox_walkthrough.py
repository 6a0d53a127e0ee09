"""
Tree-structured group lasso by hand
===================================

Build a small forest, look at its groups, and watch the proximal operator
zero out whole subtrees.
"""

import numpy as np

from forest_embed import build_default_forest, descendants, omega, parse_forest
from forest_embed.prox import ProxPlan, forest_prox, group_threshold

# One default tree: a root, four children, two leaves under each child.
tree = build_default_forest(1)
print("parents:", tree.parent.tolist())
print("node 1 covers", [1] + descendants(tree, 1))

# The penalty sums one l2 norm per node over the node and everything below it,
# so coordinates near the root are counted many times.
a = np.ones(13)
print("omega(ones) =", round(omega(tree, a), 4))

# A two-node chain shows why the order matters.
# Thresholding the leaf group first, then the root group, gives the prox.
chain = parse_forest("-1 0")
x = np.array([3.0, 4.0])
print("prox of (3, 4):", forest_prox(ProxPlan(chain), x, 1.0))
# Going root first gives something else.
print("root first     :", group_threshold(group_threshold(x, [0, 1], 1.0), [1], 1.0))

# Larger thresholds prune more. A zero never sits above a nonzero.
rng = np.random.default_rng(0)
v = rng.normal(size=13)
plan = ProxPlan(tree)
for t in (0.05, 0.3, 0.8, 2.0):
    u = forest_prox(plan, v, t)
    pattern = "".join("x" if c else "." for c in u != 0)
    print(f"t={t:<4} {pattern}")
