"""
Recovering a planted factorization
==================================

Plant a dictionary and rooted-sparse codes, hide 60% of the product and
let the stochastic proximal trainer fit the rest.
"""

import numpy as np

from forest_embed import TrainConfig, train
from forest_embed.synthetic import planted_problem
from forest_embed.trainer import init_factors, nonzero_fraction

pmi, forest, X, mask = planted_problem(seed=0)
print(f"{pmi.nnz} observed entries of a {X.shape[0]}x{X.shape[1]} matrix, M = {forest.size}")

cfg = TrainConfig(lam=0.01, eta0=0.05, iterations=200_000, seed=0)
D, A, report = train(pmi, forest, cfg)

# masked error before and after
D0, At0 = init_factors(*X.shape, forest.size, cfg, np.random.default_rng(cfg.seed))
before = np.sum(((X - D0 @ At0.T) * mask) ** 2)
after = np.sum(((X - D @ A) * mask) ** 2)
print(f"masked squared error {before:.1f} -> {after:.2f} ({1 - after / before:.1%} reduction)")

for step, value in report.objective_trace[::20]:
    print(f"  batch {step:>7}: objective {value:10.3f}")

# A stronger penalty trades fit for exact zeros.
for lam in (0.01, 0.2, 0.5):
    _, A, _ = train(pmi, forest, TrainConfig(lam=lam, iterations=50_000, seed=1))
    print(f"lambda {lam:<5} nonzero fraction {nonzero_fraction(A):.2f}")
