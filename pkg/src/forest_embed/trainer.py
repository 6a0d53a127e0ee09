"""Stochastic proximal training of the dictionary and code matrices.

Each step samples nonzero PMI entries ``x[c, v]`` (weighted by ``|x|``),
takes a gradient step on row ``d_c`` and code ``a_v`` of

    sum (x[c, v] - d_c . a_v)^2 + tau * sum_m ||d_m||^2

and then applies the forest prox to ``a_v``. Entries within a batch share
no row and no column, so a batch can be applied by several threads without
locks.
"""
from __future__ import annotations

import json
import logging
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from . import _kernels
from .corpus import PmiMatrix
from .forest import Forest, omega_columns
from .prox import ProxPlan

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"HSCK1"
_CHUNK_BATCHES = 256


class DivergenceError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lam: float = 0.1
    tau: float = 1e-5
    eta0: float = 0.05
    iterations: int = 100_000
    batch_size: int = 1
    seed: int = 0
    sampling_mode: Literal["weighted", "uniform-scaled"] = "weighted"
    prox_threshold_mode: Literal["scaled", "fixed"] = "scaled"
    init_scale: float = 0.1
    threads: int = 1
    checkpoint_path: str | None = None

    def __post_init__(self):
        if min(self.lam, self.tau, self.eta0) < 0:
            raise ValueError("lam, tau and eta0 must be nonnegative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.sampling_mode not in ("weighted", "uniform-scaled"):
            raise ValueError(f"unknown sampling mode {self.sampling_mode!r}")
        if self.prox_threshold_mode not in ("scaled", "fixed"):
            raise ValueError(f"unknown prox threshold mode {self.prox_threshold_mode!r}")

    def learning_rate(self, t: int) -> float:
        return self.eta0 / (1.0 + t / self.iterations)

    def threshold(self, eta: float) -> float:
        return eta * self.lam if self.prox_threshold_mode == "scaled" else self.lam


@dataclass
class TrainReport:
    iterations: int
    objective_trace: list = field(default_factory=list)
    nonzero_fraction: float = float("nan")
    wall_seconds: float = 0.0
    entries_updated: int = 0
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")


@dataclass(frozen=True)
class EntrySampler:
    """Alias table over the stored entries of a PMI matrix.

    In ``weighted`` mode entries are drawn with probability ``|x| / sum|x|``
    and ``scales`` is 1. In ``uniform-scaled`` mode draws are uniform and
    ``scales[e] = |x_e| * nnz / sum|x|`` reweights the gradient so the
    expected step is unchanged.
    """

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    prob: np.ndarray
    alias: np.ndarray
    scales: np.ndarray
    total_weight: float
    mode: str = "weighted"

    def probabilities(self) -> np.ndarray:
        """Per-entry selection probability implied by the alias table."""
        n = len(self.prob)
        p = self.prob.copy()
        np.add.at(p, self.alias, 1.0 - self.prob)
        return p / n

    def draw(self, rng, size: int) -> np.ndarray:
        u = rng.random((size, 2))
        idx = np.minimum((u[:, 0] * len(self.prob)).astype(np.int64), len(self.prob) - 1)
        return np.where(u[:, 1] < self.prob[idx], idx, self.alias[idx])


def build_sampler(pmi: PmiMatrix, mode: str = "weighted") -> EntrySampler:
    if pmi.nnz == 0:
        raise ValueError("cannot sample from an empty matrix")
    weights = np.abs(pmi.values)
    total = float(weights.sum())
    if mode == "weighted":
        prob, alias = _kernels.build_alias(weights)
        scales = np.ones(pmi.nnz)
    elif mode == "uniform-scaled":
        prob, alias = np.ones(pmi.nnz), np.arange(pmi.nnz)
        scales = weights * pmi.nnz / total
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return EntrySampler(pmi.rows, pmi.cols, pmi.values, prob, alias, scales, total, mode)


def sample_batch(sampler: EntrySampler, batch_size: int, rng) -> np.ndarray:
    """Entry ids of a batch with pairwise distinct rows and columns.

    Draws ``10 * batch_size`` candidates and rejects conflicting ones, so
    the batch may come back short when conflicts are frequent.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    uniforms = rng.random((10 * batch_size, 2))
    row_mark = np.full(int(sampler.rows.max()) + 1, -1, dtype=np.int64)
    col_mark = np.full(int(sampler.cols.max()) + 1, -1, dtype=np.int64)
    out = np.empty(batch_size, dtype=np.int64)
    n = _kernels.draw_batch(sampler.prob, sampler.alias, sampler.rows, sampler.cols, uniforms,
                            batch_size, row_mark, col_mark, 0, out)
    return out[:n].copy()


def sgd_step(D, A, entry, eta: float, config: TrainConfig, plan: ProxPlan | None,
             scale: float = 1.0):
    """Apply one update for ``entry = (c, v, x)`` in place and return ``(d_c, a_v)``.

    ``A`` is the ``M x V`` code matrix. With ``plan=None`` the l1 prox is
    used instead of the forest prox.
    """
    c, v, x = int(entry[0]), int(entry[1]), float(entry[2])
    At = np.ascontiguousarray(A.T)
    ptr, members = _plan_arrays(plan, D.shape[1])
    ok = _kernels.update_entry(D, At, c, v, x, scale, eta, config.tau, config.threshold(eta),
                               ptr, members, plan is None)
    if not np.shares_memory(At, A):
        A[:, v] = At[v]
    if not ok:
        raise DivergenceError("divergence; reduce eta0")
    return D[c].copy(), A[:, v].copy()


def objective(pmi: PmiMatrix, D, A, forest: Forest, lam: float, tau: float) -> float:
    """Squared loss on stored entries + lam * sum_v omega(a_v) + tau * ||D||_F^2."""
    D = np.ascontiguousarray(D, dtype=np.float64)
    At = np.ascontiguousarray(np.asarray(A, dtype=np.float64).T)
    loss = _kernels.squared_loss(D, At, pmi.rows, pmi.cols, pmi.values)
    penalty = lam * float(omega_columns(forest, At).sum()) if lam else 0.0
    return loss + penalty + tau * float(np.sum(D * D))


def nonzero_fraction(A) -> float:
    A = np.asarray(A)
    return float(np.count_nonzero(A)) / A.size if A.size else 0.0


def init_factors(C: int, V: int, M: int, config: TrainConfig, rng):
    s = config.init_scale
    D = rng.uniform(-s, s, size=(C, M))
    A = rng.uniform(-s, s, size=(M, V))
    return D, np.ascontiguousarray(A.T)


def _plan_arrays(plan: ProxPlan | None, M: int):
    if plan is None:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if plan.size != M:
        raise ValueError(f"forest has {plan.size} nodes but factors have {M} dimensions")
    return plan.group_ptr, plan.group_members


def train(pmi: PmiMatrix, forest: Forest, config: TrainConfig, *, penalty: str = "forest",
          record_batches: bool = False, init=None):
    """Learn ``D`` (C x M) and ``A`` (M x V) from a PMI matrix.

    ``penalty="l1"`` runs the plain sparse-coding baseline (the forest then
    only fixes M). ``iterations`` counts batches; the learning rate
    ``eta0 / (1 + t / iterations)`` is shared by the entries of batch ``t``.

    Returns ``(D, A, report)``; with ``record_batches=True`` a list of the
    sampled entry ids of every batch is returned as a fourth element.
    """
    if pmi.nnz == 0:
        raise ValueError("PMI matrix has no entries")
    if penalty not in ("forest", "l1"):
        raise ValueError(f"unknown penalty {penalty!r}")
    M = forest.size
    C, V = pmi.shape
    T = config.iterations
    rng = np.random.default_rng(config.seed)
    if init is None:
        D, At = init_factors(C, V, M, config, rng)
    else:
        D = np.array(init[0], dtype=np.float64)
        At = np.ascontiguousarray(np.asarray(init[1], dtype=np.float64).T)
    sampler = build_sampler(pmi, config.sampling_mode)
    use_l1 = penalty == "l1"
    ptr, members = _plan_arrays(None if use_l1 else ProxPlan(forest), M)
    scaled_thr = config.prox_threshold_mode == "scaled"
    budget = 10 * config.batch_size
    row_mark = np.full(C, -1, dtype=np.int64)
    col_mark = np.full(V, -1, dtype=np.int64)

    eval_every = max(1, T // 100)
    ckpt_every = max(1, T // 10)
    report = TrainReport(iterations=T, config=asdict(config))
    report.config["penalty"] = penalty
    report.objective_trace.append([0, objective(pmi, D, At.T, forest, config.lam, config.tau)])
    recorded = [] if record_batches else None
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    start = time.perf_counter()
    t = 0
    updated = 0
    try:
        while t < T:
            next_stop = min(T, (t // eval_every + 1) * eval_every, t + _CHUNK_BATCHES)
            nb = next_stop - t
            uniforms = rng.random((nb, budget, 2))
            batches = np.full((nb, config.batch_size), -1, dtype=np.int64)
            if pool is None:
                bad = _kernels.run_chunk(D, At, sampler.prob, sampler.alias, sampler.rows, sampler.cols,
                                         sampler.values, sampler.scales, uniforms, config.batch_size,
                                         row_mark, col_mark, t, t, T, config.eta0, config.tau,
                                         config.lam, scaled_thr, ptr, members, use_l1, batches)
            else:
                bad = _run_chunk_threaded(pool, config, D, At, sampler, uniforms, row_mark, col_mark,
                                          t, ptr, members, use_l1, batches)
            if bad:
                raise DivergenceError("divergence; reduce eta0")
            updated += int(np.count_nonzero(batches >= 0))
            if recorded is not None:
                recorded.extend(b[b >= 0].copy() for b in batches)
            t = next_stop
            if t % eval_every == 0 or t == T:
                value = objective(pmi, D, At.T, forest, config.lam, config.tau)
                if not np.isfinite(value):
                    raise DivergenceError("divergence; reduce eta0")
                report.objective_trace.append([t, value])
                logger.debug("iteration %d objective %.6g", t, value)
            if config.checkpoint_path and (t % ckpt_every == 0 or t == T):
                save_checkpoint(config.checkpoint_path, D, At.T, t)
    finally:
        if pool is not None:
            pool.shutdown()
    A = At.T
    report.wall_seconds = time.perf_counter() - start
    report.nonzero_fraction = nonzero_fraction(A)
    report.entries_updated = updated
    if record_batches:
        return D, A, report, recorded
    return D, A, report


def _run_chunk_threaded(pool, config, D, At, sampler, uniforms, row_mark, col_mark, t0,
                        ptr, members, use_l1, batches):
    # sampling stays on the coordinator; workers only apply disjoint updates
    T = config.iterations
    buf = np.empty(config.batch_size, dtype=np.int64)
    bad = 0
    for b in range(uniforms.shape[0]):
        n = _kernels.draw_batch(sampler.prob, sampler.alias, sampler.rows, sampler.cols, uniforms[b],
                                config.batch_size, row_mark, col_mark, t0 + b, buf)
        batches[b, :n] = buf[:n]
        step = config.learning_rate(t0 + b)
        thr = config.threshold(step)
        bounds = np.linspace(0, n, min(config.threads, max(n, 1)) + 1).astype(np.int64)
        futures = [
            pool.submit(_kernels.apply_entries, D, At, buf, int(lo), int(hi), sampler.rows, sampler.cols,
                        sampler.values, sampler.scales, step, config.tau, thr, ptr, members, use_l1)
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
        ]
        bad += sum(f.result() for f in futures)
        if bad:
            break
    return bad


def save_checkpoint(path, D, A, iteration: int) -> None:
    """Binary checkpoint: magic, C, V, M, iteration, then row-major D and column-major A.

    Integers are little-endian uint64, floats little-endian float64. The
    file is written to a temporary name and renamed into place.
    """
    D = np.asarray(D, dtype="<f8")
    A = np.asarray(A, dtype="<f8")
    C, M = D.shape
    V = A.shape[1]
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<4Q", C, V, M, iteration))
        fh.write(np.ascontiguousarray(D).tobytes())
        fh.write(np.ascontiguousarray(A.T).tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Return ``(D, A, iteration)`` from a checkpoint file."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        C, V, M, iteration = struct.unpack("<4Q", fh.read(32))
        D = np.frombuffer(fh.read(8 * C * M), dtype="<f8").reshape(C, M).astype(np.float64)
        At = np.frombuffer(fh.read(8 * V * M), dtype="<f8").reshape(V, M).astype(np.float64)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    return D, np.ascontiguousarray(At).T, int(iteration)
