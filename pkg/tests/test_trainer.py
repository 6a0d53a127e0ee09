import numpy as np
import pytest

from forest_embed import _kernels
from forest_embed.corpus import PmiMatrix
from forest_embed.forest import build_default_forest, descendants, flat_forest, omega, parse_forest
from forest_embed.prox import ProxPlan
from forest_embed.synthetic import planted_problem
from forest_embed.trainer import (
    DivergenceError, TrainConfig, build_sampler, init_factors, load_checkpoint, nonzero_fraction,
    objective, sample_batch, save_checkpoint, sgd_step, train,
)


def toy_pmi(seed=0, C=5, V=5, density=1.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(C, V)) * 2
    X[rng.random((C, V)) >= density] = 0.0
    return PmiMatrix.from_dense(X)


class TestSampler:
    def test_proportional_to_magnitude(self):
        s = build_sampler(PmiMatrix.from_dense([[1.0, -3.0]]))
        np.testing.assert_allclose(s.probabilities(), [0.25, 0.75], atol=1e-12)

    def test_equal_magnitudes_uniform(self):
        s = build_sampler(PmiMatrix.from_dense([[2.0, -2.0], [2.0, 2.0]]))
        np.testing.assert_allclose(s.probabilities(), [0.25] * 4, atol=1e-12)

    def test_alias_table_exact_on_random_weights(self):
        pmi = toy_pmi(1, 30, 40, 0.3)
        s = build_sampler(pmi)
        w = np.abs(pmi.values)
        np.testing.assert_allclose(s.probabilities(), w / w.sum(), atol=1e-12)

    def test_kernel_draw_matches_numpy_draw(self):
        s = build_sampler(toy_pmi(2, 10, 10, 0.5))
        u = np.random.default_rng(0).random((1000, 2))
        ref = s.draw(np.random.default_rng(0), 1000)
        got = [_kernels.alias_draw(s.prob, s.alias, a, b) for a, b in u]
        np.testing.assert_array_equal(got, ref)

    def test_uniform_scaled_mode(self):
        pmi = PmiMatrix.from_dense([[1.0, -3.0], [0.0, 4.0]])
        s = build_sampler(pmi, "uniform-scaled")
        np.testing.assert_allclose(s.probabilities(), [1 / 3] * 3)
        np.testing.assert_allclose(s.scales, np.abs(pmi.values) * 3 / 8)

    def test_empty(self):
        with pytest.raises(ValueError):
            build_sampler(PmiMatrix(2, 2, [], [], []))


class TestSampleBatch:
    def test_single(self):
        s = build_sampler(toy_pmi())
        assert len(sample_batch(s, 1, np.random.default_rng(0))) == 1

    def test_all_in_one_row(self):
        s = build_sampler(PmiMatrix.from_dense([[1.0, 2.0, -1.0, 0.5, 3.0, 1.0, 2.0, 1.0]]))
        for seed in range(20):
            assert len(sample_batch(s, 8, np.random.default_rng(seed))) == 1

    def test_disjoint_rows_and_columns(self):
        pmi = toy_pmi(3, 60, 60, 0.1)
        s = build_sampler(pmi)
        rng = np.random.default_rng(1)
        sizes = []
        for _ in range(10_000):
            b = sample_batch(s, 6, rng)
            assert len(set(pmi.rows[b])) == len(b) == len(set(pmi.cols[b]))
            sizes.append(len(b))
        assert max(sizes) == 6


class TestSgdStep:
    def test_zero_residual_no_penalty_is_fixed_point(self):
        rng = np.random.default_rng(0)
        D, A = rng.normal(size=(3, 4)), rng.normal(size=(4, 5))
        x = D[1] @ A[:, 2]
        D0, A0 = D.copy(), A.copy()
        sgd_step(D, A, (1, 2, x), 0.1, TrainConfig(lam=0, tau=0), ProxPlan(build_default_forest(1).__class__(np.full(4, -1))))
        np.testing.assert_allclose(D, D0, atol=1e-15)
        np.testing.assert_allclose(A, A0, atol=1e-15)

    def test_scalar_example(self):
        D, A = np.array([[1.0]]), np.array([[1.0]])
        d, a = sgd_step(D, A, (0, 0, 2.0), 0.25, TrainConfig(lam=0, tau=0), ProxPlan(flat_forest(1)))
        assert d[0] == 1.5 and a[0] == 1.5

    def test_only_touches_row_and_column(self):
        rng = np.random.default_rng(1)
        D, A = rng.normal(size=(4, 13)), rng.normal(size=(13, 6))
        D0, A0 = D.copy(), A.copy()
        sgd_step(D, A, (2, 3, 1.5), 0.05, TrainConfig(lam=0.1), ProxPlan(build_default_forest(1)))
        changed_rows = np.flatnonzero(np.any(D != D0, axis=1))
        changed_cols = np.flatnonzero(np.any(A != A0, axis=0))
        assert changed_rows.tolist() == [2] and changed_cols.tolist() == [3]

    def test_prox_applied_last(self):
        rng = np.random.default_rng(2)
        f = build_default_forest(1)
        D, A = rng.normal(size=(3, 13)), rng.normal(size=(13, 3))
        cfg = TrainConfig(lam=5.0, prox_threshold_mode="fixed")
        _, a = sgd_step(D, A, (0, 0, 1.0), 0.01, cfg, ProxPlan(f))
        for n in np.flatnonzero(a == 0):
            assert np.all(a[descendants(f, n)] == 0)

    def test_divergence(self):
        D, A = np.array([[1e200]]), np.array([[1e200]])
        with pytest.raises(DivergenceError, match="reduce eta0"):
            sgd_step(D, A, (0, 0, 1.0), 1.0, TrainConfig(lam=0, tau=0), ProxPlan(flat_forest(1)))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        tau, eta, h = 0.3, 1e-3, 1e-6
        for _ in range(20):
            D, A = rng.normal(size=(2, 5)), rng.normal(size=(5, 2))
            x = rng.normal() * 2
            f = lambda d, a: (x - d @ a) ** 2 + tau * d @ d  # noqa: E731
            d0, a0 = D[1].copy(), A[:, 0].copy()
            d1, a1 = sgd_step(D, A, (1, 0, x), eta, TrainConfig(lam=0, tau=tau), ProxPlan(flat_forest(5)))
            # update = -eta * gradient
            gd = np.array([(f(d0 + h * e, a0) - f(d0 - h * e, a0)) / (2 * h) for e in np.eye(5)])
            ga = np.array([(f(d0, a0 + h * e) - f(d0, a0 - h * e)) / (2 * h) for e in np.eye(5)])
            np.testing.assert_allclose((d0 - d1) / eta, gd, rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose((a0 - a1) / eta, ga, rtol=1e-5, atol=1e-8)


class TestObjective:
    def test_zero_factors(self):
        pmi = toy_pmi(4)
        f = build_default_forest(1)
        val = objective(pmi, np.zeros((5, 13)), np.zeros((13, 5)), f, 0.1, 0.2)
        assert val == pytest.approx(np.sum(pmi.values ** 2), rel=1e-14)

    def test_exact_factorization(self):
        rng = np.random.default_rng(5)
        D, A = rng.normal(size=(6, 3)), rng.normal(size=(3, 7))
        pmi = PmiMatrix.from_dense(D @ A)
        assert objective(pmi, D, A, flat_forest(3), 0.0, 0.0) == pytest.approx(0.0, abs=1e-20)

    def test_direct_formula(self):
        rng = np.random.default_rng(6)
        pmi = toy_pmi(6, 8, 9, 0.4)
        f = parse_forest("-1 0 0 1 -1")
        D, A = rng.normal(size=(8, 5)), rng.normal(size=(5, 9))
        X, mask = pmi.to_dense(), pmi.to_dense() != 0
        ref = np.sum(((X - D @ A) * mask) ** 2)
        ref += 0.3 * sum(omega(f, A[:, v]) for v in range(9))
        ref += 0.01 * sum(np.sum(D[:, m] ** 2) for m in range(5))
        assert objective(pmi, D, A, f, 0.3, 0.01) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("A, frac", [(np.zeros((2, 3)), 0.0), (np.ones((2, 3)), 1.0),
                                     (np.array([[1.0, 0.0], [2.0, 3.0]]), 0.75)])
def test_nonzero_fraction(A, frac):
    assert nonzero_fraction(A) == frac


class TestTrain:
    def test_planted_recovery(self):
        pmi, f, X, mask = planted_problem(0)
        cfg = TrainConfig(lam=0.01, eta0=0.05, iterations=200_000, seed=0)
        D, A, rep = train(pmi, f, cfg)
        D0, At0 = init_factors(50, 50, 13, cfg, np.random.default_rng(0))
        err0 = np.sum(((X - D0 @ At0.T) * mask) ** 2)
        err1 = np.sum(((X - D @ A) * mask) ** 2)
        assert err1 <= 0.1 * err0
        assert rep.objective_trace[-1][1] < rep.objective_trace[0][1]
        assert len(rep.objective_trace) == 101
        assert rep.entries_updated == 200_000

    def test_huge_lambda_zeroes_codes(self):
        pmi, f, _, _ = planted_problem(1)
        D, A, rep = train(pmi, f, TrainConfig(lam=1e3, prox_threshold_mode="fixed", iterations=20_000))
        touched = np.unique(pmi.cols)
        assert np.all(A[:, touched] == 0)
        assert rep.nonzero_fraction == 0.0 or len(touched) < 50

    def test_untouched_columns_keep_init(self):
        X = np.zeros((4, 6))
        X[0, 0], X[1, 2] = 1.0, -2.0
        pmi = PmiMatrix.from_dense(X)
        cfg = TrainConfig(iterations=100, seed=3)
        D, A, _ = train(pmi, flat_forest(3), cfg)
        D0, At0 = init_factors(4, 6, 3, cfg, np.random.default_rng(3))
        np.testing.assert_array_equal(A[:, [1, 3, 4, 5]], At0.T[:, [1, 3, 4, 5]])
        np.testing.assert_array_equal(D[[2, 3]], D0[[2, 3]])

    def test_deterministic(self):
        pmi, f, _, _ = planted_problem(2)
        cfg = TrainConfig(iterations=5_000, seed=11, batch_size=4)
        D1, A1, _ = train(pmi, f, cfg)
        D2, A2, _ = train(pmi, f, cfg)
        assert D1.tobytes() == D2.tobytes() and A1.tobytes() == A2.tobytes()

    def test_threads_match_serial(self):
        pmi, f, _, _ = planted_problem(3)
        base = dict(iterations=2_000, seed=5, batch_size=8)
        D1, A1, r1, b1 = train(pmi, f, TrainConfig(**base), record_batches=True)
        D8, A8, r8, b8 = train(pmi, f, TrainConfig(threads=8, **base), record_batches=True)
        assert all(np.array_equal(x, y) for x, y in zip(b1, b8)) and len(b1) == len(b8)
        assert D1.tobytes() == D8.tobytes() and A1.tobytes() == A8.tobytes()
        for batch in b1:
            assert len(set(pmi.rows[batch])) == len(batch) == len(set(pmi.cols[batch]))

    def test_flat_forest_equals_l1_path(self):
        pmi, _, _, _ = planted_problem(4)
        cfg = TrainConfig(iterations=20_000, seed=2, lam=0.5)
        _, A_flat, _ = train(pmi, flat_forest(13), cfg)
        _, A_l1, _ = train(pmi, flat_forest(13), cfg, penalty="l1")
        assert A_flat.tobytes() == A_l1.tobytes()
        assert 0 < nonzero_fraction(A_flat) < 1

    def test_codes_have_rooted_zeros(self):
        pmi, f, _, _ = planted_problem(5)
        _, A, _ = train(pmi, f, TrainConfig(lam=0.2, iterations=30_000, seed=1))
        assert 0 < nonzero_fraction(A) < 1
        for v in np.unique(pmi.cols):
            for n in np.flatnonzero(A[:, v] == 0):
                assert np.all(A[descendants(f, n), v] == 0)

    def test_uniform_scaled_mode_trains(self):
        pmi, f, _, _ = planted_problem(6)
        _, _, rep = train(pmi, f, TrainConfig(lam=0.01, eta0=0.005, iterations=50_000,
                                                   sampling_mode="uniform-scaled"))
        assert rep.objective_trace[-1][1] < 0.5 * rep.objective_trace[0][1]

    def test_divergence_reported(self):
        pmi, f, _, _ = planted_problem(7)
        with pytest.raises(DivergenceError):
            train(pmi, f, TrainConfig(eta0=50.0, iterations=10_000, lam=0.0))

    def test_checkpoints(self, tmp_path):
        pmi, f, _, _ = planted_problem(8)
        path = tmp_path / "ck.bin"
        D, A, _ = train(pmi, f, TrainConfig(iterations=1_000, checkpoint_path=str(path)))
        D2, A2, it = load_checkpoint(path)
        assert it == 1_000
        np.testing.assert_array_equal(D, D2)
        np.testing.assert_array_equal(A, A2)
        raw = path.read_bytes()
        assert raw[:5] == b"HSCK1"
        assert len(raw) == 5 + 32 + 8 * (50 * 13 + 13 * 50)

    def test_checkpoint_layout(self, tmp_path):
        D = np.arange(6, dtype=float).reshape(3, 2)
        A = np.arange(8, dtype=float).reshape(2, 4)
        save_checkpoint(tmp_path / "c.bin", D, A, 7)
        payload = np.frombuffer((tmp_path / "c.bin").read_bytes()[37:], dtype="<f8")
        np.testing.assert_array_equal(payload[:6], D.ravel())  # row-major D
        np.testing.assert_array_equal(payload[6:], A.ravel(order="F"))  # column-major A

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sgd_step(np.zeros((2, 3)), np.zeros((3, 2)), (0, 0, 1.0), 0.1, TrainConfig(),
                     ProxPlan(flat_forest(4)))

    @pytest.mark.parametrize("kwargs", [dict(lam=-1), dict(iterations=0), dict(batch_size=0),
                                        dict(sampling_mode="x"), dict(prox_threshold_mode="y")])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


def expected_update(pmi, D, A, eta, mode):
    """Enumerate every entry: probability-weighted average of the one-step change."""
    s = build_sampler(pmi, mode)
    probs = s.probabilities()
    dD, dA = np.zeros_like(D), np.zeros_like(A)
    for e in range(pmi.nnz):
        D1, A1 = D.copy(), A.copy()
        sgd_step(D1, A1, (pmi.rows[e], pmi.cols[e], pmi.values[e]), eta, TrainConfig(lam=0, tau=0),
                 ProxPlan(flat_forest(D.shape[1])), scale=s.scales[e])
        dD += probs[e] * (D1 - D)
        dA += probs[e] * (A1 - A)
    return dD, dA


def test_sampling_modes_have_equal_expected_update():
    pmi = toy_pmi(9, 5, 5, 0.8)
    rng = np.random.default_rng(0)
    D, A = rng.normal(size=(5, 3)), rng.normal(size=(3, 5))
    wD, wA = expected_update(pmi, D, A, 0.01, "weighted")
    uD, uA = expected_update(pmi, D, A, 0.01, "uniform-scaled")
    np.testing.assert_allclose(uD, wD, atol=1e-12, rtol=0)
    np.testing.assert_allclose(uA, wA, atol=1e-12, rtol=0)


def test_equal_magnitudes_make_modes_identical():
    X = np.array([[1.0, -1.0], [1.0, 1.0]])
    s = build_sampler(PmiMatrix.from_dense(X), "uniform-scaled")
    np.testing.assert_array_equal(s.scales, np.ones(4))
