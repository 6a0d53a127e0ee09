import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_forest_parents
from forest_embed.forest import (
    Forest, build_default_forest, descendants, flat_forest, omega, omega_columns, parse_forest,
)


class TestDefaultForest:
    def test_two_trees(self):
        f = build_default_forest(2)
        assert f.size == 26
        assert f.roots == [0, 13]
        assert set(descendants(f, 0)).isdisjoint(range(13, 26))
        assert f.parent[13] == -1  # 1-based node 14 starts the second tree

    @pytest.mark.parametrize("trees, M", [(1, 13), (4, 52), (40, 520), (20, 260)])
    def test_sizes(self, trees, M):
        f = build_default_forest(trees)
        assert f.size == M
        assert len(f.roots) == trees

    def test_node_two_has_children_three_and_four(self):
        # 0-based node 1 is node 2 in 1-based numbering
        f = build_default_forest(1)
        assert descendants(f, 1) == [2, 3]
        assert descendants(f, 0) == list(range(1, 13))

    def test_shape(self):
        f = build_default_forest(1)
        assert len(f.children[0]) == 4
        assert all(len(f.children[c]) == 2 for c in f.children[0])
        assert f.max_depth == 2
        leaves = [i for i in range(13) if not f.children[i]]
        assert len(leaves) == 8
        assert all(descendants(f, leaf) == [] for leaf in leaves)

    def test_bad_tree_count(self):
        with pytest.raises(ValueError):
            build_default_forest(0)


class TestParse:
    def test_three_node_tree(self):
        f = parse_forest("-1 0 0")
        assert f.children[0] == (1, 2)
        assert f.depth.tolist() == [0, 1, 1]

    def test_unicode_minus(self):
        assert parse_forest("−1 −1 −1").is_flat()

    def test_flat(self):
        f = parse_forest("-1 -1 -1")
        assert f.roots == [0, 1, 2]

    @pytest.mark.parametrize("text, match", [
        ("0 1", "cycle"), ("1 0", "cycle"), ("-1 2 1", "cycle"),
        ("-1 5", "out of range"), ("-1 -2", "out of range"), ("", "empty"), ("-1 x", "integers"),
    ])
    def test_invalid(self, text, match):
        with pytest.raises(ValueError, match=match):
            parse_forest(text)

    def test_file_roundtrip(self, tmp_path):
        f = build_default_forest(2)
        f.save(tmp_path / "f.txt")
        assert (tmp_path / "f.txt").read_text().count("\n") == 1
        np.testing.assert_array_equal(Forest.load(tmp_path / "f.txt").parent, f.parent)

    def test_descendants_out_of_range(self):
        with pytest.raises(IndexError):
            descendants(parse_forest("-1 0"), 2)


class TestOmega:
    def test_zero(self):
        assert omega(build_default_forest(1), np.zeros(13)) == 0.0

    def test_flat_is_l1(self):
        a = np.array([1.0, -2.5, 0.0, 3.0])
        assert omega(flat_forest(4), a) == pytest.approx(6.5)

    def test_three_node_tree(self):
        assert omega(parse_forest("-1 0 0"), [1.0, 2.0, 2.0]) == pytest.approx(7.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            omega(parse_forest("-1 0 0"), [1.0, 2.0])

    def test_columns_match_scalar(self):
        rng = np.random.default_rng(0)
        f = build_default_forest(2)
        A = rng.normal(size=(7, 26))
        np.testing.assert_allclose(omega_columns(f, A), [omega(f, a) for a in A], rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 13), st.integers(0, 2**32 - 1))
def test_omega_is_a_norm_with_depth_bounds(M, seed):
    rng = np.random.default_rng(seed)
    f = Forest(random_forest_parents(rng, M))
    a, b = rng.normal(size=M), rng.normal(size=M)
    s = rng.normal()
    assert omega(f, s * a) == pytest.approx(abs(s) * omega(f, a), rel=1e-12)
    assert omega(f, a + b) <= omega(f, a) + omega(f, b) + 1e-12
    assert omega(f, a) > 0
    assert np.linalg.norm(a) <= omega(f, a) + 1e-12
    assert omega(f, a) <= np.sum((f.depth + 1) * np.abs(a)) + 1e-12
    # trees partition the nodes
    sizes = [1 + len(descendants(f, r)) for r in f.roots]
    assert sum(sizes) == M
    assert sorted(sum(([r] + descendants(f, r) for r in f.roots), [])) == list(range(M))
