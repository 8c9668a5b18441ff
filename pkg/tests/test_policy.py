import numpy as np
import pytest

from oracles import all_orders
from owarank.policy import (
    GroupAssignment,
    RankingPolicy,
    argsort_perm,
    dcg,
    expected_dcg,
    fairness_violations,
    group_exposures,
    item_exposures,
    perm_matrix,
    position_bias,
    sample_ranking,
)

B2 = 1 / np.log2(3)


def uniform2():
    return RankingPolicy(np.array([0.5, 0.5]), np.array([[0, 1], [1, 0]]))


def random_policy(rng, n, k):
    w = rng.random(k)
    return RankingPolicy.from_atoms(w / w.sum(), np.array([rng.permutation(n) for _ in range(k)]))


def test_position_bias():
    np.testing.assert_allclose(position_bias(3), [1.0, 0.63093, 0.5], atol=1e-5)
    np.testing.assert_array_equal(position_bias(1), [1.0])
    assert np.all(np.diff(position_bias(100)) < 0)
    with pytest.raises(ValueError):
        position_bias(0)


class TestArgsort:
    def test_examples(self):
        np.testing.assert_array_equal(argsort_perm([0.2, 0.9, 0.5]) + 1, [2, 3, 1])
        np.testing.assert_array_equal(argsort_perm([5, 5, 5]), [0, 1, 2])
        np.testing.assert_array_equal(argsort_perm([1, 2, 3, 4]), [3, 2, 1, 0])

    def test_sorted_vertex_is_unique_optimum(self, rng):
        for n in range(2, 7):
            y = rng.permutation(n) + rng.random(n) * 0.5
            b = position_bias(n)
            values = {tuple(o): dcg(o, y, b) for o in all_orders(n)}
            best = max(values, key=values.get)
            assert best == tuple(argsort_perm(y))
            assert sum(abs(v - values[best]) < 1e-12 for v in values.values()) == 1


class TestDcg:
    def test_examples(self):
        b = position_bias(2)
        assert dcg([0, 1], [1, 0], b) == 1.0
        assert dcg([0, 1], [0, 1], b) == pytest.approx(0.63093, abs=1e-5)
        b3 = position_bias(3)
        for o in all_orders(3):
            assert dcg(o, [1, 1, 1], b3) == pytest.approx(2.13093, abs=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dcg([0, 1], [1, 0, 0], position_bias(2))

    def test_expected_dcg_examples(self, rng):
        b = position_bias(2)
        assert expected_dcg(uniform2(), [1, 0], b) == pytest.approx(0.81546, abs=1e-5)
        order = rng.permutation(6)
        y = rng.random(6)
        assert expected_dcg(RankingPolicy.deterministic(order), y, position_bias(6)) == dcg(order, y, position_bias(6))

    def test_expected_dcg_is_atom_average(self, rng):
        p = random_policy(rng, 8, 5)
        y, b = rng.random(8), position_bias(8)
        avg = sum(r * dcg(o, y, b) for r, o in zip(p.weights, p.orders))
        assert expected_dcg(p, y, b) == pytest.approx(avg, abs=1e-10)
        assert expected_dcg(p, y, b) == pytest.approx(y @ p.matrix @ b, abs=1e-10)

    def test_linearity_in_policy(self, rng):
        p1, p2 = random_policy(rng, 6, 3), random_policy(rng, 6, 4)
        a = 0.3
        mix = RankingPolicy.from_atoms(np.r_[a * p1.weights, (1 - a) * p2.weights], np.vstack([p1.orders, p2.orders]))
        y, b = rng.random(6), position_bias(6)
        assert expected_dcg(mix, y, b) == pytest.approx(a * expected_dcg(p1, y, b) + (1 - a) * expected_dcg(p2, y, b),
                                                        abs=1e-10)


class TestPolicy:
    def test_birkhoff_membership(self, rng):
        for _ in range(20):
            p = random_policy(rng, int(rng.integers(1, 12)), int(rng.integers(1, 8)))
            M = p.matrix
            np.testing.assert_allclose(M.sum(0), 1, atol=1e-9)
            np.testing.assert_allclose(M.sum(1), 1, atol=1e-9)
            assert M.min() >= -1e-12 and M.max() <= 1 + 1e-12
            direct = sum(r * perm_matrix(o) for r, o in zip(p.weights, p.orders))
            np.testing.assert_allclose(M, direct, atol=1e-10)

    def test_compaction_preserves_matrix(self, rng):
        orders = np.array([rng.permutation(5) for _ in range(3)])
        orders = orders[[0, 1, 0, 2, 1, 1]]
        w = rng.random(6)
        w /= w.sum()
        loose = RankingPolicy.from_atoms(w, orders, compact=False)
        tight = RankingPolicy.from_atoms(w, orders)
        assert len(tight.weights) == 3
        np.testing.assert_allclose(loose.matrix, tight.matrix, atol=1e-12)

    def test_rejects_bad_atoms(self):
        with pytest.raises(ValueError):
            RankingPolicy(np.array([0.5, 0.4]), np.array([[0, 1], [1, 0]]))
        with pytest.raises(ValueError):
            RankingPolicy(np.array([1.0]), np.array([[0, 0]]))
        with pytest.raises(ValueError):
            RankingPolicy(np.array([]), np.zeros((0, 2)))

    def test_immutable(self):
        p = uniform2()
        with pytest.raises(ValueError):
            p.weights[0] = 1.0

    def test_exposure_conservation(self, rng):
        p = random_policy(rng, 10, 6)
        b = position_bias(10)
        assert item_exposures(p, b).sum() == pytest.approx(b.sum(), abs=1e-9)


class TestGroups:
    def test_incidence_rows(self):
        g = GroupAssignment(np.array([0, 2, 2, 0, 2]))
        assert g.m == 2
        np.testing.assert_allclose(g.incidence.sum(1), 1)
        np.testing.assert_allclose(g.incidence[1], [0, 1 / 3, 1 / 3, 0, 1 / 3])
        v = np.arange(5.0)
        np.testing.assert_allclose(g.group_means(v), g.incidence @ v)
        np.testing.assert_allclose(g.spread([1.0, 2.0]), g.incidence.T @ [1.0, 2.0])

    def test_exposure_examples(self):
        b = position_bias(2)
        g = GroupAssignment(np.array([0, 1]))
        ident = RankingPolicy.deterministic([0, 1])
        np.testing.assert_allclose(group_exposures(ident, g, b), [1.0, B2])
        np.testing.assert_allclose(group_exposures(uniform2(), g, b), [0.81546, 0.81546], atol=1e-5)
        np.testing.assert_allclose(fairness_violations(ident, g, b), [0.18454, 0.18454], atol=1e-5)
        np.testing.assert_allclose(fairness_violations(uniform2(), g, b), [0, 0], atol=1e-15)

    def test_single_group(self, rng):
        p = random_policy(rng, 7, 3)
        b = position_bias(7)
        g = GroupAssignment(np.zeros(7, dtype=int))
        np.testing.assert_allclose(group_exposures(p, g, b), [b.mean()])
        np.testing.assert_allclose(fairness_violations(p, g, b), [0], atol=1e-15)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            group_exposures(uniform2(), GroupAssignment(np.array([0, 1, 1])), position_bias(2))


class TestSampling:
    def test_single_atom(self, rng):
        p = RankingPolicy.deterministic([2, 0, 1])
        for _ in range(10):
            np.testing.assert_array_equal(sample_ranking(p, rng), [2, 0, 1])

    def test_atom_frequencies(self):
        p = RankingPolicy(np.array([0.3, 0.7]), np.array([[0, 1], [1, 0]]))
        rng = np.random.default_rng(7)
        N = 100_000
        first = sum(sample_ranking(p, rng)[0] == 0 for _ in range(N)) / N
        assert abs(first - 0.3) <= 3 * np.sqrt(0.3 * 0.7 / N)

    def test_deterministic_given_stream(self):
        p = random_policy(np.random.default_rng(0), 6, 4)
        a = [sample_ranking(p, np.random.default_rng(5)) for _ in range(3)]
        b = [sample_ranking(p, np.random.default_rng(5)) for _ in range(3)]
        np.testing.assert_array_equal(a, b)

    def test_batch_matches_single_draws(self):
        from owarank.policy import sample_rankings

        p = random_policy(np.random.default_rng(1), 5, 3)
        many = sample_rankings(p, np.random.default_rng(9), 4)
        rng = np.random.default_rng(9)
        ks = rng.choice(p.weights.size, size=4, p=p.weights)
        np.testing.assert_array_equal(many, p.orders[ks])
        assert many.shape == (4, 5)
