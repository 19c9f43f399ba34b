import numpy as np
import pytest

from floorid.errors import (
    AmbiguousOrientationError,
    MiddleFloorAnchorError,
    ValidationError,
)
from floorid.indexing import (
    FloorOrdering,
    TspInstance,
    assign_labels,
    build_similarity,
    distance_to_cluster,
    index_arbitrary_anchor,
    index_bottom_anchor,
    jaccard_adapted,
    jaccard_plain,
    path_cost,
    solve,
    solve_2opt,
    solve_brute_force,
    solve_exact,
)


def random_similarity(rng, n):
    sim = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    values = rng.uniform(0, 1, size=len(iu[0]))
    sim[iu] = values
    sim.T[iu] = values
    return sim


class TestJaccardPlain:
    def test_identical(self):
        assert jaccard_plain({"a", "b"}, {"a", "b"}) == 1.0

    def test_partial(self):
        assert jaccard_plain({"a", "b"}, {"b", "c"}) == pytest.approx(1 / 3)

    def test_disjoint(self):
        assert jaccard_plain({"a"}, {"b"}) == 0.0

    def test_both_empty(self):
        assert jaccard_plain(set(), set()) == 0.0


class TestJaccardAdapted:
    def test_identical_rows_no_zeros(self):
        f = np.array([3.0, 1.0, 2.0])
        assert jaccard_adapted(f, f) == 1.0

    def test_hand_case(self):
        # f_i=(2,1,0), f_j=(1,0,3): share=2, mean_i=1, mean_j=4/3,
        # diff = 1*(4/3) + 3*1 = 13/3, J = 2/(2+13/3) = 6/19
        f_i = np.array([2.0, 1.0, 0.0])
        f_j = np.array([1.0, 0.0, 3.0])
        assert jaccard_adapted(f_i, f_j) == pytest.approx(6 / 19, abs=1e-12)

    def test_disjoint_supports(self):
        assert jaccard_adapted(np.array([2.0, 0.0]), np.array([0.0, 5.0])) == 0.0

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            m = int(rng.integers(1, 8))
            a = rng.integers(0, 5, size=m).astype(float)
            b = rng.integers(0, 5, size=m).astype(float)
            va = jaccard_adapted(a, b)
            vb = jaccard_adapted(b, a)
            assert va == pytest.approx(vb, abs=1e-15)
            assert 0.0 <= va <= 1.0

    def test_union_restriction_is_automatic(self):
        # columns absent from both clusters contribute nothing
        a = np.array([2.0, 1.0, 0.0, 0.0])
        b = np.array([1.0, 0.0, 3.0, 0.0])
        trimmed = jaccard_adapted(a[:3], b[:3])
        assert jaccard_adapted(a, b) == pytest.approx(trimmed, abs=1e-15)

    def test_all_zero_rows(self):
        assert jaccard_adapted(np.zeros(3), np.zeros(3)) == 0.0


class TestBuildSimilarity:
    def test_two_clusters(self):
        freq = np.array([[2, 1, 0], [1, 0, 3]], dtype=float)
        sim = build_similarity(freq, "adapted")
        assert sim[0, 1] == sim[1, 0] == pytest.approx(6 / 19)
        assert sim[0, 0] == 0.0

    def test_matches_elementwise_recompute(self):
        rng = np.random.default_rng(8)
        freq = rng.integers(0, 6, size=(5, 12)).astype(float)
        sim = build_similarity(freq, "adapted")
        for i in range(5):
            for j in range(5):
                if i != j:
                    assert sim[i, j] == pytest.approx(
                        jaccard_adapted(freq[i], freq[j]), abs=1e-15
                    )

    def test_plain_method(self):
        freq = np.array([[2, 1, 0], [5, 0, 1]], dtype=float)
        sim = build_similarity(freq, "plain")
        assert sim[0, 1] == pytest.approx(1 / 3)

    def test_unknown_method(self):
        with pytest.raises(ValidationError):
            build_similarity(np.ones((2, 2)), "banana")


class TestSolveExact:
    def test_three_cluster_hand_case(self):
        sim = np.zeros((3, 3))
        sim[0, 1] = sim[1, 0] = 0.9
        sim[1, 2] = sim[2, 1] = 0.8
        sim[0, 2] = sim[2, 0] = 0.1
        instance = TspInstance.from_similarity(sim, start=0)
        sol = solve_exact(instance)
        assert sol.order == (0, 1, 2)
        assert sol.cost == pytest.approx(0.3, abs=1e-12)

    def test_all_equal_similarities_lex_smallest(self):
        sim = np.full((5, 5), 0.4)
        np.fill_diagonal(sim, 0.0)
        sol = solve_exact(TspInstance.from_similarity(sim, start=2))
        assert sol.order == (2, 0, 1, 3, 4)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(21)
        for n in range(3, 9):
            for _ in range(30):
                sim = random_similarity(rng, n)
                start = int(rng.integers(n))
                instance = TspInstance.from_similarity(sim, start=start)
                dp = solve_exact(instance)
                bf = solve_brute_force(instance)
                assert dp.cost == pytest.approx(bf.cost, abs=1e-12)
                assert dp.order == bf.order

    def test_size_budget(self):
        sim = np.zeros((2, 2))
        with pytest.raises(ValidationError):
            solve_exact(TspInstance.from_similarity(sim, start=0))

    def test_weight_structure(self):
        sim = random_similarity(np.random.default_rng(3), 4)
        inst = TspInstance.from_similarity(sim, start=1)
        assert np.all(inst.weights[:, 1] == 0.0)
        for i in range(4):
            for j in range(4):
                if j != 1 and i != j:
                    assert inst.weights[i, j] == pytest.approx(1 - sim[i, j])


class TestSolve2opt:
    def test_n3_always_optimal(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            sim = random_similarity(rng, 3)
            inst = TspInstance.from_similarity(sim, start=0)
            approx = solve_2opt(inst, restarts=1, rng=np.random.default_rng(5))
            exact = solve_exact(inst)
            assert approx.cost == pytest.approx(exact.cost, abs=1e-12)

    def test_never_below_optimum(self):
        rng = np.random.default_rng(32)
        for _ in range(50):
            n = int(rng.integers(3, 9))
            inst = TspInstance.from_similarity(random_similarity(rng, n), start=0)
            approx = solve_2opt(inst, restarts=4, rng=np.random.default_rng(6))
            exact = solve_exact(inst)
            assert approx.cost >= exact.cost - 1e-12

    def test_local_optimality(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            n = int(rng.integers(4, 10))
            inst = TspInstance.from_similarity(random_similarity(rng, n), start=0)
            sol = solve_2opt(inst, restarts=2, rng=np.random.default_rng(7))
            order = list(sol.order)
            for a in range(1, n - 1):
                for b in range(a + 1, n):
                    cand = order[:a] + order[a : b + 1][::-1] + order[b + 1 :]
                    assert path_cost(inst.weights, cand) >= sol.cost - 1e-9

    def test_auto_dispatch(self):
        sim = random_similarity(np.random.default_rng(3), 5)
        inst = TspInstance.from_similarity(sim, start=0)
        _, used = solve(inst, "auto")
        assert used == "exact"
        big = TspInstance.from_similarity(
            random_similarity(np.random.default_rng(3), 15), start=0
        )
        _, used = solve(big, "auto", rng=np.random.default_rng(0))
        assert used == "two_opt"


class TestIndexBottomAnchor:
    def test_hand_case_orders_floors(self):
        sim = np.zeros((3, 3))
        sim[0, 1] = sim[1, 0] = 0.9
        sim[1, 2] = sim[2, 1] = 0.8
        sim[0, 2] = sim[2, 0] = 0.1
        ordering = index_bottom_anchor(sim, anchor_cluster=1)
        assert ordering.cluster_order == (1, 2, 3)
        assert ordering.floor_of_cluster == {1: 1, 2: 2, 3: 3}

    def test_anchor_cluster_gets_floor_one(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            n = int(rng.integers(3, 8))
            sim = random_similarity(rng, n)
            anchor = int(rng.integers(1, n + 1))
            ordering = index_bottom_anchor(sim, anchor_cluster=anchor)
            assert ordering.cluster_order[0] == anchor
            assert ordering.floor_of_cluster[anchor] == 1

    def test_zero_similarity_warns(self):
        sim = np.zeros((4, 4))
        ordering = index_bottom_anchor(sim, anchor_cluster=2)
        assert ordering.warnings
        assert ordering.cluster_order[0] == 2

    def test_bad_anchor(self):
        with pytest.raises(ValidationError):
            index_bottom_anchor(np.zeros((3, 3)), anchor_cluster=9)


class TestDistanceToCluster:
    def test_mean_of_distances(self):
        members = np.array([[1.0], [3.0]])
        assert distance_to_cluster(np.array([0.0]), members) == pytest.approx(2.0)

    def test_empty_cluster(self):
        with pytest.raises(ValidationError):
            distance_to_cluster(np.zeros(2), np.zeros((0, 2)))


def chain_similarity(n, strong=0.9):
    """Similarity decaying with index distance: true order 0..n-1."""
    sim = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                sim[i, j] = strong ** abs(i - j)
    return sim


class TestIndexArbitraryAnchor:
    def members_for(self, n, dim=4, spread=10.0):
        rng = np.random.default_rng(17)
        return [spread * np.eye(n, dim)[i] + rng.normal(0, 0.01, (3, dim)) for i in range(n)]

    def test_middle_floor_of_odd_building(self):
        sim = chain_similarity(5)
        with pytest.raises(MiddleFloorAnchorError):
            index_arbitrary_anchor(
                sim, np.zeros(4), anchor_floor=3, cluster_members=self.members_for(5)
            )

    def test_orientation_keeps_closer_candidate(self):
        # true chain order is cluster 0..3; anchor on floor 1 near cluster 0
        sim = chain_similarity(4)
        members = self.members_for(4)
        anchor = members[0][0] + 0.001
        ordering = index_arbitrary_anchor(
            sim, anchor, anchor_floor=1, cluster_members=members
        )
        assert ordering.floor_of_cluster[1] == 1
        assert ordering.cluster_order in ((1, 2, 3, 4),)

    def test_orientation_flips_for_far_candidate(self):
        # anchor on floor 4 but near cluster 0: path is reversed
        sim = chain_similarity(4)
        members = self.members_for(4)
        anchor = members[0][0] + 0.001
        ordering = index_arbitrary_anchor(
            sim, anchor, anchor_floor=4, cluster_members=members
        )
        assert ordering.floor_of_cluster[1] == 4

    def test_equidistant_candidates_error(self):
        sim = chain_similarity(4)
        members = [np.array([[float(i), 0.0]]) for i in range(4)]
        anchor = np.array([1.5, 0.0])  # exactly between clusters 1 and 2
        with pytest.raises(AmbiguousOrientationError):
            index_arbitrary_anchor(sim, anchor, anchor_floor=2, cluster_members=members)

    def test_bad_floor(self):
        sim = chain_similarity(4)
        with pytest.raises(ValidationError):
            index_arbitrary_anchor(
                sim, np.zeros(4), anchor_floor=9, cluster_members=self.members_for(4)
            )


class TestAssignLabels:
    def ordering(self):
        return FloorOrdering(
            cluster_order=(2, 1, 3),
            cost=0.0,
            solver="exact",
            floor_of_cluster={2: 1, 1: 2, 3: 3},
        )

    def test_bottom_cluster_gets_floor_one(self):
        labels = assign_labels(self.ordering(), {0: 2, 1: 2, 2: 1, 3: 3})
        assert labels[0] == labels[1] == 1
        assert labels[2] == 2
        assert labels[3] == 3

    def test_histogram_permutes(self):
        cluster_of = {i: 1 + (i % 3) for i in range(9)}
        labels = assign_labels(self.ordering(), cluster_of)
        from collections import Counter

        cluster_sizes = Counter(cluster_of.values())
        floor_sizes = Counter(labels.values())
        for cluster, floor in self.ordering().floor_of_cluster.items():
            assert floor_sizes[floor] == cluster_sizes[cluster]

    def test_holdout_anchor_gets_declared_floor(self):
        labels = assign_labels(
            self.ordering(), {0: 2, 1: 1}, anchor_index=7, anchor_floor=2
        )
        assert labels[7] == 2

    def test_round_trip_regroup(self):
        rng = np.random.default_rng(5)
        cluster_of = {i: int(rng.integers(1, 4)) for i in range(30)}
        ordering = self.ordering()
        labels = assign_labels(ordering, cluster_of)
        regroup: dict[int, set] = {}
        for idx, floor in labels.items():
            regroup.setdefault(floor, set()).add(idx)
        original: dict[int, set] = {}
        for idx, cluster in cluster_of.items():
            original.setdefault(cluster, set()).add(idx)
        for cluster, floor in ordering.floor_of_cluster.items():
            assert regroup.get(floor, set()) == original.get(cluster, set())
