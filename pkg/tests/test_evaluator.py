import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_average_precision, naive_map_at_k, naive_r1, naive_rank
from reidkit.core import (
    ALL_CONDITIONS,
    Arrangement,
    Condition,
    EmbeddingRecord,
    EmbeddingSet,
    Split,
    Viewpoint,
)
from reidkit.evaluator import (
    average_precision,
    build_query_gallery,
    condition_matrix,
    core_scenarios,
    cross_condition_eval,
    distance_distributions,
    error_analysis,
    evaluate,
    l2_normalize,
    map_at_k,
    precision_at,
    r1,
    rank,
    scenario_family,
)


def make_set(vectors, fish_ids, species=None, conditions=None, record_ids=None):
    vectors = np.asarray(vectors, dtype=np.float32)
    n, dim = vectors.shape
    species = species or ["sp"] * n
    conditions = conditions or [ALL_CONDITIONS[0]] * n
    record_ids = record_ids if record_ids is not None else list(range(n))
    records = [
        EmbeddingRecord(
            record_id=record_ids[i],
            fish_id=fish_ids[i],
            species=species[i],
            condition=conditions[i],
            split=Split.TEST,
            vector=vectors[i],
        )
        for i in range(n)
    ]
    return EmbeddingSet(dim=dim, records=records)


class TestL2Normalize:
    def test_3_4_5(self):
        np.testing.assert_allclose(
            l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8], atol=1e-12
        )

    def test_unit_vector_unchanged(self):
        v = np.array([0.0, 1.0, 0.0])
        np.testing.assert_allclose(l2_normalize(v), v, atol=1e-12)

    def test_zero_vector_guarded(self):
        np.testing.assert_array_equal(l2_normalize(np.zeros(4)), np.zeros(4))

    def test_zero_vectors_flagged_in_report(self):
        rng = np.random.default_rng(0)
        vectors = rng.normal(size=(6, 3))
        vectors[4] = 0.0  # degenerate gallery entry
        es = make_set(vectors, ["a", "a", "b", "b", "c", "c"])
        report = evaluate(es, seed=0, k=3)
        assert report.zero_vectors == 1
        assert report.to_json_dict()["zero_vectors"] == 1


class TestBuildQueryGallery:
    def test_two_instance_id(self):
        es = make_set(np.eye(4), ["a", "a", "b", "c"])
        split = build_query_gallery(es, seed=0)
        assert len(split.queries) == 1  # only "a" has >= 2 instances
        assert split.queries[0] in (0, 1)
        assert sorted(split.queries + split.gallery) == [0, 1, 2, 3]
        assert not set(split.queries) & set(split.gallery)

    def test_forty_instance_ids_have_39_matches(self):
        rng = np.random.default_rng(0)
        ids = [f"fish{j:02d}" for j in range(3) for _ in range(40)]
        es = make_set(rng.normal(size=(120, 8)), ids)
        split = build_query_gallery(es, seed=1)
        assert len(split.queries) == 3
        for q in split.queries:
            fid = es.records[q].fish_id
            matches = sum(1 for g in split.gallery if es.records[g].fish_id == fid)
            assert matches == 39

    def test_same_seed_identical(self):
        rng = np.random.default_rng(2)
        ids = [f"f{j}" for j in range(10) for _ in range(5)]
        es = make_set(rng.normal(size=(50, 4)), ids)
        s1 = build_query_gallery(es, seed=42)
        s2 = build_query_gallery(es, seed=42)
        assert s1.queries == s2.queries and s1.gallery == s2.gallery

    def test_no_multi_instance_ids_errors(self):
        es = make_set(np.eye(3), ["a", "b", "c"])
        with pytest.raises(ValueError, match="no valid queries"):
            build_query_gallery(es, seed=0)

    def test_empty_set_errors(self):
        with pytest.raises(ValueError, match="empty"):
            build_query_gallery(EmbeddingSet(dim=2, records=[]), seed=0)


class TestRank:
    def test_exact_match_ranks_first(self):
        gallery = np.array([[0.0, 1.0], [1.0, 0.0], [0.7, 0.7]])
        order, dist = rank(np.array([1.0, 0.0]), gallery)
        assert order[0] == 1
        assert dist[0] == pytest.approx(0.0, abs=1e-12)

    def test_1d_sort_order(self):
        # normalized 1-D vectors collapse; use 2-D points on distinct rays
        gallery = np.array([[1.0, 0.1], [1.0, 0.5], [1.0, 0.2]])
        order, _ = rank(np.array([1.0, 0.0]), gallery)
        assert list(order) == [0, 2, 1]

    def test_tie_broken_by_record_id(self):
        gallery = np.array([[0.0, 1.0], [0.0, 1.0]])
        order, _ = rank(np.array([1.0, 0.0]), gallery, gallery_record_ids=[9, 3])
        assert list(order) == [1, 0]  # record 3 before record 9

    def test_empty_gallery(self):
        with pytest.raises(ValueError, match="empty gallery"):
            rank(np.array([1.0]), np.zeros((0, 1)))


class TestPrecisionAp:
    def test_precision_example(self):
        assert precision_at([1, 0, 1], 3) == pytest.approx(2 / 3, abs=1e-12)

    def test_precision_all_relevant(self):
        for i in (1, 2, 3):
            assert precision_at([1, 1, 1], i) == 1.0

    def test_precision_first_miss(self):
        assert precision_at([0, 1, 1], 1) == 0.0

    def test_precision_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            precision_at([1, 0], 3)

    def test_ap_hand_computed(self):
        assert average_precision([1, 0, 1], 2) == pytest.approx(5 / 6, abs=1e-9)

    def test_ap_perfect_ranking(self):
        assert average_precision([1] * 7, 7) == pytest.approx(1.0, abs=1e-12)

    def test_ap_single_match_ranked_last(self):
        n = 10
        rel = [0] * (n - 1) + [1]
        assert average_precision(rel, 1) == pytest.approx(1 / n, abs=1e-12)

    def test_ap_zero_relevant_rejected(self):
        with pytest.raises(ValueError, match="num_relevant"):
            average_precision([0, 0], 0)

    @given(
        rel=st.lists(st.booleans(), min_size=1, max_size=40),
        extra=st.integers(0, 5),
    )
    @settings(max_examples=100, deadline=None)
    def test_ap_in_unit_interval_and_top_block_iff_one(self, rel, extra):
        num_rel = sum(rel) + extra
        if num_rel == 0:
            return
        ap = average_precision(rel, num_rel)
        assert 0.0 <= ap <= 1.0
        if extra == 0 and num_rel > 0:
            is_top_block = all(rel[: sum(rel)])
            assert (ap == pytest.approx(1.0, abs=1e-12)) == is_top_block


def random_retrievals(seed, n_queries=5, gallery=30):
    """Build an EmbeddingSet + evaluate it, returning the report."""
    rng = np.random.default_rng(seed)
    ids = [f"f{j}" for j in range(n_queries) for _ in range(gallery // n_queries)]
    es = make_set(rng.normal(size=(len(ids), 6)), ids)
    return evaluate(es, seed=seed, k=10)


class TestMapR1:
    def test_perfect_topk(self):
        # two tight clusters: every query retrieves its own id first
        vectors = np.vstack([np.tile([10.0, 0.0], (4, 1)), np.tile([0.0, 10.0], (4, 1))])
        vectors += np.random.default_rng(0).normal(size=vectors.shape) * 0.01
        es = make_set(vectors, ["a"] * 4 + ["b"] * 4)
        report = evaluate(es, seed=0, k=3)
        assert report.map_at_k == pytest.approx(100.0, abs=1e-9)
        assert report.r1 == pytest.approx(100.0, abs=1e-12)

    def test_single_query_ap_mean(self):
        report = random_retrievals(3)
        single = [report.per_query[0]]
        assert map_at_k(single, report.k) == pytest.approx(
            100.0 * report.per_query[0].ap, abs=1e-12
        )

    def test_two_of_three_hits(self):
        class Stub:
            def __init__(self, hit):
                self.rank1_hit = hit

        assert r1([Stub(True), Stub(True), Stub(False)]) == pytest.approx(
            200.0 / 3, abs=1e-9
        )

    def test_r1_empty_errors(self):
        with pytest.raises(ValueError, match="empty query set"):
            r1([])

    def test_map_monotone_in_k(self):
        report = random_retrievals(9, n_queries=6, gallery=60)
        values = [map_at_k(report.per_query, k) for k in range(1, 30)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_self_retrieval_100(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=(10, 4))
        # duplicate each query vector into the gallery under the same id
        vectors = np.vstack([base, base])
        ids = [f"q{j}" for j in range(10)] * 2
        es = make_set(vectors, ids)
        report = evaluate(es, seed=1, k=5)
        assert report.r1 == 100.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        ids = [f"f{j}" for j in range(6) for _ in range(5)]
        vectors = rng.normal(size=(30, 5))
        record_ids = list(range(30))
        es = make_set(vectors, ids, record_ids=record_ids)
        base = evaluate(es, seed=4, k=7)

        perm = rng.permutation(30)
        es2 = make_set(
            vectors[perm],
            [ids[i] for i in perm],
            record_ids=[record_ids[i] for i in perm],
        )
        shuffled = evaluate(es2, seed=4, k=7)
        # same queries are drawn (selection is record_id-based), same metrics
        assert shuffled.r1 == pytest.approx(base.r1, abs=1e-9)
        assert shuffled.map_at_k == pytest.approx(base.map_at_k, abs=1e-9)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_oracle_equivalence_random_galleries(self, seed):
        rng = np.random.default_rng(seed)
        n_ids = int(rng.integers(2, 8))
        per_id = int(rng.integers(2, 7))
        dim = int(rng.integers(2, 8))
        k = int(rng.integers(1, 15))
        ids = [f"f{j}" for j in range(n_ids) for _ in range(per_id)]
        vectors = rng.normal(size=(len(ids), dim))
        es = make_set(vectors, ids)
        report = evaluate(es, seed=seed, k=k)

        relevances = [list(map(bool, r.relevance)) for r in report.per_query]
        num_rel = [r.num_relevant for r in report.per_query]
        assert report.r1 == pytest.approx(naive_r1(relevances), abs=1e-12)
        assert report.map_at_k == pytest.approx(
            naive_map_at_k(relevances, num_rel, k), abs=1e-12
        )
        for r in report.per_query:
            assert r.ap == pytest.approx(
                naive_average_precision(list(map(bool, r.relevance[:k])), r.num_relevant),
                abs=1e-12,
            )


class TestRankOracle:
    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_rank_matches_naive(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 40))
        dim = int(rng.integers(1, 6))
        gallery = rng.normal(size=(n, dim))
        query = rng.normal(size=dim)
        ids = list(rng.permutation(n * 3)[:n])
        order, _ = rank(query, gallery, ids)
        assert list(order) == naive_rank(list(query), [list(g) for g in gallery], ids)


def conditioned_set(seed=0, n_ids=6, per_cond=3, flip_shift=0.0):
    rng = np.random.default_rng(seed)
    records = []
    vectors = []
    ids = []
    species = []
    conditions = []
    for i in range(n_ids):
        center = rng.normal(size=6) * 5
        shift = rng.normal(size=6)
        shift /= np.linalg.norm(shift)
        for cond in ALL_CONDITIONS:
            base = center + (
                flip_shift * shift if cond.viewpoint is Viewpoint.FLIPPED else 0.0
            )
            for _ in range(per_cond):
                vectors.append(base + 0.05 * rng.normal(size=6))
                ids.append(f"f{i}")
                species.append(f"sp{i % 2}")
                conditions.append(cond)
    return make_set(np.array(vectors), ids, species=species, conditions=conditions)


class TestCrossCondition:
    def test_identical_cells_perfect_on_separable_data(self):
        es = conditioned_set()
        reports = cross_condition_eval(es, condition_matrix(), seed=0, k=10)
        assert len(reports) == 16
        for report, (qc, gc) in zip(reports, condition_matrix()):
            assert report.scenario == f"{qc.label}|{gc.label}"
            if qc == gc:
                assert report.r1 == 100.0

    def test_identical_cell_excludes_query_itself(self):
        es = conditioned_set(n_ids=2, per_cond=2)
        cond = ALL_CONDITIONS[0]
        reports = cross_condition_eval(es, [(cond, cond)], seed=0, k=5)
        for r in reports[0].per_query:
            assert r.query_record_id not in set(r.ranked_record_ids)
            assert r.num_relevant == 1  # 2 per condition minus the query

    def test_cross_cell_keeps_all_gallery(self):
        es = conditioned_set(n_ids=2, per_cond=2)
        qc, gc = ALL_CONDITIONS[0], ALL_CONDITIONS[1]
        reports = cross_condition_eval(es, [(qc, gc)], seed=0, k=5)
        for r in reports[0].per_query:
            assert r.num_relevant == 2

    def test_missing_condition_named_in_error(self):
        es = make_set(np.eye(4), ["a", "a", "b", "b"])  # all separated-initial
        qc, gc = ALL_CONDITIONS[0], ALL_CONDITIONS[3]
        with pytest.raises(ValueError, match="touched-flipped"):
            cross_condition_eval(es, [(qc, gc)], seed=0)

    def test_core_scenarios_grouping(self):
        scenarios = core_scenarios()
        assert len(scenarios) == 10
        families = [scenario_family(qc, gc) for qc, gc in scenarios]
        assert families.count("identical") == 4
        assert families.count("viewpoint") == 2
        assert families.count("occlusion") == 2
        assert families.count("compound") == 2

    def test_matrix_has_16_cells_4_per_family(self):
        cells = condition_matrix()
        assert len(cells) == 16
        families = [scenario_family(qc, gc) for qc, gc in cells]
        for fam in ("identical", "viewpoint", "occlusion", "compound"):
            assert families.count(fam) == 4


class TestErrorAnalysis:
    def test_all_hits(self):
        es = conditioned_set()
        report = evaluate(es, seed=0, k=10)
        assert report.r1 == 100.0
        assert (report.intra_errors, report.inter_errors) == (0, 0)

    def test_intra_vs_inter_classification(self):
        # q misses: top1 is same species -> intra
        class Stub:
            def __init__(self, hit, q_species, t_species):
                self.rank1_hit = hit
                self.query_species = q_species
                self.top1_species = t_species
                self.query_record_id = 0
                self.query_fish_id = "q"
                self.top1_fish_id = "t"

        intra, inter, confusions = error_analysis(
            [Stub(False, "cod", "cod"), Stub(True, "cod", "cod")]
        )
        assert (intra, inter) == (1, 0)
        assert confusions[0]["kind"] == "intra"

    def test_error_counts_sum_to_misses(self):
        rng = np.random.default_rng(11)
        ids = [f"f{j}" for j in range(8) for _ in range(4)]
        species = [f"sp{j % 3}" for j in range(8) for _ in range(4)]
        es = make_set(rng.normal(size=(32, 4)), ids, species=species)
        report = evaluate(es, seed=2, k=10)
        misses = sum(1 for r in report.per_query if not r.rank1_hit)
        assert report.intra_errors + report.inter_errors == misses


class TestDistanceDistributions:
    def test_identical_embeddings_all_zero(self):
        vectors = np.tile([1.0, 0.0], (6, 1))
        es = make_set(vectors, ["a", "a", "a", "b", "b", "b"])
        samples = distance_distributions(es, seed=0, max_pairs=100)
        assert np.all(samples.positive == 0.0)
        assert np.all(samples.negative == 0.0)

    def test_separated_clusters(self):
        rng = np.random.default_rng(0)
        a = np.tile([1.0, 0.0, 0.0], (5, 1)) + rng.normal(size=(5, 3)) * 1e-3
        b = np.tile([0.0, 1.0, 0.0], (5, 1)) + rng.normal(size=(5, 3)) * 1e-3
        es = make_set(np.vstack([a, b]), ["a"] * 5 + ["b"] * 5)
        samples = distance_distributions(es, seed=0, max_pairs=1000)
        assert samples.positive.max() < samples.negative.min()

    def test_kde_integrates_to_one(self):
        rng = np.random.default_rng(1)
        ids = [f"f{j}" for j in range(6) for _ in range(6)]
        es = make_set(rng.normal(size=(36, 5)), ids)
        samples = distance_distributions(es, seed=3, max_pairs=500)
        assert samples.kde is not None
        grid, pos_d, neg_d = samples.kde
        assert grid.size == 256
        assert np.trapezoid(pos_d, grid) == pytest.approx(1.0, abs=1e-3)
        assert np.trapezoid(neg_d, grid) == pytest.approx(1.0, abs=1e-3)

    def test_max_pairs_cap_and_determinism(self):
        rng = np.random.default_rng(2)
        ids = [f"f{j}" for j in range(10) for _ in range(10)]
        es = make_set(rng.normal(size=(100, 4)), ids)
        s1 = distance_distributions(es, seed=5, max_pairs=50)
        s2 = distance_distributions(es, seed=5, max_pairs=50)
        assert s1.positive.size == 50 and s1.negative.size == 50
        np.testing.assert_array_equal(s1.positive, s2.positive)
        np.testing.assert_array_equal(s1.negative, s2.negative)

    def test_too_few_records(self):
        es = make_set(np.eye(1, 3), ["a"])
        with pytest.raises(ValueError, match="at least 2"):
            distance_distributions(es, seed=0)
