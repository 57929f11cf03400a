"""Query/gallery evaluation: seeded split construction, L2-normalized
Euclidean ranking, rank-1 accuracy, average precision, mAP@k, the
cross-condition scenario matrix, rank-1 confusion analysis, and
positive/negative distance sampling.

Determinism rules: queries are drawn per fish id in lexicographic id order
with instances sorted by record_id; ranking ties break by ascending gallery
record_id; cross-condition cells consume one child seed per scenario in
scenario order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ALL_CONDITIONS, Condition, EmbeddingSet, rng_new, rng_shuffle

DEFAULT_K = 39

_EPS = 1e-12


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """v / (||v|| + 1e-12); the zero vector maps to itself."""
    v = np.asarray(v, dtype=np.float64)
    return v / (np.linalg.norm(v) + _EPS)


def _normalize_rows(x: np.ndarray) -> tuple[np.ndarray, int]:
    """Row-normalized copy plus the number of zero rows (degenerate inputs)."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    zero_rows = int(np.count_nonzero(norms == 0.0))
    return x / (norms + _EPS), zero_rows


@dataclass
class QueryGallerySplit:
    queries: list[int]  # positions into the set's record list
    gallery: list[int]
    seed: int


@dataclass
class RankedRetrieval:
    query_record_id: int
    query_fish_id: str
    query_species: str
    ranked_record_ids: np.ndarray
    relevance: np.ndarray  # bool, aligned with ranked_record_ids
    num_relevant: int
    ap: float
    rank1_hit: bool
    top1_fish_id: str
    top1_species: str


@dataclass
class EvalReport:
    r1: float
    map_at_k: float
    k: int
    num_queries: int
    scenario: str
    intra_errors: int
    inter_errors: int
    per_query: list[RankedRetrieval] = field(default_factory=list)
    excluded_queries: int = 0
    zero_vectors: int = 0
    pos_distances: np.ndarray | None = None
    neg_distances: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {
            "r1": self.r1,
            "map_at_k": self.map_at_k,
            "k": self.k,
            "num_queries": self.num_queries,
            "scenario": self.scenario,
            "errors": {"intra": self.intra_errors, "inter": self.inter_errors},
            "excluded_queries": self.excluded_queries,
            "zero_vectors": self.zero_vectors,
            "per_query": [
                {
                    "record_id": r.query_record_id,
                    "fish_id": r.query_fish_id,
                    "ap": r.ap,
                    "rank1_hit": r.rank1_hit,
                    "top1_fish_id": r.top1_fish_id,
                    "top1_species": r.top1_species,
                    "num_relevant": r.num_relevant,
                }
                for r in self.per_query
            ],
        }


def build_query_gallery(es: EmbeddingSet, seed: int) -> QueryGallerySplit:
    """One seeded query per fish id with >= 2 instances; everything else is gallery.

    Ids are visited in lexicographic order; within an id, instances are
    sorted by record_id and the query index is next() mod count.
    """
    if not es.records:
        raise ValueError("empty embedding set")
    rng = rng_new(seed)
    by_id: dict[str, list[int]] = {}
    for pos, rec in enumerate(es.records):
        by_id.setdefault(rec.fish_id, []).append(pos)
    queries: list[int] = []
    for fish_id in sorted(by_id):
        positions = sorted(by_id[fish_id], key=lambda p: es.records[p].record_id)
        if len(positions) < 2:
            continue
        queries.append(positions[rng.next() % len(positions)])
    if not queries:
        raise ValueError("no valid queries: no fish id has multiple instances")
    query_set = set(queries)
    gallery = [pos for pos in range(len(es.records)) if pos not in query_set]
    return QueryGallerySplit(queries=queries, gallery=gallery, seed=seed)


def rank(
    query_vec: np.ndarray,
    gallery_vecs: np.ndarray,
    gallery_record_ids=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Ascending-distance gallery order; exact ties break by ascending record_id.

    Inputs are re-normalized defensively. Returns (order, distances) where
    ``order`` indexes into the gallery and ``distances`` is aligned with it.
    """
    gallery_vecs = np.asarray(gallery_vecs, dtype=np.float64)
    if gallery_vecs.ndim != 2 or gallery_vecs.shape[0] == 0:
        raise ValueError("empty gallery")
    q = l2_normalize(query_vec)
    g, _ = _normalize_rows(gallery_vecs)
    dist = np.linalg.norm(g - q[None, :], axis=1)
    ids = (
        np.arange(len(dist))
        if gallery_record_ids is None
        else np.asarray(gallery_record_ids)
    )
    order = np.lexsort((ids, dist))
    return order, dist[order]


def precision_at(relevance, i: int) -> float:
    """Fraction of relevant items within the top i ranks (1-indexed)."""
    relevance = np.asarray(relevance, dtype=bool)
    if not (1 <= i <= len(relevance)):
        raise ValueError(f"rank {i} out of range for list of {len(relevance)}")
    return float(np.count_nonzero(relevance[:i])) / i


def average_precision(relevance, num_relevant: int) -> float:
    """(1/|R|) * sum over ranks of precision(i) * relevance(i).

    ``relevance`` may already be truncated; ``num_relevant`` is always the
    query's full relevant count.
    """
    if num_relevant < 1:
        raise ValueError("num_relevant must be >= 1; match-free queries are excluded upstream")
    relevance = np.asarray(relevance, dtype=bool)
    if relevance.size == 0:
        return 0.0
    hits = np.cumsum(relevance)
    ranks = np.arange(1, relevance.size + 1)
    return float(np.sum((hits / ranks)[relevance]) / num_relevant)


def map_at_k(retrievals: list[RankedRetrieval], k: int = DEFAULT_K) -> float:
    """Mean AP over queries with relevance truncated to the top k ranks, x100."""
    if not retrievals:
        raise ValueError("empty query set")
    aps = [average_precision(r.relevance[:k], r.num_relevant) for r in retrievals]
    return 100.0 * float(np.mean(aps))


def r1(retrievals: list[RankedRetrieval]) -> float:
    """Percent of queries whose top-1 gallery item shares the fish id."""
    if not retrievals:
        raise ValueError("empty query set")
    return 100.0 * float(np.mean([r.rank1_hit for r in retrievals]))


def error_analysis(retrievals: list[RankedRetrieval]) -> tuple[int, int, list[dict]]:
    """Classify every rank-1 miss as intra-species or inter-species confusion."""
    intra = 0
    inter = 0
    confusions: list[dict] = []
    for r in retrievals:
        if r.rank1_hit:
            continue
        same_species = r.top1_species == r.query_species
        intra += int(same_species)
        inter += int(not same_species)
        confusions.append(
            {
                "query_record_id": r.query_record_id,
                "query_fish_id": r.query_fish_id,
                "query_species": r.query_species,
                "top1_fish_id": r.top1_fish_id,
                "top1_species": r.top1_species,
                "kind": "intra" if same_species else "inter",
            }
        )
    return intra, inter, confusions


def _score_queries(
    es: EmbeddingSet,
    vectors: np.ndarray,
    query_positions: list[int],
    gallery_for_query,
    k: int,
    scenario: str,
    zero_vectors: int,
) -> EvalReport:
    retrievals: list[RankedRetrieval] = []
    excluded = 0
    for q in query_positions:
        gal = gallery_for_query(q)
        if len(gal) == 0:
            raise ValueError(f"empty gallery for scenario {scenario!r}")
        q_rec = es.records[q]
        gal_ids = np.array([es.records[g].record_id for g in gal])
        gal_fish = np.array([es.records[g].fish_id for g in gal], dtype=object)
        relevant_mask = gal_fish == q_rec.fish_id
        num_relevant = int(np.count_nonzero(relevant_mask))
        if num_relevant == 0:
            excluded += 1
            continue
        order, _dist = rank(vectors[q], vectors[gal], gal_ids)
        relevance = relevant_mask[order]
        top = gal[int(order[0])]
        retrievals.append(
            RankedRetrieval(
                query_record_id=q_rec.record_id,
                query_fish_id=q_rec.fish_id,
                query_species=q_rec.species,
                ranked_record_ids=gal_ids[order],
                relevance=relevance,
                num_relevant=num_relevant,
                ap=average_precision(relevance[:k], num_relevant),
                rank1_hit=bool(relevance[0]),
                top1_fish_id=es.records[top].fish_id,
                top1_species=es.records[top].species,
            )
        )
    if not retrievals:
        raise ValueError(f"no valid queries for scenario {scenario!r}")
    intra, inter, _ = error_analysis(retrievals)
    return EvalReport(
        r1=r1(retrievals),
        map_at_k=map_at_k(retrievals, k),
        k=k,
        num_queries=len(retrievals),
        scenario=scenario,
        intra_errors=intra,
        inter_errors=inter,
        per_query=retrievals,
        excluded_queries=excluded,
        zero_vectors=zero_vectors,
    )


def evaluate(
    es: EmbeddingSet, seed: int, k: int = DEFAULT_K, scenario: str = "single-pool"
) -> EvalReport:
    """Single-pool protocol: one query per multi-instance id, all remaining
    records of all ids form one comprehensive gallery."""
    split = build_query_gallery(es, seed)
    vectors, zero_vectors = _normalize_rows(es.matrix())
    gallery = np.array(split.gallery, dtype=int)
    return _score_queries(
        es, vectors, split.queries, lambda _q: gallery, k, scenario, zero_vectors
    )


def scenario_family(query_cond: Condition, gallery_cond: Condition) -> str:
    """identical / viewpoint / occlusion / compound, by which factors differ."""
    same_arr = query_cond.arrangement == gallery_cond.arrangement
    same_view = query_cond.viewpoint == gallery_cond.viewpoint
    if same_arr and same_view:
        return "identical"
    if same_arr:
        return "viewpoint"
    if same_view:
        return "occlusion"
    return "compound"


def condition_matrix() -> list[tuple[Condition, Condition]]:
    """All 16 query x gallery condition cells, query-major canonical order."""
    return [(qc, gc) for qc in ALL_CONDITIONS for gc in ALL_CONDITIONS]


def core_scenarios() -> list[tuple[Condition, Condition]]:
    """The ten canonical scenarios: every identical pair, then the
    viewpoint, occlusion and compound probes from the separated/touched sides."""
    sep_i, sep_f, tou_i, tou_f = ALL_CONDITIONS
    return [
        (sep_i, sep_i),
        (sep_f, sep_f),
        (tou_i, tou_i),
        (tou_f, tou_f),
        (sep_i, sep_f),
        (tou_i, tou_f),
        (sep_i, tou_i),
        (sep_f, tou_f),
        (sep_i, tou_f),
        (sep_f, tou_i),
    ]


def cross_condition_eval(
    es: EmbeddingSet,
    scenarios: list[tuple[Condition, Condition]],
    seed: int,
    k: int = DEFAULT_K,
) -> list[EvalReport]:
    """Evaluate each (query condition, gallery condition) scenario.

    Query pool: one seeded query per fish id present in the query
    condition. Gallery: every gallery-condition record, minus the query
    itself in identical-condition cells. Queries without a single gallery
    match are excluded and counted.
    """
    vectors, zero_vectors = _normalize_rows(es.matrix())
    by_condition: dict[Condition, list[int]] = {c: [] for c in ALL_CONDITIONS}
    for pos, rec in enumerate(es.records):
        by_condition[rec.condition].append(pos)

    master = rng_new(seed)
    reports: list[EvalReport] = []
    for qc, gc in scenarios:
        cell_rng = rng_new(master.next())
        label = f"{qc.label}|{gc.label}"
        q_pool = by_condition[qc]
        g_pool = by_condition[gc]
        if not q_pool or not g_pool:
            raise ValueError(f"empty pools for scenario {label!r}")

        by_id: dict[str, list[int]] = {}
        for pos in q_pool:
            by_id.setdefault(es.records[pos].fish_id, []).append(pos)
        queries = []
        for fish_id in sorted(by_id):
            positions = sorted(by_id[fish_id], key=lambda p: es.records[p].record_id)
            queries.append(positions[cell_rng.next() % len(positions)])

        gallery_all = np.array(g_pool, dtype=int)
        if qc == gc:
            def gallery_for(q, _gal=gallery_all):
                return _gal[_gal != q]
        else:
            def gallery_for(_q, _gal=gallery_all):
                return _gal

        reports.append(
            _score_queries(es, vectors, queries, gallery_for, k, label, zero_vectors)
        )
    return reports


@dataclass
class DistanceSamples:
    positive: np.ndarray
    negative: np.ndarray
    kde: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None  # grid, pos, neg


def _silverman_bandwidth(samples: np.ndarray) -> float:
    m = samples.size
    if m < 2:
        return 0.0
    sigma = float(np.std(samples, ddof=1))
    q75, q25 = np.percentile(samples, [75.0, 25.0])
    iqr = float(q75 - q25)
    spread = min(sigma, iqr / 1.34) if iqr > 0 else sigma
    return 0.9 * spread * m ** (-0.2)


def _gaussian_kde(samples: np.ndarray, grid: np.ndarray, h: float) -> np.ndarray:
    z = (grid[:, None] - samples[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (samples.size * h * math.sqrt(2.0 * math.pi))


def distance_distributions(
    es: EmbeddingSet, seed: int, max_pairs: int = 10_000
) -> DistanceSamples:
    """Sampled same-id and different-id pair distances, plus optional KDE curves.

    Pairs are drawn without replacement from the seeded stream. KDE uses a
    Gaussian kernel with the Silverman bandwidth
    0.9 * min(sigma, IQR/1.34) * m^(-1/5) on a shared 256-point grid; curves
    are omitted when either side's bandwidth degenerates to zero.
    """
    n = len(es.records)
    if n < 2:
        raise ValueError("need at least 2 records to sample pairs")
    rng = rng_new(seed)
    vectors, _ = _normalize_rows(es.matrix())
    labels = es.fish_ids()

    same_pairs = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if labels[i] == labels[j]
    ]
    total_pairs = n * (n - 1) // 2
    n_diff = total_pairs - len(same_pairs)

    if len(same_pairs) <= max_pairs:
        pos_pairs = same_pairs
    else:
        order = rng_shuffle(rng, len(same_pairs))
        pos_pairs = [same_pairs[idx] for idx in order[:max_pairs]]

    # choose negatives: enumerate when small, else rejection-sample distinct pairs
    if n_diff <= max_pairs:
        neg_pairs = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if labels[i] != labels[j]
        ]
    else:
        seen: set[tuple[int, int]] = set()
        neg_pairs = []
        while len(neg_pairs) < max_pairs:
            i = rng.next() % n
            j = rng.next() % n
            if i == j or labels[i] == labels[j]:
                continue
            pair = (i, j) if i < j else (j, i)
            if pair in seen:
                continue
            seen.add(pair)
            neg_pairs.append(pair)

    def dists(pairs):
        if not pairs:
            return np.zeros(0, dtype=np.float64)
        a = vectors[[p[0] for p in pairs]]
        b = vectors[[p[1] for p in pairs]]
        return np.linalg.norm(a - b, axis=1)

    pos = dists(pos_pairs)
    neg = dists(neg_pairs)

    kde = None
    if pos.size >= 2 and neg.size >= 2:
        h_pos = _silverman_bandwidth(pos)
        h_neg = _silverman_bandwidth(neg)
        if h_pos > 0.0 and h_neg > 0.0:
            pad = 5.0 * max(h_pos, h_neg)
            lo = min(pos.min(), neg.min()) - pad
            hi = max(pos.max(), neg.max()) + pad
            grid = np.linspace(lo, hi, 256)
            kde = (grid, _gaussian_kde(pos, grid, h_pos), _gaussian_kde(neg, grid, h_neg))
    return DistanceSamples(positive=pos, negative=neg, kde=kde)
