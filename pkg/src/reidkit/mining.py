"""Distance kernels, the identity-balanced PK batch sampler, and triplet miners.

Miners enumerate EVERY qualifying triplet, ordered ascending by
(anchor, positive, negative); they are filters over the batch, not
per-anchor argmax selectors. ``mine_hard`` and ``mine_semihard`` partition
the placements of d(a, n) relative to d(a, p), so their outputs are
disjoint for any input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream, rng_shuffle


@dataclass(frozen=True)
class PKConfig:
    """P unique identities per batch, K instances per identity."""

    p: int
    k: int

    def validate(self) -> None:
        if self.p < 2:
            raise ValueError(f"P must be >= 2, got {self.p}")
        if self.k < 2:
            raise ValueError(f"K must be >= 2, got {self.k}")

    @property
    def batch_size(self) -> int:
        return self.p * self.k


@dataclass(frozen=True)
class Triplet:
    a: int
    p: int
    n: int


def pairwise_euclidean(x: np.ndarray) -> np.ndarray:
    """Full n x n Euclidean distance matrix with float64 accumulation.

    Uses the Gram-matrix expansion; round-off can push squared distances
    slightly negative, so they are clamped at zero before the sqrt. The
    result is explicitly symmetrized with a zero diagonal.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected (n, d) array, got shape {x.shape}")
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    d2 = np.maximum(d2, 0.0)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def _instances_by_identity(labels) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for idx, lab in enumerate(labels):
        groups.setdefault(lab, []).append(idx)
    return groups


def _draw_instances(indices: list[int], k: int, rng: RngStream) -> list[int]:
    # Without replacement when the identity has >= k instances, else with
    # replacement so the batch shape stays fixed.
    count = len(indices)
    if count >= k:
        perm = rng_shuffle(rng, count)
        return [indices[j] for j in perm[:k]]
    return [indices[rng.next() % count] for _ in range(k)]


def pk_sample(labels, cfg: PKConfig, rng: RngStream) -> list[int]:
    """One identity-major batch of P*K record indices.

    Identities are ordered lexicographically, shuffled with the stream, and
    the first P are taken; instances are drawn per identity in ascending
    index order.
    """
    cfg.validate()
    groups = _instances_by_identity(labels)
    ids = sorted(groups)
    if len(ids) < cfg.p:
        raise ValueError(
            f"insufficient identities: need {cfg.p}, have {len(ids)}"
        )
    perm = rng_shuffle(rng, len(ids))
    batch: list[int] = []
    for slot in perm[: cfg.p]:
        batch.extend(_draw_instances(groups[ids[slot]], cfg.k, rng))
    return batch


def epoch_batches(labels, cfg: PKConfig, rng: RngStream) -> list[list[int]]:
    """One epoch = one pass over shuffled identities in groups of P.

    A trailing group with fewer than P identities is dropped.
    """
    cfg.validate()
    groups = _instances_by_identity(labels)
    ids = sorted(groups)
    if len(ids) < cfg.p:
        raise ValueError(
            f"insufficient identities: need {cfg.p}, have {len(ids)}"
        )
    perm = rng_shuffle(rng, len(ids))
    batches: list[list[int]] = []
    for start in range(0, len(ids) - cfg.p + 1, cfg.p):
        batch: list[int] = []
        for slot in perm[start : start + cfg.p]:
            batch.extend(_draw_instances(groups[ids[slot]], cfg.k, rng))
        batches.append(batch)
    return batches


def _mine(d: np.ndarray, labels, predicate) -> list[Triplet]:
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValueError(f"distance matrix must be square, got {d.shape}")
    if len(labels) != n:
        raise ValueError(f"labels length {len(labels)} != matrix size {n}")
    labs = np.asarray(labels, dtype=object)
    triplets: list[Triplet] = []
    for a in range(n):
        same = labs == labs[a]
        pos = np.flatnonzero(same)
        pos = pos[pos != a]
        neg = np.flatnonzero(~same)
        if pos.size == 0 or neg.size == 0:
            continue
        keep = predicate(d[a, pos][:, None], d[a, neg][None, :])
        for pi, ni in np.argwhere(keep):
            triplets.append(Triplet(a, int(pos[pi]), int(neg[ni])))
    return triplets


def mine_hard(d: np.ndarray, labels, margin: float = 0.5) -> list[Triplet]:
    """All triplets where the negative sits closer to the anchor than the positive.

    ``margin`` is accepted for interface parity with the semi-hard miner but
    plays no role in this predicate.
    """
    del margin
    return _mine(d, labels, lambda dap, dan: dan < dap)


def mine_semihard(d: np.ndarray, labels, margin: float = 0.5) -> list[Triplet]:
    """All triplets with d(a,p) < d(a,n) < d(a,p) + margin."""
    return _mine(d, labels, lambda dap, dan: (dap < dan) & (dan < dap + margin))


def triplet_loss(x: np.ndarray, triplets, margin: float = 0.5) -> float:
    """Mean hinge loss max(0, d(a,p) - d(a,n) + margin) over the triplets.

    Distances are true Euclidean on the given (already normalized) batch
    embeddings. An empty triplet list yields 0 by convention.
    """
    if not triplets:
        return 0.0
    x = np.asarray(x, dtype=np.float64)
    a = np.array([t.a for t in triplets])
    p = np.array([t.p for t in triplets])
    n = np.array([t.n for t in triplets])
    dap = np.linalg.norm(x[a] - x[p], axis=1)
    dan = np.linalg.norm(x[a] - x[n], axis=1)
    return float(np.mean(np.maximum(0.0, dap - dan + margin)))
