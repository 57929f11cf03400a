"""Domain types, the deterministic PRNG, and the on-disk embedding store.

The store is a two-file format shared with external feature extractors:

* ``<name>.meta.jsonl`` -- UTF-8 JSON lines. The first line is a header
  ``{"magic": "REIDSTORE", "version": 1, "dim": D, "count": N}``; each
  following line describes one record and names the blob row holding its
  vector.
* ``<name>.f32`` -- raw row-major little-endian float32 matrix, N x D.

The PRNG is splitmix64 (state += 0x9E3779B97F4A7C15, then the standard
two-multiply scramble). Any reimplementation in another language must
reproduce the committed golden sequences bit-exactly; see the README for
the exact update rule and the shuffle/unit-double derivations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

STORE_MAGIC = "REIDSTORE"
STORE_VERSION = 1

_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


class StoreFormatError(ValueError):
    """Malformed or inconsistent embedding-store files."""


class Arrangement(Enum):
    SEPARATED = "separated"
    TOUCHED = "touched"


class Viewpoint(Enum):
    INITIAL = "initial"
    FLIPPED = "flipped"


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class Condition:
    """Capture condition of one instance: arrangement x viewpoint."""

    arrangement: Arrangement
    viewpoint: Viewpoint

    @property
    def label(self) -> str:
        return f"{self.arrangement.value}-{self.viewpoint.value}"


#: The four conditions in canonical (arrangement-major) order.
ALL_CONDITIONS: tuple[Condition, ...] = tuple(
    Condition(a, v) for a in Arrangement for v in Viewpoint
)


@dataclass
class EmbeddingRecord:
    """One instance: a feature vector plus identity/species/condition metadata."""

    record_id: int
    fish_id: str
    species: str
    condition: Condition
    split: Split
    vector: np.ndarray  # float32, shape (dim,)

    def validate(self, dim: int) -> None:
        if self.record_id < 0:
            raise ValueError(f"record_id must be non-negative, got {self.record_id}")
        v = np.asarray(self.vector)
        if v.ndim != 1 or v.shape[0] != dim:
            raise ValueError(
                f"record {self.record_id}: vector length {v.shape} != dim {dim}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError(f"record {self.record_id}: vector has NaN/Inf entries")


@dataclass
class EmbeddingSet:
    """Dimension-homogeneous, ordered collection of records.

    Record order is the canonical index order used by samplers, miners and
    rankers; every index-valued API in this package refers to positions in
    ``records``.
    """

    dim: int
    records: list[EmbeddingRecord] = field(default_factory=list)

    def validate(self) -> None:
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        seen: set[int] = set()
        for rec in self.records:
            rec.validate(self.dim)
            if rec.record_id in seen:
                raise ValueError(f"duplicate record_id {rec.record_id}")
            seen.add(rec.record_id)

    def __len__(self) -> int:
        return len(self.records)

    def matrix(self, dtype=np.float64) -> np.ndarray:
        """All vectors stacked as an (n, dim) array. Math defaults to float64."""
        if not self.records:
            return np.zeros((0, self.dim), dtype=dtype)
        return np.stack([r.vector for r in self.records]).astype(dtype)

    def fish_ids(self) -> list[str]:
        return [r.fish_id for r in self.records]

    def record_ids(self) -> list[int]:
        return [r.record_id for r in self.records]


class RngStream:
    """splitmix64 stream. Single-owner: derive children via rng_new(parent.next())."""

    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & _MASK64

    def next(self) -> int:
        """Advance the state by the splitmix64 gamma and return the scrambled output."""
        self.state = (self.state + _SPLITMIX_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def next_unit_double(self) -> float:
        """Uniform double in [0, 1): top 53 bits of next(), scaled by 2^-53."""
        return (self.next() >> 11) * 2.0**-53


def rng_new(seed: int) -> RngStream:
    """Deterministic stream from a 64-bit seed; identical seeds give identical sequences."""
    return RngStream(seed)


def rng_shuffle(stream: RngStream, n: int) -> list[int]:
    """Fisher-Yates permutation of 0..n-1 using draws ``next() mod k``.

    Loop runs i = n-1 down to 1 with j = next() mod (i+1). Modulo bias is
    accepted and documented: k never exceeds dataset sizes, so the bias is
    negligible and identical across implementations.
    """
    if n < 1:
        raise ValueError("empty domain")
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = stream.next() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _record_to_meta(rec: EmbeddingRecord, row: int) -> dict:
    return {
        "record_id": rec.record_id,
        "fish_id": rec.fish_id,
        "species": rec.species,
        "arrangement": rec.condition.arrangement.value,
        "viewpoint": rec.condition.viewpoint.value,
        "split": rec.split.value,
        "row": row,
    }


def store_write(es: EmbeddingSet, path_meta, path_blob) -> None:
    """Write the two-file store; read-after-write round-trips bit-exactly.

    Vectors are cast to little-endian float32 on export; in-memory sets
    produced by ``store_read`` hold float32 so the round-trip is the
    identity.
    """
    es.validate()
    header = {
        "magic": STORE_MAGIC,
        "version": STORE_VERSION,
        "dim": es.dim,
        "count": len(es.records),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(
        json.dumps(_record_to_meta(rec, row), sort_keys=True)
        for row, rec in enumerate(es.records)
    )
    Path(path_meta).write_text("\n".join(lines) + "\n", encoding="utf-8")

    blob = es.matrix(dtype=np.float32).astype("<f4")
    Path(path_blob).write_bytes(blob.tobytes(order="C"))


def _parse_header(line: str) -> tuple[int, int]:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise StoreFormatError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("magic") != STORE_MAGIC:
        raise StoreFormatError(
            f"magic mismatch: expected {STORE_MAGIC!r}, got {header.get('magic')!r}"
            if isinstance(header, dict)
            else "magic mismatch: header is not an object"
        )
    if header.get("version") != STORE_VERSION:
        raise StoreFormatError(f"unsupported store version {header.get('version')!r}")
    dim = header.get("dim")
    count = header.get("count")
    if not isinstance(dim, int) or dim <= 0:
        raise StoreFormatError(f"invalid dim in header: {dim!r}")
    if not isinstance(count, int) or count < 0:
        raise StoreFormatError(f"invalid count in header: {count!r}")
    return dim, count


_ARRANGEMENTS = {a.value: a for a in Arrangement}
_VIEWPOINTS = {v.value: v for v in Viewpoint}
_SPLITS = {s.value: s for s in Split}


def _parse_meta_line(lineno: int, line: str, count: int) -> tuple[dict, int]:
    try:
        meta = json.loads(line)
    except json.JSONDecodeError as exc:
        raise StoreFormatError(f"line {lineno}: invalid JSON: {exc}") from exc
    for key in ("record_id", "fish_id", "species", "arrangement", "viewpoint", "split", "row"):
        if key not in meta:
            raise StoreFormatError(f"line {lineno}: missing field {key!r}")
    row = meta["row"]
    if not isinstance(row, int) or not (0 <= row < count):
        raise StoreFormatError(f"line {lineno}: row out of range: {row!r} (count {count})")
    if meta["arrangement"] not in _ARRANGEMENTS:
        raise StoreFormatError(f"line {lineno}: unknown arrangement {meta['arrangement']!r}")
    if meta["viewpoint"] not in _VIEWPOINTS:
        raise StoreFormatError(f"line {lineno}: unknown viewpoint {meta['viewpoint']!r}")
    if meta["split"] not in _SPLITS:
        raise StoreFormatError(f"line {lineno}: unknown split {meta['split']!r}")
    if not isinstance(meta["record_id"], int) or meta["record_id"] < 0:
        raise StoreFormatError(f"line {lineno}: invalid record_id {meta['record_id']!r}")
    return meta, row


def store_read(path_meta, path_blob) -> EmbeddingSet:
    """Read and validate a two-file store.

    Distinct diagnostics: magic mismatch, blob length mismatch, NaN in blob,
    duplicate record_id, row out of range, duplicate/missing row.
    """
    text = Path(path_meta).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise StoreFormatError("magic mismatch: metadata file is empty")
    dim, count = _parse_header(lines[0])

    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != count:
        raise StoreFormatError(
            f"record count mismatch: header says {count}, found {len(body)} metadata lines"
        )

    raw = Path(path_blob).read_bytes()
    expected = count * dim * 4
    if len(raw) != expected:
        raise StoreFormatError(
            f"blob length mismatch: expected {expected} bytes ({count} x {dim} x 4), got {len(raw)}"
        )
    mat = np.frombuffer(raw, dtype="<f4").reshape(count, dim)
    if not np.all(np.isfinite(mat)):
        raise StoreFormatError("NaN in blob: vectors must be finite")

    records: list[EmbeddingRecord] = []
    seen_ids: set[int] = set()
    seen_rows: set[int] = set()
    for lineno, line in enumerate(body, start=2):
        meta, row = _parse_meta_line(lineno, line, count)
        if meta["record_id"] in seen_ids:
            raise StoreFormatError(f"duplicate record_id {meta['record_id']}")
        if row in seen_rows:
            raise StoreFormatError(f"duplicate row {row}")
        seen_ids.add(meta["record_id"])
        seen_rows.add(row)
        records.append(
            EmbeddingRecord(
                record_id=meta["record_id"],
                fish_id=str(meta["fish_id"]),
                species=str(meta["species"]),
                condition=Condition(
                    _ARRANGEMENTS[meta["arrangement"]], _VIEWPOINTS[meta["viewpoint"]]
                ),
                split=_SPLITS[meta["split"]],
                vector=np.array(mat[row], dtype=np.float32),
            )
        )
    if len(seen_rows) != count:
        raise StoreFormatError("missing row: metadata does not cover every blob row")
    return EmbeddingSet(dim=dim, records=records)


def store_paths(base) -> tuple[Path, Path]:
    """Conventional file pair for a store base path: <base>.meta.jsonl, <base>.f32."""
    base = Path(base)
    return base.with_name(base.name + ".meta.jsonl"), base.with_name(base.name + ".f32")
