"""Projection-head training on frozen features: triplet margin loss with
within-batch mining, AdamW, and reduce-on-plateau scheduling.

All training math runs in float64; heads are rounded to float32 only on
export. Runs are fully deterministic given the config seed: the master
stream initializes the head, then each epoch derives one child stream for
train batching and one for validation batching.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import EmbeddingSet, RngStream, rng_new
from .mining import (
    PKConfig,
    epoch_batches,
    mine_hard,
    mine_semihard,
    pairwise_euclidean,
    triplet_loss,
)

HEAD_MAGIC = "REIDHEAD"
HEAD_VERSION = 1

_NORM_EPS = 1e-12
_PLATEAU_MIN_DELTA = 1e-8

MINERS = {"hard": mine_hard, "semihard": mine_semihard}


@dataclass
class LinearHead:
    """Trainable projection W (d_in x d_out) plus bias b, applied before L2 normalization."""

    w: np.ndarray
    b: np.ndarray

    @property
    def d_in(self) -> int:
        return self.w.shape[0]

    @property
    def d_out(self) -> int:
        return self.w.shape[1]


@dataclass
class TrainConfig:
    margin: float = 0.5
    learning_rate: float = 1e-5
    weight_decay: float = 1e-4
    epochs: int = 300
    plateau_factor: float = 0.2
    plateau_patience: int = 10
    pk: PKConfig = field(default_factory=lambda: PKConfig(4, 4))
    seed: int = 0
    embed_dim: int = 512
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mining: str = "hard"

    def validate(self) -> None:
        self.pk.validate()
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not (0.0 < self.plateau_factor < 1.0):
            raise ValueError(f"plateau_factor must lie in (0, 1), got {self.plateau_factor}")
        if self.plateau_patience < 1:
            raise ValueError(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {self.embed_dim}")
        for name, beta in (("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)):
            if not (0.0 <= beta < 1.0):
                raise ValueError(f"{name} must lie in [0, 1), got {beta}")
        if self.adam_eps <= 0:
            raise ValueError(f"adam_eps must be positive, got {self.adam_eps}")
        if self.mining not in MINERS:
            raise ValueError(f"mining must be one of {sorted(MINERS)}, got {self.mining!r}")


@dataclass
class OptimizerState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    step: int
    lr: float
    best_val: float = math.inf
    epochs_since_improvement: int = 0

    @classmethod
    def for_head(cls, head: LinearHead, lr: float) -> "OptimizerState":
        return cls(
            m_w=np.zeros_like(head.w),
            v_w=np.zeros_like(head.w),
            m_b=np.zeros_like(head.b),
            v_b=np.zeros_like(head.b),
            step=0,
            lr=lr,
        )


@dataclass
class TrainHistory:
    """One entry per completed epoch."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    active_triplets: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def rows(self):
        for epoch in range(len(self)):
            yield (
                epoch,
                self.train_loss[epoch],
                self.val_loss[epoch],
                self.lr[epoch],
                self.active_triplets[epoch],
            )


def init_head(d_in: int, d_out: int, rng: RngStream) -> LinearHead:
    """W uniform on +-1/sqrt(d_in), filled row-major from the stream; b = 0."""
    bound = 1.0 / math.sqrt(d_in)
    w = np.empty((d_in, d_out), dtype=np.float64)
    flat = w.reshape(-1)
    for i in range(flat.size):
        flat[i] = (2.0 * rng.next_unit_double() - 1.0) * bound
    return LinearHead(w=w, b=np.zeros(d_out, dtype=np.float64))


def head_forward(head: LinearHead, x: np.ndarray) -> np.ndarray:
    """Y = X W + b followed by row-wise L2 normalization y / (||y|| + 1e-12)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.d_in:
        raise ValueError(
            f"input shape {x.shape} incompatible with head ({head.d_in} -> {head.d_out})"
        )
    y = x @ head.w + head.b
    norms = np.linalg.norm(y, axis=1, keepdims=True)
    return y / (norms + _NORM_EPS)


def loss_backward(
    head: LinearHead, x: np.ndarray, triplets, margin: float
) -> tuple[float, np.ndarray, np.ndarray, int]:
    """Mean triplet margin loss and its analytic gradient w.r.t. W and b.

    Returns (loss, grad_w, grad_b, skipped): ``skipped`` counts triplets
    whose anchor-positive or anchor-negative distance is exactly zero
    between distinct rows; their gradient term sits at the sqrt cusp and is
    dropped (the loss value still includes them).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.d_in:
        raise ValueError(
            f"input shape {x.shape} incompatible with head ({head.d_in} -> {head.d_out})"
        )
    grad_w = np.zeros_like(head.w)
    grad_b = np.zeros_like(head.b)
    if not triplets:
        return 0.0, grad_w, grad_b, 0

    y = x @ head.w + head.b
    norms = np.linalg.norm(y, axis=1)
    emb = y / (norms[:, None] + _NORM_EPS)

    a = np.array([t.a for t in triplets])
    p = np.array([t.p for t in triplets])
    n = np.array([t.n for t in triplets])
    dap = np.linalg.norm(emb[a] - emb[p], axis=1)
    dan = np.linalg.norm(emb[a] - emb[n], axis=1)
    hinge = dap - dan + margin
    loss = float(np.mean(np.maximum(0.0, hinge)))

    active = hinge > 0.0
    degenerate = (dap == 0.0) | (dan == 0.0)
    skipped = int(np.count_nonzero(active & degenerate))
    usable = active & ~degenerate
    if not usable.any():
        return loss, grad_w, grad_b, skipped

    grad_emb = np.zeros_like(emb)
    scale = 1.0 / len(triplets)
    ia, ip, in_ = a[usable], p[usable], n[usable]
    u_ap = (emb[ia] - emb[ip]) / dap[usable, None]
    u_an = (emb[ia] - emb[in_]) / dan[usable, None]
    np.add.at(grad_emb, ia, scale * (u_ap - u_an))
    np.add.at(grad_emb, ip, -scale * u_ap)
    np.add.at(grad_emb, in_, scale * u_an)

    # Exact Jacobian of y -> y / (||y|| + eps):
    #   J = I / (r + eps) - y y^T / (r (r + eps)^2),  degenerating to I / eps at r = 0.
    r = norms[:, None]
    dot = np.sum(y * grad_emb, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        correction = np.where(r > 0.0, y * dot / (r * (r + _NORM_EPS) ** 2), 0.0)
    grad_y = grad_emb / (r + _NORM_EPS) - correction

    grad_w = x.T @ grad_y
    grad_b = grad_y.sum(axis=0)
    return loss, grad_w, grad_b, skipped


def adamw_step(
    head: LinearHead,
    grad_w: np.ndarray,
    grad_b: np.ndarray,
    state: OptimizerState,
    cfg: TrainConfig,
) -> None:
    """Decoupled-weight-decay Adam update in place. The bias is exempt from decay."""
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    state.step += 1
    t = state.step
    state.m_w = b1 * state.m_w + (1.0 - b1) * grad_w
    state.v_w = b2 * state.v_w + (1.0 - b2) * grad_w * grad_w
    state.m_b = b1 * state.m_b + (1.0 - b1) * grad_b
    state.v_b = b2 * state.v_b + (1.0 - b2) * grad_b * grad_b

    mhat_w = state.m_w / (1.0 - b1**t)
    vhat_w = state.v_w / (1.0 - b2**t)
    mhat_b = state.m_b / (1.0 - b1**t)
    vhat_b = state.v_b / (1.0 - b2**t)

    head.w -= state.lr * mhat_w / (np.sqrt(vhat_w) + eps) + state.lr * cfg.weight_decay * head.w
    head.b -= state.lr * mhat_b / (np.sqrt(vhat_b) + eps)


def plateau_update(
    state: OptimizerState,
    val_loss: float,
    factor: float,
    patience: int,
) -> None:
    """Reduce lr by ``factor`` after ``patience`` consecutive non-improving epochs."""
    if val_loss < state.best_val - _PLATEAU_MIN_DELTA:
        state.best_val = val_loss
        state.epochs_since_improvement = 0
        return
    state.epochs_since_improvement += 1
    if state.epochs_since_improvement >= patience:
        state.lr *= factor
        state.epochs_since_improvement = 0


def _mined_batch_loss(
    head: LinearHead, x: np.ndarray, labels: list[str], cfg: TrainConfig
) -> tuple[float, list]:
    emb = head_forward(head, x)
    d = pairwise_euclidean(emb)
    trips = MINERS[cfg.mining](d, labels, cfg.margin)
    return triplet_loss(emb, trips, cfg.margin), trips


def train(
    train_set: EmbeddingSet, val_set: EmbeddingSet, cfg: TrainConfig
) -> tuple[LinearHead, TrainHistory]:
    """Full training loop; deterministic given cfg.seed.

    Per epoch: PK batches over the train identities, within-batch mining,
    analytic backward, AdamW step (skipped when a batch mines no triplets);
    then a mined validation pass with its own per-epoch stream, and the
    plateau scheduler.
    """
    cfg.validate()
    if train_set.dim != val_set.dim:
        raise ValueError(
            f"train/val dims differ: {train_set.dim} vs {val_set.dim}"
        )
    master = rng_new(cfg.seed)
    head = init_head(train_set.dim, cfg.embed_dim, master)
    state = OptimizerState.for_head(head, cfg.learning_rate)
    history = TrainHistory()

    train_x = train_set.matrix()
    train_labels = train_set.fish_ids()
    val_x = val_set.matrix()
    val_labels = val_set.fish_ids()

    for _epoch in range(cfg.epochs):
        train_rng = rng_new(master.next())
        val_rng = rng_new(master.next())
        lr_used = state.lr

        batch_losses: list[float] = []
        active = 0
        for batch in epoch_batches(train_labels, cfg.pk, train_rng):
            xb = train_x[batch]
            labs = [train_labels[i] for i in batch]
            emb = head_forward(head, xb)
            trips = MINERS[cfg.mining](pairwise_euclidean(emb), labs, cfg.margin)
            loss, grad_w, grad_b, _skipped = loss_backward(head, xb, trips, cfg.margin)
            batch_losses.append(loss)
            active += len(trips)
            if trips:
                adamw_step(head, grad_w, grad_b, state, cfg)

        val_losses = [
            _mined_batch_loss(head, val_x[batch], [val_labels[i] for i in batch], cfg)[0]
            for batch in epoch_batches(val_labels, cfg.pk, val_rng)
        ]
        epoch_val = float(np.mean(val_losses)) if val_losses else 0.0

        history.train_loss.append(float(np.mean(batch_losses)) if batch_losses else 0.0)
        history.val_loss.append(epoch_val)
        history.lr.append(lr_used)
        history.active_triplets.append(active)
        plateau_update(state, epoch_val, cfg.plateau_factor, cfg.plateau_patience)

    return head, history


def head_paths(base) -> tuple[Path, Path]:
    base = Path(base)
    return base.with_name(base.name + ".meta.json"), base.with_name(base.name + ".f32")


def save_head(head: LinearHead, path_meta, path_blob) -> None:
    """Meta JSON with dims plus an f32 blob of W (row-major) then b."""
    meta = {
        "magic": HEAD_MAGIC,
        "version": HEAD_VERSION,
        "d_in": head.d_in,
        "d_out": head.d_out,
    }
    Path(path_meta).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    blob = np.concatenate([head.w.reshape(-1), head.b]).astype("<f4")
    Path(path_blob).write_bytes(blob.tobytes())


def load_head(path_meta, path_blob) -> LinearHead:
    meta = json.loads(Path(path_meta).read_text(encoding="utf-8"))
    if meta.get("magic") != HEAD_MAGIC:
        raise ValueError(f"magic mismatch: expected {HEAD_MAGIC!r}, got {meta.get('magic')!r}")
    d_in, d_out = int(meta["d_in"]), int(meta["d_out"])
    raw = np.frombuffer(Path(path_blob).read_bytes(), dtype="<f4")
    expected = d_in * d_out + d_out
    if raw.size != expected:
        raise ValueError(f"head blob length mismatch: expected {expected} floats, got {raw.size}")
    w = raw[: d_in * d_out].astype(np.float64).reshape(d_in, d_out)
    b = raw[d_in * d_out :].astype(np.float64)
    return LinearHead(w=w, b=b)


_INT_KEYS = {"epochs", "plateau_patience", "p", "k", "seed", "embed_dim"}
_FLOAT_KEYS = {
    "margin",
    "learning_rate",
    "weight_decay",
    "plateau_factor",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
}
_STR_KEYS = {"mining"}


def parse_train_config(path) -> TrainConfig:
    """Read a UTF-8 ``key = value`` config file; '#' starts a comment.

    Unknown keys and malformed lines are collected and reported together
    with their line numbers.
    """
    cfg = TrainConfig()
    pk_p, pk_k = cfg.pk.p, cfg.pk.k
    errors: list[str] = []
    for lineno, raw in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                parsed: object = int(value)
            elif key in _FLOAT_KEYS:
                parsed = float(value)
            elif key in _STR_KEYS:
                parsed = value
            else:
                errors.append(f"line {lineno}: unknown key {key!r}")
                continue
        except ValueError:
            errors.append(f"line {lineno}: invalid value for {key!r}: {value!r}")
            continue
        if key == "p":
            pk_p = parsed
        elif key == "k":
            pk_k = parsed
        else:
            cfg = replace(cfg, **{key: parsed})
    if errors:
        raise ValueError("config errors:\n" + "\n".join(errors))
    cfg = replace(cfg, pk=PKConfig(pk_p, pk_k))
    cfg.validate()
    return cfg
