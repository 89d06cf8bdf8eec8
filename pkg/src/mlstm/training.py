"""Per-user stochastic training with Adadelta, and checkpoint persistence."""
from __future__ import annotations

import json
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, CheckpointVersionError, TrainingError
from .model import (ModelParams, backward_user, forward_user, init_params,
                    predicted_class, user_loss)
from .numerics import DTYPE, SeededRng

log = logging.getLogger(__name__)

MAGIC = b"MLSTM1"
FORMAT_VERSION = 1


@dataclass
class AdadeltaState:
    """Decayed averages of squared gradients and squared updates, flat like ``params.vector``."""

    sq_grad: np.ndarray
    sq_delta: np.ndarray
    rho: float = 0.95
    eps: float = 1e-6

    @classmethod
    def zeros(cls, params, rho=0.95, eps=1e-6):
        return cls(np.zeros(params.size, dtype=DTYPE), np.zeros(params.size, dtype=DTYPE), rho, eps)


def adadelta_update(state, params, grads):
    """One Adadelta step. Returns new ``(params, state)``; inputs are not modified."""
    g = grads.vector
    if g.shape != params.vector.shape or state.sq_grad.shape != g.shape or state.sq_delta.shape != g.shape:
        raise ValueError("adadelta_update: parameter, gradient and accumulator shapes differ")
    rho, eps = state.rho, state.eps
    sq_grad = rho * state.sq_grad + (1.0 - rho) * g * g
    delta = -(np.sqrt(state.sq_delta + eps) / np.sqrt(sq_grad + eps)) * g
    sq_delta = rho * state.sq_delta + (1.0 - rho) * delta * delta
    return params.like(params.vector + delta), AdadeltaState(sq_grad, sq_delta, rho, eps)


def clip_gradients(grads, max_norm):
    """Rescale ``grads`` so its global L2 norm is at most ``max_norm`` (inf disables)."""
    if not np.isfinite(max_norm):
        return grads
    norm = float(np.sqrt(grads.vector @ grads.vector))
    if norm > max_norm:
        return grads.like(grads.vector * (max_norm / norm))
    return grads


@dataclass
class TrainConfig:
    epochs: int = 25
    hidden: int = 32
    word_dim: int = 50
    seed: int = 0
    rho: float = 0.95
    eps: float = 1e-6
    clip_norm: float = 5.0
    shuffle: bool = False
    init_bound: float = 0.08

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.hidden < 1:
            raise ValueError("hidden must be at least 1")


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def __len__(self):
        return len(self.loss)


def train(dataset, cfg, n_classes=2, on_epoch=None):
    """Fit a model with one Adadelta update per user per epoch.

    ``dataset`` is a list of AspectSequences. Epoch loss and accuracy are
    accumulated from each user's forward pass just before its update.
    ``on_epoch(epoch, history)`` is called after every epoch if given.
    """
    if not dataset:
        raise TrainingError("empty training set")
    labels = [a.y for a in dataset]
    if len(set(labels)) < 2:
        raise TrainingError("training set contains a single class")
    input_dims = dataset[0].input_dims
    if any(a.input_dims != input_dims for a in dataset):
        raise TrainingError("users have inconsistent aspect dimensions")

    rng = SeededRng(cfg.seed)
    params = init_params(input_dims, cfg.hidden, n_classes, rng, bound=cfg.init_bound)
    state = AdadeltaState.zeros(params, cfg.rho, cfg.eps)
    shuffle_rng = rng.spawn(1)
    history = TrainHistory()
    order = np.arange(len(dataset))
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        if cfg.shuffle:
            order = shuffle_rng.permutation(len(dataset))
        total_loss = 0.0
        correct = 0
        for idx in order:
            user = dataset[idx]
            trace = forward_user(user, params)
            loss = user_loss(trace, user.y)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, user {user.user_id}")
            total_loss += loss
            correct += predicted_class(trace.probs) == user.y
            grads = clip_gradients(backward_user(trace, user.y), cfg.clip_norm)
            params, state = adadelta_update(state, params, grads)
        if not np.all(np.isfinite(params.vector)):
            raise TrainingError(f"parameters became non-finite in epoch {epoch + 1}")
        history.loss.append(total_loss / len(dataset))
        history.accuracy.append(correct / len(dataset))
        history.seconds.append(time.perf_counter() - start)
        log.info("epoch %d/%d loss=%.6f acc=%.4f", epoch + 1, cfg.epochs,
                 history.loss[-1], history.accuracy[-1])
        if on_epoch is not None:
            on_epoch(epoch, history)
    return params, history


# --- checkpoints ----------------------------------------------------------
#
# Layout (all integers and floats little-endian):
#   b"MLSTM1"
#   u32 format version, u32 M, u32 hidden, u32 K, M x u32 input dims
#   u32 metadata length, UTF-8 JSON metadata (sorted keys)
#   u8 has_state, u64 n
#   n x f64 parameters in layout order
#   if has_state: f64 rho, f64 eps, n x f64 sq_grad, n x f64 sq_delta

@dataclass
class Checkpoint:
    params: ModelParams
    state: AdadeltaState | None = None
    metadata: dict = field(default_factory=dict)


def checkpoint_bytes(params, state=None, metadata=None):
    meta = json.dumps(metadata or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<IIII", FORMAT_VERSION, params.n_aspects, params.hidden, params.n_classes),
        struct.pack(f"<{params.n_aspects}I", *params.input_dims),
        struct.pack("<I", len(meta)), meta,
        struct.pack("<BQ", state is not None, params.size),
        params.vector.astype("<f8").tobytes(),
    ]
    if state is not None:
        parts += [struct.pack("<dd", state.rho, state.eps),
                  state.sq_grad.astype("<f8").tobytes(),
                  state.sq_delta.astype("<f8").tobytes()]
    return b"".join(parts)


def save_checkpoint(params, path, state=None, metadata=None):
    data = checkpoint_bytes(params, state, metadata)
    with open(path, "wb") as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, n):
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(DTYPE)


def parse_checkpoint(data):
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointVersionError("not an MLSTM1 checkpoint (bad magic header)")
    r = _Reader(data)
    r.take(len(MAGIC))
    version, M, hidden, K = r.unpack("<IIII")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    input_dims = r.unpack(f"<{M}I")
    (meta_len,) = r.unpack("<I")
    try:
        metadata = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None
    has_state, n = r.unpack("<BQ")
    try:
        params = ModelParams(input_dims, hidden, K)
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if n != params.size:
        raise CheckpointError(f"checkpoint holds {n} values, header implies {params.size}")
    params = params.like(r.floats(n))
    state = None
    if has_state:
        rho, eps = r.unpack("<dd")
        state = AdadeltaState(r.floats(n), r.floats(n), rho, eps)
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(params, state, metadata)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
