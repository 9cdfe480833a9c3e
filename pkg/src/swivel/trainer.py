"""Embedding store, Adagrad shard steps and the training loop.

Row block ``rb`` of a shard is the strided view ``W[rb::R]``, so a step reads
and writes the store in place without gathering. With several workers the
store is shared and updated without locks: each worker owns a disjoint set
of shards per epoch but row/column blocks overlap between workers, and
their reads and writes interleave freely.

Checkpoint layout (little-endian)::

    b"SWCK"  u32 version  u32 header_len  header (UTF-8 JSON, sorted keys)
    W  W_tilde  acc_W  acc_W_tilde     raw arrays, dtype and shape in header
    u32 CRC-32 of every preceding byte
"""

from __future__ import annotations

import json
import logging
import math
import os
import struct
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .objective import ObjectiveConfig, WeightParams, prepare_targets, shard_objective

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SWCK"
CHECKPOINT_VERSION = 1
SCHEDULES = ("permutation", "uniform")


class NumericalError(ArithmeticError):
    """A step produced a non-finite gradient or loss."""


class CheckpointError(ValueError):
    pass


@dataclass
class EmbeddingStore:
    W: np.ndarray
    W_tilde: np.ndarray
    acc_W: np.ndarray
    acc_W_tilde: np.ndarray

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "EmbeddingStore":
        return EmbeddingStore(self.W.copy(), self.W_tilde.copy(), self.acc_W.copy(), self.acc_W_tilde.copy())

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in (self.W, self.W_tilde, self.acc_W, self.acc_W_tilde))


def init_embeddings(m: int, n: int, d: int, seed: int = 0, dtype=np.float32) -> EmbeddingStore:
    """Gaussian init with standard deviation ``d ** -0.5``; zero accumulators."""
    if min(m, n, d) < 1:
        raise ValueError("m, n and d must be >= 1")
    rng = np.random.default_rng(seed)
    sigma = d**-0.5
    W = rng.normal(0.0, sigma, size=(m, d)).astype(dtype)
    W_tilde = rng.normal(0.0, sigma, size=(n, d)).astype(dtype)
    return EmbeddingStore(W, W_tilde, np.zeros_like(W), np.zeros_like(W_tilde))


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 300
    steps: int = 1_000_000
    eta: float = 0.1
    epsilon: float = 1e-8
    seed: int = 0
    workers: int = 1
    schedule: str = "permutation"
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    early_stop: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        obj = d.pop("objective", {})
        objective = ObjectiveConfig(WeightParams(**obj.get("weights", {})), obj.get("shift", 0.0))
        return cls(objective=objective, **d)


def shard_gradients(store: EmbeddingStore, shard, cfg: TrainConfig, targets=None):
    """Loss of one shard and its gradients w.r.t. the row and column blocks."""
    Wb = store.W[shard.row_slice].astype(np.float64)
    Wtb = store.W_tilde[shard.col_slice].astype(np.float64)
    if Wb.shape[0] != shard.k or Wtb.shape[0] != shard.k:
        raise ValueError("shard does not match the store's padded dimensions")
    result = shard_objective(Wb @ Wtb.T, shard, cfg.objective, targets)
    G = result.grad
    return result.loss, G @ Wtb, G.T @ Wb


def _adagrad(param, acc, g, eta, epsilon):
    acc_new = acc.astype(np.float64) + g * g
    acc[...] = acc_new
    param[...] = param.astype(np.float64) - eta * g / (np.sqrt(acc_new) + epsilon)


def train_step(store: EmbeddingStore, shard, cfg: TrainConfig, targets=None) -> float:
    """One Adagrad step on one shard; returns the shard loss before the update."""
    loss, g_rows, g_cols = shard_gradients(store, shard, cfg, targets)
    if not (math.isfinite(loss) and np.isfinite(g_rows).all() and np.isfinite(g_cols).all()):
        raise NumericalError(f"non-finite gradient in row block {shard.row_block}, col block {shard.col_block}")
    rs, cs = shard.row_slice, shard.col_slice
    _adagrad(store.W[rs], store.acc_W[rs], g_rows, cfg.eta, cfg.epsilon)
    _adagrad(store.W_tilde[cs], store.acc_W_tilde[cs], g_cols, cfg.eta, cfg.epsilon)
    return loss


class Schedule:
    """Shard order: reshuffled permutations per epoch, or i.i.d. uniform draws."""

    def __init__(self, num_shards: int, kind: str = "permutation", seed: int = 0):
        if num_shards < 1:
            raise ValueError("need at least one shard")
        if kind not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        self.num_shards = num_shards
        self.kind = kind
        self.rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))

    def epoch(self) -> np.ndarray:
        if self.kind == "permutation":
            return self.rng.permutation(self.num_shards)
        return self.rng.integers(0, self.num_shards, size=self.num_shards)

    def state(self) -> dict:
        return self.rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state


@dataclass
class EpochStats:
    epoch: int
    steps: int
    mean_loss: float
    steps_per_sec: float

    def line(self) -> str:
        return f"epoch {self.epoch} steps {self.steps} loss {self.mean_loss:.6g} steps/sec {self.steps_per_sec:.1f}"


@dataclass
class TrainState:
    """Everything needed to resume: progress plus the schedule's RNG state."""

    step: int = 0
    epoch: int = 0
    order: list = field(default_factory=list)  # remaining shard indices of the current epoch
    epoch_losses: list = field(default_factory=list)  # losses so far in the current epoch
    loss_trace: list = field(default_factory=list)  # mean loss of each finished epoch
    rng_state: dict | None = None


@dataclass
class TrainResult:
    store: EmbeddingStore
    state: TrainState

    @property
    def loss_trace(self) -> list:
        return self.state.loss_trace


def stderr_progress(stats: EpochStats) -> None:
    print(stats.line(), file=sys.stderr, flush=True)


def train(
    shards: Sequence,
    store: EmbeddingStore,
    cfg: TrainConfig,
    progress: Callable[[EpochStats], None] | None = None,
    state: TrainState | None = None,
    checkpoint_path: str | None = None,
    checkpoint_every: int = 0,
) -> TrainResult:
    """Run ``cfg.steps`` shard steps in total (counting any resumed ones).

    An epoch is one pass of ``len(shards)`` steps. With ``workers == 1`` the
    run is fully determined by ``cfg.seed``; resuming from a checkpoint that
    carries ``state`` continues the identical sequence.
    """
    if not shards:
        raise ValueError("need at least one shard")
    state = state or TrainState()
    schedule = Schedule(len(shards), cfg.schedule, cfg.seed)
    if state.rng_state is not None:
        schedule.set_state(state.rng_state)
    stalled = 0
    cache = _TargetCache(shards, cfg.objective)

    def save():
        if checkpoint_path:
            state.rng_state = schedule.state()
            save_checkpoint(checkpoint_path, store, cfg, state)

    try:
        while state.step < cfg.steps:
            if not state.order:
                state.order = schedule.epoch().tolist()
            t0 = time.perf_counter()
            budget = cfg.steps - state.step
            if checkpoint_every:
                budget = min(budget, checkpoint_every - state.step % checkpoint_every)
            batch, state.order = state.order[:budget], state.order[budget:]
            if cfg.workers == 1:
                losses = []
                for idx in batch:
                    losses.append(train_step(store, shards[idx], cfg, cache[idx]))
                    state.step += 1
            else:
                losses = _run_workers(store, shards, cache, batch, cfg)
                state.step += len(batch)
            state.epoch_losses.extend(losses)
            elapsed = time.perf_counter() - t0

            if not state.order:
                mean = math.fsum(state.epoch_losses) / len(state.epoch_losses)
                previous = state.loss_trace[-1] if state.loss_trace else None
                state.loss_trace.append(mean)
                state.epoch += 1
                state.epoch_losses = []
                if progress:
                    progress(EpochStats(state.epoch, state.step, mean, len(batch) / max(elapsed, 1e-9)))
                if cfg.early_stop and previous is not None:
                    stalled = stalled + 1 if previous - mean < 1e-3 * abs(previous) else 0
                    if stalled >= 3:
                        log.info("early stop at epoch %d", state.epoch)
                        break
            if checkpoint_every and state.step % checkpoint_every == 0:
                save()
    except NumericalError:
        save()
        raise
    state.rng_state = schedule.state()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, store, cfg, state)
    return TrainResult(store, state)


class _TargetCache:
    """Objective constants per shard, computed on first visit."""

    def __init__(self, shards, objective):
        self.shards = shards
        self.objective = objective
        self.items = [None] * len(shards)

    def __getitem__(self, idx):
        item = self.items[idx]
        if item is None:
            item = self.items[idx] = prepare_targets(self.shards[idx], self.objective)
        return item


def _run_workers(store, shards, cache, batch, cfg) -> list:
    """Split ``batch`` round-robin over workers and run them without locks."""
    parts = [batch[w :: cfg.workers] for w in range(cfg.workers)]
    errors = []

    def work(part):
        out = []
        for idx in part:
            if errors:
                break
            try:
                out.append(train_step(store, shards[idx], cfg, cache[idx]))
            except NumericalError as exc:
                errors.append(exc)
                break
        return out

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(work, parts))
    if errors:
        raise errors[0]
    # report losses in schedule order
    losses = [0.0] * len(batch)
    for w, part_losses in enumerate(results):
        losses[w :: cfg.workers] = part_losses
    return losses


def _header_bytes(store, cfg, state) -> bytes:
    header = {
        "config": cfg.to_dict() if cfg is not None else None,
        "state": asdict(state) if state is not None else None,
        "arrays": [
            {"name": name, "dtype": np.dtype(arr.dtype).newbyteorder("<").str, "shape": list(arr.shape)}
            for name, arr in _arrays(store)
        ],
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _arrays(store):
    return [("W", store.W), ("W_tilde", store.W_tilde), ("acc_W", store.acc_W), ("acc_W_tilde", store.acc_W_tilde)]


def save_checkpoint(path: str, store: EmbeddingStore, cfg: TrainConfig | None = None, state: TrainState | None = None):
    """Write atomically (temp file + rename). Requires no concurrent steps."""
    header = _header_bytes(store, cfg, state)
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(header)), header]
    for _, arr in _arrays(store):
        parts.append(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
    body = b"".join(parts)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))
    os.replace(tmp, path)


@dataclass
class Checkpoint:
    store: EmbeddingStore
    config: TrainConfig | None
    state: TrainState | None


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    version, header_len = struct.unpack_from("<II", body, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupted)")
    offset = 12 + header_len
    header = json.loads(body[12:offset].decode("utf-8"))
    arrays = {}
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"]))
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset).reshape(spec["shape"])
        arrays[spec["name"]] = arr.astype(dtype.newbyteorder("="))
        offset += count * dtype.itemsize
    if offset != len(body):
        raise CheckpointError(f"{path}: payload size mismatch")
    store = EmbeddingStore(arrays["W"], arrays["W_tilde"], arrays["acc_W"], arrays["acc_W_tilde"])
    cfg = TrainConfig.from_dict(header["config"]) if header["config"] else None
    state = TrainState(**header["state"]) if header["state"] else None
    return Checkpoint(store, cfg, state)


COMBINE_MODES = ("word", "context", "sum")


def combine_and_export(store: EmbeddingStore, vocab, mode: str = "sum", col_vocab=None):
    """Return (tokens, vectors) over the unpadded vocabulary.

    ``word`` takes row embeddings, ``context`` column embeddings, ``sum``
    adds the two, which needs identical row and column vocabularies.
    """
    if mode not in COMBINE_MODES:
        raise ValueError(f"mode must be one of {COMBINE_MODES}")
    col_vocab = vocab if col_vocab is None else col_vocab
    if mode == "word":
        tokens, vectors = vocab.tokens, store.W[: len(vocab)]
    elif mode == "context":
        tokens, vectors = col_vocab.tokens, store.W_tilde[: len(col_vocab)]
    else:
        if tuple(vocab.tokens) != tuple(col_vocab.tokens):
            raise ValueError("sum needs identical row and column vocabularies")
        m = len(vocab)
        vectors = store.W[:m].astype(np.float64) + store.W_tilde[:m].astype(np.float64)
        tokens = vocab.tokens
    if len(vectors) != len(tokens):
        raise ValueError("vocabulary is larger than the embedding store")
    return list(tokens), np.asarray(vectors, dtype=np.float32)


def write_text_embeddings(path: str, tokens, vectors) -> None:
    """First line ``count dim``, then ``token v1 ... vd`` at 6 significant digits."""
    vectors = np.asarray(vectors)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(tokens)} {vectors.shape[1]}\n")
        for token, vec in zip(tokens, vectors):
            fh.write(token + " " + " ".join(f"{v:.6g}" for v in vec.tolist()) + "\n")


def write_binary_embeddings(path: str, tokens, vectors, counts=None) -> str:
    """Raw little-endian f32 rows plus a ``<path>.vocab`` sidecar; returns the sidecar path."""
    np.ascontiguousarray(vectors, dtype="<f4").tofile(path)
    sidecar = f"{path}.vocab"
    counts = counts if counts is not None else [0] * len(tokens)
    with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
        for token, count in zip(tokens, counts):
            fh.write(f"{token}\t{count}\n")
    return sidecar
