"""Co-occurrence matrix assembly and frequency-interleaved sharding.

Row ids are frequency ranked, so taking every ``R``-th row (``R = m / k``)
gives each k-row block a mix of common and rare features. Shard
``(rb, cb)`` holds global cells ``(rb + t*R, cb + u*C)`` for local
``t, u`` in ``[0, k)``.

Shard file layout (little-endian)::

    b"SWVL"  u32 version  u32 k  u32 row_block  u32 col_block  u32 R  u32 C
    f64[k] row marginals   f64[k] col marginals   f64 total
    f32[k*k] counts, row-major in local (t, u) order
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import CoocAccumulator

SHARD_MAGIC = b"SWVL"
SHARD_VERSION = 1
_HEADER = struct.Struct("<4s6I")


@dataclass(frozen=True)
class ShardPlan:
    k: int
    m: int
    n: int
    m_raw: int
    n_raw: int

    @property
    def row_blocks(self) -> int:
        return self.m // self.k

    @property
    def col_blocks(self) -> int:
        return self.n // self.k

    @property
    def num_shards(self) -> int:
        return self.row_blocks * self.col_blocks

    def blocks(self):
        """All (row_block, col_block) pairs in row-major order."""
        for rb in range(self.row_blocks):
            for cb in range(self.col_blocks):
                yield rb, cb

    def row_ids(self, row_block: int) -> np.ndarray:
        return row_block + self.row_blocks * np.arange(self.k)

    def col_ids(self, col_block: int) -> np.ndarray:
        return col_block + self.col_blocks * np.arange(self.k)


@dataclass(frozen=True)
class CoocMatrix:
    cells: sp.csr_matrix
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    total: float

    @property
    def shape(self):
        return self.cells.shape


def _round_up(x: int, k: int) -> int:
    return -(-x // k) * k


def make_plan(m_raw: int, n_raw: int, k: int) -> ShardPlan:
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > m_raw or k > n_raw:
        raise ValueError(f"block size k={k} exceeds vocabulary ({m_raw} rows, {n_raw} cols)")
    return ShardPlan(k=k, m=_round_up(m_raw, k), n=_round_up(n_raw, k), m_raw=m_raw, n_raw=n_raw)


def finalize_matrix(acc: CoocAccumulator, m_raw: int, n_raw: int, k: int) -> tuple[CoocMatrix, ShardPlan]:
    """Pad to a multiple of ``k`` and compute marginals and the grand total."""
    plan = make_plan(m_raw, n_raw, k)
    if len(acc) and (acc.rows.max() >= m_raw or acc.cols.max() >= n_raw):
        raise ValueError("accumulator ids exceed the matrix dimensions")
    cells = sp.csr_matrix((acc.values, (acc.rows, acc.cols)), shape=(plan.m, plan.n), dtype=np.float64)
    cells.sum_duplicates()
    row_marginals = np.asarray(cells.sum(axis=1)).ravel()
    col_marginals = np.asarray(cells.sum(axis=0)).ravel()
    total = math.fsum(acc.values.tolist())
    return CoocMatrix(cells, row_marginals, col_marginals, total), plan


def shard_of(plan: ShardPlan, i: int, j: int) -> tuple[int, int, int, int]:
    """Map global cell (i, j) to (row_block, col_block, t, u)."""
    if not (0 <= i < plan.m and 0 <= j < plan.n):
        raise IndexError(f"cell ({i}, {j}) outside {plan.m}x{plan.n} matrix")
    R, C = plan.row_blocks, plan.col_blocks
    return i % R, j % C, i // R, j // C


def cell_of(plan: ShardPlan, row_block: int, col_block: int, t: int, u: int) -> tuple[int, int]:
    """Inverse of :func:`shard_of`."""
    R, C = plan.row_blocks, plan.col_blocks
    if not (0 <= row_block < R and 0 <= col_block < C and 0 <= t < plan.k and 0 <= u < plan.k):
        raise IndexError("shard coordinates out of range")
    return row_block + t * R, col_block + u * C


@dataclass
class Shard:
    row_block: int
    col_block: int
    row_blocks: int
    col_blocks: int
    counts: np.ndarray  # (k, k) float32, zeros explicit
    row_marginals: np.ndarray  # (k,) float64
    col_marginals: np.ndarray  # (k,) float64
    total: float

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def row_slice(self) -> slice:
        return slice(self.row_block, None, self.row_blocks)

    @property
    def col_slice(self) -> slice:
        return slice(self.col_block, None, self.col_blocks)

    @property
    def filename(self) -> str:
        return shard_filename(self.row_block, self.col_block)

    def to_bytes(self) -> bytes:
        k = self.k
        header = _HEADER.pack(
            SHARD_MAGIC, SHARD_VERSION, k, self.row_block, self.col_block, self.row_blocks, self.col_blocks
        )
        return b"".join(
            [
                header,
                np.ascontiguousarray(self.row_marginals, dtype="<f8").tobytes(),
                np.ascontiguousarray(self.col_marginals, dtype="<f8").tobytes(),
                struct.pack("<d", self.total),
                np.ascontiguousarray(self.counts, dtype="<f4").tobytes(),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Shard":
        if len(data) < _HEADER.size:
            raise ValueError("truncated shard header")
        magic, version, k, rb, cb, R, C = _HEADER.unpack_from(data)
        if magic != SHARD_MAGIC:
            raise ValueError("not a shard file (bad magic)")
        if version != SHARD_VERSION:
            raise ValueError(f"unsupported shard format version {version}")
        expected = _HEADER.size + 16 * k + 8 + 4 * k * k
        if len(data) != expected:
            raise ValueError(f"shard payload is {len(data)} bytes, expected {expected}")
        off = _HEADER.size
        row_m = np.frombuffer(data, "<f8", k, off).astype(np.float64)
        col_m = np.frombuffer(data, "<f8", k, off + 8 * k).astype(np.float64)
        (total,) = struct.unpack_from("<d", data, off + 16 * k)
        counts = np.frombuffer(data, "<f4", k * k, off + 16 * k + 8).astype(np.float32).reshape(k, k)
        return cls(rb, cb, R, C, counts, row_m, col_m, total)

    def save(self, directory: str) -> str:
        path = os.path.join(directory, self.filename)
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: str) -> "Shard":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def shard_filename(row_block: int, col_block: int) -> str:
    return f"shard-{row_block:04d}-{col_block:04d}.swvl"


def extract_shard(matrix: CoocMatrix, plan: ShardPlan, row_block: int, col_block: int) -> Shard:
    R, C = plan.row_blocks, plan.col_blocks
    if not (0 <= row_block < R and 0 <= col_block < C):
        raise IndexError(f"shard ({row_block}, {col_block}) outside {R}x{C} plan")
    rows, cols = plan.row_ids(row_block), plan.col_ids(col_block)
    counts = matrix.cells[rows][:, cols].toarray().astype(np.float32)
    return Shard(
        row_block,
        col_block,
        R,
        C,
        counts,
        matrix.row_marginals[rows].copy(),
        matrix.col_marginals[cols].copy(),
        matrix.total,
    )


def iter_shards(matrix: CoocMatrix, plan: ShardPlan):
    for rb, cb in plan.blocks():
        yield extract_shard(matrix, plan, rb, cb)


MANIFEST_NAME = "manifest.txt"


def write_manifest(directory: str, plan: ShardPlan, total: float) -> str:
    path = os.path.join(directory, MANIFEST_NAME)
    fields = {
        "m_raw": plan.m_raw,
        "n_raw": plan.n_raw,
        "m": plan.m,
        "n": plan.n,
        "k": plan.k,
        "R": plan.row_blocks,
        "C": plan.col_blocks,
        "total": repr(float(total)),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in fields.items():
            fh.write(f"{key} = {value}\n")
    return path


def read_manifest(directory: str) -> tuple[ShardPlan, float]:
    fields = {}
    with open(os.path.join(directory, MANIFEST_NAME), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                key, _, value = line.partition("=")
                fields[key.strip()] = value.strip()
    plan = ShardPlan(
        k=int(fields["k"]),
        m=int(fields["m"]),
        n=int(fields["n"]),
        m_raw=int(fields["m_raw"]),
        n_raw=int(fields["n_raw"]),
    )
    if plan.row_blocks != int(fields["R"]) or plan.col_blocks != int(fields["C"]):
        raise ValueError("manifest block counts disagree with m, n, k")
    return plan, float(fields["total"])


def write_shards(matrix: CoocMatrix, plan: ShardPlan, directory: str) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = [shard.save(directory) for shard in iter_shards(matrix, plan)]
    write_manifest(directory, plan, matrix.total)
    return paths


def load_shards(directory: str) -> tuple[ShardPlan, list[Shard]]:
    """Read a manifest and every shard it names; missing files are an error."""
    plan, _ = read_manifest(directory)
    shards = []
    for rb, cb in plan.blocks():
        path = os.path.join(directory, shard_filename(rb, cb))
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing shard file {path}")
        shard = Shard.load(path)
        if shard.k != plan.k or shard.row_blocks != plan.row_blocks or shard.col_blocks != plan.col_blocks:
            raise ValueError(f"{path} does not match the manifest")
        shards.append(shard)
    return plan, shards
