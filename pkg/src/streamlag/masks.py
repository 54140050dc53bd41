"""Encoder chunk masks (MoChA), decoder look-ahead masks (MFLA) and the
training-time samplers for chunk size and look-ahead span.

An infinite chunk size or span is written ``math.inf``; both collapse to the
all-allowed (offline) mask.
"""
from __future__ import annotations

import base64
import json
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from .numeric import ContractError

INF = math.inf

CHUNK_RANGE = (32, 128)
SPAN_POISSON_MEAN = 3.0


@dataclass(frozen=True)
class ChunkSpec:
    size: float  # frames, or INF

    def __post_init__(self):
        if not (self.size >= 1):
            raise ContractError(f"chunk size must be >= 1, got {self.size}")
        if self.size != INF and self.size != int(self.size):
            raise ContractError("chunk size must be an integer frame count")

    @property
    def infinite(self) -> bool:
        return self.size == INF

    def chunk_index(self, frame: int) -> int:
        """1-based chunk index of a 1-based frame."""
        if self.infinite:
            return 1
        return -(-frame // int(self.size))

    def chunk_end(self, frame: int, total: int) -> int:
        """Last frame (1-based, clipped to ``total``) of the chunk holding ``frame``."""
        if self.infinite:
            return total
        return min(total, self.chunk_index(frame) * int(self.size))


@dataclass(frozen=True)
class SpanSpec:
    span: float  # token segments, or INF

    def __post_init__(self):
        if not (self.span >= 1):
            raise ContractError(f"look-ahead span must be >= 1, got {self.span}")
        if self.span != INF and self.span != int(self.span):
            raise ContractError("look-ahead span must be an integer token count")

    @property
    def infinite(self) -> bool:
        return self.span == INF


@dataclass(frozen=True)
class AttentionMask:
    rows: int
    cols: int
    allow: bytes  # row-major, 1 = may attend
    # labels only; equality is decided by shape and bitmap
    kind: str = field(default="custom", compare=False)  # mocha | mfla | full | custom
    param: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.allow) != self.rows * self.cols:
            raise ContractError("allow bitmap has the wrong size")

    @classmethod
    def full(cls, rows: int, cols: int) -> "AttentionMask":
        return cls(rows, cols, b"\x01" * (rows * cols), "full", INF)

    @classmethod
    def from_limits(cls, limits: Sequence[int], cols: int, kind="custom", param=None) -> "AttentionMask":
        """Row i may attend columns 1..limits[i]."""
        buf = bytearray(len(limits) * cols)
        for i, lim in enumerate(limits):
            buf[i * cols:i * cols + lim] = b"\x01" * lim
        return cls(len(limits), cols, bytes(buf), kind, param)

    def allowed(self, i: int, j: int) -> bool:
        """0-based entry lookup."""
        return bool(self.allow[i * self.cols + j])

    def row_set(self, i: int) -> set[int]:
        base = i * self.cols
        return {j for j in range(self.cols) if self.allow[base + j]}

    def row_limits(self) -> list[int]:
        """Last allowed column (1-based) per row; assumes prefix-shaped rows."""
        out = []
        for i in range(self.rows):
            row = self.allow[i * self.cols:(i + 1) * self.cols]
            out.append(row.rfind(b"\x01") + 1)
        return out

    def render(self, on: str = "#", off: str = ".") -> str:
        lines = []
        for i in range(self.rows):
            row = self.allow[i * self.cols:(i + 1) * self.cols]
            lines.append("".join(on if b else off for b in row))
        return "\n".join(lines)

    def dumps(self) -> bytes:
        """JSON header line followed by the base64 packed bitmap (MSB first)."""
        header = {
            "kind": self.kind,
            "rows": self.rows,
            "cols": self.cols,
            "param": None if self.param is None or self.param == INF else self.param,
            "infinite": self.param == INF,
        }
        packed = bytearray((len(self.allow) + 7) // 8)
        for k, b in enumerate(self.allow):
            if b:
                packed[k >> 3] |= 0x80 >> (k & 7)
        return json.dumps(header, sort_keys=True).encode() + b"\n" + base64.b64encode(bytes(packed)) + b"\n"

    @classmethod
    def loads(cls, blob: bytes) -> "AttentionMask":
        head, body = blob.split(b"\n", 1)
        header = json.loads(head)
        packed = base64.b64decode(body.strip())
        n = header["rows"] * header["cols"]
        allow = bytes(1 if packed[k >> 3] & (0x80 >> (k & 7)) else 0 for k in range(n))
        param = INF if header.get("infinite") else header["param"]
        return cls(header["rows"], header["cols"], allow, header["kind"], param)


def mocha_mask(T: int, chunk: ChunkSpec) -> AttentionMask:
    """Frame j may attend frame j' iff chunk(j') <= chunk(j)."""
    if T < 1:
        raise ContractError("mask needs at least one frame")
    if chunk.infinite:
        return AttentionMask(T, T, b"\x01" * (T * T), "mocha", INF)
    limits = [chunk.chunk_end(j, T) for j in range(1, T + 1)]
    return AttentionMask.from_limits(limits, T, "mocha", chunk.size)


def mfla_limits(boundaries: Sequence[tuple[int, int]], span: SpanSpec, T: int) -> list[int]:
    """Per-token last visible frame: the right boundary of token i+span, else T."""
    if not boundaries:
        raise ContractError("MFLA needs at least one token boundary")
    n = len(boundaries)
    prev = 0
    for left, right in boundaries:
        if right < prev:
            raise ContractError("token boundaries are not monotone")
        prev = right
    if prev > T:
        raise ContractError(f"last right boundary {prev} exceeds frame count {T}")
    if span.infinite:
        return [T] * n
    s = int(span.span)
    return [boundaries[i + s][1] if i + s < n else T for i in range(n)]


def mfla_mask(boundaries: Sequence[tuple[int, int]], span: SpanSpec, T: int) -> AttentionMask:
    """Token i attends frames 1..min(T, right_boundary(i + span))."""
    limits = mfla_limits(boundaries, span, T)
    return AttentionMask.from_limits(limits, T, "mfla", span.span)


def _rng(seed_or_rng) -> random.Random:
    if isinstance(seed_or_rng, random.Random):
        return seed_or_rng
    return random.Random(seed_or_rng)


def sample_chunk_size(rng) -> ChunkSpec:
    """Uniform integer chunk size in [32, 128]. Accepts a seed or a ``random.Random``."""
    lo, hi = CHUNK_RANGE
    return ChunkSpec(_rng(rng).randint(lo, hi))


def sample_poisson(rng, lam: float = SPAN_POISSON_MEAN) -> int:
    """Poisson draw by inverse CDF with cumulative summation."""
    u = _rng(rng).random()
    k = 0
    p = math.exp(-lam)
    cdf = p
    while u > cdf:
        k += 1
        p *= lam / k
        cdf += p
        if p == 0.0:  # tail underflow; u sits above the representable cdf
            break
    return k


def sample_span(rng, lam: float = SPAN_POISSON_MEAN) -> SpanSpec:
    """Poisson(lam) look-ahead span, clamped below at 1."""
    return SpanSpec(max(1, sample_poisson(rng, lam)))
