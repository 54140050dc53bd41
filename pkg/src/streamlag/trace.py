"""Synthetic utterances with planted token alignments."""
from __future__ import annotations

import hashlib
import json
import math
import random
from array import array
from dataclasses import asdict, dataclass, field

from .cif import FiringPlan
from .frames import FrameSequence
from .numeric import ContractError, Matrix


@dataclass
class TraceSpec:
    num_tokens: int
    frames_per_token: int | tuple[int, int] = 16  # fixed, or uniform (min, max)
    frame_duration_s: float = 1 / 64
    silences: list[tuple[int, int]] = field(default_factory=list)  # (tokens before the gap, frames)
    seed: int = 0
    width: int = 32
    vocab_size: int = 64

    def __post_init__(self):
        if self.num_tokens < 1:
            raise ContractError("a trace needs at least one token")
        if isinstance(self.frames_per_token, (list, tuple)):
            lo, hi = self.frames_per_token
            if lo < 1 or hi < lo:
                raise ContractError("frames_per_token range must satisfy 1 <= min <= max")
            self.frames_per_token = (int(lo), int(hi))
        elif self.frames_per_token < 1:
            raise ContractError("frames_per_token must be >= 1")
        if self.frame_duration_s <= 0:
            raise ContractError("frame duration must be positive")
        self.silences = [(int(p), int(n)) for p, n in self.silences]
        for pos, n in self.silences:
            if not 0 <= pos <= self.num_tokens or n < 0:
                raise ContractError(f"bad silence segment {(pos, n)}")
        if self.vocab_size < 3:
            raise ContractError("vocab too small for scripted tokens")

    def to_json(self) -> dict:
        d = asdict(self)
        d["silences"] = [list(s) for s in self.silences]
        if isinstance(self.frames_per_token, tuple):
            d["frames_per_token"] = list(self.frames_per_token)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TraceSpec":
        obj = dict(obj)
        fpt = obj.get("frames_per_token", 16)
        if isinstance(fpt, list):
            obj["frames_per_token"] = tuple(fpt)
        obj["silences"] = [tuple(s) for s in obj.get("silences", [])]
        return cls(**obj)

    @property
    def trace_id(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(eq=False)
class Trace:
    spec: TraceSpec
    frames: FrameSequence
    plan: FiringPlan  # planted weights and ground-truth boundaries
    tokens: list[int]

    @property
    def trace_id(self) -> str:
        return self.spec.trace_id

    @property
    def d(self) -> float:
        """Ideal token interval N_s / N_t in seconds."""
        return self.frames.duration_s / len(self.tokens)

    def to_json(self, include_frames: bool = True) -> dict:
        out = {
            "spec": self.spec.to_json(),
            "trace_id": self.trace_id,
            "frame_duration_s": self.frames.frame_duration_s,
            "num_frames": len(self.frames),
            "tokens": self.tokens,
            "plan": self.plan.to_json(),
        }
        if include_frames:
            out["frames"] = self.frames.values.to_rows()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Trace":
        spec = TraceSpec.from_json(obj["spec"])
        if "frames" in obj:
            frames = FrameSequence(Matrix.from_rows(obj["frames"], spec.width), obj["frame_duration_s"])
            return cls(spec, frames, FiringPlan.from_json(obj["plan"]), list(obj["tokens"]))
        return generate_trace(spec)


def _token_weights(f: int) -> list[float]:
    """f weights summing to one; the last one absorbs rounding."""
    if f == 1:
        return [1.0]
    head = [1.0 / f] * (f - 1)
    return head + [1.0 - math.fsum(head)]


def generate_trace(spec: TraceSpec) -> Trace:
    rng = random.Random(spec.seed)
    gaps: dict[int, int] = {}
    for pos, n in spec.silences:
        gaps[pos] = gaps.get(pos, 0) + n
    weights: list[float] = []
    boundaries: list[tuple[int, int]] = []
    silent: list[bool] = []
    left = 1
    for t in range(spec.num_tokens):
        gap = gaps.get(t, 0)
        weights.extend([0.0] * gap)
        silent.extend([True] * gap)
        if isinstance(spec.frames_per_token, tuple):
            f = rng.randint(*spec.frames_per_token)
        else:
            f = spec.frames_per_token
        weights.extend(_token_weights(f))
        silent.extend([False] * f)
        boundaries.append((left, len(weights)))
        left = len(weights) + 1
    tail = gaps.get(spec.num_tokens, 0)
    weights.extend([0.0] * tail)
    silent.extend([True] * tail)

    W = spec.width
    data = array("d")
    for s in silent:
        if s:
            data.extend([0.0] * W)
        else:
            data.extend(rng.gauss(0.0, 1.0) for _ in range(W))
    frames = FrameSequence(Matrix(len(weights), W, data), spec.frame_duration_s)
    tokens = [rng.randint(2, spec.vocab_size - 1) for _ in range(spec.num_tokens)]
    plan = FiringPlan(weights, boundaries, 0.0, 1.0)
    return Trace(spec, frames, plan, tokens)
