"""Read/write policies for streaming decoding.

``wait_k_decode`` follows the online decoding loop: read a frame, add its
token weight to an accumulator, and write tokens while the accumulator
exceeds ``k``; after the input ends, keep writing until ``<eos>``.
``local_agreement_decode`` re-decodes after every chunk and commits the
longest common prefix of consecutive hypotheses.

Frames arrive chunk by chunk and share the chunk's arrival time (the end of
its last frame). The arrival clock ignores compute; the compute-aware clock
serializes decoder work at ``flops_per_second``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .cif import FIRE_TOLERANCE
from .frames import FrameSequence
from .masks import ChunkSpec, SpanSpec, mfla_limits
from .metrics import flops_decode_step
from .numeric import ContractError, vstack

log = logging.getLogger(__name__)

MODES = ("forced_commit", "buffered_state")
HORIZONS = ("literal", "clipped")


@dataclass
class PolicyConfig:
    k: float = 3.0
    chunk_length_s: float = 1.0
    mode: str = "forced_commit"
    horizon: str = "literal"
    span: int | None = None  # look-ahead for the clipped horizon; defaults to ceil(k)
    encoder_chunk: float | None = None  # frames; defaults to the input chunk
    flops_per_second: float | None = None
    max_tokens: int | None = None

    def __post_init__(self):
        if not self.k >= 1:
            raise ContractError(f"k must be >= 1, got {self.k}")
        if not self.chunk_length_s > 0:
            raise ContractError("chunk length must be positive")
        if self.mode not in MODES:
            raise ContractError(f"unknown decoding mode {self.mode!r}")
        if self.horizon not in HORIZONS:
            raise ContractError(f"unknown horizon {self.horizon!r}")

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["k"] = "inf" if self.k == math.inf else self.k
        if d["encoder_chunk"] == math.inf:
            d["encoder_chunk"] = "inf"
        return d


@dataclass
class Event:
    kind: str  # "read" | "write"
    time_s: float
    index: int  # frame index for reads, token index for writes (1-based)
    token: int | None = None
    horizon: int | None = None
    aware_time_s: float | None = None


@dataclass
class DecodeTimeline:
    policy: str
    k: float | None
    mode: str
    chunk_length_s: float
    frame_duration_s: float
    speech_length_s: float
    eos: int
    trace_id: str | None = None
    events: list[Event] = field(default_factory=list)
    tokens: list[int] = field(default_factory=list)
    emission_s: list[float] = field(default_factory=list)
    emission_aware_s: list[float] = field(default_factory=list)
    horizons: list[int] = field(default_factory=list)
    step_flops: list[int] = field(default_factory=list)
    replay_flops: int = 0
    diagnostics: list[str] = field(default_factory=list)

    @property
    def output_tokens(self) -> list[int]:
        """Emitted tokens without the terminating ``<eos>``."""
        if self.tokens and self.tokens[-1] == self.eos:
            return self.tokens[:-1]
        return list(self.tokens)

    def emission_times(self, clock: str = "unaware") -> list[float]:
        n = len(self.output_tokens)
        if clock == "unaware":
            return self.emission_s[:n]
        if clock == "aware":
            return self.emission_aware_s[:n]
        raise ContractError(f"unknown clock {clock!r}")

    def run_key(self) -> tuple:
        return (self.trace_id, self.policy, self.k, self.chunk_length_s, self.speech_length_s)

    @property
    def flops_total(self) -> int:
        return sum(self.step_flops)

    def check(self) -> list[str]:
        """Structural invariants; returns violations (empty when sound)."""
        bad = []
        times = [e.time_s for e in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            bad.append("event times decrease")
        writes = [e for e in self.events if e.kind == "write"]
        if [e.index for e in writes] != list(range(1, len(writes) + 1)):
            bad.append("token indices are not dense 1..N")
        fd = self.frame_duration_s
        for e in writes:
            if e.horizon is not None and e.time_s + 1e-9 < e.horizon * fd:
                bad.append(f"token {e.index} emitted before frame {e.horizon} arrived")
        hs = self.horizons
        if self.policy == "wait-k" and any(b < a for a, b in zip(hs, hs[1:])):
            bad.append("source horizon decreases")
        return bad

    # serialization: one JSON object per line, header first

    def to_jsonl(self) -> str:
        head = {
            "type": "header",
            "policy": self.policy,
            "k": "inf" if self.k == math.inf else self.k,
            "mode": self.mode,
            "chunk_length_s": self.chunk_length_s,
            "frame_duration_s": self.frame_duration_s,
            "speech_length_s": self.speech_length_s,
            "eos": self.eos,
            "trace_id": self.trace_id,
            "step_flops": self.step_flops,
            "replay_flops": self.replay_flops,
            "diagnostics": self.diagnostics,
        }
        lines = [json.dumps(head)]
        for e in self.events:
            obj = {"type": "event", "kind": e.kind, "time_s": e.time_s}
            if e.kind == "read":
                obj["frame"] = e.index
            else:
                obj.update(token_index=e.index, token=e.token, horizon=e.horizon, aware_time_s=e.aware_time_s)
            lines.append(json.dumps(obj))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "DecodeTimeline":
        head = None
        events = []
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("type") == "header":
                head = obj
            else:
                idx = obj["frame"] if obj["kind"] == "read" else obj["token_index"]
                events.append(Event(obj["kind"], obj["time_s"], idx, obj.get("token"), obj.get("horizon"), obj.get("aware_time_s")))
        if head is None:
            raise ContractError("timeline has no header line")
        k = head["k"]
        tl = cls(
            head["policy"], math.inf if k == "inf" else k, head["mode"], head["chunk_length_s"],
            head["frame_duration_s"], head["speech_length_s"], head["eos"], head.get("trace_id"),
            step_flops=list(head.get("step_flops", [])), replay_flops=head.get("replay_flops", 0),
            diagnostics=list(head.get("diagnostics", [])),
        )
        tl.events = events
        writes = sorted((e for e in events if e.kind == "write"), key=lambda e: e.index)
        tl.tokens = [e.token for e in writes]
        tl.emission_s = [e.time_s for e in writes]
        tl.emission_aware_s = [e.time_s if e.aware_time_s is None else e.aware_time_s for e in writes]
        tl.horizons = [e.horizon for e in writes]
        return tl


def longest_common_prefix(a: Sequence, b: Sequence) -> list:
    out = []
    for x, y in zip(a, b):
        if x != y:
            break
        out.append(x)
    return out


def _frames_per_chunk(chunk_length_s: float, frame_duration_s: float) -> int:
    ratio = chunk_length_s / frame_duration_s
    n = max(1, round(ratio))
    if abs(n - ratio) > 1e-6 * max(1.0, ratio):
        log.warning("chunk length %.6fs is not a whole number of frames; using %d", chunk_length_s, n)
    return n


class _Clock:
    """Tracks the compute-aware decoder clock and the FLOPs ledger."""

    def __init__(self, timeline: DecodeTimeline, cfg, flops_per_second: float | None):
        self.tl = timeline
        self.cfg = cfg
        self.rate = flops_per_second
        self.busy = 0.0

    def spend(self, prefix_len: int, src_len: int, now: float, replay: bool = False) -> float:
        f = flops_decode_step(prefix_len, src_len, self.cfg)
        self.tl.step_flops.append(f)
        if replay:
            self.tl.replay_flops += f
        if self.rate is None:
            return now
        self.busy = max(self.busy, now) + f / self.rate
        return self.busy

    def write(self, token: int, now: float, horizon: int, aware: float) -> None:
        tl = self.tl
        tl.tokens.append(token)
        tl.emission_s.append(now)
        tl.emission_aware_s.append(aware)
        tl.horizons.append(horizon)
        tl.events.append(Event("write", now, len(tl.tokens), token, horizon, aware))


def _expected_tokens(model, fallback: float) -> int:
    if hasattr(model, "script"):
        return max(1, len(model.script))
    return max(1, int(round(fallback)))


def wait_k_decode(
    stream: FrameSequence,
    cfg: PolicyConfig,
    model,
    predictor: Callable,
    trace_id: str | None = None,
) -> DecodeTimeline:
    """Run the wait-k read/write loop over a chunked frame stream."""
    T = len(stream)
    if T == 0:
        raise ContractError("empty input stream")
    fd = stream.frame_duration_s
    F = _frames_per_chunk(cfg.chunk_length_s, fd)
    enc_chunk = ChunkSpec(F if cfg.encoder_chunk is None else cfg.encoder_chunk)
    tl = DecodeTimeline("wait-k", cfg.k, cfg.mode, cfg.chunk_length_s, fd, T * fd, model.eos, trace_id)
    clock = _Clock(tl, model.config, cfg.flops_per_second)
    forced = cfg.mode == "forced_commit"
    span = cfg.span if cfg.span is not None else (math.ceil(cfg.k) if math.isfinite(cfg.k) else None)

    enc = model.stream_encoder(enc_chunk)
    state = model.initial_state()
    alpha = 0.0
    total_alpha = 0.0
    cum = 0.0
    rights: list[int] = []  # online firing plan, for the clipped horizon
    j = 0
    done = False

    def horizon_for(n: int, visible: int) -> int:
        if cfg.horizon == "literal" or span is None:
            return visible
        idx = n - 1 + span  # 0-based index of token n + span
        return min(visible, rights[idx]) if idx < len(rights) else visible

    replayed = False

    def step(now: float, visible: int) -> None:
        nonlocal state, done, replayed
        if forced and not replayed:
            n_prev = len(tl.tokens)
            state = model.forced_replay(tl.tokens, enc.hidden, tl.horizons)
            for i in range(n_prev):
                clock.spend(i, tl.horizons[i], now, replay=True)
        n = len(tl.tokens) + 1
        lim = horizon_for(n, visible)
        tok, state = model.decode_step(state, enc.hidden, lim)
        aware = clock.spend(n - 1, lim, now)
        clock.write(tok, now, lim, aware)
        replayed = True
        if tok == model.eos:
            done = True

    chunks = list(stream.chunks(F))
    for ci, (start, chunk) in enumerate(chunks):
        now = (start + len(chunk)) * fd
        rows = enc.push(chunk)
        if ci == len(chunks) - 1:
            tail = enc.finish()
            if tail.rows:
                rows = vstack([rows, tail], tail.cols)
        if rows.rows == 0:
            continue
        weights = predictor(rows, j)
        replayed = False
        for a in weights:
            j += 1
            tl.events.append(Event("read", now, j))
            alpha += a
            total_alpha += a
            cum += a
            while cum >= (len(rights) + 1) - FIRE_TOLERANCE:
                rights.append(j)
            while alpha > cfg.k and not done:
                step(now, j)
                alpha -= 1.0

    if total_alpha == 0.0:
        tl.diagnostics.append("predictor produced zero weight; all tokens come from the final flush")
        log.warning(tl.diagnostics[-1])
    end = T * fd
    visible = enc.hidden.rows
    cap = cfg.max_tokens or 4 * _expected_tokens(model, total_alpha)
    while not done and len(tl.tokens) < cap:
        step(end, visible)
    if not done:
        tl.diagnostics.append(f"hit max_tokens={cap} without <eos>")
        log.warning(tl.diagnostics[-1])
    return tl


def local_agreement_decode(
    stream: FrameSequence,
    cfg: PolicyConfig,
    model,
    trace_id: str | None = None,
    expected_tokens: int | None = None,
) -> DecodeTimeline:
    """Commit the longest common prefix of consecutive chunk hypotheses."""
    T = len(stream)
    if T == 0:
        raise ContractError("empty input stream")
    fd = stream.frame_duration_s
    F = _frames_per_chunk(cfg.chunk_length_s, fd)
    enc_chunk = ChunkSpec(F if cfg.encoder_chunk is None else cfg.encoder_chunk)
    tl = DecodeTimeline("local-agreement", None, cfg.mode, cfg.chunk_length_s, fd, T * fd, model.eos, trace_id)
    clock = _Clock(tl, model.config, cfg.flops_per_second)
    if cfg.max_tokens:
        cap = cfg.max_tokens
    else:
        cap = 4 * (expected_tokens or _expected_tokens(model, T))

    enc = model.stream_encoder(enc_chunk)
    committed: list[int] = []
    prev_hyp: list[int] | None = None
    hit_cap = False
    read = 0

    def hypothesis(now: float, visible: int) -> tuple[list[int], float]:
        nonlocal hit_cap
        state = model.initial_state()
        hyp = []
        aware = now
        while len(hyp) < cap:
            tok, state = model.decode_step(state, enc.hidden, visible)
            aware = clock.spend(len(hyp), visible, now)
            if tok == model.eos:
                return hyp, aware
            hyp.append(tok)
        hit_cap = True
        return hyp, aware

    chunks = list(stream.chunks(F))
    for ci, (start, chunk) in enumerate(chunks):
        now = (start + len(chunk)) * fd
        last = ci == len(chunks) - 1
        enc.push(chunk)
        if last:
            enc.finish()
        visible = enc.hidden.rows
        for f in range(read + 1, visible + 1):
            tl.events.append(Event("read", now, f))
        read = visible
        if visible == 0:
            continue
        if last:
            break
        hyp, aware = hypothesis(now, visible)
        if prev_hyp is not None:
            agreed = longest_common_prefix(prev_hyp, hyp)
            if len(agreed) > len(committed) and agreed[:len(committed)] == committed:
                for tok in agreed[len(committed):]:
                    clock.write(tok, now, visible, aware)
                committed = list(agreed)
        prev_hyp = hyp

    # flush: continue from the committed prefix over the whole input
    now = T * fd
    visible = enc.hidden.rows
    state = model.forced_replay(committed, enc.hidden, [visible] * len(committed))
    for i in range(len(committed)):
        clock.spend(i, visible, now, replay=True)
    while len(tl.tokens) < cap:
        tok, state = model.decode_step(state, enc.hidden, visible)
        aware = clock.spend(len(tl.tokens), visible, now)
        clock.write(tok, now, visible, aware)
        if tok == model.eos:
            break
    else:
        hit_cap = True
    if hit_cap:
        tl.diagnostics.append(f"hit max_tokens={cap} without <eos>")
        log.warning(tl.diagnostics[-1])
    return tl


def mfla_schedule_decode(
    stream: FrameSequence,
    frames_per_chunk: int,
    model,
    encoder_chunk: ChunkSpec,
    boundaries: Sequence[tuple[int, int]],
    span: SpanSpec,
    stop_at_eos: bool = True,
) -> tuple[list[int], list[int]]:
    """Decode incrementally, writing token i once frames up to its look-ahead limit are encoded.

    Returns (tokens, per-token source limits). Stops after ``<eos>`` unless
    ``stop_at_eos`` is off, in which case every boundary gets a token.
    """
    T = len(stream)
    limits = mfla_limits(boundaries, span, T)
    enc = model.stream_encoder(encoder_chunk)
    state = model.initial_state()
    tokens: list[int] = []
    chunks = list(stream.chunks(frames_per_chunk))
    for ci, (_, chunk) in enumerate(chunks):
        enc.push(chunk)
        if ci == len(chunks) - 1:
            enc.finish()
        visible = enc.hidden.rows
        while len(tokens) < len(limits) and limits[len(tokens)] <= visible:
            tok, state = model.decode_step(state, enc.hidden, limits[len(tokens)])
            tokens.append(tok)
            if stop_at_eos and tok == model.eos:
                return tokens, limits[:len(tokens)]
    return tokens, limits[:len(tokens)]


def offline_decode(
    stream: FrameSequence, model, encoder_chunk: ChunkSpec, limits: Sequence[int], stop_at_eos: bool = True
) -> list[int]:
    """Encode the whole input at once, then decode with the given per-token limits."""
    h = model.encode(stream, encoder_chunk)
    state = model.initial_state()
    tokens = []
    for lim in limits:
        tok, state = model.decode_step(state, h, lim)
        tokens.append(tok)
        if stop_at_eos and tok == model.eos:
            break
    return tokens
