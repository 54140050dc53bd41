"""Fixed-weight toy encoder-decoder used as the substrate for streaming tests.

The encoder is a causal width-3 frontend followed by self-attention layers
restricted by a chunk mask. The decoder is a greedy autoregressive
transformer whose cross-attention sees source frames ``1..limit``.
Weights are drawn once from a seeded generator and never trained.

Every row is computed with the same kernel calls whether it is produced
offline or incrementally, so both paths agree bit for bit.
"""
from __future__ import annotations

import math
import random
from array import array
from dataclasses import dataclass, field
from typing import Sequence

from . import numeric as nm
from .frames import FrameSequence
from .masks import AttentionMask, ChunkSpec, mocha_mask
from .numeric import ContractError, Matrix

SOS = 0
EOS = 1


@dataclass(frozen=True)
class ModelConfig:
    frame_width: int = 32
    num_enc_layers: int = 2
    num_dec_layers: int = 2
    vocab_size: int = 64
    seed: int = 0
    frame_duration_s: float = 0.04
    ffn_mult: int = 2

    def __post_init__(self):
        for name in ("frame_width", "num_enc_layers", "num_dec_layers", "ffn_mult"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.vocab_size < 3:
            raise ContractError("vocab needs <sos>, <eos> and at least one word")
        if self.frame_duration_s <= 0:
            raise ContractError("frame_duration_s must be positive")

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _positional(index: int, width: int) -> list[float]:
    out = []
    for k in range(width):
        rate = 1.0 / (10000.0 ** (2 * (k // 2) / width))
        out.append(0.1 * (math.sin(index * rate) if k % 2 == 0 else math.cos(index * rate)))
    return out


def _rand_matrix(rng: random.Random, rows: int, cols: int) -> Matrix:
    s = 1.0 / math.sqrt(rows)
    return Matrix(rows, cols, array("d", (rng.gauss(0.0, s) for _ in range(rows * cols))))


@dataclass(eq=False)
class _Block:
    wq: Matrix
    wk: Matrix
    wv: Matrix
    wo: Matrix


@dataclass(eq=False)
class _Layer:
    attn: _Block
    ffn1: Matrix
    ffn2: Matrix
    cross: _Block | None = None


def _full(rows: int, cols: int) -> AttentionMask:
    return AttentionMask(rows, cols, b"\x01" * (rows * cols), "full")


def _ffn(x: Matrix, layer: _Layer) -> Matrix:
    return nm.add(x, nm.matmul(nm.tanh(nm.matmul(x, layer.ffn1)), layer.ffn2))


@dataclass(eq=False)
class DecoderState:
    """Committed tokens plus per-layer key/value caches.

    ``self_k[l]``/``self_v[l]`` hold one row per decoder input fed so far
    (``<sos>`` and every committed token but the last). ``src_k``/``src_v``
    cache cross-attention projections of source frames.
    """

    tokens: list[int] = field(default_factory=list)
    self_k: list[array] = field(default_factory=list)
    self_v: list[array] = field(default_factory=list)
    src_k: list[array] = field(default_factory=list)
    src_v: list[array] = field(default_factory=list)
    src_rows: int = 0
    horizon: int = 0
    limits: list[int] = field(default_factory=list)

    @property
    def cache_len(self) -> int:
        return len(self.limits)

    @property
    def last_token(self) -> int:
        return self.tokens[-1] if self.tokens else SOS

    def caches(self) -> tuple:
        """Snapshot used for bit-exact comparisons."""
        return (
            tuple(self.tokens),
            tuple(a.tobytes() for a in self.self_k),
            tuple(a.tobytes() for a in self.self_v),
            tuple(self.limits),
        )


class ToyModel:
    sos = SOS
    eos = EOS

    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()
        c = self.config
        rng = random.Random(c.seed)
        D = c.frame_width
        H = D * c.ffn_mult
        self.frontend = [_rand_matrix(rng, D, D) for _ in range(3)]
        self.enc_layers = [
            _Layer(_Block(*(_rand_matrix(rng, D, D) for _ in range(4))), _rand_matrix(rng, D, H), _rand_matrix(rng, H, D))
            for _ in range(c.num_enc_layers)
        ]
        self.embed = _rand_matrix(rng, c.vocab_size, D)
        self.dec_layers = [
            _Layer(
                _Block(*(_rand_matrix(rng, D, D) for _ in range(4))),
                _rand_matrix(rng, D, H),
                _rand_matrix(rng, H, D),
                _Block(*(_rand_matrix(rng, D, D) for _ in range(4))),
            )
            for _ in range(c.num_dec_layers)
        ]
        self.out_proj = _rand_matrix(rng, D, c.vocab_size)

    # encoder

    def _frontend_rows(self, x: Matrix, start: int, stop: int) -> Matrix:
        """Causal width-3 mixing plus absolute positions for frames [start, stop)."""
        D = self.config.frame_width
        if x.cols != D:
            raise ContractError(f"frame width {x.cols} != model width {D}")
        out = None
        for lag, w in enumerate(self.frontend):
            shifted = Matrix.zeros(stop - start, D)
            for r in range(start, stop):
                src = r - lag
                if src >= 0:
                    shifted.data[(r - start) * D:(r - start + 1) * D] = x.data[src * D:(src + 1) * D]
            term = nm.matmul(shifted, w)
            out = term if out is None else nm.add(out, term)
        pos = Matrix.from_rows([_positional(r + 1, D) for r in range(start, stop)], D)
        return nm.add(out, pos)

    def encode(self, x: FrameSequence, chunk: ChunkSpec) -> FrameSequence:
        """Offline encoding of the full sequence under the chunk mask."""
        T = len(x)
        if T < 1:
            raise ContractError("cannot encode an empty sequence")
        h = self._frontend_rows(x.values, 0, T)
        mask = mocha_mask(T, chunk)
        for layer in self.enc_layers:
            b = layer.attn
            a = nm.attention(nm.matmul(h, b.wq), nm.matmul(h, b.wk), nm.matmul(h, b.wv), mask)
            h = _ffn(nm.add(h, nm.matmul(a, b.wo)), layer)
        return FrameSequence(h, x.frame_duration_s)

    def stream_encoder(self, chunk: ChunkSpec) -> "StreamingEncoder":
        return StreamingEncoder(self, chunk)

    # decoder

    def initial_state(self) -> DecoderState:
        L = len(self.dec_layers)
        return DecoderState(
            self_k=[array("d") for _ in range(L)],
            self_v=[array("d") for _ in range(L)],
            src_k=[array("d") for _ in range(L)],
            src_v=[array("d") for _ in range(L)],
        )

    def _extend_source(self, state: DecoderState, h: Matrix, limit: int) -> None:
        if limit <= state.src_rows:
            return
        new = h.take_rows(state.src_rows, limit)
        for l, layer in enumerate(self.dec_layers):
            state.src_k[l].extend(nm.matmul(new, layer.cross.wk).data)
            state.src_v[l].extend(nm.matmul(new, layer.cross.wv).data)
        state.src_rows = limit

    def _advance(self, state: DecoderState, h_visible, limit: int) -> Matrix:
        """Feed the last committed token; returns the final hidden row."""
        h = h_visible.values if isinstance(h_visible, FrameSequence) else h_visible
        if limit < 1:
            raise ContractError("decoder step needs at least one visible source frame")
        if limit > h.rows:
            raise ContractError(f"source limit {limit} exceeds {h.rows} visible frames")
        if limit < state.horizon:
            raise ContractError("source horizon may not move backwards")
        D = self.config.frame_width
        pos = state.cache_len
        tok = state.last_token
        x = Matrix(1, D, self.embed.data[tok * D:(tok + 1) * D])
        x = nm.add(x, Matrix(1, D, array("d", _positional(pos + 1, D))))
        self._extend_source(state, h, limit)
        for l, layer in enumerate(self.dec_layers):
            b = layer.attn
            state.self_k[l].extend(nm.matmul(x, b.wk).data)
            state.self_v[l].extend(nm.matmul(x, b.wv).data)
            n = pos + 1
            a = nm.attention(
                nm.matmul(x, b.wq), Matrix(n, D, state.self_k[l]), Matrix(n, D, state.self_v[l]), _full(1, n)
            )
            x = nm.add(x, nm.matmul(a, b.wo))
            c = layer.cross
            ks = Matrix(limit, D, state.src_k[l][:limit * D])
            vs = Matrix(limit, D, state.src_v[l][:limit * D])
            a = nm.attention(nm.matmul(x, c.wq), ks, vs, _full(1, limit))
            x = _ffn(nm.add(x, nm.matmul(a, c.wo)), layer)
        state.limits.append(limit)
        state.horizon = limit
        return x

    def decode_step(self, state: DecoderState, h_visible, limit: int) -> tuple[int, DecoderState]:
        """Greedy next token given source frames ``1..limit``. Mutates ``state``."""
        x = self._advance(state, h_visible, limit)
        logits = nm.matmul(x, self.out_proj).data
        best = 1  # <sos> is never emitted; ties go to the lowest id
        for v in range(2, len(logits)):
            if logits[v] > logits[best]:
                best = v
        state.tokens.append(best)
        return best, state

    def forced_replay(self, tokens: Sequence[int], h_visible, limits: Sequence[int]) -> DecoderState:
        """Rebuild the state that decoding ``tokens`` under ``limits`` produced."""
        if len(limits) < len(tokens):
            raise ContractError("one source limit per replayed token is required")
        state = self.initial_state()
        for tok, lim in zip(tokens, limits):
            if not 0 <= tok < self.config.vocab_size:
                raise ContractError(f"token id {tok} outside vocab")
            self._advance(state, h_visible, lim)
            state.tokens.append(tok)
        return state


class StreamingEncoder:
    """Incremental encoder: emits hidden rows once their chunk is complete."""

    def __init__(self, model: ToyModel, chunk: ChunkSpec):
        self.model = model
        self.chunk = chunk
        D = model.config.frame_width
        self._x = Matrix(0, D, array("d"))
        self._done = 0
        self._k = [array("d") for _ in model.enc_layers]
        self._v = [array("d") for _ in model.enc_layers]
        self.hidden = Matrix(0, D, array("d"))

    def _encode_rows(self, stop: int) -> Matrix:
        m = self.model
        D = m.config.frame_width
        start = self._done
        h = m._frontend_rows(self._x, start, stop)
        for l, layer in enumerate(m.enc_layers):
            b = layer.attn
            self._k[l].extend(nm.matmul(h, b.wk).data)
            self._v[l].extend(nm.matmul(h, b.wv).data)
            K = Matrix(stop, D, self._k[l])
            V = Matrix(stop, D, self._v[l])
            a = nm.attention(nm.matmul(h, b.wq), K, V, _full(stop - start, stop))
            h = _ffn(nm.add(h, nm.matmul(a, b.wo)), layer)
        self._done = stop
        self.hidden = nm.vstack([self.hidden, h], D)
        return h

    def push(self, frames: FrameSequence | Matrix) -> Matrix:
        """Append input frames; return hidden rows completed by them."""
        x = frames.values if isinstance(frames, FrameSequence) else frames
        self._x = nm.vstack([self._x, x], self._x.cols)
        out = []
        if not self.chunk.infinite:
            c = int(self.chunk.size)
            while self._x.rows - self._done >= c:
                out.append(self._encode_rows(self._done + c))
        return nm.vstack(out, self._x.cols)

    def finish(self) -> Matrix:
        """Flush the trailing partial chunk (or everything, for an infinite chunk)."""
        if self._x.rows > self._done:
            return self._encode_rows(self._x.rows)
        return Matrix(0, self._x.cols, array("d"))


class _PassthroughEncoder:
    def __init__(self, width: int):
        self.hidden = Matrix(0, width, array("d"))

    def push(self, frames):
        x = frames.values if isinstance(frames, FrameSequence) else frames
        if self.hidden.rows == 0:
            self.hidden = Matrix(0, x.cols, array("d"))
        self.hidden = nm.vstack([self.hidden, x], x.cols)
        return x

    def finish(self):
        return Matrix(0, self.hidden.cols, array("d"))


@dataclass(eq=False)
class _ScriptState:
    tokens: list[int] = field(default_factory=list)
    limits: list[int] = field(default_factory=list)
    horizon: int = 0

    @property
    def cache_len(self) -> int:
        return len(self.limits)


class OracleModel:
    """A perfect recognizer for latency studies.

    Emits the scripted token ``n`` once its segment (ending at ``rights[n]``)
    lies inside the visible source; otherwise ``<eos>``. The encoder passes
    frames through unchanged. ``config`` only feeds the FLOPs model.
    """

    sos = SOS
    eos = EOS

    def __init__(self, tokens: Sequence[int], rights: Sequence[int], config: ModelConfig | None = None):
        if len(tokens) != len(rights):
            raise ContractError("one right boundary per scripted token")
        self.script = list(tokens)
        self.rights = list(rights)
        self.config = config or ModelConfig()

    def stream_encoder(self, chunk: ChunkSpec | None = None):
        return _PassthroughEncoder(self.config.frame_width)

    def initial_state(self) -> _ScriptState:
        return _ScriptState()

    def decode_step(self, state: _ScriptState, h_visible, limit: int):
        if limit < 1:
            raise ContractError("decoder step needs at least one visible source frame")
        if limit < state.horizon:
            raise ContractError("source horizon may not move backwards")
        n = len(state.tokens)
        tok = self.script[n] if n < len(self.script) and self.rights[n] <= limit else EOS
        state.tokens.append(tok)
        state.limits.append(limit)
        state.horizon = limit
        return tok, state

    def forced_replay(self, tokens, h_visible, limits) -> _ScriptState:
        return _ScriptState(list(tokens), list(limits[:len(tokens)]), max(limits[:len(tokens)], default=0))
