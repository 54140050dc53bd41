"""Latency and compute metrics for decode timelines.

DAL follows Cherry & Foster's differentiable average lagging: emission
times are pushed forward so consecutive tokens are at least ``d`` apart,
then averaged against the ideal schedule ``(t - 1) * d``.
"""
from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field
from typing import Sequence

from . import kernels
from .numeric import ContractError

# FLOPs per multiply-add.
FLOPS_PER_MAC = 2
# Per-layer multiply-adds in units of D^2: self-attn q,k,v,o (4), cross q,o (2),
# feed-forward 2 * ffn_mult.
PROJ_MACS_BASE = 6
# Score and weighted-sum passes: 2 MACs per attended position per dimension.
SELF_ATTN_MACS = 2
CROSS_ATTN_MACS = 2


@dataclass
class LatencyReport:
    dal_s: float
    d: float
    N_s: float
    N_t: int
    N_c: float | None = None
    closed_form_prediction_s: float | None = None
    relative_delta: float | None = None
    mean_lag_s: float | None = None  # same average without the max recursion

    def __post_init__(self):
        if not math.isfinite(self.dal_s):
            raise ContractError("DAL is not finite")
        if not self.d > 0:
            raise ContractError("ideal token interval must be positive")

    def with_prediction(self, prediction: float | None) -> "LatencyReport":
        self.closed_form_prediction_s = prediction
        if prediction is not None and math.isfinite(prediction) and prediction != 0:
            self.relative_delta = (self.dal_s - prediction) / prediction
        return self


def dal_from_times(g: Sequence[float], N_s: float) -> LatencyReport:
    """DAL for emission times ``g`` (seconds, token order) over ``N_s`` seconds of speech."""
    N_t = len(g)
    if N_t == 0:
        raise ContractError("DAL needs at least one emitted token")
    if not N_s > 0:
        raise ContractError("speech length must be positive")
    d = N_s / N_t
    buf = array("d", g)
    total = kernels.dal_sum(buf, d)
    lag = math.fsum(g[t] - t * d for t in range(N_t)) / N_t
    return LatencyReport(dal_s=total / N_t, d=d, N_s=N_s, N_t=N_t, mean_lag_s=lag)


def dal(timeline, N_s: float | None = None, clock: str = "unaware") -> LatencyReport:
    """DAL of a decode timeline. ``clock`` picks arrival-only or compute-aware times."""
    g = timeline.emission_times(clock)
    if N_s is None:
        N_s = timeline.speech_length_s
    rep = dal_from_times(g, N_s)
    rep.N_c = timeline.chunk_length_s
    return rep


def dal_closed_form_local_agreement(N_c: float, d: float) -> float:
    if N_c < 0 or not d > 0:
        raise ContractError("need N_c >= 0 and d > 0")
    return 1.5 * N_c + d / 2


def dal_closed_form_wait_k(N_c: float, d: float, k: float) -> float:
    if N_c < 0 or not d > 0:
        raise ContractError("need N_c >= 0 and d > 0")
    if not k >= 1:
        raise ContractError(f"k must be >= 1, got {k}")
    return N_c / 2 + (k - 0.5) * d


def relative_reduction(baseline: float, value: float) -> float:
    """Fractional reduction of ``value`` against ``baseline``."""
    if baseline == 0:
        raise ContractError("baseline must be nonzero")
    return (baseline - value) / baseline


def flops_decode_step(prefix_len: int, src_len: int, cfg) -> int:
    """FLOPs of one decoder step over all layers.

    Per layer: projections ``a*D^2``, cached self-attention over
    ``prefix_len`` positions ``b*prefix_len*D``, cross-attention over
    ``src_len`` frames ``c*src_len*D``; a, b, c are the MAC counts above
    times ``FLOPS_PER_MAC``. The vocabulary projection is left out.
    """
    if prefix_len < 0 or src_len < 0:
        raise ContractError("lengths must be nonnegative")
    D = cfg.frame_width
    a = FLOPS_PER_MAC * (PROJ_MACS_BASE + 2 * cfg.ffn_mult)
    b = FLOPS_PER_MAC * SELF_ATTN_MACS
    c = FLOPS_PER_MAC * CROSS_ATTN_MACS
    return cfg.num_dec_layers * (a * D * D + b * prefix_len * D + c * src_len * D)


@dataclass
class FlopsReport:
    per_step: list[float]
    mode: str
    redundant_fraction: float = 0.0
    run_key: tuple = field(default=())

    @property
    def total(self) -> int:
        return sum(self.per_step)

    @classmethod
    def from_timeline(cls, timeline, minimal_total: int | None = None) -> "FlopsReport":
        rep = cls(list(timeline.step_flops), timeline.mode, run_key=timeline.run_key())
        if minimal_total is not None and rep.total > 0:
            rep.redundant_fraction = max(0.0, (rep.total - minimal_total) / rep.total)
        return rep


def redundancy_reduction(forced: FlopsReport, buffered: FlopsReport) -> float:
    """Share of forced-decoding FLOPs that buffered continuation avoids."""
    if forced.run_key != buffered.run_key:
        raise ContractError("FLOPs reports come from different runs")
    if forced.total == 0:
        return 0.0
    return (forced.total - buffered.total) / forced.total
