"""Token-weight predictor and Continuous Integrate-and-Fire segmentation.

The predictor maps every hidden frame to a weight in [0, 1] (the fraction of
a token the frame carries). Integrate-and-fire accumulates those weights left
to right and emits a token boundary each time another full threshold has been
collected.
"""
from __future__ import annotations

import json
import math
import random
from array import array
from dataclasses import dataclass, field
from typing import Sequence

from . import numeric as nm
from .frames import FrameSequence
from .numeric import ContractError, Matrix

# Accumulated weight within this fraction of a threshold counts as reaching it,
# so weights rescaled to sum to N fire exactly N tokens despite rounding.
FIRE_TOLERANCE = 1e-9


@dataclass(eq=False)
class PredictorParams:
    w1: Matrix  # width x hidden
    b1: list[float]
    w2: Matrix  # hidden x 1
    b2: list[float]
    seed: int | None = None

    def __post_init__(self):
        if self.w1.cols != len(self.b1) or self.w1.cols != self.w2.rows:
            raise ContractError("predictor layer dims do not compose")
        if self.w2.cols != 1 or len(self.b2) != 1:
            raise ContractError("predictor output must be a single weight")

    @property
    def width(self) -> int:
        return self.w1.rows

    @classmethod
    def init(cls, width: int, hidden: int = 16, seed: int = 0, bias: float = 0.1) -> "PredictorParams":
        rng = random.Random(seed)
        s1 = 1.0 / math.sqrt(width)
        s2 = 1.0 / math.sqrt(hidden)
        w1 = Matrix(width, hidden, array("d", (rng.gauss(0.0, s1) for _ in range(width * hidden))))
        w2 = Matrix(hidden, 1, array("d", (abs(rng.gauss(0.0, s2)) for _ in range(hidden))))
        return cls(w1, [bias] * hidden, w2, [0.0], seed)


def predict_weights(h: FrameSequence | Matrix, p: PredictorParams) -> list[float]:
    """alpha_j = clamp01(relu(relu(h_j W1 + b1) W2 + b2))."""
    values = h.values if isinstance(h, FrameSequence) else h
    if values.cols != p.width:
        raise ContractError(f"frame width {values.cols} != predictor width {p.width}")
    hidden = nm.relu(nm.add_row(nm.matmul(values, p.w1), p.b1))
    out = nm.relu(nm.add_row(nm.matmul(hidden, p.w2), p.b2))
    return [min(1.0, v) for v in out.data]


def scale_weights(alpha: Sequence[float], n_tokens: int) -> list[float]:
    """Rescale weights so they sum to the target token count (training mode)."""
    if n_tokens < 1:
        raise ContractError("target token count must be >= 1")
    total = math.fsum(alpha)
    if total <= 0:
        raise ContractError("weights sum to zero; nothing to scale")
    factor = n_tokens / total
    return [a * factor for a in alpha]


@dataclass
class FiringPlan:
    weights: list[float]
    boundaries: list[tuple[int, int]]  # 1-based inclusive (left, right) per token
    residual: float
    threshold_beta: float = 1.0
    tail_fired: bool = False

    @property
    def num_tokens(self) -> int:
        return len(self.boundaries)

    def rights(self) -> list[int]:
        return [r for _, r in self.boundaries]

    def to_json(self) -> dict:
        return {
            "weights": self.weights,
            "boundaries": [list(b) for b in self.boundaries],
            "residual": self.residual,
            "threshold_beta": self.threshold_beta,
            "tail_fired": self.tail_fired,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FiringPlan":
        return cls(
            list(obj["weights"]),
            [tuple(b) for b in obj["boundaries"]],
            obj["residual"],
            obj.get("threshold_beta", 1.0),
            obj.get("tail_fired", False),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def integrate_and_fire(alpha: Sequence[float], beta: float = 1.0, fire_tail: bool = False) -> FiringPlan:
    """Segment frames into tokens by accumulating weights.

    Token i's right boundary is the first frame whose cumulative weight
    reaches i*beta. Its left boundary follows the previous token's right
    boundary. A frame that crosses several thresholds at once closes one
    segment and yields degenerate ``(j, j)`` segments for the rest.

    With ``fire_tail`` (inference), a leftover accumulation of at least
    beta/2 at stream end fires one more token ending on the last frame.
    """
    if beta <= 0:
        raise ContractError("threshold must be positive")
    boundaries: list[tuple[int, int]] = []
    cum = 0.0
    fired = 0
    left = 1
    tol = FIRE_TOLERANCE * beta
    for j, a in enumerate(alpha, start=1):
        if a < 0:
            raise ContractError(f"negative weight at frame {j}")
        cum += a
        while cum >= (fired + 1) * beta - tol:
            fired += 1
            boundaries.append((min(left, j), j))
            left = j + 1
    residual = max(0.0, cum - fired * beta)
    plan = FiringPlan(list(alpha), boundaries, residual, beta)
    if fire_tail and residual >= beta / 2 and len(alpha) > 0:
        start = boundaries[-1][1] + 1 if boundaries else 1
        plan.boundaries.append((min(start, len(alpha)), len(alpha)))
        plan.tail_fired = True
    return plan


def mre_loss(alpha: Sequence[float], n_tokens: int) -> float:
    """Mean relative error between predicted and true token count."""
    if n_tokens < 1:
        raise ContractError("true token count must be >= 1")
    return abs(math.fsum(alpha) - n_tokens) / n_tokens


class OraclePredictor:
    """Returns planted per-frame weights regardless of the hidden states."""

    def __init__(self, weights: Sequence[float]):
        self.weights = list(weights)

    def __call__(self, h: Matrix, start: int) -> list[float]:
        return self.weights[start:start + h.rows]


class MLPPredictor:
    """Wraps ``predict_weights`` for streaming use."""

    def __init__(self, params: PredictorParams):
        self.params = params

    def __call__(self, h: Matrix, start: int) -> list[float]:
        return predict_weights(h, self.params)
