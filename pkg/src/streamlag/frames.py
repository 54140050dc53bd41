from __future__ import annotations

from dataclasses import dataclass

from .numeric import ContractError, Matrix


@dataclass(eq=False)
class FrameSequence:
    """Frame vectors (one row per frame) plus the duration of one frame."""

    values: Matrix
    frame_duration_s: float

    def __post_init__(self):
        if self.frame_duration_s <= 0:
            raise ContractError("frame duration must be positive")

    def __len__(self) -> int:
        return self.values.rows

    @property
    def width(self) -> int:
        return self.values.cols

    @property
    def duration_s(self) -> float:
        return self.values.rows * self.frame_duration_s

    def slice(self, start: int, stop: int) -> "FrameSequence":
        """0-based half-open frame range."""
        return FrameSequence(self.values.take_rows(start, stop), self.frame_duration_s)

    def chunks(self, frames_per_chunk: int):
        """Yield consecutive (start, FrameSequence) input chunks; the last may be short."""
        if frames_per_chunk < 1:
            raise ContractError("chunk must hold at least one frame")
        for start in range(0, len(self), frames_per_chunk):
            yield start, self.slice(start, start + frames_per_chunk)
