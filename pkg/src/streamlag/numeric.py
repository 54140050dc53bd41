"""Dense matrices and masked attention in 64-bit floats.

Storage is a flat row-major ``array('d')``. Summation order inside every
kernel is fixed (left to right), so results are reproducible bit for bit and
identical between the compiled and pure-Python backends.
"""
from __future__ import annotations

import math
from array import array
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import kernels


class ContractError(ValueError):
    """An operation was called with arguments violating its preconditions."""


@dataclass(eq=False)
class Matrix:
    rows: int
    cols: int
    data: array

    def __post_init__(self):
        if len(self.data) != self.rows * self.cols:
            raise ContractError(
                f"data length {len(self.data)} != {self.rows}x{self.cols}"
            )

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls(rows, cols, array("d", bytes(8 * rows * cols)))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], cols: int | None = None) -> "Matrix":
        if cols is None:
            cols = len(rows[0]) if rows else 0
        data = array("d")
        for r in rows:
            if len(r) != cols:
                raise ContractError("ragged rows")
            data.extend(float(v) for v in r)
        return cls(len(rows), cols, data)

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        m = cls.zeros(n, n)
        for i in range(n):
            m.data[i * n + i] = 1.0
        return m

    def __getitem__(self, ij: tuple[int, int]) -> float:
        i, j = ij
        return self.data[i * self.cols + j]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and self.data == other.data

    def row(self, i: int) -> list[float]:
        return self.data[i * self.cols:(i + 1) * self.cols].tolist()

    def to_rows(self) -> list[list[float]]:
        return [self.row(i) for i in range(self.rows)]

    def take_rows(self, start: int, stop: int) -> "Matrix":
        stop = min(stop, self.rows)
        return Matrix(stop - start, self.cols, self.data[start * self.cols:stop * self.cols])

    def transpose(self) -> "Matrix":
        out = Matrix.zeros(self.cols, self.rows)
        for i in range(self.rows):
            for j in range(self.cols):
                out.data[j * self.rows + i] = self.data[i * self.cols + j]
        return out

    def is_finite(self) -> bool:
        return kernels.all_finite(self.data)


def vstack(parts: Iterable[Matrix], cols: int) -> Matrix:
    data = array("d")
    rows = 0
    for p in parts:
        if p.cols != cols:
            raise ContractError("column mismatch in vstack")
        data.extend(p.data)
        rows += p.rows
    return Matrix(rows, cols, data)


def _checked(m: Matrix) -> Matrix:
    if not m.is_finite():
        raise FloatingPointError("non-finite value produced")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ContractError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    return _checked(Matrix(a.rows, b.cols, kernels.matmul(a.data, b.data, a.rows, a.cols, b.cols)))


def matmul_nt(a: Matrix, b: Matrix) -> Matrix:
    """``a @ b.T`` without materializing the transpose."""
    if a.cols != b.cols:
        raise ContractError(f"cannot multiply {a.rows}x{a.cols} by ({b.rows}x{b.cols})^T")
    return _checked(Matrix(a.rows, b.rows, kernels.matmul_nt(a.data, b.data, a.rows, a.cols, b.rows)))


def add(a: Matrix, b: Matrix) -> Matrix:
    if (a.rows, a.cols) != (b.rows, b.cols):
        raise ContractError("shape mismatch in add")
    return _checked(Matrix(a.rows, a.cols, array("d", [x + y for x, y in zip(a.data, b.data)])))


def add_row(a: Matrix, bias: Sequence[float]) -> Matrix:
    """Broadcast-add a bias vector to every row."""
    if len(bias) != a.cols:
        raise ContractError("bias width mismatch")
    c = a.cols
    return _checked(Matrix(a.rows, c, array("d", [v + bias[k % c] for k, v in enumerate(a.data)])))


def scale(a: Matrix, s: float) -> Matrix:
    return _checked(Matrix(a.rows, a.cols, array("d", [v * s for v in a.data])))


def relu(a: Matrix) -> Matrix:
    return Matrix(a.rows, a.cols, array("d", [v if v > 0.0 else 0.0 for v in a.data]))


def tanh(a: Matrix) -> Matrix:
    return Matrix(a.rows, a.cols, array("d", [math.tanh(v) for v in a.data]))


def masked_softmax_rows(scores: Matrix, mask) -> Matrix:
    """Row softmax restricted to the entries ``mask`` allows.

    Disallowed entries come out as exactly 0. A row with no allowed entry is
    an invalid mask and raises ``ContractError``.
    """
    if (mask.rows, mask.cols) != (scores.rows, scores.cols):
        raise ContractError(
            f"mask {mask.rows}x{mask.cols} does not match scores {scores.rows}x{scores.cols}"
        )
    try:
        out = kernels.masked_softmax(scores.data, mask.allow, scores.rows, scores.cols)
    except ValueError as exc:
        raise ContractError(str(exc)) from None
    return _checked(Matrix(scores.rows, scores.cols, out))


def attention(q: Matrix, k: Matrix, v: Matrix, mask) -> Matrix:
    """Scaled dot-product attention, ``softmax_mask(q k^T / sqrt(d)) v``."""
    if q.cols != k.cols:
        raise ContractError("query/key width mismatch")
    if k.rows != v.rows or k.rows != mask.cols or q.rows != mask.rows:
        raise ContractError("attention operand shapes disagree with the mask")
    scores = scale(matmul_nt(q, k), 1.0 / math.sqrt(q.cols))
    return matmul(masked_softmax_rows(scores, mask), v)
