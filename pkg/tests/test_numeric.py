import math
import random
from array import array

import pytest
from hypothesis import given, settings, strategies as st

from streamlag import kernels
from streamlag import numeric as nm
from streamlag.kernels import python_backend
from streamlag.masks import AttentionMask
from streamlag.numeric import ContractError, Matrix


def rand_matrix(rng, r, c):
    return Matrix(r, c, array("d", (rng.uniform(-2, 2) for _ in range(r * c))))


def naive_matmul(a, b):
    return [[sum(a[i][t] * b[t][j] for t in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def test_identity_times_a():
    a = Matrix.from_rows([[1.5, -2.0], [0.25, 4.0]])
    assert nm.matmul(Matrix.identity(2), a) == a


def test_hand_product():
    out = nm.matmul(Matrix.from_rows([[1, 2], [3, 4]]), Matrix.from_rows([[1], [1]]))
    assert out.to_rows() == [[3.0], [7.0]]


def test_random_product_matches_triple_loop():
    rng = random.Random(7)
    a, b = rand_matrix(rng, 5, 7), rand_matrix(rng, 7, 3)
    want = naive_matmul(a.to_rows(), b.to_rows())
    got = nm.matmul(a, b).to_rows()
    for gr, wr in zip(got, want):
        for g, w in zip(gr, wr):
            assert abs(g - w) <= 1e-12


def test_matmul_dimension_mismatch():
    with pytest.raises(ContractError):
        nm.matmul(Matrix.zeros(2, 3), Matrix.zeros(2, 3))


def test_matmul_nt_is_product_with_transpose():
    rng = random.Random(1)
    a, b = rand_matrix(rng, 4, 6), rand_matrix(rng, 5, 6)
    assert nm.matmul_nt(a, b) == nm.matmul(a, b.transpose())


def test_non_finite_output_rejected():
    big = Matrix.from_rows([[1e308, 1e308]])
    with pytest.raises(FloatingPointError):
        nm.matmul(big, Matrix.from_rows([[10.0], [10.0]]))


def full(r, c):
    return AttentionMask.full(r, c)


def test_softmax_equal_scores():
    out = nm.masked_softmax_rows(Matrix.from_rows([[0.3] * 4]), full(1, 4))
    assert out.row(0) == pytest.approx([0.25] * 4, abs=1e-15)


def test_softmax_single_allowed_column():
    mask = AttentionMask(1, 3, bytes([0, 1, 0]))
    out = nm.masked_softmax_rows(Matrix.from_rows([[5.0, -1.0, 2.0]]), mask)
    assert out.row(0) == [0.0, 1.0, 0.0]


def test_softmax_ln2():
    out = nm.masked_softmax_rows(Matrix.from_rows([[0.0, math.log(2.0)]]), full(1, 2))
    assert out.row(0) == pytest.approx([1 / 3, 2 / 3], abs=1e-15)


def test_softmax_fully_masked_row_is_an_error():
    mask = AttentionMask(2, 2, bytes([1, 0, 0, 0]))
    with pytest.raises(ContractError):
        nm.masked_softmax_rows(Matrix.zeros(2, 2), mask)


def test_softmax_shape_mismatch():
    with pytest.raises(ContractError):
        nm.masked_softmax_rows(Matrix.zeros(2, 2), full(2, 3))


@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 10_000))
def test_softmax_rows_stochastic_on_support(r, c, seed):
    rng = random.Random(seed)
    scores = rand_matrix(rng, r, c)
    allow = bytearray(rng.choice([0, 1]) for _ in range(r * c))
    for i in range(r):
        allow[i * c + rng.randrange(c)] = 1
    mask = AttentionMask(r, c, bytes(allow))
    out = nm.masked_softmax_rows(scores, mask)
    for i in range(r):
        row = out.row(i)
        assert abs(math.fsum(row) - 1.0) <= 1e-12
        for j in range(c):
            if not mask.allowed(i, j):
                assert row[j] == 0.0


def test_delta_attention_selects_value_row():
    rng = random.Random(3)
    q, k, v = rand_matrix(rng, 3, 4), rand_matrix(rng, 5, 4), rand_matrix(rng, 5, 2)
    allow = bytearray(15)
    allow[0 * 5 + 2] = 1
    allow[1 * 5 + 4] = 1
    allow[2 * 5 + 0] = 1
    out = nm.attention(q, k, v, AttentionMask(3, 5, bytes(allow)))
    assert out.row(0) == v.row(2)
    assert out.row(1) == v.row(4)
    assert out.row(2) == v.row(0)


def test_equal_scores_average_values():
    v = Matrix.from_rows([[1.0, 2.0], [3.0, 6.0], [5.0, 10.0]])
    q = Matrix.zeros(2, 3)
    k = Matrix.zeros(3, 3)
    out = nm.attention(q, k, v, full(2, 3))
    for i in range(2):
        assert out.row(i) == pytest.approx([3.0, 6.0], abs=1e-14)


def oracle_attention(q, k, v, mask):
    """Step-by-step reference built from plain lists."""
    d = len(q[0])
    out = []
    for i, qi in enumerate(q):
        scores = [sum(a * b for a, b in zip(qi, kj)) / math.sqrt(d) for kj in k]
        allowed = [j for j in range(len(k)) if mask[i][j]]
        m = max(scores[j] for j in allowed)
        e = {j: math.exp(scores[j] - m) for j in allowed}
        z = sum(e.values())
        out.append([sum(e[j] / z * v[j][c] for j in allowed) for c in range(len(v[0]))])
    return out


def test_attention_matches_stepwise_oracle():
    rng = random.Random(11)
    q, k, v = rand_matrix(rng, 3, 3), rand_matrix(rng, 3, 3), rand_matrix(rng, 3, 3)
    rows = [[1, 0, 0], [1, 1, 0], [1, 1, 1]]
    mask = AttentionMask(3, 3, bytes(sum(rows, [])))
    want = oracle_attention(q.to_rows(), k.to_rows(), v.to_rows(), rows)
    got = nm.attention(q, k, v, mask).to_rows()
    for gr, wr in zip(got, want):
        assert gr == pytest.approx(wr, abs=1e-12)


@settings(max_examples=60)
@given(st.integers(1, 5), st.integers(2, 7), st.integers(0, 10_000))
def test_locality_disallowed_columns_do_not_matter(r, c, seed):
    rng = random.Random(seed)
    q, k, v = rand_matrix(rng, r, 3), rand_matrix(rng, c, 3), rand_matrix(rng, c, 2)
    limits = [rng.randint(1, c) for _ in range(r)]
    mask = AttentionMask.from_limits(limits, c)
    base = nm.attention(q, k, v, mask)
    k2, v2 = Matrix(c, 3, array("d", k.data)), Matrix(c, 2, array("d", v.data))
    lo = min(limits)
    for j in range(lo, c):
        for t in range(3):
            k2.data[j * 3 + t] = rng.uniform(-50, 50)
        for t in range(2):
            v2.data[j * 2 + t] = rng.uniform(-50, 50)
    pert = nm.attention(q, k2, v2, mask)
    for i in range(r):
        if limits[i] == lo:
            assert pert.row(i) == base.row(i)


def test_backends_agree_bit_for_bit():
    if kernels.BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    rng = random.Random(5)
    a = array("d", (rng.gauss(0, 1) for _ in range(6 * 9)))
    b = array("d", (rng.gauss(0, 1) for _ in range(9 * 4)))
    c = array("d", (rng.gauss(0, 1) for _ in range(4 * 9)))
    assert kernels.matmul(a, b, 6, 9, 4) == python_backend.matmul(a, b, 6, 9, 4)
    assert kernels.matmul_nt(a, c, 6, 9, 4) == python_backend.matmul_nt(a, c, 6, 9, 4)
    allow = bytes(rng.choice([0, 1, 1]) | (j == 0) for j in range(6 * 9))
    allow = bytes(1 if k % 9 == 0 else allow[k] for k in range(6 * 9))
    assert kernels.masked_softmax(a, allow, 6, 9) == python_backend.masked_softmax(a, allow, 6, 9)
    g = array("d", sorted(rng.uniform(0, 20) for _ in range(50)))
    assert kernels.dal_sum(g, 0.37) == python_backend.dal_sum(g, 0.37)
    assert kernels.all_finite(array("d", [1.0, math.inf])) is False
