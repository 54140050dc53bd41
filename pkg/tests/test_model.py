import math
import random
from array import array

import pytest

from streamlag.frames import FrameSequence
from streamlag.masks import INF, ChunkSpec
from streamlag.model import EOS, SOS, ModelConfig, ToyModel
from streamlag.numeric import ContractError, Matrix

from helpers import random_frames, small_model


def test_config_validation():
    with pytest.raises(ContractError):
        ModelConfig(num_dec_layers=0)
    with pytest.raises(ContractError):
        ModelConfig(frame_duration_s=0)


def test_first_chunk_prefix_matches_full_encoding():
    model = small_model()
    rng = random.Random(0)
    for _ in range(50):
        c = rng.randint(1, 6)
        x = random_frames(rng, rng.randint(c + 1, 20))
        full = model.encode(x, ChunkSpec(c))
        pre = model.encode(x.slice(0, c), ChunkSpec(c))
        assert pre.values.data == full.values.data[: c * 8]


def test_streaming_encoder_matches_offline():
    model = small_model()
    rng = random.Random(1)
    for c in (1, 3, 4, INF):
        x = random_frames(rng, 17)
        enc = model.stream_encoder(ChunkSpec(c))
        for start in range(0, 17, 5):
            enc.push(x.slice(start, start + 5))
        enc.finish()
        assert enc.hidden == model.encode(x, ChunkSpec(c)).values


def test_later_chunks_do_not_leak_backwards():
    model = small_model()
    rng = random.Random(2)
    x = random_frames(rng, 12)
    y = FrameSequence(Matrix(12, 8, array("d", x.values.data)), 0.04)
    for t in range(4 * 8, 12 * 8):
        y.values.data[t] += 1.0
    a = model.encode(x, ChunkSpec(4)).values
    b = model.encode(y, ChunkSpec(4)).values
    assert a.data[: 4 * 8] == b.data[: 4 * 8]
    assert a.data[4 * 8:] != b.data[4 * 8:]


def test_infinite_chunk_sees_the_future():
    model = small_model()
    rng = random.Random(3)
    x = random_frames(rng, 6)
    y = FrameSequence(Matrix(6, 8, array("d", x.values.data)), 0.04)
    y.values.data[-1] += 1.0
    assert model.encode(x, ChunkSpec(INF)).values.row(0) != model.encode(y, ChunkSpec(INF)).values.row(0)


def test_encoding_is_deterministic():
    x = FrameSequence(Matrix.zeros(5, 8), 0.04)
    a = small_model().encode(x, ChunkSpec(2)).values
    b = small_model().encode(x, ChunkSpec(2)).values
    assert a == b and a.is_finite()


def test_decode_step_only_sees_allowed_frames():
    model = small_model()
    rng = random.Random(4)
    h = model.encode(random_frames(rng, 15), ChunkSpec(3)).values
    for lim in (1, 4, 9):
        s1, s2 = model.initial_state(), model.initial_state()
        toks1 = [model.decode_step(s1, h.take_rows(0, lim), lim)[0] for _ in range(4)]
        toks2 = [model.decode_step(s2, h, lim)[0] for _ in range(4)]
        assert toks1 == toks2
        assert s1.caches() == s2.caches()


def test_cache_grows_by_one_and_horizon_is_monotone():
    model = small_model()
    h = model.encode(random_frames(random.Random(5), 10), ChunkSpec(2)).values
    st = model.initial_state()
    for n, lim in enumerate([2, 2, 5, 10], start=1):
        model.decode_step(st, h, lim)
        assert st.cache_len == len(st.tokens) == n
    with pytest.raises(ContractError):
        model.decode_step(st, h, 3)


def test_decode_errors():
    model = small_model()
    h = Matrix.zeros(3, 8)
    with pytest.raises(ContractError):
        model.decode_step(model.initial_state(), h, 0)
    with pytest.raises(ContractError):
        model.decode_step(model.initial_state(), h, 4)


def test_argmax_ties_pick_lowest_id():
    model = small_model()
    model.out_proj = Matrix.zeros(8, 16)
    tok, _ = model.decode_step(model.initial_state(), Matrix.zeros(2, 8), 2)
    assert tok == EOS  # lowest emittable id; <sos> is never produced


def test_replay_of_nothing_is_initial_state():
    model = small_model()
    st = model.forced_replay([], Matrix.zeros(1, 8), [])
    assert st.caches() == model.initial_state().caches()
    assert st.last_token == SOS


def test_replay_then_step_equals_step_chain():
    rng = random.Random(6)
    for case in range(100):
        model = small_model(seed=case % 7)
        T = rng.randint(3, 14)
        h = model.encode(random_frames(rng, T), ChunkSpec(rng.randint(1, 4))).values
        n = rng.randint(0, 6)
        limits = sorted(rng.randint(1, T) for _ in range(n + 1))
        chain = model.initial_state()
        toks = [model.decode_step(chain, h, lim)[0] for lim in limits[:n]]
        replayed = model.forced_replay(toks, h, limits[:n])
        assert replayed.caches() == chain.caches()
        assert model.decode_step(replayed, h, limits[n])[0] == model.decode_step(chain, h, limits[n])[0]


def test_replay_rejects_unknown_tokens():
    model = small_model()
    with pytest.raises(ContractError):
        model.forced_replay([99], Matrix.zeros(2, 8), [1])
