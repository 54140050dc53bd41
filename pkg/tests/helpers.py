import random
from array import array

from streamlag.frames import FrameSequence
from streamlag.model import ModelConfig, ToyModel
from streamlag.numeric import Matrix

SMALL = ModelConfig(frame_width=8, num_enc_layers=2, num_dec_layers=2, vocab_size=16, seed=4, frame_duration_s=0.04)


def random_frames(rng, T, width=8, fd=0.04):
    return FrameSequence(Matrix(T, width, array("d", (rng.gauss(0, 1) for _ in range(T * width)))), fd)


def small_model(seed=4, **kw):
    d = dict(SMALL.__dict__)
    d.update(seed=seed, **kw)
    return ToyModel(ModelConfig(**d))
