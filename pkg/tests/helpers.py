import numpy as np

from parflow.tensor import ChunkInputs


def random_inputs(rng, L, R, d, scale=0.5):
    s = scale / np.sqrt(R * d)
    return ChunkInputs(*(rng.standard_normal((L, R, d)) * s for _ in range(3)))


def random_state(rng, d, scale=0.5):
    return np.eye(d) + rng.standard_normal((d, d)) * scale / np.sqrt(d)
