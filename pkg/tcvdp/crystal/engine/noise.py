"""
Counter-addressable random source for Langevin ensembles.

Trajectories are grouped in fixed-size blocks. A Philox generator is keyed on
(seed, block) and its counter is set from (chunk of steps, purpose), so the
increments of trajectory k at step s on channel c depend only on
(seed, k, s, c) and never on how blocks are spread over workers.
"""

import numpy as np

INCREMENTS = 0
INITIAL_PHASE = 1

# bytes of complex noise drawn per Philox stream
CHUNK_BYTES = 32 * 2**20
MAX_CHUNK_STEPS = 1024


def chunk_steps_for(block_size, n_channels):
    per_step = block_size * max(n_channels, 1) * 16
    return int(max(1, min(MAX_CHUNK_STEPS, CHUNK_BYTES // per_step)))


class NoiseSource:
    """Complex unit-variance Gaussian increments, <|z|^2> = 1"""

    def __init__(self, seed, block_size, n_channels, chunk_steps=None):
        self.seed = int(seed)
        self.block_size = int(block_size)
        self.n_channels = int(n_channels)
        self.chunk_steps = chunk_steps or chunk_steps_for(self.block_size, self.n_channels)
        self._cached_key = None
        self._cached_chunk = None

    def generator(self, block, counter_word, purpose):
        bit_generator = np.random.Philox(
            key=np.array([self.seed, block], dtype=np.uint64),
            counter=np.array([0, counter_word, purpose, 0], dtype=np.uint64),
        )
        return np.random.Generator(bit_generator)

    def chunk(self, block, chunk_index):
        """Increments for steps [chunk_index * chunk_steps, (chunk_index + 1) * chunk_steps)

        Shape (chunk_steps, block_size, n_channels).
        """
        key = (block, chunk_index)
        if self._cached_key == key:
            return self._cached_chunk
        rng = self.generator(block, chunk_index, INCREMENTS)
        xi = rng.standard_normal((self.chunk_steps, self.block_size, self.n_channels, 2))
        z = (xi[..., 0] + 1j * xi[..., 1]) * np.sqrt(0.5)
        self._cached_key, self._cached_chunk = key, z
        return z

    def step_increments(self, traj_index, step):
        block, row = divmod(int(traj_index), self.block_size)
        chunk_index, offset = divmod(int(step), self.chunk_steps)
        return self.chunk(block, chunk_index)[offset, row]

    def initial_phases(self, block):
        rng = self.generator(block, 0, INITIAL_PHASE)
        return rng.uniform(0.0, 2.0 * np.pi, size=self.block_size)
