"""
Reproducible Noise Streams
==========================

Every (path, player) pair owns an independent Philox stream keyed by the run
seed and the path index, with the player index placed in the high words of
the counter. A stream depends only on (seed, path, player), so how paths are
split across workers cannot change any draw. Draws are served one time step
at a time (read from the streams in blocks), so a simulation never holds the
full (paths, steps, players) noise array.

Sub-run seeds are derived from a master seed and a list of labels with
BLAKE2b, so a study can be re-run piecewise (one N, one deviation) and still
reproduce the numbers of the full run.
"""

import hashlib
from typing import Iterator, Sequence

import numpy as np

SEED_BITS = 64
NOISE_BLOCK = 64


def derive_seed(master: int, *labels) -> int:
    """64-bit seed from a master seed and labels such as ("gap", 256, "minor")."""
    digest = hashlib.blake2b(digest_size=SEED_BITS // 8)
    digest.update(str(int(master)).encode())
    for label in labels:
        digest.update(b"\x1f")
        digest.update(str(label).encode())
    return int.from_bytes(digest.digest(), "little")


def player_stream(seed: int, path: int, player: int) -> np.random.Generator:
    key = (int(path) << SEED_BITS) | (int(seed) & ((1 << SEED_BITS) - 1))
    bit_generator = np.random.Philox(key=key, counter=int(player) << 128)
    return np.random.Generator(bit_generator)


def noise_steps(
    seed: int,
    paths: Sequence[int],
    n_players: int,
    n_draws: int,
    block: int = NOISE_BLOCK,
) -> Iterator[np.ndarray]:
    """
    Yield n_draws arrays of standard normals, each of shape (len(paths), n_players).

    Draw 0 of each stream seeds the initial state, draws 1..M drive the steps.
    Streams are read `block` draws at a time, so at most
    (len(paths), block, n_players) values are held whatever the horizon, and
    the values do not depend on `block`.
    """
    generators = [[player_stream(seed, path, i) for i in range(n_players)] for path in paths]
    block = max(1, int(block))
    for start in range(0, n_draws, block):
        size = min(block, n_draws - start)
        buffer = np.empty((len(generators), size, n_players))
        for a, row in enumerate(generators):
            for i, stream in enumerate(row):
                buffer[a, :, i] = stream.standard_normal(size)
        for j in range(size):
            yield buffer[:, j, :]
