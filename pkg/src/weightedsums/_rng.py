"""Counter-keyed random streams.

Every random block is drawn from a generator keyed by ``(seed, stream, block)``
so that a value depends only on its index, never on the total size requested
or on which worker produced it.
"""
import numpy as np

from .exceptions import InvalidArgumentError

# stream tags; arbitrary but fixed forever, changing them changes every result
STREAM_BATCH = 0x5A4D
STREAM_DIRECTIONS = 0xD1E5
STREAM_LAMBDA_START = 0x1A3B
STREAM_M4_START = 0x3C4D
STREAM_CHECK = 0x7E57

ROW_BLOCK = 1024


def check_seed(seed):
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise InvalidArgumentError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise InvalidArgumentError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def block_generator(seed, stream, block=0):
    """Generator for one block of a keyed stream."""
    ss = np.random.SeedSequence([check_seed(seed), int(stream), int(block)])
    return np.random.Generator(np.random.PCG64(ss))


def blocked_rows(seed, stream, count, block_rows, draw):
    """Concatenate ``draw(rng, block_rows)`` over blocks, truncated to ``count`` rows.

    Whole blocks are always drawn, so row ``k`` is the same for every ``count > k``.
    """
    n_blocks = -(-count // block_rows)
    parts = [draw(block_generator(seed, stream, b), block_rows) for b in range(n_blocks)]
    return np.concatenate(parts, axis=0)[:count]
