"""Counter-based random streams keyed by (master seed, indices...).

A stream depends only on its key, never on scheduling order, so parallel
replications reproduce serial ones exactly.
"""

import zlib

import numpy as np


def _word(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key)


def stream(master_seed, *keys):
    """Philox generator keyed by ``master_seed`` and integer/string ``keys``."""
    seq = np.random.SeedSequence([int(master_seed), *(_word(k) for k in keys)])
    return np.random.Generator(np.random.Philox(seq))
