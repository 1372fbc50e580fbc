"""Named PRNG substreams derived from a single root seed.

Every source of randomness in a run (kernel scales, ray sampling, init,
pose noise, ...) draws from its own named stream so that ablations can vary
one stream while freezing the others, and so that replaying a stream is
independent of call order elsewhere.
"""

import zlib

import numpy as np

# The streams a full run may open.  Opening a name outside this list is fine
# (tests do); the list documents the ones the training loops use.
KNOWN_STREAMS = ("kernel-scale", "image-kernel-scale", "ray-sampling", "init", "noise")


def substream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for (seed, name).

    The name is hashed with crc32, which is stable across processes and
    Python versions (unlike hash()).
    """
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng([int(seed), tag])
