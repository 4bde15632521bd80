"""Counter-based random streams.

Every sampler in the package derives its generator from
(master_seed, stream_id, purpose) through a Philox key, so replica i can
always use stream_id=i and get a stream that is independent of every other
replica and bit-reproducible regardless of evaluation order or worker count.
"""

import numpy as np

from .errors import ParameterError

# purpose tags keep sub-streams of one replica independent of each other
PURPOSE_PATH = 0
PURPOSE_OU_INIT = 1
PURPOSE_OU_PATH = 2
PURPOSE_INIT = 3
PURPOSE_PAIR = 4

_STREAM_BITS = 48


def substream(master_seed: int, stream_id: int, purpose: int = PURPOSE_PATH) -> np.random.Generator:
    """Return the Generator for one (seed, stream, purpose) triple."""
    if stream_id < 0:
        raise ParameterError("stream_id must be nonnegative")
    if stream_id >= 1 << _STREAM_BITS:
        raise ParameterError(f"stream_id must be < 2**{_STREAM_BITS}")
    if not 0 <= purpose < 1 << 15:
        raise ParameterError("purpose tag out of range")
    key = np.array(
        [np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF),
         np.uint64((purpose << _STREAM_BITS) | stream_id)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
