"""Deterministic, counter-based random number streams.

A stream is addressed by (master_seed, stream_id) and its k-th Gaussian
variate is a pure function of (master_seed, stream_id, k).  Re-creating a
stream replays the identical sequence bit for bit; streams with different
addresses are statistically independent.  Ensemble simulation assigns one
stream per path, so results cannot depend on how paths are scheduled.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

_U64_MASK = 0xFFFFFFFFFFFFFFFF


def _as_u64(value):
    return np.uint64(int(value) & _U64_MASK)


@dataclass
class RandomStream:
    """Positioned view into the Gaussian sequence of one (seed, id) address."""

    master_seed: int
    stream_id: int
    counter: int = field(default=0)

    def normals(self, n):
        """Next n standard-normal variates; advances the stream position."""
        if n < 0:
            raise ValueError("n must be >= 0")
        out = np.empty(n, dtype=np.float64)
        if n:
            _kernels.fill_normals(
                _as_u64(self.master_seed),
                _as_u64(self.stream_id),
                np.int64(self.counter),
                out,
            )
        self.counter += n
        return out

    def reset(self):
        self.counter = 0


def make_stream(master_seed, stream_id):
    """Stream positioned at the start of the (master_seed, stream_id) sequence."""
    return RandomStream(master_seed=int(master_seed), stream_id=int(stream_id))


def wiener_increments(stream, n, dt):
    """n i.i.d. Wiener increments: normal with mean 0 and variance dt."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n == 0:
        return np.empty(0, dtype=np.float64)
    return stream.normals(n) * np.sqrt(dt)


def normals_block(master_seed, first_stream, counter, n_paths, dim):
    """(n_paths, dim) normals: row p from stream first_stream+p, counters
    [counter, counter+dim).  Used by the ensemble integrators."""
    out = np.empty((n_paths, dim), dtype=np.float64)
    _kernels.fill_normals_block(
        _as_u64(master_seed), np.int64(first_stream), np.int64(counter), out
    )
    return out
