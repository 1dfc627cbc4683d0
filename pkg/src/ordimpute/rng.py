"""Project-wide random number generation.

Every stochastic routine in this package draws from a numpy
``Generator`` backed by the PCG64 bit generator.  Reproducibility is
seed-based, never thread-based: a master seed plus a tuple of small
integers (a "key") names a substream, and two calls with the same
master seed and key yield bit-identical draws regardless of process or
thread scheduling.  The benchmark harness keys substreams by
(replication index, method id), individual imputers key their chains by
chain index, so any unit of work can run anywhere without changing
results.

Keys are implemented with ``numpy.random.SeedSequence`` spawn keys,
which are designed for exactly this kind of deterministic splitting.
"""

from __future__ import annotations

import zlib

import numpy as np

# Namespace constants for harness substreams.  Fixed for the life of
# the project: changing any value changes every downstream result.
NS_SAMPLE = 1
NS_INJECT = 2
NS_METHOD = 3
NS_CHAIN = 4


def rng_from_seed(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Return a PCG64 Generator for ``seed``.

    Accepts an existing Generator (returned unchanged) so library
    functions can take either a seed or a live stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Return the Generator for the substream named by ``key``.

    The mapping (master_seed, key) -> stream is pure: no global state,
    no dependence on call order.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def substream_seed(master_seed: int, *key: int) -> int:
    """Derive a 64-bit integer seed for the substream named by ``key``.

    Used when a component takes a plain integer seed (e.g. an imputer
    that builds its own chain substreams internally).
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    state = ss.generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def method_key(name: str) -> int:
    """Stable integer key for a method name (CRC-32 of its UTF-8 bytes).

    Keying harness substreams by name rather than by list position
    means adding or reordering methods in a config never perturbs the
    streams of the methods already there.
    """
    return zlib.crc32(name.encode("utf-8"))
