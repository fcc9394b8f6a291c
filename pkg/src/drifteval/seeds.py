"""Deterministic 64-bit seed derivation.

Every random stream in the toolkit is seeded through :func:`mix64`, a
splitmix64 chain over integer components.  The scheme is pure integer
arithmetic, so derived seeds are identical on every platform; the numpy
generators built from them (PCG64) are then reproducible bit for bit.

Stream layout (first component after the master seed):

========================  =======================================
``STREAM_SPLIT``          train/eval split of one (repeat, bin)
``STREAM_MODEL``          classifier training of one (repeat, window)
``STREAM_BOOTSTRAP``      bootstrap resampling of one summary cell
``STREAM_SYNTH``          synthetic corpus generation
``STREAM_EMBED``          token vectors of the built-in embedder
========================  =======================================
"""

MASK64 = (1 << 64) - 1

STREAM_SPLIT = 1
STREAM_MODEL = 2
STREAM_BOOTSTRAP = 3
STREAM_SYNTH = 4
STREAM_EMBED = 5

_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One splitmix64 step: maps a 64-bit state to a well-mixed 64-bit value."""
    z = (state + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(*parts: int) -> int:
    """Fold integer components into one 64-bit seed.

    ``mix64(a, b, c)`` chains ``h = splitmix64(h ^ part)`` starting from
    ``h = 0``.  Negative components are folded to their two's-complement
    64-bit representation.
    """
    h = 0
    for p in parts:
        h = splitmix64(h ^ (p & MASK64))
    return h


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h
