"""Deterministic random streams.

All randomness flows through :func:`seeded_rng`, a numpy ``Generator`` backed
by the PCG64 bit generator (128-bit state, 64-bit output). Uniforms are
``random()`` draws in ``[0, 1)``; Gaussians use numpy's ziggurat transform
(``standard_normal``). Both are specified by numpy independently of platform,
so a seed reproduces the same stream everywhere.
"""

import numpy as np

__all__ = ["seeded_rng"]


def seeded_rng(seed):
    """Return a fresh ``numpy.random.Generator(PCG64(seed))``."""
    if not isinstance(seed, (int, np.integer)) or seed < 0 or seed >= 2 ** 64:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return np.random.Generator(np.random.PCG64(int(seed)))
