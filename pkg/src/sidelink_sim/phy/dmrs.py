"""Demodulation reference signals: cyclically extended Zadoff-Chu base sequences
with an LTE-style cyclic shift (phase ramp) per allocation."""
from functools import lru_cache

import numpy as np

from ..errors import InvalidInputError
from .resources import DMRS_SYMBOLS, ResourcePool

CYCLIC_SHIFTS = (0, 3, 6, 9)
_ROOTS = {"pscch": 1, "pssch": 2}


def _largest_prime_below(n: int) -> int:
    for p in range(n - 1, 1, -1):
        if all(p % d for d in range(2, int(p ** 0.5) + 1)):
            return p
    raise InvalidInputError(f"no prime below {n}")


@lru_cache(maxsize=64)
def base_sequence(length: int, root: int) -> np.ndarray:
    nzc = _largest_prime_below(length)
    m = np.arange(length) % nzc
    seq = np.exp(-1j * np.pi * root * m * (m + 1) / nzc)
    seq.flags.writeable = False
    return seq


def generate_dmrs(pool: ResourcePool, cyclic_shift: int, channel: str, n_prb: int | None = None) -> np.ndarray:
    """Reference symbols, shape (4, M): one row per DMRS symbol of the subframe."""
    if cyclic_shift not in CYCLIC_SHIFTS:
        raise InvalidInputError(f"cyclic shift must be one of {CYCLIC_SHIFTS}")
    if channel not in _ROOTS:
        raise InvalidInputError(f"unknown channel {channel!r}")
    if n_prb is None:
        n_prb = pool.sci_prbs if channel == "pscch" else pool.subchannel_size_prbs
    M = n_prb * pool.prb_size_subcarriers
    n = np.arange(M)
    seq = np.exp(2j * np.pi * cyclic_shift * n / 12) * base_sequence(M, _ROOTS[channel])
    return np.tile(seq, (len(DMRS_SYMBOLS), 1))
