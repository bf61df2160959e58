"""Length-31 Gold sequence scrambling."""
from functools import lru_cache

import numba
import numpy as np

from .bits import as_bits

NC = 1600


@numba.njit(cache=True)
def _gold(c_init, n):
    total = n + NC + 31
    x1 = np.zeros(total, dtype=np.uint8)
    x2 = np.zeros(total, dtype=np.uint8)
    x1[0] = 1
    for i in range(31):
        x2[i] = (c_init >> i) & 1
    for i in range(total - 31):
        x1[i + 31] = x1[i + 3] ^ x1[i]
        x2[i + 31] = x2[i + 3] ^ x2[i + 2] ^ x2[i + 1] ^ x2[i]
    out = np.empty(n, dtype=np.uint8)
    for i in range(n):
        out[i] = x1[i + NC] ^ x2[i + NC]
    return out


@lru_cache(maxsize=128)
def gold_sequence(c_init: int, n: int) -> np.ndarray:
    seq = _gold(int(c_init) & 0x7FFFFFFF, n)
    seq.flags.writeable = False
    return seq


def scramble(bits, c_init: int) -> np.ndarray:
    """XOR with the Gold sequence; applying it twice is the identity."""
    b = as_bits(bits)
    return b ^ gold_sequence(c_init, b.size)


def descramble_llr(llr, c_init: int) -> np.ndarray:
    """Receiver-side dual of :func:`scramble`: flip LLR signs where the sequence is 1."""
    llr = np.asarray(llr, dtype=np.float64)
    c = gold_sequence(c_init, llr.size)
    return np.where(c == 1, -llr, llr)
