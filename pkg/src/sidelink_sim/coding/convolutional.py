"""Tail-biting rate-1/3 convolutional code (constraint length 7, generators 133/171/165 octal).

The decoder is exact maximum likelihood: one Viterbi pass per possible
start state, each constrained to end where it started.
"""
import numba
import numpy as np

from ..errors import InvalidInputError
from .bits import as_bits

GENERATORS = (0o133, 0o171, 0o165)
MEMORY = 6
N_STATES = 1 << MEMORY
_G = np.array(GENERATORS, dtype=np.int64)


@numba.njit(cache=True)
def _parity(x):
    p = 0
    while x:
        p ^= x & 1
        x >>= 1
    return p


@numba.njit(cache=True)
def _output_table(gens):
    # out[state, u, i]: coded bit i when input u enters register in `state`.
    out = np.zeros((64, 2, 3), dtype=np.uint8)
    for st in range(64):
        for u in range(2):
            reg = (u << 6) | st
            for i in range(3):
                out[st, u, i] = _parity(reg & gens[i])
    return out


_OUT = _output_table(_G)


def initial_state(bits: np.ndarray) -> int:
    """Tail-biting start state: the last six input bits, most recent in the high bit."""
    st = 0
    for j in range(MEMORY):
        st |= int(bits[bits.size - 1 - j]) << (MEMORY - 1 - j)
    return st


@numba.njit(cache=True)
def _encode(bits, st, out):
    n = bits.size
    d = np.zeros((3, n), dtype=np.uint8)
    for k in range(n):
        u = bits[k]
        for i in range(3):
            d[i, k] = out[st, u, i]
        st = (u << 5) | (st >> 1)
    return d, st


def conv_encode(block) -> np.ndarray:
    """Encode ``block``; returns a (3, len(block)) array of parity streams."""
    bits = as_bits(block)
    if bits.size < MEMORY:
        raise InvalidInputError(f"tail-biting encoding needs at least {MEMORY} bits, got {bits.size}")
    d, _ = _encode(bits, initial_state(bits), _OUT)
    return d


def conv_encode_states(block) -> tuple[int, int]:
    """(start, end) encoder states, exposed for checking the tail-biting property."""
    bits = as_bits(block)
    s0 = initial_state(bits)
    _, s1 = _encode(bits, s0, _OUT)
    return s0, int(s1)


@numba.njit(cache=True)
def _viterbi_tb(llr, n, out):
    # llr: (3, n); metric is correlation sum((1 - 2c) * llr), maximised.
    neg = -1e300
    bm = np.empty((n, 64, 2))
    for k in range(n):
        for st in range(64):
            for u in range(2):
                m = 0.0
                for i in range(3):
                    if out[st, u, i]:
                        m -= llr[i, k]
                    else:
                        m += llr[i, k]
                bm[k, st, u] = m
    best_metric = neg
    best_bits = np.zeros(n, dtype=np.uint8)
    surv = np.zeros((n, 64), dtype=np.uint8)
    cur = np.empty(64)
    nxt = np.empty(64)
    for s0 in range(64):
        for s in range(64):
            cur[s] = neg
        cur[s0] = 0.0
        for k in range(n):
            for ns in range(64):
                u = ns >> 5
                p0 = (ns & 31) << 1
                p1 = p0 | 1
                m0 = cur[p0] + bm[k, p0, u]
                m1 = cur[p1] + bm[k, p1, u]
                if m1 > m0:
                    nxt[ns] = m1
                    surv[k, ns] = 1
                else:
                    nxt[ns] = m0
                    surv[k, ns] = 0
            for s in range(64):
                cur[s] = nxt[s]
        if cur[s0] > best_metric:
            best_metric = cur[s0]
            st = s0
            for k in range(n - 1, -1, -1):
                best_bits[k] = st >> 5
                st = ((st & 31) << 1) | surv[k, st]
    return best_bits, best_metric


def conv_decode(soft, info_len: int) -> np.ndarray:
    """Maximum-likelihood tail-biting decode of ``soft`` LLRs (positive means bit 0).

    ``soft`` is either a (3, info_len) array or the flat stream-major
    concatenation of the three parity streams.
    """
    llr = np.asarray(soft, dtype=np.float64)
    if llr.size != 3 * info_len:
        raise InvalidInputError(f"expected {3 * info_len} LLRs for {info_len} info bits, got {llr.size}")
    if info_len < MEMORY:
        raise InvalidInputError(f"info_len must be at least {MEMORY}")
    bits, _ = _viterbi_tb(np.ascontiguousarray(llr.reshape(3, info_len)), info_len, _OUT)
    return bits


def codeword_metric(codeword: np.ndarray, soft) -> float:
    """Correlation metric used by the decoder; larger is more likely."""
    llr = np.asarray(soft, dtype=np.float64).reshape(3, -1)
    return float(np.sum((1.0 - 2.0 * codeword) * llr))
