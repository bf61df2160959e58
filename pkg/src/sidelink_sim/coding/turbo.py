"""LTE parallel-concatenated turbo code with QPP interleaver and a max-log-MAP decoder."""
from functools import lru_cache

import numba
import numpy as np

from ..errors import InvalidInputError
from ._qpp import QPP_PARAMS, TURBO_SIZES
from .bits import as_bits
from .crc import CrcKind

# Extrinsic scaling commonly applied to max-log-MAP to offset its optimism.
EXTRINSIC_SCALE = 0.75
_LLR_CLIP = 60.0


@lru_cache(maxsize=None)
def qpp_interleaver(K: int) -> np.ndarray:
    """Interleaver permutation: output position i reads input position pi[i]."""
    if K not in QPP_PARAMS:
        raise InvalidInputError(f"{K} is not a valid turbo interleaver size")
    f1, f2 = QPP_PARAMS[K]
    i = np.arange(K, dtype=np.int64)
    pi = (f1 * i + f2 * i * i) % K
    pi.flags.writeable = False
    return pi


def valid_block_size(K: int) -> bool:
    return K in QPP_PARAMS


def next_block_size(n: int) -> int:
    """Smallest valid interleaver size >= n."""
    for K in TURBO_SIZES:
        if K >= n:
            return K
    raise InvalidInputError(f"{n} exceeds the largest turbo block size {TURBO_SIZES[-1]}")


@numba.njit(cache=True)
def _rsc(bits, K):
    # Returns parity for the K info bits plus 3 tail (x, z) pairs.
    z = np.zeros(K + 3, dtype=np.uint8)
    x_tail = np.zeros(3, dtype=np.uint8)
    st = 0
    for k in range(K):
        s1 = (st >> 2) & 1
        s2 = (st >> 1) & 1
        s3 = st & 1
        a = bits[k] ^ s2 ^ s3
        z[k] = a ^ s1 ^ s3
        st = (a << 2) | (st >> 1)
    for t in range(3):
        s1 = (st >> 2) & 1
        s2 = (st >> 1) & 1
        s3 = st & 1
        x_tail[t] = s2 ^ s3
        z[K + t] = s1 ^ s3
        st = st >> 1
    return z, x_tail


def turbo_encode(block) -> np.ndarray:
    """Encode K bits into a (3, K+4) array: systematic, parity 1, parity 2 with tails."""
    c = as_bits(block)
    K = c.size
    pi = qpp_interleaver(K)
    z, xt = _rsc(c, K)
    zp, xpt = _rsc(np.ascontiguousarray(c[pi]), K)
    d = np.zeros((3, K + 4), dtype=np.uint8)
    d[0, :K] = c
    d[1, :K] = z[:K]
    d[2, :K] = zp[:K]
    # Trellis termination bits, multiplexed over the three streams.
    d[0, K:] = (xt[0], z[K + 1], xpt[0], zp[K + 1])
    d[1, K:] = (z[K], xt[2], zp[K], xpt[2])
    d[2, K:] = (xt[1], z[K + 2], xpt[1], zp[K + 2])
    return d


def _split_tails(llr: np.ndarray, K: int):
    d0, d1, d2 = llr
    sys1 = np.concatenate([d0[:K], [d0[K], d2[K], d1[K + 1]]])
    par1 = np.concatenate([d1[:K], [d1[K], d0[K + 1], d2[K + 1]]])
    sys2_tail = np.array([d0[K + 2], d2[K + 2], d1[K + 3]])
    par2 = np.concatenate([d2[:K], [d1[K + 2], d0[K + 3], d2[K + 3]]])
    return sys1, par1, sys2_tail, par2


@numba.njit(cache=True)
def _max_log_map(lsys, lpar, la, K):
    """One constituent decoder pass; returns a-posteriori LLRs of the K info bits."""
    n = K + 3
    neg = -1e30
    alpha = np.full((n + 1, 8), neg)
    beta = np.full((n + 1, 8), neg)
    alpha[0, 0] = 0.0
    beta[n, 0] = 0.0
    # Precomputed trellis: next state and parity per (state, u).
    nxt = np.zeros((8, 2), dtype=np.int64)
    par = np.zeros((8, 2), dtype=np.int64)
    for st in range(8):
        s1 = (st >> 2) & 1
        s2 = (st >> 1) & 1
        s3 = st & 1
        for u in range(2):
            a = u ^ s2 ^ s3
            par[st, u] = a ^ s1 ^ s3
            nxt[st, u] = (a << 2) | (st >> 1)
    for k in range(n):
        ls = 0.5 * (lsys[k] + la[k])
        lp = 0.5 * lpar[k]
        mx = neg
        for st in range(8):
            am = alpha[k, st]
            if am <= neg:
                continue
            for u in range(2):
                g = (ls if u == 0 else -ls) + (lp if par[st, u] == 0 else -lp)
                ns = nxt[st, u]
                v = am + g
                if v > alpha[k + 1, ns]:
                    alpha[k + 1, ns] = v
        for st in range(8):
            if alpha[k + 1, st] > mx:
                mx = alpha[k + 1, st]
        for st in range(8):
            if alpha[k + 1, st] > neg:
                alpha[k + 1, st] -= mx
    for k in range(n - 1, -1, -1):
        ls = 0.5 * (lsys[k] + la[k])
        lp = 0.5 * lpar[k]
        mx = neg
        for st in range(8):
            best = neg
            for u in range(2):
                bn = beta[k + 1, nxt[st, u]]
                if bn <= neg:
                    continue
                g = (ls if u == 0 else -ls) + (lp if par[st, u] == 0 else -lp)
                if bn + g > best:
                    best = bn + g
            beta[k, st] = best
            if best > mx:
                mx = best
        for st in range(8):
            if beta[k, st] > neg:
                beta[k, st] -= mx
    out = np.empty(K)
    for k in range(K):
        ls = 0.5 * (lsys[k] + la[k])
        lp = 0.5 * lpar[k]
        m0 = neg
        m1 = neg
        for st in range(8):
            am = alpha[k, st]
            if am <= neg:
                continue
            for u in range(2):
                bn = beta[k + 1, nxt[st, u]]
                if bn <= neg:
                    continue
                g = (ls if u == 0 else -ls) + (lp if par[st, u] == 0 else -lp)
                v = am + g + bn
                if u == 0:
                    if v > m0:
                        m0 = v
                elif v > m1:
                    m1 = v
        out[k] = m0 - m1
    return out


@numba.njit(cache=True)
def _crc_ok(bits, length, poly):
    top = 1 << (length - 1)
    mask = (1 << length) - 1
    reg = 0
    for i in range(bits.size):
        fb = ((reg & top) != 0) ^ (bits[i] != 0)
        reg = (reg << 1) & mask
        if fb:
            reg ^= poly
    return reg == 0


@numba.njit(cache=True)
def _turbo_iterate(sys1, par1, sys2, par2, pi, K, max_iter, scale, crc_len, crc_poly):
    la1 = np.zeros(K + 3)
    la2 = np.zeros(K + 3)
    post = np.zeros(K)
    hard = np.zeros(K, dtype=np.uint8)
    passed = False
    iters = 0
    for it in range(max_iter):
        iters = it + 1
        l1 = _max_log_map(sys1, par1, la1, K)
        for i in range(K):
            la2[i] = scale * (l1[pi[i]] - sys1[pi[i]] - la1[pi[i]])
        l2 = _max_log_map(sys2, par2, la2, K)
        for i in range(K):
            la1[pi[i]] = scale * (l2[i] - sys2[i] - la2[i])
            post[pi[i]] = l2[i]
        for k in range(K):
            hard[k] = 1 if post[k] < 0 else 0
        if crc_len > 0 and _crc_ok(hard, crc_len, crc_poly):
            passed = True
            break
    return hard, post, passed, iters


def turbo_decode(soft, K: int, max_iter: int = 8, crc: CrcKind | None = None):
    """Iterative max-log-MAP decoding.

    ``soft`` holds 3K+12 LLRs (stream-major, positive means bit 0).  When
    ``crc`` is given, decoding stops at the first iteration whose hard
    decision passes it.  Returns ``(bits, crc_passed, iterations)``;
    ``crc_passed`` is None when no CRC was supplied.
    """
    llr = np.asarray(soft, dtype=np.float64)
    if llr.size != 3 * K + 12:
        raise InvalidInputError(f"expected {3 * K + 12} LLRs for K={K}, got {llr.size}")
    if max_iter < 1:
        raise InvalidInputError("max_iter must be >= 1")
    pi = qpp_interleaver(K)
    llr = np.clip(llr.reshape(3, K + 4), -_LLR_CLIP, _LLR_CLIP)
    sys1, par1, sys2_tail, par2 = _split_tails(llr, K)
    sys2 = np.concatenate([sys1[:K][pi], sys2_tail])
    crc_len, crc_poly = (crc.length, crc.poly) if crc is not None else (0, 0)
    hard, _, passed, iters = _turbo_iterate(
        sys1, par1, sys2, np.ascontiguousarray(par2), pi, K, max_iter,
        EXTRINSIC_SCALE, crc_len, crc_poly,
    )
    return hard, (passed if crc is not None else None), iters
