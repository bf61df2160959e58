"""Circular-buffer rate matching for turbo and convolutional codewords, plus
the row/column channel interleaver applied before modulation.

Index maps are cached per shape: ``rate_match`` gathers, ``rate_recover``
scatter-adds LLRs back (repeats are summed, punctured positions stay 0).
"""
from functools import lru_cache

import numpy as np

from ..errors import InvalidInputError

_COLS = 32
_TURBO_PERM = np.array([0, 16, 8, 24, 4, 20, 12, 28, 2, 18, 10, 26, 6, 22, 14, 30,
                        1, 17, 9, 25, 5, 21, 13, 29, 3, 19, 11, 27, 7, 23, 15, 31])
_CONV_PERM = np.array([1, 17, 9, 25, 5, 21, 13, 29, 3, 19, 11, 27, 7, 23, 15, 31,
                       0, 16, 8, 24, 4, 20, 12, 28, 2, 18, 10, 26, 6, 22, 14, 30])
NULL = -1


def _subblock(D: int, perm: np.ndarray) -> np.ndarray:
    """Positions (into a D-long stream, NULL for dummies) after column-permuted interleaving."""
    R = -(-D // _COLS)
    nd = R * _COLS - D
    y = np.concatenate([np.full(nd, NULL), np.arange(D)])
    return y.reshape(R, _COLS)[:, perm].T.ravel()


def _subblock_third(D: int) -> np.ndarray:
    R = -(-D // _COLS)
    kp = R * _COLS
    nd = kp - D
    y = np.concatenate([np.full(nd, NULL), np.arange(D)])
    k = np.arange(kp)
    return y[(_TURBO_PERM[k // R] + _COLS * (k % R) + 1) % kp]


@lru_cache(maxsize=256)
def _turbo_map(D: int, E: int, rv: int, fillers: int) -> np.ndarray:
    v0 = _subblock(D, _TURBO_PERM)
    v1 = _subblock(D, _TURBO_PERM)
    v2 = _subblock_third(D)
    kp = v0.size
    # Flat codeword index = stream * D + position; filler bits behave as NULL
    # in the systematic and first parity streams.
    w = np.empty(3 * kp, dtype=np.int64)
    w[:kp] = np.where((v0 >= 0) & (v0 >= fillers), v0, NULL)
    w[kp::2] = np.where((v1 >= 0) & (v1 >= fillers), D + v1, NULL)
    w[kp + 1::2] = np.where(v2 >= 0, 2 * D + v2, NULL)
    R = kp // _COLS
    ncb = w.size
    k0 = R * (2 * -(-ncb // (8 * R)) * rv + 2)
    return _collect(w, E, k0)


@lru_cache(maxsize=64)
def _conv_map(D: int, E: int) -> np.ndarray:
    v = _subblock(D, _CONV_PERM)
    w = np.concatenate([np.where(v >= 0, s * D + v, NULL) for s in range(3)])
    return _collect(w, E, 0)


def _collect(w: np.ndarray, E: int, k0: int) -> np.ndarray:
    valid = np.roll(w, -k0)
    valid = valid[valid != NULL]
    reps = -(-E // valid.size)
    out = np.tile(valid, reps)[:E]
    out.flags.writeable = False
    return out


def _index_map(D: int, E: int, rv: int, code: str, fillers: int) -> np.ndarray:
    if E <= 0:
        raise InvalidInputError("target length must be positive")
    if rv not in (0, 1, 2, 3):
        raise InvalidInputError("redundancy version must be 0..3")
    if code == "turbo":
        return _turbo_map(D, E, rv, fillers)
    if code == "conv":
        return _conv_map(D, E)
    raise InvalidInputError(f"unknown code type {code!r}")


def rate_match(codeword, target_len: int, rv: int = 0, code: str = "turbo", fillers: int = 0) -> np.ndarray:
    """Select ``target_len`` bits of a (3, D) codeword from its circular buffer."""
    cw = np.asarray(codeword)
    if cw.ndim != 2 or cw.shape[0] != 3:
        raise InvalidInputError("codeword must have shape (3, D)")
    idx = _index_map(cw.shape[1], target_len, rv, code, fillers)
    return cw.ravel()[idx]


def rate_recover(llr, D: int, rv: int = 0, code: str = "turbo", fillers: int = 0,
                 filler_llr: float = 60.0) -> np.ndarray:
    """Map received LLRs back onto a (3, D) codeword, combining repetitions."""
    llr = np.asarray(llr, dtype=np.float64).ravel()
    idx = _index_map(D, llr.size, rv, code, fillers)
    out = np.bincount(idx, weights=llr, minlength=3 * D).reshape(3, D)
    if fillers:
        out[0, :fillers] = filler_llr
        out[1, :fillers] = filler_llr
    return out


@lru_cache(maxsize=64)
def _interleave_map(n_bits: int, n_cols: int, bits_per_symbol: int) -> np.ndarray:
    groups = n_bits // bits_per_symbol
    if groups * bits_per_symbol != n_bits or groups % n_cols:
        raise InvalidInputError("bit count must fill the interleaver matrix exactly")
    rows = groups // n_cols
    # Groups written row by row, read column by column (time-first spreading).
    order = np.arange(groups).reshape(rows, n_cols).T.ravel()
    idx = (order[:, None] * bits_per_symbol + np.arange(bits_per_symbol)).ravel()
    idx.flags.writeable = False
    return idx


def channel_interleave(bits, n_cols: int, bits_per_symbol: int = 2) -> np.ndarray:
    """Spread consecutive coded symbols across the ``n_cols`` data SC-FDMA symbols."""
    arr = np.asarray(bits)
    return arr[_interleave_map(arr.size, n_cols, bits_per_symbol)]


def channel_deinterleave(values, n_cols: int, bits_per_symbol: int = 2) -> np.ndarray:
    arr = np.asarray(values)
    out = np.empty_like(arr)
    out[_interleave_map(arr.size, n_cols, bits_per_symbol)] = arr
    return out
