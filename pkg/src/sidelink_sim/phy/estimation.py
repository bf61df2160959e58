"""Least-squares DMRS channel estimation with cubic interpolation in time and
local cubic smoothing in frequency, and zero-forcing equalisation."""
from functools import lru_cache

import numpy as np
from scipy.signal import savgol_filter

from ..errors import InvalidInputError, NumericalDegeneracyError
from .resources import DMRS_SYMBOLS

# Cells whose channel power falls below this are zeroed and flagged.
ZF_FLOOR = 1e-12
# Subcarriers in the sliding cubic fit applied to the pilot estimates.
FREQ_WINDOW = 35
FREQ_SMOOTHING = "cubic"


@lru_cache(maxsize=8)
def _cubic_weights(n_symbols: int, pilots: tuple[int, ...]) -> np.ndarray:
    """Lagrange weights (n_symbols, len(pilots)) of the cubic through the pilot symbols."""
    t = np.arange(n_symbols, dtype=np.float64)
    p = np.asarray(pilots, dtype=np.float64)
    w = np.ones((n_symbols, p.size))
    for j in range(p.size):
        for m in range(p.size):
            if m != j:
                w[:, j] *= (t - p[m]) / (p[j] - p[m])
    w.flags.writeable = False
    return w


def _smooth_frequency(ls: np.ndarray, window: int, kind: str) -> np.ndarray:
    window = min(window, ls.shape[0] - (1 - ls.shape[0] % 2))
    if window <= 1:
        return ls
    if kind == "average":
        # Centred mean, truncated at the allocation edges.
        half = window // 2
        c = np.concatenate([np.zeros((1, ls.shape[1]), ls.dtype), np.cumsum(ls, axis=0)])
        idx = np.arange(ls.shape[0])
        lo = np.maximum(idx - half, 0)
        hi = np.minimum(idx + half + 1, ls.shape[0])
        return (c[hi] - c[lo]) / (hi - lo)[:, None]
    if window <= 3:
        return ls
    fit = lambda a: savgol_filter(a, window, 3, axis=0, mode="interp")
    return fit(ls.real) + 1j * fit(ls.imag)


def estimate_channel(rx_cells: np.ndarray, dmrs_ref: np.ndarray,
                     dmrs_symbols: tuple[int, ...] = DMRS_SYMBOLS,
                     freq_window: int = FREQ_WINDOW, freq_smoothing: str = FREQ_SMOOTHING) -> np.ndarray:
    """Channel estimate over an allocation.

    ``rx_cells`` is (M, 14) for the allocation's subcarriers, ``dmrs_ref`` is
    (4, M).  Pilot-symbol LS estimates are smoothed across subcarriers by a
    sliding cubic fit over ``freq_window`` subcarriers (odd; 1 disables),
    then interpolated in time by the cubic through the four pilot symbols.
    Both steps reproduce any cubic exactly, so linear phase ramps pass through
    unchanged.
    """
    ref = np.asarray(dmrs_ref)
    if np.any(np.abs(ref) < 1e-15):
        raise NumericalDegeneracyError("reference symbol with zero amplitude")
    if freq_window < 1 or freq_window % 2 == 0:
        raise InvalidInputError("frequency window must be a positive odd number of subcarriers")
    if freq_smoothing not in ("cubic", "average"):
        raise InvalidInputError(f"unknown frequency smoothing {freq_smoothing!r}")
    ls = _smooth_frequency(rx_cells[:, list(dmrs_symbols)] / ref.T, freq_window, freq_smoothing)
    return ls @ _cubic_weights(rx_cells.shape[1], tuple(dmrs_symbols)).T


def equalize(rx_cells: np.ndarray, channel: np.ndarray, noise_variance: float | None = None):
    """Zero-forcing division; returns ``(equalised, noise_variance_per_cell, low_confidence)``.

    Near-zero channel cells are set to 0 and flagged instead of blowing up.
    """
    power = np.abs(channel) ** 2
    low = power < ZF_FLOOR
    safe = np.where(low, 1.0, channel)
    out = np.where(low, 0.0, rx_cells / safe)
    nv = None
    if noise_variance is not None:
        nv = np.where(low, np.inf, noise_variance / np.where(low, 1.0, power))
    return out, nv, low
