"""QPSK mapping, DFT transform precoding and SC-FDMA (de)modulation."""
import numpy as np

from ..errors import InvalidInputError
from .resources import ResourceGrid, ResourcePool

_A = 1 / np.sqrt(2)


def qpsk_map(bits) -> np.ndarray:
    b = np.asarray(bits, dtype=np.float64).ravel()
    if b.size % 2:
        raise InvalidInputError("QPSK needs an even number of bits")
    return _A * ((1 - 2 * b[0::2]) + 1j * (1 - 2 * b[1::2]))


def qpsk_soft_demap(symbols, noise_variance) -> np.ndarray:
    """Max-log LLRs (positive means 0); exact for Gray QPSK.

    ``noise_variance`` is the complex noise variance, scalar or per symbol.
    """
    nv = np.asarray(noise_variance, dtype=np.float64)
    if np.any(nv <= 0):
        raise InvalidInputError("noise variance must be positive")
    y = np.asarray(symbols).ravel()
    scale = 4 * _A / nv
    llr = np.empty(2 * y.size)
    llr[0::2] = scale * y.real
    llr[1::2] = scale * y.imag
    return llr


def transform_precode(symbols, m_subcarriers: int) -> np.ndarray:
    """Unitary DFT over consecutive blocks of ``m_subcarriers`` symbols."""
    x = np.asarray(symbols)
    if x.size % m_subcarriers:
        raise InvalidInputError(f"{x.size} symbols do not split into blocks of {m_subcarriers}")
    return np.fft.fft(x.reshape(-1, m_subcarriers), axis=1, norm="ortho").ravel()


def transform_deprecode(symbols, m_subcarriers: int) -> np.ndarray:
    x = np.asarray(symbols)
    if x.size % m_subcarriers:
        raise InvalidInputError(f"{x.size} symbols do not split into blocks of {m_subcarriers}")
    return np.fft.ifft(x.reshape(-1, m_subcarriers), axis=1, norm="ortho").ravel()


def _bins(pool: ResourcePool) -> np.ndarray:
    # Occupied band centred on DC.
    k = np.arange(pool.n_subcarriers)
    return (k - pool.n_subcarriers // 2) % pool.fft_size


def scfdma_modulate(grid: ResourceGrid | np.ndarray, pool: ResourcePool) -> np.ndarray:
    """Per-symbol orthonormal IFFT with normal cyclic prefix; returns complex samples."""
    cells = grid.cells if isinstance(grid, ResourceGrid) else np.asarray(grid)
    freq = np.zeros((pool.symbols_per_subframe, pool.fft_size), dtype=np.complex128)
    freq[:, _bins(pool)] = cells.T
    time = np.fft.ifft(freq, axis=1, norm="ortho")
    out = np.empty(pool.samples_per_subframe, dtype=np.complex128)
    pos = 0
    for l, cp in enumerate(pool.cp_lengths):
        out[pos:pos + cp] = time[l, -cp:]
        out[pos + cp:pos + cp + pool.fft_size] = time[l]
        pos += cp + pool.fft_size
    return out


def scfdma_demodulate(samples, pool: ResourcePool, cfo_hz: float = 0.0) -> np.ndarray:
    """Inverse of :func:`scfdma_modulate`; returns cells (subcarriers, symbols).

    ``cfo_hz`` is a known carrier frequency offset removed before the FFT.
    """
    x = np.asarray(samples)
    if x.size != pool.samples_per_subframe:
        raise InvalidInputError(f"expected {pool.samples_per_subframe} samples, got {x.size}")
    if cfo_hz:
        t = np.arange(x.size) / pool.sample_rate_hz
        x = x * np.exp(-2j * np.pi * cfo_hz * t)
    starts = np.cumsum((0,) + tuple(cp + pool.fft_size for cp in pool.cp_lengths[:-1]))
    starts = starts + np.array(pool.cp_lengths)
    idx = starts[:, None] + np.arange(pool.fft_size)
    freq = np.fft.fft(x[idx], axis=1, norm="ortho")
    return freq[:, _bins(pool)].T
