"""EVA tapped-delay-line fading with sum-of-sinusoids Doppler, AWGN, and
maximal-ratio combining for the 1x2 receive configuration."""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InvalidInputError

SPEED_OF_LIGHT = 299_792_458.0
EVA_DELAYS_NS = (0, 30, 150, 310, 370, 710, 1090, 1730, 2510)
EVA_POWERS_DB = (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)
MAX_SNR_DB = 300.0


@dataclass(frozen=True)
class EvaProfile:
    tap_delays_ns: tuple[float, ...] = EVA_DELAYS_NS
    tap_powers_db: tuple[float, ...] = EVA_POWERS_DB

    @property
    def linear_powers(self) -> np.ndarray:
        p = 10 ** (np.asarray(self.tap_powers_db) / 10)
        return p / p.sum()

    def delays_samples(self, sample_rate_hz: float) -> np.ndarray:
        """Tap delays rounded to the sample grid."""
        return np.rint(np.asarray(self.tap_delays_ns) * 1e-9 * sample_rate_hz).astype(np.int64)


def doppler_frequency(velocity_kmh: float, carrier_hz: float) -> float:
    if velocity_kmh < 0:
        raise InvalidInputError("velocity must be non-negative")
    return velocity_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT


@numba.njit(cache=True)
def _sos_gains(freqs, phases, amp, n_updates, dt, t0):
    # freqs/phases: (M,); complex gain sampled every dt seconds starting at t0.
    M = freqs.size
    g = np.zeros(n_updates, dtype=np.complex128)
    for m in range(M):
        w = 2.0 * np.pi * freqs[m]
        ph = np.exp(1j * (w * t0 + phases[m]))
        step = np.exp(1j * w * dt)
        for n in range(n_updates):
            g[n] += ph
            ph *= step
    for n in range(n_updates):
        g[n] *= amp
    return g


@numba.njit(cache=True)
def _tdl(x, gains, delays, hold):
    n = x.size
    y = np.zeros(n, dtype=np.complex128)
    for t in range(delays.size):
        d = delays[t]
        for i in range(d, n):
            y[i] += gains[t, i // hold] * x[i - d]
    return y


@dataclass
class FadingRealization:
    """Per-tap, per-antenna sum-of-sinusoids gain processes.

    Each call to :meth:`apply` continues from where the previous one stopped,
    so one realization is owned by one caller.
    """

    velocity_kmh: float
    carrier_hz: float = 5.9e9
    sample_rate_hz: float = 15.36e6
    seed: int = 0
    n_rx: int = 2
    n_sinusoids: int = 32
    profile: EvaProfile = field(default_factory=EvaProfile)

    def __post_init__(self):
        if self.n_sinusoids < 32:
            raise InvalidInputError("at least 32 sinusoids per tap are required")
        self.doppler_hz = doppler_frequency(self.velocity_kmh, self.carrier_hz)
        rng = np.random.default_rng(self.seed)
        n_taps = len(self.profile.tap_delays_ns)
        M = self.n_sinusoids
        shape = (self.n_rx, n_taps)
        theta = rng.uniform(-np.pi, np.pi, size=shape + (1,))
        arrival = (2 * np.pi * np.arange(1, M + 1) - np.pi + theta) / M
        self._freqs = self.doppler_hz * np.cos(arrival)
        self._phases = rng.uniform(-np.pi, np.pi, size=shape + (M,))
        self._amps = np.sqrt(self.profile.linear_powers / M)
        self._delays = self.profile.delays_samples(self.sample_rate_hz)
        self.time_s = 0.0

    @property
    def update_interval(self) -> int:
        """Samples between gain updates."""
        return 1 if self.doppler_hz > 1e3 else 16

    def tap_gains(self, n_samples: int, antenna: int = 0, hold: int = 1, advance: bool = False) -> np.ndarray:
        """Gains (n_taps, ceil(n_samples/hold)) for one antenna from the current time."""
        n_upd = -(-n_samples // hold)
        dt = hold / self.sample_rate_hz
        g = np.stack([
            _sos_gains(self._freqs[antenna, t], self._phases[antenna, t], self._amps[t], n_upd, dt, self.time_s)
            for t in range(self._delays.size)
        ])
        if advance:
            self.time_s += n_samples / self.sample_rate_hz
        return g

    def apply(self, samples) -> np.ndarray:
        """Filter ``samples`` through every antenna's channel; returns (n_rx, n)."""
        x = np.asarray(samples, dtype=np.complex128)
        hold = self.update_interval
        out = np.empty((self.n_rx, x.size), dtype=np.complex128)
        for a in range(self.n_rx):
            g = self.tap_gains(x.size, a, hold)
            out[a] = _tdl(x, g, self._delays, hold)
        self.time_s += x.size / self.sample_rate_hz
        return out


def apply_fading(samples, realization: FadingRealization) -> np.ndarray:
    return realization.apply(samples)


def add_awgn(samples, snr_db: float, signal_power_ref: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise of variance ``signal_power_ref / 10**(snr_db/10)``."""
    if signal_power_ref <= 0:
        raise InvalidInputError("signal power reference must be positive")
    x = np.asarray(samples)
    nv = noise_variance(snr_db, signal_power_ref)
    noise = rng.standard_normal(x.shape + (2,)) @ np.array([1.0, 1j]) * np.sqrt(nv / 2)
    return x + noise


def noise_variance(snr_db: float, signal_power_ref: float = 1.0) -> float:
    return signal_power_ref / 10 ** (min(snr_db, MAX_SNR_DB) / 10)


def mrc_combine(rx_cells, channel_estimates, noise_variance: float | None = None):
    """Maximal-ratio combine antenna branches: sum(conj(h) y) / sum(|h|^2).

    Returns ``(combined, noise_variance_per_cell, low_confidence)``; the
    per-cell noise variance is ``noise_variance / sum(|h|^2)``.
    """
    y = np.asarray(rx_cells)
    h = np.asarray(channel_estimates)
    if y.shape != h.shape:
        raise InvalidInputError("received grids and channel estimates must have matching shapes")
    gain = np.sum(np.abs(h) ** 2, axis=0)
    low = gain < 1e-12
    safe = np.where(low, 1.0, gain)
    combined = np.where(low, 0.0, np.sum(np.conj(h) * y, axis=0) / safe)
    nv = None
    if noise_variance is not None:
        nv = np.where(low, np.inf, noise_variance / safe)
    return combined, nv, low
