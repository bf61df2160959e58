"""Sidelink resource pool, SCI format-1 message, and the subframe resource grid."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..coding._qpp import TURBO_SIZES
from ..coding.bits import bits_to_int, int_to_bits
from ..errors import InvalidInputError

DMRS_SYMBOLS = (2, 5, 8, 11)
EMPTY, PSCCH, PSSCH, DMRS = 0, 1, 2, 3
BITS_PER_SYMBOL = 2  # QPSK throughout


@dataclass(frozen=True)
class ResourcePool:
    bandwidth_hz: float = 10e6
    subcarrier_spacing_hz: float = 15e3
    n_prb: int = 48
    prb_size_subcarriers: int = 12
    sci_prbs: int = 2
    subchannel_size_prbs: int = 46
    subframe_duration_s: float = 1e-3
    symbols_per_subframe: int = 14
    adjacency: str = "adjacent"
    fft_size: int = 1024
    guard_symbol: bool = True

    def __post_init__(self):
        if self.n_prb * self.prb_size_subcarriers > self.fft_size:
            raise InvalidInputError("occupied subcarriers exceed the FFT size")
        if self.sci_prbs != 2:
            raise InvalidInputError("PSCCH always occupies 2 PRBs")
        if self.symbols_per_subframe != 14:
            raise InvalidInputError("only normal cyclic prefix (14 symbols) is supported")
        if self.subchannel_size_prbs <= 0 or self.usable_pssch_prbs % self.subchannel_size_prbs:
            raise InvalidInputError(
                f"subchannel size {self.subchannel_size_prbs} must divide {self.usable_pssch_prbs} PSSCH PRBs")
        if self.adjacency not in ("adjacent", "non_adjacent"):
            raise InvalidInputError(f"unknown adjacency {self.adjacency!r}")

    @property
    def n_subcarriers(self) -> int:
        return self.n_prb * self.prb_size_subcarriers

    @property
    def usable_pssch_prbs(self) -> int:
        return self.n_prb - self.sci_prbs

    @property
    def n_subchannels(self) -> int:
        return self.usable_pssch_prbs // self.subchannel_size_prbs

    @property
    def sample_rate_hz(self) -> float:
        return self.fft_size * self.subcarrier_spacing_hz

    @property
    def cp_lengths(self) -> tuple[int, ...]:
        # Normal CP, scaled from the 2048-point reference numerology.
        first, other = 160 * self.fft_size // 2048, 144 * self.fft_size // 2048
        slot = (first,) + (other,) * 6
        return slot + slot

    @property
    def samples_per_subframe(self) -> int:
        return self.symbols_per_subframe * self.fft_size + sum(self.cp_lengths)

    @property
    def data_symbols(self) -> tuple[int, ...]:
        """Non-DMRS symbols carrying coded data (the guard symbol is punctured later)."""
        return tuple(l for l in range(self.symbols_per_subframe) if l not in DMRS_SYMBOLS)

    @property
    def pscch_prbs(self) -> range:
        if self.adjacency == "adjacent":
            return range(0, self.sci_prbs)
        return range(self.n_prb - self.sci_prbs, self.n_prb)

    @property
    def pssch_first_prb(self) -> int:
        return self.sci_prbs if self.adjacency == "adjacent" else 0

    def subchannel_prbs(self, first_subchannel: int, n_subchannels: int = 1) -> range:
        if first_subchannel < 0 or n_subchannels < 1 or first_subchannel + n_subchannels > self.n_subchannels:
            raise InvalidInputError("subchannel allocation outside the pool")
        start = self.pssch_first_prb + first_subchannel * self.subchannel_size_prbs
        return range(start, start + n_subchannels * self.subchannel_size_prbs)

    def pssch_capacity_bits(self, n_prb: int) -> int:
        return n_prb * self.prb_size_subcarriers * len(self.data_symbols) * BITS_PER_SYMBOL

    def pscch_capacity_bits(self) -> int:
        return self.pssch_capacity_bits(self.sci_prbs)

    def qpsk_third_spectral_efficiency(self, code_rate: float = 1 / 3) -> float:
        """Bits/s/Hz of QPSK at ``code_rate``, discounted by the guard symbol and PSCCH PRBs."""
        used = self.symbols_per_subframe - (1 if self.guard_symbol else 0)
        return (BITS_PER_SYMBOL * code_rate * used / self.symbols_per_subframe
                * self.usable_pssch_prbs / self.n_prb)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def transport_block_size(pool: ResourcePool, n_prb: int) -> int:
    """Largest transport block whose CRC-attached length is a turbo block size <= capacity/3."""
    limit = pool.pssch_capacity_bits(n_prb) // 3
    fits = [K for K in TURBO_SIZES if K <= limit]
    if not fits:
        raise InvalidInputError(f"{n_prb} PRBs cannot carry the smallest transport block")
    return fits[-1] - 24


def riv_encode(start: int, length: int, n_prb: int) -> int:
    if length < 1 or start < 0 or start + length > n_prb:
        raise InvalidInputError("PRB allocation outside the band")
    if length - 1 <= n_prb // 2:
        return n_prb * (length - 1) + start
    return n_prb * (n_prb - length + 1) + (n_prb - 1 - start)


def riv_decode(riv: int, n_prb: int) -> tuple[int, int]:
    length_m1, start = divmod(riv, n_prb)
    if length_m1 + start < n_prb:
        return start, length_m1 + 1
    length = n_prb - length_m1 + 1
    start = n_prb - 1 - start
    if length < 1 or start < 0 or start + length > n_prb:
        raise InvalidInputError(f"RIV {riv} does not describe a valid allocation")
    return start, length


# (name, width) in transmission order; two reserved zero bits pad to 32.
SCI_LAYOUT = (
    ("mcs", 5),
    ("resource_indication", 11),
    ("time_resource_pattern", 4),
    ("group_destination_id", 8),
    ("frequency_hopping_flag", 1),
    ("retransmission_opportunity", 1),
)
SCI_BITS = 32


@dataclass(frozen=True)
class SciMessage:
    mcs: int = 0
    resource_indication: int = 0
    time_resource_pattern: int = 0
    group_destination_id: int = 0
    frequency_hopping_flag: int = 0
    retransmission_opportunity: int = 0

    def to_bits(self) -> np.ndarray:
        parts = [int_to_bits(getattr(self, name), width) for name, width in SCI_LAYOUT]
        used = sum(w for _, w in SCI_LAYOUT)
        parts.append(np.zeros(SCI_BITS - used, dtype=np.uint8))
        return np.concatenate(parts)

    @classmethod
    def from_bits(cls, bits) -> "SciMessage":
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.size != SCI_BITS:
            raise InvalidInputError(f"SCI format 1 is {SCI_BITS} bits, got {bits.size}")
        values, pos = {}, 0
        for name, width in SCI_LAYOUT:
            values[name] = bits_to_int(bits[pos:pos + width])
            pos += width
        return cls(**values)

    def pssch_allocation(self, pool: ResourcePool) -> range:
        start, length = riv_decode(self.resource_indication, pool.n_prb)
        return range(start, start + length)

    @classmethod
    def for_allocation(cls, pool: ResourcePool, prbs: range, **fields) -> "SciMessage":
        return cls(resource_indication=riv_encode(prbs.start, len(prbs), pool.n_prb), **fields)


@dataclass
class ResourceGrid:
    """One subframe of complex cells, shape (subcarriers, symbols), with a tag per cell."""

    cells: np.ndarray
    occupancy: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.occupancy is None:
            self.occupancy = np.zeros(self.cells.shape, dtype=np.int8)

    @classmethod
    def empty(cls, pool: ResourcePool) -> "ResourceGrid":
        shape = (pool.n_subcarriers, pool.symbols_per_subframe)
        return cls(np.zeros(shape, dtype=np.complex128), np.zeros(shape, dtype=np.int8))

    def census(self) -> dict[str, int]:
        return {name: int(np.count_nonzero(self.occupancy == tag))
                for name, tag in (("empty", EMPTY), ("pscch", PSCCH), ("pssch", PSSCH), ("dmrs", DMRS))}

    def occupied_power(self) -> float:
        occ = self.occupancy != EMPTY
        return float(np.mean(np.abs(self.cells[occ]) ** 2))


def prb_rows(pool: ResourcePool, prbs: range) -> slice:
    return slice(prbs.start * pool.prb_size_subcarriers, prbs.stop * pool.prb_size_subcarriers)


def dump_grid(grid: ResourceGrid, path, seed: int | None = None, **extra) -> None:
    """Write ``path``.bin (little-endian complex64, subcarrier-major) and ``path``.json."""
    path = Path(path)
    grid.cells.astype("<c8").tofile(path.with_suffix(".bin"))
    meta = {"kind": "resource_grid", "dtype": "complex64-le", "shape": list(grid.cells.shape),
            "order": "C", "occupancy": grid.occupancy.tolist(), "seed": seed, **extra}
    path.with_suffix(".json").write_text(json.dumps(meta))


def load_grid(path) -> ResourceGrid:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    cells = np.fromfile(path.with_suffix(".bin"), dtype="<c8").reshape(meta["shape"])
    return ResourceGrid(cells.astype(np.complex128), np.array(meta["occupancy"], dtype=np.int8))
