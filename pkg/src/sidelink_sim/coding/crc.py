"""LTE cyclic redundancy checks (zero-initialised, no final inversion)."""
from enum import Enum

import numba
import numpy as np

from ..errors import InvalidInputError
from .bits import as_bits


class CrcKind(Enum):
    CRC16 = (16, 0x1021)
    CRC24A = (24, 0x864CFB)
    CRC24B = (24, 0x800063)

    @property
    def length(self) -> int:
        return self.value[0]

    @property
    def poly(self) -> int:
        """Generator polynomial without the leading x^L term."""
        return self.value[1]


@numba.njit(cache=True)
def _crc_register(bits, n, length, poly):
    # Long division with the register holding the running remainder.
    top = 1 << (length - 1)
    mask = (1 << length) - 1
    reg = 0
    for i in range(n):
        fb = ((reg & top) != 0) ^ (bits[i] != 0)
        reg = (reg << 1) & mask
        if fb:
            reg ^= poly
    return reg


def crc_parity(payload, kind: CrcKind) -> np.ndarray:
    bits = as_bits(payload)
    reg = _crc_register(bits, bits.size, kind.length, kind.poly)
    return np.array([(reg >> (kind.length - 1 - i)) & 1 for i in range(kind.length)], dtype=np.uint8)


def crc_attach(payload, kind: CrcKind, mask: int = 0) -> np.ndarray:
    """Append the CRC parity of ``payload``, optionally XOR-masked."""
    bits = as_bits(payload)
    parity = crc_parity(bits, kind)
    if mask:
        parity ^= _mask_bits(mask, kind.length)
    return np.concatenate([bits, parity])


def crc_check(block, kind: CrcKind, mask: int = 0) -> bool:
    bits = as_bits(block)
    if bits.size <= kind.length:
        raise InvalidInputError(f"block of {bits.size} bits is not longer than {kind.name}")
    if mask:
        bits = bits.copy()
        bits[-kind.length:] ^= _mask_bits(mask, kind.length)
    return _crc_register(bits, bits.size, kind.length, kind.poly) == 0


def _mask_bits(mask: int, length: int) -> np.ndarray:
    return np.array([(mask >> (length - 1 - i)) & 1 for i in range(length)], dtype=np.uint8)
