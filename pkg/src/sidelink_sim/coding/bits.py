import numpy as np

from ..errors import InvalidInputError


def as_bits(bits, *, allow_empty: bool = False) -> np.ndarray:
    """Return ``bits`` as a contiguous uint8 array, checking it is binary."""
    arr = np.ascontiguousarray(bits, dtype=np.uint8).ravel()
    if arr.size == 0 and not allow_empty:
        raise InvalidInputError("bit block must be non-empty")
    if arr.size and arr.max() > 1:
        raise InvalidInputError("bit block may only contain 0 and 1")
    return arr


def bits_to_int(bits) -> int:
    out = 0
    for b in np.asarray(bits, dtype=np.uint8):
        out = (out << 1) | int(b)
    return out


def int_to_bits(value: int, width: int) -> np.ndarray:
    if value < 0 or value >= (1 << width):
        raise InvalidInputError(f"value {value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)
