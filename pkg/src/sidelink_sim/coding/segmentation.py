"""Transport-block to code-block segmentation (LTE rules, Z = 6144)."""
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ._qpp import TURBO_SIZES
from .bits import as_bits
from .crc import CrcKind, crc_attach, crc_check

MAX_BLOCK = 6144


@dataclass(frozen=True)
class SegmentPlan:
    n_blocks: int
    sizes: tuple[int, ...]  # K of each code block, in transmission order
    fillers: int  # filler bits prepended to the first block
    crc_per_block: bool

    @property
    def total_bits(self) -> int:
        return sum(self.sizes)


def plan_segmentation(B: int) -> SegmentPlan:
    if B <= 0:
        raise InvalidInputError("transport block must be non-empty")
    if B < TURBO_SIZES[0]:
        K = TURBO_SIZES[0]
        return SegmentPlan(1, (K,), K - B, False)
    if B <= MAX_BLOCK:
        K = next(k for k in TURBO_SIZES if k >= B)
        return SegmentPlan(1, (K,), K - B, False)
    L = 24
    C = -(-B // (MAX_BLOCK - L))
    Bp = B + C * L
    k_plus = next(k for k in TURBO_SIZES if C * k >= Bp)
    k_minus = max(k for k in TURBO_SIZES if k < k_plus)
    c_minus = (C * k_plus - Bp) // (k_plus - k_minus)
    c_plus = C - c_minus
    sizes = (k_minus,) * c_minus + (k_plus,) * c_plus
    return SegmentPlan(C, sizes, c_plus * k_plus + c_minus * k_minus - Bp, True)


def segment_code_blocks(tb) -> list[np.ndarray]:
    """Split a CRC24A-carrying transport block into turbo code blocks.

    Filler bits (zeros) pad the front of the first block; with more than one
    block each carries its own CRC24B.
    """
    bits = as_bits(tb)
    plan = plan_segmentation(bits.size)
    blocks = []
    pos = 0
    for r, K in enumerate(plan.sizes):
        fill = plan.fillers if r == 0 else 0
        take = K - fill - (24 if plan.crc_per_block else 0)
        payload = np.concatenate([np.zeros(fill, dtype=np.uint8), bits[pos:pos + take]])
        pos += take
        blocks.append(crc_attach(payload, CrcKind.CRC24B) if plan.crc_per_block else payload)
    return blocks


def desegment(blocks, tb_len: int) -> tuple[np.ndarray, bool]:
    """Inverse of :func:`segment_code_blocks`; also reports whether every CRC24B passed."""
    plan = plan_segmentation(tb_len)
    if len(blocks) != plan.n_blocks:
        raise InvalidInputError(f"expected {plan.n_blocks} code blocks, got {len(blocks)}")
    parts = []
    ok = True
    for r, blk in enumerate(blocks):
        blk = as_bits(blk)
        if plan.crc_per_block:
            ok &= crc_check(blk, CrcKind.CRC24B)
            blk = blk[:-24]
        parts.append(blk[plan.fillers:] if r == 0 else blk)
    return np.concatenate(parts), ok
