"""PSCCH/PSSCH transmit processing, grid mapping and the receive chain.

Receive functions take the demodulated cells of one or more antennas,
shape (n_subcarriers, 14) or (n_rx, n_subcarriers, 14), plus the known
per-cell noise variance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import mrc_combine
from ..coding import (
    CrcKind, channel_deinterleave, channel_interleave, conv_decode, conv_encode,
    crc_attach, crc_check, descramble_llr, desegment, plan_segmentation, rate_match,
    rate_recover, scramble, segment_code_blocks, turbo_decode, turbo_encode,
)
from ..errors import InvalidInputError
from .dmrs import CYCLIC_SHIFTS, generate_dmrs
from .estimation import equalize, estimate_channel
from .modulation import qpsk_map, qpsk_soft_demap, transform_deprecode, transform_precode
from .resources import (
    BITS_PER_SYMBOL, DMRS, DMRS_SYMBOLS, EMPTY, PSCCH, PSSCH, SCI_BITS,
    ResourceGrid, ResourcePool, SciMessage, prb_rows, transport_block_size,
)

PSCCH_SCRAMBLING_INIT = 510
TURBO_ITERATIONS = 8


def pssch_scrambling_init(sci: SciMessage) -> int:
    return (sci.group_destination_id << 14) + PSCCH_SCRAMBLING_INIT


def encode_pscch(sci: SciMessage, pool: ResourcePool) -> np.ndarray:
    """SCI -> CRC16 -> convolutional code -> rate match -> interleave -> scramble."""
    payload = crc_attach(sci.to_bits(), CrcKind.CRC16)
    coded = rate_match(conv_encode(payload), pool.pscch_capacity_bits(), code="conv")
    coded = channel_interleave(coded, len(pool.data_symbols))
    return scramble(coded, PSCCH_SCRAMBLING_INIT)


def _split_lengths(E: int, C: int) -> list[int]:
    g = E // BITS_PER_SYMBOL
    gamma = g % C
    return [BITS_PER_SYMBOL * (g // C if r < C - gamma else -(-g // C)) for r in range(C)]


def encode_pssch(tb, pool: ResourcePool, n_prb: int, c_init: int) -> np.ndarray:
    """Transport block -> CRC24A -> segmentation -> turbo -> rate match -> interleave -> scramble."""
    with_crc = crc_attach(tb, CrcKind.CRC24A)
    plan = plan_segmentation(with_crc.size)
    E = pool.pssch_capacity_bits(n_prb)
    parts = []
    for r, (block, e_r) in enumerate(zip(segment_code_blocks(with_crc), _split_lengths(E, plan.n_blocks))):
        fill = plan.fillers if r == 0 else 0
        parts.append(rate_match(turbo_encode(block), e_r, rv=0, code="turbo", fillers=fill))
    coded = channel_interleave(np.concatenate(parts), len(pool.data_symbols))
    return scramble(coded, c_init)


def _place(grid: ResourceGrid, pool: ResourcePool, prbs, coded_bits, dmrs_ref, tag: int) -> None:
    rows = prb_rows(pool, prbs)
    M = rows.stop - rows.start
    symbols = qpsk_map(coded_bits).reshape(len(pool.data_symbols), M)
    for j, l in enumerate(pool.data_symbols):
        grid.cells[rows, l] = transform_precode(symbols[j], M)
        grid.occupancy[rows, l] = tag
    for j, l in enumerate(DMRS_SYMBOLS):
        grid.cells[rows, l] = dmrs_ref[j]
        grid.occupancy[rows, l] = DMRS


def build_tx_grid(sci: SciMessage, data_tb, pool: ResourcePool, shift: int) -> ResourceGrid:
    """Map PSCCH and PSSCH (with their DMRS) onto one subframe.

    The PSSCH allocation comes from the SCI resource indication; ``data_tb``
    must have the transport-block size implied by that allocation.
    """
    prbs = sci.pssch_allocation(pool)
    tb = np.asarray(data_tb, dtype=np.uint8)
    if set(prbs) & set(pool.pscch_prbs):
        raise InvalidInputError("PSSCH allocation overlaps the PSCCH")
    if prbs.stop > pool.n_prb:
        raise InvalidInputError("PSSCH allocation overflows the pool")
    expected = transport_block_size(pool, len(prbs))
    if tb.size != expected:
        raise InvalidInputError(f"allocation of {len(prbs)} PRBs carries {expected}-bit blocks, got {tb.size}")
    grid = ResourceGrid.empty(pool)
    _place(grid, pool, pool.pscch_prbs, encode_pscch(sci, pool),
           generate_dmrs(pool, shift, "pscch"), PSCCH)
    _place(grid, pool, prbs, encode_pssch(tb, pool, len(prbs), pssch_scrambling_init(sci)),
           generate_dmrs(pool, shift, "pssch", n_prb=len(prbs)), PSSCH)
    if pool.guard_symbol:
        last = pool.symbols_per_subframe - 1
        grid.cells[:, last] = 0
        grid.occupancy[:, last] = EMPTY
    return grid


def _antenna_cells(rx) -> np.ndarray:
    cells = rx.cells if isinstance(rx, ResourceGrid) else np.asarray(rx)
    return cells[None] if cells.ndim == 2 else cells


def _equalised_llrs(cells, pool: ResourcePool, prbs, dmrs_ref, noise_variance: float) -> np.ndarray:
    """Estimate, equalise/combine, de-spread and soft-demap one allocation."""
    rows = prb_rows(pool, prbs)
    y = cells[:, rows, :]
    h = np.stack([estimate_channel(y[a], dmrs_ref) for a in range(y.shape[0])])
    if y.shape[0] == 1:
        eq, nv, _ = equalize(y[0], h[0], noise_variance)
    else:
        eq, nv, _ = mrc_combine(y, h, noise_variance)
    M = rows.stop - rows.start
    last = pool.symbols_per_subframe - 1
    llrs = []
    for l in pool.data_symbols:
        if pool.guard_symbol and l == last:
            llrs.append(np.zeros(BITS_PER_SYMBOL * M))
            continue
        # After de-spreading, noise is shared across the block.
        sym_nv = float(np.mean(np.minimum(nv[:, l], 1e12)))
        llrs.append(qpsk_soft_demap(transform_deprecode(eq[:, l], M), sym_nv))
    return np.concatenate(llrs)


@dataclass(frozen=True)
class PscchDetection:
    sci: SciMessage
    cyclic_shift: int


def decode_pscch(rx, pool: ResourcePool, noise_variance: float, shift: int) -> SciMessage | None:
    """Single-hypothesis PSCCH decode; None when the CRC fails."""
    cells = _antenna_cells(rx)
    llr = _equalised_llrs(cells, pool, pool.pscch_prbs, generate_dmrs(pool, shift, "pscch"), noise_variance)
    llr = descramble_llr(llr, PSCCH_SCRAMBLING_INIT)
    llr = channel_deinterleave(llr, len(pool.data_symbols))
    D = SCI_BITS + CrcKind.CRC16.length
    soft = rate_recover(llr, D, code="conv")
    bits = conv_decode(soft, D)
    if not crc_check(bits, CrcKind.CRC16):
        return None
    sci = SciMessage.from_bits(bits[:SCI_BITS])
    try:
        prbs = sci.pssch_allocation(pool)
    except InvalidInputError:
        return None
    if set(prbs) & set(pool.pscch_prbs):
        return None
    return sci


def dmrs_match(rx, pool: ResourcePool, shift: int) -> float:
    """Power of the PSCCH channel estimate under one cyclic-shift hypothesis.

    A wrong shift leaves a residual phase ramp that the frequency smoothing
    largely cancels, so the true shift gives the largest value.
    """
    cells = _antenna_cells(rx)
    rows = prb_rows(pool, pool.pscch_prbs)
    ref = generate_dmrs(pool, shift, "pscch")
    return float(sum(np.sum(np.abs(estimate_channel(cells[a, rows], ref)[:, list(DMRS_SYMBOLS)]) ** 2)
                     for a in range(cells.shape[0])))


def blind_decode_pscch(rx, pool: ResourcePool, noise_variance: float) -> PscchDetection | None:
    """Try every DMRS cyclic shift; first CRC-passing SCI wins, None if all fail.

    Hypotheses are tried in order of decreasing :func:`dmrs_match`, so a
    structured decode under a wrong shift cannot pre-empt the right one.
    """
    metric = {s: dmrs_match(rx, pool, s) for s in CYCLIC_SHIFTS}
    for shift in sorted(CYCLIC_SHIFTS, key=lambda s: (-metric[s], s)):
        sci = decode_pscch(rx, pool, noise_variance, shift)
        if sci is not None:
            return PscchDetection(sci, shift)
    return None


def decode_pssch(rx, sci: SciMessage, pool: ResourcePool, noise_variance: float, shift: int,
                 max_iter: int = TURBO_ITERATIONS, crc_mask: int = 0) -> tuple[np.ndarray, bool]:
    """Recover the transport block the SCI describes; returns ``(bits, crc_passed)``."""
    cells = _antenna_cells(rx)
    prbs = sci.pssch_allocation(pool)
    if prbs.stop > pool.n_prb or set(prbs) & set(pool.pscch_prbs):
        raise InvalidInputError("SCI allocation inconsistent with the pool")
    n_prb = len(prbs)
    tb_size = transport_block_size(pool, n_prb)
    llr = _equalised_llrs(cells, pool, prbs, generate_dmrs(pool, shift, "pssch", n_prb=n_prb), noise_variance)
    llr = descramble_llr(llr, pssch_scrambling_init(sci))
    llr = channel_deinterleave(llr, len(pool.data_symbols))
    B = tb_size + CrcKind.CRC24A.length
    plan = plan_segmentation(B)
    block_crc = CrcKind.CRC24B if plan.crc_per_block else CrcKind.CRC24A
    blocks, pos = [], 0
    for r, (K, e_r) in enumerate(zip(plan.sizes, _split_lengths(llr.size, plan.n_blocks))):
        fill = plan.fillers if r == 0 else 0
        soft = rate_recover(llr[pos:pos + e_r], K + 4, rv=0, code="turbo", fillers=fill)
        pos += e_r
        bits, _, _ = turbo_decode(soft.ravel(), K, max_iter, crc=None if fill else block_crc)
        blocks.append(bits)
    with_crc, _ = desegment(blocks, B)
    ok = crc_check(with_crc, CrcKind.CRC24A, mask=crc_mask)
    return with_crc[:tb_size], ok
