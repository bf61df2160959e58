"""Symbol-level sidelink processing: resource pool, grids, SC-FDMA, DMRS,
channel estimation and the PSCCH/PSSCH transmit and receive chains."""
from .chain import (
    PscchDetection, blind_decode_pscch, build_tx_grid, decode_pscch, decode_pssch,
    encode_pscch, encode_pssch,
)
from .dmrs import CYCLIC_SHIFTS, generate_dmrs
from .estimation import equalize, estimate_channel
from .modulation import (
    qpsk_map, qpsk_soft_demap, scfdma_demodulate, scfdma_modulate,
    transform_deprecode, transform_precode,
)
from .resources import (
    DMRS_SYMBOLS, ResourceGrid, ResourcePool, SciMessage, dump_grid, load_grid,
    riv_decode, riv_encode, transport_block_size,
)

__all__ = [
    "CYCLIC_SHIFTS", "DMRS_SYMBOLS", "PscchDetection", "ResourceGrid", "ResourcePool",
    "SciMessage", "blind_decode_pscch", "build_tx_grid", "decode_pscch", "decode_pssch",
    "dump_grid", "encode_pscch", "encode_pssch", "equalize", "estimate_channel",
    "generate_dmrs", "load_grid", "qpsk_map", "qpsk_soft_demap", "riv_decode", "riv_encode",
    "scfdma_demodulate", "scfdma_modulate", "transform_deprecode", "transform_precode",
    "transport_block_size",
]
