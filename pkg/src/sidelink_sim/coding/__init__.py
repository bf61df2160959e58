"""Bit-level channel coding for the sidelink control and shared channels."""
from .bits import as_bits, bits_to_int, int_to_bits
from .convolutional import conv_decode, conv_encode
from .crc import CrcKind, crc_attach, crc_check
from .ratematch import channel_deinterleave, channel_interleave, rate_match, rate_recover
from .scrambling import descramble_llr, gold_sequence, scramble
from .segmentation import desegment, plan_segmentation, segment_code_blocks
from .turbo import qpp_interleaver, turbo_decode, turbo_encode

__all__ = [
    "CrcKind", "as_bits", "bits_to_int", "channel_deinterleave", "channel_interleave",
    "conv_decode", "conv_encode", "crc_attach", "crc_check", "desegment", "descramble_llr",
    "gold_sequence", "int_to_bits", "plan_segmentation", "qpp_interleaver", "rate_match",
    "rate_recover", "scramble", "segment_code_blocks", "turbo_decode", "turbo_encode",
]
