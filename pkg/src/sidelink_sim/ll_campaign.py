"""Monte-Carlo BLER measurement over SNR x velocity for the full sidelink chain."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import norm

from .channel import FadingRealization, add_awgn, noise_variance
from .errors import InvalidInputError
from .l2s import L2sTable
from .phy import (
    CYCLIC_SHIFTS, ResourcePool, SciMessage, blind_decode_pscch, build_tx_grid, decode_pssch,
    scfdma_demodulate, scfdma_modulate, transport_block_size,
)
from .phy.chain import TURBO_ITERATIONS
from .provenance import stamp

DEFAULT_VELOCITIES = (100.0, 260.0, 350.0, 400.0, 450.0, 500.0)
SNR_DEFINITION = ("mean transmitted waveform power over per-sample noise variance, per receive "
                  "antenna, unit-energy channel")
CSV_HEADER = "snr_db,velocity_kmh,pscch_bler,pssch_bler,blocks,errors,ci95"


@dataclass(frozen=True)
class CampaignConfig:
    """Link-level sweep settings.

    ``min_errors=None`` disables early stopping so every point runs exactly
    ``blocks_per_point`` subframes.  With ``count_control_errors`` off the
    data channel is decoded with the true SCI, giving a data-only BLER.
    """

    snr_grid_db: tuple[float, ...] = tuple(float(s) for s in range(-10, 21))
    velocities_kmh: tuple[float, ...] = DEFAULT_VELOCITIES
    blocks_per_point: int = 2000
    min_errors: int | None = 50
    seed: int = 0
    pool: ResourcePool = field(default_factory=ResourcePool)
    carrier_hz: float = 5.9e9
    n_rx: int = 2
    n_prb: int | None = None
    turbo_iterations: int = TURBO_ITERATIONS
    count_control_errors: bool = True
    cfo_hz: float = 0.0

    def __post_init__(self):
        snr = tuple(float(s) for s in self.snr_grid_db)
        vel = tuple(sorted({float(v) for v in self.velocities_kmh}))
        object.__setattr__(self, "snr_grid_db", snr)
        object.__setattr__(self, "velocities_kmh", vel)
        if isinstance(self.pool, dict):
            object.__setattr__(self, "pool", ResourcePool(**self.pool))
        if not snr or any(b <= a for a, b in zip(snr, snr[1:])):
            raise InvalidInputError("SNR grid must be non-empty and strictly increasing")
        if not vel or vel[0] < 0:
            raise InvalidInputError("velocities must be non-empty and non-negative")
        if self.blocks_per_point < 100:
            raise InvalidInputError("blocks_per_point must be at least 100")
        if self.min_errors is not None and self.min_errors < 1:
            raise InvalidInputError("min_errors must be positive (or None to disable early stopping)")
        if self.n_rx not in (1, 2):
            raise InvalidInputError("one or two receive antennas are supported")
        if self.turbo_iterations < 1:
            raise InvalidInputError("turbo_iterations must be positive")
        n_prb = self.allocation_prbs()
        if n_prb < 1 or self.pool.pssch_first_prb + n_prb > self.pool.n_prb:
            raise InvalidInputError(f"PSSCH allocation of {n_prb} PRBs does not fit the pool")

    def allocation_prbs(self) -> int:
        return self.n_prb if self.n_prb is not None else self.pool.usable_pssch_prbs

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["snr_grid_db"] = list(self.snr_grid_db)
        d["velocities_kmh"] = list(self.velocities_kmh)
        d["pool"] = self.pool.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown link-level settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class BlerPoint:
    snr_db: float
    velocity_kmh: float
    pscch_bler: float
    pssch_bler: float
    blocks: int
    errors: int
    ci95_halfwidth: float

    def csv_row(self) -> str:
        return (f"{self.snr_db:g},{self.velocity_kmh:g},{self.pscch_bler:.9g},{self.pssch_bler:.9g},"
                f"{self.blocks},{self.errors},{self.ci95_halfwidth:.9g}")


def wilson_interval(errors: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise InvalidInputError("need at least one trial")
    z = float(norm.ppf(0.5 + confidence / 2))
    p = errors / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def wilson_halfwidth(errors: int, n: int, confidence: float = 0.95) -> float:
    lo, hi = wilson_interval(errors, n, confidence)
    return (hi - lo) / 2


def block_rng(seed: int, snr_index: int, velocity_index: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, snr_index, velocity_index, block]))


def simulate_block(config: CampaignConfig, snr_db: float, velocity_kmh: float,
                   rng: np.random.Generator) -> tuple[bool, bool]:
    """One subframe through transmitter, fading, noise and receiver.

    Returns ``(control_failed, data_failed)``; under inclusive counting a
    control failure implies a data failure.
    """
    pool = config.pool
    n_prb = config.allocation_prbs()
    prbs = range(pool.pssch_first_prb, pool.pssch_first_prb + n_prb)
    sci = SciMessage.for_allocation(pool, prbs)
    tb = rng.integers(0, 2, transport_block_size(pool, n_prb), dtype=np.uint8)
    shift = int(rng.choice(CYCLIC_SHIFTS))
    fading_seed = int(rng.integers(2**63))

    tx = scfdma_modulate(build_tx_grid(sci, tb, pool, shift), pool)
    power = float(np.mean(np.abs(tx) ** 2))
    fading = FadingRealization(velocity_kmh, config.carrier_hz, pool.sample_rate_hz,
                               seed=fading_seed, n_rx=config.n_rx)
    rx = add_awgn(fading.apply(tx), snr_db, power, rng)
    cells = np.stack([scfdma_demodulate(rx[a], pool, config.cfo_hz) for a in range(config.n_rx)])
    nv = noise_variance(snr_db, power)

    detection = blind_decode_pscch(cells, pool, nv)
    control_failed = detection is None or detection.sci != sci
    if config.count_control_errors:
        if control_failed:
            return True, True
        rx_sci, rx_shift = detection.sci, detection.cyclic_shift
    else:
        rx_sci, rx_shift = sci, shift
    bits, ok = decode_pssch(cells, rx_sci, pool, nv, rx_shift, config.turbo_iterations)
    return control_failed, not (ok and np.array_equal(bits, tb))


def run_point(config: CampaignConfig, snr_db: float, velocity_kmh: float,
              snr_index: int | None = None, velocity_index: int | None = None) -> BlerPoint:
    """Run subframes until ``blocks_per_point`` or, once a quarter of them are
    done, until ``min_errors`` data errors have accumulated."""
    si = snr_index if snr_index is not None else _index(config.snr_grid_db, snr_db)
    vi = velocity_index if velocity_index is not None else _index(config.velocities_kmh, velocity_kmh)
    control_errors = errors = blocks = 0
    min_blocks = math.ceil(config.blocks_per_point / 4)
    while blocks < config.blocks_per_point:
        c_fail, d_fail = simulate_block(config, snr_db, velocity_kmh, block_rng(config.seed, si, vi, blocks))
        blocks += 1
        control_errors += c_fail
        errors += d_fail
        if config.min_errors is not None and errors >= config.min_errors and blocks >= min_blocks:
            break
    return BlerPoint(float(snr_db), float(velocity_kmh), control_errors / blocks, errors / blocks,
                     blocks, errors, wilson_halfwidth(errors, blocks))


def _index(grid, value) -> int:
    # Points off the grid get an index past its end so their streams stay distinct.
    for i, g in enumerate(grid):
        if math.isclose(g, value):
            return i
    return len(grid) + int(round(abs(value) * 1000))


def _run_task(args):
    config, si, vi = args
    return run_point(config, config.snr_grid_db[si], config.velocities_kmh[vi], si, vi)


class SweepInterrupted(Exception):
    """Raised when a sweep stops early; ``points`` holds what finished."""

    def __init__(self, points: list[BlerPoint]):
        super().__init__(f"sweep interrupted after {len(points)} points")
        self.points = points


def run_points(config: CampaignConfig, workers: int | None = None, on_point=None) -> list[BlerPoint]:
    """Every (snr, velocity) point, ordered velocity-major then SNR."""
    tasks = [(config, si, vi) for vi in range(len(config.velocities_kmh))
             for si in range(len(config.snr_grid_db))]
    workers = workers or os.cpu_count() or 1
    done: list[BlerPoint] = []
    try:
        if workers == 1:
            for t in tasks:
                done.append(_run_task(t))
                if on_point:
                    on_point(done[-1])
        else:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                for p in ex.map(_run_task, tasks):
                    done.append(p)
                    if on_point:
                        on_point(p)
    except KeyboardInterrupt:
        raise SweepInterrupted(done) from None
    return done


def table_from_points(config: CampaignConfig, points: list[BlerPoint], seed: int | None = None) -> L2sTable:
    """Assemble the table, storing raw rates and the isotonic (non-increasing) fit."""
    n_s, n_v = len(config.snr_grid_db), len(config.velocities_kmh)
    raw = np.zeros((n_v, n_s))
    weight = np.zeros((n_v, n_s))
    for p in points:
        vi = config.velocities_kmh.index(p.velocity_kmh)
        si = config.snr_grid_db.index(p.snr_db)
        raw[vi, si] = p.pssch_bler
        weight[vi, si] = p.blocks
    smooth = np.stack([
        isotonic_regression(raw[i], weights=weight[i], increasing=False).x for i in range(n_v)
    ])
    smooth = np.clip(smooth, 0.0, 1.0)
    cfg = config.to_dict()
    meta = stamp(cfg, config.seed if seed is None else seed,
                 bler_definition=("data block counted as error when the control or data CRC fails"
                                  if config.count_control_errors else
                                  "data CRC failure with genie control information"),
                 snr_definition=SNR_DEFINITION,
                 pssch_tb_bits=transport_block_size(config.pool, config.allocation_prbs()),
                 rate_matching_bits=config.pool.pssch_capacity_bits(config.allocation_prbs()),
                 raw_bler=[[float(f"{x:.9g}") for x in row] for row in raw],
                 blocks=weight.astype(int).tolist(),
                 config=cfg)
    return L2sTable(config.snr_grid_db, config.velocities_kmh, smooth, meta)


def run_sweep(config: CampaignConfig, workers: int | None = None, on_point=None) -> L2sTable:
    return table_from_points(config, run_points(config, workers, on_point))


def points_csv(points: list[BlerPoint]) -> str:
    return "\n".join([CSV_HEADER] + [p.csv_row() for p in points]) + "\n"


def read_points_csv(text: str) -> list[BlerPoint]:
    """Inverse of :func:`points_csv`; ``#`` comment lines are skipped."""
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0] != CSV_HEADER:
        raise InvalidInputError(f"expected header {CSV_HEADER!r}")
    out = []
    for ln in rows[1:]:
        s, v, pc, pd, n, e, ci = ln.split(",")
        out.append(BlerPoint(float(s), float(v), float(pc), float(pd), int(n), int(e), float(ci)))
    return out
