"""Highway world model: vehicle and base-station placement, WINNER II
pathloss, log-normal shadowing and per-link received power."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidInputError

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0
PATHLOSS_MODELS = ("B1", "D1")
DROP_MODES = ("deterministic", "random")
JITTER_FRACTION = 0.10


@dataclass(frozen=True)
class ScenarioConfig:
    """Highway layout, radio parameters and the PRR rule settings.

    ``height_offset_m`` is subtracted from both antenna heights when forming
    the breakpoint distance of the two-slope pathloss.
    """

    highway_length_m: float = 3000.0
    lanes: int = 6
    lane_width_m: float = 4.0
    isd_m: float = 1732.0
    bs_height_m: float = 35.0
    bs_offset_m: float = 10.0
    ue_height_m: float = 1.5
    carrier_hz: float = 5.9e9
    bandwidth_hz: float = 10e6
    tx_power_dbm: float = 24.0
    tx_ant_gain_db: float = 0.0
    rx_ant_gain_db: float = 3.0
    noise_figure_db: float = 9.0
    comm_range_m: float = 400.0
    ivd_m: float = 100.0
    velocity_kmh: float = 100.0
    packet_bytes: int = 256
    tx_period_hz: float = 10.0
    prr_threshold_bler: float = 0.01
    shadow_sigma_db: float = 3.0
    pathloss_model: str = "B1"
    height_offset_m: float = 0.0
    drop_mode: str = "deterministic"
    exclude_edges: bool = True
    scheduling_window_s: float = 0.1
    prr_rule: str = "ratio_clamped"

    def __post_init__(self):
        positive = ("highway_length_m", "lane_width_m", "isd_m", "bs_height_m", "ue_height_m",
                    "carrier_hz", "bandwidth_hz", "comm_range_m", "ivd_m", "packet_bytes",
                    "tx_period_hz", "scheduling_window_s")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.lanes < 2 or self.lanes % 2:
            raise InvalidInputError("lanes must be a positive even number")
        if not 0 < self.prr_threshold_bler < 1:
            raise InvalidInputError("prr_threshold_bler must lie in (0, 1)")
        if self.velocity_kmh < 0 or self.shadow_sigma_db < 0 or self.noise_figure_db < 0:
            raise InvalidInputError("velocity, shadowing sigma and noise figure must be non-negative")
        if self.pathloss_model not in PATHLOSS_MODELS:
            raise InvalidInputError(f"pathloss_model must be one of {PATHLOSS_MODELS}")
        if self.drop_mode not in DROP_MODES:
            raise InvalidInputError(f"drop_mode must be one of {DROP_MODES}")
        if self.prr_rule not in ("ratio_clamped", "product_clamped"):
            raise InvalidInputError("prr_rule must be 'ratio_clamped' or 'product_clamped'")
        if min(self.ue_height_m, self.bs_height_m) - self.height_offset_m <= 0:
            raise InvalidInputError("effective antenna heights must stay positive")

    @property
    def packet_bits(self) -> int:
        return int(self.packet_bytes) * 8

    def replace(self, **changes) -> "ScenarioConfig":
        return ScenarioConfig(**{**self.to_dict(), **changes})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidInputError(f"unknown scenario settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Topology:
    """Vehicles (x, y, lane, direction, velocity) and base stations (x, y, height)."""

    x: np.ndarray
    y: np.ndarray
    lane: np.ndarray
    direction: np.ndarray
    velocity_kmh: np.ndarray
    bs_xyz: np.ndarray

    @property
    def n_vehicles(self) -> int:
        return int(self.x.size)

    def distances(self) -> np.ndarray:
        """Pairwise Euclidean distance matrix (n, n)."""
        return np.hypot(self.x[:, None] - self.x[None, :], self.y[:, None] - self.y[None, :])

    def serving_bs(self) -> np.ndarray:
        d = np.hypot(self.x[:, None] - self.bs_xyz[None, :, 0], self.y[:, None] - self.bs_xyz[None, :, 1])
        return np.argmin(d, axis=1)

    def to_csv(self) -> str:
        lines = ["id,x,y,lane,direction,velocity"]
        for i in range(self.n_vehicles):
            lines.append(f"{i},{self.x[i]:.6f},{self.y[i]:.6f},{self.lane[i]},{self.direction[i]},"
                         f"{self.velocity_kmh[i]:g}")
        return "\n".join(lines) + "\n"


def lane_positions(config: ScenarioConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Along-road positions per lane, in [0, highway_length)."""
    L, ivd = config.highway_length_m, config.ivd_m
    if ivd > L:
        raise InvalidInputError(f"IVD {ivd} m leaves lanes empty on a {L} m highway")
    out = []
    for _ in range(config.lanes):
        offset = rng.uniform(0.0, ivd)
        if config.drop_mode == "deterministic":
            pos = offset + ivd * np.arange(int(math.floor((L - offset) / ivd)) + 1)
        else:
            n_max = int(L / (ivd * (1 - JITTER_FRACTION))) + 2
            gaps = ivd * (1 + rng.uniform(-JITTER_FRACTION, JITTER_FRACTION, n_max))
            pos = offset + np.concatenate([[0.0], np.cumsum(gaps)])
        out.append(pos[pos < L])
    return out


def base_station_positions(config: ScenarioConfig) -> np.ndarray:
    """Sites every ISD from x = 0 inside the segment, on a line beside the road."""
    xs = np.arange(0.0, config.highway_length_m, config.isd_m)
    return np.column_stack([xs, np.full(xs.size, -config.bs_offset_m), np.full(xs.size, config.bs_height_m)])


def build_topology(config: ScenarioConfig, seed: int) -> Topology:
    """Populate every lane; lanes 0..lanes/2-1 drive in +x, the rest in -x."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x70F0]))
    per_lane = lane_positions(config, rng)
    half = config.lanes // 2
    x = np.concatenate(per_lane)
    lane = np.concatenate([np.full(p.size, i) for i, p in enumerate(per_lane)])
    y = lane * config.lane_width_m
    direction = np.where(lane < half, 1, -1)
    order = np.lexsort((lane, x))
    return Topology(x=x[order], y=y[order].astype(np.float64), lane=lane[order],
                    direction=direction[order],
                    velocity_kmh=np.full(x.size, float(config.velocity_kmh)),
                    bs_xyz=base_station_positions(config))


def neighbors_in_range(topo: Topology, tx_id: int, range_m: float) -> np.ndarray:
    if not 0 <= tx_id < topo.n_vehicles:
        raise InvalidInputError(f"vehicle {tx_id} is not in the topology")
    d = np.hypot(topo.x - topo.x[tx_id], topo.y - topo.y[tx_id])
    mask = d <= range_m
    mask[tx_id] = False
    return np.nonzero(mask)[0]


def breakpoint_distance(config: ScenarioConfig) -> float:
    h_tx = config.ue_height_m - config.height_offset_m
    h_rx = config.ue_height_m - config.height_offset_m
    return 4.0 * h_tx * h_rx * config.carrier_hz / SPEED_OF_LIGHT


def pathloss_db(d_m, config: ScenarioConfig):
    """WINNER II LOS two-slope pathloss between vehicle antennas (distances below 1 m clamp to 1 m).

    Beyond the breakpoint the loss grows at 40 dB/decade from its value at the
    breakpoint, so the two branches meet exactly.
    """
    d = np.maximum(np.asarray(d_m, dtype=np.float64), 1.0)
    f_ghz = config.carrier_hz / 1e9
    if config.pathloss_model == "B1":
        slope, intercept = 22.7, 41.0
    else:
        slope, intercept = 21.5, 44.2
    d_bp = breakpoint_distance(config)
    log_d, log_bp = np.log10(d), math.log10(d_bp)
    pl_bp = slope * log_bp + intercept + 20.0 * math.log10(f_ghz / 5.0)
    pl = pl_bp + np.where(d < d_bp, slope, 40.0) * (log_d - log_bp)
    return float(pl) if pl.ndim == 0 else pl


def shadow_fading_db(shape, config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Independent zero-mean Gaussian (dB) draws, one per ordered link."""
    if config.shadow_sigma_db == 0:
        return np.zeros(shape)
    return config.shadow_sigma_db * rng.standard_normal(shape)


def rx_power_dbm(pathloss, config: ScenarioConfig, shadow=0.0):
    return config.tx_power_dbm + config.tx_ant_gain_db + config.rx_ant_gain_db - pathloss - shadow


def noise_power_dbm(config: ScenarioConfig) -> float:
    return THERMAL_NOISE_DBM_HZ + config.noise_figure_db + 10.0 * math.log10(config.bandwidth_hz)
