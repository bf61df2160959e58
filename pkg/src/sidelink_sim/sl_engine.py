"""System-level PRR evaluation: resource reuse, interference, SINR, the
supported-UE count and the per-transmission PRR rule."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import t as student_t

from .errors import InvalidInputError
from .l2s import L2sTable
from .phy import ResourcePool
from .provenance import stamp
from .scenario import (
    ScenarioConfig, Topology, build_topology, noise_power_dbm, pathloss_db, rx_power_dbm,
    shadow_fading_db,
)

RESULTS_HEADER = "ivd_m,velocity_kmh,period_hz,mean_prr,ci95,drops,ue_supported,n_ue_mean"


def spectral_efficiency(packet_bits: float, n_ue: float, period_hz: float, bw_hz: float) -> float:
    """Load in bits/s/Hz when ``n_ue`` users each send ``packet_bits`` at ``period_hz``."""
    if packet_bits <= 0 or period_hz <= 0 or bw_hz <= 0 or n_ue < 0:
        raise InvalidInputError("packet size, period and bandwidth must be positive, UE count non-negative")
    return packet_bits * n_ue * period_hz / bw_hz


def ue_supported(se_target: float, bw_hz: float, packet_bits: float, period_hz: float) -> int:
    """Largest UE count whose load fits ``se_target``."""
    if se_target <= 0 or bw_hz <= 0 or packet_bits <= 0 or period_hz <= 0:
        raise InvalidInputError("all arguments must be positive")
    exact = se_target * bw_hz / (packet_bits * period_hz)
    # Guard against 99.999999 landing one below the intended integer.
    return int(math.floor(exact + 1e-9 * max(1.0, exact)))


def target_spectral_efficiency(pool: ResourcePool | None = None) -> float:
    return (pool or ResourcePool()).qpsk_third_spectral_efficiency()


def resource_units(config: ScenarioConfig, se: float) -> int:
    """Orthogonal resources the scheduler can hand out over one scheduling window."""
    return max(1, int(math.floor(se * config.bandwidth_hz * config.scheduling_window_s / config.packet_bits + 1e-9)))


def assign_resources(topo: Topology, n_units: int) -> np.ndarray:
    """Greedy farthest-first reuse: vehicles in along-road order each take the
    unit whose closest existing user is farthest away (free units first,
    lowest index on ties).  Returns the unit index per vehicle."""
    if n_units < 1:
        raise InvalidInputError("need at least one resource unit")
    n = topo.n_vehicles
    unit = np.empty(n, dtype=np.int64)
    nearest = np.full(n_units, np.inf)  # per unit: distance from current vehicle to its closest user
    order = np.lexsort((topo.y, topo.x))
    for k, v in enumerate(order):
        if k < n_units:
            unit[v] = k
            continue
        prev = order[:k]
        d = np.hypot(topo.x[prev] - topo.x[v], topo.y[prev] - topo.y[v])
        nearest.fill(np.inf)
        np.minimum.at(nearest, unit[prev], d)
        unit[v] = int(np.argmax(nearest))
    return unit


def random_assignment(topo: Topology, n_units: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, n_units, topo.n_vehicles)


def min_cochannel_distance(topo: Topology, unit: np.ndarray) -> float:
    d = topo.distances()
    same = (unit[:, None] == unit[None, :]) & ~np.eye(topo.n_vehicles, dtype=bool)
    return float(d[same].min()) if same.any() else math.inf


def _dbm_to_mw(p):
    return 10.0 ** (np.asarray(p) / 10.0)


def _mw_to_dbm(p):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p)


def interference_power_dbm(rx: int, wanted_tx: int, unit: np.ndarray, power_dbm: np.ndarray):
    """Linear sum over co-channel transmitters other than ``wanted_tx`` and ``rx``.

    ``power_dbm[u, r]`` is the power of ``u`` at ``r``.  Returns ``-inf`` when
    there is no interferer.
    """
    co = np.nonzero(unit == unit[wanted_tx])[0]
    co = co[(co != wanted_tx) & (co != rx)]
    if co.size == 0:
        return -math.inf
    return float(_mw_to_dbm(np.sum(_dbm_to_mw(power_dbm[co, rx]))))


def sinr_db(wanted_dbm, interference_dbm, noise_dbm):
    """P_rx / (P_interference + P_noise) in dB; interference may be -inf."""
    wanted = np.asarray(wanted_dbm, dtype=np.float64)
    noise = np.asarray(noise_dbm, dtype=np.float64)
    if not (np.all(np.isfinite(wanted)) and np.all(np.isfinite(noise))):
        raise InvalidInputError("wanted and noise powers must be finite")
    denom = _dbm_to_mw(interference_dbm) + _dbm_to_mw(noise)
    out = wanted - 10.0 * np.log10(denom)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LinkBudget:
    rx_id: int
    wanted_power_dbm: float
    interference_power_dbm: float
    noise_power_dbm: float
    sinr_db: float


@dataclass
class PrrResult:
    prr: float
    counter_success: int
    n_ue_in_range: int
    ue_supported: int
    rx_id: np.ndarray
    sinr_db: np.ndarray
    bler: np.ndarray
    passed_threshold: np.ndarray
    random_test_pass: np.ndarray
    drop_seed: int | None = None
    tx_id: int | None = None

    def records(self) -> list[dict]:
        return [{"rx_id": int(r), "sinr_db": float(s), "bler": float(b), "passed_threshold": bool(p),
                 "random_test_pass": bool(q)}
                for r, s, b, p, q in zip(self.rx_id, self.sinr_db, self.bler,
                                         self.passed_threshold, self.random_test_pass)]


def prr_from_counts(counter, n_ue, supported: int, rule: str = "ratio_clamped"):
    """Success share scaled by the supported-UE share (scalars or arrays).

    ``ratio_clamped`` caps the supported-UE ratio at 1 before multiplying;
    ``product_clamped`` multiplies first and caps the product.
    """
    counter = np.asarray(counter, dtype=np.float64)
    n_ue = np.asarray(n_ue, dtype=np.float64)
    if np.any(n_ue <= 0):
        raise InvalidInputError("PRR is undefined without receivers in range")
    share = counter / n_ue
    if rule == "ratio_clamped":
        prr = share * np.minimum(1.0, supported / n_ue)
    elif rule == "product_clamped":
        prr = np.minimum(1.0, share * supported / n_ue)
    else:
        raise InvalidInputError(f"unknown PRR rule {rule!r}")
    return float(prr) if prr.ndim == 0 else prr


def prr_rule_steps(sinr, table: L2sTable, velocity_kmh: float, threshold: float, uniforms,
                   supported: int, rule: str = "ratio_clamped"):
    """Steps 2-6 for one transmission given the receivers' SINRs and uniform draws.

    Returns ``(prr, counter, bler, passed_threshold, random_test_pass)``.
    """
    sinr = np.atleast_1d(np.asarray(sinr, dtype=np.float64))
    u = np.atleast_1d(np.asarray(uniforms, dtype=np.float64))
    if sinr.size == 0:
        raise InvalidInputError("transmitter has no receivers in range")
    if u.shape != sinr.shape:
        raise InvalidInputError("one uniform draw per receiver is required")
    bler = np.atleast_1d(table.lookup(sinr, velocity_kmh))
    passed = bler < threshold
    success = passed & (bler < u)
    counter = int(np.count_nonzero(success))
    return prr_from_counts(counter, sinr.size, supported, rule), counter, bler, passed, success


@dataclass
class Drop:
    """One topology with its received-power matrix and resource assignment."""

    topo: Topology
    power_dbm: np.ndarray  # [tx, rx]
    unit: np.ndarray
    in_range: np.ndarray   # [tx, rx] bool
    seed: int

    @cached_property
    def power_mw(self) -> np.ndarray:
        """Linear received power with the (meaningless) self-links zeroed."""
        p = _dbm_to_mw(self.power_dbm)
        np.fill_diagonal(p, 0.0)
        return p

    @property
    def cochannel_mw(self) -> np.ndarray:
        """Per rx, total co-channel power of each unit's users: [unit, rx]."""
        p = self.power_mw
        n_units = int(self.unit.max()) + 1
        out = np.zeros((n_units, p.shape[1]))
        order = np.argsort(self.unit, kind="stable")
        starts = np.searchsorted(self.unit[order], np.arange(n_units))
        nonempty = np.bincount(self.unit, minlength=n_units) > 0
        sums = np.add.reduceat(p[order], starts[nonempty], axis=0)
        out[nonempty] = sums
        return out


def drop_seed(master_seed: int, drop_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, drop_index]).generate_state(1, np.uint64)[0] >> 1)


def build_drop(config: ScenarioConfig, seed: int, n_units: int) -> Drop:
    topo = build_topology(config, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5AD0]))
    d = topo.distances()
    shadow = shadow_fading_db(d.shape, config, rng)
    power = rx_power_dbm(pathloss_db(d, config), config, shadow)
    in_range = d <= config.comm_range_m
    np.fill_diagonal(in_range, False)
    return Drop(topo, power, assign_resources(topo, n_units), in_range, seed)


def tagged_transmitters(config: ScenarioConfig, topo: Topology) -> np.ndarray:
    """Vehicles that take a turn as transmitter; with ``exclude_edges`` only
    those farther than the communication range from either highway end."""
    if not config.exclude_edges:
        return np.arange(topo.n_vehicles)
    r = config.comm_range_m
    return np.nonzero((topo.x >= r) & (topo.x <= config.highway_length_m - r))[0]


def link_budgets(drop: Drop, tx: int, noise_dbm: float) -> list[LinkBudget]:
    rxs = np.nonzero(drop.in_range[tx])[0]
    out = []
    for r in rxs:
        i = interference_power_dbm(int(r), tx, drop.unit, drop.power_dbm)
        out.append(LinkBudget(int(r), float(drop.power_dbm[tx, r]), i, noise_dbm,
                              sinr_db(drop.power_dbm[tx, r], i, noise_dbm)))
    return out


def drop_sinr(drop: Drop, noise_dbm: float, txs: np.ndarray) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """For each tagged tx: (tx, receivers in range, their SINR in dB)."""
    co = drop.cochannel_mw
    p_mw = drop.power_mw
    n_mw = _dbm_to_mw(noise_dbm)
    out = []
    for t in txs:
        rxs = np.nonzero(drop.in_range[t])[0]
        if rxs.size == 0:
            out.append((int(t), rxs, np.empty(0)))
            continue
        u = drop.unit[t]
        interference = co[u, rxs] - p_mw[t, rxs]
        # A receiver sharing the unit is not its own interferer; its row sum holds p[r, r] = 0.
        interference = np.maximum(interference, 0.0)
        out.append((int(t), rxs, drop.power_dbm[t, rxs] - 10.0 * np.log10(interference + n_mw)))
    return out


def prr_single_drop(topo_or_drop, tx_id: int, table: L2sTable, config: ScenarioConfig, seed: int,
                    uniforms=None, supported: int | None = None, n_units: int | None = None) -> PrrResult:
    """Steps 1-6 for one tagged transmitter.

    ``topo_or_drop`` may be a prepared :class:`Drop` or a seed-built one is
    made.  ``uniforms`` pins the per-receiver draws (in receiver-id order).
    """
    se = target_spectral_efficiency()
    supported = supported if supported is not None else ue_supported(
        se, config.bandwidth_hz, config.packet_bits, config.tx_period_hz)
    drop = topo_or_drop if isinstance(topo_or_drop, Drop) else build_drop(
        config, seed, n_units or resource_units(config, se))
    (_, rxs, sinr), = drop_sinr(drop, noise_power_dbm(config), np.array([tx_id]))
    if rxs.size == 0:
        raise InvalidInputError(f"vehicle {tx_id} has no receivers in range; PRR undefined")
    if uniforms is None:
        uniforms = np.random.default_rng(np.random.SeedSequence([seed, 0xD4A3, tx_id])).random(rxs.size)
    prr, counter, bler, passed, ok = prr_rule_steps(sinr, table, config.velocity_kmh,
                                                    config.prr_threshold_bler, uniforms, supported,
                                                    config.prr_rule)
    return PrrResult(prr, counter, int(rxs.size), supported, rxs, sinr, bler, passed, ok, seed, tx_id)


@dataclass(frozen=True)
class SweepPoint:
    ivd_m: float
    velocity_kmh: float
    period_hz: float


@dataclass
class PointResult:
    point: SweepPoint
    mean_prr: float
    ci95: float
    drops: int
    ue_supported: int
    n_ue_mean: float
    drop_prr: np.ndarray = field(repr=False)
    clamped: int = 0

    def csv_row(self) -> str:
        p = self.point
        return (f"{p.ivd_m:g},{p.velocity_kmh:g},{p.period_hz:g},{self.mean_prr:.9g},{self.ci95:.9g},"
                f"{self.drops},{self.ue_supported},{self.n_ue_mean:.9g}")


def _mean_ci(values: np.ndarray) -> tuple[float, float]:
    m = float(np.mean(values))
    if values.size < 2:
        return m, math.nan
    half = float(student_t.ppf(0.975, values.size - 1) * np.std(values, ddof=1) / math.sqrt(values.size))
    return m, half


def _drop_task(args):
    """All sweep points sharing one IVD for one drop; returns {(v, period): (prr, n_ue, clamped)}."""
    config, table, ivd, velocities, periods, master_seed, k, se = args
    cfg = config.replace(ivd_m=ivd)
    seed = drop_seed(master_seed, k)
    drop = build_drop(cfg, seed, resource_units(cfg, se))
    txs = tagged_transmitters(cfg, drop.topo)
    links = [(t, rxs, s) for t, rxs, s in drop_sinr(drop, noise_power_dbm(cfg), txs) if rxs.size]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD4A3]))
    uniforms = [rng.random(rxs.size) for _, rxs, _ in links]
    out = {}
    if not links:
        for v in velocities:
            for period in periods:
                out[(v, period)] = (math.nan, 0.0, 0)
        return ivd, out
    # Steps 2-5 for every tagged link at once; per-tx counters by segment sums.
    sizes = np.array([rxs.size for _, rxs, _ in links])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    all_sinr = np.concatenate([s for _, _, s in links])
    all_u = np.concatenate(uniforms)
    for v in velocities:
        bler = np.atleast_1d(table.lookup(all_sinr, v))
        success = (bler < cfg.prr_threshold_bler) & (bler < all_u)
        counter = np.add.reduceat(success.astype(np.int64), starts)
        for period in periods:
            supported = ue_supported(se, cfg.bandwidth_hz, cfg.packet_bits, period)
            prrs = prr_from_counts(counter, sizes, supported, cfg.prr_rule)
            clamped = int(np.count_nonzero((counter / sizes) * supported / sizes > 1.0))
            out[(v, period)] = (float(np.mean(prrs)), float(np.mean(sizes)), clamped)
    return ivd, out


def prr_campaign(config: ScenarioConfig, table: L2sTable, ivds, velocities, periods, n_drops: int,
                 seed: int, workers: int | None = None, strict_velocity: bool = True) -> list[PointResult]:
    """Mean PRR with a 95% interval over drops for every (IVD, velocity, period).

    Drop ``k`` uses the same topology and shadowing at every velocity and
    period of an IVD, so those comparisons share their random numbers.
    """
    if n_drops < 1:
        raise InvalidInputError("n_drops must be at least 1")
    velocities = [float(v) for v in velocities]
    if strict_velocity:
        missing = [v for v in velocities if not np.any(np.isclose(table.velocities_kmh, v))]
        if missing:
            raise InvalidInputError(
                f"velocities {missing} not in table; available: {[float(v) for v in table.velocities_kmh]}")
    se = target_spectral_efficiency()
    tasks = [(config, table, float(ivd), velocities, [float(p) for p in periods], seed, k, se)
             for ivd in ivds for k in range(n_drops)]
    workers = workers or os.cpu_count() or 1
    if workers == 1:
        results = [_drop_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_drop_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    out = []
    for ivd in ivds:
        per_drop = [r for i, r in results if i == float(ivd)]
        for v in velocities:
            for period in periods:
                vals = np.array([r[(v, float(period))][0] for r in per_drop])
                vals = vals[np.isfinite(vals)]
                n_ue = float(np.mean([r[(v, float(period))][1] for r in per_drop]))
                clamped = int(sum(r[(v, float(period))][2] for r in per_drop))
                mean, ci = _mean_ci(vals) if vals.size else (math.nan, math.nan)
                out.append(PointResult(SweepPoint(float(ivd), v, float(period)), mean, ci, int(vals.size),
                                       ue_supported(se, config.bandwidth_hz, config.packet_bits, period),
                                       n_ue, vals, clamped))
    return out


def results_csv(results: list[PointResult]) -> str:
    return "\n".join([RESULTS_HEADER] + [r.csv_row() for r in results]) + "\n"


def results_json(results: list[PointResult], config: ScenarioConfig, seed: int, table: L2sTable,
                 per_drop: bool = False) -> dict:
    cfg = config.to_dict()
    se = target_spectral_efficiency()
    body = {
        "metadata": stamp(cfg, seed, spectral_efficiency=se, resource_units=resource_units(config, se),
                          table_config_hash=table.metadata.get("config_hash"),
                          vehicles_per_cell=lambda_vehicles_per_cell(config), config=cfg),
        "results": [],
    }
    for r in results:
        row = {"ivd_m": r.point.ivd_m, "velocity_kmh": r.point.velocity_kmh, "period_hz": r.point.period_hz,
               "mean_prr": r.mean_prr, "ci95": r.ci95, "drops": r.drops, "ue_supported": r.ue_supported,
               "n_ue_mean": r.n_ue_mean, "clamped_transmissions": r.clamped}
        if per_drop:
            row["drop_prr"] = [float(x) for x in r.drop_prr]
        body["results"].append(row)
    return body


def lambda_vehicles_per_cell(config: ScenarioConfig) -> float:
    """Average vehicle count along one inter-site distance."""
    return config.lanes * config.isd_m / config.ivd_m
