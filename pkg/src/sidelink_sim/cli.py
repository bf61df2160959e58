"""``sidelink-sim`` command line: ll-sweep, sl-prr and table-inspect."""
from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import traceback
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import l2s
from .errors import InvalidInputError, NumericalDegeneracyError, TableParseError
from .ll_campaign import CampaignConfig, SweepInterrupted, points_csv, run_points, table_from_points
from .provenance import stamp
from .scenario import ScenarioConfig
from .sl_engine import prr_campaign, results_csv, results_json

EXIT_OK, EXIT_USAGE, EXIT_INTERRUPTED, EXIT_INTERNAL = 0, 2, 3, 4
SEED_ENV = "SIDELINK_SIM_SEED"
DEFAULT_IVDS = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0)
DEFAULT_PERIODS = (10.0, 20.0)


class UsageError(Exception):
    """Bad flags, config or missing inputs; maps to exit code 2."""


def shipped_table_path() -> Path:
    return Path(str(resources.files("sidelink_sim") / "data" / "l2s_table.json"))


def _floats(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:step`` (stop inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 10) for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list or start:stop:step, got {text!r}") from None


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {path} not found")
    text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: line 1: top level must be an object")
    unknown = set(data) - {"seed", "link_level", "scenario", "sweep"}
    if unknown:
        raise UsageError(f"{path}: unknown sections {sorted(unknown)}")
    return data


def _resolve_seed(flag: int | None, file_cfg: dict) -> int:
    if flag is not None:
        return flag
    if "seed" in file_cfg:
        return int(file_cfg["seed"])
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _header(meta: dict) -> str:
    return "# " + " ".join(f"{k}={meta[k]}" for k in ("tool", "version", "config_hash", "seed", "timestamp")) + "\n"


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def cmd_ll_sweep(args) -> int:
    file_cfg = _read_config(args.config)
    ll = dict(file_cfg.get("link_level", {}))
    if args.snr is not None:
        ll["snr_grid_db"] = args.snr
    if args.velocity is not None:
        ll["velocities_kmh"] = args.velocity
    if args.blocks is not None:
        ll["blocks_per_point"] = args.blocks
    if args.no_early_stop:
        ll["min_errors"] = None
    ll["seed"] = _resolve_seed(args.seed, {"seed": ll["seed"]} if "seed" in ll else file_cfg)
    try:
        config = CampaignConfig.from_dict(ll)
    except (InvalidInputError, TypeError) as exc:
        raise UsageError(f"link-level config: {exc}") from None
    out = _out_dir(args.out)
    cfg = config.to_dict()
    meta = stamp(cfg, config.seed)
    _write(out, "effective_config.json", json.dumps({"seed": config.seed, "link_level": cfg},
                                                    indent=1, sort_keys=True) + "\n")
    n_total = len(config.snr_grid_db) * len(config.velocities_kmh)
    progress = (lambda p: print(p.csv_row(), file=sys.stderr, flush=True)) if args.verbose else None
    try:
        points = run_points(config, args.workers, progress)
    except SweepInterrupted as exc:
        _write(out, "bler_points.partial.csv",
               _header(meta) + f"# resume: completed {len(exc.points)} of {n_total} points\n"
               + points_csv(exc.points))
        print(f"interrupted; {len(exc.points)} of {n_total} points saved to "
              f"{out / 'bler_points.partial.csv'}", file=sys.stderr)
        return EXIT_INTERRUPTED
    _write(out, "bler_points.csv", _header(meta) + points_csv(points))
    table = table_from_points(config, points)
    l2s.save(table, out / "l2s_table.json")
    _write(out, "bler_plot.dat", _bler_plot(table, meta))
    if n_total == 1:
        print(points_csv(points), end="")
    else:
        print(f"wrote {n_total} points to {out}")
    return EXIT_OK


def _bler_plot(table: l2s.L2sTable, meta: dict) -> str:
    """gnuplot data: one block per velocity, columns snr_db, log10(bler) (floored)."""
    lines = [_header(meta).rstrip("\n"), "# snr_db log10_bler bler"]
    for v, row in zip(table.velocities_kmh, table.bler):
        lines.append(f"\n\n# velocity_kmh={v:g}")
        for s, b in zip(table.snr_grid_db, row):
            lines.append(f"{s:g} {np.log10(max(b, l2s.BLER_FLOOR)):.9g} {b:.9g}")
    return "\n".join(lines) + "\n"


def _load_table(path: str | None, out: Path | None) -> l2s.L2sTable:
    if path == "builtin":
        p = shipped_table_path()
    elif path:
        p = Path(path)
    elif out is not None and (out / "l2s_table.json").is_file():
        p = out / "l2s_table.json"
    else:
        raise UsageError("no BLER table: run ll-sweep first or pass --table (use '--table builtin' "
                         "for the shipped regression table)")
    if not p.is_file():
        raise UsageError(f"table {p} not found: run ll-sweep first or pass --table")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return l2s.load(p)
    except TableParseError as exc:
        raise UsageError(f"cannot parse table {p}: {exc}") from None


def cmd_sl_prr(args) -> int:
    file_cfg = _read_config(args.config)
    out = _out_dir(args.out)
    table = _load_table(args.table, out)
    try:
        scenario = ScenarioConfig.from_dict(dict(file_cfg.get("scenario", {})))
    except (InvalidInputError, TypeError) as exc:
        raise UsageError(f"scenario config: {exc}") from None
    sweep = dict(file_cfg.get("sweep", {}))
    unknown = set(sweep) - {"ivd_m", "velocity_kmh", "period_hz", "drops"}
    if unknown:
        raise UsageError(f"unknown sweep settings {sorted(unknown)}")
    ivds = args.ivd or sweep.get("ivd_m") or list(DEFAULT_IVDS)
    velocities = args.velocity or sweep.get("velocity_kmh") or [float(v) for v in table.velocities_kmh]
    periods = args.period or sweep.get("period_hz") or list(DEFAULT_PERIODS)
    drops = args.drops if args.drops is not None else int(sweep.get("drops", 100))
    seed = _resolve_seed(args.seed, file_cfg)
    available = [float(v) for v in table.velocities_kmh]
    missing = [v for v in velocities if not any(np.isclose(v, a) for a in available)]
    if missing:
        raise UsageError(f"velocities {missing} are not in the table; available: {available}")
    if drops < 1:
        raise UsageError("--drops must be at least 1")
    try:
        for ivd in ivds:
            scenario.replace(ivd_m=ivd)
        for p in periods:
            scenario.replace(tx_period_hz=p)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    sweep_eff = {"ivd_m": [float(x) for x in ivds], "velocity_kmh": [float(x) for x in velocities],
                 "period_hz": [float(x) for x in periods], "drops": drops}
    effective = {"seed": seed, "scenario": scenario.to_dict(), "sweep": sweep_eff,
                 "table_config_hash": table.metadata.get("config_hash")}
    _write(out, "effective_config.json", json.dumps(effective, indent=1, sort_keys=True) + "\n")
    try:
        results = prr_campaign(scenario, table, sweep_eff["ivd_m"], sweep_eff["velocity_kmh"],
                               sweep_eff["period_hz"], drops, seed, args.workers)
    except KeyboardInterrupt:
        print("interrupted before any PRR point completed", file=sys.stderr)
        return EXIT_INTERRUPTED
    meta = stamp(effective, seed)
    _write(out, "prr_results.csv", _header(meta) + results_csv(results))
    body = results_json(results, scenario, seed, table, per_drop=args.verbose)
    body["metadata"]["config_hash"] = meta["config_hash"]
    body["metadata"]["sweep"] = sweep_eff
    _write(out, "prr_results.json", json.dumps(body, indent=1, sort_keys=True) + "\n")
    _write(out, "prr_plot.dat", _prr_plot(results, meta))
    if len(results) == 1:
        print(results_csv(results), end="")
    else:
        print(f"wrote {len(results)} PRR points to {out}")
    return EXIT_OK


def _prr_plot(results, meta: dict) -> str:
    """gnuplot data: one block per (velocity, period), columns ivd_m, mean_prr, ci95."""
    lines = [_header(meta).rstrip("\n"), "# ivd_m mean_prr ci95"]
    keys = sorted({(r.point.velocity_kmh, r.point.period_hz) for r in results})
    for v, p in keys:
        lines.append(f"\n\n# velocity_kmh={v:g} period_hz={p:g}")
        for r in sorted((r for r in results if (r.point.velocity_kmh, r.point.period_hz) == (v, p)),
                        key=lambda r: r.point.ivd_m):
            lines.append(f"{r.point.ivd_m:g} {r.mean_prr:.9g} {r.ci95:.9g}")
    return "\n".join(lines) + "\n"


def _parse_query(text: str) -> tuple[float, float]:
    try:
        snr, vel = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--query expects 'snr,velocity', got {text!r}") from None
    return snr, vel


def cmd_table_inspect(args) -> int:
    table = _load_table(args.table or "builtin", None)
    meta = table.metadata
    print(f"SNR grid (dB): {' '.join(f'{s:g}' for s in table.snr_grid_db)}")
    print(f"velocities (km/h): {' '.join(f'{v:g}' for v in table.velocities_kmh)}")
    for key in ("tool", "version", "config_hash", "seed", "timestamp", "bler_definition", "snr_definition"):
        if key in meta:
            print(f"{key}: {meta[key]}")
    violations = table.monotonicity_violations()
    if violations:
        print(f"monotonicity violations: {len(violations)}")
        for v, s, d in violations:
            print(f"  velocity {v:g} km/h: BLER rises by {d:.3g} at {s:g} dB")
    else:
        print("monotonicity violations: none")
    if args.query:
        snr, vel = _parse_query(args.query)
        print(f"BLER({snr:g} dB, {vel:g} km/h -> row {table.snapped_velocity(vel):g} km/h) = "
              f"{table.lookup(snr, vel):.9g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sidelink-sim", description="C-V2X sidelink link- and system-level simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, table=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--seed", type=int, help=f"master seed (fallback: ${SEED_ENV}, then 0)")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
        p.add_argument("-v", "--verbose", action="store_true")
        if table:
            p.add_argument("--table", help="BLER table JSON, or 'builtin'")

    ll = sub.add_parser("ll-sweep", help="Monte-Carlo BLER versus SNR and velocity")
    common(ll)
    ll.add_argument("--snr", type=_floats, help="SNR points in dB")
    ll.add_argument("--velocity", type=_floats, help="velocities in km/h")
    ll.add_argument("--blocks", type=int, help="subframes per point")
    ll.add_argument("--no-early-stop", action="store_true", help="always run the full block count")
    ll.set_defaults(func=cmd_ll_sweep)

    sl = sub.add_parser("sl-prr", help="highway PRR campaign from a BLER table")
    common(sl, table=True)
    sl.add_argument("--ivd", type=_floats, help="inter-vehicle distances in m")
    sl.add_argument("--velocity", type=_floats, help="velocities in km/h (must be table rows)")
    sl.add_argument("--period", type=_floats, help="transmission frequencies in Hz")
    sl.add_argument("--drops", type=int, help="independent drops per point")
    sl.set_defaults(func=cmd_sl_prr)

    ti = sub.add_parser("table-inspect", help="print a BLER table and query it")
    ti.add_argument("--table", help="BLER table JSON (default: shipped regression table)")
    ti.add_argument("--query", help="'snr,velocity' to interpolate")
    ti.set_defaults(func=cmd_table_inspect)
    return parser


_VALUE_FLAGS = ("--snr", "--velocity", "--ivd", "--period", "--query")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--snr -8,-7`` as ``--snr=-8,-7`` so argparse does not read the value as a flag."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        if argv[i] in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and argv[i + 1][1:2].isdigit():
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
            continue
        out.append(argv[i])
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _attach_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    previous = signal.getsignal(signal.SIGTERM)
    signal.signal(signal.SIGTERM, signal.default_int_handler)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssertionError, NumericalDegeneracyError, InvalidInputError) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:  # noqa: BLE001 - any other failure is a bug, not a user error
        traceback.print_exc()
        return EXIT_INTERNAL
    finally:
        signal.signal(signal.SIGTERM, previous)


if __name__ == "__main__":
    sys.exit(main())
