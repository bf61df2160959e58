"""BLER(SNR, velocity) lookup table: the interface between the link-level
campaign and the system-level engine."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, TableParseError

BLER_FLOOR = 1e-6
SIGNIFICANT_DIGITS = 9
_SECTIONS = ("snr_grid_db", "velocities_kmh", "bler", "metadata")


def _canonical(x: float) -> float:
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


@dataclass
class L2sTable:
    """``bler[i, j]`` is the block error rate at ``velocities_kmh[i]`` and ``snr_grid_db[j]``.

    ``non_monotone`` is set when some row increases with SNR; lookups still
    work on such a table but are no longer guaranteed monotone.
    """

    snr_grid_db: np.ndarray
    velocities_kmh: np.ndarray
    bler: np.ndarray
    metadata: dict = field(default_factory=dict)
    non_monotone: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.snr_grid_db = np.asarray(self.snr_grid_db, dtype=np.float64).ravel()
        self.velocities_kmh = np.asarray(self.velocities_kmh, dtype=np.float64).ravel()
        self.bler = np.atleast_2d(np.asarray(self.bler, dtype=np.float64))
        if self.snr_grid_db.size == 0 or self.velocities_kmh.size == 0:
            raise InvalidInputError("empty table")
        if self.bler.shape != (self.velocities_kmh.size, self.snr_grid_db.size):
            raise InvalidInputError(
                f"bler shape {self.bler.shape} does not match "
                f"{self.velocities_kmh.size} velocities x {self.snr_grid_db.size} SNR points")
        if np.any(np.diff(self.snr_grid_db) <= 0) or np.any(np.diff(self.velocities_kmh) <= 0):
            raise InvalidInputError("grids must be strictly increasing")
        if not np.all(np.isfinite(self.bler)) or np.any(self.bler < 0) or np.any(self.bler > 1):
            raise InvalidInputError("BLER entries must lie in [0, 1]")
        self.non_monotone = bool(self.monotonicity_violations())

    def __eq__(self, other) -> bool:
        if not isinstance(other, L2sTable):
            return NotImplemented
        return (np.array_equal(self.snr_grid_db, other.snr_grid_db)
                and np.array_equal(self.velocities_kmh, other.velocities_kmh)
                and np.array_equal(self.bler, other.bler) and self.metadata == other.metadata)

    def monotonicity_violations(self) -> list[tuple[float, float, float]]:
        """(velocity, snr, increase) for every step where BLER rises with SNR."""
        out = []
        for i, v in enumerate(self.velocities_kmh):
            d = np.diff(self.bler[i])
            for j in np.nonzero(d > 0)[0]:
                out.append((float(v), float(self.snr_grid_db[j + 1]), float(d[j])))
        return out

    def velocity_index(self, velocity_kmh: float) -> int:
        """Nearest grid velocity; ties go to the lower one."""
        dist = np.abs(self.velocities_kmh - velocity_kmh)
        return int(np.argmin(dist))  # argmin returns the first, i.e. lower, of equals

    def snapped_velocity(self, velocity_kmh: float) -> float:
        return float(self.velocities_kmh[self.velocity_index(velocity_kmh)])

    def lookup(self, snr_db, velocity_kmh: float):
        """BLER at ``snr_db`` (scalar or array) for the nearest tabulated velocity.

        Log-linear interpolation between SNR knots; below the grid the first
        value holds, above it the BLER is 0.
        """
        row = self.bler[self.velocity_index(velocity_kmh)]
        snr = np.asarray(snr_db, dtype=np.float64)
        logb = np.log10(np.maximum(row, BLER_FLOOR))
        val = 10.0 ** np.interp(snr, self.snr_grid_db, logb)
        val = np.where(val < BLER_FLOOR * (1 + 1e-9), 0.0, val)
        val = np.where(snr < self.snr_grid_db[0], row[0], val)
        val = np.where(snr > self.snr_grid_db[-1], 0.0, val)
        return float(val) if val.ndim == 0 else val

    def to_dict(self) -> dict:
        return {
            "snr_grid_db": [_canonical(x) for x in self.snr_grid_db],
            "velocities_kmh": [_canonical(x) for x in self.velocities_kmh],
            "bler": [[_canonical(x) for x in row] for row in self.bler],
            "metadata": self.metadata,
        }

    def canonical(self) -> "L2sTable":
        return table_from_dict(self.to_dict())


def lookup(table: L2sTable, snr_db, velocity_kmh: float):
    return table.lookup(snr_db, velocity_kmh)


def table_from_dict(data) -> L2sTable:
    if not isinstance(data, dict):
        raise TableParseError("top level must be an object", location="$")
    for key in _SECTIONS:
        if key not in data:
            raise TableParseError(f"missing section '{key}'", location=key)
    for key in ("snr_grid_db", "velocities_kmh"):
        if not isinstance(data[key], list) or not all(isinstance(x, (int, float)) for x in data[key]):
            raise TableParseError(f"'{key}' must be a list of numbers", location=key)
    rows = data["bler"]
    if not isinstance(rows, list):
        raise TableParseError("'bler' must be a list of rows", location="bler")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != len(data["snr_grid_db"]):
            raise TableParseError(f"row {i} must hold {len(data['snr_grid_db'])} numbers",
                                  location=f"bler[{i}]")
        for j, x in enumerate(row):
            if not isinstance(x, (int, float)):
                raise TableParseError(f"non-numeric entry {x!r}", location=f"bler[{i}][{j}]")
    if len(rows) != len(data["velocities_kmh"]):
        raise TableParseError(f"{len(rows)} rows for {len(data['velocities_kmh'])} velocities",
                              location="bler")
    if not isinstance(data["metadata"], dict):
        raise TableParseError("'metadata' must be an object", location="metadata")
    try:
        table = L2sTable(data["snr_grid_db"], data["velocities_kmh"], rows, dict(data["metadata"]))
    except InvalidInputError as exc:
        raise TableParseError(str(exc), location="bler") from exc
    if table.non_monotone:
        warnings.warn("BLER table has rows that increase with SNR", RuntimeWarning, stacklevel=2)
    return table


def save(table: L2sTable, path) -> None:
    Path(path).write_text(json.dumps(table.to_dict(), indent=1, sort_keys=True) + "\n")


def load(path) -> L2sTable:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        # Sections are written in sorted order, so the first absent one is where the file ends.
        missing = [k for k in sorted(_SECTIONS) if f'"{k}"' not in text]
        if missing:
            raise TableParseError(f"{path}: file ends early, missing section '{missing[0]}'",
                                  location=missing[0]) from exc
        raise TableParseError(f"{path}: {exc.msg} at line {exc.lineno} column {exc.colno}",
                              location=f"line {exc.lineno}") from exc
    return table_from_dict(data)
