"""Load and temperature ingestion.

Parses half-hourly substation load CSVs and gridded temperature files,
interpolates the grid down to the load's 30-minute resolution, extracts
a per-station point series by bilinear evaluation, and aligns the two
series onto a common timestamp vector.

File formats
------------
Load CSV            header ``timestamp,load_mw``; timestamps are local
                    standard time ``YYYY-MM-DDThh:mm``.
Temperature grid    plain text: three header lines ``lats:``, ``lons:``
                    and ``times:`` followed by one line of row-major
                    (lat-major) values per time step.
Point temperature   CSV with header ``timestamp,temp_c``.
Station metadata    JSON list of ``{station_id, lat, lon, factors?}``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .timebase import STEP_MINUTES, check_half_hourly, instant_from_iso, instant_to_iso

__all__ = [
    "LoadSeries",
    "TempGrid",
    "TempSeries",
    "StationMeta",
    "parse_load_csv",
    "parse_temp_point_csv",
    "parse_temp_grid",
    "write_load_csv",
    "write_temp_point_csv",
    "write_temp_grid",
    "parse_station_file",
    "interpolate_temporal",
    "extract_point_series",
    "align_series",
]


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class LoadSeries:
    """Half-hourly substation load in MW.

    ``gaps`` lists the 30-minute instants between the first and last
    retained point at which no valid sample exists (missing rows and
    rows with non-positive load).
    """

    station_id: str
    times: np.ndarray  # int64 instants, strictly increasing
    values: np.ndarray  # float64 MW, all > 0
    gaps: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        gaps = np.asarray(self.gaps, dtype=np.int64)
        if times.shape != values.shape:
            raise ValueError("times and values length mismatch")
        check_half_hourly(times, "load")
        if np.any(values <= 0):
            raise ValueError("load values must be positive; move bad rows to gaps")
        object.__setattr__(self, "times", _freeze(times))
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "gaps", _freeze(np.unique(gaps)))

    def __len__(self) -> int:
        return int(self.times.size)

    def head(self, n_points: int) -> "LoadSeries":
        """First ``n_points`` samples (gap list restricted to that span)."""
        times = self.times[:n_points]
        gaps = self.gaps[self.gaps <= times[-1]] if times.size else self.gaps[:0]
        return LoadSeries(self.station_id, times, self.values[:n_points], gaps)


@dataclass(frozen=True)
class TempSeries:
    """Half-hourly 2 m temperature (degC) at one location."""

    location: tuple[float, float] | None
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if times.shape != values.shape:
            raise ValueError("times and values length mismatch")
        check_half_hourly(times, "temperature")
        if np.any(~np.isfinite(values)):
            raise ValueError("temperature values must be finite")
        object.__setattr__(self, "times", _freeze(times))
        object.__setattr__(self, "values", _freeze(values))

    def __len__(self) -> int:
        return int(self.times.size)

    def head(self, n_points: int) -> "TempSeries":
        return TempSeries(self.location, self.times[:n_points], self.values[:n_points])


@dataclass(frozen=True)
class TempGrid:
    """Gridded temperature: values[t, i, j] at (times[t], lat_axis[i], lon_axis[j])."""

    lat_axis: np.ndarray
    lon_axis: np.ndarray
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lat = np.asarray(self.lat_axis, dtype=np.float64)
        lon = np.asarray(self.lon_axis, dtype=np.float64)
        times = np.asarray(self.times, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        for name, axis in (("lat_axis", lat), ("lon_axis", lon)):
            if axis.ndim != 1 or axis.size < 2 or np.any(np.diff(axis) <= 0):
                raise ValueError(f"{name} must be a strictly ascending 1-D axis of length >= 2")
        if np.any(np.diff(times) <= 0):
            raise ValueError("grid times must be strictly increasing")
        if values.shape != (times.size, lat.size, lon.size):
            raise ValueError(
                f"grid values shape {values.shape} does not match "
                f"(times, lats, lons) = ({times.size}, {lat.size}, {lon.size})"
            )
        if np.any(~np.isfinite(values)):
            raise ValueError("grid contains non-finite values")
        object.__setattr__(self, "lat_axis", _freeze(lat))
        object.__setattr__(self, "lon_axis", _freeze(lon))
        object.__setattr__(self, "times", _freeze(times))
        object.__setattr__(self, "values", _freeze(values))

    @property
    def native_step(self) -> int:
        return int(self.times[1] - self.times[0])


@dataclass(frozen=True)
class StationMeta:
    station_id: str
    lat: float
    lon: float
    region_factors: dict[str, float] = field(default_factory=dict)


def parse_load_csv(path, station_id: str) -> LoadSeries:
    """Parse a ``timestamp,load_mw`` CSV into a LoadSeries.

    Rows are sorted by timestamp; duplicate timestamps are rejected.
    Rows with a missing or non-positive load are dropped and their
    instants recorded in ``gaps``, as are any 30-minute instants absent
    from the file between the first and last valid row.
    """
    rows: list[tuple[int, float | None]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != ["timestamp", "load_mw"]:
            raise DataError(f"{path}: expected header 'timestamp,load_mw', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                t = instant_from_iso(row[0])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            raw = row[1].strip()
            if not raw:
                rows.append((t, None))
                continue
            try:
                value = float(raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad load value {row[1]!r}") from None
            rows.append((t, value if value > 0 else None))
    if not rows:
        raise DataError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for (t0, _), (t1, _) in zip(rows, rows[1:]):
        if t0 == t1:
            raise DataError(f"{path}: duplicate timestamp {instant_to_iso(t0)}")
    kept = [(t, v) for t, v in rows if v is not None]
    if not kept:
        raise DataError(f"{path}: no rows with valid positive load")
    times = np.array([t for t, _ in kept], dtype=np.int64)
    values = np.array([v for _, v in kept], dtype=np.float64)
    full = np.arange(times[0], times[-1] + 1, STEP_MINUTES, dtype=np.int64)
    gaps = np.setdiff1d(full, times)
    return LoadSeries(station_id, times, values, gaps)


def parse_temp_point_csv(path, location: tuple[float, float] | None = None) -> TempSeries:
    """Parse a pre-extracted ``timestamp,temp_c`` point series."""
    times: list[int] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != ["timestamp", "temp_c"]:
            raise DataError(f"{path}: expected header 'timestamp,temp_c', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                times.append(instant_from_iso(row[0]))
                values.append(float(row[1]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not times:
        raise DataError(f"{path}: no data rows")
    order = np.argsort(times)
    t = np.asarray(times, dtype=np.int64)[order]
    if np.any(np.diff(t) == 0):
        raise DataError(f"{path}: duplicate timestamps")
    return TempSeries(location, t, np.asarray(values, dtype=np.float64)[order])


def write_load_csv(path, series: LoadSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "load_mw"])
        for t, v in zip(series.times, series.values):
            writer.writerow([instant_to_iso(int(t)), repr(float(v))])


def write_temp_point_csv(path, series: TempSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "temp_c"])
        for t, v in zip(series.times, series.values):
            writer.writerow([instant_to_iso(int(t)), repr(float(v))])


def parse_temp_grid(path) -> TempGrid:
    """Parse the self-describing text grid format (see module docstring)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if len(lines) < 4:
        raise DataError(f"{path}: truncated grid file")

    def _header(idx: int, key: str) -> list[str]:
        if not lines[idx].startswith(key + ":"):
            raise DataError(f"{path}:{idx + 1}: expected '{key}:' header")
        return lines[idx][len(key) + 1 :].split()

    try:
        lats = np.array([float(v) for v in _header(0, "lats")])
        lons = np.array([float(v) for v in _header(1, "lons")])
        times = np.array([instant_from_iso(v) for v in _header(2, "times")], dtype=np.int64)
    except ValueError as exc:
        raise DataError(f"{path}: bad header: {exc}") from None
    body = lines[3:]
    if len(body) != times.size:
        raise DataError(f"{path}: expected {times.size} value lines, found {len(body)}")
    per_step = lats.size * lons.size
    values = np.empty((times.size, lats.size, lons.size))
    for k, ln in enumerate(body):
        fields = ln.split()
        if len(fields) != per_step:
            raise DataError(f"{path}:{k + 4}: expected {per_step} values, got {len(fields)}")
        try:
            values[k] = np.array([float(v) for v in fields]).reshape(lats.size, lons.size)
        except ValueError as exc:
            raise DataError(f"{path}:{k + 4}: {exc}") from None
    try:
        return TempGrid(lats, lons, times, values)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_temp_grid(path, grid: TempGrid) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lats: " + " ".join(repr(float(v)) for v in grid.lat_axis) + "\n")
        fh.write("lons: " + " ".join(repr(float(v)) for v in grid.lon_axis) + "\n")
        fh.write("times: " + " ".join(instant_to_iso(t) for t in grid.times) + "\n")
        for step in grid.values:
            fh.write(" ".join(repr(float(v)) for v in step.ravel()) + "\n")


def parse_station_file(path) -> list[StationMeta]:
    """Parse the station metadata JSON list."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, list):
        raise DataError(f"{path}: expected a JSON list of stations")
    stations = []
    for i, entry in enumerate(raw):
        try:
            stations.append(
                StationMeta(
                    station_id=str(entry["station_id"]),
                    lat=float(entry["lat"]),
                    lon=float(entry["lon"]),
                    region_factors={k: float(v) for k, v in entry.get("factors", {}).items()},
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: station entry {i}: {exc}") from None
    return stations


def interpolate_temporal(grid: TempGrid, target_step: int = STEP_MINUTES) -> TempGrid:
    """Linearly interpolate a grid in time down to ``target_step`` minutes.

    Original time steps are preserved bit-for-bit; only intermediate
    steps are computed. Idempotent once the grid is already at
    ``target_step``.
    """
    if grid.times.size < 2:
        raise DataError("temporal interpolation needs at least 2 time steps")
    steps = np.diff(grid.times)
    if np.any(steps != steps[0]):
        raise DataError("grid time axis is not uniformly spaced")
    native = int(steps[0])
    if native == target_step:
        return grid
    if native % target_step:
        raise DataError(f"native step {native} min is not a multiple of target {target_step} min")
    ratio = native // target_step
    n_out = (grid.times.size - 1) * ratio + 1
    times = grid.times[0] + target_step * np.arange(n_out, dtype=np.int64)
    values = np.empty((n_out,) + grid.values.shape[1:])
    values[::ratio] = grid.values
    delta = np.diff(grid.values, axis=0)
    for k in range(1, ratio):
        values[k::ratio] = grid.values[:-1] + delta * (k / ratio)
    return TempGrid(grid.lat_axis, grid.lon_axis, times, values)


def _bracket(axis: np.ndarray, x: float, name: str) -> tuple[int, float]:
    """Cell index i and fractional position of x within [axis[i], axis[i+1]]."""
    if x < axis[0] or x > axis[-1]:
        raise DataError(f"{name} {x} outside grid range [{axis[0]}, {axis[-1]}]")
    i = int(np.searchsorted(axis, x, side="right")) - 1
    if i >= axis.size - 1:  # exactly on the upper edge
        i = axis.size - 2
    frac = (x - axis[i]) / (axis[i + 1] - axis[i])
    return i, float(frac)


def extract_point_series(grid: TempGrid, lat: float, lon: float) -> TempSeries:
    """Bilinear evaluation of the grid at (lat, lon) for every time step.

    Equivalent to resampling the grid to a fine regular mesh and picking
    the nearest cell, without materialising the mesh.
    """
    i, fy = _bracket(grid.lat_axis, lat, "lat")
    j, fx = _bracket(grid.lon_axis, lon, "lon")
    v = grid.values
    series = (
        v[:, i, j] * (1 - fy) * (1 - fx)
        + v[:, i + 1, j] * fy * (1 - fx)
        + v[:, i, j + 1] * (1 - fy) * fx
        + v[:, i + 1, j + 1] * fy * fx
    )
    return TempSeries((lat, lon), grid.times, series)


def align_series(load: LoadSeries, temp: TempSeries) -> tuple[LoadSeries, TempSeries]:
    """Restrict both series to their common timestamps.

    Aligning already-aligned series returns equal content (identity up
    to array copies).
    """
    common, load_idx, temp_idx = np.intersect1d(load.times, temp.times, return_indices=True)
    if common.size == 0:
        raise DataError("load and temperature series have no timestamps in common")
    gaps = load.gaps[(load.gaps >= common[0]) & (load.gaps <= common[-1])]
    return (
        LoadSeries(load.station_id, common, load.values[load_idx], gaps),
        TempSeries(temp.location, common, temp.values[temp_idx]),
    )
