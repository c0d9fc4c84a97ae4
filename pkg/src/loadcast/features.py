"""Input-matrix construction for the recurrent forecaster.

Each training window is a (1 + m + k) x n matrix: one row of load
history (oldest to newest), an m-row one-hot calendar block, and k rows
of leading-temperature condition values, one column per half-hour
history point. The target is the load one step (30 min) after the last
history column.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from enum import Enum

import numpy as np

from .errors import DataError
from .ingest import LoadSeries, TempSeries
from .timebase import STEP_MINUTES, instant_date, instant_to_iso

__all__ = [
    "DayLabelScheme",
    "CalendarConfig",
    "ConditionKind",
    "TemperatureCondition",
    "WindowSpec",
    "FeatureWindow",
    "Season",
    "WindowScaler",
    "Dataset",
    "encode_day_onehot",
    "derive_condition_series",
    "build_window_matrix",
    "season_of",
    "season_from_label",
    "make_dataset",
    "make_eval_dataset",
]


class DayLabelScheme(Enum):
    """Calendar one-hot variants: none, weekday/weekend/holiday, or Mon..Sun+holiday."""

    NONE = "none"
    THREE_TYPE = "three"
    EIGHT_TYPE = "eight"

    @property
    def m(self) -> int:
        return {"none": 0, "three": 3, "eight": 8}[self.value]


@dataclass(frozen=True)
class CalendarConfig:
    """Holiday set plus first-day-of-week convention ('monday' or 'sunday')."""

    holidays: frozenset = frozenset()
    week_start: str = "monday"

    def __post_init__(self):
        if self.week_start not in ("monday", "sunday"):
            raise ValueError(f"week_start must be 'monday' or 'sunday', got {self.week_start!r}")
        object.__setattr__(self, "holidays", frozenset(self.holidays))
        for h in self.holidays:
            if not isinstance(h, date):
                raise ValueError(f"holiday {h!r} is not a date")

    def is_holiday(self, d: date) -> bool:
        return d in self.holidays

    def weekday_slot(self, d: date) -> int:
        """Day-of-week slot with the configured week start first."""
        if self.week_start == "monday":
            return d.weekday()
        return (d.weekday() + 1) % 7


class ConditionKind(Enum):
    INSTANTANEOUS = "instantaneous"
    WINDOW_MAX = "window_max"
    WINDOW_MEAN = "window_mean"
    SIMULTANEOUS = "simultaneous"
    NONE = "none"


#: Kinds that participate in lead sweeps.
SWEEP_KINDS = (ConditionKind.INSTANTANEOUS, ConditionKind.WINDOW_MAX, ConditionKind.WINDOW_MEAN)


@dataclass(frozen=True)
class TemperatureCondition:
    """A temperature feature: a kind plus how many hours it leads the load."""

    kind: ConditionKind
    lead_hours: float = 0.0

    def __post_init__(self):
        lead = float(self.lead_hours)
        if round(lead * 2) != lead * 2 or not (0.0 <= lead <= 24.0):
            raise ValueError(f"lead_hours must be a multiple of 0.5 in [0, 24], got {lead}")
        if self.kind in (ConditionKind.SIMULTANEOUS, ConditionKind.NONE):
            if lead != 0.0:
                raise ValueError(f"{self.kind.value} carries no lead, got {lead}")
        elif lead == 0.0:
            raise ValueError(f"{self.kind.value} requires lead_hours >= 0.5 (use simultaneous for 0)")
        object.__setattr__(self, "lead_hours", lead)

    @property
    def lead_samples(self) -> int:
        return int(round(self.lead_hours * 60 / STEP_MINUTES))

    @property
    def label(self) -> str:
        if self.kind in (ConditionKind.SIMULTANEOUS, ConditionKind.NONE):
            return self.kind.value
        return f"{self.kind.value}@{self.lead_hours:g}h"


NO_TEMPERATURE = TemperatureCondition(ConditionKind.NONE)
SIMULTANEOUS = TemperatureCondition(ConditionKind.SIMULTANEOUS)


@dataclass(frozen=True)
class WindowSpec:
    """History length, calendar scheme and temperature conditions of one model input.

    Duplicate (kind, lead) conditions are dropped, keeping first
    occurrence; 'none' placeholders contribute no rows.
    """

    n_points: int
    scheme: DayLabelScheme = DayLabelScheme.NONE
    conditions: tuple = ()
    horizon: int = 1

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.horizon != 1:
            raise ValueError("only the single-step (30 min) horizon is supported")
        seen, kept = set(), []
        for cond in self.conditions:
            if not isinstance(cond, TemperatureCondition):
                raise ValueError(f"conditions must be TemperatureCondition, got {cond!r}")
            key = (cond.kind, cond.lead_hours)
            if cond.kind is ConditionKind.NONE or key in seen:
                continue
            seen.add(key)
            kept.append(cond)
        object.__setattr__(self, "conditions", tuple(kept))

    @property
    def m(self) -> int:
        return self.scheme.m

    @property
    def k(self) -> int:
        return len(self.conditions)

    @property
    def n_rows(self) -> int:
        return 1 + self.m + self.k

    def history_minutes(self) -> int:
        return (self.n_points - 1) * STEP_MINUTES


@dataclass(frozen=True)
class FeatureWindow:
    matrix: np.ndarray  # (n_rows, n_points)
    target: float
    target_time: int


@dataclass(frozen=True)
class Season:
    """A wildfire season: Oct 1 through Mar 31 of the following year.

    ``end`` is the last calendar day of the season; membership covers
    [Oct 1 00:00, Apr 1 00:00).
    """

    label: str
    start: date
    end: date

    def contains(self, instant: int) -> bool:
        return self.start <= instant_date(instant) <= self.end


def season_from_label(label: str) -> Season:
    """Build a Season from its 'YY-YY' label (2000-based years)."""
    try:
        a, b = label.split("-")
        if len(a) != 2 or len(b) != 2:
            raise ValueError
        y = 2000 + int(a)
        if int(b) != (y + 1) % 100:
            raise ValueError
    except ValueError:
        raise ValueError(f"bad season label {label!r}, expected e.g. '15-16'") from None
    return Season(label, date(y, 10, 1), date(y + 1, 3, 31))


def season_of(instant: int) -> Season | None:
    """Season containing ``instant``, or None outside Oct-Mar."""
    d = instant_date(instant)
    if d.month >= 10:
        y = d.year
    elif d.month <= 3:
        y = d.year - 1
    else:
        return None
    return Season(f"{y % 100:02d}-{(y + 1) % 100:02d}", date(y, 10, 1), date(y + 1, 3, 31))


def encode_day_onehot(d: date, scheme: DayLabelScheme, cal: CalendarConfig) -> np.ndarray:
    """One-hot day-type vector of length scheme.m.

    A configured holiday always takes the holiday slot, whatever the
    weekday; otherwise three-type uses weekday/weekend and eight-type
    the day of week.
    """
    if scheme is DayLabelScheme.NONE:
        raise ValueError("scheme NONE has no day-type encoding")
    vec = np.zeros(scheme.m)
    if scheme is DayLabelScheme.THREE_TYPE:
        if cal.is_holiday(d):
            vec[2] = 1.0
        elif d.weekday() >= 5:
            vec[1] = 1.0
        else:
            vec[0] = 1.0
    else:
        vec[7 if cal.is_holiday(d) else cal.weekday_slot(d)] = 1.0
    return vec


def _dense(times: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Place a (possibly gappy) series on its full half-hour grid, NaN for holes."""
    grid = np.arange(times[0], times[-1] + 1, STEP_MINUTES, dtype=np.int64)
    dense = np.full(grid.size, np.nan)
    dense[(times - times[0]) // STEP_MINUTES] = values
    return grid, dense


def derive_condition_series(temp: TempSeries, cond: TemperatureCondition) -> TempSeries:
    """Leading-temperature series for one condition.

    The value at time t is temp(t - lead) for the instantaneous kind,
    and the max/mean of temp over the inclusive window [t - lead, t]
    for the windowed kinds. Times whose history reaches before the
    start of ``temp`` (or crosses a hole) are omitted.
    """
    if cond.kind is ConditionKind.NONE:
        raise ValueError("'none' denotes the absence of a temperature row")
    if cond.kind is ConditionKind.SIMULTANEOUS:
        return TempSeries(temp.location, temp.times, temp.values)
    if len(temp) == 0:
        raise DataError("empty temperature series")
    lead = cond.lead_samples
    grid, dense = _dense(temp.times, temp.values)
    if grid.size <= lead:
        raise DataError(
            f"temperature series too short for a {cond.lead_hours:g} h lead "
            f"({grid.size} samples on grid, need > {lead})"
        )
    if cond.kind is ConditionKind.INSTANTANEOUS:
        out = dense[:-lead]
    else:
        windows = np.lib.stride_tricks.sliding_window_view(dense, lead + 1)
        out = windows.max(axis=1) if cond.kind is ConditionKind.WINDOW_MAX else windows.mean(axis=1)
    out_times = grid[lead:]
    keep = np.isfinite(out)
    if not keep.any():
        raise DataError(f"no defined points for condition {cond.label}")
    return TempSeries(temp.location, out_times[keep], out[keep])


def _lookup(times: np.ndarray, values: np.ndarray, wanted: np.ndarray, what: str) -> np.ndarray:
    idx = np.searchsorted(times, wanted)
    bad = (idx >= times.size) | (times[np.minimum(idx, times.size - 1)] != wanted)
    if bad.any():
        missing = wanted[bad][0]
        raise DataError(f"{what} missing at {instant_to_iso(int(missing))}")
    return values[idx]


def build_window_matrix(
    load: LoadSeries,
    temp: TempSeries | None,
    spec: WindowSpec,
    cal: CalendarConfig,
    at: int,
) -> FeatureWindow:
    """One raw (unscaled) input window whose history ends at ``at``.

    Reference single-window constructor; ``make_dataset`` builds the
    same matrices in bulk. The calendar column of each history point
    uses that point's own date, so windows may straddle midnight.
    """
    n = spec.n_points
    hist_times = at - STEP_MINUTES * np.arange(n - 1, -1, -1, dtype=np.int64)
    hist = _lookup(load.times, load.values, hist_times, "load history")
    target_time = at + STEP_MINUTES
    target = _lookup(load.times, load.values, np.array([target_time]), "target")[0]
    rows = [hist]
    if spec.scheme is not DayLabelScheme.NONE:
        onehot = np.stack([encode_day_onehot(instant_date(t), spec.scheme, cal) for t in hist_times])
        rows.extend(onehot.T)
    for cond in spec.conditions:
        if temp is None:
            raise DataError("temperature conditions requested but no temperature series given")
        cs = derive_condition_series(temp, cond)
        rows.append(_lookup(cs.times, cs.values, hist_times, f"condition {cond.label}"))
    return FeatureWindow(np.vstack(rows), float(target), int(target_time))


@dataclass(frozen=True)
class WindowScaler:
    """Per-feature-row min-max scaling to [0, 1], fitted on training data only.

    One-hot rows pass through unscaled. A degenerate row (max == min)
    maps to the constant 0.5 and inverts back to its fitted value.
    """

    row_min: np.ndarray
    row_max: np.ndarray
    row_scaled: np.ndarray  # bool mask; False rows are identity
    target_min: float
    target_max: float

    def _fwd(self, x: np.ndarray, lo, hi) -> np.ndarray:
        rng = hi - lo
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(rng == 0, 0.5, (x - lo) / np.where(rng == 0, 1.0, rng))
        return out

    def _inv(self, s: np.ndarray, lo, hi) -> np.ndarray:
        rng = hi - lo
        return np.where(rng == 0, lo, lo + s * rng)

    def transform_matrix(self, raw: np.ndarray) -> np.ndarray:
        lo = self.row_min[..., None]
        hi = self.row_max[..., None]
        scaled = self._fwd(raw, lo, hi)
        mask = self.row_scaled[..., None]
        return np.where(mask, scaled, raw)

    def inverse_matrix(self, scaled: np.ndarray) -> np.ndarray:
        lo = self.row_min[..., None]
        hi = self.row_max[..., None]
        raw = self._inv(scaled, lo, hi)
        mask = self.row_scaled[..., None]
        return np.where(mask, raw, scaled)

    def transform_target(self, y):
        return self._fwd(np.asarray(y, dtype=np.float64), self.target_min, self.target_max)

    def inverse_target(self, s):
        return self._inv(np.asarray(s, dtype=np.float64), self.target_min, self.target_max)


@dataclass(frozen=True)
class Dataset:
    """Scaled feature windows ready for training.

    ``X`` has shape (n_windows, n_rows, n_points); matrices and targets
    are scaled with ``scaler`` (fitted on the training split only).
    Arrays are read-only.
    """

    X: np.ndarray
    y: np.ndarray
    target_times: np.ndarray
    scaler: WindowScaler
    split_tag: str
    spec: WindowSpec

    def __post_init__(self):
        for name in ("X", "y", "target_times"):
            arr = np.asarray(getattr(self, name))
            if arr.base is not None:  # views get their own storage; fresh arrays are frozen in place
                arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.X.shape[0])

    def windows(self) -> list[FeatureWindow]:
        return [
            FeatureWindow(self.X[i], float(self.y[i]), int(self.target_times[i]))
            for i in range(len(self))
        ]


def _fill_short_gaps(dense: np.ndarray, max_run: int = 2) -> np.ndarray:
    """Linearly fill NaN runs of length <= max_run with both neighbours present."""
    out = dense.copy()
    isnan = np.isnan(out)
    i = 0
    n = out.size
    while i < n:
        if not isnan[i]:
            i += 1
            continue
        j = i
        while j < n and isnan[j]:
            j += 1
        run = j - i
        if run <= max_run and i > 0 and j < n:
            left, right = out[i - 1], out[j]
            for k in range(run):
                out[i + k] = left + (right - left) * (k + 1) / (run + 1)
        i = j
    return out


def _onehot_rows(grid: np.ndarray, scheme: DayLabelScheme, cal: CalendarConfig) -> np.ndarray:
    day_idx = grid // (24 * 60)
    uniq, inverse = np.unique(day_idx, return_inverse=True)
    table = np.stack(
        [encode_day_onehot(instant_date(int(d) * 24 * 60), scheme, cal) for d in uniq]
    )
    return table[inverse].T  # (m, len(grid))


def _build_raw_windows(load, temp, spec: WindowSpec, cal: CalendarConfig):
    """All valid raw windows over the series: (X, targets, target_times).

    Gaps of up to 2 consecutive load samples are linearly filled;
    windows touching longer gaps or undefined condition values are
    dropped.
    """
    n = spec.n_points
    grid, dense_load = _dense(load.times, load.values)
    dense_load = _fill_short_gaps(dense_load)
    if grid.size < n + 1:
        raise DataError(f"series too short: {grid.size} grid points for n_points={n}")

    feat = np.empty((spec.n_rows, grid.size))
    feat[0] = dense_load
    if spec.m:
        feat[1 : 1 + spec.m] = _onehot_rows(grid, spec.scheme, cal)
    for r, cond in enumerate(spec.conditions):
        if temp is None:
            raise DataError("temperature conditions requested but no temperature series given")
        cs = derive_condition_series(temp, cond)
        row = np.full(grid.size, np.nan)
        ok = (cs.times >= grid[0]) & (cs.times <= grid[-1])
        row[(cs.times[ok] - grid[0]) // STEP_MINUTES] = cs.values[ok]
        feat[1 + spec.m + r] = row

    # candidate windows: history ends at grid index i, target at i+1
    win = np.lib.stride_tricks.sliding_window_view(feat, n, axis=1)  # (R, G-n+1, n)
    cand = win.shape[1] - 1  # last candidate has no target
    X_all = np.swapaxes(win[:, :cand, :], 0, 1)  # (cand, R, n)
    targets = dense_load[n:]
    valid = ~np.isnan(X_all).any(axis=(1, 2)) & ~np.isnan(targets)
    return X_all, targets, grid[n:], valid


def _season_mask(target_times, valid, seasons: set) -> np.ndarray:
    labels = np.array([s.label if (s := season_of(int(t))) else "" for t in target_times])
    return valid & np.isin(labels, sorted(seasons))


def make_dataset(
    load: LoadSeries,
    temp: TempSeries | None,
    spec: WindowSpec,
    cal: CalendarConfig,
    train_seasons: set[str],
    test_seasons: set[str],
) -> tuple[Dataset, Dataset]:
    """Build train/test datasets split by the season of each window's target.

    The min-max scaler is fitted on the training windows only and
    applied to both splits; one-hot rows are left unscaled.
    """
    train_seasons = set(train_seasons)
    test_seasons = set(test_seasons)
    if not train_seasons or not test_seasons:
        raise DataError("both season sets must be non-empty")
    overlap = train_seasons & test_seasons
    if overlap:
        raise DataError(f"seasons {sorted(overlap)} are in both splits")

    X_all, targets, target_times, valid = _build_raw_windows(load, temp, spec, cal)
    in_train = _season_mask(target_times, valid, train_seasons)
    in_test = _season_mask(target_times, valid, test_seasons)
    if not in_train.any():
        raise DataError(f"no training windows found for seasons {sorted(train_seasons)}")
    if not in_test.any():
        raise DataError(f"no test windows found for seasons {sorted(test_seasons)}")

    X_train = X_all[in_train].copy()
    X_test = X_all[in_test].copy()
    y_train = targets[in_train]
    y_test = targets[in_test]

    row_scaled = np.ones(spec.n_rows, dtype=bool)
    row_scaled[1 : 1 + spec.m] = False
    scaler = WindowScaler(
        row_min=X_train.min(axis=(0, 2)),
        row_max=X_train.max(axis=(0, 2)),
        row_scaled=row_scaled,
        target_min=float(y_train.min()),
        target_max=float(y_train.max()),
    )
    train = Dataset(
        scaler.transform_matrix(X_train),
        scaler.transform_target(y_train),
        target_times[in_train],
        scaler,
        "train",
        spec,
    )
    test = Dataset(
        scaler.transform_matrix(X_test),
        scaler.transform_target(y_test),
        target_times[in_test],
        scaler,
        "test",
        spec,
    )
    return train, test


def make_eval_dataset(
    load: LoadSeries,
    temp: TempSeries | None,
    spec: WindowSpec,
    cal: CalendarConfig,
    seasons: set[str],
    scaler: WindowScaler,
) -> Dataset:
    """Windows for ``seasons`` scaled with an existing (already fitted) scaler.

    Used when evaluating a saved model: the checkpoint's scaler must be
    applied rather than refitting on the evaluation data.
    """
    if scaler.row_min.size != spec.n_rows:
        raise DataError(
            f"scaler was fitted for {scaler.row_min.size} feature rows, window spec has {spec.n_rows}"
        )
    X_all, targets, target_times, valid = _build_raw_windows(load, temp, spec, cal)
    mask = _season_mask(target_times, valid, set(seasons))
    if not mask.any():
        raise DataError(f"no windows found for seasons {sorted(set(seasons))}")
    return Dataset(
        scaler.transform_matrix(X_all[mask].copy()),
        scaler.transform_target(targets[mask]),
        target_times[mask],
        scaler,
        "eval",
        spec,
    )
