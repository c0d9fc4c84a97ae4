"""Correlation and dispersion statistics.

Covers the leading-temperature correlation sweep (Pearson rho plus
order-1/2 polynomial r-squared over leads of 0.5 h .. 24 h), selection
of the strongest conditions, the two-group lead-pattern classification,
daily load/temperature profiles with percentile bands, the coefficient
of quartile variation, and Gaussian KDE of forecast errors.

All percentiles use linear interpolation between order statistics.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DataError
from .features import SWEEP_KINDS, CalendarConfig, ConditionKind, _dense
from .ingest import LoadSeries, TempSeries
from .timebase import SLOTS_PER_DAY, STEP_MINUTES, instant_date, slots_of_day

__all__ = [
    "LEAD_GRID_HOURS",
    "SweepResult",
    "KindBest",
    "BestConditions",
    "Group",
    "DailyProfile",
    "DispersionReport",
    "pearson",
    "polyfit_r2",
    "lead_sweep",
    "best_conditions",
    "classify_group",
    "daily_profile",
    "cqv",
    "dispersion",
    "kde",
    "silverman_bandwidth",
    "write_sweep_csv",
    "write_profile_csv",
]

#: Lead grid in hours: 0.5, 1.0, ..., 24.0 (48 entries, one per half hour).
LEAD_GRID_HOURS = np.arange(1, 49) * 0.5
_MAX_LEAD_SAMPLES = 48


def pearson(x, y) -> float:
    """Pearson correlation coefficient, clamped to [-1, 1].

    Raises DataError when either argument has zero variance (the
    coefficient is undefined there; never returns NaN).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two equal-length 1-D arrays")
    if x.size < 2:
        raise ValueError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(np.dot(dx, dx))
    vy = float(np.dot(dy, dy))
    if vx == 0.0 or vy == 0.0:
        raise DataError("pearson undefined: zero variance input")
    return float(np.clip(np.dot(dx, dy) / np.sqrt(vx * vy), -1.0, 1.0))


def polyfit_r2(x, y, order: int) -> float:
    """r-squared of the least-squares polynomial of ``order`` (1 or 2), clamped to [0, 1]."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("polyfit_r2 needs two equal-length 1-D arrays")
    if x.size < order + 2:
        raise ValueError(f"need at least {order + 2} points for order {order}")
    if np.unique(x).size < order + 1:
        raise DataError("singular fit: not enough distinct x values")
    coeffs = npoly.polyfit(x, y, order)
    resid = y - npoly.polyval(x, coeffs)
    ss_res = float(np.dot(resid, resid))
    dy = y - y.mean()
    ss_tot = float(np.dot(dy, dy))
    if ss_tot == 0.0:
        raise DataError("r-squared undefined: zero variance in y")
    return float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))


@dataclass(frozen=True)
class SweepResult:
    """Correlation records for one condition kind over the 0.5..24 h lead grid."""

    kind: ConditionKind
    leads: np.ndarray
    rho: np.ndarray
    r2_order1: np.ndarray
    r2_order2: np.ndarray
    n_points: int  # size of the common sample set shared by all leads

    def records(self) -> list[tuple[float, float, float, float]]:
        return [
            (float(l), float(r), float(a), float(b))
            for l, r, a, b in zip(self.leads, self.rho, self.r2_order1, self.r2_order2)
        ]


def lead_sweep(load: LoadSeries, temp: TempSeries, kind: ConditionKind) -> SweepResult:
    """Correlate load(t) against one leading-temperature kind at every lead.

    Only temperature leading load is assessed. Every lead is evaluated
    over the identical time set: instants whose full trailing 24 h of
    temperature exists and whose load sample is present, so records are
    comparable across leads.
    """
    if kind not in SWEEP_KINDS:
        raise ValueError(f"sweep kind must be one of {[k.value for k in SWEEP_KINDS]}")
    grid, dense_temp = _dense(temp.times, temp.values)
    if grid.size <= 2 * _MAX_LEAD_SAMPLES:
        raise DataError("temperature series shorter than 48 h; cannot sweep 24 h of leads")

    # windows[i] = temp over [t - 24 h, t] with t = grid[i + 48]
    windows = np.lib.stride_tricks.sliding_window_view(dense_temp, _MAX_LEAD_SAMPLES + 1)
    t_candidates = grid[_MAX_LEAD_SAMPLES:]
    idx = np.searchsorted(load.times, t_candidates)
    idx_c = np.minimum(idx, load.times.size - 1)
    has_load = (idx < load.times.size) & (load.times[idx_c] == t_candidates)
    valid = np.isfinite(windows).all(axis=1) & has_load
    if valid.sum() < 3:
        raise DataError("fewer than 3 instants have both load and a full 24 h temperature history")
    w = windows[valid]
    y = load.values[idx_c[valid]]

    rho = np.empty(LEAD_GRID_HOURS.size)
    r2o1 = np.empty_like(rho)
    r2o2 = np.empty_like(rho)
    for i, lead_h in enumerate(LEAD_GRID_HOURS):
        lead = int(round(lead_h * 60 / STEP_MINUTES))
        seg = w[:, _MAX_LEAD_SAMPLES - lead :]
        if kind is ConditionKind.INSTANTANEOUS:
            x = seg[:, 0]
        elif kind is ConditionKind.WINDOW_MAX:
            x = seg.max(axis=1)
        else:
            x = seg.mean(axis=1)
        rho[i] = pearson(x, y)
        r2o1[i] = polyfit_r2(x, y, 1)
        r2o2[i] = polyfit_r2(x, y, 2)
    return SweepResult(kind, LEAD_GRID_HOURS.copy(), rho, r2o1, r2o2, int(valid.sum()))


@dataclass(frozen=True)
class KindBest:
    best_rho_lead: float
    best_rho: float
    best_r2o2_lead: float
    best_r2o2: float


@dataclass(frozen=True)
class BestConditions:
    """Strongest-correlation and best order-2 r-squared leads per kind."""

    by_kind: dict

    def rho_leads(self) -> tuple[float, float, float]:
        """Best-rho leads as (instantaneous, window_max, window_mean) hours."""
        return tuple(self.by_kind[k].best_rho_lead for k in SWEEP_KINDS)


def best_conditions(sweeps) -> BestConditions:
    """Pick, per kind, the lead maximising rho and the lead maximising order-2 r².

    Ties break toward the smaller lead. ``sweeps`` must cover all three
    sweep kinds exactly once.
    """
    by_kind = {}
    for sweep in sweeps:
        if sweep.kind in by_kind:
            raise ValueError(f"duplicate sweep for kind {sweep.kind.value}")
        if sweep.leads.size != LEAD_GRID_HOURS.size or not np.array_equal(sweep.leads, LEAD_GRID_HOURS):
            raise ValueError("sweep does not cover the full 0.5..24 h grid")
        i_rho = int(np.argmax(sweep.rho))
        i_r2 = int(np.argmax(sweep.r2_order2))
        by_kind[sweep.kind] = KindBest(
            best_rho_lead=float(sweep.leads[i_rho]),
            best_rho=float(sweep.rho[i_rho]),
            best_r2o2_lead=float(sweep.leads[i_r2]),
            best_r2o2=float(sweep.r2_order2[i_r2]),
        )
    missing = [k.value for k in SWEEP_KINDS if k not in by_kind]
    if missing:
        raise ValueError(f"missing sweeps for kinds: {missing}")
    return BestConditions(by_kind)


class Group(Enum):
    """Lead-pattern groups with their prototype (instantaneous, max, mean) leads in hours."""

    GROUP1 = (2.0, 2.0, 4.0)
    GROUP2 = (4.0, 4.0, 8.0)

    @property
    def prototype(self) -> tuple[float, float, float]:
        return self.value


def classify_group(best: BestConditions) -> Group:
    """Assign the group whose prototype is nearer (L1) to the best-rho leads; ties -> GROUP1."""
    leads = np.array(best.rho_leads())
    d1 = float(np.abs(leads - np.array(Group.GROUP1.prototype)).sum())
    d2 = float(np.abs(leads - np.array(Group.GROUP2.prototype)).sum())
    return Group.GROUP1 if d1 <= d2 else Group.GROUP2


@dataclass(frozen=True)
class DailyProfile:
    """Per half-hour-slot statistics over a series spanning at least a week.

    Weekday means cover Mon-Fri dates that are not configured holidays;
    weekend means cover everything else (Sat/Sun and holidays, whose
    load behaves like a weekend). Percentiles pool all days. Means are
    NaN where a partition has no data.
    """

    mean_weekday: np.ndarray
    mean_weekend: np.ndarray
    p5: np.ndarray
    p25: np.ndarray
    p50: np.ndarray
    p75: np.ndarray
    p95: np.ndarray


def daily_profile(series, cal: CalendarConfig) -> DailyProfile:
    """Slot-of-day means (weekday/weekend split) and 5/25/50/75/95 percentiles."""
    times = np.asarray(series.times, dtype=np.int64)
    values = np.asarray(series.values, dtype=np.float64)
    if np.unique(times // (24 * 60)).size < 7:
        raise DataError("daily profile needs a series spanning at least 7 days")
    slots = slots_of_day(times)
    day_idx = times // (24 * 60)
    uniq_days, inv = np.unique(day_idx, return_inverse=True)
    is_weekday_day = np.array(
        [
            (d := instant_date(int(di) * 24 * 60)).weekday() < 5 and not cal.is_holiday(d)
            for di in uniq_days
        ]
    )
    weekday_mask = is_weekday_day[inv]

    def _slot_stat(fn, mask=None, default=np.nan):
        out = np.full(SLOTS_PER_DAY, default)
        for s in range(SLOTS_PER_DAY):
            sel = slots == s
            if mask is not None:
                sel &= mask
            if sel.any():
                out[s] = fn(values[sel])
        return out

    counts = np.bincount(slots, minlength=SLOTS_PER_DAY)
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise DataError(f"no samples in half-hour slot {int(empty[0])}")
    pct = {p: _slot_stat(lambda v, p=p: np.percentile(v, p)) for p in (5, 25, 50, 75, 95)}
    return DailyProfile(
        mean_weekday=_slot_stat(np.mean, weekday_mask),
        mean_weekend=_slot_stat(np.mean, ~weekday_mask),
        p5=pct[5],
        p25=pct[25],
        p50=pct[50],
        p75=pct[75],
        p95=pct[95],
    )


def cqv(values) -> float:
    """Coefficient of quartile variation (Q3 - Q1) / (Q3 + Q1)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cqv of empty data")
    q1, q3 = np.percentile(values, [25, 75])
    if q1 + q3 == 0.0:
        raise DataError("cqv undefined: Q1 + Q3 = 0")
    return float((q3 - q1) / (q3 + q1))


@dataclass(frozen=True)
class DispersionReport:
    sigma2: float  # population variance, squared units of the input
    cqv: float


def dispersion(values) -> DispersionReport:
    values = np.asarray(values, dtype=np.float64)
    return DispersionReport(sigma2=float(np.var(values)), cqv=cqv(values))


def silverman_bandwidth(x) -> float:
    """Rule-of-thumb bandwidth 0.9 * min(sd, IQR/1.34) * n^(-1/5)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("bandwidth needs at least 2 samples")
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        raise DataError("KDE undefined: zero spread")
    iqr = float(np.percentile(x, 75) - np.percentile(x, 25))
    a = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * a * x.size ** (-0.2)


def kde(errors, eval_grid) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian kernel density and its running trapezoidal integral.

    The cumulative curve is monotone nondecreasing and approaches 1
    when the grid extends well past the data range.
    """
    x = np.asarray(errors, dtype=np.float64)
    grid = np.asarray(eval_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("eval_grid must be strictly increasing with >= 2 points")
    h = silverman_bandwidth(x)
    density = np.zeros(grid.size)
    norm = 1.0 / (x.size * h * np.sqrt(2.0 * np.pi))
    for start in range(0, x.size, 4096):  # chunked to bound the (grid x samples) buffer
        chunk = x[start : start + 4096]
        z = (grid[:, None] - chunk[None, :]) / h
        density += np.exp(-0.5 * z * z).sum(axis=1)
    density *= norm
    steps = np.diff(grid)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * steps)])
    return density, cumulative


def write_sweep_csv(path, sweep: SweepResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lead_hours", "rho", "r2o1", "r2o2"])
        for rec in sweep.records():
            writer.writerow([f"{rec[0]:g}", repr(rec[1]), repr(rec[2]), repr(rec[3])])


def write_profile_csv(path, profile: DailyProfile) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "time_of_day", "mean_weekday", "mean_weekend", "p5", "p25", "p50", "p75", "p95"])
        for s in range(SLOTS_PER_DAY):
            tod = f"{s * STEP_MINUTES // 60:02d}:{s * STEP_MINUTES % 60:02d}"
            writer.writerow(
                [s, tod]
                + [
                    repr(float(getattr(profile, f)[s]))
                    for f in ("mean_weekday", "mean_weekend", "p5", "p25", "p50", "p75", "p95")
                ]
            )
