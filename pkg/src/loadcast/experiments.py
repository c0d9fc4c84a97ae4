"""Experiment harnesses and the synthetic data generator.

Implements the staged studies the forecaster is assessed with: the
input-length sweep, the calendar-label comparison, the leading-
temperature condition comparison, multi-station generalisation with
group classification, train/test season rotation, the off-peak
exclusion option, and the cost-benefit arithmetic. Real substation
data is not shipped, so a seeded generator produces twin-peaked
("duck curve") load with a weekly dip, an off-peak hot-water uptick,
and a temperature series that leads the load by a planted number of
hours; every harness is verified against that known construction.

Every compared configuration inside a step runs with identical seeds,
so metric differences are attributable to the configuration alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date

import numpy as np

from .errors import ConfigError, DataError
from .features import (
    NO_TEMPERATURE,
    SIMULTANEOUS,
    SWEEP_KINDS,
    CalendarConfig,
    ConditionKind,
    DayLabelScheme,
    Dataset,
    TemperatureCondition,
    WindowSpec,
    make_dataset,
)
from .ingest import LoadSeries, StationMeta, TempSeries
from .neural import ModelConfig, TrainConfig, TrainedModel, predict, train
from .stats import (
    BestConditions,
    Group,
    best_conditions,
    classify_group,
    dispersion,
    kde,
    lead_sweep,
    pearson,
    silverman_bandwidth,
)
from .timebase import (
    SLOTS_PER_DAY,
    STEP_MINUTES,
    instant_from_datetime,
    instant_to_iso,
    parse_time_of_day,
    slots_of_day,
)
from datetime import datetime

__all__ = [
    "MetricsReport",
    "RotationPlan",
    "CostBenefitInput",
    "CostBenefitResult",
    "SynthSpec",
    "StationData",
    "ForecastRun",
    "StepReport",
    "DEFAULT_SEASON_LABELS",
    "ORIGINAL_TRAIN_SEASONS",
    "ORIGINAL_TEST_SEASONS",
    "evaluate",
    "run_forecast",
    "step1_input_length_sweep",
    "step2_calendar_comparison",
    "step3_temperature_conditions",
    "step4_generalise",
    "STEP4_TABLE_COLUMNS",
    "rotation_robustness",
    "rotation_presets",
    "cost_benefit",
    "synth_generate",
    "kde_error_curve",
]

DEFAULT_SEASON_LABELS = ("15-16", "16-17", "17-18", "18-19", "19-20")
ORIGINAL_TRAIN_SEASONS = frozenset({"15-16", "16-17", "17-18"})
ORIGINAL_TEST_SEASONS = frozenset({"18-19", "19-20"})

#: Default off-peak electrical hot water window (inclusive endpoints).
OFF_PEAK_WINDOW = ("22:30", "01:30")


# ---------------------------------------------------------------------------
# evaluation metrics


@dataclass(frozen=True)
class MetricsReport:
    """Forecast metrics over a test period.

    ``daily_error_variance`` is the population variance of the 48
    half-hour-slot mean absolute errors in MW (squared MW); the ``_pct``
    variant applies the same formula to the slot mean absolute
    percentage errors. ``half_hourly_mean_abs_error`` is the percent
    profile itself, NaN at excluded or empty slots.
    """

    mse: float
    mape: float
    daily_error_variance: float
    daily_error_variance_pct: float
    half_hourly_mean_abs_error: np.ndarray
    n_points: int
    excluded_slots: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "mse": self.mse,
            "mape": self.mape,
            "daily_error_variance": self.daily_error_variance,
            "daily_error_variance_pct": self.daily_error_variance_pct,
            "half_hourly_mean_abs_error": [
                None if math.isnan(v) else float(v) for v in self.half_hourly_mean_abs_error
            ],
            "n_points": self.n_points,
            "excluded_slots": list(self.excluded_slots),
        }


def _excluded_slot_mask(window) -> np.ndarray:
    """Boolean mask over the 48 day slots covered by a (start, end) time-of-day window.

    Endpoints are inclusive; a window whose start is after its end
    wraps across midnight (e.g. 22:30 -> 01:30).
    """
    start, end = window
    if isinstance(start, str):
        start = parse_time_of_day(start)
    if isinstance(end, str):
        end = parse_time_of_day(end)
    slot_minutes = np.arange(SLOTS_PER_DAY) * STEP_MINUTES
    if start <= end:
        return (slot_minutes >= start) & (slot_minutes <= end)
    return (slot_minutes >= start) | (slot_minutes <= end)


def evaluate(actual, predicted, times, exclusion_window=None) -> MetricsReport:
    """MSE, MAPE and daily-error-variance metrics for a forecast.

    ``times`` gives the instant of each sample (needed for the slot
    profile and the optional time-of-day exclusion, which removes the
    matching slots before every computation).
    """
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    times = np.asarray(times, dtype=np.int64)
    if actual.shape != predicted.shape or actual.shape != times.shape or actual.ndim != 1:
        raise ValueError("actual, predicted and times must be equal-length 1-D arrays")
    if actual.size == 0:
        raise DataError("nothing to evaluate")
    if np.any(actual <= 0):
        raise DataError("MAPE undefined: actual values must be positive")

    slots = slots_of_day(times)
    if exclusion_window is not None:
        excluded = _excluded_slot_mask(exclusion_window)
        keep = ~excluded[slots]
        excluded_slots = tuple(int(s) for s in np.nonzero(excluded)[0])
    else:
        keep = np.ones(actual.size, dtype=bool)
        excluded_slots = ()
    if not keep.any():
        raise DataError("exclusion window removed every sample")

    a = actual[keep]
    p = predicted[keep]
    s = slots[keep]
    err = a - p
    abs_err = np.abs(err)
    pct_err = 100.0 * abs_err / a

    mse = float(np.mean(err * err))
    mape = float(np.mean(pct_err))

    profile_pct = np.full(SLOTS_PER_DAY, np.nan)
    profile_mw = np.full(SLOTS_PER_DAY, np.nan)
    for slot in np.unique(s):
        sel = s == slot
        profile_pct[slot] = pct_err[sel].mean()
        profile_mw[slot] = abs_err[sel].mean()
    have = ~np.isnan(profile_mw)
    sigma2_mw = float(np.var(profile_mw[have]))
    sigma2_pct = float(np.var(profile_pct[have]))
    return MetricsReport(
        mse=mse,
        mape=mape,
        daily_error_variance=sigma2_mw,
        daily_error_variance_pct=sigma2_pct,
        half_hourly_mean_abs_error=profile_pct,
        n_points=int(a.size),
        excluded_slots=excluded_slots,
    )


# ---------------------------------------------------------------------------
# shared train-then-evaluate pipeline


@dataclass(frozen=True)
class ForecastRun:
    model: TrainedModel
    metrics: MetricsReport
    actual: np.ndarray
    predicted: np.ndarray
    times: np.ndarray
    train_windows: int
    test_windows: int


def run_forecast(
    load: LoadSeries,
    temp: TempSeries | None,
    spec: WindowSpec,
    cal: CalendarConfig,
    train_seasons,
    test_seasons,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    exclusion_window=None,
) -> ForecastRun:
    """Build datasets, train from scratch, and evaluate on the test split.

    ``model_cfg.input_dim`` is recomputed from the window spec, so one
    template config can serve variants with different feature rows.
    """
    train_ds, test_ds = make_dataset(load, temp, spec, cal, set(train_seasons), set(test_seasons))
    mc = replace(model_cfg, input_dim=spec.n_rows)
    model = train(train_ds, train_cfg, mc)
    predicted = predict(model, test_ds)
    actual = np.asarray(test_ds.scaler.inverse_target(test_ds.y))
    metrics = evaluate(actual, predicted, test_ds.target_times, exclusion_window)
    return ForecastRun(
        model=model,
        metrics=metrics,
        actual=actual,
        predicted=predicted,
        times=np.asarray(test_ds.target_times),
        train_windows=len(train_ds),
        test_windows=len(test_ds),
    )


# ---------------------------------------------------------------------------
# step reports


@dataclass(frozen=True)
class StepReport:
    """Uniform container for harness outputs: tabular rows plus extras.

    ``config`` echoes every resolved input (including seeds) so a
    report is reproducible from its own payload.
    """

    name: str
    config: dict
    rows: tuple
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"name": self.name, "config": self.config, "rows": list(self.rows), "extras": self.extras}


def _spec_dict(spec: WindowSpec) -> dict:
    return {
        "n_points": spec.n_points,
        "scheme": spec.scheme.value,
        "conditions": [
            {"kind": c.kind.value, "lead_hours": c.lead_hours} for c in spec.conditions
        ],
        "horizon": spec.horizon,
    }


def _model_dict(cfg: ModelConfig) -> dict:
    return {
        "cell_kind": cfg.cell_kind,
        "layer_sizes": list(cfg.layer_sizes),
        "dense_sizes": list(cfg.dense_sizes),
        "seed": cfg.seed,
    }


def _train_dict(cfg: TrainConfig) -> dict:
    return {
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "beta1": cfg.beta1,
        "beta2": cfg.beta2,
        "eps": cfg.eps,
        "gradient_clip_norm": cfg.gradient_clip_norm,
        "shuffle_seed": cfg.shuffle_seed,
    }


def _base_config(spec, cal, model_cfg, train_cfg, train_seasons, test_seasons) -> dict:
    return {
        "window": _spec_dict(spec),
        "holidays": sorted(d.isoformat() for d in cal.holidays),
        "week_start": cal.week_start,
        "model": _model_dict(model_cfg),
        "train": _train_dict(train_cfg),
        "train_seasons": sorted(train_seasons),
        "test_seasons": sorted(test_seasons),
        "seeds": {"model": model_cfg.seed, "shuffle": train_cfg.shuffle_seed},
    }


def kde_error_curve(errors, n_grid: int = 257):
    """Density and cumulative KDE curves on a grid spanning the data +/- 5 bandwidths."""
    errors = np.asarray(errors, dtype=np.float64)
    h = silverman_bandwidth(errors)
    grid = np.linspace(errors.min() - 5 * h, errors.max() + 5 * h, n_grid)
    density, cumulative = kde(errors, grid)
    return grid, density, cumulative


# ---------------------------------------------------------------------------
# steps 1-4


def step1_input_length_sweep(
    load,
    temp,
    cal,
    base_spec: WindowSpec,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_seasons,
    test_seasons,
    lengths,
    cell_kinds=("gru", "lstm"),
) -> StepReport:
    """Train one model per (history length, cell kind) and flag the error plateau.

    The plateau per kind is the first length whose MAPE is within 2%
    relative of that kind's best.
    """
    lengths = [int(n) for n in lengths]
    if not lengths or min(lengths) < 1:
        raise ConfigError("step1.lengths must be a non-empty list of n_points >= 1")
    rows = []
    for kind in cell_kinds:
        for n_points in lengths:
            spec = replace(base_spec, n_points=n_points)
            run = run_forecast(
                load, temp, spec, cal, train_seasons, test_seasons,
                replace(model_cfg, cell_kind=kind), train_cfg,
            )
            rows.append(
                {
                    "cell_kind": kind,
                    "n_points": n_points,
                    "input_hours": n_points * STEP_MINUTES / 60.0,
                    "mse": run.metrics.mse,
                    "mape": run.metrics.mape,
                    "seed": model_cfg.seed,
                    "shuffle_seed": train_cfg.shuffle_seed,
                }
            )
    plateau = {}
    for kind in cell_kinds:
        kind_rows = sorted((r for r in rows if r["cell_kind"] == kind), key=lambda r: r["n_points"])
        best = min(r["mape"] for r in kind_rows)
        plateau[kind] = next(r["n_points"] for r in kind_rows if r["mape"] <= 1.02 * best)
    config = _base_config(base_spec, cal, model_cfg, train_cfg, train_seasons, test_seasons)
    config["lengths"] = lengths
    config["cell_kinds"] = list(cell_kinds)
    return StepReport("step1", config, tuple(rows), extras={"plateau_n_points": plateau})


_SCHEME_ORDER = (DayLabelScheme.NONE, DayLabelScheme.THREE_TYPE, DayLabelScheme.EIGHT_TYPE)


def step2_calendar_comparison(
    load,
    temp,
    cal,
    base_spec: WindowSpec,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_seasons,
    test_seasons,
    schemes=_SCHEME_ORDER,
) -> StepReport:
    """Compare day-type label schemes; also returns signed-error KDE curves per scheme."""
    rows = []
    curves = {}
    for scheme in schemes:
        spec = replace(base_spec, scheme=scheme)
        run = run_forecast(load, temp, spec, cal, train_seasons, test_seasons, model_cfg, train_cfg)
        rows.append(
            {
                "scheme": scheme.value,
                "mse": run.metrics.mse,
                "mape": run.metrics.mape,
                "daily_error_variance": run.metrics.daily_error_variance,
                "seed": model_cfg.seed,
                "shuffle_seed": train_cfg.shuffle_seed,
            }
        )
        grid, density, cumulative = kde_error_curve(run.predicted - run.actual)
        curves[scheme.value] = {
            "grid": grid.tolist(),
            "density": density.tolist(),
            "cumulative": cumulative.tolist(),
        }
    config = _base_config(base_spec, cal, model_cfg, train_cfg, train_seasons, test_seasons)
    config["schemes"] = [s.value for s in schemes]
    return StepReport("step2", config, tuple(rows), extras={"kde": curves})


def step3_temperature_conditions(
    load,
    temp,
    cal,
    base_spec: WindowSpec,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_seasons,
    test_seasons,
    conditions,
    exclusion_window=None,
) -> StepReport:
    """Compare temperature-condition variants (each entry is a list of conditions).

    ``conditions`` maps a label to the condition list of one variant;
    the no-temperature and simultaneous baselines must be present.
    """
    if isinstance(conditions, dict):
        variants = list(conditions.items())
    else:
        variants = [(_condition_label(v), v) for v in conditions]
    kinds_present = {c.kind for _, conds in variants for c in _as_condition_list(conds)}
    if ConditionKind.NONE not in kinds_present or ConditionKind.SIMULTANEOUS not in kinds_present:
        raise ConfigError(
            "step3.conditions must include the no-temperature and simultaneous baselines"
        )
    rows = []
    profiles = {}
    for label, conds in variants:
        cond_list = _as_condition_list(conds)
        spec = replace(base_spec, conditions=tuple(c for c in cond_list))
        run = run_forecast(
            load, temp, spec, cal, train_seasons, test_seasons, model_cfg, train_cfg,
            exclusion_window=exclusion_window,
        )
        rows.append(
            {
                "condition": label,
                "mse": run.metrics.mse,
                "mape": run.metrics.mape,
                "daily_error_variance": run.metrics.daily_error_variance,
                "daily_error_variance_pct": run.metrics.daily_error_variance_pct,
                "seed": model_cfg.seed,
                "shuffle_seed": train_cfg.shuffle_seed,
            }
        )
        profiles[label] = [
            None if math.isnan(v) else float(v) for v in run.metrics.half_hourly_mean_abs_error
        ]
    config = _base_config(base_spec, cal, model_cfg, train_cfg, train_seasons, test_seasons)
    config["conditions"] = {label: [c.label for c in _as_condition_list(c_)] for label, c_ in variants}
    if exclusion_window is not None:
        config["exclusion_window"] = list(exclusion_window)
    return StepReport("step3", config, tuple(rows), extras={"daily_error_profiles": profiles})


def _as_condition_list(conds) -> list[TemperatureCondition]:
    if isinstance(conds, TemperatureCondition):
        return [conds]
    return list(conds)


def _condition_label(conds) -> str:
    conds = _as_condition_list(conds)
    if all(c.kind is ConditionKind.NONE for c in conds):
        return "no_temperature"
    return "+".join(c.label for c in conds)


@dataclass(frozen=True)
class StationData:
    meta: StationMeta
    load: LoadSeries
    temp: TempSeries


STEP4_TABLE_COLUMNS = tuple(
    f"{metric}_{cond}"
    for metric in ("sigma2", "mse", "mape")
    for cond in ("no_temp", "best_correl", "three_temps")
)


def step4_generalise(
    stations,
    cal,
    base_spec: WindowSpec,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_seasons,
    test_seasons,
) -> StepReport:
    """Per-station sweep, grouping and the three-condition comparison table.

    For every station: run the three lead sweeps, pick the strongest
    conditions, classify the lead pattern into a group, then train
    models with (a) no temperature, (b) the single best-correlation
    condition, (c) the group-prototype three-temperature combination.
    When (c) deduplicates to exactly (b), the run is reused and marked
    collapsed. Stations whose sweeps are undefined are skipped with a
    notice. Cross-station Pearson correlations between best-condition
    MAPE and any shared region factors are reported.
    """
    if not stations:
        raise ConfigError("step4 needs at least one station")
    rows = []
    notices = []
    sweeps_out = {}
    dispersion_out = {}
    for st in stations:
        try:
            sweeps = [lead_sweep(st.load, st.temp, k) for k in SWEEP_KINDS]
            best = best_conditions(sweeps)
        except DataError as exc:
            notices.append(f"station {st.meta.station_id} skipped: {exc}")
            continue
        group = classify_group(best)
        best_kind, best_rec = max(
            best.by_kind.items(), key=lambda kv: (kv[1].best_rho, -kv[1].best_rho_lead)
        )
        best_cond = TemperatureCondition(best_kind, best_rec.best_rho_lead)
        proto = group.prototype
        combo = (
            TemperatureCondition(ConditionKind.INSTANTANEOUS, proto[0]),
            TemperatureCondition(ConditionKind.WINDOW_MAX, proto[1]),
            TemperatureCondition(ConditionKind.WINDOW_MEAN, proto[2]),
        )
        spec_none = replace(base_spec, conditions=())
        spec_best = replace(base_spec, conditions=(best_cond,))
        spec_combo = replace(base_spec, conditions=combo)
        collapsed = spec_combo.conditions == spec_best.conditions

        run_none = run_forecast(
            st.load, st.temp, spec_none, cal, train_seasons, test_seasons, model_cfg, train_cfg
        )
        run_best = run_forecast(
            st.load, st.temp, spec_best, cal, train_seasons, test_seasons, model_cfg, train_cfg
        )
        run_combo = run_best if collapsed else run_forecast(
            st.load, st.temp, spec_combo, cal, train_seasons, test_seasons, model_cfg, train_cfg
        )
        row = {
            "station": st.meta.station_id,
            "group": group.name.lower(),
            "best_condition": best_cond.label,
            "collapsed_combination": collapsed,
            "sigma2_no_temp": run_none.metrics.daily_error_variance,
            "sigma2_best_correl": run_best.metrics.daily_error_variance,
            "sigma2_three_temps": run_combo.metrics.daily_error_variance,
            "mse_no_temp": run_none.metrics.mse,
            "mse_best_correl": run_best.metrics.mse,
            "mse_three_temps": run_combo.metrics.mse,
            "mape_no_temp": run_none.metrics.mape,
            "mape_best_correl": run_best.metrics.mape,
            "mape_three_temps": run_combo.metrics.mape,
            "seed": model_cfg.seed,
            "shuffle_seed": train_cfg.shuffle_seed,
        }
        rows.append(row)
        sweeps_out[st.meta.station_id] = {
            s.kind.value: {
                "best_rho_lead": best.by_kind[s.kind].best_rho_lead,
                "best_rho": best.by_kind[s.kind].best_rho,
                "best_r2o2_lead": best.by_kind[s.kind].best_r2o2_lead,
                "best_r2o2": best.by_kind[s.kind].best_r2o2,
            }
            for s in sweeps
        }
        load_disp = dispersion(st.load.values)
        temp_disp = dispersion(st.temp.values)
        dispersion_out[st.meta.station_id] = {
            "load": {"sigma2": load_disp.sigma2, "cqv": load_disp.cqv},
            "temperature": {"sigma2": temp_disp.sigma2, "cqv": temp_disp.cqv},
        }
    if not rows:
        raise DataError("every station was skipped; nothing to report")

    factor_corr = {}
    by_station = {st.meta.station_id: st for st in stations}
    factor_names = sorted({name for st in stations for name in st.meta.region_factors})
    for name in factor_names:
        pairs = [
            (row["mape_best_correl"], by_station[row["station"]].meta.region_factors[name])
            for row in rows
            if name in by_station[row["station"]].meta.region_factors
        ]
        if len(pairs) < 2:
            notices.append(f"factor {name}: fewer than 2 stations, correlation skipped")
            continue
        mapes, factors = zip(*pairs)
        try:
            factor_corr[name] = {"rho": pearson(mapes, factors), "n_stations": len(pairs)}
        except DataError as exc:
            notices.append(f"factor {name}: {exc}")
    config = _base_config(base_spec, cal, model_cfg, train_cfg, train_seasons, test_seasons)
    config["stations"] = [st.meta.station_id for st in stations]
    return StepReport(
        "step4",
        config,
        tuple(rows),
        extras={
            "best_conditions": sweeps_out,
            "dispersion": dispersion_out,
            "factor_correlations": factor_corr,
            "notices": notices,
        },
    )


# ---------------------------------------------------------------------------
# robustness rotation


@dataclass(frozen=True)
class RotationPlan:
    """Assignment of each season to train or test."""

    name: str
    assignments: dict

    def __post_init__(self):
        vals = set(self.assignments.values())
        if not vals <= {"train", "test"}:
            raise ValueError(f"plan {self.name}: assignments must be 'train' or 'test'")
        if "train" not in vals or "test" not in vals:
            raise ValueError(f"plan {self.name}: need at least one train and one test season")

    @property
    def train_seasons(self) -> set[str]:
        return {s for s, role in self.assignments.items() if role == "train"}

    @property
    def test_seasons(self) -> set[str]:
        return {s for s, role in self.assignments.items() if role == "test"}


_PRESET_ROLES = {
    "original": "TTTEE",
    "test1": "EETTT",
    "test2": "ETETT",
    "test3": "ETTET",
    "test4": "TETTE",
}


def rotation_presets(labels=DEFAULT_SEASON_LABELS) -> list[RotationPlan]:
    """The published five-season rotation layouts (original plus four tests)."""
    if len(labels) != 5:
        raise ValueError("rotation presets are defined for exactly 5 seasons")
    plans = []
    for name, roles in _PRESET_ROLES.items():
        plans.append(
            RotationPlan(
                name,
                {lab: ("train" if r == "T" else "test") for lab, r in zip(labels, roles)},
            )
        )
    return plans


def rotation_robustness(
    load,
    temp,
    cal,
    spec: WindowSpec,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    plans=None,
) -> StepReport:
    """Retrain from scratch under every rotation plan and report its metrics."""
    plans = rotation_presets() if plans is None else list(plans)
    rows = []
    for plan in plans:
        run = run_forecast(
            load, temp, spec, cal, plan.train_seasons, plan.test_seasons, model_cfg, train_cfg
        )
        rows.append(
            {
                "plan": plan.name,
                "train_seasons": ",".join(sorted(plan.train_seasons)),
                "test_seasons": ",".join(sorted(plan.test_seasons)),
                "mse": run.metrics.mse,
                "mape": run.metrics.mape,
                "seed": model_cfg.seed,
                "shuffle_seed": train_cfg.shuffle_seed,
            }
        )
    config = _base_config(spec, cal, model_cfg, train_cfg, set(), set())
    del config["train_seasons"], config["test_seasons"]
    config["plans"] = {p.name: p.assignments for p in plans}
    return StepReport("robustness", config, tuple(rows))


# ---------------------------------------------------------------------------
# cost-benefit


@dataclass(frozen=True)
class CostBenefitInput:
    """Inputs for the annual saving estimate.

    ``round_energy_sig_figs`` optionally rounds the error-reduction
    energy to that many significant figures before pricing, matching
    how headline numbers are usually quoted.
    """

    annual_consumption_twh: float
    mape_baseline_pct: float
    mape_method_pct: float
    tariff_dollars_per_kwh: float
    round_energy_sig_figs: int | None = None

    def __post_init__(self):
        if self.annual_consumption_twh <= 0 or self.tariff_dollars_per_kwh <= 0:
            raise ValueError("consumption and tariff must be positive")
        if not (self.mape_baseline_pct >= self.mape_method_pct >= 0):
            raise ValueError("need mape_baseline >= mape_method >= 0")
        if self.round_energy_sig_figs is not None and self.round_energy_sig_figs < 1:
            raise ValueError("round_energy_sig_figs must be >= 1")


@dataclass(frozen=True)
class CostBenefitResult:
    energy_reduction_twh: float
    saving_dollars: float


def _round_sig_figs(x: float, sig: int) -> float:
    if x == 0.0:
        return 0.0
    return round(x, -int(math.floor(math.log10(abs(x)))) + sig - 1)


def cost_benefit(inp: CostBenefitInput) -> CostBenefitResult:
    """Annual saving = consumption x MAPE reduction x tariff.

    Linear in the tariff and in the MAPE reduction when rounding is
    disabled.
    """
    energy_twh = inp.annual_consumption_twh * (inp.mape_baseline_pct - inp.mape_method_pct) / 100.0
    if inp.round_energy_sig_figs is not None:
        energy_twh = _round_sig_figs(energy_twh, inp.round_energy_sig_figs)
    saving = energy_twh * 1e9 * inp.tariff_dollars_per_kwh  # 1 TWh = 1e9 kWh
    return CostBenefitResult(energy_reduction_twh=energy_twh, saving_dollars=saving)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for seeded synthetic load/temperature with a planted lead.

    Load follows a twin-peaked daily shape scaled down on weekends,
    plus an off-peak hot-water uptick between ``uptick_window`` whose
    magnitude jitters day to day, a multiplicative coupling to the
    normalised temperature ``planted_lag_hours`` earlier, and Gaussian
    noise. Temperature is a seasonal + daily sinusoid plus a smooth
    AR(1) anomaly, so the planted lead is identifiable from data.
    """

    seasons: int = 5
    start_year: int = 2015
    base_mw: float = 10.0
    duck_morning_amp: float = 0.25
    duck_evening_amp: float = 0.40
    weekend_factor: float = 0.88
    uptick_window: tuple = OFF_PEAK_WINDOW
    uptick_mw: float = 1.5
    uptick_daily_jitter: float = 0.5
    temp_mean_c: float = 18.0
    temp_daily_amp_c: float = 4.0
    temp_seasonal_amp_c: float = 5.0
    temp_anomaly_std_c: float = 3.0
    temp_anomaly_phi: float = 0.92
    planted_lag_hours: float = 5.0
    coupling_gain: float = 0.15
    noise_sigma_mw: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.seasons < 1:
            raise ValueError("seasons must be >= 1")
        if self.base_mw <= 0:
            raise ValueError("base_mw must be positive")
        if round(self.planted_lag_hours * 2) != self.planted_lag_hours * 2 or not (
            0 <= self.planted_lag_hours <= 24
        ):
            raise ValueError("planted_lag_hours must be a multiple of 0.5 in [0, 24]")
        if not (0 <= self.temp_anomaly_phi < 1):
            raise ValueError("temp_anomaly_phi must lie in [0, 1)")
        if self.noise_sigma_mw < 0 or self.temp_anomaly_std_c < 0:
            raise ValueError("spread parameters must be non-negative")

    @property
    def season_labels(self) -> tuple:
        return tuple(
            f"{(self.start_year + i) % 100:02d}-{(self.start_year + i + 1) % 100:02d}"
            for i in range(self.seasons)
        )


def _duck_profile(hours: np.ndarray, spec: SynthSpec) -> np.ndarray:
    morning = spec.duck_morning_amp * np.exp(-0.5 * ((hours - 8.0) / 1.8) ** 2)
    evening = spec.duck_evening_amp * np.exp(-0.5 * ((hours - 18.5) / 2.2) ** 2)
    return 1.0 + morning + evening


def synth_generate(spec: SynthSpec, station_id: str = "synth") -> tuple[LoadSeries, TempSeries, dict]:
    """Deterministic synthetic (load, temperature, ground truth) triple.

    The temperature series starts 24 h before the load so every lead up
    to 24 h is defined over the full load span. The ground-truth record
    carries the planted lead, the implied group prototype, the uptick
    window and the realised signal-to-noise ratio.
    """
    rng = np.random.default_rng(spec.seed)
    start = instant_from_datetime(datetime(spec.start_year, 10, 1))
    end = instant_from_datetime(datetime(spec.start_year + spec.seasons, 4, 1))  # exclusive
    load_times = np.arange(start, end, STEP_MINUTES, dtype=np.int64)
    lead_margin = 24 * 60
    temp_times = np.arange(start - lead_margin, end, STEP_MINUTES, dtype=np.int64)

    # temperature: seasonal + daily cycles + stationary AR(1) anomaly
    hour_of_day = (temp_times % (24 * 60)) / 60.0
    jan1 = instant_from_datetime(datetime(spec.start_year, 1, 1))
    year_frac = (temp_times - jan1) / (365.25 * 24 * 60)  # peak mid-January (southern summer)
    seasonal = spec.temp_seasonal_amp_c * np.cos(2 * np.pi * (year_frac - 15.0 / 365.25))
    daily = spec.temp_daily_amp_c * np.cos(2 * np.pi * (hour_of_day - 15.0) / 24.0)
    eps = rng.standard_normal(temp_times.size)
    anomaly = np.empty(temp_times.size)
    innov = spec.temp_anomaly_std_c * np.sqrt(max(1.0 - spec.temp_anomaly_phi**2, 0.0))
    anomaly[0] = spec.temp_anomaly_std_c * eps[0]
    for i in range(1, temp_times.size):
        anomaly[i] = spec.temp_anomaly_phi * anomaly[i - 1] + innov * eps[i]
    temp_values = spec.temp_mean_c + seasonal + daily + anomaly

    # normalised temperature at the planted lead, aligned to load times
    scale = math.sqrt(
        spec.temp_daily_amp_c**2 / 2 + spec.temp_seasonal_amp_c**2 / 2 + spec.temp_anomaly_std_c**2
    )
    lag_samples = int(round(spec.planted_lag_hours * 60 / STEP_MINUTES))
    offset = lead_margin // STEP_MINUTES  # load_times[i] == temp_times[i + offset]
    lagged = temp_values[offset - lag_samples : offset - lag_samples + load_times.size]
    norm_temp = (lagged - spec.temp_mean_c) / scale if scale > 0 else np.zeros_like(lagged)

    hours = (load_times % (24 * 60)) / 60.0
    duck = _duck_profile(hours, spec)
    weekday = (load_times // (24 * 60) + 3) % 7  # 1970-01-01 was a Thursday; Mon = 0
    weekly = np.where(weekday >= 5, spec.weekend_factor, 1.0)

    shape = spec.base_mw * duck * weekly
    signal = shape * spec.coupling_gain * norm_temp

    # uptick: constant block inside the window, magnitude jittered per night
    excl = _excluded_slot_mask(spec.uptick_window)
    in_window = excl[slots_of_day(load_times)]
    block_day = (load_times - 120) // (24 * 60)  # 2 h shift keeps one night in one block
    uniq_blocks, block_inv = np.unique(block_day, return_inverse=True)
    jitter = 1.0 + spec.uptick_daily_jitter * (2.0 * rng.random(uniq_blocks.size) - 1.0)
    uptick = np.where(in_window, spec.uptick_mw * jitter[block_inv], 0.0)

    noise = spec.noise_sigma_mw * rng.standard_normal(load_times.size)
    load_values = shape + signal + uptick + noise

    nonpos = load_values <= 0
    if nonpos.mean() > 0.005:
        raise DataError(
            f"synthetic spec produced {nonpos.sum()} non-positive load points "
            f"({100 * nonpos.mean():.2f}%)"
        )
    load_values = np.maximum(load_values, 0.01 * spec.base_mw)

    proto_triple = (spec.planted_lag_hours, spec.planted_lag_hours, 2 * spec.planted_lag_hours)
    d1 = sum(abs(a - b) for a, b in zip(proto_triple, Group.GROUP1.prototype))
    d2 = sum(abs(a - b) for a, b in zip(proto_triple, Group.GROUP2.prototype))
    signal_std = float(np.std(signal))
    truth = {
        "seed": spec.seed,
        "planted_lag_hours": spec.planted_lag_hours,
        "prototype_leads": list(proto_triple),
        "group": (Group.GROUP1 if d1 <= d2 else Group.GROUP2).name.lower(),
        "uptick_window": list(spec.uptick_window),
        "signal_std_mw": signal_std,
        "noise_sigma_mw": spec.noise_sigma_mw,
        "snr": signal_std / spec.noise_sigma_mw if spec.noise_sigma_mw > 0 else float("inf"),
        "season_labels": list(spec.season_labels),
        "load_start": instant_to_iso(int(load_times[0])),
        "load_end": instant_to_iso(int(load_times[-1])),
        "n_points": int(load_times.size),
    }
    load = LoadSeries(station_id, load_times, load_values)
    temp = TempSeries(None, temp_times, temp_values)
    return load, temp, truth
