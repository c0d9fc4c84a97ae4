"""Command-line front end.

One command per invocation::

    loadcast <command> --config experiment.json [--out-root DIR] [KEY=VALUE ...]

Commands: synth, ingest, sweep, train, evaluate, step1, step2, step3,
step4, robustness, cost-benefit. Configuration lives in a single JSON
file (schema documented in the README); ``KEY=VALUE`` arguments
override dotted paths, e.g. ``train.epochs=10``. Every run writes its
artifacts into a fresh timestamped subdirectory of the output root
(--out-root, else $LOADCAST_OUT, else config output_root, else ./runs)
and never touches previous runs. Payload files contain no timestamps,
so reruns with equal configs and seeds are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
divergence during training.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace
from datetime import date
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DivergenceError
from .experiments import (
    CostBenefitInput,
    RotationPlan,
    StationData,
    SynthSpec,
    cost_benefit,
    evaluate,
    rotation_presets,
    rotation_robustness,
    run_forecast,
    step1_input_length_sweep,
    step2_calendar_comparison,
    step3_temperature_conditions,
    step4_generalise,
    synth_generate,
)
from .features import (
    CalendarConfig,
    ConditionKind,
    DayLabelScheme,
    TemperatureCondition,
    WindowSpec,
    make_eval_dataset,
)
from .ingest import (
    StationMeta,
    align_series,
    extract_point_series,
    interpolate_temporal,
    parse_load_csv,
    parse_station_file,
    parse_temp_grid,
    parse_temp_point_csv,
    write_load_csv,
    write_temp_point_csv,
)
from .neural import ModelConfig, TrainConfig, load_model, predict, save_model, train
from .stats import SWEEP_KINDS, best_conditions, classify_group, lead_sweep, write_sweep_csv
from .timebase import SLOTS_PER_DAY, STEP_MINUTES, instant_to_iso

COMMANDS = (
    "ingest",
    "sweep",
    "train",
    "evaluate",
    "step1",
    "step2",
    "step3",
    "step4",
    "robustness",
    "cost-benefit",
    "synth",
)


# ---------------------------------------------------------------------------
# config access with field-path diagnostics


class _Cfg:
    """Dict wrapper whose getters raise ConfigError naming the field path."""

    def __init__(self, data: dict, prefix: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(f"{prefix or 'config'}: expected an object")
        self.data = data
        self.prefix = prefix

    def _path(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default=None):
        return self.data.get(key, default)

    def section(self, key: str, required: bool = True) -> "_Cfg | None":
        if key not in self.data:
            if required:
                raise ConfigError(f"{self._path(key)}: missing required section")
            return None
        return _Cfg(self._require(key, dict), self._path(key))

    def _require(self, key: str, types, default=...):
        if key not in self.data:
            if default is ...:
                raise ConfigError(f"{self._path(key)}: missing required value")
            return default
        value = self.data[key]
        if not isinstance(value, types) or isinstance(value, bool) and types is not bool:
            names = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
            raise ConfigError(f"{self._path(key)}: expected {names}, got {value!r}")
        return value

    def str_(self, key: str, default=...) -> str:
        return self._require(key, str, default)

    def int_(self, key: str, default=..., minimum=None) -> int:
        value = self._require(key, int, default)
        if minimum is not None and value is not None and value < minimum:
            raise ConfigError(f"{self._path(key)}: must be >= {minimum}, got {value}")
        return value

    def float_(self, key: str, default=...) -> float:
        value = self._require(key, (int, float), default)
        return None if value is None else float(value)

    def list_(self, key: str, default=...) -> list:
        return self._require(key, list, default)

    def choice(self, key: str, choices, default=...) -> str:
        value = self.str_(key, default)
        if value not in choices:
            raise ConfigError(f"{self._path(key)}: expected one of {sorted(choices)}, got {value!r}")
        return value


def _apply_override(data: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected KEY=VALUE")
    key, _, raw = item.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings are allowed
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: {part} is not an object")
    node[parts[-1]] = value


def load_config(path: str | None, overrides) -> _Cfg:
    data: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    for item in overrides:
        _apply_override(data, item)
    return _Cfg(data)


# ---------------------------------------------------------------------------
# config -> domain objects

_SCHEMES = {s.value: s for s in DayLabelScheme}
_KINDS = {k.value: k for k in ConditionKind}


def _parse_condition(obj, path: str) -> TemperatureCondition:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object with 'kind' and 'lead_hours'")
    sub = _Cfg(obj, path)
    kind = sub.choice("kind", _KINDS)
    lead = sub.float_("lead_hours", 0.0)
    try:
        return TemperatureCondition(_KINDS[kind], lead)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_window_spec(cfg: _Cfg) -> WindowSpec:
    sec = cfg.section("window")
    conditions = []
    for i, obj in enumerate(sec.list_("conditions", [])):
        conditions.append(_parse_condition(obj, f"window.conditions[{i}]"))
    try:
        return WindowSpec(
            n_points=sec.int_("n_points", 32, minimum=1),
            scheme=_SCHEMES[sec.choice("scheme", _SCHEMES, "eight")],
            conditions=tuple(conditions),
            horizon=sec.int_("horizon", 1),
        )
    except ValueError as exc:
        raise ConfigError(f"window: {exc}") from None


def build_calendar(cfg: _Cfg) -> CalendarConfig:
    sec = cfg.section("calendar", required=False)
    if sec is None:
        return CalendarConfig()
    holidays = set()
    for i, text in enumerate(sec.list_("holidays", [])):
        try:
            holidays.add(date.fromisoformat(text))
        except (TypeError, ValueError):
            raise ConfigError(f"calendar.holidays[{i}]: bad date {text!r}") from None
    try:
        return CalendarConfig(frozenset(holidays), sec.choice("week_start", ("monday", "sunday"), "monday"))
    except ValueError as exc:
        raise ConfigError(f"calendar: {exc}") from None


def build_model_config(cfg: _Cfg, input_dim: int = 1) -> ModelConfig:
    sec = cfg.section("model", required=False)
    if sec is None:
        return ModelConfig(cell_kind="gru", input_dim=input_dim)
    try:
        return ModelConfig(
            cell_kind=sec.choice("cell_kind", ("gru", "lstm"), "gru"),
            input_dim=input_dim,
            layer_sizes=tuple(sec.list_("layer_sizes", [64, 64, 64])),
            dense_sizes=tuple(sec.list_("dense_sizes", [16, 1])),
            seed=sec.int_("seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def build_train_config(cfg: _Cfg) -> TrainConfig:
    sec = cfg.section("train", required=False)
    if sec is None:
        return TrainConfig()
    try:
        return TrainConfig(
            epochs=sec.int_("epochs", 100, minimum=0),
            batch_size=sec.int_("batch_size", 64, minimum=1),
            learning_rate=sec.float_("learning_rate", 1e-3),
            beta1=sec.float_("beta1", 0.9),
            beta2=sec.float_("beta2", 0.999),
            eps=sec.float_("eps", 1e-8),
            gradient_clip_norm=sec.float_("gradient_clip_norm", 5.0),
            shuffle_seed=sec.int_("shuffle_seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from None


def build_seasons(cfg: _Cfg) -> tuple[set, set]:
    sec = cfg.section("seasons")
    trains = set(sec.list_("train"))
    tests = set(sec.list_("test"))
    if not trains or not tests:
        raise ConfigError("seasons: train and test lists must be non-empty")
    if trains & tests:
        raise ConfigError(f"seasons: {sorted(trains & tests)} appear in both train and test")
    return trains, tests


def load_station_series(cfg: _Cfg, section_name: str = "station"):
    """Load + temperature series for one station section."""
    sec = cfg.section(section_name)
    station_id = sec.str_("id", "station")
    load_path = sec.str_("load_csv")
    load = parse_load_csv(load_path, station_id)
    if sec.has("temp_csv"):
        temp = parse_temp_point_csv(sec.str_("temp_csv"))
    elif sec.has("temp_grid"):
        grid = parse_temp_grid(sec.str_("temp_grid"))
        grid = interpolate_temporal(grid, STEP_MINUTES)
        temp = extract_point_series(grid, sec.float_("lat"), sec.float_("lon"))
    else:
        raise ConfigError(f"{section_name}: needs either temp_csv or temp_grid (+lat/lon)")
    return load, temp


# ---------------------------------------------------------------------------
# artifact writing


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and obj != obj:  # NaN has no JSON spelling
        return None
    return obj


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonify(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rows_csv(path, rows) -> None:
    rows = list(rows)
    if not rows:
        return
    columns = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(row.get(c)) for c in columns])


def _csv_cell(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating, np.integer)):
        return repr(value.item())
    return value


def make_run_dir(root: Path, command: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = root / f"{command}-{stamp}"
    candidate = base
    suffix = 1
    while candidate.exists():
        candidate = Path(f"{base}-{suffix}")
        suffix += 1
    candidate.mkdir(parents=True)
    return candidate


# ---------------------------------------------------------------------------
# commands


def _cmd_synth(cfg: _Cfg, out: Path) -> None:
    sec = cfg.section("synth", required=False)
    kwargs = {}
    if sec is not None:
        fields = {
            "seasons": sec.int_("seasons", 5, minimum=1),
            "start_year": sec.int_("start_year", 2015),
            "base_mw": sec.float_("base_mw", 10.0),
            "duck_morning_amp": sec.float_("duck_morning_amp", 0.25),
            "duck_evening_amp": sec.float_("duck_evening_amp", 0.40),
            "weekend_factor": sec.float_("weekend_factor", 0.88),
            "uptick_mw": sec.float_("uptick_mw", 1.5),
            "uptick_daily_jitter": sec.float_("uptick_daily_jitter", 0.5),
            "temp_mean_c": sec.float_("temp_mean_c", 18.0),
            "temp_daily_amp_c": sec.float_("temp_daily_amp_c", 4.0),
            "temp_seasonal_amp_c": sec.float_("temp_seasonal_amp_c", 5.0),
            "temp_anomaly_std_c": sec.float_("temp_anomaly_std_c", 3.0),
            "temp_anomaly_phi": sec.float_("temp_anomaly_phi", 0.92),
            "planted_lag_hours": sec.float_("planted_lag_hours", 5.0),
            "coupling_gain": sec.float_("coupling_gain", 0.15),
            "noise_sigma_mw": sec.float_("noise_sigma_mw", 0.3),
            "seed": sec.int_("seed", 0),
        }
        if sec.has("uptick_window"):
            window = sec.list_("uptick_window")
            if len(window) != 2:
                raise ConfigError("synth.uptick_window: expected [start, end]")
            fields["uptick_window"] = tuple(window)
        kwargs = fields
    try:
        spec = SynthSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"synth: {exc}") from None
    load, temp, truth = synth_generate(spec)
    write_load_csv(out / "load.csv", load)
    write_temp_point_csv(out / "temp.csv", temp)
    write_json(out / "ground_truth.json", truth)
    write_json(out / "config_resolved.json", {"synth": kwargs or "defaults"})
    print(f"wrote {len(load)} load and {len(temp)} temperature points to {out}")


def _cmd_ingest(cfg: _Cfg, out: Path) -> None:
    load, temp = load_station_series(cfg)
    load_al, temp_al = align_series(load, temp)
    write_load_csv(out / "aligned_load.csv", load_al)
    write_temp_point_csv(out / "aligned_temp.csv", temp_al)
    write_json(
        out / "summary.json",
        {
            "station_id": load_al.station_id,
            "n_points": len(load_al),
            "start": instant_to_iso(int(load_al.times[0])),
            "end": instant_to_iso(int(load_al.times[-1])),
            "n_gaps": int(load_al.gaps.size),
        },
    )
    print(f"aligned {len(load_al)} samples -> {out}")


def _cmd_sweep(cfg: _Cfg, out: Path) -> None:
    load, temp = load_station_series(cfg)
    sweeps = [lead_sweep(load, temp, kind) for kind in SWEEP_KINDS]
    for sweep in sweeps:
        write_sweep_csv(out / f"sweep_{sweep.kind.value}.csv", sweep)
    best = best_conditions(sweeps)
    group = classify_group(best)
    write_json(
        out / "best_conditions.json",
        {
            "by_kind": {
                kind.value: {
                    "best_rho_lead": kb.best_rho_lead,
                    "best_rho": kb.best_rho,
                    "best_r2o2_lead": kb.best_r2o2_lead,
                    "best_r2o2": kb.best_r2o2,
                }
                for kind, kb in best.by_kind.items()
            },
            "group": group.name.lower(),
            "group_prototype_leads": list(group.prototype),
            "n_points": sweeps[0].n_points,
        },
    )
    print(f"sweep complete ({sweeps[0].n_points} common samples) -> {out}")


def _cmd_train(cfg: _Cfg, out: Path) -> None:
    load, temp = load_station_series(cfg)
    spec = build_window_spec(cfg)
    cal = build_calendar(cfg)
    trains, tests = build_seasons(cfg)
    model_cfg = build_model_config(cfg)
    train_cfg = build_train_config(cfg)
    run = run_forecast(load, temp, spec, cal, trains, tests, model_cfg, train_cfg)
    save_model(out / "model.ckpt", run.model)
    write_rows_csv(
        out / "loss_trace.csv",
        [{"epoch": i, "loss": v} for i, v in enumerate(run.model.loss_trace)],
    )
    write_json(
        out / "train_report.json",
        {
            "train_windows": run.train_windows,
            "test_windows": run.test_windows,
            "final_loss": run.model.loss_trace[-1] if run.model.loss_trace else None,
            "test_metrics": run.metrics.to_json_dict(),
            "seeds": {"model": model_cfg.seed, "shuffle": train_cfg.shuffle_seed},
        },
    )
    print(f"trained on {run.train_windows} windows; test MAPE {run.metrics.mape:.3f}% -> {out}")


def _cmd_evaluate(cfg: _Cfg, out: Path) -> None:
    sec = cfg.section("evaluate")
    model = load_model(sec.str_("checkpoint"))
    load, temp = load_station_series(cfg)
    spec = build_window_spec(cfg)
    cal = build_calendar(cfg)
    seasons = set(sec.list_("seasons", None) or cfg.section("seasons").list_("test"))
    exclusion = None
    if sec.has("exclusion_window"):
        window = sec.list_("exclusion_window")
        if len(window) != 2:
            raise ConfigError("evaluate.exclusion_window: expected [start, end]")
        exclusion = tuple(window)
    if model.scaler is None:
        raise DataError("checkpoint has no scaler; cannot evaluate in MW")
    ds = make_eval_dataset(load, temp, spec, cal, seasons, model.scaler)
    predicted = predict(model, ds)
    actual = np.asarray(ds.scaler.inverse_target(ds.y))
    metrics = evaluate(actual, predicted, ds.target_times, exclusion)
    write_json(out / "metrics.json", metrics.to_json_dict())
    write_rows_csv(
        out / "error_profile.csv",
        [
            {
                "slot": s,
                "time_of_day": f"{s * STEP_MINUTES // 60:02d}:{s * STEP_MINUTES % 60:02d}",
                "mean_abs_error_pct": metrics.half_hourly_mean_abs_error[s],
            }
            for s in range(SLOTS_PER_DAY)
        ],
    )
    write_rows_csv(
        out / "predictions.csv",
        [
            {"timestamp": instant_to_iso(int(t)), "actual_mw": a, "predicted_mw": p}
            for t, a, p in zip(ds.target_times, actual, predicted)
        ],
    )
    print(f"evaluated {metrics.n_points} points: MAPE {metrics.mape:.3f}% -> {out}")


def _step_common(cfg: _Cfg):
    load, temp = load_station_series(cfg)
    return (
        load,
        temp,
        build_calendar(cfg),
        build_window_spec(cfg),
        build_model_config(cfg),
        build_train_config(cfg),
        *build_seasons(cfg),
    )


def _write_step_report(out: Path, report) -> None:
    write_json(out / "report.json", report.to_json_dict())
    write_rows_csv(out / "rows.csv", report.rows)


def _cmd_step1(cfg: _Cfg, out: Path) -> None:
    load, temp, cal, spec, mc, tc, trains, tests = _step_common(cfg)
    sec = cfg.section("step1")
    lengths = sec.list_("lengths")
    kinds = tuple(sec.list_("cell_kinds", ["gru", "lstm"]))
    for kind in kinds:
        if kind not in ("gru", "lstm"):
            raise ConfigError(f"step1.cell_kinds: unknown cell kind {kind!r}")
    report = step1_input_length_sweep(load, temp, cal, spec, mc, tc, trains, tests, lengths, kinds)
    _write_step_report(out, report)
    print(f"step1: {len(report.rows)} runs, plateau {report.extras['plateau_n_points']} -> {out}")


def _cmd_step2(cfg: _Cfg, out: Path) -> None:
    load, temp, cal, spec, mc, tc, trains, tests = _step_common(cfg)
    sec = cfg.section("step2", required=False)
    names = sec.list_("schemes", ["none", "three", "eight"]) if sec else ["none", "three", "eight"]
    schemes = []
    for name in names:
        if name not in _SCHEMES:
            raise ConfigError(f"step2.schemes: unknown scheme {name!r}")
        schemes.append(_SCHEMES[name])
    report = step2_calendar_comparison(load, temp, cal, spec, mc, tc, trains, tests, schemes)
    _write_step_report(out, report)
    for name, curve in report.extras["kde"].items():
        write_rows_csv(
            out / f"kde_{name}.csv",
            [
                {"error_mw": g, "density": d, "cumulative": c}
                for g, d, c in zip(curve["grid"], curve["density"], curve["cumulative"])
            ],
        )
    print(f"step2: {len(report.rows)} schemes -> {out}")


def _cmd_step3(cfg: _Cfg, out: Path) -> None:
    load, temp, cal, spec, mc, tc, trains, tests = _step_common(cfg)
    sec = cfg.section("step3")
    variants = {}
    raw = sec.raw("conditions")
    if not isinstance(raw, dict) or not raw:
        raise ConfigError("step3.conditions: expected a non-empty object of label -> condition list")
    for label, cond_list in raw.items():
        if not isinstance(cond_list, list):
            raise ConfigError(f"step3.conditions.{label}: expected a list of conditions")
        variants[label] = [
            _parse_condition(obj, f"step3.conditions.{label}[{i}]") for i, obj in enumerate(cond_list)
        ]
    exclusion = tuple(sec.list_("exclusion_window")) if sec.has("exclusion_window") else None
    report = step3_temperature_conditions(
        load, temp, cal, spec, mc, tc, trains, tests, variants, exclusion_window=exclusion
    )
    _write_step_report(out, report)
    profiles = report.extras["daily_error_profiles"]
    write_rows_csv(
        out / "daily_error_profiles.csv",
        [
            {"slot": s, **{label: profiles[label][s] for label in profiles}}
            for s in range(SLOTS_PER_DAY)
        ],
    )
    print(f"step3: {len(report.rows)} conditions -> {out}")


def _cmd_step4(cfg: _Cfg, out: Path) -> None:
    cal = build_calendar(cfg)
    spec = build_window_spec(cfg)
    mc = build_model_config(cfg)
    tc = build_train_config(cfg)
    trains, tests = build_seasons(cfg)
    entries = cfg.list_("stations")
    if not entries:
        raise ConfigError("stations: need at least one station entry")
    meta_by_id = {}
    if cfg.has("stations_file"):
        for meta in parse_station_file(cfg.str_("stations_file")):
            meta_by_id[meta.station_id] = meta
    stations = []
    for i, entry in enumerate(entries):
        sub = _Cfg(entry if isinstance(entry, dict) else {}, f"stations[{i}]")
        if not isinstance(entry, dict):
            raise ConfigError(f"stations[{i}]: expected an object")
        sid = sub.str_("id")
        load = parse_load_csv(sub.str_("load_csv"), sid)
        temp = parse_temp_point_csv(sub.str_("temp_csv"))
        meta = meta_by_id.get(sid)
        factors = {k: float(v) for k, v in sub.raw("factors", {}).items()}
        if meta is None:
            meta = StationMeta(sid, sub.float_("lat", 0.0), sub.float_("lon", 0.0), factors)
        elif factors:
            meta = StationMeta(meta.station_id, meta.lat, meta.lon, {**meta.region_factors, **factors})
        stations.append(StationData(meta, load, temp))
    report = step4_generalise(stations, cal, spec, mc, tc, trains, tests)
    _write_step_report(out, report)
    print(f"step4: {len(report.rows)} stations -> {out}")


def _cmd_robustness(cfg: _Cfg, out: Path) -> None:
    load, temp, cal, spec, mc, tc, _, _ = _step_common(cfg)
    sec = cfg.section("robustness", required=False)
    plans = None
    if sec is not None and sec.has("plans"):
        raw = sec.raw("plans")
        if not isinstance(raw, dict):
            raise ConfigError("robustness.plans: expected an object of name -> {season: role}")
        plans = []
        for name, assignments in raw.items():
            if not isinstance(assignments, dict):
                raise ConfigError(f"robustness.plans.{name}: expected season -> train|test object")
            try:
                plans.append(RotationPlan(name, dict(assignments)))
            except ValueError as exc:
                raise ConfigError(f"robustness.plans.{name}: {exc}") from None
    report = rotation_robustness(load, temp, cal, spec, mc, tc, plans)
    _write_step_report(out, report)
    print(f"robustness: {len(report.rows)} plans -> {out}")


def _cmd_cost_benefit(cfg: _Cfg, out: Path) -> None:
    sec = cfg.section("cost_benefit")
    try:
        inp = CostBenefitInput(
            annual_consumption_twh=sec.float_("annual_consumption_twh"),
            mape_baseline_pct=sec.float_("mape_baseline_pct"),
            mape_method_pct=sec.float_("mape_method_pct"),
            tariff_dollars_per_kwh=sec.float_("tariff_dollars_per_kwh"),
            round_energy_sig_figs=sec.int_("round_energy_sig_figs", None),
        )
    except ValueError as exc:
        raise ConfigError(f"cost_benefit: {exc}") from None
    result = cost_benefit(inp)
    write_json(
        out / "cost_benefit.json",
        {
            "input": {
                "annual_consumption_twh": inp.annual_consumption_twh,
                "mape_baseline_pct": inp.mape_baseline_pct,
                "mape_method_pct": inp.mape_method_pct,
                "tariff_dollars_per_kwh": inp.tariff_dollars_per_kwh,
                "round_energy_sig_figs": inp.round_energy_sig_figs,
            },
            "energy_reduction_twh": result.energy_reduction_twh,
            "saving_dollars": result.saving_dollars,
            "saving_millions": result.saving_dollars / 1e6,
        },
    )
    print(
        f"energy reduction {result.energy_reduction_twh:g} TWh/yr, "
        f"saving ${result.saving_dollars / 1e6:.2f} M/yr -> {out}"
    )


_HANDLERS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "sweep": _cmd_sweep,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "step1": _cmd_step1,
    "step2": _cmd_step2,
    "step3": _cmd_step3,
    "step4": _cmd_step4,
    "robustness": _cmd_robustness,
    "cost-benefit": _cmd_cost_benefit,
}


def run(command: str, config_path: str | None, overrides=(), out_root: str | None = None) -> Path:
    """Execute one command; returns the run directory. Raises on failure."""
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command {command!r}; expected one of {sorted(_HANDLERS)}")
    cfg = load_config(config_path, overrides)
    root = Path(out_root or os.environ.get("LOADCAST_OUT") or cfg.raw("output_root") or "runs")
    out = make_run_dir(root, command)
    _HANDLERS[command](cfg, out)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="loadcast",
        description="Multi-factor recurrent load forecasting: data prep, correlation sweeps, "
        "training and the staged evaluation studies.",
    )
    parser.add_argument("command", choices=sorted(_HANDLERS))
    parser.add_argument("--config", "-c", help="JSON experiment configuration")
    parser.add_argument("--out-root", help="output root (default $LOADCAST_OUT or ./runs)")
    parser.add_argument(
        "overrides",
        nargs="*",
        help="dotted-path config overrides, e.g. train.epochs=10 window.scheme=eight",
    )
    args = parser.parse_intermixed_args(argv)
    try:
        run(args.command, args.config, args.overrides, args.out_root)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return 4
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
