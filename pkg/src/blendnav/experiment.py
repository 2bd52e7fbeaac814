"""Headless experiment harness: config files, seeded runs, sweeps, summaries.

A config plus a seed fully determines every output byte.  Per-tick metrics
are written as comma-separated rows under a schema header; run summaries and
cell metadata ride along as comment lines so a metrics file is self-
describing.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelConfig
from .errors import ConfigError
from .gp import KernelParams
from .interaction import AttractionParams, CooperationParams
from .planner import PlannerConfig, SessionConfig
from .service import ScriptedConsole, SessionResult, TeleopSession, run_session
from .world import OperatorScript, Scenario, World, scripted_command, step_robot

METRICS_SCHEMA = "blendnav.run_metrics.v1"
MANIFEST_SCHEMA = "blendnav.manifest.v1"
SUMMARY_SCHEMA = "blendnav.summary.v1"

ROW_FIELDS = ("tick", "time", "x", "y", "theta", "operator_weight",
              "robot_weight", "operator_pred_std", "tracking_error",
              "min_clearance", "fallback")
SUMMARY_FIELDS = ("completed", "completion_tick", "path_length",
                  "mean_clearance", "mean_operator_weight", "mean_tracking_error",
                  "fallback_fraction", "failed")


@dataclass(frozen=True)
class ChannelSettings:
    """File-facing channel keys (seconds / probability)."""

    base_delay_s: float = 0.0
    jitter_s: float = 0.0
    drop: float = 0.0

    def to_config(self, direction: str) -> ChannelConfig:
        return ChannelConfig(base_delay=self.base_delay_s, delay_jitter=self.jitter_s,
                             drop_probability=self.drop, direction=direction)


@dataclass(frozen=True)
class SweepSettings:
    drop: tuple = (0.0,)
    base_delay_s: tuple = (0.0,)
    repetitions: int = 1


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    scenario: Scenario
    operator_kernel: KernelParams
    robot_kernel: KernelParams
    agent_kernel: KernelParams
    attraction: AttractionParams
    cooperation: CooperationParams
    planner: PlannerConfig
    uplink: ChannelSettings
    downlink: ChannelSettings
    robot_goal_noise: float
    history_window: int
    max_ticks: int
    sweep: SweepSettings | None


_DEFAULTS = {
    "scenario": {
        "robot_start": [0.0, 0.0, 0.0],
        "goal": None,
        "goal_radius": 0.3,
        "v_max": 1.0,
        "dt": 0.05,
        "agents": [],
        "agent_noise_std": 0.0,
        "robot_obs_noise_std": 0.0,
        "agent_obs_noise_std": 0.0,
        "script": {
            "kind": "silent",
            "waypoints": [],
            "noise_std": 0.0,
            "v_max": 1.0,
            "waypoint_radius": 0.25,
            "cutoff_tick": None,
        },
    },
    "kernels": {
        "operator": {"signal_variance": 0.5, "length_scale": 1.0, "noise_variance": 1e-3},
        "robot": {"signal_variance": 2.0, "length_scale": 1.2, "noise_variance": 1e-4},
        "agent": {"signal_variance": 2.0, "length_scale": 1.2, "noise_variance": 1e-3},
    },
    "interaction": {
        "attraction_sigma": [[0.02, 0.0], [0.0, 0.02]],
        "cooperation_strength": 0.9,
        "cooperation_radius": 0.5,
    },
    "planner": {"horizon": 10, "sample_count": 120, "refine_iterations": 4},
    "session": {"robot_goal_noise": 0.05, "history_window": 48},
    "uplink": {"base_delay_s": 0.0, "jitter_s": 0.0, "drop": 0.0},
    "downlink": {"base_delay_s": 0.0, "jitter_s": 0.0, "drop": 0.0},
    "run": {"max_ticks": 2000},
    "sweep": None,
}


def _merge(defaults, given, path):
    """Defaults overlaid with given values; unknown keys are an error."""
    if not isinstance(given, dict):
        raise ConfigError(f"expected an object at {path}", key=path)
    unknown = set(given) - set(defaults)
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{path}.{k}'" if path else f"unknown key '{k}'",
                          key=f"{path}.{k}" if path else k)
    out = {}
    for k, dv in defaults.items():
        sub = f"{path}.{k}" if path else k
        if k not in given:
            out[k] = dv
        elif isinstance(dv, dict) and dv is not None:
            out[k] = _merge(dv, given[k], sub)
        else:
            out[k] = given[k]
    return out


def _number(raw, key, lo=None, hi=None):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {raw!r}", key=key)
    v = float(raw)
    if lo is not None and v < lo or hi is not None and v > hi:
        raise ConfigError(f"'{key}' must be in [{lo}, {hi}], got {v}", key=key)
    return v


def _integer(raw, key, lo=None):
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(f"'{key}' must be an integer, got {raw!r}", key=key)
    if lo is not None and raw < lo:
        raise ConfigError(f"'{key}' must be >= {lo}, got {raw}", key=key)
    return raw


def _kernel(d, key) -> KernelParams:
    return KernelParams(
        signal_variance=_number(d["signal_variance"], f"{key}.signal_variance"),
        length_scale=_number(d["length_scale"], f"{key}.length_scale"),
        noise_variance=_number(d["noise_variance"], f"{key}.noise_variance"))


def _channel(d, key) -> ChannelSettings:
    return ChannelSettings(
        base_delay_s=_number(d["base_delay_s"], f"{key}.base_delay_s", lo=0.0),
        jitter_s=_number(d["jitter_s"], f"{key}.jitter_s", lo=0.0),
        drop=_number(d["drop"], f"{key}.drop", lo=0.0, hi=1.0))


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping into an ExperimentConfig; unknown keys rejected."""
    merged = _merge(_DEFAULTS, raw, "")
    sc = merged["scenario"]
    script_d = sc["script"]
    try:
        script = OperatorScript(
            kind=script_d["kind"],
            waypoints=tuple(tuple(w) for w in script_d["waypoints"]),
            noise_std=_number(script_d["noise_std"], "scenario.script.noise_std", lo=0.0),
            v_max=_number(script_d["v_max"], "scenario.script.v_max"),
            waypoint_radius=_number(script_d["waypoint_radius"],
                                    "scenario.script.waypoint_radius"),
            cutoff_tick=None if script_d["cutoff_tick"] is None
            else _integer(script_d["cutoff_tick"], "scenario.script.cutoff_tick", lo=0))
        scenario = Scenario(
            robot_start=tuple(sc["robot_start"]),
            goal=None if sc["goal"] is None else tuple(sc["goal"]),
            goal_radius=_number(sc["goal_radius"], "scenario.goal_radius"),
            v_max=_number(sc["v_max"], "scenario.v_max"),
            dt=_number(sc["dt"], "scenario.dt"),
            agents=tuple(tuple(a) for a in sc["agents"]),
            agent_noise_std=_number(sc["agent_noise_std"], "scenario.agent_noise_std", lo=0.0),
            robot_obs_noise_std=_number(sc["robot_obs_noise_std"],
                                        "scenario.robot_obs_noise_std", lo=0.0),
            agent_obs_noise_std=_number(sc["agent_obs_noise_std"],
                                        "scenario.agent_obs_noise_std", lo=0.0),
            script=script)
        inter = merged["interaction"]
        attraction = AttractionParams(np.asarray(inter["attraction_sigma"], dtype=float))
        cooperation = CooperationParams(
            strength=_number(inter["cooperation_strength"],
                             "interaction.cooperation_strength", lo=0.0),
            radius=_number(inter["cooperation_radius"], "interaction.cooperation_radius"))
        pl = merged["planner"]
        planner = PlannerConfig(
            horizon=_integer(pl["horizon"], "planner.horizon", lo=1),
            sample_count=_integer(pl["sample_count"], "planner.sample_count", lo=1),
            refine_iterations=_integer(pl["refine_iterations"],
                                       "planner.refine_iterations", lo=0),
            dt=scenario.dt, seed=0)
        sweep = None
        if merged["sweep"] is not None:
            sw = _merge({"drop": [0.0], "base_delay_s": [0.0], "repetitions": 1},
                        merged["sweep"], "sweep")
            sweep = SweepSettings(
                drop=tuple(_number(v, "sweep.drop[]", lo=0.0, hi=1.0) for v in sw["drop"]),
                base_delay_s=tuple(_number(v, "sweep.base_delay_s[]", lo=0.0)
                                   for v in sw["base_delay_s"]),
                repetitions=_integer(sw["repetitions"], "sweep.repetitions", lo=1))
        return ExperimentConfig(
            scenario=scenario,
            operator_kernel=_kernel(merged["kernels"]["operator"], "kernels.operator"),
            robot_kernel=_kernel(merged["kernels"]["robot"], "kernels.robot"),
            agent_kernel=_kernel(merged["kernels"]["agent"], "kernels.agent"),
            attraction=attraction, cooperation=cooperation, planner=planner,
            uplink=_channel(merged["uplink"], "uplink"),
            downlink=_channel(merged["downlink"], "downlink"),
            robot_goal_noise=_number(merged["session"]["robot_goal_noise"],
                                     "session.robot_goal_noise"),
            history_window=_integer(merged["session"]["history_window"],
                                    "session.history_window", lo=1),
            max_ticks=_integer(merged["run"]["max_ticks"], "run.max_ticks", lo=1),
            sweep=sweep)
    except ConfigError:
        raise
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}", key=path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}", key=path) from exc
    return parse_config(raw)


def serialize_config(config: ExperimentConfig) -> dict:
    """JSON-ready mapping that reparses to an equal config."""
    sc, script = config.scenario, config.scenario.script
    return {
        "scenario": {
            "robot_start": list(sc.robot_start),
            "goal": None if sc.goal is None else list(sc.goal),
            "goal_radius": sc.goal_radius,
            "v_max": sc.v_max,
            "dt": sc.dt,
            "agents": [list(a) for a in sc.agents],
            "agent_noise_std": sc.agent_noise_std,
            "robot_obs_noise_std": sc.robot_obs_noise_std,
            "agent_obs_noise_std": sc.agent_obs_noise_std,
            "script": {
                "kind": script.kind,
                "waypoints": [list(w) for w in script.waypoints],
                "noise_std": script.noise_std,
                "v_max": script.v_max,
                "waypoint_radius": script.waypoint_radius,
                "cutoff_tick": script.cutoff_tick,
            },
        },
        "kernels": {
            name: {"signal_variance": k.signal_variance, "length_scale": k.length_scale,
                   "noise_variance": k.noise_variance}
            for name, k in (("operator", config.operator_kernel),
                            ("robot", config.robot_kernel),
                            ("agent", config.agent_kernel))
        },
        "interaction": {
            "attraction_sigma": [[float(v) for v in row] for row in config.attraction.sigma],
            "cooperation_strength": config.cooperation.strength,
            "cooperation_radius": config.cooperation.radius,
        },
        "planner": {"horizon": config.planner.horizon,
                    "sample_count": config.planner.sample_count,
                    "refine_iterations": config.planner.refine_iterations},
        "session": {"robot_goal_noise": config.robot_goal_noise,
                    "history_window": config.history_window},
        "uplink": {"base_delay_s": config.uplink.base_delay_s,
                   "jitter_s": config.uplink.jitter_s, "drop": config.uplink.drop},
        "downlink": {"base_delay_s": config.downlink.base_delay_s,
                     "jitter_s": config.downlink.jitter_s, "drop": config.downlink.drop},
        "run": {"max_ticks": config.max_ticks},
        "sweep": None if config.sweep is None else {
            "drop": list(config.sweep.drop),
            "base_delay_s": list(config.sweep.base_delay_s),
            "repetitions": config.sweep.repetitions,
        },
    }


@dataclass
class RunMetrics:
    """Per-tick rows plus a run summary, with the metadata that produced them."""

    schema: str
    meta: dict
    rows: list
    summary: dict


def build_session(config: ExperimentConfig, seed: int) -> TeleopSession:
    session_cfg = SessionConfig(
        operator_kernel=config.operator_kernel,
        robot_kernel=config.robot_kernel,
        agent_kernel=config.agent_kernel,
        attraction=config.attraction,
        cooperation=config.cooperation,
        planner=config.planner,
        robot_goal=config.scenario.goal,
        robot_goal_noise=config.robot_goal_noise,
        history_window=config.history_window)
    return TeleopSession(config.scenario, session_cfg,
                         config.uplink.to_config("uplink"),
                         config.downlink.to_config("downlink"),
                         seed=seed, max_ticks=config.max_ticks)


def run(config: ExperimentConfig, seed: int) -> RunMetrics:
    """Execute the full closed loop headlessly; deterministic per seed."""
    session = build_session(config, seed)
    console = ScriptedConsole(config.scenario.script, seed=seed)
    result = run_session(session, console)
    return _metrics_from(config, seed, result)


def _metrics_from(config: ExperimentConfig, seed: int, result: SessionResult) -> RunMetrics:
    rows = result.rows
    n = len(rows)
    xy = np.array([[r["x"], r["y"]] for r in rows]) if rows else np.zeros((0, 2))
    start = np.array(config.scenario.robot_start[:2])
    if n:
        steps = np.vstack([xy[:1] - start[None, :], np.diff(xy, axis=0)])
        path_length = float(np.sum(np.hypot(steps[:, 0], steps[:, 1])))
    else:
        path_length = 0.0
    clear = [r["min_clearance"] for r in rows if math.isfinite(r["min_clearance"])]
    track = [r["tracking_error"] for r in rows if math.isfinite(r["tracking_error"])]
    fallback_fraction = (result.fallback_ticks / n) if n else 0.0
    summary = {
        "completed": 1 if result.completed else 0,
        "completion_tick": result.completion_tick if result.completed else config.max_ticks,
        "path_length": path_length,
        "mean_clearance": float(np.mean(clear)) if clear else math.inf,
        "mean_operator_weight": float(np.mean([r["operator_weight"] for r in rows])) if rows else 0.0,
        "mean_tracking_error": float(np.mean(track)) if track else math.nan,
        "fallback_fraction": fallback_fraction,
        "failed": 1 if fallback_fraction > 0.5 else 0,
    }
    meta = {
        "seed": seed,
        "uplink_drop": config.uplink.drop,
        "uplink_base_delay_s": config.uplink.base_delay_s,
        "downlink_drop": config.downlink.drop,
        "downlink_base_delay_s": config.downlink.base_delay_s,
    }
    return RunMetrics(schema=METRICS_SCHEMA, meta=meta, rows=rows, summary=summary)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_to_text(metrics: RunMetrics) -> str:
    lines = [f"schema={metrics.schema}"]
    for k, v in metrics.meta.items():
        lines.append(f"#meta,{k},{_fmt(v)}")
    lines.append(",".join(ROW_FIELDS))
    for r in metrics.rows:
        lines.append(",".join(_fmt(r[f]) for f in ROW_FIELDS))
    for k in SUMMARY_FIELDS:
        lines.append(f"#summary,{k},{_fmt(metrics.summary[k])}")
    return "\n".join(lines) + "\n"


def metrics_from_text(text: str, source: str = "<memory>") -> RunMetrics:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("schema="):
        raise ConfigError(f"{source}: missing schema header", key=source)
    schema = lines[0].split("=", 1)[1]
    if schema != METRICS_SCHEMA:
        raise ConfigError(f"{source}: schema mismatch ({schema} != {METRICS_SCHEMA})",
                          key=source)
    meta, rows, summary = {}, [], {}
    header = None
    for line in lines[1:]:
        if not line:
            continue
        if line.startswith("#meta,"):
            _, k, v = line.split(",", 2)
            meta[k] = float(v) if "." in v or v in ("inf", "nan") else int(v)
        elif line.startswith("#summary,"):
            _, k, v = line.split(",", 2)
            summary[k] = float(v) if "." in v or v in ("inf", "nan") else int(v)
        elif header is None:
            header = line.split(",")
            if tuple(header) != ROW_FIELDS:
                raise ConfigError(f"{source}: unexpected columns {header}", key=source)
        else:
            vals = line.split(",")
            row = {}
            for k, v in zip(header, vals):
                row[k] = int(v) if k in ("tick", "fallback") else float(v)
            rows.append(row)
    return RunMetrics(schema=schema, meta=meta, rows=rows, summary=summary)


def save_metrics(metrics: RunMetrics, path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(metrics_to_text(metrics))


def load_metrics(path: str) -> RunMetrics:
    with open(path, "r", encoding="utf-8") as f:
        return metrics_from_text(f.read(), source=path)


def sweep(config: ExperimentConfig, seed: int, out_dir: str) -> dict:
    """Run every sweep cell x repetition; returns the manifest mapping."""
    settings = config.sweep or SweepSettings()
    os.makedirs(out_dir, exist_ok=True)
    cells = []
    for drop, delay in itertools.product(settings.drop, settings.base_delay_s):
        for rep in range(settings.repetitions):
            cell_config = replace(
                config,
                uplink=replace(config.uplink, drop=drop, base_delay_s=delay))
            cell_seed = seed + rep
            metrics = run(cell_config, cell_seed)
            fname = f"run_drop{drop:g}_delay{delay:g}_rep{rep}.csv"
            save_metrics(metrics, os.path.join(out_dir, fname))
            cells.append({"uplink_drop": drop, "uplink_base_delay_s": delay,
                          "repetition": rep, "seed": cell_seed, "file": fname})
    manifest = {"schema": MANIFEST_SCHEMA, "cells": cells}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def summarize(paths: list[str], out_path: str | None = None) -> str:
    """Per-cell means and standard errors of the run summary metrics."""
    if not paths:
        raise ConfigError("summarize needs at least one metrics file")
    groups: dict[tuple, list[RunMetrics]] = {}
    for p in paths:
        m = load_metrics(p)
        cell = (m.meta.get("uplink_drop", 0.0), m.meta.get("uplink_base_delay_s", 0.0))
        groups.setdefault(cell, []).append(m)
    metrics_cols = ("completion_tick", "path_length", "mean_clearance",
                    "mean_operator_weight", "mean_tracking_error", "completed")
    header = ["schema=" + SUMMARY_SCHEMA]
    cols = ["uplink_drop", "uplink_base_delay_s", "n"]
    for c in metrics_cols:
        cols += [f"{c}_mean", f"{c}_se"]
    header.append(",".join(cols))
    lines = header
    for cell in sorted(groups):
        ms = groups[cell]
        vals = [str(cell[0]), str(cell[1]), str(len(ms))]
        for c in metrics_cols:
            data = np.array([m.summary[c] for m in ms], dtype=float)
            data = data[np.isfinite(data)]
            if data.size == 0:
                vals += ["nan", "nan"]
                continue
            mean = float(np.mean(data))
            se = float(np.std(data, ddof=1) / math.sqrt(len(data))) if len(data) > 1 else 0.0
            vals += [repr(mean), repr(se)]
        lines.append(",".join(vals))
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return text


def run_operator_only(config: ExperimentConfig, seed: int) -> RunMetrics:
    """Baseline: the robot executes operator commands directly, no planner.

    Same world, same script, identity link; useful for isolating what the
    blended planner adds (e.g. clearance around crossing agents).
    """
    world_seed = int(np.random.SeedSequence((seed, 0x5E55)).spawn(4)[0].generate_state(1)[0])
    world = World(config.scenario, world_seed)
    script = config.scenario.script
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0)))
    rows = []
    for _ in range(config.max_ticks):
        snap = world.snapshot()
        cmd = scripted_command(script, snap, world.tick, rng)
        now = world.time
        pose = world.robot.pose()
        world.step(cmd)
        executed_v = (world.robot.pose()[:2] - pose[:2]) / config.scenario.dt
        clearances = [math.hypot(a.x - world.robot.x, a.y - world.robot.y)
                      for a in world.agents]
        rows.append({
            "tick": world.tick - 1, "time": now,
            "x": world.robot.x, "y": world.robot.y, "theta": world.robot.theta,
            "operator_weight": 1.0, "robot_weight": 0.0,
            "operator_pred_std": 0.0,
            "tracking_error": 0.0 if cmd is not None else math.nan,
            "min_clearance": min(clearances) if clearances else math.inf,
            "fallback": 0,
        })
        if world.goal_reached():
            break
    result = SessionResult(rows=rows, completed=world.goal_reached(),
                           completion_tick=world.tick if world.goal_reached() else None,
                           fallback_ticks=0)
    return _metrics_from(config, seed, result)
