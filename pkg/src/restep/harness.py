"""Experiment harness: validated configs, named experiments, reports.

An experiment is described by a JSON-compatible dict (see
:func:`default_config` for the schema and per-kind defaults) and executed
by :func:`run_experiment`, which produces a :class:`RunReport` and, by
default, writes it to the configured output directory via
:func:`emit_report` as CSV (rows only) and JSON (config echo, rows, and
timing metadata).  Numeric cells are written with 17 significant digits so
both formats round-trip bit-exactly through decimal; CSV output carries no
timing, so identical configs and seeds yield byte-identical CSV files.

Experiment kinds:

    toy2d_a              four-corner mixture, H = I, strong noise
    toy2d_b              four-corner mixture, H = [[1,0],[0,0]], moderate noise
    gauss1d              Gaussian world, single probe observation
    train_restore        train the regressor, then restore with it
    generate_from_noise  mixture world observed through H = 0 (pure noise)
    sweep_steps          step-count sweep on a shared input batch
    sweep_pt             one trained regressor per time distribution
    sweep_noise          noise-schedule ablation with the exact oracle
    sampler_compare      the three samplers across a step grid

Independent (variant, replicate) cells own random sources derived from
(master seed, variant index, replicate index) by the rule documented at
:func:`restep.worlds.derive_rng`; with ``jobs > 1`` the cells run in a
process pool and the report is assembled in deterministic grid order
either way.  A cell whose run trips the divergence guard (iterate norm
beyond 1e6 times its initial value) or hits a non-finite iterate is
flagged in its row and the remaining cells continue.
"""

from __future__ import annotations

import copy
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degradation import (
    BrownianSchedule,
    ConstantSchedule,
    TableSchedule,
)
from .metrics import distortion_metrics, empirical_distribution_stats, nearest_modes
from .oracles import (
    GaussianMixturePrior,
    GaussianPrior,
    LinearDegradation,
    gaussian_flow_trajectory,
)
from .regressor import (
    TIME_DISTRIBUTION_KINDS,
    MlpRegressor,
    TimeDistribution,
    TrainConfig,
    save_checkpoint,
    train,
)
from .samplers import (
    NonFiniteIterateError,
    SamplerConfig,
    cold_diffusion_restore,
    iterative_restore,
    naive_restore,
)
from .worlds import (
    DivergenceError,
    DivergenceGuard,
    GaussianWorld,
    MixtureWorld,
    derive_rng,
    derive_seed,
)

__all__ = [
    "EXPERIMENT_KINDS",
    "ConfigError",
    "RunReport",
    "default_config",
    "emit_report",
    "load_config",
    "resolve_config",
    "run_experiment",
    "schedule_from_config",
    "sweep_pt",
    "sweep_samplers",
    "world_from_config",
]

EXPERIMENT_KINDS = (
    "toy2d_a",
    "toy2d_b",
    "gauss1d",
    "train_restore",
    "generate_from_noise",
    "sweep_steps",
    "sweep_pt",
    "sweep_noise",
    "sampler_compare",
)

SAMPLER_NAMES = ("iterative", "naive", "cold_diffusion")

_SAMPLER_FNS = {
    "iterative": iterative_restore,
    "naive": naive_restore,
    "cold_diffusion": cold_diffusion_restore,
}

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment config; the message starts with the field path."""


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


# ---- defaults ---- #

_UNIT_SQUARE_MODES = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
_EQUAL_WEIGHTS = [0.25, 0.25, 0.25, 0.25]


def _mixture_world(H, sigma):
    return {
        "type": "mixture",
        "modes": copy.deepcopy(_UNIT_SQUARE_MODES),
        "weights": list(_EQUAL_WEIGHTS),
        "H": copy.deepcopy(H),
        "sigma": sigma,
    }


def _gauss_world():
    return {"type": "gaussian", "c": [0.0], "sigma_c": 1.0, "sigma_n": 1.0}


def _sampler_section(steps):
    return {
        "steps": steps,
        "schedule": {"kind": "constant", "epsilon": 0.0},
        "record_trajectory": False,
    }


def _train_section(hidden, steps, learning_rate, batch_size, time_dist_kind):
    return {
        "hidden": list(hidden),
        "activation": "tanh",
        "p_norm": 1,
        "learning_rate": learning_rate,
        "batch_size": batch_size,
        "steps": steps,
        "time_dist": {"kind": time_dist_kind, "a": 0.0},
        "schedule": {"kind": "constant", "epsilon": 0.0},
    }


_IDENTITY_2D = [[1.0, 0.0], [0.0, 1.0]]
_PROJECT_FIRST_2D = [[1.0, 0.0], [0.0, 0.0]]
_ZERO_2D = [[0.0, 0.0], [0.0, 0.0]]


def default_config(kind: str) -> dict:
    """A complete, runnable config dict for ``kind``.

    The mixture worlds put equal-weight modes at the unit-square corners;
    sigma = 1.0 for the identity observation (strong noise relative to the
    mode separation), 0.3 for the rank-deficient one, both package
    conventions.  All returned structures are fresh copies.
    """
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"kind: must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    base = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "seed": 0,
        "out_dir": "restep-out",
    }
    if kind == "toy2d_a":
        base["world"] = _mixture_world(_IDENTITY_2D, 1.0)
        base["sampler"] = _sampler_section(100)
        base["eval"] = {"n_inputs": 1000, "hit_threshold": 1e-2}
    elif kind == "toy2d_b":
        base["world"] = _mixture_world(_PROJECT_FIRST_2D, 0.3)
        base["sampler"] = _sampler_section(100)
        base["eval"] = {"n_inputs": 1000, "hit_threshold": 1e-2}
    elif kind == "gauss1d":
        base["world"] = _gauss_world()
        base["sampler"] = _sampler_section(1000)
        base["eval"] = {"probe_y": [2.0]}
    elif kind == "train_restore":
        base["world"] = _mixture_world(_IDENTITY_2D, 1.0)
        base["sampler"] = _sampler_section(100)
        base["train"] = _train_section(
            hidden=[128, 128], steps=20000, learning_rate=2e-3,
            batch_size=256, time_dist_kind="bias_t0_t1",
        )
        base["eval"] = {"n_inputs": 1000, "hit_threshold": 5e-2}
    elif kind == "generate_from_noise":
        base["world"] = _mixture_world(_ZERO_2D, 1.0)
        base["sampler"] = _sampler_section(100)
        base["eval"] = {"n_inputs": 10000, "hit_threshold": 1e-2}
    elif kind == "sweep_steps":
        base["world"] = _gauss_world()
        base["sampler"] = _sampler_section(100)
        base["eval"] = {"n_inputs": 2000, "step_grid": [1, 2, 4, 10, 50, 100]}
    elif kind == "sweep_pt":
        base["world"] = _mixture_world(_IDENTITY_2D, 1.0)
        base["sampler"] = _sampler_section(100)
        base["train"] = _train_section(
            hidden=[64, 64], steps=6000, learning_rate=2e-3,
            batch_size=128, time_dist_kind="linear_0",
        )
        base["eval"] = {
            "n_inputs": 1000,
            "time_dists": list(TIME_DISTRIBUTION_KINDS),
            "a": 1.0,
            "hit_threshold": 5e-2,
        }
    elif kind == "sweep_noise":
        base["world"] = _mixture_world(_IDENTITY_2D, 1.0)
        base["sampler"] = _sampler_section(100)
        base["eval"] = {
            "n_inputs": 1000,
            "hit_threshold": 1e-2,
            "schedules": [
                {"kind": "constant", "epsilon": 0.0},
                {"kind": "constant", "epsilon": 0.05},
                {"kind": "constant", "epsilon": 0.1},
                {"kind": "brownian", "epsilon": 0.05},
                {"kind": "brownian", "epsilon": 0.1},
            ],
        }
    else:  # sampler_compare
        base["world"] = _mixture_world(_IDENTITY_2D, 1.0)
        base["sampler"] = _sampler_section(100)
        # 3000 steps leaves the regressor slightly rough on purpose: the
        # sampler ordering under study only separates once estimator error
        # is non-negligible, and longer training washes it out.
        base["train"] = _train_section(
            hidden=[64, 64], steps=3000, learning_rate=2e-3,
            batch_size=128, time_dist_kind="bias_t0_t1",
        )
        base["eval"] = {
            "n_inputs": 500,
            "step_grid": [1, 2, 3, 10, 100, 1000],
            "samplers": list(SAMPLER_NAMES),
            "estimator": "trained",
            "hit_threshold": 1e-2,
        }
    return base


# ---- config loading, merging, validation ---- #


def load_config(path) -> dict:
    """Read a JSON config file; I/O and parse problems become ConfigError."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"config: cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config: {path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    return raw


# Sections whose sub-keys merge individually; everything else (including
# world/schedule/time_dist variants) is replaced wholesale.
_MERGE_SECTIONS = ("sampler", "eval", "train")
_ATOMIC_IN_SECTION = ("schedule", "time_dist", "world")


def _merge(defaults: dict, override: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in override.items():
        _require(key in defaults, key, "unknown config field")
        if key in _MERGE_SECTIONS:
            _require(isinstance(val, dict), key, "must be a mapping")
            section = out[key]
            for sub, subval in val.items():
                _require(sub in section, f"{key}.{sub}", "unknown config field")
                section[sub] = copy.deepcopy(subval)
        else:
            out[key] = copy.deepcopy(val)
    return out


def schedule_from_config(d, path: str = "schedule"):
    _require(isinstance(d, dict), path, "must be a mapping")
    kind = d.get("kind")
    _require(
        kind in ("constant", "brownian", "table"),
        f"{path}.kind", f"must be constant, brownian, or table, got {kind!r}",
    )
    try:
        if kind == "constant":
            _require(set(d) <= {"kind", "epsilon"}, path, "unknown field in schedule")
            return ConstantSchedule(float(d["epsilon"]))
        if kind == "brownian":
            _require(set(d) <= {"kind", "epsilon"}, path, "unknown field in schedule")
            return BrownianSchedule(float(d["epsilon"]))
        _require(
            set(d) <= {"kind", "times", "epsilons"}, path, "unknown field in schedule"
        )
        return TableSchedule(tuple(d["times"]), tuple(d["epsilons"]))
    except KeyError as err:
        raise ConfigError(f"{path}: missing field {err.args[0]!r}") from err
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: {err}") from err


def world_from_config(d, path: str = "world"):
    _require(isinstance(d, dict), path, "must be a mapping")
    wtype = d.get("type")
    _require(
        wtype in ("mixture", "gaussian"),
        f"{path}.type", f"must be mixture or gaussian, got {wtype!r}",
    )
    try:
        if wtype == "mixture":
            _require(
                set(d) <= {"type", "modes", "weights", "H", "sigma"},
                path, "unknown field in world",
            )
            prior = GaussianMixturePrior(d["modes"], d["weights"])
            deg = LinearDegradation(d["H"], float(d["sigma"]))
            return MixtureWorld(prior, deg)
        _require(
            set(d) <= {"type", "c", "sigma_c", "sigma_n"},
            path, "unknown field in world",
        )
        prior = GaussianPrior(d["c"], float(d["sigma_c"]))
        return GaussianWorld(prior, float(d["sigma_n"]))
    except KeyError as err:
        raise ConfigError(f"{path}: missing field {err.args[0]!r}") from err
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: {err}") from err


def _time_dist_from_config(d, path: str):
    _require(isinstance(d, dict), path, "must be a mapping")
    _require(set(d) <= {"kind", "a"}, path, "unknown field in time_dist")
    try:
        return TimeDistribution(str(d["kind"]), float(d.get("a", 0.0)))
    except KeyError as err:
        raise ConfigError(f"{path}: missing field {err.args[0]!r}") from err
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from err


def _train_config_from_section(d, seed: int, path: str = "train",
                               time_dist: TimeDistribution | None = None) -> TrainConfig:
    _require(isinstance(d, dict), path, "must be a mapping")
    if time_dist is None:
        time_dist = _time_dist_from_config(d["time_dist"], f"{path}.time_dist")
    try:
        return TrainConfig(
            p_norm=int(d["p_norm"]),
            learning_rate=float(d["learning_rate"]),
            batch_size=int(d["batch_size"]),
            steps=int(d["steps"]),
            time_dist=time_dist,
            schedule=schedule_from_config(d["schedule"], f"{path}.schedule"),
            seed=seed,
        )
    except KeyError as err:
        raise ConfigError(f"{path}: missing field {err.args[0]!r}") from err
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: {err}") from err


def _check_int(value, path, minimum=None):
    _require(
        isinstance(value, (int, np.integer)) and not isinstance(value, bool),
        path, f"must be an integer, got {value!r}",
    )
    if minimum is not None:
        _require(value >= minimum, path, f"must be >= {minimum}")
    return int(value)


def _check_number(value, path, positive=False):
    _require(
        isinstance(value, (int, float, np.integer, np.floating))
        and not isinstance(value, bool) and np.isfinite(value),
        path, f"must be a finite number, got {value!r}",
    )
    if positive:
        _require(value > 0, path, "must be > 0")
    return float(value)


def _validate_eval(cfg: dict):
    kind = cfg["kind"]
    ev = cfg["eval"]
    path = "eval"
    _require(isinstance(ev, dict), path, "must be a mapping")
    if kind == "gauss1d":
        probe = ev.get("probe_y")
        _require(
            isinstance(probe, (list, tuple)) and len(probe) >= 1,
            f"{path}.probe_y", "must be a non-empty list of numbers",
        )
        for j, v in enumerate(probe):
            _check_number(v, f"{path}.probe_y[{j}]")
        return
    _check_int(ev["n_inputs"], f"{path}.n_inputs", minimum=1)
    if "hit_threshold" in ev:
        _check_number(ev["hit_threshold"], f"{path}.hit_threshold", positive=True)
    if kind in ("sweep_steps", "sampler_compare"):
        grid = ev.get("step_grid")
        _require(
            isinstance(grid, (list, tuple)) and len(grid) >= 1,
            f"{path}.step_grid", "must be a non-empty list of integers",
        )
        for j, v in enumerate(grid):
            _check_int(v, f"{path}.step_grid[{j}]", minimum=1)
    if kind == "sampler_compare":
        names = ev.get("samplers")
        _require(
            isinstance(names, (list, tuple)) and len(names) >= 1,
            f"{path}.samplers", "must be a non-empty list",
        )
        for name in names:
            _require(
                name in SAMPLER_NAMES,
                f"{path}.samplers", f"unknown sampler {name!r}",
            )
        _require(
            ev.get("estimator") in ("oracle", "trained"),
            f"{path}.estimator", "must be 'oracle' or 'trained'",
        )
    if kind == "sweep_pt":
        kinds = ev.get("time_dists")
        _require(
            isinstance(kinds, (list, tuple)) and len(kinds) >= 1,
            f"{path}.time_dists", "must be a non-empty list",
        )
        for name in kinds:
            _require(
                name in TIME_DISTRIBUTION_KINDS,
                f"{path}.time_dists", f"unknown time distribution {name!r}",
            )
        _check_number(ev["a"], f"{path}.a")
        _require(ev["a"] >= 0, f"{path}.a", "must be >= 0")
    if kind == "sweep_noise":
        schedules = ev.get("schedules")
        _require(
            isinstance(schedules, (list, tuple)) and len(schedules) >= 1,
            f"{path}.schedules", "must be a non-empty list of schedules",
        )
        for j, sd in enumerate(schedules):
            schedule_from_config(sd, f"{path}.schedules[{j}]")


def resolve_config(raw: dict) -> dict:
    """Merge ``raw`` over its kind's defaults and validate everything.

    Returns the fully resolved dict that the runners consume and the
    report echoes.  Unknown fields, missing fields, and out-of-range
    values raise :class:`ConfigError` with the offending field path.
    """
    _require(isinstance(raw, dict), "config", "must be a mapping")
    kind = raw.get("kind")
    _require(kind is not None, "kind", "is required")
    cfg = _merge(default_config(kind), raw)
    _require(
        cfg["schema_version"] == SCHEMA_VERSION,
        "schema_version", f"must be {SCHEMA_VERSION}",
    )
    seed = _check_int(cfg["seed"], "seed", minimum=0)
    _require(seed < 2**64, "seed", "must fit in 64 bits")
    _require(
        isinstance(cfg["out_dir"], str) and cfg["out_dir"],
        "out_dir", "must be a non-empty string",
    )
    world = world_from_config(cfg["world"])
    needs_mixture = kind in (
        "toy2d_a", "toy2d_b", "train_restore", "generate_from_noise",
        "sweep_pt", "sweep_noise", "sampler_compare",
    )
    if needs_mixture:
        _require(
            isinstance(world, MixtureWorld),
            "world.type", f"{kind} needs a mixture world",
        )
    if kind == "gauss1d":
        _require(
            isinstance(world, GaussianWorld),
            "world.type", "gauss1d needs a gaussian world",
        )
    sampler = cfg["sampler"]
    _check_int(sampler["steps"], "sampler.steps", minimum=1)
    schedule_from_config(sampler["schedule"], "sampler.schedule")
    _require(
        isinstance(sampler["record_trajectory"], bool),
        "sampler.record_trajectory", "must be a boolean",
    )
    if sampler["record_trajectory"]:
        _require(
            kind == "gauss1d",
            "sampler.record_trajectory",
            "trajectory recording is only supported for the single-probe gauss1d kind",
        )
    _validate_eval(cfg)
    if kind == "gauss1d":
        _require(
            len(cfg["eval"]["probe_y"]) == world.dim,
            "eval.probe_y", f"must have {world.dim} entries to match the world",
        )
    if "train" in cfg:
        tc = _train_config_from_section(cfg["train"], seed=0)
        _require(
            isinstance(cfg["train"]["hidden"], (list, tuple))
            and len(cfg["train"]["hidden"]) >= 1,
            "train.hidden", "must be a non-empty list of widths",
        )
        for j, h in enumerate(cfg["train"]["hidden"]):
            _check_int(h, f"train.hidden[{j}]", minimum=1)
        _require(
            cfg["train"]["activation"] in ("tanh", "relu"),
            "train.activation", "must be 'tanh' or 'relu'",
        )
        _require(tc.steps >= 1, "train.steps", "must be >= 1")
    return cfg


# ---- reports ---- #


@dataclass
class RunReport:
    """Everything one experiment produced, ready for emission."""

    kind: str
    config: dict
    columns: list
    rows: list
    trajectory: list = None
    wall_clock_s: float = 0.0
    total_steps: int = 0
    output_paths: list = field(default_factory=list)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _write_csv(path: Path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(row.get(c)) for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_report(report: RunReport, formats=("csv", "json"), basename=None) -> list:
    """Write the report under ``report.config['out_dir']``; returns paths.

    CSV holds one header row plus one row per (variant, replicate) cell.
    JSON holds the full nested report: config echo, columns, rows, and a
    meta block with wall-clock seconds and total step counts (kept out of
    the CSV so reruns are byte-identical).  A recorded trajectory goes to
    a sibling ``*_trajectory`` file, one record per step.
    """
    formats = set(formats)
    unknown = formats - {"csv", "json"}
    if unknown:
        raise ConfigError(f"format: unknown format(s) {sorted(unknown)}")
    if not formats:
        raise ConfigError("format: need at least one of csv, json")
    out_dir = Path(report.config["out_dir"])
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        base = basename or report.kind
        paths = []
        if "csv" in formats:
            csv_path = out_dir / f"{base}.csv"
            _write_csv(csv_path, report.columns, report.rows)
            paths.append(str(csv_path))
            if report.trajectory is not None:
                traj_path = out_dir / f"{base}_trajectory.csv"
                _write_csv(traj_path, _trajectory_columns(report), report.trajectory)
                paths.append(str(traj_path))
        if "json" in formats:
            doc = {
                "schema_version": SCHEMA_VERSION,
                "kind": report.kind,
                "config": report.config,
                "columns": list(report.columns),
                "rows": report.rows,
                "meta": {
                    "wall_clock_s": report.wall_clock_s,
                    "total_steps": report.total_steps,
                },
            }
            if report.trajectory is not None:
                doc["trajectory"] = report.trajectory
            json_path = out_dir / f"{base}.json"
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2)
                fh.write("\n")
            paths.append(str(json_path))
    except OSError as err:
        raise OSError(f"cannot write report under {out_dir}: {err}") from err
    report.output_paths = paths
    return paths


def _trajectory_columns(report: RunReport) -> list:
    if not report.trajectory:
        return ["step_index", "t"]
    return list(report.trajectory[0].keys())


# ---- cells (the unit of optional parallelism) ---- #


def _run_cell(payload: dict) -> dict:
    op = payload["op"]
    if op == "sampler_eval":
        return _sampler_eval_cell(payload)
    if op == "train_eval":
        return _train_eval_cell(payload)
    raise ValueError(f"unknown cell op {op!r}")


def _execute_cells(cells, jobs: int):
    if jobs <= 1 or len(cells) <= 1:
        return [_run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
        return list(pool.map(_run_cell, cells))


def _sampler_eval_cell(p: dict) -> dict:
    guard = DivergenceGuard(p["estimator"])
    cfg = SamplerConfig(
        steps=p["steps"],
        schedule=p["schedule"],
        seed=p["cell_seed"],
        record_trajectory=p.get("record_trajectory", False),
    )
    out = traj = None
    divergent, div_step = 0, None
    try:
        out, traj = _SAMPLER_FNS[p["sampler_name"]](guard, p["y"], cfg)
    except (DivergenceError, NonFiniteIterateError) as err:
        divergent, div_step = 1, int(err.step_index)
    res = {
        "divergent": divergent,
        "divergence_step": div_step,
        "mse": None,
        "psnr": None,
        "ks": None,
        "mode_hit_rate": None,
        "mean_min_dist": None,
        "mode_counts": None,
        "outputs": None,
        "trajectory": None,
    }
    if out is None:
        return res
    if p.get("x_ref") is not None:
        m = distortion_metrics(p["x_ref"], out, peak=p["peak"])
        res["mse"] = float(m.mse)
        res["psnr"] = float(m.psnr)
    prior = p.get("prior")
    if prior is not None:
        idx, dists = nearest_modes(out, prior)
        res["mode_hit_rate"] = float(np.mean(dists <= p["hit_threshold"]))
        res["mean_min_dist"] = float(np.mean(dists))
        res["mode_counts"] = np.bincount(idx, minlength=prior.n_modes).tolist()
    ks_ref = p.get("ks_ref")
    if ks_ref is not None:
        stats = empirical_distribution_stats(
            np.atleast_2d(out), ref_mean=ks_ref[0], ref_std=ks_ref[1]
        )
        res["ks"] = float(np.max(stats.ks_vs_normal))
    if p.get("return_outputs"):
        res["outputs"] = out
    if traj is not None:
        rows = []
        for i, (t, state) in enumerate(traj.points):
            row = {"step_index": i, "t": float(t)}
            for j, v in enumerate(np.asarray(state).ravel()):
                row[f"state_{j}"] = float(v)
            rows.append(row)
        res["trajectory"] = rows
    return res


def _train_eval_cell(p: dict) -> dict:
    world = p["world"]
    init_rng = derive_rng(p["master_seed"], *p["init_labels"])
    model = MlpRegressor.create(
        world.dim, p["hidden"], init_rng, activation=p["activation"]
    )
    stream = world.pair_stream(derive_rng(p["master_seed"], *p["data_labels"]))
    trained, losses = train(model, stream, p["train_config"])
    if p.get("checkpoint_path"):
        save_checkpoint(trained, p["checkpoint_path"])
    window = max(1, min(100, losses.size))
    extras = {
        "loss_initial": float(np.mean(losses[:window])),
        "loss_final": float(np.mean(losses[-window:])),
    }
    eval_payload = dict(p["eval_cell"])
    eval_payload["estimator"] = trained
    res = _sampler_eval_cell(eval_payload)
    res.update(extras)
    return res


# ---- the experiments ---- #

_METRIC_COLUMNS = [
    "mse", "psnr", "ks", "mode_hit_rate", "mean_min_dist",
    "divergent", "divergence_step",
]


def _metric_fields(res: dict) -> dict:
    return {c: res[c] for c in _METRIC_COLUMNS}


def _base_eval_cell(cfg, world, schedule, sampler_name, steps, variant,
                    replicate, x_ref, y, estimator, hit_threshold=None,
                    record_trajectory=False, return_outputs=False):
    ks_ref = None
    prior = None
    if isinstance(world, GaussianWorld):
        ks_ref = (world.prior.c, world.prior.sigma_c)
    else:
        prior = world.prior
    return {
        "op": "sampler_eval",
        "estimator": estimator,
        "sampler_name": sampler_name,
        "steps": steps,
        "schedule": schedule,
        "cell_seed": derive_seed(cfg["seed"], variant, replicate),
        "y": y,
        "x_ref": x_ref,
        "peak": world.signal_peak,
        "prior": prior,
        "hit_threshold": hit_threshold,
        "ks_ref": ks_ref,
        "record_trajectory": record_trajectory,
        "return_outputs": return_outputs,
    }


def _run_toy2d(cfg, jobs, write):
    world = world_from_config(cfg["world"])
    schedule = schedule_from_config(cfg["sampler"]["schedule"])
    steps = cfg["sampler"]["steps"]
    ev = cfg["eval"]
    x, y = world.sample_pairs(derive_rng(cfg["seed"], "inputs"), ev["n_inputs"])
    cell = _base_eval_cell(
        cfg, world, schedule, "iterative", steps, variant=0, replicate=0,
        x_ref=x, y=y, estimator=world.oracle(schedule),
        hit_threshold=ev["hit_threshold"],
    )
    res = _execute_cells([cell], jobs)[0]
    row = {
        "experiment": cfg["kind"],
        "seed": cfg["seed"],
        "variant": 0,
        "replicate": 0,
        "sampler": "iterative",
        "estimator": "oracle",
        "N": steps,
        "n_inputs": ev["n_inputs"],
        **_metric_fields(res),
    }
    return list(row.keys()), [row], steps, None


def _run_gauss1d(cfg, jobs, write):
    world = world_from_config(cfg["world"])
    schedule = schedule_from_config(cfg["sampler"]["schedule"])
    steps = cfg["sampler"]["steps"]
    y = np.asarray(cfg["eval"]["probe_y"], dtype=np.float64)
    target = gaussian_flow_trajectory(world.prior, world.sigma_n, y, 0.0)
    cell = _base_eval_cell(
        cfg, world, schedule, "iterative", steps, variant=0, replicate=0,
        x_ref=None, y=y, estimator=world.oracle(schedule),
        record_trajectory=cfg["sampler"]["record_trajectory"],
        return_outputs=True,
    )
    cell["ks_ref"] = None  # a single probe has no output distribution
    res = _execute_cells([cell], jobs)[0]
    row = {
        "experiment": cfg["kind"],
        "seed": cfg["seed"],
        "variant": 0,
        "replicate": 0,
        "sampler": "iterative",
        "estimator": "oracle",
        "N": steps,
    }
    out = res["outputs"]
    for j in range(world.dim):
        row[f"y_{j}"] = float(y[j])
    for j in range(world.dim):
        row[f"output_{j}"] = None if out is None else float(out[j])
    for j in range(world.dim):
        row[f"limit_{j}"] = float(target[j])
    row["abs_error"] = (
        None if out is None else float(np.max(np.abs(out - target)))
    )
    row["divergent"] = res["divergent"]
    row["divergence_step"] = res["divergence_step"]
    return list(row.keys()), [row], steps, res["trajectory"]


def _run_generate_from_noise(cfg, jobs, write):
    world = world_from_config(cfg["world"])
    schedule = schedule_from_config(cfg["sampler"]["schedule"])
    steps = cfg["sampler"]["steps"]
    ev = cfg["eval"]
    n = ev["n_inputs"]
    _, y = world.sample_pairs(derive_rng(cfg["seed"], "inputs"), n)
    cell = _base_eval_cell(
        cfg, world, schedule, "iterative", steps, variant=0, replicate=0,
        x_ref=None, y=y, estimator=world.oracle(schedule),
        hit_threshold=ev["hit_threshold"],
    )
    res = _execute_cells([cell], jobs)[0]
    counts = res["mode_counts"]
    rows = []
    for mode_index in range(world.prior.n_modes):
        w = float(world.prior.weights[mode_index])
        freq = None if counts is None else counts[mode_index] / n
        std_err = float(np.sqrt(w * (1.0 - w) / n))
        rows.append({
            "experiment": cfg["kind"],
            "seed": cfg["seed"],
            "variant": mode_index,
            "replicate": 0,
            "sampler": "iterative",
            "estimator": "oracle",
            "N": steps,
            "n_inputs": n,
            "mode_index": mode_index,
            "prior_weight": w,
            "frequency": freq,
            "std_err": std_err,
            "z_score": None if freq is None else (freq - w) / std_err,
            "mode_hit_rate": res["mode_hit_rate"],
            "divergent": res["divergent"],
        })
    return list(rows[0].keys()), rows, steps, None


def _run_sweep_steps(cfg, jobs, write):
    world = world_from_config(cfg["world"])
    schedule = schedule_from_config(cfg["sampler"]["schedule"])
    ev = cfg["eval"]
    x, y = world.sample_pairs(derive_rng(cfg["seed"], "inputs"), ev["n_inputs"])
    hit = ev.get("hit_threshold")
    oracle = world.oracle(schedule)
    cells = [
        _base_eval_cell(
            cfg, world, schedule, "iterative", int(n), variant=i, replicate=0,
            x_ref=x, y=y, estimator=oracle, hit_threshold=hit,
        )
        for i, n in enumerate(ev["step_grid"])
    ]
    results = _execute_cells(cells, jobs)
    rows = []
    for i, (n, res) in enumerate(zip(ev["step_grid"], results)):
        rows.append({
            "experiment": cfg["kind"],
            "seed": cfg["seed"],
            "variant": i,
            "replicate": 0,
            "sampler": "iterative",
            "estimator": "oracle",
            "N": int(n),
            "n_inputs": ev["n_inputs"],
            **_metric_fields(res),
        })
    return list(rows[0].keys()), rows, int(np.sum(ev["step_grid"])), None


def _train_model_for(cfg, time_dist=None):
    """Train the configured regressor once; shared by the trained-estimator
    experiments.  Uses the documented derivation labels, so the identical
    model is reproducible from (seed, 'model-init'/'train-data'/'train')."""
    world = world_from_config(cfg["world"])
    tcfg = _train_config_from_section(
        cfg["train"], seed=derive_seed(cfg["seed"], "train"), time_dist=time_dist
    )
    init_rng = derive_rng(cfg["seed"], "model-init")
    model = MlpRegressor.create(
        world.dim, cfg["train"]["hidden"], init_rng,
        activation=cfg["train"]["activation"],
    )
    stream = world.pair_stream(derive_rng(cfg["seed"], "train-data"))
    return train(model, stream, tcfg)


def _run_sampler_compare(cfg, jobs, write):
    world = world_from_config(cfg["world"])
    schedule = schedule_from_config(cfg["sampler"]["schedule"])
    ev = cfg["eval"]
    x, y = world.sample_pairs(derive_rng(cfg["seed"], "inputs"), ev["n_inputs"])
    if ev["estimator"] == "trained":
        estimator, _ = _train_model_for(cfg)
        train_steps = cfg["train"]["steps"]
    else:
        estimator = world.oracle(schedule)
        train_steps = 0
    cells = []
    grid = [int(n) for n in ev["step_grid"]]
    for si, sampler_name in enumerate(ev["samplers"]):
        for ni, n in enumerate(grid):
            variant = si * len(grid) + ni
            cells.append(_base_eval_cell(
                cfg, world, schedule, sampler_name, n, variant=variant,
                replicate=0, x_ref=x, y=y, estimator=estimator,
                hit_threshold=ev["hit_threshold"],
            ))
    results = _execute_cells(cells, jobs)
    rows = []
    i = 0
    for sampler_name in ev["samplers"]:
        for n in grid:
            rows.append({
                "experiment": cfg["kind"],
                "seed": cfg["seed"],
                "variant": i,
                "replicate": 0,
                "sampler": sampler_name,
                "estimator": ev["estimator"],
                "N": n,
                "n_inputs": ev["n_inputs"],
                **_metric_fields(results[i]),
            })
            i += 1
    total = train_steps + len(ev["samplers"]) * int(np.sum(grid))
    return list(rows[0].keys()), rows, total, None


def _run_sweep_noise(cfg, jobs, write):
    world = world_from_config(cfg["world"])
    ev = cfg["eval"]
    x, y = world.sample_pairs(derive_rng(cfg["seed"], "inputs"), ev["n_inputs"])
    steps = cfg["sampler"]["steps"]
    cells = []
    descriptors = []
    for i, sd in enumerate(ev["schedules"]):
        schedule = schedule_from_config(sd, f"eval.schedules[{i}]")
        descriptors.append(sd)
        cells.append(_base_eval_cell(
            cfg, world, schedule, "iterative", steps, variant=i, replicate=0,
            x_ref=x, y=y, estimator=world.oracle(schedule),
            hit_threshold=ev["hit_threshold"],
        ))
    results = _execute_cells(cells, jobs)
    rows = []
    for i, (sd, res) in enumerate(zip(descriptors, results)):
        rows.append({
            "experiment": cfg["kind"],
            "seed": cfg["seed"],
            "variant": i,
            "replicate": 0,
            "sampler": "iterative",
            "estimator": "oracle",
            "schedule_kind": sd["kind"],
            "epsilon": sd.get("epsilon"),
            "N": steps,
            "n_inputs": ev["n_inputs"],
            **_metric_fields(res),
        })
    return list(rows[0].keys()), rows, steps * len(cells), None


def _training_row(cfg, variant, time_dist_kind, atom_a, res, checkpoint_name):
    ev = cfg["eval"]
    return {
        "experiment": cfg["kind"],
        "seed": cfg["seed"],
        "variant": variant,
        "replicate": 0,
        "time_dist": time_dist_kind,
        "atom_a": atom_a,
        "train_steps": cfg["train"]["steps"],
        "loss_initial": res["loss_initial"],
        "loss_final": res["loss_final"],
        "sampler": "iterative",
        "estimator": "trained",
        "N": cfg["sampler"]["steps"],
        "n_inputs": ev["n_inputs"],
        **_metric_fields(res),
        "checkpoint": checkpoint_name,
    }


def _train_eval_payload(cfg, world, schedule, time_dist, variant, x, y,
                        checkpoint_path):
    eval_cell = _base_eval_cell(
        cfg, world, schedule, "iterative", cfg["sampler"]["steps"],
        variant=variant, replicate=0, x_ref=x, y=y, estimator=None,
        hit_threshold=cfg["eval"]["hit_threshold"],
    )
    return {
        "op": "train_eval",
        "world": world,
        "master_seed": cfg["seed"],
        "init_labels": ["model-init"],
        "data_labels": ["train-data"],
        "hidden": list(cfg["train"]["hidden"]),
        "activation": cfg["train"]["activation"],
        "train_config": _train_config_from_section(
            cfg["train"], seed=derive_seed(cfg["seed"], "train"),
            time_dist=time_dist,
        ),
        "checkpoint_path": checkpoint_path,
        "eval_cell": eval_cell,
    }


def _run_sweep_pt(cfg, jobs, write):
    world = world_from_config(cfg["world"])
    schedule = schedule_from_config(cfg["sampler"]["schedule"])
    ev = cfg["eval"]
    x, y = world.sample_pairs(derive_rng(cfg["seed"], "inputs"), ev["n_inputs"])
    out_dir = Path(cfg["out_dir"])
    cells = []
    names = []
    for i, kind_name in enumerate(ev["time_dists"]):
        td = TimeDistribution(kind_name, a=float(ev["a"]))
        ckpt = str(out_dir / f"checkpoint_{kind_name}.bin") if write else None
        names.append((kind_name, ckpt))
        cells.append(_train_eval_payload(
            cfg, world, schedule, td, variant=i, x=x, y=y, checkpoint_path=ckpt,
        ))
    results = _execute_cells(cells, jobs)
    rows = []
    for i, ((kind_name, ckpt), res) in enumerate(zip(names, results)):
        atom_a = float(ev["a"]) if kind_name == "linear_a" else None
        rows.append(_training_row(
            cfg, i, kind_name, atom_a, res,
            None if ckpt is None else Path(ckpt).name,
        ))
    total = len(cells) * (cfg["train"]["steps"] + cfg["sampler"]["steps"])
    return list(rows[0].keys()), rows, total, None


def _run_train_restore(cfg, jobs, write):
    world = world_from_config(cfg["world"])
    schedule = schedule_from_config(cfg["sampler"]["schedule"])
    ev = cfg["eval"]
    x, y = world.sample_pairs(derive_rng(cfg["seed"], "inputs"), ev["n_inputs"])
    td = _time_dist_from_config(cfg["train"]["time_dist"], "train.time_dist")
    ckpt = str(Path(cfg["out_dir"]) / "checkpoint.bin") if write else None
    cell = _train_eval_payload(
        cfg, world, schedule, td, variant=0, x=x, y=y, checkpoint_path=ckpt,
    )
    res = _execute_cells([cell], jobs)[0]
    atom_a = td.a if td.kind == "linear_a" else None
    row = _training_row(
        cfg, 0, td.kind, atom_a, res, None if ckpt is None else Path(ckpt).name
    )
    total = cfg["train"]["steps"] + cfg["sampler"]["steps"]
    return list(row.keys()), [row], total, None


_RUNNERS = {
    "toy2d_a": _run_toy2d,
    "toy2d_b": _run_toy2d,
    "gauss1d": _run_gauss1d,
    "train_restore": _run_train_restore,
    "generate_from_noise": _run_generate_from_noise,
    "sweep_steps": _run_sweep_steps,
    "sweep_pt": _run_sweep_pt,
    "sweep_noise": _run_sweep_noise,
    "sampler_compare": _run_sampler_compare,
}


def run_experiment(config: dict, jobs: int = 1, write: bool = True,
                   formats=("csv", "json")) -> RunReport:
    """Resolve ``config``, run its experiment, and (unless ``write`` is
    False) emit the report files into the configured output directory.

    Deterministic given the config and seed; wall-clock timing lives only
    in the JSON meta block.
    """
    cfg = resolve_config(config)
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigError("jobs: must be an integer >= 1")
    if write:
        Path(cfg["out_dir"]).mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    columns, rows, total_steps, trajectory = _RUNNERS[cfg["kind"]](cfg, jobs, write)
    report = RunReport(
        kind=cfg["kind"],
        config=cfg,
        columns=columns,
        rows=rows,
        trajectory=trajectory,
        wall_clock_s=time.perf_counter() - start,
        total_steps=int(total_steps),
    )
    if write:
        emit_report(report, formats=formats)
    return report


def sweep_samplers(config: dict, **kwargs) -> RunReport:
    """Run a ``sampler_compare`` experiment (kind enforced)."""
    kind = config.get("kind", "sampler_compare")
    if kind != "sampler_compare":
        raise ConfigError(f"kind: sweep_samplers needs sampler_compare, got {kind!r}")
    return run_experiment({**config, "kind": "sampler_compare"}, **kwargs)


def sweep_pt(config: dict, **kwargs) -> RunReport:
    """Run a ``sweep_pt`` experiment (kind enforced)."""
    kind = config.get("kind", "sweep_pt")
    if kind != "sweep_pt":
        raise ConfigError(f"kind: sweep_pt needs kind sweep_pt, got {kind!r}")
    return run_experiment({**config, "kind": "sweep_pt"}, **kwargs)
