"""Experiment configuration files, seeded replications and trace persistence."""

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from stackbo import __version__
from stackbo.benchmarks import make_task
from stackbo.engine import ExperimentConfig, bo_run
from stackbo.surrogate import save_model

log = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1
WORKERS_ENV = "STACKBO_WORKERS"


class ConfigError(ValueError):
    pass


def _ints(text):
    return tuple(int(v) for v in text.replace(" ", "").strip(",").split(","))


def _floats(text):
    return tuple(float(v) for v in text.replace(" ", "").strip(",").split(","))


def _arch(text):
    parts = text.lower().replace(" ", "").split("x")
    if len(parts) != 2:
        raise ValueError(f"expected 'depth x width', got {text!r}")
    depth, width = int(parts[0]), int(parts[1])
    if depth < 1 or width < 1:
        raise ValueError("depth and width must be positive")
    return depth, width


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _seeds(text):
    text = text.strip()
    if "," in text:
        return _ints(text)
    n = int(text)
    if n < 1:
        raise ValueError("seed count must be >= 1")
    return tuple(range(n))


_SCALARS = {
    "task": str,
    "budget": float,
    "activation": str,
    "lr": float,
    "epochs_init": int,
    "epochs_retrain": int,
    "n_mc": int,
    "quad_order": int,
    "n_max_samples": int,
    "lbfgs_restarts": int,
    "lbfgs_iters": int,
    "max_iters": int,
    "informed_starts": _bool,
}


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines (``:`` also accepted, ``#`` starts a comment)."""
    values = {}
    archs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split(sep, 1))
        try:
            if key in _SCALARS:
                values[key] = _SCALARS[key](value)
            elif key == "seeds":
                values["seeds"] = _seeds(value)
            elif key == "init_counts":
                values["init_counts"] = _ints(value)
            elif key == "costs":
                values["costs"] = _floats(value)
            elif key == "arch":
                archs[0] = _arch(value)
            elif key.startswith("arch_") and key[5:].isdigit() and int(key[5:]) >= 1:
                archs[int(key[5:])] = _arch(value)
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: invalid value for {key!r}: {exc}") from None
    if "task" not in values:
        raise ConfigError(f"{source}: missing required key 'task'")
    if "budget" not in values:
        raise ConfigError(f"{source}: missing required key 'budget'")
    try:
        task = make_task(values["task"], values.get("costs"))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if archs:
        per = [k for k in archs if k >= 1]
        if per:
            if 0 in archs:
                default = archs[0]
            elif len(per) == task.M:
                default = None
            else:
                default = ExperimentConfig.archs[0]
            if any(k > task.M for k in per):
                raise ConfigError(f"{source}: task {task.name!r} has only {task.M} fidelities")
            values["archs"] = tuple(archs.get(m, default) for m in range(1, task.M + 1))
        else:
            values["archs"] = (archs[0],)
    if "seeds" in values:
        values["seed"] = values["seeds"][0]
    try:
        return ExperimentConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path))


def _fmt_list(vals):
    return ",".join(repr(v) for v in vals) + ("," if len(vals) == 1 else "")


def serialize_config(cfg):
    """Render a config so that ``parse_config_text`` reproduces it exactly."""
    lines = [
        f"task = {cfg.task}",
        f"budget = {cfg.budget!r}",
        f"seeds = {_fmt_list(cfg.seeds)}",
        f"init_counts = {_fmt_list(cfg.init_counts)}",
    ]
    if cfg.costs is not None:
        lines.append(f"costs = {_fmt_list(tuple(float(c) for c in cfg.costs))}")
    for m, (depth, width) in enumerate(cfg.archs, start=1):
        lines.append(f"arch_{m} = {depth}x{width}")
    for key in ("activation", "lr", "epochs_init", "epochs_retrain", "n_mc", "quad_order",
                "n_max_samples", "lbfgs_restarts", "lbfgs_iters"):
        val = getattr(cfg, key)
        lines.append(f"{key} = {val if isinstance(val, str) else repr(val)}")
    lines.append(f"informed_starts = {str(cfg.informed_starts).lower()}")
    if cfg.max_iters is not None:
        lines.append(f"max_iters = {cfg.max_iters}")
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()


# -- trace files ----------------------------------------------------------------


def _num(v):
    """Shortest round-trip text for a float; empty for missing values."""
    if v is None:
        return ""
    v = float(v)
    if not math.isfinite(v):
        return ""
    return repr(v)


def trace_header(d):
    return (["iteration", "fidelity"] + [f"x_{i}" for i in range(1, d + 1)]
            + ["y", "acq_score", "cum_cost", "simple_regret", "inference_regret"])


def write_trace_csv(trace, path):
    d = make_task(trace.config.task, trace.config.costs).domain.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_header(d))
    for r in trace.records:
        w.writerow([r.iteration, r.fidelity] + [_num(v) for v in r.x]
                   + [_num(r.y), _num(r.acq_score), _num(r.cum_cost),
                      _num(r.simple_regret), _num(r.inference_regret)])
    Path(path).write_text(buf.getvalue())


def write_design_csv(trace, path):
    d = make_task(trace.config.task, trace.config.costs).domain.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fidelity"] + [f"x_{i}" for i in range(1, d + 1)] + ["y"])
    for m, x, y in trace.initial_design:
        w.writerow([m] + [_num(v) for v in x] + [_num(y)])
    Path(path).write_text(buf.getvalue())


def emit_regret_curve(traces, out_path):
    """Long-format ``seed,cumulative_cost,simple_regret,inference_regret`` rows."""
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "cumulative_cost", "simple_regret", "inference_regret"])
    for tr in traces:
        for r in tr.records:
            w.writerow([tr.config.seed, _num(r.cum_cost), _num(r.simple_regret), _num(r.inference_regret)])
    Path(out_path).write_text(buf.getvalue())
    return Path(out_path)


# -- experiments --------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    seeds: list
    output_dir: str
    artifacts: list = field(default_factory=list)
    tool_version: str = __version__
    failures: dict = field(default_factory=dict)

    @property
    def exit_code(self):
        return 0 if not self.failures else 2


def _final(trace, attr):
    if not trace.records:
        if attr == "inference_regret":
            return trace.initial_inference_regret
        from stackbo.engine import simple_regret
        return simple_regret(make_task(trace.config.task, trace.config.costs), trace)
    return getattr(trace.records[-1], attr)


def _mean_se(vals):
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    if not vals:
        return None, None
    arr = np.asarray(vals)
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def _json_num(v):
    return None if v is None or not math.isfinite(v) else float(v)


def summarize(traces):
    per_seed = []
    for tr in traces:
        task = make_task(tr.config.task, tr.config.costs)
        per_seed.append({
            "seed": tr.config.seed,
            "completed": tr.completed,
            "error": tr.error,
            "iterations": len(tr.records),
            "total_cost": tr.records[-1].cum_cost if tr.records else 0.0,
            "queries_per_fidelity": [sum(r.fidelity == m for r in tr.records) for m in range(1, task.M + 1)],
            "final_simple_regret": _json_num(_final(tr, "simple_regret")),
            "final_inference_regret": _json_num(_final(tr, "inference_regret")),
            "initial_inference_regret": _json_num(tr.initial_inference_regret),
        })
    sr_mean, sr_se = _mean_se([p["final_simple_regret"] for p in per_seed])
    ir_mean, ir_se = _mean_se([p["final_inference_regret"] for p in per_seed])
    return {
        "schema_version": TRACE_SCHEMA_VERSION,
        "per_seed": per_seed,
        "simple_regret": {"mean": sr_mean, "standard_error": sr_se},
        "inference_regret": {"mean": ir_mean, "standard_error": ir_se},
    }


def _run_one(cfg):
    return bo_run(cfg)


def run_experiment(cfg, out_dir, seeds=None, workers=None):
    """Run ``bo_run`` for every seed and write traces, curve, summary and manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    cfg = replace(cfg, seeds=seeds, seed=seeds[0])
    cfgs = [replace(cfg, seed=s) for s in seeds]
    workers = workers or int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(cfgs))) as pool:
            traces = list(pool.map(_run_one, cfgs))
    else:
        traces = [_run_one(c) for c in cfgs]

    manifest = RunManifest(config_hash(cfg), list(seeds), str(out))
    (out / "config.txt").write_text(serialize_config(cfg))
    manifest.artifacts.append("config.txt")
    for tr in traces:
        s = tr.config.seed
        for name, writer in ((f"trace_seed{s}.csv", write_trace_csv), (f"design_seed{s}.csv", write_design_csv)):
            writer(tr, out / name)
            manifest.artifacts.append(name)
        if tr.model is not None:
            save_model(tr.model, out / f"model_seed{s}.json")
            manifest.artifacts.append(f"model_seed{s}.json")
        if not tr.completed:
            manifest.failures[str(s)] = tr.error
    emit_regret_curve(traces, out / "regret_curve.csv")
    manifest.artifacts.append("regret_curve.csv")
    (out / "summary.json").write_text(json.dumps(summarize(traces), indent=2) + "\n")
    manifest.artifacts.append("summary.json")
    manifest_dict = asdict(manifest)
    manifest_dict["exit_code"] = manifest.exit_code
    manifest.artifacts.append("manifest.json")
    manifest_dict["artifacts"] = manifest.artifacts
    (out / "manifest.json").write_text(json.dumps(manifest_dict, indent=2) + "\n")
    return manifest, traces
