"""Experiment runner: configs in, traces and summaries out.

A run is described by a JSON config (testbed, solver, convexity class,
iteration budget, seeds, optional noise / feasible set / overrides).
Running it produces:

* ``trace.csv`` with the fixed columns
  ``k,cum_gc_f,cum_gc_g,cum_hc_g,f_gap,grad_norm_sq,bound_value,wall_ms``
  (one row per outer iteration; ``wall_ms`` is written as 0.0 so traces
  are byte-reproducible, total wall time lives in the summary);
* ``bound.csv`` with the evaluated theoretical bound when its constants
  are available;
* ``summary.json`` with final metrics, counters, fitted slopes, the
  config echo and warnings, validating against ``SUMMARY_SCHEMA``;
* for seed ensembles, per-seed subdirectories plus ``mean_trace.csv``
  with across-seed means and standard errors.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .aba import aba_run, aba_schedule
from .ba import ba_run, ba_schedule
from .bounds import BoundInputs, BoundUnavailable, bound_curve
from .bsa import bsa_ensemble, bsa_run, bsa_schedule
from .fitting import SlopeFit, fit_rate
from .problem import FeasibleSet, NoiseSpec
from .testbeds import QuadraticBilevel, RidgeHyperTune, Scalar1D, StackelbergQuad, make_stochastic
from .trace import RunTrace

TRACE_COLUMNS = ("k", "cum_gc_f", "cum_gc_g", "cum_hc_g",
                 "f_gap", "grad_norm_sq", "bound_value", "wall_ms")
MEAN_TRACE_COLUMNS = ("k", "f_gap_mean", "f_gap_stderr",
                      "grad_norm_sq_mean", "grad_norm_sq_stderr", "bound_value")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    testbed: dict
    solver: str
    convexity_class: str
    N: int
    seeds: tuple[int, ...] = (0,)
    feasible_set: dict | None = None
    x0: list | None = None
    y0: list | None = None
    noise: dict | None = None
    flags: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {"testbed", "solver", "convexity_class", "N", "seed", "seeds",
                 "feasible_set", "x0", "y0", "noise", "flags", "overrides"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("testbed", "solver", "convexity_class", "N"):
            if key not in raw:
                raise ConfigError(f"config missing required key {key!r}")
        solver = raw["solver"]
        cclass = raw["convexity_class"]
        if solver not in ("ba", "aba", "bsa"):
            raise ConfigError(f"solver must be ba, aba or bsa, got {solver!r}")
        if cclass not in ("strongly_convex", "convex", "nonconvex"):
            raise ConfigError(f"invalid convexity_class {cclass!r}")
        if solver == "aba" and cclass == "nonconvex":
            raise ConfigError("the accelerated solver has no nonconvex preset")
        if solver == "bsa" and not raw.get("noise"):
            raise ConfigError("bsa requires a noise spec")
        if solver != "bsa" and raw.get("noise"):
            raise ConfigError(f"{solver} is an exact-mode solver; remove the noise spec")
        N = raw["N"]
        if not isinstance(N, int) or N < 1:
            raise ConfigError("N must be a positive integer")
        if "seed" in raw and "seeds" in raw:
            raise ConfigError("give either seed or seeds, not both")
        if "seeds" in raw:
            seeds = tuple(int(s) for s in raw["seeds"])
            if not seeds:
                raise ConfigError("seeds must be nonempty")
            if solver != "bsa" and len(seeds) > 1:
                raise ConfigError("seed ensembles exist for bsa only")
        else:
            seeds = (int(raw.get("seed", 0)),)
        return cls(testbed=raw["testbed"], solver=solver, convexity_class=cclass,
                   N=N, seeds=seeds, feasible_set=raw.get("feasible_set"),
                   x0=raw.get("x0"), y0=raw.get("y0"), noise=raw.get("noise"),
                   flags=raw.get("flags") or {}, overrides=raw.get("overrides") or {})

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)


def build_testbed(spec: dict):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("testbed spec needs a 'kind'")
    kind = spec["kind"]
    params = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "scalar1d":
            return Scalar1D(**params)
        if kind == "quadratic":
            return QuadraticBilevel.from_spec(**params)
        if kind == "ridge":
            return RidgeHyperTune(**params)
        if kind == "stackelberg":
            return StackelbergQuad.from_spec(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad testbed spec: {exc}") from exc
    raise ConfigError(f"unknown testbed kind {kind!r}")


def build_feasible(spec: dict | None, dim_x: int) -> FeasibleSet:
    if spec is None:
        return FeasibleSet.all_space()
    kind = spec.get("kind")
    try:
        if kind == "all_space":
            return FeasibleSet.all_space()
        if kind == "box":
            return FeasibleSet.box(spec["lower"], spec["upper"])
        if kind == "ball":
            return FeasibleSet.ball(spec["center"], spec["radius"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad feasible_set spec: {exc}") from exc
    raise ConfigError(f"unknown feasible_set kind {kind!r}")


# ---------------------------------------------------------------------------
# Reference values
# ---------------------------------------------------------------------------


def constrained_optimum(problem, feasible: FeasibleSet):
    """Minimizer and value of the composed objective over the feasible set.

    Analytic when the set is the whole space or contains the
    unconstrained minimizer; otherwise a numerical solve with the exact
    composed gradient (reported as such).
    """
    x_unc = np.atleast_1d(np.asarray(problem.x_star, dtype=float))
    if feasible.kind == "all_space" or feasible.contains(x_unc, tol=1e-9):
        return x_unc, float(problem.composed_value(x_unc)), "analytic"
    from scipy.optimize import minimize

    fun = lambda x: float(problem.composed_value(x))
    jac = lambda x: np.asarray(problem.composed_grad(x), dtype=float)
    x_init = feasible.project(x_unc)
    if feasible.kind == "box":
        res = minimize(fun, x_init, jac=jac, method="L-BFGS-B",
                       bounds=list(zip(feasible.lower, feasible.upper)),
                       options={"ftol": 1e-14, "gtol": 1e-12})
    else:
        cons = [{"type": "ineq",
                 "fun": lambda x: feasible.radius ** 2 - float(np.sum((x - feasible.center) ** 2)),
                 "jac": lambda x: -2.0 * (x - feasible.center)}]
        res = minimize(fun, x_init, jac=jac, method="SLSQP", constraints=cons,
                       options={"ftol": 1e-14, "maxiter": 500})
    return np.atleast_1d(res.x), float(res.fun), "numeric"


def bound_inputs_for(problem, feasible: FeasibleSet, x0, y0,
                     noise: NoiseSpec | None, x_ref, f_star: float) -> BoundInputs:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    M = problem.max_inner_start_distance(feasible, y0)
    totals = noise.totals(problem.dim_x, problem.dim_y) if noise is not None else None
    return BoundInputs(
        constants=problem.constants,
        gap0=float(problem.composed_value(x0)) - f_star,
        dist0_sq=float(np.sum((np.atleast_1d(x_ref) - x0) ** 2)),
        M=M if math.isfinite(M) else None,
        D_X=feasible.diameter() if math.isfinite(feasible.diameter()) else None,
        noise_totals=totals,
    )


def complexity_at(trace: RunTrace, eps: float) -> dict | None:
    """Counters at the first budget whose reported gap is at most eps."""
    hits = np.nonzero(trace.f_gap <= eps)[0]
    if hits.size == 0:
        return None
    k = int(hits[0])
    return {"N": k + 1, "gc_f": int(trace.gc_f[k]), "gc_g": int(trace.gc_g[k]),
            "hc_g": int(trace.hc_g[k])}


# ---------------------------------------------------------------------------
# File writers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    xf = float(x)
    if math.isnan(xf):
        return ""
    return repr(xf)


def write_trace_csv(trace: RunTrace, path) -> None:
    lines = [",".join(TRACE_COLUMNS)]
    bounds = trace.bound_value
    for k in range(trace.N):
        b = "" if bounds is None else _fmt(bounds[k])
        lines.append(",".join([
            str(k), str(int(trace.gc_f[k])), str(int(trace.gc_g[k])),
            str(int(trace.hc_g[k])), _fmt(trace.f_gap[k]),
            _fmt(trace.grad_norm_sq[k]), b, _fmt(0.0),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_bound_csv(bounds: np.ndarray, path) -> None:
    lines = ["N,bound_value"]
    for k, b in enumerate(bounds):
        lines.append(f"{k + 1},{_fmt(b)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_mean_trace_csv(ks, gap_mean, gap_se, grad_mean, grad_se, bounds, path) -> None:
    lines = [",".join(MEAN_TRACE_COLUMNS)]
    for i, k in enumerate(ks):
        b = "" if bounds is None else _fmt(bounds[i])
        lines.append(",".join([str(int(k)), _fmt(gap_mean[i]), _fmt(gap_se[i]),
                               _fmt(grad_mean[i]), _fmt(grad_se[i]), b]))
    Path(path).write_text("\n".join(lines) + "\n")


SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["library_version", "solver", "convexity_class", "N", "seeds",
                 "config", "final", "bound", "f_star", "wall_ms_total", "warnings"],
    "properties": {
        "library_version": {"type": "string"},
        "solver": {"enum": ["ba", "aba", "bsa"]},
        "convexity_class": {"enum": ["strongly_convex", "convex", "nonconvex"]},
        "N": {"type": "integer", "minimum": 0},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "config": {"type": "object"},
        "final": {
            "type": "object",
            "required": ["f_gap", "grad_norm_sq", "counters"],
            "properties": {
                "f_gap": {"type": ["number", "null"]},
                "grad_norm_sq": {"type": ["number", "null"]},
                "mean_grad_norm_sq": {"type": ["number", "null"]},
                "f_gap_stderr": {"type": ["number", "null"]},
                "counters": {
                    "type": "object",
                    "required": ["gc_f", "gc_g", "hc_g"],
                    "properties": {k: {"type": "integer"} for k in ("gc_f", "gc_g", "hc_g")},
                },
            },
        },
        "slopes": {"type": ["object", "null"]},
        "bound": {
            "type": "object",
            "required": ["id", "available"],
            "properties": {
                "id": {"type": ["string", "null"]},
                "available": {"type": "boolean"},
                "final_value": {"type": ["number", "null"]},
            },
        },
        "f_star": {
            "type": "object",
            "required": ["value", "mode"],
            "properties": {"value": {"type": "number"},
                           "mode": {"enum": ["analytic", "numeric", "surrogate"]}},
        },
        "numerical_failure": {"type": ["string", "null"]},
        "wall_ms_total": {"type": "number"},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "trace_files": {"type": "array", "items": {"type": "string"}},
    },
}


def validate_summary(summary: dict) -> None:
    """Check a summary against SUMMARY_SCHEMA without external dependencies."""
    for key in SUMMARY_SCHEMA["required"]:
        if key not in summary:
            raise ValueError(f"summary missing required key {key!r}")
    if summary["solver"] not in ("ba", "aba", "bsa"):
        raise ValueError("bad solver in summary")


# ---------------------------------------------------------------------------
# Running experiments
# ---------------------------------------------------------------------------


def _slope_summary(trace: RunTrace) -> dict | None:
    if trace.N < 10:
        return None
    lo = max(2, trace.N // 10)
    try:
        fit = fit_rate(trace.f_gap, (lo, trace.N))
    except ValueError:
        return None
    return {k: (v if not isinstance(v, tuple) else list(v)) for k, v in asdict(fit).items()}


def _run_solver(cfg: ExperimentConfig, problem, feasible, x0, y0, f_star):
    flags = cfg.flags
    cold = bool(flags.get("cold_start", False))
    alpha_override = cfg.overrides.get("alpha")
    try:
        if cfg.solver == "ba":
            sched = ba_schedule(cfg.convexity_class, problem.constants, cfg.N,
                                alpha_override=alpha_override,
                                t_const=cfg.overrides.get("t_const"))
        elif cfg.solver == "aba":
            sched = aba_schedule(cfg.convexity_class, problem.constants, cfg.N,
                                 alpha_override=alpha_override)
        else:
            sched = bsa_schedule(
                cfg.convexity_class, problem.constants, cfg.N, seeds=cfg.seeds,
                exact_paper_schedule=bool(flags.get("exact_paper_schedule", False)),
                alpha_override=alpha_override)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if cfg.solver == "ba":
        trace = ba_run(problem.exact_oracle(), feasible, x0, y0, sched,
                       cold_start=cold, seed=cfg.seeds[0], f_star=f_star,
                       on_failure="partial")
        return [trace], None
    if cfg.solver == "aba":
        trace = aba_run(problem.exact_oracle(), feasible, x0, y0, sched,
                        cold_start=cold, f_star=f_star, on_failure="partial")
        return [trace], None
    noise = NoiseSpec(**cfg.noise)
    if len(cfg.seeds) == 1:
        oracle = make_stochastic(problem, noise, cfg.seeds[0])
        trace = bsa_run(oracle, feasible, x0, y0, sched, cold_start=cold,
                        f_star=f_star, on_failure="partial")
        return [trace], None
    summary = bsa_ensemble(problem, noise, feasible, x0, y0, sched,
                           cold_start=cold, f_star=f_star)
    return summary.traces, summary


def run_experiment(config: ExperimentConfig | dict, out_dir,
                   seed_override: int | None = None) -> dict:
    """Execute one configured run (or seed ensemble) and write artifacts.

    Returns the summary dict.  Raises :class:`ConfigError` for invalid
    configs; numerical failures inside the solver loop are caught, the
    partial trace is flushed, and the summary records the failure (the
    CLI maps this to exit code 3).
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    if seed_override is not None:
        raw = _config_echo(config)
        raw.pop("seed", None)
        raw.pop("seeds", None)
        if len(config.seeds) == 1:
            raw["seed"] = int(seed_override)
        else:
            raw["seeds"] = [int(seed_override) + i for i in range(len(config.seeds))]
        config = ExperimentConfig.from_dict(raw)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    problem = build_testbed(config.testbed)
    feasible = build_feasible(config.feasible_set, problem.dim_x)
    x0 = np.zeros(problem.dim_x) if config.x0 is None else np.asarray(config.x0, dtype=float)
    x0 = np.atleast_1d(x0)
    if not feasible.contains(x0, tol=1e-9):
        raise ConfigError("x0 is not in the feasible set")
    y0 = np.zeros(problem.dim_y) if config.y0 is None else np.atleast_1d(np.asarray(config.y0, dtype=float))
    if x0.shape != (problem.dim_x,) or y0.shape != (problem.dim_y,):
        raise ConfigError("x0 / y0 dimensions do not match the testbed")

    warnings: list[str] = []
    x_ref, f_star, f_star_mode = constrained_optimum(problem, feasible)

    t_start = time.perf_counter()
    traces, ensemble = _run_solver(config, problem, feasible, x0, y0, f_star)
    wall_ms = (time.perf_counter() - t_start) * 1000.0
    failure = traces[0].meta.get("numerical_failure") if traces else None

    noise = NoiseSpec(**config.noise) if config.noise else None
    bound_id = f"{config.solver}/{config.convexity_class}"
    bounds = None
    bound_id_out = None
    if traces and traces[0].N > 0:
        try:
            inp = bound_inputs_for(problem, feasible, x0, y0, noise, x_ref, f_star)
            bounds = bound_curve(bound_id, traces[0].N, inp)
            for t in traces:
                t.bound_value = bounds
                t.bound_id = bound_id
        except BoundUnavailable as exc:
            warnings.append(f"bound {bound_id} unavailable: {exc}")
        else:
            bound_id_out = bound_id

    trace_files = []
    if len(traces) == 1:
        write_trace_csv(traces[0], out / "trace.csv")
        trace_files.append("trace.csv")
    else:
        for seed, t in zip(config.seeds, traces):
            sub = out / f"seed_{seed}"
            sub.mkdir(exist_ok=True)
            write_trace_csv(t, sub / "trace.csv")
            trace_files.append(f"seed_{seed}/trace.csv")
    if bounds is not None:
        write_bound_csv(bounds, out / "bound.csv")
    if ensemble is not None:
        write_mean_trace_csv(np.arange(ensemble.f_gap_mean.size),
                             ensemble.f_gap_mean, ensemble.f_gap_se,
                             ensemble.grad_norm_sq_mean, ensemble.grad_norm_sq_se,
                             bounds, out / "mean_trace.csv")
        trace_files.append("mean_trace.csv")

    if traces:
        last = traces[0]
        if ensemble is not None:
            final = {
                "f_gap": ensemble.final_f_gap_mean,
                "f_gap_stderr": ensemble.final_f_gap_se,
                "grad_norm_sq": float(ensemble.grad_norm_sq_mean[-1]),
                "mean_grad_norm_sq": ensemble.grad_at_R_mean,
                "counters": {"gc_f": int(last.gc_f[-1]), "gc_g": int(last.gc_g[-1]),
                             "hc_g": int(last.hc_g[-1])},
            }
        else:
            final = {
                "f_gap": float(last.f_gap[-1]) if last.N else None,
                "grad_norm_sq": float(last.grad_norm_sq[-1]) if last.N else None,
                "mean_grad_norm_sq": last.mean_grad_norm_sq() if last.N else None,
                "counters": {"gc_f": int(last.gc_f[-1]) if last.N else 0,
                             "gc_g": int(last.gc_g[-1]) if last.N else 0,
                             "hc_g": int(last.hc_g[-1]) if last.N else 0},
            }
        slopes = _slope_summary(traces[0]) if ensemble is None else None
    else:
        final = {"f_gap": None, "grad_norm_sq": None,
                 "counters": {"gc_f": 0, "gc_g": 0, "hc_g": 0}}
        slopes = None

    summary = {
        "library_version": __version__,
        "solver": config.solver,
        "convexity_class": config.convexity_class,
        "N": config.N,
        "seeds": list(config.seeds),
        "config": _config_echo(config),
        "final": final,
        "slopes": slopes,
        "bound": {
            "id": bound_id_out,
            "available": bounds is not None,
            "final_value": (float(bounds[-1]) if bounds is not None
                            and math.isfinite(bounds[-1]) else None),
        },
        "f_star": {"value": f_star, "mode": f_star_mode},
        "numerical_failure": failure,
        "wall_ms_total": wall_ms,
        "warnings": warnings,
        "trace_files": trace_files,
    }
    validate_summary(summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = {"testbed": cfg.testbed, "solver": cfg.solver,
            "convexity_class": cfg.convexity_class, "N": cfg.N}
    if len(cfg.seeds) == 1:
        echo["seed"] = cfg.seeds[0]
    else:
        echo["seeds"] = list(cfg.seeds)
    for key, val in (("feasible_set", cfg.feasible_set), ("x0", cfg.x0),
                     ("y0", cfg.y0), ("noise", cfg.noise)):
        if val is not None:
            echo[key] = val
    if cfg.flags:
        echo["flags"] = cfg.flags
    if cfg.overrides:
        echo["overrides"] = cfg.overrides
    return echo
