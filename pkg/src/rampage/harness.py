"""Experiment orchestration: Monte Carlo trial batches, edge-of-stability step
discovery, aggregation into summaries, and deterministic CSV/JSON emission.

Everything downstream of a config file and a master seed is a pure function of
the two: trial t draws from the stream keyed by (master seed, t), and emitted
files are byte-identical across re-runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .fields import (
    FeasibleSet,
    FieldSpec,
    NoiseModel,
    default_initial_point,
    exact_noise,
    feasible_set_from_dict,
    feasible_set_to_dict,
    field_from_dict,
    field_to_dict,
    noise_from_dict,
    noise_to_dict,
    whole_space,
)
from .solvers import (
    EG,
    METHODS,
    SolverConfig,
    Trace,
    constant_schedule,
    run_batch,
    run_solver,
)

TRACE_COLUMNS = ("method", "eta", "seed", "trial", "iter", "residual_sq", "dist_sq",
                 "gap", "step_size", "u", "diverged")


class SearchFailedError(RuntimeError):
    """Edge search could not certify a convergent/divergent bracket."""

    def __init__(self, message: str, probes=None):
        super().__init__(message)
        self.probes = probes or []


@dataclass
class ExperimentConfig:
    label: str
    field: FieldSpec
    methods: List[str]
    etas: List[float] = field(default_factory=list)
    edge_search: Optional[dict] = None
    trials: int = 100
    max_iters: int = 10_000
    seed: int = 0
    theta0: Optional[np.ndarray] = None
    theta_star: Optional[np.ndarray] = None
    feasible_set: FeasibleSet = field(default_factory=whole_space)
    noise: NoiseModel = field(default_factory=exact_noise)
    divergence_threshold: float = 1e8
    record_stride: Optional[int] = None
    out_dir: Optional[str] = None

    def __post_init__(self):
        if not self.methods:
            raise ValueError("method list must not be empty")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.etas and self.edge_search is None:
            raise ValueError("need a step-size list or an edge-search directive")
        if self.theta0 is not None:
            self.theta0 = np.asarray(self.theta0, dtype=float)
            if self.theta0.shape != (self.field.dimension,):
                raise ValueError("theta0 dimension does not match the field")
        if self.theta_star is not None:
            self.theta_star = np.asarray(self.theta_star, dtype=float)

    def initial_point(self) -> np.ndarray:
        return self.theta0 if self.theta0 is not None else default_initial_point(self.field)


def experiment_config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "label": config.label,
        "field": field_to_dict(config.field),
        "methods": list(config.methods),
        "etas": [float(e) for e in config.etas],
        "edge_search": config.edge_search,
        "trials": config.trials,
        "max_iters": config.max_iters,
        "seed": config.seed,
        "theta0": None if config.theta0 is None else config.theta0.tolist(),
        "theta_star": None if config.theta_star is None else config.theta_star.tolist(),
        "feasible_set": feasible_set_to_dict(config.feasible_set),
        "noise": noise_to_dict(config.noise),
        "divergence_threshold": config.divergence_threshold,
        "record_stride": config.record_stride,
        "out_dir": config.out_dir,
    }


def experiment_config_from_dict(d: dict) -> ExperimentConfig:
    return ExperimentConfig(
        label=d.get("label", "experiment"),
        field=field_from_dict(d["field"]),
        methods=list(d["methods"]),
        etas=[float(e) for e in d.get("etas", [])],
        edge_search=d.get("edge_search"),
        trials=int(d.get("trials", 100)),
        max_iters=int(d.get("max_iters", 10_000)),
        seed=int(d.get("seed", 0)),
        theta0=d.get("theta0"),
        theta_star=d.get("theta_star"),
        feasible_set=feasible_set_from_dict(d.get("feasible_set") or {"kind": "whole_space"}),
        noise=noise_from_dict(d.get("noise") or {"kind": "exact"}),
        divergence_threshold=float(d.get("divergence_threshold", 1e8)),
        record_stride=d.get("record_stride"),
        out_dir=d.get("out_dir"),
    )


def load_experiment_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return experiment_config_from_dict(json.load(fh))


def config_hash(config: ExperimentConfig) -> str:
    payload = json.dumps(experiment_config_to_dict(config), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# -- edge-of-stability search ---------------------------------------------------

CONVERGED = "converged"
DIVERGED = "diverged"
STALLED = "stalled"


@dataclass
class EdgeSearchResult:
    eta_converge: float
    eta_diverge: float
    diverge_class: str
    probes: List[Tuple[float, str]]

    def width(self) -> float:
        return self.eta_diverge - self.eta_converge


def classify_run(spec: FieldSpec, theta0, eta: float, method: str = EG,
                 max_iters: int = 10_000, convergence_tol: float = 1e-12,
                 divergence_threshold: float = 1e8, seed: int = 0) -> str:
    """One probe: converged (best residual below tolerance), diverged (norm blew
    past the threshold or went non-finite), or stalled (neither within budget)."""
    cfg = SolverConfig(method=method, schedule=constant_schedule(eta), max_iters=max_iters,
                       seed=seed, divergence_threshold=divergence_threshold,
                       record_stride=max_iters)
    tr = run_solver(spec, cfg, theta0)
    if tr.diverged:
        return DIVERGED
    if tr.min_residual_sq < convergence_tol:
        return CONVERGED
    return STALLED


def edge_of_stability_search(spec: FieldSpec, theta0, eta_lo: float, eta_hi: float,
                             method: str = EG, max_iters: int = 10_000, tol: float = 1e-3,
                             convergence_tol: float = 1e-12,
                             divergence_threshold: float = 1e8, seed: int = 0,
                             max_expand: int = 40) -> EdgeSearchResult:
    """Bisect the boundary of the convergent step-size region.

    The unstable side accepts both hard divergence and plain failure to converge
    within budget: several zoo fields fail through bounded non-convergent orbits
    before the norm ever blows up, and near any boundary the escape time exceeds
    every finite budget. The returned ``diverge_class`` reports which failure the
    returned eta_diverge exhibits.
    """
    if eta_lo <= 0 or eta_hi <= eta_lo:
        raise ValueError("need 0 < eta_lo < eta_hi")
    probes: List[Tuple[float, str]] = []

    def probe(eta):
        c = classify_run(spec, theta0, eta, method=method, max_iters=max_iters,
                         convergence_tol=convergence_tol,
                         divergence_threshold=divergence_threshold, seed=seed)
        probes.append((eta, c))
        return c

    lo, hi = float(eta_lo), float(eta_hi)
    for _ in range(max_expand):
        if probe(lo) == CONVERGED:
            break
        lo *= 0.5
    else:
        raise SearchFailedError(f"no convergent step found at or below {eta_lo}", probes)
    hi_class = probe(hi)
    for _ in range(max_expand):
        if hi_class != CONVERGED:
            break
        hi *= 2.0
        hi_class = probe(hi)
    else:
        raise SearchFailedError(f"no unstable step found at or above {eta_hi}", probes)

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        c = probe(mid)
        if c == CONVERGED:
            lo = mid
        else:
            hi = mid
            hi_class = c
    return EdgeSearchResult(eta_converge=lo, eta_diverge=hi,
                            diverge_class=hi_class, probes=probes)


# -- aggregation -----------------------------------------------------------------

@dataclass
class TrialSummary:
    method: str
    eta: float
    master_seed: int
    trials: int
    divergence_count: int
    iters: np.ndarray
    mean_residual_sq: np.ndarray
    q10_residual_sq: np.ndarray
    q50_residual_sq: np.ndarray
    q90_residual_sq: np.ndarray
    best_residual_sq: np.ndarray  # per-trial minimum over the whole run
    final_residual_sq: np.ndarray  # per-trial last value; +inf once diverged


def aggregate(traces: Sequence[Trace]) -> TrialSummary:
    """Per-iteration mean and 10/50/90 order-statistic quantiles across trials.

    Diverged trials contribute +inf from their divergence iteration onward, so
    the mean and upper quantiles saturate honestly instead of silently dropping
    failures. All traces must share method, step size, and recording stride.
    """
    if not traces:
        raise ValueError("no traces to aggregate")
    t0 = traces[0]
    for tr in traces:
        if tr.method != t0.method or tr.record_stride != t0.record_stride:
            raise ValueError("traces mix methods or recording strides")
        if not (tr.eta == t0.eta or (math.isnan(tr.eta) and math.isnan(t0.eta))):
            raise ValueError("traces mix step sizes")
    grid_src = max(traces, key=lambda tr: tr.iters[-1])
    grid = grid_src.iters
    n = len(traces)
    values = np.full((n, len(grid)), np.inf)
    finals = np.full(n, np.inf)
    for i, tr in enumerate(traces):
        live = min(len(tr.iters), len(grid))
        if tr.diverged:
            live = int(np.searchsorted(grid, tr.diverged_iter))
        values[i, :live] = tr.residual_sq[:live]
        if not tr.diverged:
            finals[i] = tr.residual_sq[-1]
    best = np.array([tr.min_residual_sq for tr in traces])
    q10, q50, q90 = np.quantile(values, [0.1, 0.5, 0.9], axis=0, method="lower")
    return TrialSummary(
        method=t0.method,
        eta=t0.eta,
        master_seed=t0.seed,
        trials=n,
        divergence_count=sum(tr.diverged for tr in traces),
        iters=grid.copy(),
        mean_residual_sq=values.mean(axis=0),
        q10_residual_sq=q10,
        q50_residual_sq=q50,
        q90_residual_sq=q90,
        best_residual_sq=best,
        final_residual_sq=finals,
    )


def band_width(summary: TrialSummary, at: int = -1) -> float:
    """10-90% inter-quantile residual band width at a recorded iteration index."""
    lo = summary.q10_residual_sq[at]
    hi = summary.q90_residual_sq[at]
    if math.isinf(hi):
        return math.inf
    return float(hi - lo)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    summaries: Dict[Tuple[str, float], TrialSummary]
    traces: Dict[Tuple[str, float], List[Trace]]
    edge_result: Optional[EdgeSearchResult] = None
    written: List[str] = field(default_factory=list)


def run_trials(config: ExperimentConfig, gap_fn=None) -> ExperimentResult:
    """Run the full method-by-step-size grid of Monte Carlo trials.

    All methods share the initialization and the step sizes; an edge-search
    directive contributes its bracket pair to the step list, matching the
    benchmark protocol of one convergent and one unstable setting. Trial t uses
    stream id t under the master seed, so the result is reproducible bit for
    bit. Divergence is recorded per trial, never raised. Output files are
    written when the config names an output directory.
    """
    theta0 = config.initial_point()
    etas = [float(e) for e in config.etas]
    edge_result = None
    if config.edge_search is not None:
        d = dict(config.edge_search)
        edge_result = edge_of_stability_search(
            config.field, theta0, float(d["eta_lo"]), float(d["eta_hi"]),
            method=d.get("method", EG), max_iters=int(d.get("max_iters", config.max_iters)),
            tol=float(d.get("tol", 1e-3)),
            convergence_tol=float(d.get("convergence_tol", 1e-12)),
            divergence_threshold=config.divergence_threshold, seed=config.seed)
        etas.extend([edge_result.eta_converge, edge_result.eta_diverge])

    summaries: Dict[Tuple[str, float], TrialSummary] = {}
    traces: Dict[Tuple[str, float], List[Trace]] = {}
    for method in config.methods:
        for eta in etas:
            solver_cfg = SolverConfig(
                method=method, schedule=constant_schedule(eta), max_iters=config.max_iters,
                feasible_set=config.feasible_set, noise=config.noise, seed=config.seed,
                divergence_threshold=config.divergence_threshold,
                record_stride=config.record_stride)
            batch = run_batch(config.field, solver_cfg, theta0,
                              stream_ids=range(config.trials),
                              theta_star=config.theta_star, gap_fn=gap_fn)
            summaries[(method, eta)] = aggregate(batch)
            traces[(method, eta)] = batch

    result = ExperimentResult(config=config, summaries=summaries, traces=traces,
                              edge_result=edge_result)
    if config.out_dir:
        flat = [tr for key in traces for tr in traces[key]]
        result.written = emit(list(summaries.values()), flat, "csv", config.out_dir,
                              master_seed=config.seed, config_digest=config_hash(config))
        result.written += emit(list(summaries.values()), flat, "json", config.out_dir,
                               master_seed=config.seed, config_digest=config_hash(config))
    return result


# -- emission ---------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return repr(x)
    return str(x)


def trace_rows(trace: Trace):
    """Yield the pinned CSV schema rows for one trace."""
    n = len(trace.iters)
    for j in range(n):
        div = trace.diverged and j == n - 1
        yield (
            trace.method,
            _fmt(trace.eta),
            str(trace.seed),
            str(trace.trial),
            str(int(trace.iters[j])),
            _fmt(float(trace.residual_sq[j])),
            _fmt(float(trace.dist_sq[j])) if trace.dist_sq is not None else "",
            _fmt(float(trace.gap[j])) if trace.gap is not None else "",
            _fmt(float(trace.step_size[j])),
            _fmt(float(trace.u[j])),
            "1" if div else "0",
        )


def _header_line(master_seed: int, config_digest: str) -> str:
    return f"# master_seed={master_seed} config_hash={config_digest} version={__version__}"


def emit(summaries, traces: Sequence[Trace], format: str, path: str,
         master_seed: int = 0, config_digest: str = "") -> List[str]:
    """Write traces as CSV or summaries as JSON under ``path``.

    Every file carries the master seed, config hash, and artifact version: as a
    leading comment line in CSV, and as top-level keys in JSON (a comment line
    would not survive a JSON parser).
    """
    os.makedirs(path, exist_ok=True)
    written = []
    if format == "csv":
        out = os.path.join(path, "traces.csv")
        try:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                fh.write(_header_line(master_seed, config_digest) + "\n")
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(TRACE_COLUMNS)
                for tr in traces:
                    writer.writerows(trace_rows(tr))
        except OSError as exc:
            raise OSError(f"failed writing {out}: {exc}") from exc
        written.append(out)
    elif format == "json":
        out = os.path.join(path, "summary.json")
        payload = {
            "master_seed": master_seed,
            "config_hash": config_digest,
            "version": __version__,
            "summaries": [summary_to_dict(s) for s in summaries],
        }
        try:
            with open(out, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=1)
                fh.write("\n")
        except OSError as exc:
            raise OSError(f"failed writing {out}: {exc}") from exc
        written.append(out)
    else:
        raise ValueError(f"unknown format {format!r}")
    return written


def summary_to_dict(summary: TrialSummary) -> dict:
    return {
        "method": summary.method,
        "eta": None if math.isnan(summary.eta) else summary.eta,
        "master_seed": summary.master_seed,
        "trials": summary.trials,
        "divergence_count": summary.divergence_count,
        "iters": summary.iters.tolist(),
        "mean_residual_sq": summary.mean_residual_sq.tolist(),
        "q10_residual_sq": summary.q10_residual_sq.tolist(),
        "q50_residual_sq": summary.q50_residual_sq.tolist(),
        "q90_residual_sq": summary.q90_residual_sq.tolist(),
        "best_residual_sq": summary.best_residual_sq.tolist(),
        "final_residual_sq": summary.final_residual_sq.tolist(),
    }


def parse_traces_csv(path: str) -> List[Trace]:
    """Rebuild traces from an emitted CSV; only the schema-carried fields are
    reconstructed (midpoint sums and norm trackers live in memory only)."""
    groups: Dict[Tuple, dict] = {}
    order = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["method"], row["eta"], row["seed"], row["trial"])
            if key not in groups:
                groups[key] = {"rows": []}
                order.append(key)
            groups[key]["rows"].append(row)

    def _f(s):
        return math.nan if s == "" else float(s)

    traces = []
    for key in order:
        rows = groups[key]["rows"]
        method, eta_s, seed_s, trial_s = key
        diverged = any(r["diverged"] == "1" for r in rows)
        div_iter = next((int(r["iter"]) for r in rows if r["diverged"] == "1"), None)
        iters = np.array([int(r["iter"]) for r in rows])
        has_dist = any(r["dist_sq"] != "" for r in rows)
        has_gap = any(r["gap"] != "" for r in rows)
        stride = int(iters[1] - iters[0]) if len(iters) > 2 else 1
        traces.append(Trace(
            method=method,
            eta=_f(eta_s),
            seed=int(seed_s),
            trial=int(trial_s),
            record_stride=max(stride, 1),
            iters=iters,
            residual_sq=np.array([_f(r["residual_sq"]) for r in rows]),
            step_size=np.array([_f(r["step_size"]) for r in rows]),
            u=np.array([_f(r["u"]) for r in rows]),
            dist_sq=np.array([_f(r["dist_sq"]) for r in rows]) if has_dist else None,
            gap=np.array([_f(r["gap"]) for r in rows]) if has_gap else None,
            diverged=diverged,
            diverged_iter=div_iter,
            completed_iters=int(iters[-1]),
        ))
    return traces
