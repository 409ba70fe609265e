"""Command-line front end.

Subcommands: ``run`` (one experiment config), ``edge`` (stability-threshold
search), ``bias-variance`` (estimator sweeps), ``stability`` (scaled-integrator
maps), ``certify`` (rate-bound checks over emitted traces). Exit code 0 on
success and nonzero on configuration or I/O errors; per-trial divergence is
data, never a failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__, harness, integration, rates
from .fields import field_from_dict
from .sampling import RandomStream


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(payload: dict, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    return path


def cmd_run(args) -> int:
    config = harness.load_experiment_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.trials is not None:
        config.trials = args.trials
    if args.out is not None:
        config.out_dir = args.out
    out_dir = config.out_dir
    config.out_dir = None  # emit explicitly so --format is honored
    result = harness.run_trials(config)
    if out_dir:
        formats = [args.format] if args.format else ["csv", "json"]
        flat = [tr for key in result.traces for tr in result.traces[key]]
        digest = harness.config_hash(config)
        for fmt in formats:
            result.written += harness.emit(list(result.summaries.values()), flat, fmt,
                                           out_dir, master_seed=config.seed,
                                           config_digest=digest)
        for path in result.written:
            print(path)
    for (method, eta), summary in result.summaries.items():
        print(f"{method} eta={eta:.6g}: diverged {summary.divergence_count}/{summary.trials}, "
              f"median final residual_sq {np.median(summary.final_residual_sq):.3e}")
    return 0


def cmd_edge(args) -> int:
    cfg = _load_json(args.config)
    spec = field_from_dict(cfg["field"])
    theta0 = cfg.get("theta0")
    if theta0 is None:
        from .fields import default_initial_point
        theta0 = default_initial_point(spec)
    result = harness.edge_of_stability_search(
        spec, np.asarray(theta0, dtype=float),
        eta_lo=float(cfg["eta_lo"]), eta_hi=float(cfg["eta_hi"]),
        method=cfg.get("method", "EG"), max_iters=int(cfg.get("max_iters", 10_000)),
        tol=float(cfg.get("tol", 1e-3)),
        convergence_tol=float(cfg.get("convergence_tol", 1e-12)),
        seed=args.seed if args.seed is not None else int(cfg.get("seed", 0)))
    payload = {
        "eta_converge": result.eta_converge,
        "eta_diverge": result.eta_diverge,
        "diverge_class": result.diverge_class,
        "probes": [[e, c] for e, c in result.probes],
        "version": __version__,
    }
    if args.out:
        print(_write_json(payload, os.path.join(args.out, "edge.json")))
    else:
        json.dump(payload, sys.stdout, indent=1)
        print()
    return 0


def cmd_bias_variance(args) -> int:
    cfg = _load_json(args.config)
    spec = field_from_dict(cfg["field"])
    theta = np.asarray(cfg["theta"], dtype=float)
    etas = [float(e) for e in cfg["etas"]]
    estimators = cfg.get("estimators", list(integration.ESTIMATORS))
    samples = int(cfg.get("samples", 100_000))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rng = RandomStream(seed)
    rows = integration.bias_variance_sweep(
        spec, theta, etas, estimators, samples, rng,
        field_label=cfg.get("label", spec.kind),
        theta_label=cfg.get("theta_label", "theta"),
        c=float(cfg.get("c", 2.0)))
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    out = os.path.join(out_dir, "bias_variance.csv")
    cols = ["field", "theta_label", "eta", "estimator", "bias_norm", "variance",
            "predicted_bias_norm", "predicted_variance", "samples", "seed"]
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# master_seed={seed} config_hash= version={__version__}\n")
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    print(out)
    return 0


def cmd_stability(args) -> int:
    lip = args.lipschitz
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    out = os.path.join(out_dir, "stability.csv")
    c_grid = np.linspace(1.0001, 4.0, 10_000)
    bounds = 2.0 * np.sqrt(c_grid - 1.0) / (c_grid * lip)
    best = int(np.argmax(bounds))
    lam_grid = np.linspace(0.0, lip, 51)
    eta_grid = np.linspace(0.0, 2.2 / lip, 45)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# master_seed=0 config_hash= version={__version__}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "c", "eta", "lam", "value"])
        for c in (1.0, 2.0):
            for eta in eta_grid:
                for lam in lam_grid:
                    val = integration.conservative_stability_map(lam, eta, c)
                    writer.writerow(["conservative_map", repr(float(c)), repr(float(eta)),
                                     repr(float(lam)), repr(float(val))])
        for c, b in zip(c_grid[::100], bounds[::100]):
            writer.writerow(["skew_step_bound", repr(float(c)), "", "", repr(float(b))])
        writer.writerow(["skew_optimal_scale", repr(float(c_grid[best])), "", "",
                         repr(float(bounds[best]))])
    print(out)
    print(f"optimal scale c = {c_grid[best]:.4f} with step bound {bounds[best]:.6f}")
    return 0


def cmd_certify(args) -> int:
    cfg = _load_json(args.config)
    traces = harness.parse_traces_csv(args.traces)
    regime = cfg["regime"]
    params = cfg.get("params", {})
    cert = rates.rate_constant(regime, **{k: float(v) for k, v in params.items()})
    wanted_method = cfg.get("method")
    wanted_eta = cfg.get("eta")
    selected = [tr for tr in traces
                if (wanted_method is None or tr.method == wanted_method)
                and (wanted_eta is None or (not math.isnan(tr.eta)
                                            and math.isclose(tr.eta, float(wanted_eta))))
                and not tr.diverged]
    if not selected:
        raise ValueError("no matching non-diverged traces in the CSV")
    report = rates.residual_bound_check(
        selected, cert, np.asarray(cfg["theta0"], dtype=float),
        np.asarray(cfg["theta_star"], dtype=float),
        quantity=cfg.get("quantity"))
    payload = {
        "key": {"regime": regime, "field": cfg.get("field_label", ""),
                "eta": wanted_eta, "seed_batch": sorted({tr.seed for tr in selected})},
        "certificate": rates.certificate_to_dict(cert),
        "report": rates.report_to_dict(report),
        "version": __version__,
    }
    if args.out:
        print(_write_json(payload, os.path.join(args.out, "certify.json")))
    else:
        json.dump(payload, sys.stdout, indent=1)
        print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rampage",
                                     description="randomized-midpoint extragradient lab")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_run.add_argument("--trials", type=int)
    p_run.add_argument("--format", choices=["csv", "json"])
    p_run.set_defaults(func=cmd_run)

    p_edge = sub.add_parser("edge", help="edge-of-stability step search")
    p_edge.add_argument("--config", required=True)
    p_edge.add_argument("--seed", type=int)
    p_edge.add_argument("--out")
    p_edge.set_defaults(func=cmd_edge)

    p_bv = sub.add_parser("bias-variance", help="estimator bias/variance sweep")
    p_bv.add_argument("--config", required=True)
    p_bv.add_argument("--seed", type=int)
    p_bv.add_argument("--out")
    p_bv.set_defaults(func=cmd_bias_variance)

    p_st = sub.add_parser("stability", help="scaled-integrator stability maps")
    p_st.add_argument("--lipschitz", type=float, default=1.0)
    p_st.add_argument("--out")
    p_st.set_defaults(func=cmd_stability)

    p_ce = sub.add_parser("certify", help="check rate bounds over emitted traces")
    p_ce.add_argument("--config", required=True)
    p_ce.add_argument("--traces", required=True)
    p_ce.add_argument("--out")
    p_ce.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError,
            harness.SearchFailedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
