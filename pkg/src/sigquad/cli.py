"""Command-line front end: train proxies, integrate them, run benchmark studies.

Subcommands
-----------
train       fit a proxy to a sampled integrand family or a CSV of samples
integrate   full/box/marginal/segment integrals of a saved weight file
bench       convergence / control-variate / dimension / subdomain studies

Every output embeds the run configuration; reruns with an identical
configuration reproduce the data bytes.
"""

from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
import time
import numpy as np

from . import __version__
from .estimators import (
    EstimateRecord,
    convergence_study,
    cv_estimate,
    derive_seed,
    halton,
    mc_estimate,
    qmc_estimate,
    write_records_csv,
)
from .integrands import reference_integral, sample_family
from .proxy import (
    DomainMap,
    TrainConfig,
    default_neuron_count,
    fit,
    load_weights,
    normalize,
    save_weights,
)
from .qnet import Box, integrate, integrate_box, integrate_segment, marginalize


def build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"sigquad-{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"sigquad-{__version__}"


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.replace(";", ",").split(",") if tok != ""])


def _parse_box(text: str) -> tuple[np.ndarray, np.ndarray]:
    lows, highs = [], []
    for part in text.split(","):
        lo, hi = part.split(":")
        lows.append(float(lo))
        highs.append(float(hi))
    return np.array(lows), np.array(highs)


def _read_samples_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = list(data.dtype.names)
    if "f" not in names:
        raise SystemExit(f"sample CSV must have columns x1..xd,f; got {names}")
    xcols = [n for n in names if n != "f"]
    pts = np.column_stack([data[c] for c in xcols])
    return np.atleast_2d(pts), np.atleast_1d(data["f"])


def _grid_points(n_side: int, d: int) -> np.ndarray:
    axes = [(np.arange(n_side) + 0.5) / n_side for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _training_points(args, d: int) -> np.ndarray:
    if args.sampling == "grid":
        side = round(args.n ** (1.0 / d))
        return _grid_points(side, d)
    if args.sampling == "uniform":
        return np.random.default_rng(args.seed).uniform(size=(args.n, d))
    return halton(args.n, d, seed=args.seed)


def cmd_train(args) -> int:
    config = _config_dict(args)
    started = time.perf_counter()
    if args.samples:
        pts, targets = _read_samples_csv(args.samples)
        d = pts.shape[1]
        lower, upper = pts.min(axis=0), pts.max(axis=0)
        span = upper - lower
        lower = np.where(span > 0, lower, lower - 0.5)
        upper = np.where(span > 0, upper, upper + 0.5)
        spec = None
    else:
        d = args.d
        spec = sample_family(args.family, d, seed=args.family_seed)
        lower, upper = np.zeros(d), np.ones(d)
        pts = _training_points(args, d)
        targets = np.asarray(spec.evaluate(pts), dtype=np.float64)

    z_lo, z_hi = float(targets.min()), float(targets.max())
    if z_hi <= z_lo:  # constant targets still need a usable range map
        z_lo, z_hi = z_lo - 0.5, z_hi + 0.5
    box_map = DomainMap(lower, upper, z_lo, z_hi)
    k = args.k if args.k else default_neuron_count(len(targets), d)
    cfg = TrainConfig(seed=args.seed)
    result = fit(normalize(pts, targets, box_map), k, cfg)
    save_weights(args.out, result.net, box_map, meta={"config": config, "build": build_id()})

    report = {
        "config": config,
        "build": build_id(),
        "mse": result.mse,
        "iterations": result.iterations,
        "converged": result.converged,
        "diverged": result.diverged,
        "method": result.method,
        "wall_time_s": time.perf_counter() - started,
    }
    if spec is not None:
        eval_pts = lower + halton(2048, d, seed=derive_seed(args.seed, "holdout")) * (upper - lower)
        predicted = box_map.denormalize_targets(result.net.evaluate(box_map.normalize_points(eval_pts)))
        truth = spec.evaluate(eval_pts)
        report["holdout_rmse"] = float(
            np.sqrt(np.mean((predicted - truth) ** 2)) / (z_hi - z_lo)
        )
    report_path = args.report or (args.out + ".report.json")
    with open(report_path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, sort_keys=True, indent=1)
        handle.write("\n")
    print(f"wrote {args.out} (mse={result.mse:.3e}, iterations={result.iterations})")
    return 1 if result.diverged else 0


def cmd_integrate(args) -> int:
    net, box_map = load_weights(args.weights)
    if box_map is None:
        box_map = DomainMap(-np.ones(net.d), np.ones(net.d), -1.0, 1.0)
    config = _config_dict(args)
    record: dict = {"config": config, "build": build_id()}

    json_out = args.out
    if args.segment:
        p0, p1 = (_parse_floats(part) for part in args.segment.split())
        q0, q1 = box_map.normalize_points(p0), box_map.normalize_points(p1)
        norm_len = float(np.linalg.norm(q1 - q0))
        true_len = float(np.linalg.norm(np.asarray(p1) - np.asarray(p0)))
        hat = integrate_segment(net, q0, q1)
        span = box_map.range_hi - box_map.range_lo
        value = true_len / norm_len * (0.5 * span * (hat + norm_len) + box_map.range_lo * norm_len)
        record["segment"] = {"p0": p0.tolist(), "p1": p1.tolist()}
    elif args.marginalize:
        dims = [int(tok) for tok in args.marginalize.split(",")]
        value = _emit_marginal_grid(args, net, box_map, dims, record)
        json_out = None  # --out holds the marginal grid CSV in this mode
    else:
        if args.box:
            lower, upper = _parse_box(args.box)
            norm_box = Box(box_map.normalize_points(lower), box_map.normalize_points(upper))
            hat = integrate_box(net, norm_box)
            value = box_map.denormalize_integral(hat, normalized_volume=norm_box.volume)
            record["box"] = {"lower": lower.tolist(), "upper": upper.tolist()}
        else:
            started = time.perf_counter()
            value = box_map.denormalize_integral(integrate(net))
            elapsed = max(time.perf_counter() - started, 1e-9)
            # informational only; hardware-dependent, never gated
            print(f"throughput: {net.k / elapsed:.0f} neurons/second", file=sys.stderr)

    record["value"] = value
    print(f"{value:.12g}")
    if json_out:
        with open(json_out, "w", encoding="utf-8") as handle:
            json.dump(record, handle, sort_keys=True, indent=1)
            handle.write("\n")
    return 0


def _emit_marginal_grid(args, net, box_map: DomainMap, dims, record: dict) -> float:
    marginal = marginalize(net, dims)
    rest = marginal.remaining_dims
    side = args.grid
    axes = [
        box_map.lower[j] + (np.arange(side) + 0.5) / side * (box_map.upper[j] - box_map.lower[j])
        for j in rest
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    pts_hat = 2.0 * (pts - box_map.lower[list(rest)]) / (
        box_map.upper[list(rest)] - box_map.lower[list(rest)]
    ) - 1.0
    hat = marginal(pts_hat)
    # Undo both range normalization and the per-dimension input scaling of
    # the integrated dims: each contributes (upper-lower)/2.
    r = marginal.r
    dim_scale = float(np.prod([(box_map.upper[j] - box_map.lower[j]) / 2.0 for j in marginal.integrated_dims]))
    span = box_map.range_hi - box_map.range_lo
    values = dim_scale * (0.5 * span * (hat + 2.0 ** r) + box_map.range_lo * 2.0 ** r)
    out_path = args.out or "marginal.csv"
    with open(out_path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"# config: {json.dumps(record['config'], sort_keys=True)}\n")
        handle.write(f"# build: {record['build']}\n")
        handle.write(",".join([f"x{j+1}" for j in rest] + ["value"]) + "\n")
        for row, val in zip(pts, values):
            handle.write(",".join(repr(float(v)) for v in row) + f",{float(val)!r}\n")
    record["marginal_csv"] = out_path
    record["integrated_dims"] = list(marginal.integrated_dims)
    return float(values.mean())


def _study_convergence(args, config) -> list[EstimateRecord]:
    schedule = [int(tok) for tok in args.n_schedule.split(",")]
    return convergence_study(
        family=args.family,
        d=args.d,
        n_schedule=schedule,
        n_integrands=args.integrands,
        reps=args.reps,
        estimators=args.estimators.split(","),
        master_seed=args.seed,
    )


def _study_cv(args, config) -> list[EstimateRecord]:
    records = []
    nus = [float(tok) for tok in args.nus.split(",")]
    inners = ["MC", "QMC"] if args.inner == "both" else [args.inner.upper()]
    for idx in range(args.integrands):
        spec = sample_family(args.family, args.d, seed=derive_seed(args.seed, "spec", idx))
        ref = reference_integral(spec)
        box = (np.zeros(args.d), np.ones(args.d))
        for rep in range(args.reps):
            meta = {"family": args.family, "d": args.d, "rep": rep}
            seed = derive_seed(args.seed, "cv", idx, rep)
            records.append(mc_estimate(spec.evaluate, box, args.n, seed, reference=ref, **meta))
            records.append(qmc_estimate(spec.evaluate, box, args.n, seed, reference=ref, **meta))
            for inner in inners:
                for nu in nus:
                    records.append(
                        cv_estimate(
                            spec.evaluate, box, args.n, nu=nu, inner=inner,
                            seed=seed, reference=ref, **meta,
                        )
                    )
    return records


def _study_dims(args, config) -> list[EstimateRecord]:
    records = []
    for d in (int(tok) for tok in args.dims.split(",")):
        records.extend(
            convergence_study(
                family=args.family,
                d=d,
                n_schedule=[args.n],
                n_integrands=args.integrands,
                reps=args.reps,
                estimators=args.estimators.split(","),
                master_seed=args.seed,
            )
        )
    return records


def _study_subdomain(args, config) -> list[EstimateRecord]:
    spec = sample_family("zoneplate", 2, seed=0)
    side = round(math.sqrt(args.n))
    pts = _grid_points(side, 2)
    targets = np.asarray(spec.evaluate(pts), dtype=np.float64)
    box_map = DomainMap(np.zeros(2), np.ones(2), float(targets.min()), float(targets.max()))
    cfg = TrainConfig(seed=args.seed)
    result = fit(normalize(pts, targets, box_map), args.k, cfg)
    net = result.net

    records = []
    sizes = [float(tok) for tok in args.sizes.split(",")]
    rng = np.random.default_rng(derive_seed(args.seed, "subdomain-boxes"))
    for size in sizes:
        for rep in range(args.boxes):
            lo = rng.uniform(0.0, 1.0 - size, size=2)
            hi = lo + size
            ref = reference_integral(spec, lo, hi)
            norm_box = Box(box_map.normalize_points(lo), box_map.normalize_points(hi))
            value = box_map.denormalize_integral(integrate_box(net, norm_box), norm_box.volume)
            records.append(
                EstimateRecord(
                    value=value,
                    estimator="QNET",
                    n=side * side,
                    seed=args.seed,
                    k=args.k,
                    reference=ref,
                    family=f"zoneplate@{size:g}",
                    d=2,
                    rep=rep,
                )
            )
    return records


def cmd_bench(args) -> int:
    config = _config_dict(args)
    studies = {
        "convergence": _study_convergence,
        "cv": _study_cv,
        "dims": _study_dims,
        "subdomain": _study_subdomain,
    }
    records = studies[args.study](args, config)
    write_records_csv(args.out, records, config=config, build=build_id())
    print(f"wrote {args.out} ({len(records)} rows)")
    return 0


def _config_dict(args) -> dict:
    skip = {"func"}
    return {key: val for key, val in sorted(vars(args).items()) if key not in skip}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigquad",
        description="Train sigmoidal surrogates and integrate them in closed form.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_train = sub.add_parser("train", help="fit a proxy and write a weight file")
    p_train.add_argument("--family", default="gm", choices=["gm", "gmd", "hr", "zoneplate"])
    p_train.add_argument("--samples", help="CSV of samples (columns x1..xd,f) instead of a family")
    p_train.add_argument("--d", type=int, default=2)
    p_train.add_argument("--n", type=int, default=2048)
    p_train.add_argument("--k", type=int, default=0, help="neuron count (0 = default rule)")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--family-seed", type=int, default=0)
    p_train.add_argument("--sampling", default="halton", choices=["halton", "uniform", "grid"])
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--report", help="report path (default: <out>.report.json)")
    p_train.set_defaults(func=cmd_train)

    p_int = sub.add_parser("integrate", help="integrate a saved weight file")
    p_int.add_argument("--weights", required=True)
    p_int.add_argument("--box", help="true-domain box 'a1:b1,a2:b2,...'")
    p_int.add_argument("--marginalize", help="comma-separated dims to integrate out (0-based)")
    p_int.add_argument("--grid", type=int, default=33, help="grid side for marginal CSV")
    p_int.add_argument("--segment", help="two points: 'x1,..,xd y1,..,yd'")
    p_int.add_argument("--out", help="JSON record path (marginal mode: CSV path)")
    p_int.set_defaults(func=cmd_integrate)

    p_bench = sub.add_parser("bench", help="run a benchmark study, write CSV")
    p_bench.add_argument("--study", required=True, choices=["convergence", "cv", "dims", "subdomain"])
    p_bench.add_argument("--family", default="gm", choices=["gm", "gmd", "hr"])
    p_bench.add_argument("--d", type=int, default=2)
    p_bench.add_argument("--n", type=int, default=4096)
    p_bench.add_argument("--n-schedule", default="64,256,1024,4096")
    p_bench.add_argument("--dims", default="2,3,4,5,6,8")
    p_bench.add_argument("--nus", default="0,0.25,0.5,0.75,1")
    p_bench.add_argument("--inner", default="mc", choices=["mc", "qmc", "both"])
    p_bench.add_argument("--sizes", default="0.333333,0.125,0.05")
    p_bench.add_argument("--boxes", type=int, default=100)
    p_bench.add_argument("--k", type=int, default=180)
    p_bench.add_argument("--integrands", type=int, default=20)
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--estimators", default="MC,QMC,QNET")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
