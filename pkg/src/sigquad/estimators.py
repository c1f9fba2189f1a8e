"""Integral estimators: MC, QMC, proxy closed form, and proxy control variates.

All estimators return an :class:`EstimateRecord` carrying the value, the
sampling/fit seeds and an optional relative error against an analytic
reference, so benchmark studies stream straight to CSV.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .proxy import (
    DomainMap,
    ProxyNet,
    TrainConfig,
    default_neuron_count,
    fit,
    normalize,
)
from .qnet import integrate

__all__ = [
    "EstimatorKind",
    "EstimateRecord",
    "REL_ERROR_FLOOR",
    "halton",
    "mc_estimate",
    "qmc_estimate",
    "qnet_estimate",
    "cv_estimate",
    "convergence_study",
    "summarize",
    "write_records_csv",
    "derive_seed",
    "CSV_HEADER",
]

REL_ERROR_FLOOR = 1e-12

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53)

CSV_HEADER = ("estimator", "family", "d", "k", "N", "nu", "rep", "seed", "value", "reference", "rel_error")


class EstimatorKind(str, Enum):
    MC = "MC"
    QMC = "QMC"
    QNET = "QNET"
    CV_QNET = "CV_QNET"


@dataclass(frozen=True)
class EstimateRecord:
    """One estimate with provenance; rel_error is filled in from reference."""

    value: float
    estimator: str
    n: int
    seed: int
    k: int | None = None
    nu: float | None = None
    reference: float | None = None
    rel_error: float | None = None
    family: str = ""
    d: int = 0
    rep: int = 0
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "estimator", str(EstimatorKind(self.estimator).value))
        if self.reference is not None and self.rel_error is None:
            err = abs(self.value - self.reference) / (abs(self.reference) + REL_ERROR_FLOOR)
            object.__setattr__(self, "rel_error", err)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary hashable context parts."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def halton(n: int, d: int, seed: int | None = None, start: int = 1) -> np.ndarray:
    """First n points of a Halton sequence in [0,1)^d.

    With ``seed`` the digits of each coordinate pass through one random
    permutation per dimension (base = the dimension's prime); ``seed=None``
    gives the plain radical-inverse sequence starting at index ``start``.
    """
    if n < 1:
        raise ValueError("need n >= 1 points")
    if not 1 <= d <= len(_PRIMES):
        raise ValueError(f"dimension must be in [1, {len(_PRIMES)}]")
    rng = np.random.default_rng(seed) if seed is not None else None
    idx0 = np.arange(start, start + n, dtype=np.int64)
    out = np.empty((n, d))
    for j in range(d):
        base = _PRIMES[j]
        perm = rng.permutation(base) if rng is not None else np.arange(base)
        levels = int(math.ceil(53.0 / math.log2(base)))
        idx = idx0.copy()
        acc = np.zeros(n)
        scale = 1.0
        for _ in range(levels):
            scale /= base
            acc += perm[idx % base] * scale
            idx //= base
            if perm[0] == 0 and not idx.any():
                break
        out[:, j] = acc
    return out


def _resolve_box(box) -> tuple[np.ndarray, np.ndarray]:
    lower = np.atleast_1d(np.asarray(box[0], dtype=np.float64))
    upper = np.atleast_1d(np.asarray(box[1], dtype=np.float64))
    if lower.shape != upper.shape or not np.all(lower < upper):
        raise ValueError("box must be a (lower, upper) pair with lower < upper")
    return lower, upper


def _sample_points(kind: str, n: int, lower: np.ndarray, upper: np.ndarray, seed: int) -> np.ndarray:
    d = lower.size
    if kind == "uniform":
        u = np.random.default_rng(seed).uniform(size=(n, d))
    elif kind == "halton":
        u = halton(n, d, seed=seed)
    else:
        raise ValueError(f"unknown sampling mode: {kind!r}")
    return lower + u * (upper - lower)


def mc_estimate(f, box, n: int, seed: int, reference: float | None = None, **meta) -> EstimateRecord:
    """volume x mean of f at n uniform pseudo-random points."""
    lower, upper = _resolve_box(box)
    pts = _sample_points("uniform", n, lower, upper, seed)
    value = float(np.prod(upper - lower) * np.mean(f(pts)))
    return EstimateRecord(value=value, estimator="MC", n=n, seed=seed, reference=reference, **meta)


def qmc_estimate(f, box, n: int, seed: int, reference: float | None = None, **meta) -> EstimateRecord:
    """volume x mean of f at the first n scrambled-Halton points."""
    lower, upper = _resolve_box(box)
    pts = _sample_points("halton", n, lower, upper, seed)
    value = float(np.prod(upper - lower) * np.mean(f(pts)))
    return EstimateRecord(value=value, estimator="QMC", n=n, seed=seed, reference=reference, **meta)


@dataclass(frozen=True)
class _TrainedProxy:
    """Denormalized view of a fitted proxy (or of an exactly constant target)."""

    integral: float
    flags: tuple[str, ...]
    net: ProxyNet | None = None
    box_map: DomainMap | None = None
    constant: float | None = None

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        if self.net is None:
            return np.full(len(pts), self.constant)
        hat = self.net.evaluate(self.box_map.normalize_points(pts))
        return self.box_map.denormalize_targets(hat)


def _train_proxy(pts, targets, lower, upper, k, fit_seed, fit_config) -> _TrainedProxy:
    volume = float(np.prod(upper - lower))
    if np.ptp(targets) == 0.0:
        return _TrainedProxy(
            integral=volume * float(targets[0]),
            flags=("constant_target",),
            constant=float(targets[0]),
        )
    box_map = DomainMap(lower, upper, float(targets.min()), float(targets.max()))
    cfg = fit_config if fit_config is not None else TrainConfig()
    result = fit(normalize(pts, targets, box_map), k, replace(cfg, seed=fit_seed))
    flags = ("fit_diverged",) if result.diverged else ()
    return _TrainedProxy(
        integral=box_map.denormalize_integral(integrate(result.net)),
        flags=flags,
        net=result.net,
        box_map=box_map,
    )


def qnet_estimate(
    f,
    box,
    n: int,
    k: int | None = None,
    seed: int = 0,
    sampling: str = "halton",
    sample_seed: int | None = None,
    fit_config: TrainConfig | None = None,
    reference: float | None = None,
    **meta,
) -> EstimateRecord:
    """Closed-form integral of a proxy fitted to n samples of f.

    ``seed`` drives the fit; ``sample_seed`` (default: same) draws the
    training points, so repetition studies can fix the sample set while
    varying optimizer stochasticity.
    """
    lower, upper = _resolve_box(box)
    if k is None:
        k = default_neuron_count(n, lower.size)
    pts = _sample_points(sampling, n, lower, upper, seed if sample_seed is None else sample_seed)
    targets = np.asarray(f(pts), dtype=np.float64)
    proxy = _train_proxy(pts, targets, lower, upper, k, seed, fit_config)
    return EstimateRecord(
        value=proxy.integral,
        estimator="QNET",
        n=n,
        seed=seed,
        k=k,
        reference=reference,
        flags=proxy.flags,
        **meta,
    )


def cv_estimate(
    f,
    box,
    n: int,
    nu: float,
    inner: str = "MC",
    seed: int = 0,
    k: int | None = None,
    sample_seed: int | None = None,
    fit_config: TrainConfig | None = None,
    reference: float | None = None,
    **meta,
) -> EstimateRecord:
    """Proxy control variate: train on ceil((1-nu) n) samples, integrate the
    residual f - proxy with the remaining floor(nu n) via the inner estimator.

    nu = 0 reduces to the pure proxy estimate, nu = 1 to the pure inner
    estimator, both seed-for-seed.  ``sample_seed`` (default: ``seed``)
    draws the point stream, so variance studies can fix the sample set
    across repetitions and isolate trainer stochasticity.
    """
    if not 0.0 <= nu <= 1.0:
        raise ValueError("nu must lie in [0, 1]")
    inner_kind = str(inner).upper()
    if inner_kind not in ("MC", "QMC"):
        raise ValueError("inner estimator must be MC or QMC")
    lower, upper = _resolve_box(box)
    volume = float(np.prod(upper - lower))

    n_train = math.ceil((1.0 - nu) * n)
    n_integrate = n - n_train
    flags: tuple[str, ...] = ()
    if nu > 0.0 and n_integrate < 1 and n_train > 0:
        nu, n_train, n_integrate = 0.0, n, 0
        flags = ("cv_fallback_nu0",)

    if k is None:
        k = default_neuron_count(max(n_train, 1), lower.size)
    pts = _sample_points(
        "uniform" if inner_kind == "MC" else "halton",
        n,
        lower,
        upper,
        seed if sample_seed is None else sample_seed,
    )
    targets = np.asarray(f(pts), dtype=np.float64)

    if n_train == 0:
        value = volume * float(np.mean(targets))
    else:
        proxy = _train_proxy(pts[:n_train], targets[:n_train], lower, upper, k, seed, fit_config)
        flags = flags + proxy.flags
        value = proxy.integral
        if n_integrate > 0:
            residual = targets[n_train:] - proxy.evaluate(pts[n_train:])
            value += volume * float(np.mean(residual))

    return EstimateRecord(
        value=value,
        estimator="CV_QNET",
        n=n,
        seed=seed,
        k=k if n_train > 0 else None,
        nu=nu,
        reference=reference,
        flags=flags,
        **meta,
    )


def _limit_blas_threads():
    import os

    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")


def _run_study_cell(task: dict) -> EstimateRecord:
    from .integrands import reference_integral, sample_family

    spec = sample_family(task["family"], task["d"], seed=task["spec_seed"])
    ref = reference_integral(spec)
    box = (np.zeros(task["d"]), np.ones(task["d"])) if task["box"] is None else task["box"]
    meta = {"family": task["family"], "d": task["d"], "rep": task["rep"]}
    kind = EstimatorKind(task["estimator"])
    n, seed = task["n"], task["seed"]
    if kind is EstimatorKind.MC:
        return mc_estimate(spec.evaluate, box, n, seed, reference=ref, **meta)
    if kind is EstimatorKind.QMC:
        return qmc_estimate(spec.evaluate, box, n, seed, reference=ref, **meta)
    if kind is EstimatorKind.QNET:
        return qnet_estimate(
            spec.evaluate,
            box,
            n,
            k=task["k"],
            seed=seed,
            sample_seed=task["sample_seed"],
            fit_config=task["fit_config"],
            reference=ref,
            **meta,
        )
    return cv_estimate(
        spec.evaluate,
        box,
        n,
        nu=task["nu"],
        inner=task["cv_inner"],
        seed=seed,
        k=task["k"],
        fit_config=task["fit_config"],
        reference=ref,
        **meta,
    )


def convergence_study(
    family: str,
    d: int,
    n_schedule,
    n_integrands: int,
    reps: int,
    estimators=("MC", "QMC", "QNET"),
    master_seed: int = 0,
    box=None,
    k_override: int | None = None,
    nu: float = 0.5,
    cv_inner: str = "MC",
    fit_config: TrainConfig | None = None,
    n_jobs: int = 1,
) -> list[EstimateRecord]:
    """Grid of estimates over random family instances, N schedule and reps.

    Repetitions reuse one fixed training sample set per (integrand, N) for
    the proxy estimator (only the fit seed varies) while MC/QMC draw fresh
    points every repetition.  With ``n_jobs > 1`` cells run in separate
    processes; every cell's generator state derives from the master seed,
    so results are identical regardless of worker count.
    """
    kinds = [EstimatorKind(e) for e in estimators]
    tasks = []
    for idx in range(n_integrands):
        spec_seed = derive_seed(master_seed, "spec", family, d, idx)
        for n in n_schedule:
            qnet_sample_seed = derive_seed(master_seed, "train-points", family, d, idx, n)
            for rep in range(reps):
                for kind in kinds:
                    tasks.append(
                        {
                            "family": family,
                            "d": d,
                            "spec_seed": spec_seed,
                            "box": box,
                            "n": n,
                            "rep": rep,
                            "estimator": kind.value,
                            "seed": derive_seed(master_seed, kind.value, family, d, idx, n, rep),
                            "sample_seed": qnet_sample_seed,
                            "k": k_override,
                            "nu": nu,
                            "cv_inner": cv_inner,
                            "fit_config": fit_config,
                        }
                    )
    if n_jobs <= 1:
        return [_run_study_cell(task) for task in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=n_jobs, initializer=_limit_blas_threads) as pool:
        return list(pool.map(_run_study_cell, tasks, chunksize=4))


def summarize(records) -> list[dict]:
    """Aggregate records into one row per (estimator, family, d, N, nu) cell.

    Reports RRMSE = sqrt(mean rel_error^2), the mean/std of values across
    repetitions, and the cell count; cells are sorted for stable output.
    """
    cells: dict[tuple, list[EstimateRecord]] = {}
    for rec in records:
        key = (rec.estimator, rec.family, rec.d, rec.n, rec.nu)
        cells.setdefault(key, []).append(rec)
    rows = []
    for key in sorted(cells, key=lambda t: tuple(str(x) for x in t)):
        group = cells[key]
        values = np.array([r.value for r in group])
        errors = np.array([r.rel_error for r in group if r.rel_error is not None])
        rows.append(
            {
                "estimator": key[0],
                "family": key[1],
                "d": key[2],
                "N": key[3],
                "nu": key[4],
                "count": len(group),
                "rrmse": float(np.sqrt(np.mean(errors**2))) if errors.size else None,
                "mean": float(values.mean()),
                "std": float(values.std(ddof=1)) if values.size > 1 else 0.0,
            }
        )
    return rows


def write_records_csv(path, records, config: dict | None = None, build: str | None = None) -> None:
    """Stream records to CSV with the frozen schema, config in '#' comments."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        if config is not None:
            import json

            handle.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        if build is not None:
            handle.write(f"# build: {build}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(
                [
                    rec.estimator,
                    rec.family,
                    rec.d,
                    "" if rec.k is None else rec.k,
                    rec.n,
                    "" if rec.nu is None else repr(float(rec.nu)),
                    rec.rep,
                    rec.seed,
                    repr(float(rec.value)),
                    "" if rec.reference is None else repr(float(rec.reference)),
                    "" if rec.rel_error is None else repr(float(rec.rel_error)),
                ]
            )
