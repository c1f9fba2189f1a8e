"""One-hidden-layer sigmoidal surrogates.

A :class:`ProxyNet` is the classic universal approximator

    f(x) = w2 . sigmoid(W1 x + b1) + b2

over the normalized cube [-1, 1]^d.  This module covers evaluation,
analytic gradients, least-squares training, and the weight-space
transforms (affine reparametrization, slicing, concatenation) that let
downstream integration reuse a trained net without resampling.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = [
    "ProxyNet",
    "DomainMap",
    "SampleSet",
    "TrainConfig",
    "FitResult",
    "fit",
    "concat_nets",
    "affine_reparam",
    "slice_reparam",
    "normalize",
    "denormalize_estimate",
    "default_neuron_count",
    "save_weights",
    "load_weights",
]

WEIGHT_FILE_VERSION = 1


def _frozen_array(value, shape=None) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ProxyNet:
    """Immutable weights of a one-hidden-layer logistic network.

    Attributes
    ----------
    w1 : (k, d) hidden weights
    b1 : (k,) hidden biases
    w2 : (k,) output weights
    b2 : output bias
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def __post_init__(self):
        w1 = np.atleast_2d(np.array(self.w1, dtype=np.float64))
        if w1.ndim != 2 or w1.shape[0] < 1 or w1.shape[1] < 1:
            raise ValueError("w1 must be a k x d matrix with k, d >= 1")
        k = w1.shape[0]
        b1 = _frozen_array(self.b1, (k,))
        w2 = _frozen_array(self.w2, (k,))
        w1.flags.writeable = False
        b2 = float(self.b2)
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if not math.isfinite(b2):
            raise ValueError("b2 is not finite")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def k(self) -> int:
        return self.w1.shape[0]

    @property
    def d(self) -> int:
        return self.w1.shape[1]

    def _points(self, x) -> tuple[np.ndarray, bool]:
        pts = np.asarray(x, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.d:
            raise ValueError(f"expected points of dimension {self.d}, got {pts.shape[1]}")
        return pts, single

    def hidden(self, x) -> np.ndarray:
        pts, _ = self._points(x)
        return expit(pts @ self.w1.T + self.b1)

    def evaluate(self, x):
        """Network value at one point (d,) or a batch (n, d)."""
        pts, single = self._points(x)
        vals = self.hidden(pts) @ self.w2 + self.b2
        return float(vals[0]) if single else vals

    def gradient(self, x):
        """Analytic input gradient: W1^T diag(w2 * s(1-s)) at each point."""
        pts, single = self._points(x)
        act = self.hidden(pts)
        grads = (act * (1.0 - act) * self.w2) @ self.w1
        return grads[0] if single else grads


def concat_nets(a: ProxyNet, weight_a: float, b: ProxyNet, weight_b: float) -> ProxyNet:
    """Net evaluating exactly weight_a * a(x) + weight_b * b(x).

    Stacking hidden layers is exact because the output layer is linear;
    separately trained summands combine without retraining.
    """
    if a.d != b.d:
        raise ValueError(f"input dimensions differ: {a.d} vs {b.d}")
    return ProxyNet(
        w1=np.vstack([a.w1, b.w1]),
        b1=np.concatenate([a.b1, b.b1]),
        w2=np.concatenate([weight_a * a.w2, weight_b * b.w2]),
        b2=weight_a * a.b2 + weight_b * b.b2,
    )


def affine_reparam(net: ProxyNet, m, c) -> ProxyNet:
    """Net g with g(x) = net(M x + c), via W1 <- W1 M and b1 <- b1 + W1 c."""
    m = np.asarray(m, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if m.shape != (net.d, net.d):
        raise ValueError(f"m must be {net.d} x {net.d}, got {m.shape}")
    if c.shape != (net.d,):
        raise ValueError(f"c must have length {net.d}, got {c.shape}")
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(c))):
        raise ValueError("affine map must be finite")
    return ProxyNet(w1=net.w1 @ m, b1=net.b1 + net.w1 @ c, w2=net.w2, b2=net.b2)


def slice_reparam(net: ProxyNet, dims, values) -> ProxyNet:
    """Fix coordinates ``dims`` to ``values``; returns a (d - r)-input net.

    The fixed columns of W1 are folded into the hidden bias, so the sliced
    net agrees exactly with the original at the fixed coordinates.
    """
    dims = np.asarray(dims, dtype=int).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    if dims.size != values.size:
        raise ValueError("dims and values must have equal length")
    if dims.size >= net.d:
        raise ValueError("cannot slice every dimension; at least one must remain")
    if len(set(dims.tolist())) != dims.size:
        raise ValueError("slice dimensions must be distinct")
    if dims.size and (dims.min() < 0 or dims.max() >= net.d):
        raise ValueError(f"slice dimensions must be in [0, {net.d})")
    keep = [j for j in range(net.d) if j not in set(dims.tolist())]
    return ProxyNet(
        w1=net.w1[:, keep],
        b1=net.b1 + net.w1[:, dims] @ values,
        w2=net.w2,
        b2=net.b2,
    )


@dataclass(frozen=True)
class DomainMap:
    """Affine map between a user box/range and the normalized [-1,1]^d / [-1,1].

    ``lower``/``upper`` bound the true input box, ``range_lo``/``range_hi``
    the true function range.
    """

    lower: np.ndarray
    upper: np.ndarray
    range_lo: float
    range_hi: float

    def __post_init__(self):
        lower = np.atleast_1d(np.array(self.lower, dtype=np.float64))
        upper = np.atleast_1d(np.array(self.upper, dtype=np.float64))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be equal-length vectors")
        if not np.all(lower < upper):
            raise ValueError("degenerate box: need lower < upper in every dimension")
        lo, hi = float(self.range_lo), float(self.range_hi)
        if not lo < hi:
            raise ValueError("degenerate range: need range_lo < range_hi")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "range_lo", lo)
        object.__setattr__(self, "range_hi", hi)

    @property
    def d(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def normalize_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return 2.0 * (x - self.lower) / (self.upper - self.lower) - 1.0

    def denormalize_points(self, x_hat) -> np.ndarray:
        x_hat = np.asarray(x_hat, dtype=np.float64)
        return self.lower + (x_hat + 1.0) * (self.upper - self.lower) / 2.0

    def normalize_targets(self, z):
        z = np.asarray(z, dtype=np.float64)
        out = 2.0 * (z - self.range_lo) / (self.range_hi - self.range_lo) - 1.0
        return float(out) if out.ndim == 0 else out

    def denormalize_targets(self, z_hat):
        z_hat = np.asarray(z_hat, dtype=np.float64)
        out = self.range_lo + (z_hat + 1.0) * (self.range_hi - self.range_lo) / 2.0
        return float(out) if out.ndim == 0 else out

    def denormalize_integral(self, mu_hat: float, normalized_volume: float | None = None) -> float:
        """True-domain integral from a normalized-space integral.

        With the default ``normalized_volume = 2^d`` this is the full-domain
        map  mu = volume * [(range_hi-range_lo)(mu_hat/2^d + 1)/2 + range_lo];
        passing the volume of a normalized sub-box generalizes it to
        sub-domain integrals.
        """
        vol_hat = 2.0 ** self.d if normalized_volume is None else float(normalized_volume)
        scale = self.volume / 2.0 ** self.d
        span = self.range_hi - self.range_lo
        return scale * (0.5 * span * (mu_hat + vol_hat) + self.range_lo * vol_hat)


@dataclass(frozen=True)
class SampleSet:
    """Normalized training data: inputs in [-1,1]^d, targets in [-1,1]."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.array(self.inputs, dtype=np.float64))
        targets = np.atleast_1d(np.array(self.targets, dtype=np.float64))
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError("inputs and targets must have the same sample count")
        if np.any(np.abs(inputs) > 1.0 + 1e-9):
            raise ValueError("normalized inputs must lie inside [-1, 1]^d")
        inputs.flags.writeable = False
        targets.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]


def normalize(raw_inputs, raw_targets, box: DomainMap) -> SampleSet:
    """Map raw samples through ``box`` into the normalized training space."""
    return SampleSet(
        inputs=box.normalize_points(np.atleast_2d(np.asarray(raw_inputs, dtype=np.float64))),
        targets=box.normalize_targets(np.asarray(raw_targets, dtype=np.float64)),
    )


def denormalize_estimate(mu_hat: float, box: DomainMap) -> float:
    """Full-domain estimate in true units from a normalized-space integral."""
    return box.denormalize_integral(mu_hat)


def default_neuron_count(n: int, d: int) -> int:
    """Consistency-rule default k = ceil(n^(1/(1+d)))."""
    if n < 1:
        raise ValueError("need at least one sample")
    return max(1, math.ceil(n ** (1.0 / (1.0 + d))))


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for :func:`fit`.

    Levenberg-Marquardt with the analytic Jacobian is used while
    n * k <= ``lm_entry_limit``; larger problems fall back to mini-batch
    adaptive-moment descent.
    """

    seed: int = 0
    max_iterations: int = 500
    tolerance: float = 1e-9
    patience: int = 10
    ridge: float = 1e-6
    lm_entry_limit: int = 1_000_000
    batch_size: int = 256
    learning_rate: float = 1e-2
    epochs: int = 400
    epoch_tolerance: float = 1e-7
    epoch_patience: int = 25


@dataclass(frozen=True)
class FitResult:
    net: ProxyNet
    mse: float
    iterations: int
    converged: bool
    diverged: bool = False
    method: str = "lm"


def _pack(w1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([w1.ravel(), b1, w2, [b2]])


def _unpack(theta: np.ndarray, k: int, d: int):
    w1 = theta[: k * d].reshape(k, d)
    b1 = theta[k * d : k * d + k]
    w2 = theta[k * d + k : k * d + 2 * k]
    b2 = theta[-1]
    return w1, b1, w2, b2


def _forward(theta, x, k, d):
    w1, b1, w2, b2 = _unpack(theta, k, d)
    act = expit(x @ w1.T + b1)
    return act, act @ w2 + b2


def _reg_mask(k: int, d: int) -> np.ndarray:
    # Tikhonov damping applies to weights only, not biases.
    mask = np.zeros(k * (d + 2) + 1)
    mask[: k * d] = 1.0
    mask[k * d + k : k * d + 2 * k] = 1.0
    return mask


def _fit_lm(x, t, theta, cfg: TrainConfig) -> tuple[np.ndarray, float, int, bool, bool]:
    n, d = x.shape
    k = (theta.size - 1) // (d + 2)
    reg = cfg.ridge * _reg_mask(k, d)
    eye = np.eye(theta.size)

    def objective(th):
        _, pred = _forward(th, x, k, d)
        r = pred - t
        return r, float(r @ r + (reg * th) @ th)

    r, loss = objective(theta)
    best_theta, best_loss = theta.copy(), loss
    lam = 1e-3
    history = [loss]
    converged = False
    iterations = 0

    for iterations in range(1, cfg.max_iterations + 1):
        w1, b1, w2, b2 = _unpack(theta, k, d)
        act = expit(x @ w1.T + b1)
        deriv = act * (1.0 - act) * w2
        jac = np.concatenate(
            [
                (deriv[:, :, None] * x[:, None, :]).reshape(n, k * d),
                deriv,
                act,
                np.ones((n, 1)),
            ],
            axis=1,
        )
        grad = jac.T @ r + reg * theta
        hess = jac.T @ jac + np.diag(reg)
        diag = np.clip(np.diag(hess), 1e-12, None)

        accepted = False
        while lam <= 1e12:
            try:
                step = np.linalg.solve(hess + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = theta - step
            r_new, loss_new = objective(candidate)
            if math.isfinite(loss_new) and loss_new < loss:
                theta, r, loss = candidate, r_new, loss_new
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 3.0
        if loss < best_loss:
            best_theta, best_loss = theta.copy(), loss
        if not accepted:
            converged = True  # no descent direction left at any damping
            break
        history.append(loss)
        if len(history) > cfg.patience:
            old = history[-cfg.patience - 1]
            if old - loss < cfg.tolerance * max(loss, 1e-300):
                converged = True
                break

    _, pred = _forward(best_theta, x, k, d)
    mse = float(np.mean((pred - t) ** 2))
    return best_theta, mse, iterations, converged, not math.isfinite(mse)


def _fit_adam(x, t, theta, cfg: TrainConfig, rng) -> tuple[np.ndarray, float, int, bool, bool]:
    n, d = x.shape
    k = (theta.size - 1) // (d + 2)
    reg_mask = _reg_mask(k, d)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    def full_mse(th):
        _, pred = _forward(th, x, k, d)
        return float(np.mean((pred - t) ** 2))

    best_theta = theta.copy()
    best_mse = full_mse(theta)
    history = [best_mse]
    converged = False
    diverged = False
    epoch = 0

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            xb, tb = x[batch], t[batch]
            w1, b1, w2, b2 = _unpack(theta, k, d)
            act = expit(xb @ w1.T + b1)
            err = (act @ w2 + b2) - tb
            scale = 2.0 / batch.size
            gz = (err[:, None] * w2) * (act * (1.0 - act)) * scale
            grad = np.concatenate(
                [
                    (gz.T @ xb).ravel(),
                    gz.sum(axis=0),
                    act.T @ err * scale,
                    [scale * err.sum()],
                ]
            )
            grad += 2.0 * cfg.ridge * reg_mask * theta
            step += 1
            m = beta1 * m + (1.0 - beta1) * grad
            v = beta2 * v + (1.0 - beta2) * grad * grad
            m_hat = m / (1.0 - beta1 ** step)
            v_hat = v / (1.0 - beta2 ** step)
            theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        mse = full_mse(theta)
        if not math.isfinite(mse):
            diverged = True
            break
        if mse < best_mse:
            best_theta, best_mse = theta.copy(), mse
        history.append(mse)
        if len(history) > cfg.epoch_patience:
            old = history[-cfg.epoch_patience - 1]
            if old - mse < cfg.epoch_tolerance * max(mse, 1e-300):
                converged = True
                break

    return best_theta, best_mse, epoch, converged, diverged


def fit(samples: SampleSet, k: int, cfg: TrainConfig = TrainConfig()) -> FitResult:
    """Least-squares fit of a k-neuron net to normalized samples.

    Deterministic for a fixed ``cfg.seed``.  All-equal targets short-circuit
    to the exact constant net.  On divergence the best-seen net is returned
    with ``diverged=True``.
    """
    if k < 1:
        raise ValueError("neuron count must be >= 1")
    x, t = samples.inputs, samples.targets
    n, d = x.shape
    if not np.all(np.isfinite(t)):
        raise ValueError("targets contain non-finite values")
    if n < k:
        warnings.warn(f"fewer samples ({n}) than neurons ({k}); fit is underdetermined")

    if np.ptp(t) == 0.0:
        net = ProxyNet(w1=np.zeros((k, d)), b1=np.zeros(k), w2=np.zeros(k), b2=float(t[0]))
        return FitResult(net=net, mse=0.0, iterations=0, converged=True, method="constant")

    rng = np.random.default_rng(cfg.seed)
    sqrt_d = math.sqrt(d)
    w1 = rng.uniform(-2.0, 2.0, size=(k, d)) / sqrt_d
    b1 = rng.uniform(-2.0, 2.0, size=k) / sqrt_d
    w2 = rng.uniform(-1.0, 1.0, size=k) / math.sqrt(k)
    theta = _pack(w1, b1, w2, float(np.mean(t)))

    if n * k <= cfg.lm_entry_limit:
        theta, mse, iterations, converged, diverged = _fit_lm(x, t, theta, cfg)
        method = "lm"
    else:
        theta, mse, iterations, converged, diverged = _fit_adam(x, t, theta, cfg, rng)
        method = "adam"

    w1, b1, w2, b2 = _unpack(theta, k, d)
    net = ProxyNet(w1=w1, b1=b1, w2=w2, b2=float(b2))
    return FitResult(
        net=net,
        mse=mse,
        iterations=iterations,
        converged=converged,
        diverged=diverged,
        method=method,
    )


def _domain_map_to_dict(box: DomainMap) -> dict:
    return {
        "lower": box.lower.tolist(),
        "upper": box.upper.tolist(),
        "range_lo": box.range_lo,
        "range_hi": box.range_hi,
    }


def _domain_map_from_dict(data: dict) -> DomainMap:
    return DomainMap(
        lower=np.array(data["lower"], dtype=np.float64),
        upper=np.array(data["upper"], dtype=np.float64),
        range_lo=float(data["range_lo"]),
        range_hi=float(data["range_hi"]),
    )


def net_to_dict(net: ProxyNet, domain_map: DomainMap | None = None, meta: dict | None = None) -> dict:
    """JSON-ready weight document; floats round-trip exactly via repr."""
    doc = {
        "version": WEIGHT_FILE_VERSION,
        "d": net.d,
        "k": net.k,
        "W1": net.w1.ravel().tolist(),  # row-major
        "w2": net.w2.tolist(),
        "b1": net.b1.tolist(),
        "b2": net.b2,
        "domain_map": _domain_map_to_dict(domain_map) if domain_map is not None else None,
    }
    if meta is not None:
        doc["meta"] = meta
    return doc


def net_from_dict(doc: dict) -> tuple[ProxyNet, DomainMap | None]:
    version = doc.get("version")
    if version != WEIGHT_FILE_VERSION:
        raise ValueError(f"unsupported weight file version: {version!r}")
    k, d = int(doc["k"]), int(doc["d"])
    net = ProxyNet(
        w1=np.array(doc["W1"], dtype=np.float64).reshape(k, d),
        b1=np.array(doc["b1"], dtype=np.float64),
        w2=np.array(doc["w2"], dtype=np.float64),
        b2=float(doc["b2"]),
    )
    box = doc.get("domain_map")
    return net, (_domain_map_from_dict(box) if box else None)


def save_weights(path, net: ProxyNet, domain_map: DomainMap | None = None, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(net_to_dict(net, domain_map, meta), handle, sort_keys=True, indent=1)
        handle.write("\n")


def load_weights(path) -> tuple[ProxyNet, DomainMap | None]:
    with open(path, "r", encoding="utf-8") as handle:
        return net_from_dict(json.load(handle))
