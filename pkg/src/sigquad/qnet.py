"""Closed-form integration of sigmoidal surrogates over hyperrectangles.

Per-neuron integrals of ``sigmoid(w . x + b)`` reduce to signed sums of
``Li_r(-e^t)`` at the 2^r vertices of the integration box; this module
builds the vertex sign matrices, evaluates full-domain integrals,
sub-domain integrals, closed-form marginals, and composed line-segment
integrals of a :class:`~sigquad.proxy.ProxyNet`.

Two vertex formulations are implemented.  The centered form for the
normalized cube,

    T_i = 2^r + (1/prod_j w_ij) * sum_m alpha_m Li_r(-exp(s_m . w_i - b_i)),

is the fixed-weight network evaluation (see :func:`qnet_apply`).  General
boxes use the antiderivative form

    T_i = -(1/prod_j w_ij) * sum_m alpha_m Li_r(-exp(v_m . w_i + b_i)),

with v_m the box vertices.  The two agree through the reflection
softplus(t) = t + softplus(-t); tests assert the reconciliation.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .polylog import MAX_ORDER, li_neg_exp, softplus
from .proxy import ProxyNet, affine_reparam, net_from_dict, net_to_dict, slice_reparam

__all__ = [
    "DEGENERATE_WEIGHT_TOL",
    "SignMatrix",
    "Box",
    "MarginalFn",
    "sign_matrix",
    "qnet_apply",
    "integrate",
    "integrate_box",
    "marginalize",
    "integrate_segment",
    "integral_1d_closed",
    "integral_2d_closed",
]

# Below this magnitude a weight entry makes the vertex formula divide by a
# vanishing product; the neuron is integrated with that dimension dropped.
DEGENERATE_WEIGHT_TOL = 1e-8

# Each neuron integrates a (0,1)-valued function, so its integral must lie
# in [0, volume]; excursions beyond this slack trigger recomputation.
_RANGE_SLACK = 1e-6

_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class SignMatrix:
    """Vertex enumeration of [-1,1]^r with inclusion-exclusion parities.

    Row m lists the vertex signs (binary counting order, bit j -> column j);
    ``alpha[m]`` is +1 iff the row has an even number of -1 entries.
    """

    s: np.ndarray
    alpha: np.ndarray
    r: int


@functools.lru_cache(maxsize=None)
def sign_matrix(r: int) -> SignMatrix:
    if not 1 <= r <= MAX_ORDER:
        raise ValueError(f"integrated dimension count must be in [1, {MAX_ORDER}], got {r}")
    m = np.arange(2 ** r)
    bits = np.stack([(m >> (r - 1 - j)) & 1 for j in range(r)], axis=1)
    s = (1 - 2 * bits).astype(np.float64)
    alpha = (1 - 2 * (bits.sum(axis=1) & 1)).astype(np.float64)
    s.flags.writeable = False
    alpha.flags.writeable = False
    return SignMatrix(s=s, alpha=alpha, r=r)


def qnet_apply(r: int, y) -> float:
    """Fixed-weight network output q_r(y) for y = [w_1..w_r, b].

    Returns sum_m alpha_m Li_r(-exp(s_m . w - b)); the hidden layer has
    weights [S, -1] and no learnable parameters.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != r + 1:
        raise ValueError(f"y must have length r + 1 = {r + 1}, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("qnet_apply requires finite input")
    sm = sign_matrix(r)
    args = sm.s @ y[:r] - y[r]
    return float(sm.alpha @ li_neg_exp(r, args))


@dataclass(frozen=True)
class Box:
    """Axis-aligned sub-box of the normalized domain [-1,1]^d."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.array(self.lower, dtype=np.float64))
        upper = np.atleast_1d(np.array(self.upper, dtype=np.float64))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be equal-length vectors")
        if not np.all(lower < upper):
            raise ValueError("degenerate box: need lower < upper in every dimension")
        if np.any(lower < -1.0 - _BOUNDARY_TOL) or np.any(upper > 1.0 + _BOUNDARY_TOL):
            raise ValueError("box must lie inside the normalized domain [-1,1]^d")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def full(cls, d: int) -> "Box":
        return cls(lower=-np.ones(d), upper=np.ones(d))

    @property
    def d(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))


# Roundoff amplification of the alternating vertex sum, per unit of the
# largest |Li| magnitude encountered.
_CANCEL_EPS = 1e-15


def _core(w: np.ndarray, bias: np.ndarray, lower: np.ndarray, upper: np.ndarray,
          centered: bool) -> tuple[np.ndarray, np.ndarray]:
    """Vertex-sum integrals for non-degenerate weight rows.

    w: (k, r); bias: (k, m); returns (integrals (k, m), max |Li| per
    neuron).  Vertices are iterated outermost so memory stays O(k m).
    """
    r = w.shape[1]
    sm = sign_matrix(r)
    wt = np.prod(w, axis=1)
    acc = np.zeros(bias.shape, dtype=np.float64)
    li_max = np.zeros(w.shape[0])
    for row, a in zip(sm.s, sm.alpha):
        if centered:
            vals = li_neg_exp(r, (w @ row)[:, None] - bias)
        else:
            vertex = np.where(row > 0, upper, lower)
            vals = li_neg_exp(r, (w @ vertex)[:, None] + bias)
        li_max = np.maximum(li_max, np.abs(vals).max(axis=1))
        acc += a * vals
    if centered:
        return 2.0 ** r + acc / wt[:, None], li_max
    return -acc / wt[:, None], li_max


def _drop_cost(w_entry: float, width: float, vol_active: float) -> float:
    # Midpoint substitution of one dimension is second-order accurate:
    # error <= w^2 width^3/24 * max|sigmoid''| * (volume of the other dims).
    return w_entry**2 * width**2 * vol_active / 240.0


def _guarded_neuron(w_row, bias_row, lower, upper, centered, mask):
    """One neuron's integral, dropping dimensions while that is the more
    accurate option (or while the result violates the [0, volume] range)."""
    widths = upper - lower
    mids = (lower + upper) / 2.0
    vol = float(np.prod(widths))
    mask = mask.copy()
    while True:
        active = np.flatnonzero(~mask)
        bias_eff = bias_row + w_row[mask] @ mids[mask]
        if active.size == 0:
            return vol * expit(bias_eff)
        vals, li_max = _core(
            w_row[None, active], bias_eff[None, :], lower[active], upper[active], centered
        )
        vals = vals[0]
        vol_sub = float(np.prod(widths[active]))
        factor = vol / vol_sub
        err = _CANCEL_EPS * li_max[0] / abs(np.prod(w_row[active]))
        j = active[np.argmin(np.abs(w_row[active]))]
        in_range = np.all((vals >= -_RANGE_SLACK * vol_sub) & (vals <= vol_sub * (1.0 + _RANGE_SLACK)))
        if in_range and err <= max(1e-10 * vol_sub, _drop_cost(w_row[j], widths[j], vol_sub)):
            return factor * np.clip(vals, 0.0, vol_sub)
        mask[j] = True


def _neuron_integrals(w, bias, lower, upper, centered: bool) -> np.ndarray:
    """Per-neuron integrals of sigmoid(w_i . u + bias_i) over the box.

    bias may be (k,) or (k, m) for a batch of aggregated biases; the
    return matches its shape.  Weight entries below the degeneracy
    threshold are handled by midpoint substitution of their dimension (the
    w -> 0 limit); neurons whose vertex sum either leaves the provable
    range [0, volume] or cancels below its roundoff floor are recomputed
    the same way.
    """
    w = np.asarray(w, dtype=np.float64)
    squeeze = bias.ndim == 1
    bias2 = bias[:, None] if squeeze else bias
    widths = upper - lower
    mids = (lower + upper) / 2.0
    vol = float(np.prod(widths))
    out = np.empty_like(bias2)

    small = np.abs(w) < DEGENERATE_WEIGHT_TOL
    keys = small @ (1 << np.arange(w.shape[1], dtype=np.int64))
    suspect = np.zeros(w.shape[0], dtype=bool)
    for key in np.unique(keys):
        idx = keys == key
        mask = small[np.argmax(idx)]
        active = np.flatnonzero(~mask)
        bias_eff = bias2[idx] + (w[idx][:, mask] @ mids[mask])[:, None]
        if active.size == 0:
            out[idx] = vol * expit(bias_eff)
            continue
        vol_sub = float(np.prod(widths[active]))
        factor = vol / vol_sub
        vals, li_max = _core(w[idx][:, active], bias_eff, lower[active], upper[active], centered)
        out[idx] = factor * np.clip(vals, 0.0, vol_sub)

        wt_abs = np.abs(np.prod(w[idx][:, active], axis=1))
        err = _CANCEL_EPS * li_max / wt_abs
        jmin = np.argmin(np.abs(w[idx][:, active]), axis=1)
        w_small = np.take_along_axis(np.abs(w[idx][:, active]), jmin[:, None], axis=1)[:, 0]
        width_small = widths[active][jmin]
        budget = np.maximum(1e-10 * vol_sub, _drop_cost(w_small, width_small, vol_sub))
        in_range = np.all((vals >= -_RANGE_SLACK * vol_sub) & (vals <= vol_sub * (1.0 + _RANGE_SLACK)), axis=1)
        suspect[idx] = (err > budget) | ~in_range

    for i in np.flatnonzero(suspect):
        out[i] = _guarded_neuron(w[i], bias2[i], lower, upper, centered, small[i])
    return out[:, 0] if squeeze else out


def integrate(net: ProxyNet) -> float:
    """Exact integral of the net over the normalized domain [-1,1]^d."""
    lower, upper = -np.ones(net.d), np.ones(net.d)
    t = _neuron_integrals(net.w1, net.b1, lower, upper, centered=True)
    return float(net.w2 @ t + 2.0 ** net.d * net.b2)


def integrate_box(net: ProxyNet, box: Box) -> float:
    """Exact integral of the net over a sub-box of [-1,1]^d."""
    if box.d != net.d:
        raise ValueError(f"box dimension {box.d} does not match net dimension {net.d}")
    t = _neuron_integrals(net.w1, net.b1, box.lower, box.upper, centered=False)
    return float(net.w2 @ t + box.volume * net.b2)


class MarginalFn:
    """Closed-form marginal of a net over a subset of input dimensions.

    Calling the object at points of the remaining coordinates returns the
    exact integral of the parent over the integrated dimensions there.
    The vertex sign matrix and per-neuron weight products are fixed at
    construction, so each evaluation costs O(k 2^r).
    """

    def __init__(self, parent: ProxyNet, dims):
        dims = tuple(sorted(int(j) for j in np.atleast_1d(np.asarray(dims, dtype=int))))
        if len(dims) != len(set(dims)):
            raise ValueError("integrated dimensions must be distinct")
        if not dims:
            raise ValueError("need at least one integrated dimension")
        if dims[0] < 0 or dims[-1] >= parent.d:
            raise ValueError(f"integrated dimensions must be in [0, {parent.d})")
        self.parent = parent
        self.integrated_dims = dims
        self.remaining_dims = tuple(j for j in range(parent.d) if j not in set(dims))
        self._w_int = parent.w1[:, dims]
        self._w_rest = parent.w1[:, self.remaining_dims]
        self._lower = -np.ones(len(dims))
        self._upper = np.ones(len(dims))

    @property
    def r(self) -> int:
        return len(self.integrated_dims)

    def __call__(self, x_rest):
        n_rest = len(self.remaining_dims)
        pts = np.asarray(x_rest, dtype=np.float64)
        single = pts.ndim <= 1
        if n_rest == 0:
            if pts.size != 0:
                raise ValueError("this marginal integrates every dimension; pass ()")
            pts = np.zeros((1 if single else pts.shape[0], 0))
        else:
            if single and pts.size != n_rest:
                raise ValueError(f"expected {n_rest} remaining coordinates, got {pts.size}")
            pts = pts.reshape(-1, n_rest)
        bias = self.parent.b1[:, None] + self._w_rest @ pts.T
        t = _neuron_integrals(self._w_int, bias, self._lower, self._upper, centered=True)
        vals = self.parent.w2 @ t + 2.0 ** self.r * self.parent.b2
        return float(vals[0]) if single else vals

    def marginalize(self, dims) -> "MarginalFn":
        """Integrate further dimensions, given in remaining-coordinate indexing."""
        extra = {self.remaining_dims[int(j)] for j in np.atleast_1d(np.asarray(dims, dtype=int))}
        return MarginalFn(self.parent, sorted(set(self.integrated_dims) | extra))

    def to_dict(self) -> dict:
        return {
            "integrated_dims": list(self.integrated_dims),
            "parent": net_to_dict(self.parent),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MarginalFn":
        net, _ = net_from_dict(doc["parent"])
        return cls(net, doc["integrated_dims"])


def marginalize(net: ProxyNet, dims) -> MarginalFn:
    """Closed-form function of the non-integrated variables (projection)."""
    fn = MarginalFn(net, dims)
    if fn.r >= net.d:
        raise ValueError("cannot marginalize every dimension; use integrate instead")
    return fn


def _direction_basis(u: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(u.reshape(-1, 1), mode="complete")
    if q[:, 0] @ u < 0:
        q = -q
    return q


def integrate_segment(net: ProxyNet, p0, p1) -> float:
    """Line integral of the net along the segment from p0 to p1.

    The segment is rotated onto the first axis and translated to its
    midpoint, the transverse dimensions are sliced at zero, and the
    remaining 1D integral is scaled by the half-chord (the Jacobian of the
    map).  Portions outside [-1,1]^d are clipped with a warning.
    """
    p0 = np.asarray(p0, dtype=np.float64).ravel()
    p1 = np.asarray(p1, dtype=np.float64).ravel()
    if p0.shape != (net.d,) or p1.shape != (net.d,):
        raise ValueError(f"endpoints must be vectors of length {net.d}")
    if not (np.all(np.isfinite(p0)) and np.all(np.isfinite(p1))):
        raise ValueError("endpoints must be finite")
    delta = p1 - p0
    if np.allclose(delta, 0.0):
        raise ValueError("segment endpoints coincide")

    s_lo, s_hi = 0.0, 1.0
    for j in range(net.d):
        if delta[j] == 0.0:
            if abs(p0[j]) > 1.0 + _BOUNDARY_TOL:
                warnings.warn("segment lies outside the normalized domain; integral is 0")
                return 0.0
        else:
            t0 = (-1.0 - p0[j]) / delta[j]
            t1 = (1.0 - p0[j]) / delta[j]
            s_lo = max(s_lo, min(t0, t1))
            s_hi = min(s_hi, max(t0, t1))
    if s_hi <= s_lo:
        warnings.warn("segment lies outside the normalized domain; integral is 0")
        return 0.0
    if s_lo > 1e-12 or s_hi < 1.0 - 1e-12:
        warnings.warn("segment clipped to the normalized domain")

    q0 = p0 + s_lo * delta
    q1 = p0 + s_hi * delta
    half = (q1 - q0) / 2.0
    length = 2.0 * float(np.linalg.norm(half))
    m = _direction_basis(half / np.linalg.norm(half))
    m = m.copy()
    m[:, 0] = half
    g = affine_reparam(net, m, (q0 + q1) / 2.0)
    if net.d > 1:
        g = slice_reparam(g, list(range(1, net.d)), np.zeros(net.d - 1))
    return float(length / 2.0 * integrate(g))


def _require_nondegenerate(net: ProxyNet) -> None:
    if np.any(np.abs(net.w1) < DEGENERATE_WEIGHT_TOL):
        raise ValueError(
            "closed-form cross-check requires |w1| >= "
            f"{DEGENERATE_WEIGHT_TOL} in every entry"
        )


def integral_1d_closed(net: ProxyNet) -> float:
    """Hand-derived 1D integral: sum_i (w2_i/w1_i)[sp(w+b) - sp(-w+b)] + 2 b2.

    Uses the +b softplus antiderivative directly; serves as an independent
    cross-check of the general vertex path (which carries -b).
    """
    if net.d != 1:
        raise ValueError("integral_1d_closed requires a 1D net")
    _require_nondegenerate(net)
    w = net.w1[:, 0]
    terms = (softplus(w + net.b1) - softplus(-w + net.b1)) / w
    return float(net.w2 @ terms + 2.0 * net.b2)


def integral_2d_closed(net: ProxyNet) -> float:
    """Hand-derived 2D integral via the four-term dilogarithm combination.

    Per neuron, psi = Li2 at the four signed vertex exponents (+b
    convention) and the integral contribution is -psi / (w_a w_b).
    """
    if net.d != 2:
        raise ValueError("integral_2d_closed requires a 2D net")
    _require_nondegenerate(net)
    wa, wb = net.w1[:, 0], net.w1[:, 1]
    b = net.b1
    psi = (
        li_neg_exp(2, wa + wb + b)
        - li_neg_exp(2, wa - wb + b)
        - li_neg_exp(2, -wa + wb + b)
        + li_neg_exp(2, -wa - wb + b)
    )
    return float(net.w2 @ (-psi / (wa * wb)) + 4.0 * net.b2)
