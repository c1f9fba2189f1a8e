"""Shared oracles for the test suite.

Everything here is deliberately independent of the library's fast paths:
the polylog oracle works in mpmath extended precision, integrals come from
tensor Gauss-Legendre quadrature with refinement, and nets are built by an
explicit scalar loop where a second opinion on evaluation is needed.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from numpy.polynomial.legendre import leggauss

from sigquad import ProxyNet


def oracle_li_neg_exp(order: int, x: float, dps: int = 40) -> float:
    """Extended-precision Li_order(-e^x), series-based where convergent.

    For x <= -0.02 the alternating series is summed directly in mpmath;
    for x > 0 the exact integer-order inversion identity (polynomial in x
    with Dirichlet-eta coefficients) reduces back to that series.  In the
    narrow band around 0, where the series needs ~1e15 terms, mpmath's own
    arbitrary-precision polylog serves as the independent evaluation.
    """
    with mp.workdps(dps):
        xm = mp.mpf(x)
        if xm <= 0:
            return float(_li_nonpos_mp(order, xm))
        poly = mp.mpf(0)
        for j in range(order // 2 + 1):
            poly += _eta_even(j) * xm ** (order - 2 * j) / mp.factorial(order - 2 * j)
        return float(-2 * poly - (-1) ** order * _li_nonpos_mp(order, -xm))


def _li_nonpos_mp(order: int, xm):
    if xm > mp.mpf("-0.02"):
        return mp.polylog(order, -mp.exp(xm))
    return _series(order, xm)


def _eta_even(j: int):
    if j == 0:
        return mp.mpf(1) / 2
    return (1 - mp.mpf(2) ** (1 - 2 * j)) * mp.zeta(2 * j)


def _series(order: int, x, max_terms: int = 200_000):
    # Li_order(-e^x) = sum_k (-e^x)^k / k^order, convergent for x <= 0.
    q = mp.exp(x)
    total = mp.mpf(0)
    qk = mp.mpf(1)
    tol = mp.mpf(10) ** (-(mp.mp.dps + 5))
    for k in range(1, max_terms + 1):
        qk *= q
        term = qk / mp.mpf(k) ** order
        total += -term if k % 2 else term
        if term < tol * max(1, abs(total)):
            break
    return total


def gl_quadrature(fn, lower, upper, nodes: int) -> float:
    """Tensor-product Gauss-Legendre integral of fn over the box."""
    lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    d = lower.size
    x01, w = leggauss(nodes)
    axes, weights = [], []
    for j in range(d):
        half = (upper[j] - lower[j]) / 2.0
        axes.append(lower[j] + half * (x01 + 1.0))
        weights.append(w * half)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    wmesh = np.meshgrid(*weights, indexing="ij")
    wall = np.ones(pts.shape[0])
    for m in wmesh:
        wall = wall * m.ravel()
    return float(np.asarray(fn(pts)) @ wall)


def gl_quadrature_refined(fn, lower, upper, start: int = 16, limit: int = 64, tol: float = 1e-9) -> float:
    """Gauss-Legendre with node doubling until two levels agree."""
    nodes = start
    prev = gl_quadrature(fn, lower, upper, nodes)
    while nodes < limit:
        nodes *= 2
        cur = gl_quadrature(fn, lower, upper, nodes)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    return prev


def quad_net(net: ProxyNet, lower=None, upper=None, **kw) -> float:
    if lower is None:
        lower, upper = -np.ones(net.d), np.ones(net.d)
    return gl_quadrature_refined(net.evaluate, lower, upper, **kw)


def random_net(
    rng: np.random.Generator,
    d: int,
    k: int,
    weight_scale: float = 2.5,
    min_abs_weight: float = 0.05,
) -> ProxyNet:
    """Random net with hidden weights bounded away from zero.

    The lower magnitude bound keeps the vertex formula well conditioned so
    strict (1e-10 .. 1e-12) agreement gates are meaningful; degenerate
    weights get dedicated tests.
    """
    mag = rng.uniform(min_abs_weight, weight_scale, size=(k, d))
    w1 = mag * rng.choice([-1.0, 1.0], size=(k, d))
    return ProxyNet(
        w1=w1,
        b1=rng.uniform(-2.0, 2.0, size=k),
        w2=rng.uniform(-1.0, 1.0, size=k),
        b2=float(rng.uniform(-1.0, 1.0)),
    )


def loop_eval(net: ProxyNet, x: np.ndarray) -> float:
    """Scalar-loop network evaluation (independent of the vectorized path)."""
    total = net.b2
    for i in range(net.k):
        z = net.b1[i]
        for j in range(net.d):
            z += net.w1[i, j] * x[j]
        total += net.w2[i] / (1.0 + math.exp(-z))
    return total
