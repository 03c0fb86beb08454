"""Adaptive quadrature for spectral integrals on [0, inf).

All drivers evaluate the integrand on node *arrays* (shape (n,) in, shape
(n, ...) out), so vectorised integrands pay the Python overhead once per
panel, not once per node.  The basic rule is the nested 7/15 Gauss-Kronrod
pair; panels are split adaptively, worst error first.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar, k as k_B

__all__ = [
    "QuadResult",
    "QuadratureError",
    "ResonanceHint",
    "integrate_adaptive",
    "integrate_semi_infinite",
    "principal_value",
    "matsubara_sum",
    "fd_gradient",
]

# 15-point Kronrod abscissae/weights and the embedded 7-point Gauss weights
# (QUADPACK dqk15 constants).  Gauss nodes sit at the odd Kronrod indices.
_XK = np.array([
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
    0.7415311855993944, 0.5860872354676911, 0.4058451513773972,
    0.2077849550078985, 0.0,
])
_WK = np.array([
    0.0229353220105292, 0.0630920926299785, 0.1047900103222502,
    0.1406532597155259, 0.1690047266392679, 0.1903505780647854,
    0.2044329400752989, 0.2094821410847278,
])
_WG = np.array([
    0.1294849661688697, 0.2797053914892767, 0.3818300505051189,
    0.4179591836734694,
])

_NODES = np.concatenate([-_XK[:7], _XK[::-1]])          # 15 ascending nodes
_WK_FULL = np.concatenate([_WK[:7], _WK[::-1]])
_WG_FULL = np.zeros(15)
_WG_FULL[1:14:2] = np.concatenate([_WG[:3], _WG[::-1]])  # odd positions

# Hint breakpoints are forced at center +- these multiples of the half width.
_HINT_SPREAD = (1.0, 3.0, 10.0)


class QuadratureError(RuntimeError):
    """Budget exhausted before the requested tolerance was met."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class QuadResult:
    """Value, conservative absolute error bound, and integrand evaluations."""

    value: object
    abs_error_estimate: float
    evaluations: int


@dataclass(frozen=True)
class ResonanceHint:
    """Known sharp feature of an integrand at ``center`` (> 0) with the
    given ``half_width`` (>= 0; 0 means 'breakpoint only')."""

    center: float
    half_width: float = 0.0

    def __post_init__(self):
        if not (self.center > 0.0) or not math.isfinite(self.center):
            raise ValueError(f"hint center must be finite and > 0, got {self.center}")
        if self.half_width < 0.0 or not math.isfinite(self.half_width):
            raise ValueError(f"hint half_width must be finite and >= 0, got {self.half_width}")

    def breakpoints(self):
        pts = [self.center]
        for m in _HINT_SPREAD:
            pts.append(self.center - m * self.half_width)
            pts.append(self.center + m * self.half_width)
        return [p for p in pts if p > 0.0]


def _norm(v):
    return float(np.max(np.abs(v))) if np.ndim(v) else abs(complex(v))


def _panel(f, a, b):
    """One 7/15 pass over [a, b]; returns (kronrod, err, nevals)."""
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * _NODES
    y = np.asarray(f(x))
    if y.shape[:1] != (15,):
        raise ValueError("integrand must return one value per node")
    k = half * np.tensordot(_WK_FULL, y, axes=(0, 0))
    g = half * np.tensordot(_WG_FULL, y, axes=(0, 0))
    return k, _norm(k - g), 15


def integrate_adaptive(f, breakpoints, rel_tol=1e-8, abs_floor=0.0,
                       max_panels=4000):
    """Adaptive Gauss-Kronrod integration over [breakpoints[0], breakpoints[-1]].

    Parameters
    ----------
    f : callable
        Vectorised integrand, f(x: (n,) array) -> (n,) or (n, ...) array.
        May be complex or matrix valued.
    breakpoints : sequence of float
        Sorted panel edges; adjacent duplicates are dropped.  Hints and poles
        are injected by the callers as extra edges.
    rel_tol : float
        Target: sum of panel error bounds <= rel_tol * max-norm(result).
    abs_floor : float
        Absolute error level below which the integral counts as converged
        regardless of rel_tol (for results that are legitimately ~ 0).
    max_panels : int
        Budget; exceeding it raises QuadratureError with the partial result.

    Returns
    -------
    QuadResult
    """
    pts = np.unique(np.asarray(breakpoints, dtype=float))
    if pts.size < 2:
        raise ValueError("need at least two distinct breakpoints")
    span = pts[-1] - pts[0]

    # running totals are updated incrementally; panels whose 7/15 defect is
    # at rounding level are dropped from the heap (splitting cannot help)
    heap = []
    serial = 0
    nev = 0
    npanels = 0
    total = None
    err = 0.0

    def push(a, b):
        nonlocal serial, nev, npanels, total, err
        k, e, n = _panel(f, a, b)
        total = k if total is None else total + k
        err += e
        nev += n
        npanels += 1
        floor = 100.0 * np.finfo(float).eps * _norm(k)
        if e > floor and b - a > 1e-14 * span:
            heapq.heappush(heap, (-e, serial, a, b, k))
        serial += 1

    for a, b in zip(pts[:-1], pts[1:]):
        push(a, b)

    while True:
        if err <= max(rel_tol * _norm(total), abs_floor):
            return QuadResult(total, err, nev)
        if not heap:
            # every remaining panel is at its rounding floor
            return QuadResult(total, err, nev)
        if npanels >= max_panels:
            raise QuadratureError(
                f"quadrature budget exhausted: {npanels} panels, "
                f"error {err:.3e} vs target {max(rel_tol * _norm(total), abs_floor):.3e}",
                QuadResult(total, err, nev))
        e_neg, _, a, b, k = heapq.heappop(heap)
        total = total - k
        err += e_neg  # e_neg = -e of the popped panel
        m = 0.5 * (a + b)
        push(a, m)
        push(m, b)


def _hint_points(hints):
    pts = []
    for h in hints:
        pts.extend(h.breakpoints())
    return pts


def integrate_semi_infinite(f, hints=(), rel_tol=1e-8, scale=None,
                            abs_floor=0.0, max_panels=4000):
    """Integrate f over [0, inf) with the map w = scale * t / (1 - t).

    f must decay at least like 1/w^2 (or be exponentially cut); hints mark
    known sharp features and force initial breakpoints at
    center +- {1, 3, 10} half widths.

    Parameters
    ----------
    f : callable
        Vectorised integrand of the physical variable w.
    hints : sequence of ResonanceHint
    rel_tol, abs_floor, max_panels : see integrate_adaptive.
    scale : float, optional
        Stretch of the rational map (the t = 1/2 point).  Defaults to the
        largest hint center, else 1.0.

    Returns
    -------
    QuadResult
    """
    hint_pts = _hint_points(hints)
    if scale is None:
        scale = max((h.center for h in hints), default=1.0)
    if not (scale > 0.0) or not math.isfinite(scale):
        raise ValueError(f"scale must be finite and > 0, got {scale}")

    def g(t):
        w = scale * t / (1.0 - t)
        y = np.asarray(f(w))
        jac = scale / (1.0 - t) ** 2
        return y * jac.reshape((-1,) + (1,) * (y.ndim - 1))

    bps = [0.0, 0.5, 1.0] + [w / (w + scale) for w in hint_pts]
    return integrate_adaptive(g, sorted(bps), rel_tol=rel_tol,
                              abs_floor=abs_floor, max_panels=max_panels)


def principal_value(f, pole, hints=(), rel_tol=1e-8, scale=None,
                    abs_floor=0.0, max_panels=4000):
    """Cauchy principal value of int_0^inf f(w) / (w - pole) dw.

    Subtraction method: on the pole-symmetric interval (0, 2*pole) the
    integrand is replaced by (f(w) - f(pole)) / (w - pole), whose log term
    vanishes by symmetry; the remainder (2*pole, inf) is regular and mapped
    like integrate_semi_infinite.

    Parameters
    ----------
    f : callable
        Vectorised *numerator*; must be smooth at the pole and decay like
        1/w (so the full integrand decays like 1/w^2).
    pole : float
        Must lie strictly inside (0, inf).

    Returns
    -------
    QuadResult
    """
    if not (pole > 0.0) or not math.isfinite(pole):
        raise ValueError(f"principal_value pole must be finite and > 0, got {pole}")
    fp = np.asarray(f(np.array([pole])))[0]

    def sub(w):
        y = np.asarray(f(w))
        d = (w - pole).reshape((-1,) + (1,) * (y.ndim - 1))
        return (y - fp) / d

    bps = [0.0, 0.5 * pole, pole, 1.5 * pole, 2.0 * pole]
    bps += [p for p in _hint_points(hints) if p < 2.0 * pole]
    near = integrate_adaptive(sub, sorted(bps), rel_tol=rel_tol,
                              abs_floor=abs_floor, max_panels=max_panels)

    def tail(w):
        y = np.asarray(f(w + 2.0 * pole))
        d = (w + pole).reshape((-1,) + (1,) * (y.ndim - 1))
        return y / d

    tail_hints = []
    for h in hints:
        if h.center > 2.0 * pole:
            tail_hints.append(ResonanceHint(h.center - 2.0 * pole, h.half_width))
    far = integrate_semi_infinite(tail, hints=tail_hints, rel_tol=rel_tol,
                                  scale=scale if scale is not None else pole,
                                  abs_floor=abs_floor, max_panels=max_panels)
    return QuadResult(near.value + far.value,
                      near.abs_error_estimate + far.abs_error_estimate,
                      near.evaluations + far.evaluations)


def matsubara_sum(g, T, rel_tol=1e-10, max_terms=200000):
    """sum' over xi_N = 2 pi k_B T N / hbar of g(xi_N), N = 0 half weight.

    Truncates when the geometric extrapolation of the running tail,
    |t_N| r / (1 - r) with r the last term ratio, drops below
    rel_tol * |partial sum|.

    Parameters
    ----------
    g : callable
        Summand; g(0.0) must return the finite N = 0 limit.
    T : float
        Temperature in K, > 0 (the T = 0 integral is the caller's job).

    Returns
    -------
    QuadResult
        evaluations = number of summand calls.
    """
    if not (T > 0.0):
        raise ValueError("matsubara_sum needs T > 0; use the continuous "
                         "imaginary-frequency integral at T = 0")
    xi1 = 2.0 * math.pi * k_B * T / hbar
    total = 0.5 * g(0.0)
    prev = None
    n = 1
    while n <= max_terms:
        term = g(n * xi1)
        total = total + term
        tn = _norm(term)
        if tn == 0.0:
            return QuadResult(total, 0.0, n + 1)
        if prev is not None and n >= 4 and tn < prev:
            r = tn / prev
            tail = tn * r / (1.0 - r)
            if tail <= rel_tol * max(_norm(total), 1e-300):
                return QuadResult(total, tail, n + 1)
        prev = tn
        n += 1
    raise QuadratureError(f"matsubara_sum did not converge in {max_terms} terms",
                          QuadResult(total, float("nan"), n))


def fd_gradient(f, z, h):
    """Fourth-order central finite difference of f at z with step h.

    Used as the cross-check oracle for the analytic mode-phase gradients;
    f may return arrays.
    """
    if not (h > 0.0):
        raise ValueError("fd step must be > 0")
    fm2, fm1, fp1, fp2 = (np.asarray(f(z + k * h)) for k in (-2.0, -1.0, 1.0, 2.0))
    return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h)
