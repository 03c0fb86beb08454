"""Per-region temperatures, photon occupation, and absorption kernels.

The kernels K_region(omega) resolve the field noise reaching the atom by the
region where it is absorbed: one kernel per stack layer, plus an environment
remainder fixed by the Im G sum rule.  Layer kernels come out as a single
kpar integral: the in-plane plane-wave orthogonality collapses the double
Weyl expansion, and the depth profile |A e^{i k_z w} + B e^{i k_z (d-w)}|^2
integrates across the layer in closed form.

Everything here is at real omega > 0.  Layer indices are 1-based, matching
greenfunc.mode_amplitudes rows (row 0 is the vacuum half-space).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.constants import c as C0
from scipy.constants import epsilon_0, hbar, k as k_B, mu_0

from . import quad
from ._kernels import stack_solve
from .greenfunc import (_plasmon_q_hints, _profile, im_green_coincident,
                        scattering_green_grad_z)

__all__ = ["TemperatureField", "photon_number", "body_kernel",
           "environment_kernel", "thermal_kernel", "KernelAccuracyWarning"]


class KernelAccuracyWarning(UserWarning):
    """Raised-to-warning signal that a kernel failed a PSD sanity margin."""


@dataclass(frozen=True)
class TemperatureField:
    """Environment temperature plus one temperature per stack layer, in K."""

    environment: float
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "environment", float(self.environment))
        object.__setattr__(self, "layers",
                           tuple(float(t) for t in self.layers))
        if self.environment < 0.0 or any(t < 0.0 for t in self.layers):
            raise ValueError("temperatures must be >= 0")

    @classmethod
    def uniform(cls, temperature, n_layers):
        return cls(temperature, (temperature,) * n_layers)

    @property
    def is_uniform(self):
        return all(t == self.environment for t in self.layers)


def photon_number(temperature, omega):
    """Bose-Einstein occupation of a field mode at omega > 0."""
    if omega <= 0.0:
        raise ValueError("photon_number needs omega > 0")
    if temperature <= 0.0:
        return 0.0
    x = hbar * omega / (k_B * temperature)
    if x > 700.0:
        return 0.0
    return 1.0 / math.expm1(x)


def _depth_integrals(kz, d):
    """(I, J, cross_phase) for int_0^d of the squared mode profile.

    I = int e^{-2 alpha w} dw, J = int e^{2 i beta w} dw with alpha = Im kz,
    beta = Re kz; cross_phase = e^{-i kz* d} multiplies the A B* term.
    d = inf is the semi-infinite bottom layer: J and the cross term are not
    used there (B = 0).
    """
    alpha = kz.imag
    beta = kz.real
    if not np.isfinite(d):
        with np.errstate(divide="ignore"):
            i_a = np.where(alpha > 0.0, 0.5 / np.maximum(alpha, 1e-300), np.inf)
        return i_a, np.zeros_like(kz), np.zeros_like(kz)
    small_a = 2.0 * alpha * d < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        i_a = np.where(small_a, d, -np.expm1(-2.0 * alpha * d)
                       / np.where(small_a, 1.0, 2.0 * alpha))
    small_b = 2.0 * np.abs(beta) * d < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        j_b = np.where(small_b, d, (np.exp(2j * beta * d) - 1.0)
                       / np.where(small_b, 1.0, 2j * beta))
    return i_a, j_b, np.exp(-1j * np.conj(kz) * d)


def _body_integrand(eps, mu, thick, k0, z_A, grad):
    """Integrand factory: maps the vertical-wavenumber variable to per-layer
    diagonal kernel densities, shape (nodes, nlayers, 3)."""
    k0sq = complex(k0 * k0)
    nlay = eps.shape[0]
    im_eps = eps.imag
    im_mu = mu.imag

    def density(kz0_sq_sign, v):
        # v is kz0 on the propagating segment (kz0 = v) and q on the
        # evanescent one (kz0 = i q); |kz0|^2 = v^2 either way
        if kz0_sq_sign > 0:
            kpar = np.sqrt(np.maximum(k0 * k0 - v * v, 0.0))
            damp = np.ones_like(v)
        else:
            kpar = np.sqrt(k0 * k0 + v * v)
            damp = np.exp(-2.0 * v * z_A)
        _, _, kz, amps = stack_solve(eps, mu, thick, k0sq, kpar, True)
        a_s, b_s, a_p, b_p = amps
        kparsq = kpar * kpar
        v2 = v * v
        out = np.zeros((v.shape[0], nlay, 3))
        for j in range(1, nlay):
            w_e = im_eps[j]
            w_m = im_mu[j] / abs(mu[j]) ** 2
            if w_e <= 0.0 and w_m <= 0.0:
                continue
            d_j = thick[j] if 0 < j < nlay - 1 else np.inf
            i_a, j_b, ph = _depth_integrals(kz[j], d_j)
            abs_kzj2 = np.abs(kz[j]) ** 2
            plus = kparsq + abs_kzj2
            minus = kparsq - abs_kzj2

            pow_s = (np.abs(a_s[j]) ** 2 + np.abs(b_s[j]) ** 2) * i_a
            x_s = 2.0 * np.real(a_s[j] * np.conj(b_s[j]) * ph * j_b)
            pow_p = (np.abs(a_p[j]) ** 2 + np.abs(b_p[j]) ** 2) * i_a
            x_p = 2.0 * np.real(a_p[j] * np.conj(b_p[j]) * ph * j_b)

            row = np.zeros((v.shape[0], 3))
            if w_e > 0.0:
                we_s = pow_s + x_s
                we_p = (plus * pow_p + minus * x_p) / (k0 * k0)
                row += (k0 ** 4) * w_e * (
                    np.pi * we_s[:, None] * np.array([1.0, 1.0, 0.0])
                    + (np.pi / (k0 * k0)) * we_p[:, None]
                    * np.stack([v2, v2, 2.0 * kparsq], axis=-1))
            if w_m > 0.0:
                wb_s = plus * pow_s + minus * x_s
                wb_p = abs(eps[j] * mu[j]) ** 2 * (k0 * k0) * (pow_p + x_p)
                row += (k0 * k0) * w_m * (
                    np.pi * wb_s[:, None] * np.array([1.0, 1.0, 0.0])
                    + (np.pi / (k0 * k0)) * wb_p[:, None]
                    * np.stack([v2, v2, 2.0 * kparsq], axis=-1))
            out[:, j, :] = row
        # measure: k|| dk|| / |kz0|^2 = dv / v on both segments
        safe_v = np.where(v > 0.0, v, 1.0)
        return out * (damp / safe_v)[:, None, None]

    pref = hbar / (16.0 * np.pi ** 3 * epsilon_0)

    if not grad:
        def f_prop(v):
            return pref * density(+1, v)

        def f_evan(q):
            return pref * density(-1, q)
        return f_prop, f_evan

    def f_prop(v):
        return (1j * v)[:, None, None] * (pref * density(+1, v))

    def f_evan(q):
        return (-q)[:, None, None] * (pref * density(-1, q))
    return f_prop, f_evan


@lru_cache(maxsize=65536)
def _body_all(stack, z_A, omega, grad, rel_tol):
    """Diagonals of every layer kernel at once, shape (nlayers, 3)."""
    eps, mu, thick = _profile(stack, omega)
    if not np.any(eps.imag > 0.0) and not np.any(mu.imag > 0.0):
        out = np.zeros((len(stack.layers), 3),
                       dtype=complex if grad else float)
        out.setflags(write=False)
        return out
    k0 = omega / C0
    f_prop, f_evan = _body_integrand(eps, mu, thick, k0, z_A, grad)

    # interior-layer round trips set the kpar oscillation scale
    opt = sum(abs(np.sqrt(eps[j] * mu[j])) * thick[j]
              for j in range(1, len(thick) - 1))
    ncyc = max(1, min(1024, int(k0 * opt.real / np.pi) + 1 if opt else 1))
    prop = quad.integrate_adaptive(f_prop, np.linspace(0.0, k0, ncyc + 1),
                                   rel_tol=rel_tol, max_panels=20000)
    evan = quad.integrate_semi_infinite(
        f_evan, hints=_plasmon_q_hints(stack, omega, k0), rel_tol=rel_tol,
        scale=0.5 / z_A, max_panels=20000,
        abs_floor=1e-12 * (np.abs(prop.value).max() + 1e-300))
    total = prop.value + evan.value
    out = total[1:] if grad else total[1:].real
    out.setflags(write=False)
    return out


def body_kernel(stack, z_A, omega, layer, rel_tol=1e-9, grad=False):
    """Absorption kernel K_j(omega) of one stack layer, 3x3.

    grad=True returns the half-gradient variant (derivative on the first
    Green-tensor factor only), which is complex; the plain kernel is real
    diagonal PSD.  `layer` is 1-based.
    """
    if not 1 <= layer <= len(stack.layers):
        raise ValueError("layer index out of range")
    omega = float(omega)
    if omega <= 0.0:
        raise ValueError("kernels need real omega > 0")
    rows = _body_all(stack, float(z_A), omega, bool(grad), float(rel_tol))
    return np.diag(rows[layer - 1])


def _im_green_sum(stack, z_A, omega, rel_tol):
    return (hbar * mu_0 / np.pi) * omega ** 2 \
        * im_green_coincident(stack, z_A, omega, rel_tol)


def _im_green_sum_grad1(stack, z_A, omega, rel_tol):
    g1 = scattering_green_grad_z(stack, z_A, omega, rel_tol)
    return (hbar * mu_0 / (2.0 * np.pi)) * omega ** 2 * g1.imag


def environment_kernel(stack, z_A, omega, rel_tol=1e-9, grad=False):
    """Far-field remainder of the Im G sum rule, K_env = sum rule - bodies."""
    omega = float(omega)
    if omega <= 0.0:
        raise ValueError("kernels need real omega > 0")
    rows = _body_all(stack, float(z_A), omega, bool(grad), float(rel_tol))
    if grad:
        total = _im_green_sum_grad1(stack, z_A, omega, rel_tol)
    else:
        total = _im_green_sum(stack, z_A, omega, rel_tol)
    k_env = total - np.diag(rows.sum(axis=0))
    if not grad:
        lo = np.diag(k_env).real.min()
        tr = np.trace(k_env).real
        if lo < -1e-8 * max(tr, 0.0):
            warnings.warn(
                f"environment kernel lost positivity ({lo:.3e} vs trace "
                f"{tr:.3e}); tighten rel_tol", KernelAccuracyWarning)
    return k_env


def thermal_kernel(stack, z_A, omega, tfield, rel_tol=1e-9, grad=False):
    """Occupation-weighted noise kernel N(omega) (or its half-gradient).

    N = n_env K_env + sum_j n_j K_j.  At uniform temperature this collapses
    to n_T times the full sum rule, which is used directly in that case.
    """
    omega = float(omega)
    if len(tfield.layers) != len(stack.layers):
        raise ValueError("temperature field does not match the stack")
    n_env = photon_number(tfield.environment, omega)
    n_lay = np.array([photon_number(t, omega) for t in tfield.layers])
    if n_env == 0.0 and np.all(n_lay == 0.0):
        return np.zeros((3, 3), dtype=complex if grad else float)
    if tfield.is_uniform:
        if grad:
            return n_env * _im_green_sum_grad1(stack, z_A, omega, rel_tol)
        return n_env * _im_green_sum(stack, z_A, omega, rel_tol)
    rows = _body_all(stack, float(z_A), omega, bool(grad), float(rel_tol))
    if grad:
        total = _im_green_sum_grad1(stack, z_A, omega, rel_tol).astype(complex)
    else:
        total = _im_green_sum(stack, z_A, omega, rel_tol)
    body_sum = np.diag(rows.sum(axis=0))
    out = n_env * (total - body_sum)
    out = out + np.diag((n_lay[:, None] * rows).sum(axis=0))
    return out
