"""Dyadic Green tensor of the planar-multilayer Helmholtz problem.

Everything is expressed through the Weyl kpar integral with the atom in the
upper vacuum half-space.  The coincidence-limit scattering tensor and its
height gradient come out diagonal; transmission into a layer is exposed both
per kpar mode (for the absorption kernels) and fully assembled at a point
(for cross-checks).

Conventions: interfaces at z = 0, -d_1, -(d_1+d_2), ...; vertical wavenumber
k_zj = sqrt(eps_j mu_j omega^2/c^2 - kpar^2) with Im k_z >= 0 (tie-break
Re >= 0); p-polarised amplitudes are for the unnormalised mode vector
(kpar zhat -+ k_zj khat), see mode_amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.constants import c as C0
from scipy.special import j0, j1, jv

from . import quad
from ._kernels import stack_solve
from .materials import MaterialModel

__all__ = ["Layer", "LayerStack", "fresnel", "mode_amplitudes",
           "scattering_green_coincident", "scattering_green_grad_z",
           "im_green_coincident", "transmission_green"]


@dataclass(frozen=True)
class Layer:
    """One layer: material plus thickness in m (None = semi-infinite)."""

    material: MaterialModel
    thickness: float | None = None

    def __post_init__(self):
        if self.thickness is not None:
            object.__setattr__(self, "thickness", float(self.thickness))
            if not self.thickness > 0.0:
                raise ValueError("layer thickness must be > 0")


@dataclass(frozen=True)
class LayerStack:
    """Planar multilayer below z = 0; the atom sits in vacuum above.

    The last layer is semi-infinite (thickness None); all others need a
    finite thickness.
    """

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("need at least one layer")
        for lay in layers[:-1]:
            if lay.thickness is None:
                raise ValueError("only the bottom layer may be semi-infinite")
        if layers[-1].thickness is not None:
            raise ValueError("bottom layer must be semi-infinite")

    @classmethod
    def half_space(cls, material):
        return cls((Layer(material, None),))

    @classmethod
    def vacuum(cls):
        return cls.half_space(MaterialModel.vacuum())

    @property
    def interface_depths(self):
        """Depths (>= 0) of the interfaces, starting with 0.0 at the top."""
        depths = [0.0]
        for lay in self.layers[:-1]:
            depths.append(depths[-1] + lay.thickness)
        return tuple(depths)

    def locate(self, z_s):
        """Index (1-based, matching stack_solve rows) of the layer holding z_s < 0."""
        if z_s >= 0.0:
            raise ValueError("point must lie below the top interface")
        depth = -z_s
        depths = self.interface_depths
        for j in range(1, len(depths)):
            if depth < depths[j]:
                return j
        return len(self.layers)

    def resonance_hints(self):
        hints = []
        for lay in self.layers:
            hints.extend(lay.material.resonance_hints())
        return tuple(hints)


def _profile(stack, omega):
    """(eps, mu, thick) arrays with the vacuum half-space as row 0."""
    omega = complex(omega)
    nlay = len(stack.layers) + 1
    eps = np.ones(nlay, dtype=complex)
    mu = np.ones(nlay, dtype=complex)
    thick = np.zeros(nlay, dtype=float)
    on_imag = omega.real == 0.0 and omega.imag > 0.0
    for i, lay in enumerate(stack.layers):
        if on_imag:
            eps[i + 1] = float(lay.material.epsilon_imag_axis(omega.imag))
            mu[i + 1] = float(lay.material.mu_imag_axis(omega.imag))
        else:
            eps[i + 1] = complex(lay.material.epsilon(omega))
            mu[i + 1] = complex(lay.material.mu(omega))
        if lay.thickness is not None:
            thick[i + 1] = lay.thickness
    return eps, mu, thick


def fresnel(stack, omega, kpar):
    """Stack reflection coefficients (r_s, r_p) at complex omega.

    kpar may be a scalar or array.  The single-interface transmission
    coefficients of the top interface are available from mode_amplitudes
    (s amplitude in layer 1 equals t_s for a bare interface).
    """
    eps, mu, thick = _profile(stack, omega)
    kpar_arr = np.atleast_1d(np.asarray(kpar, dtype=float))
    k0sq = complex(omega) ** 2 / C0 ** 2
    rs, rp, _, _ = stack_solve(eps, mu, thick, k0sq, kpar_arr, False)
    if np.isscalar(kpar) or np.asarray(kpar).ndim == 0:
        return complex(rs[0]), complex(rp[0])
    return rs, rp


def mode_amplitudes(stack, omega, kpar):
    """Per-layer plane-wave amplitudes for unit incidence from above.

    Returns a dict with 'kz' (rows: vacuum, layer 1, ...), 'a_s', 'b_s',
    'a_p', 'b_p' (downgoing amplitude at each layer top, upgoing amplitude
    at each layer bottom) and the stack 'r_s', 'r_p'.  The s amplitudes
    multiply the unit s vector; the p amplitudes multiply
    (kpar zhat -+ k_zj khat), so dividing by k0 = omega/c gives unit
    incident field.
    """
    eps, mu, thick = _profile(stack, omega)
    kpar_arr = np.atleast_1d(np.asarray(kpar, dtype=float))
    k0sq = complex(omega) ** 2 / C0 ** 2
    rs, rp, kz, amps = stack_solve(eps, mu, thick, k0sq, kpar_arr, True)
    a_s, b_s, a_p, b_p = amps
    return {"kz": kz, "a_s": a_s, "b_s": b_s, "a_p": a_p, "b_p": b_p,
            "r_s": rs, "r_p": rp}


# -- coincidence-limit scattering tensor ---------------------------------

def _plasmon_q_hints(stack, omega, k0):
    """kpar-space hints (in the evanescent q variable) for surface modes."""
    hints = []
    for lay in stack.layers:
        e = complex(lay.material.epsilon(omega))
        m = complex(lay.material.mu(omega))
        # p surface mode near eps = -1, s near mu = -1 (nonretarded poles)
        for contrast in (e, m):
            if contrast.real < -1.0:
                ksp = k0 * np.sqrt(contrast / (contrast + 1.0))
                qsp = np.sqrt(ksp ** 2 - k0 ** 2)
                if qsp.real > 0.0 and np.isfinite(qsp.real):
                    hints.append(quad.ResonanceHint(
                        qsp.real, abs(qsp.imag) + 0.02 * qsp.real))
    return tuple(hints)


def _coincidence_real(stack, z_A, omega, order, rel_tol):
    """Real-frequency path: propagating + evanescent segments."""
    eps, mu, thick = _profile(stack, omega)
    k0 = omega / C0
    k0sq = complex(k0 * k0)

    def diag_terms(rs, rp, kz0sq, kparsq):
        xx = rs - rp * kz0sq / k0sq
        zz = 2.0 * rp * kparsq / k0sq
        return np.stack([xx, xx, zz], axis=-1)

    def f_prop(v):
        kpar = np.sqrt(np.maximum(k0 * k0 - v * v, 0.0))
        rs, rp, _, _ = stack_solve(eps, mu, thick, k0sq, kpar, False)
        base = (1j / (8.0 * np.pi)) * np.exp(2j * v * z_A)
        if order:
            base = base * (2j * v) ** order
        return base[:, None] * diag_terms(rs, rp, (v * v).astype(complex),
                                          kpar * kpar)

    # seed roughly one panel per phase cycle so the oscillation cannot alias
    # through a low-order panel
    ncyc = max(1, min(4096, int(k0 * z_A / np.pi) + 1))
    prop = quad.integrate_adaptive(f_prop, np.linspace(0.0, k0, ncyc + 1),
                                   rel_tol=rel_tol, max_panels=20000)

    def f_evan(q):
        kpar = np.sqrt(k0 * k0 + q * q)
        rs, rp, _, _ = stack_solve(eps, mu, thick, k0sq, kpar, False)
        base = (1.0 / (8.0 * np.pi)) * np.exp(-2.0 * q * z_A)
        if order:
            base = base * (-2.0 * q) ** order
        return base[:, None] * diag_terms(rs, rp, -(q * q).astype(complex),
                                          kpar * kpar)

    evan = quad.integrate_semi_infinite(
        f_evan, hints=_plasmon_q_hints(stack, omega, k0),
        rel_tol=rel_tol, scale=0.5 / z_A, max_panels=20000,
        abs_floor=1e-12 * (np.abs(prop.value).max() + 1e-300))
    return prop.value + evan.value


def _coincidence_imag(stack, z_A, xi, order, rel_tol):
    """Imaginary-axis path: single positive-decaying integral."""
    eps, mu, thick = _profile(stack, 1j * xi)
    kap_min = xi / C0
    k0sq = complex(-kap_min * kap_min)

    def f(u):
        kap = kap_min + u
        kparsq = np.maximum(kap * kap - kap_min * kap_min, 0.0)
        kpar = np.sqrt(kparsq)
        rs, rp, _, _ = stack_solve(eps, mu, thick, k0sq, kpar, False)
        xx = rs - rp * (-(kap * kap)) / k0sq
        zz = 2.0 * rp * kparsq / k0sq
        base = (1.0 / (8.0 * np.pi)) * np.exp(-2.0 * kap * z_A)
        if order:
            base = base * (-2.0 * kap) ** order
        return base[:, None] * np.stack([xx, xx, zz], axis=-1)

    # far in the exponential tail the true value underflows toward
    # denormals, where a pure relative target can never be met
    floor = np.finfo(float).tiny / rel_tol
    res = quad.integrate_semi_infinite(f, rel_tol=rel_tol, scale=0.5 / z_A,
                                       abs_floor=floor)
    return res.value


def _coincidence_complex(stack, z_A, omega, order, rel_tol):
    """General first-quadrant frequency: direct kpar integration."""
    eps, mu, thick = _profile(stack, omega)
    k0sq = complex(omega) ** 2 / C0 ** 2
    k0re = abs(complex(omega).real) / C0
    k0im = abs(complex(omega).imag) / C0

    def f(kpar):
        rs, rp, kz, _ = stack_solve(eps, mu, thick, k0sq, kpar, False)
        kz0 = kz[0]
        xx = rs - rp * kz0 * kz0 / k0sq
        zz = 2.0 * rp * kpar * kpar / k0sq
        base = (1j / (8.0 * np.pi)) * (kpar / kz0) * np.exp(2j * kz0 * z_A)
        if order:
            base = base * (2j * kz0) ** order
        return base[:, None] * np.stack([xx, xx, zz], axis=-1)

    hints = []
    if k0re > 0.0:
        hints.append(quad.ResonanceHint(k0re, k0im + 1e-3 * k0re))
    res = quad.integrate_semi_infinite(f, hints=tuple(hints),
                                       rel_tol=rel_tol, scale=0.5 / z_A,
                                       abs_floor=np.finfo(float).tiny
                                       / rel_tol)
    return res.value


def _coincidence(stack, z_A, omega, order, rel_tol):
    if not z_A > 0.0:
        raise ValueError("atom must sit above the stack, z_A > 0")
    w = complex(omega)
    if w.real < 0.0 or w.imag < 0.0 or w == 0.0:
        raise ValueError("frequency must lie in the closed first quadrant")
    if w.imag == 0.0:
        diag = _coincidence_real(stack, z_A, w.real, order, rel_tol)
    elif w.real == 0.0:
        diag = _coincidence_imag(stack, z_A, w.imag, order, rel_tol)
    else:
        diag = _coincidence_complex(stack, z_A, w, order, rel_tol)
    return np.diag(diag)


@lru_cache(maxsize=4096)
def _coincidence_cached(stack, z_A, omega, order, rel_tol):
    out = _coincidence(stack, z_A, omega, order, rel_tol)
    out.setflags(write=False)
    return out


def scattering_green_coincident(stack, z_A, omega, rel_tol=1e-9):
    """Scattering part G^(1)(r_A, r_A, omega), a diagonal 3x3 in 1/m.

    omega may be real (> 0), purely imaginary (i xi) or anywhere in the
    open first quadrant; on the imaginary axis the result is real.
    """
    return _coincidence_cached(stack, float(z_A), complex(omega), 0,
                               float(rel_tol))


def scattering_green_grad_z(stack, z_A, omega, rel_tol=1e-9):
    """d/dz_A of the coincidence scattering tensor (both phase factors)."""
    return _coincidence_cached(stack, float(z_A), complex(omega), 1,
                               float(rel_tol))


def im_green_coincident(stack, z_A, omega, rel_tol=1e-9):
    """Im G(r_A, r_A, omega) at real omega > 0, including the vacuum part."""
    omega = float(omega)
    if omega <= 0.0:
        raise ValueError("need omega > 0")
    scat = scattering_green_coincident(stack, z_A, omega, rel_tol)
    return omega / (6.0 * np.pi * C0) * np.eye(3) + scat.imag


# -- transmission to a point inside the stack ----------------------------

def _bessel_dyads(x):
    """phi-integrated dyad table; x = kpar * rho."""
    b0 = j0(x)
    b1 = j1(x)
    b2 = jv(2, x)
    return b0, b1, b2


def transmission_green(stack, z_A, s_point, omega, rel_tol=1e-8):
    """G(r_A, s, omega) for the atom position above and s inside layer j.

    Assembled from the per-mode amplitudes by the in-plane angular
    integrals; mainly a cross-check path (the kernels integrate the same
    modes analytically).  Real omega only.
    """
    omega = float(omega)
    x_s, y_s, z_s = (float(v) for v in s_point)
    j = stack.locate(z_s)
    depths = stack.interface_depths
    w_depth = -z_s - depths[j - 1]
    d_j = stack.layers[j - 1].thickness
    d_j = np.inf if d_j is None else d_j

    eps, mu, thick = _profile(stack, omega)
    k0 = omega / C0
    k0sq = complex(k0 * k0)
    rho = math.hypot(x_s, y_s)
    phi_s = math.atan2(y_s, x_s)

    def modes(kpar, kz0):
        _, _, kz, amps = stack_solve(eps, mu, thick, k0sq, kpar, True)
        a_s, b_s, a_p, b_p = amps
        kzj = kz[j]
        ph_dn = np.exp(1j * kzj * w_depth)
        ph_up = np.exp(1j * kzj * (d_j - w_depth)) if np.isfinite(d_j) else 0.0
        f_s = a_s[j] * ph_dn + b_s[j] * ph_up
        at_dn = a_p[j] * ph_dn / k0
        at_up = b_p[j] * ph_up / k0
        # field coefficients at s in the (rho-hat, phi-hat, zhat) frame
        w_sa = np.zeros_like(f_s)
        w_sb = f_s
        w_pa = kzj * (at_dn - at_up)
        w_pg = kpar * (at_dn + at_up)
        # vacuum source-side downgoing vectors
        v_sb = np.ones_like(f_s)
        v_pa = kz0 / k0
        v_pg = kpar / k0

        b0, b1, b2 = _bessel_dyads(kpar * rho)
        pi_m = np.pi * (b0 - b2)
        pi_p = np.pi * (b0 + b2)
        out = np.zeros(f_s.shape + (3, 3), dtype=complex)
        # s channel: phi-hat (x) phi-hat
        out[..., 0, 0] += w_sb * v_sb * pi_p
        out[..., 1, 1] += w_sb * v_sb * pi_m
        # p channel: rho/z combinations
        out[..., 0, 0] += w_pa * v_pa * pi_m
        out[..., 1, 1] += w_pa * v_pa * pi_p
        out[..., 0, 2] += w_pa * v_pg * 2j * np.pi * b1
        out[..., 2, 0] += w_pg * v_pa * 2j * np.pi * b1
        out[..., 2, 2] += w_pg * v_pg * 2.0 * np.pi * b0
        return out

    def f_prop(v):
        kpar = np.sqrt(np.maximum(k0 * k0 - v * v, 0.0))
        pref = (1j / (8.0 * np.pi ** 2)) * np.exp(1j * v * z_A)
        return pref[:, None, None] * modes(kpar, v.astype(complex))

    def f_evan(q):
        kpar = np.sqrt(k0 * k0 + q * q)
        pref = (1.0 / (8.0 * np.pi ** 2)) * np.exp(-q * z_A)
        return pref[:, None, None] * modes(kpar, 1j * q)

    ncyc = max(1, min(4096, int(k0 * (z_A + rho + abs(z_s)) / np.pi) + 1))
    prop = quad.integrate_adaptive(f_prop, np.linspace(0.0, k0, ncyc + 1),
                                   rel_tol=rel_tol, max_panels=20000)
    scale = 1.0 / (z_A + abs(z_s) + 1e-3 / k0)
    evan = quad.integrate_semi_infinite(
        f_evan, hints=_plasmon_q_hints(stack, omega, k0), rel_tol=rel_tol,
        scale=scale, abs_floor=1e-10 * np.abs(prop.value).max())
    g_s_ra = prop.value + evan.value

    g = g_s_ra.T.copy()
    if rho > 0.0 and phi_s != 0.0:
        cp, sp = math.cos(phi_s), math.sin(phi_s)
        rot = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
        g = rot @ g @ rot.T
    return g
