"""Thermal forces on the atom: state-resolved, equilibrium, and long-time.

Each level's force carries a nonresonant part evaluated on the imaginary
frequency axis (where the gradient kernel is smooth), a pole residue for
downward transitions, and occupation-weighted real-axis parts split into
environment and body channels.  The equilibrium Matsubara form and the
long-time Lifshitz force give independent cross-checks of the same
physics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C0, hbar, k as K_B, mu_0

from . import quad
from .greenfunc import scattering_green_grad_z
from .thermalenv import TemperatureField, photon_number, thermal_kernel

__all__ = ["ForceResult", "LevelForce", "ForceConvergenceWarning",
           "polarisability", "force_component", "total_force",
           "equilibrium_force_matsubara", "lifshitz_force", "PART_NAMES"]

PART_NAMES = ("nonresonant", "resonant", "thermal_environment",
              "thermal_body")


class ForceConvergenceWarning(UserWarning):
    """A force quadrature stopped on its panel budget; partial value kept."""


@dataclass(frozen=True)
class LevelForce:
    """Force on the atom prepared in one level, with its decomposition."""

    F: np.ndarray        # (3,) N
    parts: dict          # name -> (3,) N
    errors: dict         # name -> absolute estimate, N

    @property
    def converged(self):
        return all(np.isfinite(v) for v in self.errors.values())


@dataclass(frozen=True)
class ForceResult:
    """Population-weighted total force and the per-level components."""

    F: np.ndarray        # (3,) N
    levels: tuple        # LevelForce per level
    weights: np.ndarray  # sigma_nn used in the average
    parts: dict          # name -> (3,) N, weighted
    errors: dict         # name -> absolute estimate, N

    @property
    def converged(self):
        return all(lv.converged for lv in self.levels)


def polarisability(atom, n, omega, gamma=None):
    """Polarisability tensor of level n at (complex) frequency omega.

    alpha_n = (1/hbar) sum_k [ d_nk d_kn / (omega_kn - omega - i eps)
    + d_kn d_nk / (omega_kn + omega + i eps) ]; eps = (Gamma_n + Gamma_k)/2
    when per-level rates are supplied, else 0.  Real and symmetric on the
    imaginary axis.  Units C^2 m^2 / J.
    """
    w = complex(omega)
    w_kn = -atom.omega_matrix[n]
    alpha = np.zeros((3, 3), dtype=complex)
    for k in range(atom.n_levels):
        if k == n:
            continue
        d = atom.dipoles[n, k]
        if not np.any(d != 0.0):
            continue
        eps = 0.0 if gamma is None else 0.5 * (gamma[n] + gamma[k])
        den_m = w_kn[k] - w - 1j * eps
        den_p = w_kn[k] + w + 1j * eps
        if min(abs(den_m), abs(den_p)) <= 1e-12 * abs(w_kn[k]):
            raise ValueError("polarisability evaluated at an unbroadened "
                             "pole; supply rates for broadening")
        alpha += np.outer(d, np.conj(d)) / den_m \
            + np.outer(np.conj(d), d) / den_p
    return alpha / hbar


def _run(call, *args, like=(), **kwargs):
    """Quadrature with a soft landing: budget overrun keeps the partial."""
    try:
        res = call(*args, **kwargs)
        return res.value, res.abs_error_estimate
    except quad.QuadratureError as exc:
        if np.shape(exc.result.value) != like:
            raise  # a nested quadrature failed, not the one launched here
        warnings.warn(f"force quadrature budget hit: {exc}",
                      ForceConvergenceWarning, stacklevel=3)
        return exc.result.value, float("nan")


def _f_prime(stack, z_a, d_vec, zeta, rel_tol):
    """(hbar mu0 / 2 pi) zeta^2 d . G'(z_A, zeta) . d*, the gradient weight."""
    g = scattering_green_grad_z(stack, z_a, zeta, rel_tol)
    q = np.einsum("a,ab,b", d_vec, g, np.conj(d_vec))
    return hbar * mu_0 / (2.0 * np.pi) * zeta * zeta * q


def _nonresonant_term(stack, z_a, d_vec, omega_c, rel_tol):
    """-Omega int f'(i xi) / (xi^2 + Omega^2) d xi, plus Re-pole residue."""

    def body(xi):
        vals = np.empty(xi.shape, dtype=complex)
        for m, x in enumerate(xi):
            vals[m] = _f_prime(stack, z_a, d_vec, 1j * x, rel_tol).real
        return vals / (xi * xi + omega_c * omega_c)

    scale = min(abs(omega_c), C0 / (2.0 * z_a))
    val, err = _run(quad.integrate_semi_infinite, body, rel_tol=rel_tol,
                    scale=scale, max_panels=8000)
    nonres = -omega_c * val
    nonres_err = abs(omega_c) * (err if np.isfinite(err) else np.nan)
    res = 0.0 + 0.0j
    if omega_c.real > 0.0:
        res = np.pi * _f_prime(stack, z_a, d_vec, omega_c, rel_tol)
    return nonres, nonres_err, res


def _thermal_terms(stack, z_a, d_vec, tfield, omega_c, mode, rel_tol):
    """Occupation-weighted real-axis integrals, (environment, body) split."""
    t_max = max(tfield.environment, max(tfield.layers, default=0.0))
    if t_max <= 0.0:
        return np.zeros(2, dtype=complex), 0.0
    env_field = TemperatureField(environment=tfield.environment,
                                 layers=(0.0,) * len(tfield.layers))
    body_field = TemperatureField(environment=0.0, layers=tfield.layers)

    def q_n(w):
        out = np.empty(w.shape + (2,), dtype=complex)
        for m, x in enumerate(w):
            if x <= 0.0:
                out[m] = 0.0
                continue
            ge = thermal_kernel(stack, z_a, x, env_field, rel_tol=rel_tol,
                                grad=True)
            gb = thermal_kernel(stack, z_a, x, body_field, rel_tol=rel_tol,
                                grad=True)
            out[m, 0] = np.einsum("a,ab,b", d_vec, ge, np.conj(d_vec))
            out[m, 1] = np.einsum("a,ab,b", d_vec, gb, np.conj(d_vec))
        return out

    w_t = omega_c.real
    aw = abs(w_t)
    hints = list(stack.resonance_hints())
    scale = max(aw, 3.0 * K_B * t_max / hbar)
    if mode == "full_complex":
        half = max(omega_c.imag, 1e-9 * max(aw, scale))
        pole_hint = [quad.ResonanceHint(aw, half)] if aw > 0.0 else []
        v2, e2 = _run(quad.integrate_semi_infinite,
                      lambda w: q_n(w) / (w - omega_c)[:, None],
                      hints=tuple(hints + (pole_hint if w_t > 0.0 else [])),
                      rel_tol=rel_tol, scale=scale, max_panels=8000,
                      like=(2,))
        v3, e3 = _run(quad.integrate_semi_infinite,
                      lambda w: q_n(w) / (w + omega_c)[:, None],
                      hints=tuple(hints + (pole_hint if w_t < 0.0 else [])),
                      rel_tol=rel_tol, scale=scale, max_panels=8000,
                      like=(2,))
        total = v2 - v3
        err = e2 + e3
    else:
        if w_t > 0.0:
            v2, e2 = _run(quad.principal_value, q_n, aw, hints=tuple(hints),
                          rel_tol=rel_tol, scale=scale, max_panels=8000,
                          like=(2,))
            v2 = v2 + 1j * np.pi * q_n(np.array([aw]))[0]
            v3, e3 = _run(quad.integrate_semi_infinite,
                          lambda w: q_n(w) / (w + aw)[:, None],
                          hints=tuple(hints), rel_tol=rel_tol, scale=scale,
                          max_panels=8000, like=(2,))
            total = v2 - v3
        else:
            v2, e2 = _run(quad.integrate_semi_infinite,
                          lambda w: q_n(w) / (w + aw)[:, None],
                          hints=tuple(hints), rel_tol=rel_tol, scale=scale,
                          max_panels=8000, like=(2,))
            v3, e3 = _run(quad.principal_value, q_n, aw, hints=tuple(hints),
                          rel_tol=rel_tol, scale=scale, max_panels=8000,
                          like=(2,))
            total = v2 - v3 + 1j * np.pi * q_n(np.array([aw]))[0]
        err = e2 + e3
    return total, err


def force_component(atom, stack, tfield, n, rates, mode="full_complex",
                    rel_tol=1e-8):
    """Force on the atom prepared in level n, along z, with decomposition.

    full_complex keeps the imaginary part of the transition frequencies
    (damping) in the pole positions; perturbative takes the real-axis
    limit as a principal value plus pole contribution.  Both agree at
    equilibrium for weak damping.
    """
    if mode not in ("full_complex", "perturbative"):
        raise ValueError(f"unknown force mode {mode!r}")
    if not 0 <= n < atom.n_levels:
        raise ValueError(f"level index {n} out of range")
    z_a = atom.z_A
    w = rates.omega_shifted
    gt = rates.gamma_total
    parts = {name: np.zeros(3) for name in PART_NAMES}
    errors = {name: 0.0 for name in PART_NAMES}
    two_over_hbar = 2.0 / hbar
    for k in range(atom.n_levels):
        if k == n:
            continue
        d = atom.dipoles[n, k]
        if not np.any(d != 0.0):
            continue
        if mode == "full_complex":
            omega_c = complex(w[n, k], 0.5 * (gt[n] + gt[k]))
        else:
            omega_c = complex(w[n, k])
        nonres, nr_err, res = _nonresonant_term(stack, z_a, d, omega_c,
                                                rel_tol)
        parts["nonresonant"][2] += two_over_hbar * nonres.real
        errors["nonresonant"] += two_over_hbar * nr_err
        parts["resonant"][2] += two_over_hbar * np.real(res)
        th, th_err = _thermal_terms(stack, z_a, d, tfield, omega_c, mode,
                                    rel_tol)
        parts["thermal_environment"][2] += two_over_hbar * th[0].real
        parts["thermal_body"][2] += two_over_hbar * th[1].real
        errors["thermal_environment"] += two_over_hbar * th_err
        errors["thermal_body"] += two_over_hbar * th_err
    f_total = np.zeros(3)
    for name in PART_NAMES:
        f_total = f_total + parts[name]
    return LevelForce(F=f_total, parts=parts, errors=errors)


def total_force(atom, stack, tfield, sigma, rates, mode="full_complex",
                rel_tol=1e-8, level_forces=None):
    """Population-weighted force; pass level_forces to reuse components."""
    p = np.asarray(getattr(sigma, "populations", sigma), dtype=float)
    if p.shape != (atom.n_levels,):
        raise ValueError("population vector does not match the level count")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("populations must sum to 1")
    if level_forces is None:
        level_forces = tuple(
            force_component(atom, stack, tfield, n, rates, mode, rel_tol)
            for n in range(atom.n_levels))
    f_tot = np.zeros(3)
    parts = {name: np.zeros(3) for name in PART_NAMES}
    errors = {name: 0.0 for name in PART_NAMES}
    for weight, lv in zip(p, level_forces):
        f_tot = f_tot + weight * lv.F
        for name in PART_NAMES:
            parts[name] = parts[name] + weight * lv.parts[name]
            errors[name] += abs(weight) * lv.errors[name]
    return ForceResult(F=f_tot, levels=tuple(level_forces), weights=p,
                       parts=parts, errors=errors)


def _alpha_grad_trace(atom, stack, n, xi, rel_tol):
    """xi^2 Tr[alpha_n(i xi) . G'(i xi)], the joint Matsubara summand."""
    alpha = polarisability(atom, n, 1j * xi)
    grad = scattering_green_grad_z(stack, atom.z_A, 1j * xi, rel_tol)
    return xi * xi * float(np.real(np.sum(np.diagonal(alpha)
                                          * np.diagonal(grad))))


def _nonresonant_matsubara(atom, stack, temp, n, rel_tol):
    """Matsubara (T > 0) or continuous (T = 0) nonresonant force, z part."""
    if temp > 0.0:
        xi_1 = 2.0 * np.pi * K_B * temp / hbar
        gaps = np.abs(atom.omega_matrix[n])
        gaps = gaps[gaps > 0.0]
        smooth = min(gaps.min() if gaps.size else np.inf,
                     C0 / (2.0 * atom.z_A))

        def g(xi):
            if xi == 0.0:
                # joint xi->0 limit, Richardson on a 1:2:4 ladder; the
                # base must sit well below the transition poles and the
                # c/2z cutoff or the cubic extrapolation overshoots
                x = min(0.125 * xi_1, smooth / 32.0)
                return (8.0 * _alpha_grad_trace(atom, stack, n, x, rel_tol)
                        - 6.0 * _alpha_grad_trace(atom, stack, n, 2 * x,
                                                  rel_tol)
                        + _alpha_grad_trace(atom, stack, n, 4 * x,
                                            rel_tol)) / 3.0
            return _alpha_grad_trace(atom, stack, n, xi, rel_tol)

        val, err = _run(quad.matsubara_sum, g, temp,
                        rel_tol=max(rel_tol, 1e-12))
        return -mu_0 * K_B * temp * val, mu_0 * K_B * temp * err

    def body(xi):
        return np.array([_alpha_grad_trace(atom, stack, n, x, rel_tol)
                         for x in xi])

    gaps = np.abs(atom.omega_matrix[n])
    gaps = gaps[gaps > 0.0]
    scale = min(gaps.min(), C0 / (2.0 * atom.z_A)) if gaps.size \
        else C0 / (2.0 * atom.z_A)
    val, err = _run(quad.integrate_semi_infinite, body, rel_tol=rel_tol,
                    scale=scale, max_panels=8000)
    pref = mu_0 * hbar / (2.0 * np.pi)
    return -pref * val, pref * err


def equilibrium_force_matsubara(atom, stack, temp, n, rel_tol=1e-8):
    """Equilibrium force on level n at uniform temperature, as a 3-vector.

    Nonresonant Matsubara sum over the joint xi^2 alpha G' product plus the
    resonant term weighted by (n+1) for downward and -n for upward
    transitions at the bare frequencies.
    """
    f_z, _ = _nonresonant_matsubara(atom, stack, temp, n, rel_tol)
    w = atom.omega_matrix
    for k in range(atom.n_levels):
        if k == n:
            continue
        d = atom.dipoles[n, k]
        if not np.any(d != 0.0):
            continue
        w_nk = w[n, k]
        if w_nk > 0.0:
            weight = 1.0 + (photon_number(temp, w_nk) if temp > 0.0 else 0.0)
        else:
            if temp <= 0.0:
                continue
            weight = -photon_number(temp, -w_nk)
        grad = scattering_green_grad_z(stack, atom.z_A, abs(w_nk), rel_tol)
        q = np.real(np.einsum("a,ab,b", d, np.real(grad), np.conj(d)))
        f_z += mu_0 * weight * w_nk ** 2 * q
    return np.array([0.0, 0.0, f_z])


def lifshitz_force(atom, stack, temp, rel_tol=1e-8):
    """Long-time force: Boltzmann-weighted nonresonant Matsubara sum.

    The resonant terms cancel pairwise under thermal weights, so the
    result is the Lifshitz expression with the thermal polarisability.
    """
    if not temp > 0.0:
        raise ValueError("lifshitz_force needs uniform T > 0")
    en = atom.energies
    sigma = np.exp(-(en - en.min()) / (K_B * temp))
    sigma /= sigma.sum()
    levels = []
    for n in range(atom.n_levels):
        f_z, err = _nonresonant_matsubara(atom, stack, temp, n, rel_tol)
        parts = {name: np.zeros(3) for name in PART_NAMES}
        parts["nonresonant"] = np.array([0.0, 0.0, f_z])
        errors = {name: 0.0 for name in PART_NAMES}
        errors["nonresonant"] = err
        levels.append(LevelForce(F=parts["nonresonant"], parts=parts,
                                 errors=errors))
    f_tot = np.zeros(3)
    parts = {name: np.zeros(3) for name in PART_NAMES}
    errors = {name: 0.0 for name in PART_NAMES}
    for weight, lv in zip(sigma, levels):
        f_tot = f_tot + weight * lv.F
        parts["nonresonant"] = parts["nonresonant"] + weight \
            * lv.parts["nonresonant"]
        errors["nonresonant"] += weight * lv.errors["nonresonant"]
    return ForceResult(F=f_tot, levels=tuple(levels), weights=sigma,
                       parts=parts, errors=errors)
