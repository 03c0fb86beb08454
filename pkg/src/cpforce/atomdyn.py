"""Multilevel atom: decay rates, level shifts, and population dynamics.

Rates combine the resonant spontaneous part (Im G at the transition
frequency) with an occupation-weighted part from the region-resolved noise
kernels, so every stack region drives the atom at its own temperature.
Shifts carry a zero-point part, evaluated on the imaginary frequency axis
where the integrand is smooth (plus the explicit pole residue for downward
transitions; the two forms are related by closing the frequency contour),
and a thermal part integrated on the real axis with principal values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as C0, hbar, k as K_B, mu_0
from scipy.linalg import expm

from . import quad
from .greenfunc import im_green_coincident, scattering_green_coincident
from .thermalenv import thermal_kernel

__all__ = ["AtomSpec", "RatesAndShifts", "Populations", "loss_rates",
           "frequency_shifts", "rates_and_shifts", "evolve_populations",
           "coherence_evolution", "steady_state"]


@dataclass(frozen=True, eq=False)
class AtomSpec:
    """Level labels/energies (J), dipole matrix elements (C m), height (m).

    dipoles[m, n] is the 3-vector d_mn; Hermiticity d_mn = conj(d_nm) is
    required.  All transition frequencies must be mutually distinct and
    nonzero (nondegenerate level scheme with no repeated gaps), which the
    rate-equation treatment assumes.
    """

    levels: tuple
    dipoles: np.ndarray
    z_A: float

    def __post_init__(self):
        levels = tuple((str(lab), float(en)) for lab, en in self.levels)
        object.__setattr__(self, "levels", levels)
        n = len(levels)
        d = np.asarray(self.dipoles, dtype=complex)
        if d.shape != (n, n, 3):
            raise ValueError(f"dipoles must have shape ({n}, {n}, 3)")
        if not np.allclose(d, np.conj(np.swapaxes(d, 0, 1)), rtol=1e-12,
                           atol=0.0):
            raise ValueError("dipole matrix must be Hermitian, d_mn = d_nm*")
        d.setflags(write=False)
        object.__setattr__(self, "dipoles", d)
        object.__setattr__(self, "z_A", float(self.z_A))
        if not self.z_A > 0.0:
            raise ValueError("atom must sit above the top interface, z_A > 0")
        gaps = self.omega_matrix[~np.eye(n, dtype=bool)]
        if n > 1:
            if np.any(np.abs(gaps) <= 0.0):
                raise ValueError("degenerate levels are not supported")
            srt = np.sort(gaps)
            scale = np.abs(gaps).max()
            if np.any(np.diff(srt) <= 1e-12 * scale):
                raise ValueError("repeated transition frequencies are not "
                                 "supported (nondegenerate scheme required)")

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def energies(self):
        return np.array([en for _, en in self.levels])

    @property
    def omega_matrix(self):
        """omega_mn = (E_m - E_n) / hbar."""
        en = self.energies
        return (en[:, None] - en[None, :]) / hbar


@dataclass(frozen=True)
class RatesAndShifts:
    """Transition rates, totals, shifts, and complex transition frequencies."""

    gamma: np.ndarray           # gamma[n, k], 1/s
    gamma_total: np.ndarray     # gamma_total[n] = sum_k gamma[n, k]
    delta_omega: np.ndarray     # rad/s level shifts
    omega_shifted: np.ndarray   # omega_mn + delta_m - delta_n
    omega_complex: np.ndarray   # omega_shifted + i (Gamma_m + Gamma_n) / 2
    mode: str = "perturbative"
    converged: bool = True


@dataclass(frozen=True)
class Populations:
    """Level occupation probabilities, optionally with coherences."""

    populations: np.ndarray
    coherences: np.ndarray = None
    non_unique: bool = False

    def __post_init__(self):
        p = np.asarray(self.populations, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "populations", p)


def _contract(d_vec, tensor):
    """Real quadratic form d* . T . d for a Hermitian-symmetric tensor."""
    return float(np.real(np.conj(d_vec) @ tensor @ d_vec))


def loss_rates(atom, stack, tfield, omega_shifted=None, rel_tol=1e-8):
    """Transition-rate matrix Gamma[n, k] at the (shifted) frequencies.

    Downward transitions (omega_nk > 0) get the spontaneous-plus-stimulated
    resonant term; both directions get the noise-kernel term with the
    per-region photon numbers evaluated at the transition frequency.
    """
    n = atom.n_levels
    w = atom.omega_matrix if omega_shifted is None else omega_shifted
    gamma = np.zeros((n, n))
    for i in range(n):
        for k in range(n):
            if i == k:
                continue
            w_ik = w[i, k]
            d = atom.dipoles[i, k]
            if not np.any(d != 0.0):
                continue
            aw = abs(w_ik)
            term = 0.0
            if w_ik > 0.0:
                img = im_green_coincident(stack, atom.z_A, aw, rel_tol)
                term += (2.0 * mu_0 / hbar) * w_ik ** 2 * _contract(d, img)
            nker = thermal_kernel(stack, atom.z_A, aw, tfield,
                                  rel_tol=rel_tol)
            term += (2.0 * np.pi / hbar ** 2) * _contract(d, nker)
            gamma[i, k] = term
    return gamma


def _zero_point_shift(atom, stack, i, k, w_ik, rel_tol):
    """Contour-rotated zero-point shift of the (i, k) pair."""
    d = atom.dipoles[i, k]
    z_a = atom.z_A

    def f_imag(xi):
        out = np.empty_like(xi)
        for m, x in enumerate(xi):
            if x == 0.0:
                out[m] = 0.0
                continue
            g1 = scattering_green_coincident(stack, z_a, 1j * x, rel_tol)
            out[m] = -(mu_0 / hbar) * x * x * _contract(d, np.real(g1))
        return out / (w_ik ** 2 + xi ** 2)

    scale = min(abs(w_ik), C0 / (2.0 * z_a))
    res = quad.integrate_semi_infinite(f_imag, rel_tol=rel_tol, scale=scale,
                                       max_panels=8000)
    shift = (w_ik / np.pi) * res.value
    if w_ik > 0.0:
        g1 = scattering_green_coincident(stack, z_a, w_ik, rel_tol)
        shift -= (mu_0 / hbar) * w_ik ** 2 * _contract(d, np.real(g1))
    return shift


def _thermal_shift(atom, stack, tfield, i, k, w_ik, rel_tol):
    """Noise-kernel shift of the (i, k) pair, principal values on axis."""
    d = atom.dipoles[i, k]
    z_a = atom.z_A
    t_max = max(tfield.environment, max(tfield.layers, default=0.0))
    if t_max <= 0.0:
        return 0.0

    def q_n(w):
        out = np.empty_like(w)
        for m, x in enumerate(w):
            if x <= 0.0:
                out[m] = 0.0
                continue
            nker = thermal_kernel(stack, z_a, x, tfield, rel_tol=rel_tol)
            out[m] = _contract(d, nker) / hbar ** 2
        return out

    hints = tuple(stack.resonance_hints())
    scale = max(abs(w_ik), 3.0 * K_B * t_max / hbar)
    aw = abs(w_ik)
    if w_ik > 0.0:
        first = -quad.principal_value(q_n, aw, hints=hints, rel_tol=rel_tol,
                                      scale=scale, max_panels=8000).value
        second = quad.integrate_semi_infinite(
            lambda w: q_n(w) / (w_ik + w), hints=hints, rel_tol=rel_tol,
            scale=scale, max_panels=8000).value
    else:
        first = -quad.integrate_semi_infinite(
            lambda w: q_n(w) / (aw + w), hints=hints, rel_tol=rel_tol,
            scale=scale, max_panels=8000).value
        second = quad.principal_value(q_n, aw, hints=hints, rel_tol=rel_tol,
                                      scale=scale, max_panels=8000).value
    return first + second


def frequency_shifts(atom, stack, tfield, mode="perturbative", rel_tol=1e-8):
    """Level shifts delta_omega_n and shifted transition matrix.

    perturbative: bare frequencies inside all integrals (single pass).
    fixed_point: iterate the shifted frequencies back into the integrals
    until relative 1e-10 or 50 passes; non-convergence falls back to the
    perturbative result with converged=False.
    """
    if mode not in ("perturbative", "fixed_point"):
        raise ValueError(f"unknown shift mode {mode!r}")
    n = atom.n_levels
    bare = atom.omega_matrix

    def one_pass(w_matrix):
        delta = np.zeros(n)
        for i in range(n):
            for k in range(n):
                if i == k or not np.any(atom.dipoles[i, k] != 0.0):
                    continue
                w_ik = w_matrix[i, k]
                delta[i] += _zero_point_shift(atom, stack, i, k, w_ik,
                                              rel_tol)
                delta[i] += _thermal_shift(atom, stack, tfield, i, k, w_ik,
                                           rel_tol)
        return delta

    delta = one_pass(bare)
    converged = True
    if mode == "fixed_point":
        converged = False
        prev = delta
        for _ in range(50):
            w_try = bare + prev[:, None] - prev[None, :]
            delta = one_pass(w_try)
            scale = np.abs(delta).max()
            if scale == 0.0 or np.abs(delta - prev).max() <= 1e-10 * scale:
                converged = True
                break
            prev = delta
        if not converged:
            delta = one_pass(bare)
    shifted = bare + delta[:, None] - delta[None, :]
    return delta, shifted, converged


def rates_and_shifts(atom, stack, tfield, mode="perturbative", rel_tol=1e-8):
    """Shifts first, then rates at the shifted frequencies; bundles Omega."""
    delta, shifted, converged = frequency_shifts(atom, stack, tfield, mode,
                                                 rel_tol)
    gamma = loss_rates(atom, stack, tfield, omega_shifted=shifted,
                       rel_tol=rel_tol)
    gtot = gamma.sum(axis=1)
    omega_c = shifted + 0.5j * (gtot[:, None] + gtot[None, :])
    return RatesAndShifts(gamma=gamma, gamma_total=gtot, delta_omega=delta,
                          omega_shifted=shifted, omega_complex=omega_c,
                          mode=mode, converged=converged)


def _rate_generator(rates):
    """M[n, k] = Gamma_kn - delta_nk Gamma_n, columns summing to zero."""
    g = rates.gamma
    return g.T - np.diag(rates.gamma_total)


def evolve_populations(rates, sigma0, t):
    """Populations at time t from the rate-equation generator."""
    p0 = np.asarray(getattr(sigma0, "populations", sigma0), dtype=float)
    if abs(p0.sum() - 1.0) > 1e-9:
        raise ValueError("initial populations must sum to 1")
    m = _rate_generator(rates)
    p_t = expm(m * float(t)) @ p0
    return Populations(populations=p_t)


def coherence_evolution(rates, sigma0, t):
    """Full density matrix at time t.

    Off-diagonal elements decay in closed form with the complex transition
    frequencies; the diagonal follows the population rate equations.
    """
    s0 = np.asarray(sigma0, dtype=complex)
    gtot = rates.gamma_total
    rate = -1j * rates.omega_shifted \
        - 0.5 * (gtot[:, None] + gtot[None, :])
    out = s0 * np.exp(rate * float(t))
    pops = evolve_populations(rates, np.real(np.diag(s0)), t)
    np.fill_diagonal(out, pops.populations)
    return out


def steady_state(rates):
    """Long-time populations: the normalised null vector of the generator.

    A reducible rate matrix (isolated manifolds, e.g. at T = 0) makes the
    limit depend on the start; in that case the uniform-start limit is
    returned and non_unique is set.
    """
    m = _rate_generator(rates)
    n = m.shape[0]
    scale = np.abs(m).max()
    if scale == 0.0:
        return Populations(populations=np.full(n, 1.0 / n), non_unique=n > 1)
    vals, vecs = np.linalg.eig(m)
    null = np.abs(vals) <= 1e-12 * scale
    if not np.any(null):
        null = np.abs(vals) == np.abs(vals).min()
    coef = np.linalg.solve(vecs, np.full(n, 1.0 / n, dtype=complex))
    p = np.real(vecs[:, null] @ coef[null])
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    return Populations(populations=p, non_unique=int(null.sum()) > 1)
