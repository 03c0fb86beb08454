"""Dispersive material models: vacuum, Drude-Lorentz oscillators, tables.

All models are passive (Im eps >= 0, Im mu >= 0 at positive real frequency)
and evaluable on the positive imaginary axis where they are real and >= 1.
Oscillator models additionally evaluate anywhere in the upper half-plane.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quad import ResonanceHint

__all__ = ["MaterialModel"]


def _osc_sum(osc, w):
    """Sum of wp^2 / (wt^2 - w^2 - i g w) over oscillators."""
    w = np.asarray(w, dtype=complex)
    out = np.zeros_like(w)
    for wp, wt, g in osc:
        out = out + wp * wp / (wt * wt - w * w - 1j * g * w)
    return out


def _osc_sum_imag(osc, xi):
    xi = np.asarray(xi, dtype=float)
    out = np.zeros_like(xi)
    for wp, wt, g in osc:
        out = out + wp * wp / (wt * wt + xi * xi + g * xi)
    return out


def _table_interp(grid, vals, w):
    """Linear interpolation in log omega, endpoints held outside the grid."""
    logw = np.log(np.maximum(np.asarray(w, dtype=float), grid[0] * 1e-12))
    lg = np.log(grid)
    re = np.interp(logw, lg, vals.real)
    im = np.interp(logw, lg, vals.imag)
    return re + 1j * im


def _table_imag_axis(grid, vals, xi):
    # Kramers-Kronig: 1 + (2/pi) int w Im(w) / (w^2 + xi^2) dw, with Im
    # ramped linearly to zero below the grid and dropped above it
    dense = np.geomspace(grid[0], grid[-1], 8 * grid.size)
    im_d = np.interp(np.log(dense), np.log(grid), vals.imag)
    xi = np.asarray(xi, dtype=float)
    xi_c = xi[..., None]
    integ = np.trapezoid(dense * im_d / (dense ** 2 + xi_c ** 2), dense, axis=-1)
    # ramp segment from (0, 0) to (w0, Im0): integrand ~ (Im0/w0) w^2/(w^2+xi^2)
    w0, im0 = grid[0], vals.imag[0]
    ramp = np.geomspace(w0 * 1e-6, w0, 64)
    integ = integ + np.trapezoid(
        (im0 / w0) * ramp ** 2 / (ramp ** 2 + xi_c ** 2), ramp, axis=-1)
    return 1.0 + (2.0 / np.pi) * integ


@dataclass(frozen=True)
class MaterialModel:
    """One homogeneous material: eps(omega) and mu(omega).

    Use the constructors `vacuum`, `drude_lorentz` or `tabulated`.
    Oscillators are (plasma frequency, resonance frequency, damping), all in
    rad/s; a Drude pole is a resonance frequency of zero.
    """

    kind: str
    eps_osc: tuple = ()
    mu_osc: tuple = ()
    table_grid: tuple = ()
    table_eps: tuple = ()
    table_mu: tuple = field(default=())

    @classmethod
    def vacuum(cls):
        return cls(kind="vacuum")

    @classmethod
    def drude_lorentz(cls, eps_oscillators, mu_oscillators=()):
        def check(osc):
            out = []
            for wp, wt, g in osc:
                if wp < 0.0 or wt < 0.0 or g < 0.0:
                    raise ValueError("oscillator parameters must be >= 0")
                out.append((float(wp), float(wt), float(g)))
            return tuple(out)

        return cls(kind="drude_lorentz", eps_osc=check(eps_oscillators),
                   mu_osc=check(mu_oscillators))

    @classmethod
    def tabulated(cls, omega, eps, mu=None):
        omega = np.asarray(omega, dtype=float)
        eps = np.asarray(eps, dtype=complex)
        if omega.ndim != 1 or omega.size < 2 or np.any(np.diff(omega) <= 0.0):
            raise ValueError("frequency grid must be strictly increasing")
        if omega[0] <= 0.0:
            raise ValueError("frequency grid must be positive")
        if eps.shape != omega.shape:
            raise ValueError("eps table shape mismatch")
        if np.any(eps.imag < 0.0):
            raise ValueError("passivity violated: Im eps < 0 in table")
        tm = ()
        if mu is not None:
            mu = np.asarray(mu, dtype=complex)
            if mu.shape != omega.shape:
                raise ValueError("mu table shape mismatch")
            if np.any(mu.imag < 0.0):
                raise ValueError("passivity violated: Im mu < 0 in table")
            tm = tuple(mu)
        return cls(kind="tabulated", table_grid=tuple(omega),
                   table_eps=tuple(eps), table_mu=tm)

    # -- evaluation ------------------------------------------------------

    def epsilon(self, omega):
        """eps at complex frequency (upper half-plane, imaginary axis incl.)."""
        if self.kind == "vacuum":
            return np.ones_like(np.asarray(omega, dtype=complex))
        if self.kind == "drude_lorentz":
            return 1.0 + _osc_sum(self.eps_osc, omega)
        w = np.asarray(omega, dtype=complex)
        if np.all(w.imag == 0.0):
            return _table_interp(np.asarray(self.table_grid),
                                 np.asarray(self.table_eps), w.real)
        if np.all(w.real == 0.0):
            return self.epsilon_imag_axis(w.imag).astype(complex)
        raise ValueError(
            "tabulated materials evaluate at real or imaginary frequency only")

    def mu(self, omega):
        if self.kind == "tabulated" and self.table_mu:
            w = np.asarray(omega, dtype=complex)
            if np.all(w.imag == 0.0):
                return _table_interp(np.asarray(self.table_grid),
                                     np.asarray(self.table_mu), w.real)
            if np.all(w.real == 0.0):
                return self.mu_imag_axis(w.imag).astype(complex)
            raise ValueError(
                "tabulated materials evaluate at real or imaginary frequency only")
        if self.kind == "drude_lorentz" and self.mu_osc:
            return 1.0 + _osc_sum(self.mu_osc, omega)
        return np.ones_like(np.asarray(omega, dtype=complex))

    def epsilon_imag_axis(self, xi):
        """eps(i xi), real and >= 1 for passive models."""
        if self.kind == "vacuum":
            return np.ones_like(np.asarray(xi, dtype=float))
        if self.kind == "drude_lorentz":
            return 1.0 + _osc_sum_imag(self.eps_osc, xi)
        return _table_imag_axis(np.asarray(self.table_grid),
                                np.asarray(self.table_eps), xi)

    def mu_imag_axis(self, xi):
        if self.kind == "tabulated" and self.table_mu:
            return _table_imag_axis(np.asarray(self.table_grid),
                                    np.asarray(self.table_mu), xi)
        if self.kind == "drude_lorentz" and self.mu_osc:
            return 1.0 + _osc_sum_imag(self.mu_osc, xi)
        return np.ones_like(np.asarray(xi, dtype=float))

    # -- structure hints for the frequency quadratures --------------------

    def resonance_hints(self):
        """Frequencies where the response varies rapidly, for quad hints.

        Each oscillator contributes its transverse resonance, the surface
        mode of the half-space geometry (eps = -1 crossing) and the
        longitudinal edge (eps = 0 crossing).
        """
        hints = []
        for osc in (self.eps_osc, self.mu_osc):
            for wp, wt, g in osc:
                centers = [np.sqrt(wt * wt + 0.5 * wp * wp),
                           np.sqrt(wt * wt + wp * wp)]
                if wt > 0.0:
                    centers.append(wt)
                for c in centers:
                    hints.append(ResonanceHint(c, max(0.5 * g, 1e-6 * c)))
        if self.kind == "tabulated":
            grid = np.asarray(self.table_grid)
            im = np.asarray(self.table_eps).imag
            if self.table_mu:
                im = im + np.asarray(self.table_mu).imag
            for i in range(1, grid.size - 1):
                if im[i] >= im[i - 1] and im[i] > im[i + 1] and \
                        im[i] > 0.1 * im.max():
                    width = 0.25 * (grid[min(i + 1, grid.size - 1)]
                                    - grid[max(i - 1, 0)])
                    hints.append(ResonanceHint(grid[i], width))
        return tuple(hints)
