"""Pure numpy fallback for the multilayer stack kernel.

Same contract as the compiled version in _stack.pyx; vectorised over the
kpar nodes of one quadrature panel.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stack_solve"]

BACKEND = "pure"


def _kz(eps, mu, k0sq, kpar2):
    """Vertical wavenumber, branch Im >= 0 with Re >= 0 on the cut."""
    kz = np.sqrt(eps * mu * k0sq - kpar2)
    flip = (kz.imag < 0.0) | ((kz.imag == 0.0) & (kz.real < 0.0))
    kz = np.where(flip, -kz, kz)
    # a kpar node within rounding of a light line cancels to kz = 0 exactly
    # and 0/0s the interface ratios; the true |kz| is below sqrt(ulp), so a
    # relative nudge off zero is inside the representation error
    tiny = 1e-30 * np.sqrt(np.abs(k0sq))
    return np.where(kz == 0.0, tiny * (1.0 + 1.0j), kz)


def stack_solve(eps, mu, thick, k0sq, kpar, want_amplitudes=False):
    """Reflection and per-layer mode amplitudes of a planar stack.

    Layer 0 is the upper half space, layers 1..L lie below the z = 0
    interface, layer L is semi-infinite.  Everything is evaluated at one
    (complex) squared vacuum wavenumber k0sq = omega^2/c^2 for an array of
    real kpar.

    Parameters
    ----------
    eps, mu : (L+1,) complex
        Relative permittivity/permeability per layer, layer 0 first.
    thick : (L+1,) float
        Layer thicknesses in m; entries 0 and L are ignored.
    k0sq : complex
    kpar : (M,) float
    want_amplitudes : bool
        Also return the downward/upward amplitudes per layer.

    Returns
    -------
    rs, rp : (M,) complex
        Stack reflection coefficients for s and p incidence from layer 0,
        referenced at z = 0.  Sign convention: single interface a|b gives
        r_s = (kz_a mu_b - kz_b mu_a) / (kz_a mu_b + kz_b mu_a) and
        r_p = (kz_a eps_b - kz_b eps_a) / (kz_a eps_b + kz_b eps_a).
    kz : (L+1, M) complex
    amps : None, or (a_s, b_s, a_p, b_p), each (L+1, M) complex.
        a = downgoing amplitude at the layer's top interface, b = upgoing
        amplitude at the layer's bottom interface, normalised to unit
        downgoing amplitude at z = 0 (row 0 holds (1, r)).  s amplitudes
        multiply the unit s polarisation vector; p amplitudes multiply the
        unnormalised vector (kpar zhat -+ kz khat) (divide by k0 for unit
        incident field).
    """
    eps = np.asarray(eps, dtype=complex)
    mu = np.asarray(mu, dtype=complex)
    thick = np.asarray(thick, dtype=float)
    kpar = np.atleast_1d(np.asarray(kpar, dtype=float))
    nlay = eps.shape[0]
    m = kpar.shape[0]
    kpar2 = kpar * kpar

    kz = np.empty((nlay, m), dtype=complex)
    for l in range(nlay):
        kz[l] = _kz(eps[l], mu[l], k0sq, kpar2)

    # one-way phase across each interior layer; |phi| <= 1 keeps the
    # recursions stable for arbitrarily thick lossy layers
    phi = np.ones((nlay, m), dtype=complex)
    for l in range(1, nlay - 1):
        phi[l] = np.exp(1j * kz[l] * thick[l])

    # interface reflection seen from above, composed bottom-up;
    # ss[l], sp[l] sit at the interface between layers l and l+1
    rs_i = np.empty((nlay - 1, m), dtype=complex)
    rp_i = np.empty((nlay - 1, m), dtype=complex)
    ss = np.zeros((nlay - 1, m), dtype=complex)
    sp = np.zeros((nlay - 1, m), dtype=complex)
    run_s = np.zeros(m, dtype=complex)
    run_p = np.zeros(m, dtype=complex)
    for l in range(nlay - 2, -1, -1):
        a = kz[l] * mu[l + 1]
        b = kz[l + 1] * mu[l]
        rs_i[l] = (a - b) / (a + b)
        a = kz[l] * eps[l + 1]
        b = kz[l + 1] * eps[l]
        rp_i[l] = (a - b) / (a + b)
        if l == nlay - 2:
            run_s = rs_i[l].copy()
            run_p = rp_i[l].copy()
        else:
            ph2 = phi[l + 1] * phi[l + 1]
            ts = run_s * ph2
            tp = run_p * ph2
            run_s = (rs_i[l] + ts) / (1.0 + rs_i[l] * ts)
            run_p = (rp_i[l] + tp) / (1.0 + rp_i[l] * tp)
        ss[l] = run_s
        sp[l] = run_p

    if not want_amplitudes:
        return ss[0], sp[0], kz, None

    a_s = np.zeros((nlay, m), dtype=complex)
    b_s = np.zeros((nlay, m), dtype=complex)
    a_p = np.zeros((nlay, m), dtype=complex)
    b_p = np.zeros((nlay, m), dtype=complex)
    a_s[0] = 1.0
    a_p[0] = 1.0
    b_s[0] = ss[0]
    b_p[0] = sp[0]
    for l in range(nlay - 1):
        # sub-stack reflection below layer l+1, referenced at its bottom
        if l + 1 <= nlay - 2:
            s_lo_s, s_lo_p = ss[l + 1], sp[l + 1]
            ph2 = phi[l + 1] * phi[l + 1]
        else:
            s_lo_s = s_lo_p = np.zeros(m, dtype=complex)
            ph2 = np.zeros(m, dtype=complex)
        ts_int = 1.0 + rs_i[l]
        tp_int = (eps[l] / eps[l + 1]) * (1.0 + rp_i[l])
        down_s = a_s[l] * phi[l]
        down_p = a_p[l] * phi[l]
        a_s[l + 1] = ts_int * down_s / (1.0 + rs_i[l] * s_lo_s * ph2)
        a_p[l + 1] = tp_int * down_p / (1.0 + rp_i[l] * s_lo_p * ph2)
        b_s[l + 1] = s_lo_s * a_s[l + 1] * phi[l + 1]
        b_p[l + 1] = s_lo_p * a_p[l + 1] * phi[l + 1]

    return ss[0], sp[0], kz, (a_s, b_s, a_p, b_p)
