"""Rates, shifts, and population dynamics against closed-form references."""

import numpy as np
import pytest
from scipy.constants import c as C0, epsilon_0, hbar, k as K_B

from cpforce.atomdyn import (AtomSpec, RatesAndShifts, coherence_evolution,
                             evolve_populations, frequency_shifts, loss_rates,
                             rates_and_shifts, steady_state)
from cpforce.greenfunc import LayerStack
from cpforce.materials import MaterialModel
from cpforce.thermalenv import TemperatureField, photon_number

OMEGA0 = 2.4e15


def free_space_rate(omega, d_vec):
    d2 = float(np.sum(np.abs(d_vec) ** 2))
    return omega ** 3 * d2 / (3.0 * np.pi * epsilon_0 * hbar * C0 ** 3)


def two_level(omega, d_vec, z_a):
    d = np.zeros((2, 2, 3), dtype=complex)
    d[1, 0] = d_vec
    d[0, 1] = np.conj(d_vec)
    return AtomSpec(levels=(("g", 0.0), ("e", hbar * omega)),
                    dipoles=d, z_A=z_a)


def bare_bundle(atom, gamma):
    """RatesAndShifts at the bare frequencies (zero shifts)."""
    gtot = gamma.sum(axis=1)
    w = atom.omega_matrix
    return RatesAndShifts(gamma=gamma, gamma_total=gtot,
                          delta_omega=np.zeros(atom.n_levels),
                          omega_shifted=w,
                          omega_complex=w + 0.5j * (gtot[:, None]
                                                    + gtot[None, :]))


def metal():
    return MaterialModel.drude_lorentz(((1.4e16, 0.0, 8.0e13),))


def mirror():
    # near-perfect reflector: plasma frequency far above every scale probed
    return MaterialModel.drude_lorentz(((300.0 * OMEGA0, 0.0, 1e-3 * OMEGA0),))


def test_atom_spec_rejects_bad_input():
    d = np.zeros((2, 2, 3), dtype=complex)
    d[1, 0] = (1e-29, 0, 0)
    d[0, 1] = (1e-29, 0, 0)  # fine, real
    AtomSpec(levels=(("g", 0.0), ("e", hbar * OMEGA0)), dipoles=d, z_A=1e-6)
    with pytest.raises(ValueError):
        AtomSpec(levels=(("g", 0.0), ("e", hbar * OMEGA0)), dipoles=d,
                 z_A=0.0)
    bad = d.copy()
    bad[0, 1] = (2e-29, 0, 0)
    with pytest.raises(ValueError):
        AtomSpec(levels=(("g", 0.0), ("e", hbar * OMEGA0)), dipoles=bad,
                 z_A=1e-6)
    with pytest.raises(ValueError):
        AtomSpec(levels=(("g", 0.0), ("e", 0.0)), dipoles=d, z_A=1e-6)
    d3 = np.zeros((3, 3, 3), dtype=complex)
    d3[1, 0] = d3[0, 1] = (1e-29, 0, 0)
    with pytest.raises(ValueError):
        # equally spaced ladder repeats the gap
        AtomSpec(levels=(("a", 0.0), ("b", hbar * OMEGA0),
                         ("c", 2 * hbar * OMEGA0)), dipoles=d3, z_A=1e-6)


def test_free_space_decay_rate():
    d_vec = np.array([0.4e-29, 0.0, 0.9e-29])
    atom = two_level(OMEGA0, d_vec, 1e-3)
    stack = LayerStack.vacuum()
    tf = TemperatureField.uniform(0.0, 1)
    gamma = loss_rates(atom, stack, tf)
    ref = free_space_rate(OMEGA0, d_vec)
    assert gamma[1, 0] == pytest.approx(ref, rel=1e-6)
    assert gamma[0, 1] == 0.0
    assert gamma[0, 0] == gamma[1, 1] == 0.0


def test_uniform_thermal_rates_scale_by_photon_number():
    omega = 1.0e14
    d_vec = np.array([0.6e-29, 0.2e-29, 0.3e-29])
    atom = two_level(omega, d_vec, 1e-3)
    stack = LayerStack.vacuum()
    tf = TemperatureField.uniform(300.0, 1)
    gamma = loss_rates(atom, stack, tf)
    nbar = photon_number(300.0, omega)
    ref = free_space_rate(omega, d_vec)
    assert gamma[1, 0] == pytest.approx(ref * (nbar + 1.0), rel=1e-9)
    assert gamma[0, 1] == pytest.approx(ref * nbar, rel=1e-9)


def test_detailed_balance_over_absorbing_half_space():
    omega = 1.4e14
    temp = 600.0
    d_vec = np.array([0.5e-29, 0.0, 0.8e-29 + 0.2e-29j])
    atom = two_level(omega, d_vec, 80e-9)
    stack = LayerStack.half_space(metal())
    tf = TemperatureField.uniform(temp, 1)
    gamma = loss_rates(atom, stack, tf)
    ratio = gamma[0, 1] / gamma[1, 0]
    assert ratio == pytest.approx(np.exp(-hbar * omega / (K_B * temp)),
                                  rel=1e-10)


def test_three_level_boltzmann_steady_state():
    w1, w2 = 1.0e14, 1.7e14
    temp = 1200.0
    d = np.zeros((3, 3, 3), dtype=complex)
    d[1, 0] = d[0, 1] = (0.7e-29, 0, 0)
    d[2, 1] = d[1, 2] = (0, 0.5e-29, 0)
    d[2, 0] = d[0, 2] = (0, 0, 0.4e-29)
    atom = AtomSpec(levels=(("0", 0.0), ("1", hbar * w1),
                            ("2", hbar * (w1 + w2))), dipoles=d, z_A=50e-9)
    stack = LayerStack.half_space(metal())
    tf = TemperatureField.uniform(temp, 1)
    gamma = loss_rates(atom, stack, tf)
    st = steady_state(bare_bundle(atom, gamma))
    boltz = np.exp(-atom.energies / (K_B * temp))
    boltz /= boltz.sum()
    assert not st.non_unique
    assert 0.5 * np.abs(st.populations - boltz).sum() < 1e-12


def test_empty_space_has_zero_shift():
    atom = two_level(OMEGA0, np.array([1e-29, 0, 0]), 1e-6)
    stack = LayerStack.vacuum()
    tf = TemperatureField.uniform(0.0, 1)
    delta, shifted, converged = frequency_shifts(atom, stack, tf)
    assert np.all(delta == 0.0)
    assert converged
    assert np.allclose(shifted, atom.omega_matrix)


def test_image_dipole_shift_near_mirror():
    # electrostatic image limit: both levels drop by (d_par^2 + 2 d_z^2)
    # / (64 pi eps0 hbar z^3) when the gap wavelength dwarfs the height
    d_vec = np.array([0.5e-29, 0.3e-29j, 0.8e-29])
    z_a = 1e-3 * C0 / OMEGA0
    atom = two_level(OMEGA0, d_vec, z_a)
    stack = LayerStack.half_space(mirror())
    tf = TemperatureField.uniform(0.0, 1)
    delta, _, _ = frequency_shifts(atom, stack, tf, rel_tol=1e-7)
    d_par2 = abs(d_vec[0]) ** 2 + abs(d_vec[1]) ** 2
    d_z2 = abs(d_vec[2]) ** 2
    ref = -(d_par2 + 2.0 * d_z2) / (64.0 * np.pi * epsilon_0 * hbar * z_a ** 3)
    assert delta[0] == pytest.approx(ref, rel=3e-2)
    assert delta[1] == pytest.approx(ref, rel=3e-2)


def test_shift_decays_with_distance():
    atom_d = np.array([0.0, 0.0, 1e-29])
    stack = LayerStack.half_space(mirror())
    tf = TemperatureField.uniform(0.0, 1)
    mags = []
    for z_fac in (0.5, 1.0, 2.0):
        atom = two_level(OMEGA0, atom_d, z_fac * C0 / OMEGA0)
        delta, _, _ = frequency_shifts(atom, stack, tf, rel_tol=1e-6)
        mags.append(abs(delta[0]))
    assert mags[0] > mags[1] > mags[2] > 0.0


def test_population_decay_matches_exponential():
    d_vec = np.array([0.0, 0.0, 1e-29])
    atom = two_level(OMEGA0, d_vec, 1e-3)
    stack = LayerStack.vacuum()
    tf = TemperatureField.uniform(0.0, 1)
    rts = rates_and_shifts(atom, stack, tf)
    g0 = free_space_rate(OMEGA0, d_vec)
    p0 = np.array([0.3, 0.7])
    t = 1.7 / g0
    pops = evolve_populations(rts, p0, t)
    ref = 0.7 * np.exp(-rts.gamma_total[1] * t)
    assert rts.gamma_total[1] == pytest.approx(g0, rel=1e-6)
    assert pops.populations[1] == pytest.approx(ref, rel=1e-10)
    assert pops.populations.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(pops.populations >= -1e-14)
    same = evolve_populations(rts, p0, 0.0)
    assert np.allclose(same.populations, p0, atol=1e-14)


def test_coherence_decay_closed_form():
    d_vec = np.array([0.0, 0.0, 1e-29])
    atom = two_level(OMEGA0, d_vec, 1e-3)
    rts = bare_bundle(atom, loss_rates(atom, LayerStack.vacuum(),
                                       TemperatureField.uniform(0.0, 1)))
    s0 = np.array([[0.4, 0.2 + 0.1j], [0.2 - 0.1j, 0.6]])
    g0 = rts.gamma_total[1]
    t = 0.8 / g0
    sig = coherence_evolution(rts, s0, t)
    ref = s0[0, 1] * np.exp((-1j * rts.omega_shifted[0, 1] - 0.5 * g0) * t)
    assert sig[0, 1] == pytest.approx(ref, rel=1e-12)
    assert sig[1, 0] == pytest.approx(np.conj(ref), rel=1e-12)
    assert sig[0, 0] + sig[1, 1] == pytest.approx(1.0, abs=1e-12)
    # coherence magnitude stays within the population bound
    assert abs(sig[0, 1]) ** 2 <= sig[0, 0].real * sig[1, 1].real + 1e-15


def test_two_level_thermal_steady_state():
    omega = 1.0e14
    atom = two_level(omega, np.array([1e-29, 0, 0]), 1e-3)
    tf = TemperatureField.uniform(350.0, 1)
    gamma = loss_rates(atom, LayerStack.vacuum(), tf)
    st = steady_state(bare_bundle(atom, gamma))
    nbar = photon_number(350.0, omega)
    ref = np.array([nbar + 1.0, nbar]) / (2.0 * nbar + 1.0)
    assert np.allclose(st.populations, ref, rtol=1e-12)
    assert not st.non_unique


def test_steady_state_absorbing_and_reducible():
    # T = 0 ladder decays to the ground state
    d = np.zeros((3, 3, 3), dtype=complex)
    d[1, 0] = d[0, 1] = (1e-29, 0, 0)
    d[2, 1] = d[1, 2] = (0, 1e-29, 0)
    atom = AtomSpec(levels=(("0", 0.0), ("1", hbar * 1.0e14),
                            ("2", hbar * 2.7e14)), dipoles=d, z_A=1e-3)
    gamma = loss_rates(atom, LayerStack.vacuum(),
                       TemperatureField.uniform(0.0, 1))
    st = steady_state(bare_bundle(atom, gamma))
    assert st.populations == pytest.approx([1.0, 0.0, 0.0], abs=1e-12)
    assert not st.non_unique

    # two manifolds with no connecting dipole: limit depends on the start
    d4 = np.zeros((4, 4, 3), dtype=complex)
    d4[1, 0] = d4[0, 1] = (1e-29, 0, 0)
    d4[3, 2] = d4[2, 3] = (0, 1e-29, 0)
    atom4 = AtomSpec(levels=(("a", 0.0), ("b", hbar * 1.0e14),
                             ("c", hbar * 0.33e14), ("d", hbar * 1.75e14)),
                     dipoles=d4, z_A=1e-3)
    gamma4 = loss_rates(atom4, LayerStack.vacuum(),
                        TemperatureField.uniform(0.0, 1))
    st4 = steady_state(bare_bundle(atom4, gamma4))
    assert st4.non_unique
    assert st4.populations == pytest.approx([0.5, 0.0, 0.5, 0.0], abs=1e-12)
    assert st4.populations.sum() == pytest.approx(1.0, abs=1e-12)


def test_probability_conservation_on_a_grid():
    w1, w2 = 1.1e14, 1.9e14
    d = np.zeros((3, 3, 3), dtype=complex)
    d[1, 0] = d[0, 1] = (0.8e-29, 0, 0)
    d[2, 1] = d[1, 2] = (0, 0.6e-29, 0)
    d[2, 0] = d[0, 2] = (0, 0, 0.5e-29)
    atom = AtomSpec(levels=(("0", 0.0), ("1", hbar * w1),
                            ("2", hbar * (w1 + w2))), dipoles=d, z_A=1e-3)
    gamma = loss_rates(atom, LayerStack.vacuum(),
                       TemperatureField.uniform(500.0, 1))
    rts = bare_bundle(atom, gamma)
    g_scale = rts.gamma_total.max()
    rng = np.random.default_rng(7)
    starts = [np.array([1.0, 0, 0]), np.array([0, 0, 1.0]),
              rng.dirichlet(np.ones(3))]
    for p0 in starts:
        for t in np.linspace(0.0, 8.0 / g_scale, 12):
            pops = evolve_populations(rts, p0, t)
            assert pops.populations.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(pops.populations >= -1e-14)


def test_fixed_point_shift_mode():
    d_vec = np.array([0.0, 0.0, 0.4e-29])
    atom = two_level(OMEGA0, d_vec, 0.05 * C0 / OMEGA0)
    stack = LayerStack.half_space(mirror())
    tf = TemperatureField.uniform(0.0, 1)
    d_pert, _, conv_p = frequency_shifts(atom, stack, tf, rel_tol=1e-6)
    d_fix, _, conv_f = frequency_shifts(atom, stack, tf, mode="fixed_point",
                                        rel_tol=1e-6)
    assert conv_p and conv_f
    # weak coupling: self-consistency is a tiny correction
    assert d_fix[0] == pytest.approx(d_pert[0], rel=1e-3)
    assert d_fix[1] == pytest.approx(d_pert[1], rel=1e-3)
    with pytest.raises(ValueError):
        frequency_shifts(atom, stack, tf, mode="bogus")
