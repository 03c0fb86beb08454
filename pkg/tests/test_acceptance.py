"""Acceptance gate: one end-to-end check per shipped guarantee.

Nine checks, each printing a single PASS/FAIL line.  Oracles are
independent of the production path: closed-form rates and potentials,
a brute-force volume integral, finite differences, Boltzmann statistics
and byte-level comparison of repeated command-line runs.
"""

import functools
import textwrap

import numpy as np
import pytest
from scipy.constants import c as C0, epsilon_0, hbar, k as K_B

from cpforce import cli, quad
from cpforce.atomdyn import (AtomSpec, RatesAndShifts, evolve_populations,
                             rates_and_shifts, steady_state)
from cpforce.forcecore import (equilibrium_force_matsubara, force_component,
                               lifshitz_force, polarisability, total_force)
from cpforce.greenfunc import (Layer, LayerStack, scattering_green_coincident,
                               scattering_green_grad_z)
from cpforce.materials import MaterialModel
from cpforce.thermalenv import (TemperatureField, body_kernel,
                                environment_kernel, photon_number)

from brute_kernel import brute_body_kernel

OMEGA0 = 2.4e15
OMEGA_IR = 1.5e14
DIP = 1.0e-29

GRID_FLAT = np.geomspace(1e13, 1e17, 41)


def criterion(num, label):
    """One visible PASS/FAIL line per acceptance criterion."""
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"acceptance {num} FAIL  {label}")
                raise
            print(f"acceptance {num} PASS  {label}")
        return run
    return wrap


def two_level(omega, d_vec, z_a):
    dip = np.zeros((2, 2, 3), dtype=complex)
    dip[0, 1] = d_vec
    dip[1, 0] = np.conj(d_vec)
    return AtomSpec(levels=(("g", 0.0), ("e", hbar * omega)),
                    dipoles=dip, z_A=z_a)


def bare_bundle(atom, gamma_down=0.0):
    n = atom.n_levels
    gamma = np.zeros((n, n))
    if n == 2:
        gamma[1, 0] = gamma_down
    return RatesAndShifts(gamma=gamma, gamma_total=gamma.sum(axis=1),
                          delta_omega=np.zeros((n, n)),
                          omega_shifted=atom.omega_matrix,
                          omega_complex=atom.omega_matrix
                          + 0.5j * (gamma.sum(axis=1)[:, None]
                                    + gamma.sum(axis=1)[None, :]))


def metal():
    return MaterialModel.drude_lorentz(((1.4e16, 0.0, 8.0e13),))


def mirror():
    return MaterialModel.drude_lorentz(((300.0 * OMEGA0, 0.0, 1e-3 * OMEGA0),))


def glass():
    return MaterialModel.drude_lorentz(((1.1e16, 2.0e16, 1.0e14),))


def absorber():
    eps = np.full(GRID_FLAT.shape, 3.0 + 2.0j, dtype=complex)
    return MaterialModel.tabulated(GRID_FLAT, eps)


STACK_METAL = LayerStack.half_space(metal())


@criterion(1, "free-space decay rates")
def test_free_space_decay():
    omega = 2.0e14
    atom = two_level(omega, np.array([DIP, 0.0, 0.0]), 50e-9)
    stack = LayerStack.vacuum()
    gamma0 = omega ** 3 * DIP ** 2 / (3 * np.pi * epsilon_0 * hbar * C0 ** 3)
    cold = rates_and_shifts(atom, stack, TemperatureField.uniform(0.0, 1))
    assert cold.gamma[1, 0] == pytest.approx(gamma0, rel=1e-6)
    assert cold.gamma[0, 1] == 0.0
    temp = 1600.0
    nbar = photon_number(temp, omega)
    warm = rates_and_shifts(atom, stack, TemperatureField.uniform(temp, 1))
    assert warm.gamma[1, 0] == pytest.approx(gamma0 * (nbar + 1.0), rel=1e-6)
    assert warm.gamma[0, 1] == pytest.approx(gamma0 * nbar, rel=1e-6)


@criterion(2, "detailed balance and thermal steady state")
def test_detailed_balance_and_thermalisation():
    temp = 900.0
    d = np.zeros((3, 3, 3), dtype=complex)
    d[1, 0] = d[0, 1] = (0.7e-29, 0.0, 0.0)
    d[2, 1] = d[1, 2] = (0.0, 0.5e-29, 0.0)
    d[2, 0] = d[0, 2] = (0.3e-29, 0.0, 0.4e-29)
    atom = AtomSpec(levels=(("0", 0.0), ("1", hbar * 1.0e14),
                            ("2", hbar * 2.7e14)), dipoles=d, z_A=100e-9)
    rts = rates_and_shifts(atom, STACK_METAL,
                           TemperatureField.uniform(temp, 1))
    for n in range(3):
        for k in range(n):
            ratio = rts.gamma[k, n] / rts.gamma[n, k]
            boltz = np.exp(-hbar * rts.omega_shifted[n, k] / (K_B * temp))
            assert ratio == pytest.approx(boltz, rel=1e-10)
    st = steady_state(rts)
    # shifts are per level, so the shifted gaps define consistent energies
    energies = hbar * rts.omega_shifted[:, 0]
    w = np.exp(-(energies - energies.min()) / (K_B * temp))
    w /= w.sum()
    assert not st.non_unique
    assert 0.5 * np.abs(st.populations - w).sum() <= 1e-10


@criterion(3, "absorption kernels saturate the sum rule")
def test_completeness_sum_rule():
    stack = LayerStack.half_space(absorber())
    for omega in np.linspace(0.6e15, 1.9e15, 5):
        # the brute oracle truncates its lateral grid and needs deeply
        # subwavelength heights to hold everything but a sub-percent tail
        for fac in (0.015, 0.025, 0.04):
            z_a = fac * C0 / omega
            got = np.diag(body_kernel(stack, z_a, omega, 1)).real
            ref = np.diag(brute_body_kernel(stack, z_a, omega, 1)).real
            assert got == pytest.approx(ref, rel=2e-2)
            k_env = environment_kernel(stack, z_a, omega)
            h = 0.5 * (k_env + k_env.conj().T)
            tr = np.trace(h).real
            assert np.linalg.eigvalsh(h).min() >= -1e-8 * tr


@criterion(4, "full-complex force equals the perturbative route")
def test_equilibrium_reduction():
    tfield = TemperatureField.uniform(600.0, 1)
    atom = two_level(OMEGA_IR, np.array([2e-29, 0.0, 0.8e-29]), 150e-9)
    rts = bare_bundle(atom, gamma_down=1e-5 * OMEGA_IR)
    for n in (0, 1):
        lv_p = force_component(atom, STACK_METAL, tfield, n, rts,
                               mode="perturbative", rel_tol=1e-6)
        lv_f = force_component(atom, STACK_METAL, tfield, n, rts,
                               mode="full_complex", rel_tol=1e-6)
        assert lv_f.F[2] != 0.0
        assert lv_f.F[2] == pytest.approx(lv_p.F[2], rel=1e-2)


@criterion(5, "steady-state force reduces to the Lifshitz result")
def test_lifshitz_limit():
    atom = two_level(OMEGA_IR, np.array([2e-29, 0.0, 0.8e-29]), 150e-9)
    for temp in (400.0, 1200.0):
        tfield = TemperatureField.uniform(temp, 1)
        rts = rates_and_shifts(atom, STACK_METAL, tfield, rel_tol=1e-6)
        st = steady_state(rts)
        res = total_force(atom, STACK_METAL, tfield, st.populations, rts,
                          mode="perturbative", rel_tol=1e-6)
        lif = lifshitz_force(atom, STACK_METAL, temp, rel_tol=1e-7)
        assert res.F[2] == pytest.approx(lif.F[2], rel=1e-2)


@criterion(6, "nonretarded and retarded ground-state asymptotics")
def test_known_asymptotics():
    stack = LayerStack.half_space(glass())
    lam = C0 / OMEGA0

    def f_ground(z_a):
        atom = two_level(OMEGA0, np.array([DIP, 0.0, 0.0]), z_a)
        return equilibrium_force_matsubara(atom, stack, 0.0, 0,
                                           rel_tol=1e-8)[2]

    slope_near = np.log(abs(f_ground(0.02 * lam) / f_ground(0.002 * lam))) \
        / np.log(10.0)
    assert slope_near == pytest.approx(-4.0, abs=0.2)
    slope_far = np.log(abs(f_ground(30.0 * lam) / f_ground(3.0 * lam))) \
        / np.log(10.0)
    assert slope_far == pytest.approx(-5.0, abs=0.2)
    # retarded perfect reflector: U = -3 hbar c alpha(0) / (32 pi^2 eps0 z^4)
    pec = LayerStack.half_space(mirror())
    z_a = 30.0 * lam
    atom = two_level(OMEGA0, np.array([DIP, 0.0, 0.0]), z_a)
    alpha_sc = np.trace(np.real(polarisability(atom, 0, 0.0))) / 3.0
    f_or = -4.0 * 3.0 * hbar * C0 * alpha_sc \
        / (32 * np.pi ** 2 * epsilon_0 * z_a ** 5)
    f_eq = equilibrium_force_matsubara(atom, pec, 0.0, 0, rel_tol=1e-7)
    assert f_eq[2] == pytest.approx(f_or, rel=3e-2)


@criterion(7, "analytic gradients match finite differences")
def test_gradient_correctness():
    stack = LayerStack((
        Layer(MaterialModel.drude_lorentz([(2e15, 1e15, 1e14)],
                                          [(1e15, 2e15, 2e14)]), 40e-9),
        Layer(MaterialModel.drude_lorentz([(1.4e16, 0.0, 5e13)]), None),
    ))
    for w in (9e14, 2.2e15, 1j * 8e14):
        for z_a in (40e-9, 150e-9):
            grad = scattering_green_grad_z(stack, z_a, w, rel_tol=1e-11)
            for i in range(3):
                fd = quad.fd_gradient(
                    lambda zz, ii=i: scattering_green_coincident(
                        stack, zz, w, rel_tol=1e-11)[ii, ii],
                    z_a, 1e-3 * z_a)
                assert abs(fd - grad[i, i]) <= 1e-6 * abs(grad[i, i])
    # region kernels: nabla_1 plus its adjoint is the height derivative
    ab = LayerStack.half_space(absorber())
    for w in (0.8e15, 1.6e15):
        for z_a in (0.1 * C0 / w, 0.4 * C0 / w):
            g1 = body_kernel(ab, z_a, w, 1, grad=True, rel_tol=1e-11)
            fd = quad.fd_gradient(
                lambda zz: body_kernel(ab, zz, w, 1, rel_tol=1e-11),
                z_a, 1e-3 * z_a)
            assert g1 + g1.conj().T == pytest.approx(fd, rel=1e-6)


@criterion(8, "population conservation and monotone force relaxation")
def test_dynamics_conservation():
    d = np.zeros((4, 4, 3), dtype=complex)
    d[1, 0] = d[0, 1] = (0.6e-29, 0.0, 0.0)
    d[2, 1] = d[1, 2] = (0.0, 0.5e-29, 0.0)
    d[3, 2] = d[2, 3] = (0.0, 0.0, 0.4e-29)
    d[2, 0] = d[0, 2] = (0.2e-29, 0.0, 0.3e-29)
    atom = AtomSpec(levels=(("0", 0.0), ("1", hbar * 0.9e14),
                            ("2", hbar * 2.2e14), ("3", hbar * 4.3e14)),
                    dipoles=d, z_A=120e-9)
    rts = rates_and_shifts(atom, STACK_METAL,
                           TemperatureField.uniform(700.0, 1), rel_tol=1e-6)
    t_end = 5.0 / rts.gamma_total[rts.gamma_total > 0.0].min()
    for t in np.linspace(0.0, t_end, 100):
        pops = evolve_populations(rts, np.array([0.0, 0.0, 0.0, 1.0]),
                                  t).populations
        assert abs(pops.sum() - 1.0) <= 1e-12
        assert pops.min() >= -1e-14
    # two-level force relaxes monotonically onto the Lifshitz value
    temp = 600.0
    tfield = TemperatureField.uniform(temp, 1)
    atom2 = two_level(OMEGA_IR, np.array([2e-29, 0.0, 0.8e-29]), 150e-9)
    rts2 = rates_and_shifts(atom2, STACK_METAL, tfield, rel_tol=1e-6)
    f_n = [force_component(atom2, STACK_METAL, tfield, n, rts2,
                           mode="perturbative", rel_tol=1e-6).F[2]
           for n in (0, 1)]
    lif = lifshitz_force(atom2, STACK_METAL, temp, rel_tol=1e-7)
    f_inf = steady_state(rts2).populations @ f_n
    t_grid = np.linspace(0.0, 8.0 / rts2.gamma_total[1], 40)
    gap = [abs(evolve_populations(rts2, np.array([0.0, 1.0]), t).populations
               @ f_n - f_inf) for t in t_grid]
    assert all(a >= b * (1.0 - 1e-9) for a, b in zip(gap, gap[1:]))
    assert gap[-1] <= 1e-3 * gap[0]
    assert f_inf == pytest.approx(lif.F[2], rel=1e-2)


@criterion(9, "repeated runs are byte-identical")
def test_cli_determinism(tmp_path):
    scenario = tmp_path / "scenario.toml"
    scenario.write_text(textwrap.dedent(f"""\
        [atom]
        energy_unit = "eV"
        z_A = 100.0
        z_A_unit = "nm"
        initial_populations = [1.0, 0.0]

        [[atom.levels]]
        label = "g"
        energy = 0.0

        [[atom.levels]]
        label = "e"
        energy = 1.56

        [[atom.dipoles]]
        from = "g"
        to = "e"
        re = [{DIP!r}, 0.0, 0.0]

        [[stack.layers]]
        model = "drude_lorentz"
        eps_oscillators = [[1.1e16, 2.0e16, 1.0e14]]

        [temperatures]
        environment = 0.0
        layers = [0.0]

        [numerics]
        rel_tol = 1e-8
        """))
    outs = [tmp_path / name for name in ("f1.csv", "f2.csv")]
    for out in outs:
        assert cli.run("force", str(scenario), str(out), fmt="csv") == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    outs = [tmp_path / name for name in ("r1.json", "r2.json")]
    for out in outs:
        assert cli.run("rates", str(scenario), str(out), fmt="json") == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
