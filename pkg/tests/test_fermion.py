import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from ikzm import fermion as fm
from ikzm.model import ChainSpec, QuenchProtocol

REFERENCE_CHAIN = ChainSpec.from_end_ratio(50, 2, 0.2, J0=5.0)


def pairing_state(L, zz_sign=None, x_polarised=False):
    """Gaussian state from a Majorana pairing pattern.

    ``x_polarised`` pairs a_n with b_n (<sx> = 1). Otherwise b_n pairs with
    a_{n+1} with <sz sz> = zz_sign and the edge Majoranas a_0, b_{L-1} pair up.
    """
    M = np.zeros((2 * L, 2 * L))
    if x_polarised:
        for n in range(L):
            M[2 * n, 2 * n + 1] = 1.0
    else:
        for n in range(L - 1):
            M[2 * n + 1, 2 * n + 2] = zz_sign
        M[0, 2 * L - 1] = 1.0
    M = M - M.T
    return fm.FermionState.from_majorana(M)


def random_pure_state(L, rng):
    O = ortho_group.rvs(2 * L, random_state=rng)
    block = np.kron(np.eye(L), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    return fm.FermionState.from_majorana(O @ block @ O.T)


# -- quadratic form -------------------------------------------------------------


def test_two_site_energy():
    H = fm.build_quadratic(ChainSpec(2), 1.0)
    assert H.ground_energy() == pytest.approx(-math.sqrt(5), abs=1e-12)
    assert fm.energy(fm.ground_state(H), H) == pytest.approx(-math.sqrt(5), abs=1e-12)


def test_matrix_structure():
    H = fm.build_quadratic(REFERENCE_CHAIN, 3.0)
    np.testing.assert_allclose(H.A, H.A.T)
    np.testing.assert_allclose(H.B, -H.B.T)
    assert np.count_nonzero(np.triu(H.A, 2)) == 0 and np.count_nonzero(np.triu(H.B, 2)) == 0


@pytest.mark.parametrize("L,h", [(4, 0.7), (6, 2.5), (7, 1.0)])
def test_many_body_spectrum(dense_chain, L, h):
    spec = ChainSpec(L, 2, 0.5 / (L / 2) ** 2, 1.5)
    H = fm.build_quadratic(spec, h)
    eps = H.single_particle_energies()
    # every many-body level is E0 plus a subset of quasiparticle energies
    subsets = np.array([[(k >> j) & 1 for j in range(L)] for k in range(2**L)])
    levels = np.sort(H.ground_energy() + subsets @ eps)
    exact = np.linalg.eigvalsh(dense_chain(spec).hamiltonian(h))
    np.testing.assert_allclose(levels, exact, atol=1e-10)


def test_paramagnetic_limit():
    spec = ChainSpec(20)
    h = 1e4
    assert fm.build_quadratic(spec, h).ground_energy() / spec.L == pytest.approx(-h, rel=1e-6)
    gs = fm.ground_state(fm.build_quadratic(spec, h))
    # <sz sz> ~ J / 2h per bond
    assert fm.kink_density(gs) == pytest.approx(19 / 40, abs=1e-4)


def test_degenerate_ferromagnet_flagged():
    with pytest.raises(fm.DegenerateGroundState):
        fm.ground_state(fm.build_quadratic(ChainSpec(10), 0.0))


def test_ground_state_is_valid():
    gs = fm.ground_state(fm.build_quadratic(REFERENCE_CHAIN, 10 * REFERENCE_CHAIN.J0))
    gs.check()
    assert np.all(fm.transverse_magnetization(gs) > 0.99)


# -- trivial states ---------------------------------------------------------------


@pytest.mark.parametrize("L", [2, 5, 50])
def test_trivial_densities(L):
    assert fm.kink_density(pairing_state(L, zz_sign=1.0)) == pytest.approx(0.0, abs=1e-15)
    assert fm.kink_density(pairing_state(L, zz_sign=-1.0)) == pytest.approx((L - 1) / L, abs=1e-15)
    assert fm.kink_density(pairing_state(L, x_polarised=True)) == pytest.approx((L - 1) / (2 * L), abs=1e-15)


def test_fifty_site_values():
    assert fm.kink_density(pairing_state(50, zz_sign=-1.0)) == pytest.approx(0.98)
    assert fm.kink_density(pairing_state(50, x_polarised=True)) == pytest.approx(0.49)


def test_state_conversions_round_trip():
    rng = np.random.default_rng(3)
    st_ = random_pure_state(6, rng)
    st_.check()
    np.testing.assert_allclose(fm.FermionState(st_.G, st_.F).majorana(), fm.FermionState.from_majorana(st_.majorana()).majorana(), atol=1e-13)


# -- dynamics -------------------------------------------------------------------


@pytest.mark.parametrize("L,q,tau", [(4, 2, 1.0), (6, 2, 2.0), (8, 4, 1.5), (8, 2, 0.3)])
def test_matches_dense_integration(dense_chain, L, q, tau):
    spec = ChainSpec.from_end_ratio(L, q, 0.2, J0=2.0)
    prot = QuenchProtocol(tau, 0.01)
    samples = np.linspace(-tau, tau, 5)
    traj = fm.run_quench(spec, prot, samples)
    np.testing.assert_allclose(traj.kink_density, dense_chain(spec).quench(tau, 0.01, samples), atol=1e-6)


def test_purity_over_full_quench():
    traj = fm.run_quench(REFERENCE_CHAIN, QuenchProtocol(20.0))
    assert traj.purity_drift < 1e-6


def test_purity_guard_raises():
    M0 = fm.initial_state(ChainSpec(6), QuenchProtocol(1.0)).majorana()
    with pytest.raises(fm.PurityDriftError):
        # a non-pure start violates idempotency from the first sample
        fm.propagate(0.5 * M0, ChainSpec(6), lambda t: 1.0, 0.0, 1.0, 0.1)


def test_frozen_field_conserves_energy_and_stationary_density():
    spec = ChainSpec.from_end_ratio(30, 2, 0.2, J0=5.0)
    H = fm.build_quadratic(spec, 4.0)
    # eigenstate: density constant
    traj = fm.evolve_frozen(fm.ground_state(H), spec, 4.0, 10.0, 0.01)
    assert np.ptp(traj.kink_density) < 1e-10
    # non-eigenstate: energy conserved
    start = fm.ground_state(fm.build_quadratic(spec, 9.0))
    traj = fm.evolve_frozen(start, spec, 4.0, 10.0, 0.01)
    energies = [fm.energy(s, H) for s in traj.states]
    assert np.ptp(energies) / abs(energies[0]) < 1e-8


def test_mirror_symmetric_kinks():
    spec = ChainSpec.from_end_ratio(24, 2, 0.2, J0=5.0)
    prot = QuenchProtocol(3.0)
    traj = fm.evolve(fm.initial_state(spec, prot), spec, prot, [prot.t_end], keep_states=True)
    prof = fm.kink_profile(traj.states[-1])
    np.testing.assert_allclose(prof, prof[::-1], atol=1e-8)


def test_adiabatic_limit_below_asymptote():
    spec = ChainSpec(30)
    tau = 60.0
    d = fm.run_quench(spec, QuenchProtocol(tau)).kink_density[-1]
    assert d < math.sqrt(1 / (2 * tau)) / (2 * math.pi)


def test_time_step_self_convergence():
    # reference parameters at the default step
    spec = ChainSpec(50)
    d1 = fm.run_quench(spec, QuenchProtocol(10.0, 0.01)).kink_density[-1]
    d2 = fm.run_quench(spec, QuenchProtocol(10.0, 0.005)).kink_density[-1]
    assert abs(d1 - d2) < 1e-8


def test_time_step_second_order():
    spec = ChainSpec(20)
    d = [fm.run_quench(spec, QuenchProtocol(5.0, dt), [5.0]).kink_density[-1] for dt in (0.04, 0.02, 0.01)]
    assert (d[0] - d[1]) / (d[1] - d[2]) == pytest.approx(4.0, abs=0.5)


def test_samples_outside_window_rejected():
    M0 = fm.initial_state(ChainSpec(4), QuenchProtocol(1.0)).majorana()
    with pytest.raises(ValueError):
        fm.propagate(M0, ChainSpec(4), lambda t: 1.0, 0.0, 1.0, 0.1, sample_times=[0.5, 2.0])


def test_run_is_deterministic():
    a = fm.run_quench(REFERENCE_CHAIN, QuenchProtocol(1.0)).kink_density
    b = fm.run_quench(REFERENCE_CHAIN, QuenchProtocol(1.0)).kink_density
    assert a.tobytes() == b.tobytes()


# -- properties -----------------------------------------------------------------


def test_density_bounds_on_random_states():
    rng = np.random.default_rng(20240601)
    for _ in range(1000):
        L = int(rng.integers(2, 13))
        d = fm.kink_density(random_pure_state(L, rng))
        assert -1e-12 <= d <= (L - 1) / L + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31))
def test_random_states_are_gaussian_and_pure(L, seed):
    s = random_pure_state(L, np.random.default_rng(seed))
    s.check()
    assert s.purity_defect() < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.floats(1.2, 8.0), st.floats(0.1, 1.0), st.floats(0.05, 20.0))
def test_ground_state_energy_matches_expectation(L, q, ratio, h):
    spec = ChainSpec.from_end_ratio(L, q, ratio, 2.0)
    H = fm.build_quadratic(spec, h)
    try:
        gs = fm.ground_state(H)
    except fm.DegenerateGroundState:
        return
    assert fm.energy(gs, H) == pytest.approx(H.ground_energy(), rel=1e-10, abs=1e-10)
