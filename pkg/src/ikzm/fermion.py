"""
Exact free-fermion backend for the transverse-field Ising chain.

Jordan-Wigner convention (open boundaries)::

    sx_n = 1 - 2 c_n^dag c_n
    sz_n = prod_{m<n} (1 - 2 c_m^dag c_m) (c_n + c_n^dag)

so that sz_n sz_{n+1} = (c_n^dag - c_n)(c_{n+1}^dag + c_{n+1}) and the field term
is diagonal in fermion number. With Majorana operators a_n = c_n + c_n^dag and
b_n = i (c_n^dag - c_n), ordered as gamma = (a_0, b_0, a_1, b_1, ...), the chain is

    H = (i/4) gamma^T K gamma,   K tridiagonal antisymmetric,
    K[2n, 2n+1] = 2 h,   K[2n+1, 2n+2] = 2 J_n.

Heisenberg evolution is gamma(t) = R(t) gamma(0) with dR/dt = K(t) R, and the
Majorana covariance M_ab = -i <[gamma_a, gamma_b]>/2 evolves as R M R^T.
Useful identities: <sx_n> = M[2n, 2n+1] and <sz_n sz_{n+1}> = M[2n+1, 2n+2].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ChainSpec, QuenchProtocol, bond_couplings, field_at, site_coordinates

GAP_TOL = 1e-12
PURITY_RATE_TOL = 1e-6


class DegenerateGroundState(RuntimeError):
    """The BdG spectrum has a (near) zero mode; the ground state is not unique."""


class PurityDriftError(RuntimeError):
    """Step-size rejection: the evolved state drifted off the pure Gaussian manifold."""


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """H = sum A_ij c_i^dag c_j + (1/2) sum (B_ij c_i^dag c_j^dag + h.c.) + const.

    A is real symmetric, B real antisymmetric.
    """

    A: np.ndarray
    B: np.ndarray
    const: float = 0.0

    @property
    def L(self) -> int:
        return self.A.shape[0]

    def bdg(self) -> np.ndarray:
        """2L x 2L BdG matrix in the Nambu basis (c, c^dag): H = (1/2) psi^dag H_bdg psi."""
        A, B = self.A, self.B
        return np.block([[A, B], [-B.conj(), -A.conj()]])

    def majorana_generator(self) -> np.ndarray:
        """Real antisymmetric K with H = (i/4) gamma^T K gamma + (1/2) tr A + const."""
        A, B = np.real(self.A), np.real(self.B)
        L = self.L
        K = np.zeros((2 * L, 2 * L))
        # substituting c = (a + i b)/2 gives H = (1/2) tr A + (i/2) sum (A - B)_ij a_i b_j
        K[0::2, 1::2] = A - B
        K[1::2, 0::2] = -(A - B).T
        return K

    def offset(self) -> float:
        return 0.5 * float(np.trace(np.real(self.A))) + self.const

    def single_particle_energies(self) -> np.ndarray:
        w = np.linalg.eigvalsh(self.bdg())
        return np.sort(w[w.size // 2 :])

    def ground_energy(self) -> float:
        # H = (1/2) psi^dag H_bdg psi + (1/2) tr A + const
        return float(-0.5 * np.sum(self.single_particle_energies()) + self.offset())


def build_quadratic(spec: ChainSpec, h: float) -> QuadraticHamiltonian:
    """Jordan-Wigner image of the Ising chain at field ``h``.

    The constant -h L of the field term is kept in ``const`` so that the
    quadratic form equals the spin Hamiltonian exactly.
    """
    J = bond_couplings(spec)
    L = spec.L
    A = np.diag(np.full(L, 2.0 * h)) - np.diag(J, 1) - np.diag(J, -1)
    B = -np.diag(J, 1) + np.diag(J, -1)
    return QuadraticHamiltonian(A, B, const=-h * L)


def ising_generator_diagonals(spec: ChainSpec, h: float) -> np.ndarray:
    """Superdiagonal of the tridiagonal Majorana generator K (length 2L-1)."""
    L = spec.L
    k = np.empty(2 * L - 1)
    k[0::2] = 2.0 * h
    k[1::2] = 2.0 * bond_couplings(spec)
    return k


def _tridiag_matrix(k: np.ndarray) -> np.ndarray:
    return np.diag(k, 1) - np.diag(k, -1)


@dataclass
class FermionState:
    """Gaussian fermionic state through its normal and anomalous correlators.

    G_ij = <c_i^dag c_j>, F_ij = <c_i^dag c_j^dag>.
    """

    G: np.ndarray
    F: np.ndarray

    @property
    def L(self) -> int:
        return self.G.shape[0]

    @classmethod
    def from_majorana(cls, M: np.ndarray) -> "FermionState":
        Maa, Mab = M[0::2, 0::2], M[0::2, 1::2]
        Mba, Mbb = M[1::2, 0::2], M[1::2, 1::2]
        L = Maa.shape[0]
        G = 0.25 * (2.0 * np.eye(L) + 1j * (Maa + Mbb) - Mab + Mba)
        F = 0.25 * (1j * (Maa - Mbb) + Mab + Mba)
        return cls(G, F)

    def majorana(self) -> np.ndarray:
        """Real antisymmetric Majorana covariance M with <gamma_a gamma_b> = delta_ab + i M_ab."""
        L = self.L
        g = 4.0 * self.G - 2.0 * np.eye(L)
        f = 4.0 * self.F
        M = np.empty((2 * L, 2 * L))
        M[0::2, 0::2] = 0.5 * (g.imag + f.imag)
        M[1::2, 1::2] = 0.5 * (g.imag - f.imag)
        M[0::2, 1::2] = 0.5 * (f.real - g.real)
        M[1::2, 0::2] = 0.5 * (f.real + g.real)
        return M

    def covariance(self) -> np.ndarray:
        """Nambu covariance <psi psi^dag>, psi = (c, c^dag); a projector for pure states."""
        L = self.L
        return np.block([[np.eye(L) - self.G.T, -self.F.conj()], [self.F, self.G]])

    def purity_defect(self) -> float:
        Gam = self.covariance()
        return float(np.max(np.abs(Gam @ Gam - Gam)))

    def check(self, tol_sym: float = 1e-10, tol_occ: float = 1e-8, tol_pure: float = 1e-8) -> None:
        """Raise ``ValueError`` if any Gaussian-state invariant is violated."""
        if np.max(np.abs(self.G - self.G.conj().T)) > tol_sym:
            raise ValueError("G is not Hermitian")
        if np.max(np.abs(self.F + self.F.T)) > tol_sym:
            raise ValueError("F is not antisymmetric")
        occ = np.linalg.eigvalsh(0.5 * (self.G + self.G.conj().T))
        if occ.min() < -tol_occ or occ.max() > 1 + tol_occ:
            raise ValueError("occupations of G leave [0, 1]")
        if self.purity_defect() > tol_pure:
            raise ValueError("covariance is not a projector (state not pure)")


def majorana_ground_state(K: np.ndarray, gap_tol: float = GAP_TOL) -> np.ndarray:
    """Ground-state covariance M = -i sign(iK) of H = (i/4) gamma^T K gamma."""
    w, V = np.linalg.eigh(1j * K)
    if np.min(np.abs(w)) < gap_tol:
        raise DegenerateGroundState(f"BdG gap {np.min(np.abs(w)):.3g} below {gap_tol}")
    return np.real(-1j * (V * np.sign(w)) @ V.conj().T)


def ground_state(H: QuadraticHamiltonian, gap_tol: float = GAP_TOL) -> FermionState:
    """Lowest-energy Gaussian state of a real quadratic Hamiltonian."""
    return FermionState.from_majorana(majorana_ground_state(H.majorana_generator(), gap_tol))


def energy(state: FermionState, H: QuadraticHamiltonian) -> float:
    """<H> = (i/4) sum K_ab <gamma_a gamma_b> + offset = tr(K M)/4 + offset."""
    K = H.majorana_generator()
    M = state.majorana()
    return float(0.25 * np.sum(K.T * M) + H.offset())


def bond_correlators(M: np.ndarray) -> np.ndarray:
    """<sz_n sz_{n+1}> for every bond, from the Majorana covariance."""
    return np.diagonal(M, 1)[1::2].copy()


def kink_profile(state: FermionState) -> np.ndarray:
    """Per-bond kink expectation (1 - <sz_n sz_{n+1}>) / 2."""
    return 0.5 * (1.0 - bond_correlators(state.majorana()))


def kink_density_from_majorana(M: np.ndarray) -> float:
    L = M.shape[0] // 2
    return float(np.sum(1.0 - bond_correlators(M)) / (2.0 * L))


def kink_density(state: FermionState, spec: ChainSpec | None = None) -> float:
    """d = (1/2L) sum_bonds (1 - <sz_n sz_{n+1}>)."""
    if spec is not None and spec.L != state.L:
        raise ValueError(f"state has L={state.L}, spec has L={spec.L}")
    return kink_density_from_majorana(state.majorana())


def transverse_magnetization(state: FermionState) -> np.ndarray:
    """<sx_n> per site."""
    M = state.majorana()
    return np.diagonal(M, 1)[0::2].copy()


# --------------------------------------------------------------------------- propagation


def apply_tridiag_expm(k: np.ndarray, X: np.ndarray, tol: float = 1e-17, max_terms: int = 60) -> np.ndarray:
    """exp(K) @ X for the antisymmetric tridiagonal K with superdiagonal ``k``.

    Taylor series summed until terms fall below ``tol`` relative to X (machine
    precision for ||K|| of order one). ``k`` already includes the time step.
    """
    kc = k[:, None]
    out = X.copy()
    term = X
    scale = np.max(np.abs(X))
    for m in range(1, max_terms + 1):
        nxt = np.zeros_like(term)
        nxt[:-1] += kc * term[1:]
        nxt[1:] -= kc * term[:-1]
        term = nxt / m
        out += term
        if np.max(np.abs(term)) <= tol * scale:
            break
    else:
        raise RuntimeError("Taylor series did not converge; reduce dt")
    return out


def _substeps(norm: float, dt: float) -> int:
    # keep ||K dt|| <= 1 per Taylor application
    return max(1, int(np.ceil(norm * dt)))


@dataclass
class Trajectory:
    """Sampled evolution: times, kink densities and the states themselves (optional)."""

    times: np.ndarray
    kink_density: np.ndarray
    states: list
    purity_drift: float
    final_majorana: np.ndarray


def propagate(
    M0: np.ndarray,
    spec: ChainSpec,
    field: Callable[[float], float],
    t0: float,
    t1: float,
    dt: float,
    sample_times=None,
    keep_states: bool = False,
    purity_rate_tol: float = PURITY_RATE_TOL,
) -> Trajectory:
    """Evolve a Majorana covariance under H(t) with field h(t) = ``field(t)``.

    Each step freezes h at the step midpoint and applies exp(K dt) exactly.
    Steps are laid out on the uniform grid t0 + k dt; the last step is shortened
    to land on t1, and sample times split steps so samples are hit exactly.
    """
    if sample_times is None:
        sample_times = np.array([t1])
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) < 0) or sample_times[0] < t0 - 1e-12 or sample_times[-1] > t1 + 1e-12:
        raise ValueError("sample times must be sorted inside [t0, t1]")
    n_steps = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    grid = t0 + dt * np.arange(n_steps + 1)
    grid[-1] = t1
    # merge sample times into the step grid
    nodes = np.unique(np.concatenate([grid, np.clip(sample_times, t0, t1)]))
    dim = M0.shape[0]
    R = np.eye(dim)
    k_static = ising_generator_diagonals(spec, 0.0)
    field_mask = np.zeros(dim - 1, dtype=bool)
    field_mask[0::2] = True

    times, dens, states = [], [], []
    drift = 0.0
    si = 0
    t_prev = nodes[0]

    def record(t, R):
        nonlocal drift
        M = R @ M0 @ R.T
        d_pure = float(np.max(np.abs(M @ M + np.eye(dim))))
        drift = max(drift, d_pure)
        elapsed = max(t - t0, 1.0)
        if d_pure / elapsed > purity_rate_tol:
            raise PurityDriftError(f"purity drift {d_pure:.3g} at t={t:.6g}")
        times.append(t)
        dens.append(kink_density_from_majorana(M))
        if keep_states:
            states.append(FermionState.from_majorana(M))
        return M

    M = M0
    while si < sample_times.size and sample_times[si] <= t_prev + 1e-12:
        M = record(sample_times[si], R)
        si += 1
    for t_next in nodes[1:]:
        h = field(0.5 * (t_prev + t_next))
        k = k_static.copy()
        k[field_mask] = 2.0 * h
        step = t_next - t_prev
        nsub = _substeps(2.0 * np.max(np.abs(k)), step)
        for _ in range(nsub):
            R = apply_tridiag_expm(k * (step / nsub), R)
        t_prev = t_next
        while si < sample_times.size and sample_times[si] <= t_prev + 1e-12:
            M = record(sample_times[si], R)
            si += 1
    return Trajectory(np.array(times), np.array(dens), states, drift, M)


def initial_state(spec: ChainSpec, protocol: QuenchProtocol) -> FermionState:
    """Ground state at t = -tau_Q; the chain must start in the paramagnet everywhere."""
    h0 = field_at(protocol.t_start, protocol, spec)
    if np.any(h0 <= spec.coupling(site_coordinates(spec.L))):
        raise ValueError("initial field does not put every site in the paramagnetic phase")
    return ground_state(build_quadratic(spec, h0))


def evolve(
    state: FermionState,
    spec: ChainSpec,
    protocol: QuenchProtocol,
    sample_times=None,
    keep_states: bool = False,
) -> Trajectory:
    """Evolve ``state`` from t = -tau_Q to +tau_Q through the linear ramp."""
    if sample_times is None:
        sample_times = protocol.sample_times()
    return propagate(
        state.majorana(),
        spec,
        lambda t: field_at(t, protocol, spec),
        protocol.t_start,
        protocol.t_end,
        protocol.dt,
        sample_times,
        keep_states=keep_states,
    )


def evolve_frozen(state: FermionState, spec: ChainSpec, h: float, duration: float, dt: float, sample_times=None):
    """Evolve at constant field ``h`` over [0, duration]."""
    if sample_times is None:
        sample_times = np.linspace(0.0, duration, 11)
    return propagate(state.majorana(), spec, lambda t: h, 0.0, duration, dt, sample_times, keep_states=True)


def run_quench(spec: ChainSpec, protocol: QuenchProtocol, sample_times=None) -> Trajectory:
    """Ground state at -tau_Q followed by the full ramp."""
    return evolve(initial_state(spec, protocol), spec, protocol, sample_times)
