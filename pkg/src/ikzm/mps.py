"""
Matrix-product-state engine: Ising MPO, two-site DMRG and second-order TEBD.

Tensors carry legs (left virtual, physical, right virtual). The physical basis
is the sz eigenbasis (|up>, |down>). Truncation error is the discarded squared
singular-value weight, summed over every SVD of a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .model import ChainSpec, QuenchProtocol, bond_couplings, field_at

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, -1j], [1j, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
ID2 = np.eye(2)
PAULI = {"x": SX, "y": SY, "z": SZ}

# singular values below cutoff * s_max are dropped on top of the chi cap
SVD_CUTOFF = 1e-6
DMRG_CUTOFF = 1e-10
DENSE_EIG_MAX = 400


class DmrgNotConverged(RuntimeError):
    def __init__(self, energies):
        self.energies = list(energies)
        tail = ", ".join(f"{e:.12g}" for e in self.energies[-2:])
        super().__init__(f"DMRG did not converge after {len(self.energies)} sweeps (last energies: {tail})")


class TruncationBudgetExceeded(RuntimeError):
    def __init__(self, t, trunc_error, partial=None):
        self.t = t
        self.trunc_error = trunc_error
        self.partial = partial
        super().__init__(f"cumulative truncation error {trunc_error:.3g} exceeded the budget at t={t:.6g}")


def truncated_svd(theta: np.ndarray, chi_max: int, cutoff: float = SVD_CUTOFF):
    """SVD of a matrix keeping at most ``chi_max`` values above ``cutoff``.

    Returns U, S, Vh and the discarded weight relative to the total weight.
    Equal singular values keep LAPACK's order (stable sort on descending value).
    """
    try:
        U, S, Vh = np.linalg.svd(theta, full_matrices=False)
    except np.linalg.LinAlgError:
        import scipy.linalg

        U, S, Vh = scipy.linalg.svd(theta, full_matrices=False, lapack_driver="gesvd")
    order = np.argsort(-S, kind="stable")
    U, S, Vh = U[:, order], S[order], Vh[order]
    total = float(np.sum(S**2))
    keep = min(chi_max, max(1, int(np.sum(S > cutoff * S[0]))))
    discarded = float(np.sum(S[keep:] ** 2)) / total if total > 0 else 0.0
    return U[:, :keep], S[:keep], Vh[:keep], discarded


@dataclass
class MpsState:
    """Open-boundary MPS with an optional orthogonality centre."""

    tensors: list
    center: int | None = None
    trunc_error: float = 0.0

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [A.shape[2] for A in self.tensors[:-1]]

    def copy(self) -> "MpsState":
        return MpsState([A.copy() for A in self.tensors], self.center, self.trunc_error)

    @classmethod
    def product(cls, vectors) -> "MpsState":
        """Product state from one length-2 vector per site (normalised per site)."""
        tensors = []
        for v in vectors:
            v = np.asarray(v, dtype=complex)
            tensors.append((v / np.linalg.norm(v)).reshape(1, 2, 1))
        return cls(tensors, center=0)

    @classmethod
    def random_product(cls, L: int, rng: np.random.Generator, dtype=float) -> "MpsState":
        vecs = rng.normal(size=(L, 2))
        if np.issubdtype(dtype, np.complexfloating):
            vecs = vecs + 1j * rng.normal(size=(L, 2))
        st = cls.product(vecs)
        if not np.issubdtype(dtype, np.complexfloating):
            st.tensors = [A.real.astype(dtype) for A in st.tensors]
        return st

    @classmethod
    def from_dense(cls, psi: np.ndarray, chi_max: int = 10**9) -> "MpsState":
        L = int(round(math.log2(psi.size)))
        tensors = []
        rest = psi.reshape(1, -1)
        for _ in range(L - 1):
            chi = rest.shape[0]
            rest = rest.reshape(chi * 2, -1)
            U, S, Vh, _ = truncated_svd(rest, chi_max, cutoff=0.0)
            tensors.append(U.reshape(chi, 2, -1))
            rest = S[:, None] * Vh
        tensors.append(rest.reshape(rest.shape[0], 2, 1))
        return cls(tensors, center=L - 1)

    def to_dense(self) -> np.ndarray:
        psi = self.tensors[0]
        for A in self.tensors[1:]:
            psi = np.tensordot(psi, A, axes=(psi.ndim - 1, 0))
        return psi.reshape(-1)

    def norm(self) -> float:
        E = np.ones((1, 1))
        for A in self.tensors:
            E = _grow_left(E, A)
        return float(np.sqrt(np.real(E[0, 0])))

    # ------------------------------------------------------------ canonical forms

    def _shift_right(self, i: int):
        A = self.tensors[i]
        chi_l, d, chi_r = A.shape
        Q, R = np.linalg.qr(A.reshape(chi_l * d, chi_r))
        self.tensors[i] = Q.reshape(chi_l, d, -1)
        self.tensors[i + 1] = np.tensordot(R, self.tensors[i + 1], axes=(1, 0))

    def _shift_left(self, i: int):
        A = self.tensors[i]
        chi_l, d, chi_r = A.shape
        Q, R = np.linalg.qr(A.reshape(chi_l, d * chi_r).T)
        self.tensors[i] = Q.T.reshape(-1, d, chi_r)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], R.T, axes=(2, 0))

    def canonicalize(self, center: int = 0) -> "MpsState":
        """Bring the state to mixed-canonical form around ``center`` and normalise it."""
        for i in range(center):
            self._shift_right(i)
        for i in range(self.L - 1, center, -1):
            self._shift_left(i)
        self.center = center
        self.normalize()
        return self

    def move_center(self, target: int):
        if self.center is None:
            self.canonicalize(target)
            return
        while self.center < target:
            self._shift_right(self.center)
            self.center += 1
        while self.center > target:
            self._shift_left(self.center)
            self.center -= 1

    def normalize(self):
        if self.center is None:
            n = self.norm()
            self.tensors[0] = self.tensors[0] / n
        else:
            A = self.tensors[self.center]
            self.tensors[self.center] = A / np.linalg.norm(A)

    def isometry_residuals(self) -> list[float]:
        """Deviation from left (right) isometry of every tensor left (right) of the centre."""
        if self.center is None:
            raise ValueError("state has no orthogonality centre")
        out = []
        for i, A in enumerate(self.tensors):
            if i < self.center:
                m = np.einsum("asc,asd->cd", A.conj(), A)
            elif i > self.center:
                m = np.einsum("asc,bsc->ab", A, A.conj())
            else:
                continue
            out.append(float(np.max(np.abs(m - np.eye(m.shape[0])))))
        return out

    # ------------------------------------------------------------ two-site update

    def split_two_site(self, i: int, theta: np.ndarray, chi_max: int, move: str, cutoff: float = SVD_CUTOFF) -> float:
        """Replace sites i, i+1 by the SVD of ``theta`` (legs l, s1, s2, r).

        ``move="right"`` leaves the centre on i+1, ``"left"`` on i. Returns the
        discarded weight, which is also added to ``trunc_error``.
        """
        chi_l, d1, d2, chi_r = theta.shape
        U, S, Vh, disc = truncated_svd(theta.reshape(chi_l * d1, d2 * chi_r), chi_max, cutoff)
        S = S / np.linalg.norm(S)
        if move == "right":
            self.tensors[i] = U.reshape(chi_l, d1, -1)
            self.tensors[i + 1] = (S[:, None] * Vh).reshape(-1, d2, chi_r)
            self.center = i + 1
        else:
            self.tensors[i] = (U * S).reshape(chi_l, d1, -1)
            self.tensors[i + 1] = Vh.reshape(-1, d2, chi_r)
            self.center = i
        self.trunc_error += disc
        return disc


# --------------------------------------------------------------------------- MPO


@dataclass(frozen=True)
class MpoHamiltonian:
    """Ising Hamiltonian as an MPO of bond dimension 3 (lower-triangular convention).

    W_i = [[I, 0, 0], [Z, 0, 0], [-h X, -J_i Z, I]]; tensors have legs (wl, wr, s, s').
    """

    tensors: tuple

    @property
    def L(self) -> int:
        return len(self.tensors)

    def to_dense(self) -> np.ndarray:
        W = self.tensors[0]
        H = W[0]  # (wr, s, s')
        dim = 2
        for Wn in self.tensors[1:]:
            H = np.einsum("aij,abkl->bikjl", H, Wn).reshape(Wn.shape[1], dim * 2, dim * 2)
            dim *= 2
        return H[0]

    def expectation(self, state: MpsState) -> float:
        E = np.ones((1, 1, 1))
        for A, W in zip(state.tensors, self.tensors):
            E = np.einsum("awb,asc,wvst,btd->cvd", E, A.conj(), W, A, optimize=True)
        return float(np.real(E[0, 0, 0])) / state.norm() ** 2


def ising_mpo(spec: ChainSpec, h: float) -> MpoHamiltonian:
    J = bond_couplings(spec)
    L = spec.L
    tensors = []
    for i in range(L):
        W = np.zeros((3, 3, 2, 2))
        W[0, 0] = ID2
        W[1, 0] = SZ
        W[2, 0] = -h * SX
        if i < L - 1:
            W[2, 1] = -J[i] * SZ
        W[2, 2] = ID2
        if i == 0:
            W = W[2:3]
        if i == L - 1:
            W = W[:, 0:1]
        tensors.append(W)
    return MpoHamiltonian(tuple(tensors))


def dense_hamiltonian(spec: ChainSpec, h: float) -> np.ndarray:
    """Dense 2^L x 2^L Ising Hamiltonian (small L only)."""
    L = spec.L
    J = bond_couplings(spec)

    def site_op(op, i):
        return np.kron(np.kron(np.eye(2**i), op), np.eye(2 ** (L - i - 1)))

    H = np.zeros((2**L, 2**L))
    for i in range(L - 1):
        H -= J[i] * (site_op(SZ, i) @ site_op(SZ, i + 1))
    for i in range(L):
        H -= h * site_op(SX, i)
    return H


# --------------------------------------------------------------------------- DMRG


def _left_env(E, A, W):
    return np.einsum("awb,asc,wvst,btd->cvd", E, A.conj(), W, A, optimize=True)


def _right_env(F, A, W):
    return np.einsum("cvd,asc,wvst,btd->awb", F, A.conj(), W, A, optimize=True)


def _two_site_matvec(E, W1, W2, F, shape):
    def mv(x):
        th = x.reshape(shape)
        # th: (b, t1, t2, d); E: (a, w, b); W: (w, v, s, t); F: (c, u, d)
        y = np.tensordot(E, th, axes=(2, 0))  # a w t1 t2 d
        y = np.tensordot(y, W1, axes=([1, 2], [0, 3]))  # a t2 d v s1
        y = np.tensordot(y, W2, axes=([3, 1], [0, 3]))  # a d s1 u s2
        y = np.tensordot(y, F, axes=([1, 3], [2, 1]))  # a s1 s2 c
        return y.reshape(-1)

    return mv


def _local_ground(E, W1, W2, F, theta0):
    shape = theta0.shape
    dim = theta0.size
    mv = _two_site_matvec(E, W1, W2, F, shape)
    if dim <= DENSE_EIG_MAX:
        Hloc = np.column_stack([mv(v) for v in np.eye(dim)])
        w, v = np.linalg.eigh(0.5 * (Hloc + Hloc.T))
        return w[0], v[:, 0].reshape(shape)
    op = LinearOperator((dim, dim), matvec=mv, dtype=float)
    w, v = eigsh(op, k=1, which="SA", v0=theta0.reshape(-1), tol=1e-13, ncv=min(dim, 20))
    return w[0], v[:, 0].reshape(shape)


@dataclass
class DmrgResult:
    state: MpsState
    energy: float
    sweep_energies: list


def dmrg_ground_state(
    spec: ChainSpec,
    h: float,
    chi_max: int = 64,
    sweep_tol: float = 1e-10,
    max_sweeps: int = 50,
    seed: int = 0,
    cutoff: float = DMRG_CUTOFF,
) -> DmrgResult:
    """Two-site DMRG from a random product state.

    Sweeps (left-to-right then right-to-left) until the energy changes by less
    than ``sweep_tol``; raises ``DmrgNotConverged`` after ``max_sweeps``.
    """
    mpo = ising_mpo(spec, h)
    L = spec.L
    rng = np.random.default_rng(seed)
    st = MpsState.random_product(L, rng, dtype=float)
    st.canonicalize(0)
    W = mpo.tensors

    # right environments for a centre at site 0
    R = [None] * (L + 1)
    R[L] = np.ones((1, 1, 1))
    for i in range(L - 1, 0, -1):
        R[i] = _right_env(R[i + 1], st.tensors[i], W[i])
    Lenv = [None] * (L + 1)
    Lenv[0] = np.ones((1, 1, 1))

    energies = []
    energy = 0.0
    for _ in range(max_sweeps):
        for i in range(L - 1):
            theta = np.tensordot(st.tensors[i], st.tensors[i + 1], axes=(2, 0))
            energy, theta = _local_ground(Lenv[i], W[i], W[i + 1], R[i + 2], theta)
            st.split_two_site(i, theta, chi_max, "right", cutoff)
            Lenv[i + 1] = _left_env(Lenv[i], st.tensors[i], W[i])
        for i in range(L - 2, -1, -1):
            theta = np.tensordot(st.tensors[i], st.tensors[i + 1], axes=(2, 0))
            energy, theta = _local_ground(Lenv[i], W[i], W[i + 1], R[i + 2], theta)
            st.split_two_site(i, theta, chi_max, "left", cutoff)
            R[i + 1] = _right_env(R[i + 2], st.tensors[i + 1], W[i + 1])
        energies.append(float(energy))
        if len(energies) >= 2 and abs(energies[-1] - energies[-2]) < sweep_tol:
            st.trunc_error = 0.0
            return DmrgResult(st, energies[-1], energies)
    raise DmrgNotConverged(energies)


# --------------------------------------------------------------------------- TEBD


def field_weights(L: int) -> np.ndarray:
    """Share of each site's field carried by each bond: 1/2 per bond, 1 at the chain ends."""
    w = np.full((L - 1, 2), 0.5)
    w[0, 0] = 1.0
    w[-1, 1] = 1.0
    return w


def bond_hamiltonians(spec: ChainSpec, h: float) -> list[np.ndarray]:
    """Two-site terms -J_b Z Z - h (w_l X I + w_r I X); they sum to the full chain."""
    J = bond_couplings(spec)
    w = field_weights(spec.L)
    ZZ, XI, IX = np.kron(SZ, SZ), np.kron(SX, ID2), np.kron(ID2, SX)
    return [-J[b] * ZZ - h * (w[b, 0] * XI + w[b, 1] * IX) for b in range(spec.L - 1)]


def _gate(hb: np.ndarray, tau: float) -> np.ndarray:
    e, v = np.linalg.eigh(hb)
    return ((v * np.exp(-1j * tau * e)) @ v.conj().T).reshape(2, 2, 2, 2)


def _apply_gate(st: MpsState, i: int, gate: np.ndarray, chi_max: int, move: str, cutoff: float) -> float:
    theta = np.tensordot(st.tensors[i], st.tensors[i + 1], axes=(2, 0))  # l s1 s2 r
    theta = np.tensordot(gate, theta, axes=([2, 3], [1, 2]))  # s1' s2' l r
    theta = theta.transpose(2, 0, 1, 3)
    return st.split_two_site(i, theta, chi_max, move, cutoff)


def trotter_step(st: MpsState, spec: ChainSpec, h: float, dt: float, chi_max: int, cutoff: float = SVD_CUTOFF) -> float:
    """One second-order step: odd bonds dt/2, even bonds dt, odd bonds dt/2.

    "Odd" bonds are (1,2), (3,4), ... in 1-based site labels. Returns the
    discarded weight of the step.
    """
    L = spec.L
    hbs = bond_hamiltonians(spec, h)
    odd = list(range(0, L - 1, 2))
    even = list(range(1, L - 1, 2))
    half = {b: _gate(hbs[b], dt / 2) for b in odd}
    full = {b: _gate(hbs[b], dt) for b in even}
    disc = 0.0
    # odd half, left to right
    for b in odd:
        st.move_center(b)
        disc += _apply_gate(st, b, half[b], chi_max, "right", cutoff)
    # even full, right to left
    for b in reversed(even):
        st.move_center(b + 1)
        disc += _apply_gate(st, b, full[b], chi_max, "left", cutoff)
    # odd half, right to left
    for b in reversed(odd):
        st.move_center(b + 1)
        disc += _apply_gate(st, b, half[b], chi_max, "left", cutoff)
    st.normalize()
    return disc


@dataclass
class TebdResult:
    times: np.ndarray
    kink_density: np.ndarray
    trunc_error: np.ndarray
    max_bond_dim: np.ndarray
    state: MpsState
    diagnostics: list = field(default_factory=list)


def tebd_propagate(
    state: MpsState,
    spec: ChainSpec,
    field: Callable[[float], float],
    t0: float,
    t1: float,
    dt: float,
    chi_max: int,
    sample_times=None,
    trunc_budget: float = 1e-4,
    cutoff: float = SVD_CUTOFF,
    observer: Callable | None = None,
) -> TebdResult:
    """TEBD with h frozen at each step midpoint and samples landing on the step grid.

    ``observer(t, state)`` is called at every sample time. The per-step
    diagnostics list holds (time, bond-dimension profile, step truncation error).
    """
    if sample_times is None:
        sample_times = np.array([t1])
    sample_times = np.asarray(sample_times, dtype=float)
    n_steps = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    grid = t0 + dt * np.arange(n_steps + 1)
    grid[-1] = t1
    nodes = np.unique(np.concatenate([grid, np.clip(sample_times, t0, t1)]))

    st = state.copy()
    st.tensors = [A.astype(complex) for A in st.tensors]
    if st.center is None:
        st.canonicalize(0)
    times, dens, errs, chis, diag = [], [], [], [], []
    si = 0

    def record(t):
        times.append(t)
        dens.append(measure_kink_density(st))
        errs.append(st.trunc_error)
        chis.append(max(st.bond_dims) if st.L > 1 else 1)
        if observer is not None:
            observer(t, st)

    t_prev = nodes[0]
    while si < sample_times.size and sample_times[si] <= t_prev + 1e-12:
        record(sample_times[si])
        si += 1
    for t_next in nodes[1:]:
        disc = trotter_step(st, spec, field(0.5 * (t_prev + t_next)), t_next - t_prev, chi_max, cutoff)
        t_prev = t_next
        diag.append((float(t_prev), tuple(st.bond_dims), disc))
        while si < sample_times.size and sample_times[si] <= t_prev + 1e-12:
            record(sample_times[si])
            si += 1
        if st.trunc_error > trunc_budget:
            partial = TebdResult(np.array(times), np.array(dens), np.array(errs), np.array(chis), st, diag)
            raise TruncationBudgetExceeded(float(t_prev), st.trunc_error, partial)
    return TebdResult(np.array(times), np.array(dens), np.array(errs), np.array(chis), st, diag)


def tebd_evolve(
    state: MpsState,
    spec: ChainSpec,
    protocol: QuenchProtocol,
    chi_max: int = 256,
    sample_times=None,
    trunc_budget: float = 1e-4,
    cutoff: float = SVD_CUTOFF,
) -> TebdResult:
    """Evolve through the linear ramp from -tau_Q to +tau_Q."""
    if protocol.dt > 0.05:
        raise ValueError(f"TEBD requires dt <= 0.05, got {protocol.dt}")
    if abs(state.norm() - 1.0) > 1e-8:
        raise ValueError("initial MPS is not normalised")
    if sample_times is None:
        sample_times = protocol.sample_times()
    return tebd_propagate(
        state,
        spec,
        lambda t: field_at(t, protocol, spec),
        protocol.t_start,
        protocol.t_end,
        protocol.dt,
        chi_max,
        sample_times,
        trunc_budget,
        cutoff,
    )


# --------------------------------------------------------------------------- measurements


def _grow_left(E, A, op=None):
    """Contract (a,b) environment with A*, op, A into a new (c,d) environment."""
    B = A if op is None else np.einsum("st,btd->bsd", op, A)
    T = np.tensordot(E, A.conj(), axes=(0, 0))  # b,s,c
    return np.tensordot(T, B, axes=([0, 1], [0, 1]))  # c,d


def _grow_right(E, A):
    T = np.tensordot(A.conj(), E, axes=(2, 0))  # a,s,d
    return np.tensordot(T, A, axes=([1, 2], [1, 2]))  # a,b


def _environments(st: MpsState):
    L = st.L
    left = [np.ones((1, 1))]
    for A in st.tensors:
        left.append(_grow_left(left[-1], A))
    right = [np.ones((1, 1))]
    for A in reversed(st.tensors):
        right.append(_grow_right(right[-1], A))
    right = right[::-1]
    norm2 = float(np.real(left[L][0, 0]))
    return left, right, norm2


def one_site_expectations(st: MpsState, op: np.ndarray) -> np.ndarray:
    left, right, norm2 = _environments(st)
    out = np.empty(st.L)
    for i, A in enumerate(st.tensors):
        E = _grow_left(left[i], A, op)
        out[i] = np.real(np.sum(E * right[i + 1])) / norm2
    return out


def two_site_expectations(st: MpsState, op1: np.ndarray, op2: np.ndarray) -> np.ndarray:
    """<op1_i op2_{i+1}> on every bond."""
    left, right, norm2 = _environments(st)
    out = np.empty(st.L - 1)
    for i in range(st.L - 1):
        E = _grow_left(left[i], st.tensors[i], op1)
        E = _grow_left(E, st.tensors[i + 1], op2)
        out[i] = np.real(np.sum(E * right[i + 2])) / norm2
    return out


def measure_kink_density(st: MpsState) -> float:
    """d = (1/2L) sum_bonds (1 - <sz_n sz_{n+1}>)."""
    zz = two_site_expectations(st, SZ, SZ)
    return float(np.sum(1.0 - zz) / (2.0 * st.L))


def measure_magnetization(st: MpsState, axis: str = "z"):
    """Per-site <sigma^axis_n> and the chain average."""
    if axis not in ("x", "z"):
        raise ValueError(f"axis must be 'x' or 'z', got {axis!r}")
    vals = one_site_expectations(st, PAULI[axis])
    return vals, float(np.mean(vals))


def mps_energy(st: MpsState, spec: ChainSpec, h: float) -> float:
    return ising_mpo(spec, h).expectation(st)
