"""Shared test fixtures: a brute-force spin-chain integrator used as an oracle."""

import numpy as np
import pytest
import scipy.linalg

from ikzm.model import ChainSpec, bond_couplings

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.diag([1.0, -1.0])


def site_op(op, i, L):
    out = np.array([[1.0]])
    for j in range(L):
        out = np.kron(out, op if j == i else np.eye(2))
    return out


class DenseChain:
    """Exact 2^L representation of the Ising chain, independent of the package internals."""

    def __init__(self, spec: ChainSpec):
        self.spec = spec
        L = spec.L
        J = bond_couplings(spec)
        self.zz = [site_op(SZ, i, L) @ site_op(SZ, i + 1, L) for i in range(L - 1)]
        self.bond_part = -sum(J[i] * self.zz[i] for i in range(L - 1))
        self.field_part = -sum(site_op(SX, i, L) for i in range(L))

    def hamiltonian(self, h):
        return self.bond_part + h * self.field_part

    def ground_state(self, h):
        w, v = np.linalg.eigh(self.hamiltonian(h))
        return w[0], v[:, 0].astype(complex)

    def kink_density(self, psi):
        zz = [np.real(np.vdot(psi, Z @ psi)) for Z in self.zz]
        return float(np.sum(1 - np.array(zz)) / (2 * self.spec.L))

    def quench(self, tau_Q, dt, sample_times):
        """Midpoint-frozen exact stepping on the same grid as the package propagators."""
        J0 = self.spec.J0
        field = lambda t: J0 * (1 - t / tau_Q)  # noqa: E731
        t0, t1 = -tau_Q, tau_Q
        n = int(np.ceil((t1 - t0) / dt - 1e-9))
        grid = t0 + dt * np.arange(n + 1)
        grid[-1] = t1
        nodes = np.unique(np.concatenate([grid, sample_times]))
        _, psi = self.ground_state(field(t0))
        out = []
        si = 0
        samples = np.asarray(sample_times)
        if samples[0] <= t0:
            out.append(self.kink_density(psi))
            si = 1
        for a, b in zip(nodes[:-1], nodes[1:]):
            psi = scipy.linalg.expm(-1j * (b - a) * self.hamiltonian(field(0.5 * (a + b)))) @ psi
            while si < samples.size and samples[si] <= b + 1e-12:
                out.append(self.kink_density(psi))
                si += 1
        return np.array(out)


@pytest.fixture
def dense_chain():
    return DenseChain


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
