"""Compare the tensor-network and free-fermion solvers on one quench.

    python demos/backend_crosscheck.py [L] [tau_Q] [chi]

Both start from the ground state at h = 2 J0 and follow the same linear ramp.
The fermion result is exact up to the time step, so the printed difference
measures Trotter and truncation error of the MPS run.
"""

import sys
import time

import numpy as np

from ikzm import fermion, mps
from ikzm.model import ChainSpec, QuenchProtocol, field_at

L = int(sys.argv[1]) if len(sys.argv) > 1 else 16
tau = float(sys.argv[2]) if len(sys.argv) > 2 else 2.0
chi = int(sys.argv[3]) if len(sys.argv) > 3 else 64

spec = ChainSpec.from_end_ratio(L, q=2, ratio=0.2, J0=5.0)
prot = QuenchProtocol(tau, 0.01)
samples = prot.sample_times(21)

start = time.perf_counter()
exact = fermion.run_quench(spec, prot, samples)
t_fermion = time.perf_counter() - start

start = time.perf_counter()
gs = mps.dmrg_ground_state(spec, float(field_at(prot.t_start, prot, spec)))
print(f"DMRG energy {gs.energy:.10f} after {len(gs.sweep_energies)} sweeps")
print(f"exact        {fermion.build_quadratic(spec, 2 * spec.J0).ground_energy():.10f}")
res = mps.tebd_evolve(gs.state, spec, prot, chi_max=chi, sample_times=samples)
t_mps = time.perf_counter() - start

print(f"{'t/tau_Q':>8} {'fermion':>10} {'mps':>10} {'|diff|':>9} {'trunc':>9} {'chi':>4}")
for t, a, b, e, c in zip(samples, exact.kink_density, res.kink_density, res.trunc_error, res.max_bond_dim):
    print(f"{t / tau:8.2f} {a:10.6f} {b:10.6f} {abs(a - b):9.2e} {e:9.2e} {c:4d}")
print(f"max difference {np.max(np.abs(exact.kink_density - res.kink_density)):.2e}")
print(f"wall clock: fermion {t_fermion:.2f} s, mps {t_mps:.2f} s")
