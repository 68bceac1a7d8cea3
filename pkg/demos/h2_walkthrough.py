"""H2 in a minimal basis, from integrals to a DMRG ground state.

Run with ``python3 demos/h2_walkthrough.py``.
"""
from pathlib import Path

import numpy as np

from fockline import DmrgConfig, build_hamiltonian, read_fcidump, run_dmrg
from fockline.oracle import sector_ground_state, sector_operator
from fockline.second_quantization import aufbau_occupation, determinant_energy, hamiltonian_strings
from fockline.tto import tto_to_dense

DATA = Path(__file__).resolve().parent.parent / "data"

ints = read_fcidump(DATA / "h2_sto3g.fcidump")
print(f"{ints.n_spatial} spatial orbitals, {ints.n_electrons} electrons, E_core = {ints.e_core:.6f}")

# Four spin orbitals, ordered alpha/beta per spatial orbital.
fp = build_hamiltonian(ints)
print("Hamiltonian TTO ranks:", fp.hamiltonian.ranks)

# The 16 x 16 Fock-space matrix is small enough to inspect directly.
h = tto_to_dense(fp.hamiltonian)
print("Fock-space spectrum (lowest 4):", np.round(np.linalg.eigvalsh(h)[:4] + fp.e_core, 6))

occ = aufbau_occupation(ints)
e_ref = determinant_energy(ints, occ) + ints.e_core
print(f"reference determinant {occ}: E = {e_ref:.10f}")

e_exact = sector_ground_state(sector_operator(hamiltonian_strings(ints), fp.d, 2), 2)[0] + ints.e_core
print(f"exact N=2 ground state:     E = {e_exact:.10f}")

res = run_dmrg(fp, DmrgConfig(max_rank=4))
print(f"DMRG rank 4:                E = {res.energy:.10f}  ({res.sweeps} sweeps, <P> = "
      f"{res.particle_number_expectation:.8f})")
print(f"correlation energy recovered: {e_ref - res.energy:.6f} hartree")
