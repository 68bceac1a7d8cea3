"""How the DMRG energy of LiH/6-31G depends on the tensor-train rank.

Run with ``python3 demos/lih_rank_study.py [max_rank]`` (default 8, about
40 s on one core). The reference full-CI energy was computed with pyscf
when the integral file was generated.
"""
import json
import sys
import time
from pathlib import Path

from fockline import DmrgConfig, build_hamiltonian, read_fcidump, run_dmrg

DATA = Path(__file__).resolve().parent.parent / "data"
max_rank = int(sys.argv[1]) if len(sys.argv) > 1 else 8

e_fci = json.loads((DATA / "references.json").read_text())["lih_631g"]["e_fci"]
fp = build_hamiltonian(read_fcidump(DATA / "lih_631g.fcidump"))
print(f"LiH/6-31G: {fp.d} spin orbitals, {fp.n_electrons} electrons, E_FCI = {e_fci:.8f}")
print(f"{'rank':>4}  {'energy':>14}  {'E - E_FCI':>10}  {'seconds':>7}")
for r in range(1, max_rank + 1):
    t0 = time.perf_counter()
    e = run_dmrg(fp, DmrgConfig(max_rank=r)).energy
    print(f"{r:4d}  {e:14.8f}  {e - e_fci:10.2e}  {time.perf_counter() - t0:7.1f}")
