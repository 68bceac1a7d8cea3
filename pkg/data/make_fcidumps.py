"""Regenerate the reference FCIDUMP files shipped in this directory.

Requires PySCF, which is not a runtime dependency of fockline::

    pip install pyscf
    python data/make_fcidumps.py

Reference FCI energies are written to ``references.json`` next to the
integral files. Geometries are in Angstrom.
"""
import json
from pathlib import Path

from pyscf import fci, gto, scf
from pyscf.tools import fcidump

HERE = Path(__file__).parent

SYSTEMS = {
    "h2_sto3g": dict(atom="H 0 0 0; H 0 0 0.74", basis="sto-3g", spin=0),
    # 3.015 is the LiH equilibrium distance in bohr, read here as Angstrom.
    # This is the geometry that reproduces E(FCI) = -7.949315.
    "lih_631g": dict(atom="Li 0 0 0; H 0 0 3.015", basis="6-31g", spin=0),
    "li_631g": dict(atom="Li 0 0 0", basis="6-31g", spin=1),
}


def main():
    refs = {}
    for name, kw in SYSTEMS.items():
        mol = gto.M(verbose=0, **kw)
        mf = scf.ROHF(mol) if kw["spin"] else scf.RHF(mol)
        mf.conv_tol = 1e-12
        mf.run()
        fcidump.from_scf(mf, str(HERE / f"{name}.fcidump"), tol=1e-14)
        e_fci = fci.FCI(mf).kernel()[0]
        refs[name] = {
            "atom": kw["atom"],
            "basis": kw["basis"],
            "spin": kw["spin"],
            "n_orbitals": int(mol.nao),
            "n_electrons": int(mol.nelectron),
            "e_hf": float(mf.e_tot),
            "e_fci": float(e_fci),
        }
        print(name, refs[name])
    (HERE / "references.json").write_text(json.dumps(refs, indent=2) + "\n")


if __name__ == "__main__":
    main()
