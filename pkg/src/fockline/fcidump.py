"""Reading and writing FCIDUMP integral files.

The format is a Fortran namelist header::

    &FCI NORB=2,NELEC=2,MS2=0,
     ORBSYM=1,1,
     ISYM=1,
    &END

followed by one record per line, ``value i j k l`` with 1-based orbital
indices. Records with all four indices positive are two-electron integrals
``(ij|kl)`` in chemists' notation, ``i j 0 0`` is the one-electron integral
``h_ij`` and ``0 0 0 0`` is the core energy.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FcidumpError",
    "FcidumpHeader",
    "MolecularIntegrals",
    "parse_fcidump",
    "write_fcidump",
    "read_fcidump",
]

DUPLICATE_ATOL = 1e-10


class FcidumpError(ValueError):
    pass


@dataclass
class FcidumpHeader:
    norb: int
    nelec: int
    ms2: int = 0
    orbsym: list = field(default_factory=list)
    isym: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.norb < 1:
            raise FcidumpError(f"NORB must be positive, got {self.norb}")
        if self.nelec < 0:
            raise FcidumpError(f"NELEC must be non-negative, got {self.nelec}")
        if len(self.orbsym) not in (0, self.norb):
            raise FcidumpError(f"ORBSYM has {len(self.orbsym)} entries, expected {self.norb}")


@dataclass
class MolecularIntegrals:
    """Spin-restricted molecular integrals.

    ``g[p, q, r, s]`` is ``(pq|rs)`` in chemists' notation and carries the
    full 8-fold permutational symmetry. Indices are 0-based.
    """

    h: np.ndarray
    g: np.ndarray
    e_core: float = 0.0
    n_electrons: int = 0
    ms2: int = 0
    orbsym: list = field(default_factory=list)
    isym: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        n = self.h.shape[0]
        if self.h.shape != (n, n):
            raise ValueError(f"h must be square, got {self.h.shape}")
        if self.g.shape != (n, n, n, n):
            raise ValueError(f"g must have shape {(n,) * 4}, got {self.g.shape}")

    @property
    def n_spatial(self) -> int:
        return self.h.shape[0]

    def validate(self, atol: float = 1e-10):
        """Raise ``ValueError`` if a symmetry or count invariant is violated."""
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.g)) and np.isfinite(self.e_core)):
            raise ValueError("integrals contain NaN or infinite values")
        if not np.allclose(self.h, self.h.T, atol=atol, rtol=0):
            raise ValueError("one-electron integrals are not symmetric")
        g = self.g
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if not np.allclose(g, g.transpose(perm), atol=atol, rtol=0):
                raise ValueError(f"two-electron integrals lack symmetry {perm}")
        if not 0 <= self.n_electrons <= 2 * self.n_spatial:
            raise ValueError(f"{self.n_electrons} electrons do not fit in {self.n_spatial} orbitals")

    def __eq__(self, other):
        if not isinstance(other, MolecularIntegrals):
            return NotImplemented
        return (
            self.n_electrons == other.n_electrons
            and self.ms2 == other.ms2
            and self.e_core == other.e_core
            and np.array_equal(self.h, other.h)
            and np.array_equal(self.g, other.g)
        )


_KEY_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _parse_namelist(text: str) -> dict:
    keys = list(_KEY_RE.finditer(text))
    out = {}
    for m, nxt in zip(keys, keys[1:] + [None]):
        raw = text[m.end(): nxt.start() if nxt else len(text)]
        out[m.group(1).upper()] = [v for v in re.split(r"[,\s]+", raw.strip()) if v]
    return out


def _to_float(tok: str) -> float:
    return float(tok.replace("D", "E").replace("d", "e"))


def _split_header(lines: list[str]) -> tuple[str, int]:
    """Return the namelist body and the index of the first record line."""
    start = None
    for i, line in enumerate(lines):
        if line.strip():
            start = i
            break
    if start is None or not lines[start].lstrip().upper().startswith("&FCI"):
        raise FcidumpError("missing '&FCI' namelist header")
    chunks = []
    for i in range(start, len(lines)):
        line = lines[i]
        if i == start:
            line = line.lstrip()[4:]
        stripped = line.strip()
        m = re.search(r"(&END|/)\s*$", stripped, flags=re.IGNORECASE)
        if m:
            chunks.append(stripped[: m.start()])
            return " ".join(chunks), i + 1
        chunks.append(stripped)
    raise FcidumpError("namelist header is not terminated by '&END' or '/'")


def _int_list(values: list[str], key: str) -> list[int]:
    try:
        return [int(v) for v in values]
    except ValueError as e:
        raise FcidumpError(f"non-integer value for {key}: {values}") from e


def parse_fcidump(text: str) -> MolecularIntegrals:
    """Parse FCIDUMP text.

    Duplicate records overwrite earlier ones; a warning is issued when the
    new value differs from the old one by more than ``DUPLICATE_ATOL``
    (files written by common packages repeat symmetry images with
    last-digit noise). Orbital-energy records ``e i 0 0 0``
    are accepted and ignored.
    """
    lines = text.splitlines()
    body, first = _split_header(lines)
    nl = _parse_namelist(body)
    for key in ("NORB", "NELEC"):
        if key not in nl or len(nl[key]) != 1:
            raise FcidumpError(f"header is missing {key}")
    header = FcidumpHeader(
        norb=_int_list(nl["NORB"], "NORB")[0],
        nelec=_int_list(nl["NELEC"], "NELEC")[0],
        ms2=_int_list(nl.get("MS2", ["0"]), "MS2")[0],
        orbsym=_int_list(nl.get("ORBSYM", []), "ORBSYM"),
        isym=_int_list(nl.get("ISYM", ["1"]), "ISYM")[0],
        extra={k: ",".join(v) for k, v in nl.items() if k not in ("NORB", "NELEC", "MS2", "ORBSYM", "ISYM")},
    )
    n = header.norb
    h = np.zeros((n, n))
    g = np.zeros((n, n, n, n))
    e_core = 0.0
    seen: dict = {}

    def record(key, value, lineno):
        old = seen.get(key)
        if old is not None and abs(old - value) > DUPLICATE_ATOL:
            warnings.warn(f"line {lineno}: duplicate record {key} overwrites {old!r} with {value!r}")
        seen[key] = value

    for lineno, line in enumerate(lines[first:], start=first + 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 5:
            raise FcidumpError(f"line {lineno}: expected 'value i j k l', got {line.strip()!r}")
        try:
            value = _to_float(toks[0])
            i, j, k, l = (int(t) for t in toks[1:])
        except ValueError as e:
            raise FcidumpError(f"line {lineno}: malformed record {line.strip()!r}") from e
        if max(i, j, k, l) > n or min(i, j, k, l) < 0:
            raise FcidumpError(f"line {lineno}: orbital index out of range 0..{n}")
        if i and j and k and l:
            i, j, k, l = i - 1, j - 1, k - 1, l - 1
            ij, kl = (max(i, j), min(i, j)), (max(k, l), min(k, l))
            record((max(ij, kl), min(ij, kl)), value, lineno)
            for a, b, c, e in ((i, j, k, l), (k, l, i, j)):
                g[a, b, c, e] = g[b, a, c, e] = g[a, b, e, c] = g[b, a, e, c] = value
        elif i and j and not k and not l:
            record((max(i, j), min(i, j)), value, lineno)
            h[i - 1, j - 1] = h[j - 1, i - 1] = value
        elif not (i or j or k or l):
            record("core", value, lineno)
            e_core = value
        elif i and not (j or k or l):
            continue
        else:
            raise FcidumpError(f"line {lineno}: unsupported index pattern {i} {j} {k} {l}")
    return MolecularIntegrals(
        h=h,
        g=g,
        e_core=e_core,
        n_electrons=header.nelec,
        ms2=header.ms2,
        orbsym=header.orbsym,
        isym=header.isym,
        extra=header.extra,
    )


def read_fcidump(path) -> MolecularIntegrals:
    """Parse the FCIDUMP file at ``path``; ``"-"`` reads standard input."""
    if str(path) == "-":
        import sys

        return parse_fcidump(sys.stdin.read())
    return parse_fcidump(Path(path).read_text())


def _fmt(v: float) -> str:
    # shortest repr that round-trips exactly
    return repr(float(v))


def write_fcidump(ints: MolecularIntegrals) -> str:
    """Canonical FCIDUMP text.

    Two-electron records come first with ``i >= j``, ``k >= l`` and
    ``(i, j) >= (k, l)``, then one-electron records with ``i >= j``, then the
    core energy. Zero integrals are omitted.
    """
    n = ints.n_spatial
    head = [f"&FCI NORB={n},NELEC={ints.n_electrons},MS2={ints.ms2},"]
    if ints.orbsym:
        head.append(" ORBSYM=" + ",".join(str(s) for s in ints.orbsym) + ",")
    head.append(f" ISYM={ints.isym},")
    for k, v in ints.extra.items():
        head.append(f" {k}={v},")
    head.append("&END")
    out = head
    for i in range(n):
        for j in range(i + 1):
            for k in range(i + 1):
                for l in range(k + 1):
                    if (k, l) > (i, j):
                        continue
                    v = ints.g[i, j, k, l]
                    if v != 0.0:
                        out.append(f"{_fmt(v)} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(n):
        for j in range(i + 1):
            v = ints.h[i, j]
            if v != 0.0:
                out.append(f"{_fmt(v)} {i + 1} {j + 1} 0 0")
    out.append(f"{_fmt(ints.e_core)} 0 0 0 0")
    return "\n".join(out) + "\n"
