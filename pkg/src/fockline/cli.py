"""Command-line front end: ``fockline {dmrg,rank-study,exactdiag,simplexnet}``.

Every JSON result carries a ``manifest`` object. CSV outputs start with a
single ``# manifest: {...}`` comment line followed by a header row.

Exit codes: 0 success, 2 usage or input error, 3 resource cap exceeded,
4 numerical failure. ``FOCKLINE_THREADS`` caps BLAS threads and the
number of worker processes used by ``--repeat``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager, nullcontext
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import ArpackError
from threadpoolctl import threadpool_limits

from . import __version__
from .dmrg import DmrgConfig, EigensolverError, run_dmrg
from .fcidump import FcidumpError, read_fcidump
from .oracle import SPARSE_MAX_SITES, sector_ground_state, sector_operator
from .second_quantization import build_hamiltonian, hamiltonian_strings
from .simplexnet import TrainConfig, TrainingDiverged, train

log = logging.getLogger("fockline")

EXIT_OK, EXIT_USAGE, EXIT_RESOURCE, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ plumbing

def _version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _threads() -> int | None:
    raw = os.environ.get("FOCKLINE_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"FOCKLINE_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise UsageError(f"FOCKLINE_THREADS must be a positive integer, got {raw!r}")
    return n


def _manifest(cmd: str, inputs, config: dict, seed, timings: dict) -> dict:
    return {
        "subcommand": cmd,
        "inputs": [str(p) for p in inputs],
        "config": config,
        "version": _version(),
        "seed": seed,
        "timings": {k: round(v, 6) for k, v in timings.items()},
    }


@contextmanager
def _open_out(path):
    if path is None or str(path) == "-":
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            yield f


def _write_json(path, obj):
    with _open_out(path) as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def _write_csv(path, manifest, header, rows):
    with _open_out(path) as f:
        f.write("# manifest: " + json.dumps(manifest) + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _load(path):
    if str(path) != "-" and not Path(path).is_file():
        raise FileNotFoundError(f"no such FCIDUMP file: {path}")
    return read_fcidump(path)


def _parse_ranks(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        for sep in ("..", "-", ":"):
            if sep in part:
                lo, hi = part.split(sep, 1)
                out.extend(range(int(lo), int(hi) + 1))
                break
        else:
            out.append(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"invalid rank list {text!r}")
    return out


def _parse_hidden(text: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(w) for w in text.split(",") if w.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid hidden widths {text!r}")
    if not widths or min(widths) < 1:
        raise argparse.ArgumentTypeError(f"invalid hidden widths {text!r}")
    return widths


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


# ------------------------------------------------------------------ commands

def _dmrg_config(args, rank) -> DmrgConfig:
    return DmrgConfig(
        max_rank=rank,
        max_sweeps=args.max_sweeps,
        energy_tol=args.tol,
        mu=args.mu,
        seed=args.seed,
        init=args.init,
        warmup_factor=args.warmup_factor,
    )


def _config_echo(cfg) -> dict:
    return {k: v for k, v in vars(cfg).items()}


def cmd_dmrg(args) -> int:
    timings = {}
    t = time.perf_counter()
    ints = _load(args.fcidump)
    timings["read"] = time.perf_counter() - t
    t = time.perf_counter()
    fp = build_hamiltonian(ints)
    timings["build"] = time.perf_counter() - t
    cfg = _dmrg_config(args, args.rank)
    t = time.perf_counter()
    res = run_dmrg(fp, cfg)
    timings["dmrg"] = time.perf_counter() - t
    manifest = _manifest("dmrg", [args.fcidump], _config_echo(cfg), args.seed, timings)
    _write_json(args.out, {
        "manifest": manifest,
        "energy": res.energy,
        "e_core": fp.e_core,
        "n_elec_expect": res.particle_number_expectation,
        "penalty_expect": res.penalty_expectation,
        "sweeps": res.sweeps,
        "converged": res.converged,
        "warmup_energy": res.warmup_energy,
        "timings": manifest["timings"],
    })
    trace_path = args.trace_out
    if trace_path is None and args.out not in (None, "-"):
        trace_path = str(Path(args.out).with_suffix("")) + ".trace.csv"
    if trace_path is not None:
        _write_csv(trace_path, manifest, ["sweep", "half", "site", "energy"],
                   ([e.sweep, e.half, e.site, e.energy] for e in res.energy_trace))
    return EXIT_OK


def _rank_job(payload):
    fp, cfg = payload
    t = time.perf_counter()
    res = run_dmrg(fp, cfg)
    return res.energy, time.perf_counter() - t


def cmd_rank_study(args) -> int:
    timings = {}
    t = time.perf_counter()
    ints = _load(args.fcidump)
    fp = build_hamiltonian(ints)
    timings["build"] = time.perf_counter() - t
    jobs = [(fp, _dmrg_config(args, r)) for r in args.ranks]
    workers = _threads() or 1
    t = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_rank_job, jobs))
    else:
        results = [_rank_job(j) for j in jobs]
    timings["dmrg"] = time.perf_counter() - t
    cfg = _config_echo(jobs[0][1])
    cfg["max_rank"] = args.ranks
    manifest = _manifest("rank-study", [args.fcidump], cfg, args.seed, timings)
    _write_csv(args.out, manifest, ["rank", "energy", "seconds"],
               ([r, e, s] for r, (e, s) in zip(args.ranks, results)))
    return EXIT_OK


def cmd_exactdiag(args) -> int:
    timings = {}
    t = time.perf_counter()
    ints = _load(args.fcidump)
    timings["read"] = time.perf_counter() - t
    d = 2 * ints.n_spatial
    n = ints.n_electrons if args.nelec is None else args.nelec
    if not 0 <= n <= d:
        raise UsageError(f"--nelec must lie in 0..{d}, got {n}")
    if d > SPARSE_MAX_SITES:
        raise MemoryError(f"{d} spin orbitals exceeds the exact-diagonalization cap of {SPARSE_MAX_SITES}")
    t = time.perf_counter()
    op = sector_operator(hamiltonian_strings(ints), d, n)
    timings["build"] = time.perf_counter() - t
    t = time.perf_counter()
    e, _ = sector_ground_state(op, n)
    timings["solve"] = time.perf_counter() - t
    manifest = _manifest("exactdiag", [args.fcidump], {"nelec": n}, None, timings)
    _write_json(args.out, {
        "manifest": manifest,
        "n_electrons": n,
        "d": d,
        "sector_dimension": op.dimension,
        "energy": e + ints.e_core,
        "electronic_energy": e,
        "e_core": ints.e_core,
    })
    return EXIT_OK


def _train_job(cfg: TrainConfig):
    try:
        return train(cfg), None
    except TrainingDiverged as err:
        return err.result, str(err)


def cmd_simplexnet(args) -> int:
    base = dict(
        n_particles=args.n_particles,
        kappa=args.kappa,
        hidden=args.hidden,
        batch=args.batch,
        steps=args.steps,
        lr=args.lr,
        resample=args.resample,
        objective=args.objective,
        divergence=args.divergence,
    )
    configs = [TrainConfig(seed=args.seed + k, **base) for k in range(args.repeat)]
    workers = _threads() or 1
    t = time.perf_counter()
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outcomes = list(ex.map(_train_job, configs))
    else:
        outcomes = [_train_job(c) for c in configs]
    timings = {"train": time.perf_counter() - t}
    cfg = dict(base, hidden=list(args.hidden), repeat=args.repeat)
    manifest = _manifest("simplexnet", [], cfg, args.seed, timings)

    results = [r for r, _ in outcomes]
    failures = [msg for _, msg in outcomes if msg]
    length = min(len(r.energy) for r in results)
    cols = ("energy", "l2_error", "norm")
    if len(results) == 1:
        r = results[0]
        header = ["step", *cols]
        rows = ([k, r.energy[k], r.l2_error[k], r.norm[k]] for k in range(length))
    else:
        stacks = {c: np.array([getattr(r, c)[:length] for r in results]) for c in cols}
        header = ["step", *cols, *(c + "_std" for c in cols)]
        for k in range(len(results)):
            header += [f"{c}_seed{configs[k].seed}" for c in cols]
        rows = []
        for k in range(length):
            row = [k] + [stacks[c][:, k].mean() for c in cols] + [stacks[c][:, k].std() for c in cols]
            for j in range(len(results)):
                row += [stacks[c][j, k] for c in cols]
            rows.append(row)
    _write_csv(args.trace_out, manifest, header, rows)

    finals = np.array([r.energy[-1] for r in results])
    tests = np.array([r.test_energy for r in results])
    summary = {
        "manifest": manifest,
        "seeds": [c.seed for c in configs],
        "final_energy": finals.tolist(),
        "test_energy": tests.tolist(),
        "final_l2_error": [r.l2_error[-1] for r in results],
        "energy_mean": float(finals.mean()),
        "energy_rel_std": float(finals.std() / abs(finals.mean())) if finals.mean() else None,
        "diverged": failures,
    }
    if args.out is not None:
        _write_json(args.out, summary)
    if failures:
        raise TrainingDiverged("; ".join(failures), results)
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fockline", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def dmrg_flags(q):
        q.add_argument("--fcidump", required=True, help="FCIDUMP file, '-' for stdin")
        q.add_argument("--max-sweeps", type=_positive_int, default=50)
        q.add_argument("--tol", type=_positive_float, default=1e-8, help="relative energy change between sweeps")
        q.add_argument("--mu", type=_nonneg_float, default=None, help="penalty weight (default: estimated)")
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--init", choices=("reference", "random"), default="reference")
        q.add_argument("--warmup-factor", type=_nonneg_float, default=2.0,
                       help="warm-up rank as a multiple of the target rank; <= 1 disables")

    q = sub.add_parser("dmrg", help="single DMRG run")
    dmrg_flags(q)
    q.add_argument("--rank", type=_positive_int, default=6)
    q.add_argument("--out", default="-", help="result JSON, '-' for stdout")
    q.add_argument("--trace-out", default=None, help="trace CSV (default: next to --out)")
    q.set_defaults(func=cmd_dmrg)

    q = sub.add_parser("rank-study", help="DMRG energy for a list of ranks")
    dmrg_flags(q)
    q.add_argument("--ranks", type=_parse_ranks, default=_parse_ranks("1..8"), help="e.g. 1..8 or 2,4,6")
    q.add_argument("--out", default="-", help="CSV (rank, energy, seconds), '-' for stdout")
    q.set_defaults(func=cmd_rank_study)

    q = sub.add_parser("exactdiag", help="exact ground energy in one particle-number sector")
    q.add_argument("--fcidump", required=True, help="FCIDUMP file, '-' for stdin")
    q.add_argument("--nelec", type=int, default=None, help="electron count (default: from the file)")
    q.add_argument("--out", default="-", help="result JSON, '-' for stdout")
    q.set_defaults(func=cmd_exactdiag)

    q = sub.add_parser("simplexnet", help="train SimplexNet on the Poisson-Neumann toy problem")
    q.add_argument("--n-particles", type=_positive_int, default=2)
    q.add_argument("--kappa", type=_positive_int, default=1)
    q.add_argument("--hidden", type=_parse_hidden, default=(1000,), help="widths, e.g. 1000 or 500,500")
    q.add_argument("--batch", type=_positive_int, default=1000)
    q.add_argument("--steps", type=_nonneg_int, default=500)
    q.add_argument("--lr", type=_positive_float, default=1e-2)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--repeat", type=_positive_int, default=1, help="number of seeds, starting at --seed")
    q.add_argument("--resample", action="store_true", help="draw fresh samples every step")
    q.add_argument("--objective", choices=("rayleigh", "energy"), default="rayleigh")
    q.add_argument("--divergence", type=_positive_float, default=1e3, help="abort above this energy")
    q.add_argument("--trace-out", default="-", help="trace CSV, '-' for stdout")
    q.add_argument("--out", default=None, help="summary JSON, '-' for stdout")
    q.set_defaults(func=cmd_simplexnet)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        n = _threads()
        with threadpool_limits(limits=n) if n else nullcontext():
            return args.func(args)
    except UsageError as e:
        print(f"fockline: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"fockline: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FcidumpError as e:
        print(f"fockline: error: malformed FCIDUMP {args.fcidump}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MemoryError as e:
        print(f"fockline: error: resource cap exceeded: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (EigensolverError, TrainingDiverged, FloatingPointError, np.linalg.LinAlgError, ArpackError) as e:
        print(f"fockline: error: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"fockline: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
