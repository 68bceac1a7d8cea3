import json
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).resolve().parent.parent / "data"

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def references() -> dict:
    return json.loads((DATA / "references.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_integrals(n, rng, n_electrons=2, ms2=0, e_core=0.0):
    """Random real integrals with the full 8-fold symmetry."""
    from fockline.fcidump import MolecularIntegrals

    h = rng.standard_normal((n, n))
    h = 0.5 * (h + h.T)
    g = rng.standard_normal((n, n, n, n))
    g = g + g.transpose(1, 0, 2, 3)
    g = g + g.transpose(0, 1, 3, 2)
    g = 0.125 * (g + g.transpose(2, 3, 0, 1))
    return MolecularIntegrals(h, g, e_core=e_core, n_electrons=n_electrons, ms2=ms2)


@pytest.fixture
def random_integrals():
    return make_integrals


def make_symmetric_tto(d, rank, rng, mode=2):
    """Random symmetric operator ``(W + W^T) / 2`` with bond rank at most ``2 * rank``."""
    from fockline.tto import TensorTrainOperator, add, scale, transpose

    ranks = [1] + [rank] * (d - 1) + [1]
    w = TensorTrainOperator([rng.standard_normal((ranks[j], mode, mode, ranks[j + 1])) for j in range(d)])
    return scale(add(w, transpose(w)), 0.5)


@pytest.fixture
def random_symmetric_tto():
    return make_symmetric_tto
