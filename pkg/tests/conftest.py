import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from meanfield.lattice import build_lattice, model_from_arrays  # noqa: E402


def random_model(rng, d, complex_kinetic=False):
    """Random Hermitian one-body part and a random even interaction."""
    h = rng.standard_normal((d, d))
    if complex_kinetic:
        h = h + 1j * rng.standard_normal((d, d))
    h = 0.5 * (h + h.conj().T)
    v = rng.standard_normal(d)
    v = 0.5 * (v + v[(-np.arange(d)) % d])
    return model_from_arrays(h, v)


def random_orbital(rng, d):
    phi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return phi / np.linalg.norm(phi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def ring4():
    return build_lattice(4, 4.0, "cosine amplitude=0.5", "cosine amplitude=1")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
