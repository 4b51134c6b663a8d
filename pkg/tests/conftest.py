import numpy as np
import pytest

from tfim_entanglement.hamiltonian import HamiltonianOperator
from tfim_entanglement.lattice import LatticeSpec, build_lattice


def ring(n, lam, sector="full"):
    return HamiltonianOperator(lam, build_lattice(LatticeSpec((n,))), n, sector)


def basis_state(n, b):
    v = np.zeros(1 << n)
    v[b] = 1.0
    return v


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
