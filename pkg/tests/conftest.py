import numpy as np
import pytest

from honeystrain.dirac_point import analyze_dirac_point
from honeystrain.lattice import build_lattice
from honeystrain.media import make_modulated_medium, make_reference_medium


_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical experiment")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])


@pytest.fixture
def acceptance_log(capsys):
    """Record (and echo) one PASS/FAIL line for an acceptance criterion."""
    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[n] = line
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


@pytest.fixture(scope="session")
def lattice():
    return build_lattice(1.0)


@pytest.fixture(scope="session")
def reference_medium(lattice):
    return make_reference_medium(lattice, 10.0)


@pytest.fixture(scope="session")
def anisotropic_medium(lattice):
    return make_modulated_medium(lattice, 10.0, 0.2, 0.3)


@pytest.fixture(scope="session")
def reference_dirac(reference_medium):
    dpd, report, info = analyze_dirac_point(reference_medium, M=12)
    return dpd, report, info


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
