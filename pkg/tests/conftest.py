import numpy as np
import pytest
from hypothesis import strategies as st

from statbeam.channel import BeamformerSet, random_spectrum_covariance, random_unit_vector


def random_hermitian(m, rng):
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return 0.5 * (a + a.conj().T)


def random_pd(m, rng, lo=0.1, hi=3.0):
    return random_spectrum_covariance(np.sort(rng.uniform(lo, hi, m))[::-1], rng)


def random_ws(m, rng, users=None):
    return BeamformerSet.from_list([random_unit_vector(m, rng) for _ in range(users or m)])


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request, capsys):
    """Record (and print) one ``[PASS]/[FAIL]`` line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        return line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
