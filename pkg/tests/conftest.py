import numpy as np
import pytest
from hypothesis import settings

from byzsim import _kernels
from byzsim.core import Purpose, derive_stream
from byzsim.data import synth_logreg

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(params=[b.NAME for b in _kernels.available_backends()])
def backend(request):
    """Run the test once per available kernel backend."""
    previous = _kernels.active()
    _kernels.use(request.param)
    yield request.param
    _kernels.use(previous)


@pytest.fixture(scope="session")
def small_data():
    return synth_logreg(400, 8, 1.0, derive_stream(11, 0, 0, Purpose.SYNTH))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request, capsys):
    """Print one ``CRITERION <n>: PASS|FAIL|SKIP`` line past output capture and keep it for the summary."""
    def _report(n, ok, detail):
        status = "PASS" if ok is True else ("SKIP" if ok is None else "FAIL")
        line = f"CRITERION {n}: {status} [{_kernels.active().NAME}] {detail}"
        with capsys.disabled():
            print(f"\n{line}")
        request.config.stash.setdefault(_ACCEPTANCE, []).append(line)
        return line
    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
