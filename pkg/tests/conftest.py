import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridtokens.clock import SimClock  # noqa: E402
from gridtokens.issuer import IssuerService  # noqa: E402
from gridtokens.registry import export_directory, generate_configs, replay  # noqa: E402

from fixtures import lab_changes  # noqa: E402


@pytest.fixture
def clock():
    return SimClock()


@pytest.fixture(scope="session")
def lab_state():
    return replay(lab_changes())


@pytest.fixture
def issuer(lab_state, clock):
    return IssuerService(generate_configs(lab_state), export_directory(lab_state), clock=clock)


# -- acceptance bookkeeping ----------------------------------------------------------

from acceptance_log import RESULTS as ACCEPTANCE_RESULTS  # noqa: E402
from acceptance_log import ALL_ISSUERS, SESSION_LOG  # noqa: E402


@pytest.fixture(scope="session", autouse=True)
def session_log(tmp_path_factory):
    """Mirror every log record of the run into a file the confinement scan reads."""
    import logging

    path = tmp_path_factory.mktemp("logs") / "session.log"
    handler = logging.FileHandler(path)
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    root = logging.getLogger()
    old = root.level
    root.addHandler(handler)
    root.setLevel(logging.DEBUG)
    logging.getLogger("gridtokens").setLevel(logging.DEBUG)
    SESSION_LOG.append(path)
    original_init = IssuerService.__init__

    def tracking_init(self, *args, **kwargs):
        original_init(self, *args, **kwargs)
        ALL_ISSUERS.append(self)

    IssuerService.__init__ = tracking_init
    yield path
    IssuerService.__init__ = original_init
    root.removeHandler(handler)
    root.setLevel(old)
    handler.close()


def pytest_collection_modifyitems(items):
    # the confinement scan inspects everything the rest of the run produced
    last = [i for i in items if i.get_closest_marker("run_last")]
    items[:] = [i for i in items if not i.get_closest_marker("run_last")] + last


def pytest_configure(config):
    config.addinivalue_line("markers", "run_last: run after every other collected test")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, line = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {line}")
