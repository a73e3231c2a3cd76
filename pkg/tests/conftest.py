import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

from xpolab.dcmdp import TabularPolicy  # noqa: E402
from xpolab.harness.instances import random_tabular  # noqa: E402

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, name): numbered acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "_acceptance", None)
    if marker is None:
        return
    n, name = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _ACCEPTANCE.get(n, (name, "PASS"))[1]
        status = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
        _ACCEPTANCE[n] = (name, status)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep._acceptance = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        name, status = _ACCEPTANCE[n]
        terminalreporter.write_line(f"{status} {n:>2}. {name}")


# -- shared instances ---------------------------------------------------------------


def suite_instances(n=25, seed=1234):
    """Random tabular instances with H <= 4, |S_h| <= 5, |A| <= 4."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        H = int(rng.integers(1, 5))
        A = int(rng.integers(2, 5))
        out.append(random_tabular(states=5, actions=A, horizon=H, seed=1000 + i, beta=float(rng.uniform(0.1, 1.0))))
    return out


def random_policy(rng, mdp) -> TabularPolicy:
    return TabularPolicy(rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states))


@pytest.fixture(scope="session")
def suite():
    return suite_instances()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
