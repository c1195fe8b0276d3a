import numpy as np
import pytest

from tatonnement.equilibrium import solve_equilibrium
from tatonnement.generators import gen_random_db
from tatonnement.market import potentials


def solved(m, tol=1e-12):
    pot = potentials(m)
    return pot, solve_equilibrium(m, pot, tol=tol)


def random_markets(count, n_range=(3, 10), deltas=(0.25, 0.5, 1.0, 2.0), seed0=0, density=0.45):
    """Deterministic batch of random circulation-free markets."""
    rng = np.random.default_rng(seed0)
    out = []
    for k in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        out.append(gen_random_db(n, density, seed=seed0 + k, delta=deltas[k % len(deltas)]))
    return out


@pytest.fixture(scope="session")
def market_batch():
    return random_markets(20)


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE: dict = {}


def pytest_runtest_setup(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.user_properties += [("criterion", mark.args[0]), ("title", mark.args[1])]


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    entry = _ACCEPTANCE.setdefault(crit, {"outcome": "passed", "detail": ""})
    entry["detail"] = dict(report.user_properties).get("detail", entry["detail"])
    entry["title"] = dict(report.user_properties).get("title", "")
    if report.failed:
        entry["outcome"] = "failed"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[crit]
        status = "PASS" if e["outcome"] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {crit:2d} [{status}] {e['title']}: {e['detail']}")
