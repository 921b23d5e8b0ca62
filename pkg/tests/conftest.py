import warnings

import numpy as np
import pytest

from parc.models import dubins_system
from parc.polytope import HPolytope
from parc.pwa import RolloutWarning
from parc.scenarios import turtlebot_scenario


def random_polytope(rng, n, m=None, radius=1.0):
    """Bounded polytope containing the ball of radius ``radius/2`` around 0."""
    m = 3 * n if m is None else m
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    b = radius * rng.uniform(0.5, 1.0, m)
    box = HPolytope.box(-3 * radius * np.ones(n), 3 * radius * np.ones(n))
    return HPolytope(np.vstack([A, box.A]), np.concatenate([b, box.b]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def turtlebot():
    sc = turtlebot_scenario()
    system = dubins_system(sc.domain(), 0.5, sc.tf)
    return sc, system


@pytest.fixture(autouse=True)
def _quiet_rollouts():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RolloutWarning)
        yield


@pytest.fixture(scope="session")
def turtlebot_expert(turtlebot):
    from parc.bras import find_expert

    sc, system = turtlebot
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RolloutWarning)
        x0 = find_expert(system, sc, sc.p0, 512, 0)
    assert x0 is not None
    return x0


@pytest.fixture(scope="session")
def turtlebot_result(turtlebot, turtlebot_expert):
    from parc.bras import compute_bras

    sc, system = turtlebot
    return compute_bras(system, sc, turtlebot_expert, tighten_other=True, restrict_regions=True)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""

    def record(name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
