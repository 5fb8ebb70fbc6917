import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_body(rng, d, n, radius=None):
    """Random tangent halfspaces around a ball, clipped to Q0."""
    from polymem.geometry import Polytope, inner_radius0
    r = inner_radius0(d) / 2 if radius is None else radius
    U = rng.normal(size=(n, d))
    U /= np.linalg.norm(U, axis=1)[:, None]
    return Polytope(U, np.full(n, r)).intersect(Polytope.cube(d))


# Acceptance verdicts, printed together at the end of the run.
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
