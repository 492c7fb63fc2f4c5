import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_knots(rng, n_interior, lo=0.0, hi=1.0, min_gap=0.02):
    """Full-multiplicity cubic knots with distinct random interior knots."""
    from nnpspline.bspline import KnotVector

    while True:
        inner = np.sort(rng.uniform(lo, hi, n_interior))
        pts = np.r_[lo, inner, hi]
        if n_interior == 0 or np.min(np.diff(pts)) > min_gap * (hi - lo):
            return KnotVector(np.r_[[lo] * 3, pts, [hi] * 3])


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line with runtime for an acceptance criterion.

    The test body runs inside ``with acceptance(name, limit):``; the line is
    collected even when an assertion fails and is echoed in the summary.
    """
    import contextlib
    import time

    @contextlib.contextmanager
    def record(name, limit):
        t0 = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            dt = time.perf_counter() - t0
            ok = ok and dt < limit
            line = f"[{'PASS' if ok else 'FAIL'}] {name} ({dt:.2f} s, limit {limit:g} s)"
            ACCEPTANCE_LINES.append(line)
            print(line)
        assert dt < limit, f"{name} took {dt:.1f} s, limit {limit:g} s"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
