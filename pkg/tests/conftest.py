import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@st.composite
def simplex_points(draw, m):
    raw = draw(st.lists(st.floats(0.0, 1.0), min_size=m, max_size=m))
    w = np.asarray(raw) + 1e-3
    return w / w.sum()


@st.composite
def metric_spaces(draw, min_m=1, max_m=5):
    """Finite metrics from points in the plane, so the triangle inequality holds."""
    from meanfield_lab.strategy_space import PureStrategySpace

    m = draw(st.integers(min_m, max_m))
    pts = draw(
        st.lists(
            st.tuples(st.floats(0, 3), st.floats(0, 3)), min_size=m, max_size=m, unique=True
        )
    )
    pts = np.asarray(pts)
    dist = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    off = ~np.eye(m, dtype=bool)
    if m > 1 and dist[off].min() < 1e-2:
        dist = dist + 0.05 * off
    return PureStrategySpace(tuple(f"u{i}" for i in range(m)), dist)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance reporting

_CRITERIA = pytest.StashKey[list]()
_CALL_REPORT = pytest.StashKey[pytest.TestReport]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.stash[_CALL_REPORT] = rep


@pytest.fixture
def criterion(request):
    """Collects one summary line per acceptance criterion.

    Tests write a short ``detail`` string into the yielded dict; the line is
    printed in the terminal summary with the pass/fail outcome.
    """
    marker = request.node.get_closest_marker("acceptance")
    number, title = marker.args
    record = {"detail": ""}
    yield record
    rep = request.node.stash.get(_CALL_REPORT, None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    lines = request.config.stash.setdefault(_CRITERIA, [])
    lines.append((number, f"criterion {number:>2} {status}  {title}  {record['detail']}".rstrip()))


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
