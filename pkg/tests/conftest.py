import numpy as np
import pytest

from haartest.rng import RngStream
from haartest.samplers import SamplerSpec, draw_sample


def rotation3(axis, angle):
    """Rodrigues rotation about ``axis`` by ``angle``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def block_rotation(angles, odd=True):
    """Block-diagonal rotation with the given angles (and a trailing 1 if odd)."""
    m = len(angles)
    n = 2 * m + (1 if odd else 0)
    g = np.eye(n)
    for i, t in enumerate(angles):
        c, s = np.cos(t), np.sin(t)
        g[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = [[c, -s], [s, c]]
    return g


def haar_sample(dim, N, seed):
    return draw_sample(SamplerSpec("haar", dim), N, RngStream(seed))


@pytest.fixture
def rng():
    return RngStream(12345)


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion in the summary
# ---------------------------------------------------------------------------

_CRITERIA: dict[int, list[tuple[str, bool, list[str]]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        details = [v for k, v in item.user_properties if k == "criterion_detail"]
        _CRITERIA.setdefault(marker.args[0], []).append((item.name, rep.passed, details))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        runs = _CRITERIA[number]
        verdict = "PASS" if all(ok for _, ok, _ in runs) else "FAIL"
        tr.write_line(f"criterion {number:2d}: {verdict}")
        for name, ok, details in runs:
            if not details:
                tr.write_line(f"    {name}: {'passed' if ok else 'failed'}")
            for d in details:
                tr.write_line(f"    {name}: {d}")
