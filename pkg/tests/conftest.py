import re
import time
import warnings
from collections import defaultdict

import pytest

from potgrid.counterexample import UncertifiedLayerWarning, build_counterexample

_ACCEPT = re.compile(r"test_acceptance\.py::test_criterion_(\d+)([a-z]?)_")
_results = defaultdict(dict)


def pytest_runtest_logreport(report):
    m = _ACCEPT.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results[int(m.group(1))][m.group(2) or "-"] = report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_results):
        parts = _results[k]
        ok = all(parts.values())
        failed = sorted(p for p, v in parts.items() if not v and p != "-")
        note = f" (failed parts: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}{note}")


@pytest.fixture(scope="session")
def segment_build():
    """Segment S on the 256^2 builder grid, four layers."""
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncertifiedLayerWarning)
        rep = build_counterexample("segment", res=256, nu_max=4)
    rep.elapsed = time.perf_counter() - t0
    return rep


@pytest.fixture(scope="session")
def short_cap_build():
    """One layer inside a short cap, where the fit certifies."""
    return build_counterexample("segment", res=256, nu_max=1, R=1.25)
