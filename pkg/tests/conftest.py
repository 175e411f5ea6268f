import numpy as np
import pytest
from hypothesis import settings

from radiomap.scene import AccessPoint, Bounds, Environment, Obstacle

settings.register_profile("default", deadline=None, max_examples=60)
settings.register_profile("fast", deadline=None, max_examples=10)
settings.load_profile("default")

LAMBDA = 3e8 / 2.4e9

_criteria: dict[int, list[tuple[bool, str]]] = {}
_invariants: dict[str, bool] = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict, print it, then assert it."""
    def record(n: int, ok: bool, detail: str):
        _criteria.setdefault(n, []).append((bool(ok), detail))
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"
    return record


def pytest_runtest_logreport(report):
    if "invariant" in report.keywords and (report.when == "call" or report.failed):
        _invariants[report.nodeid] = _invariants.get(report.nodeid, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(set(_criteria) | {8}):
        checks = _criteria.get(n, [])
        details = [d for _, d in checks]
        ok = all(o for o, _ in checks)
        if n == 8:
            if _invariants:
                bad = [k for k, v in _invariants.items() if not v]
                ok = ok and not bad and bool(checks)
                details.append(f"invariant tests {len(_invariants) - len(bad)}/{len(_invariants)} passed"
                               + (f" (failed: {', '.join(b.split('::')[-1] for b in bad)})" if bad else ""))
            else:
                ok = False
                details.append("invariant tests not run in this session")
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  " + "; ".join(details))


@pytest.fixture
def open_room():
    """16 x 8 room, four corner APs, no walls at all (pure LOS)."""
    aps = [AccessPoint((0.25, 0.25), np.radians(45), 8, LAMBDA / 2),
           AccessPoint((15.75, 0.25), np.radians(135), 8, LAMBDA / 2),
           AccessPoint((15.75, 7.75), np.radians(225), 8, LAMBDA / 2),
           AccessPoint((0.25, 7.75), np.radians(315), 8, LAMBDA / 2)]
    return Environment(aps, [], Bounds(0, 0, 16, 8))


@pytest.fixture
def walled_room(open_room):
    walls = [Obstacle((0, 0), (16, 0), 0.5), Obstacle((16, 0), (16, 8), 0.5),
             Obstacle((16, 8), (0, 8), 0.5), Obstacle((0, 8), (0, 0), 0.5),
             Obstacle((8, 2), (8, 6), 0.8)]
    return Environment(open_room.aps, walls, open_room.bounds)
