import numpy as np
import pytest

from lbmsolid.fields import Material
from lbmsolid.geometry import Geometry, build_lattice

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion."""

    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return _report


@pytest.fixture(scope="session")
def unit_material():
    return Material.from_wave_speeds(1.0, 1.0 / np.sqrt(3.0), 1.0)


@pytest.fixture(scope="session")
def square11():
    return build_lattice(Geometry(1.0, 1.0), 0.1)


@pytest.fixture(scope="session")
def square21():
    return build_lattice(Geometry(1.0, 1.0), 0.05)
