import math
import warnings

import pytest

from hcexpand.mesh import Disk, GeometrySpec, Polygon, Rectangle, generate_mesh, thirty_six_inclusions

warnings.filterwarnings("ignore", category=DeprecationWarning, module="numba")


def regular_polygon(n, radius, center=(0.5, 0.5)):
    cx, cy = center
    return Polygon(tuple((cx + radius * math.cos(2 * math.pi * k / n), cy + radius * math.sin(2 * math.pi * k / n))
                         for k in range(n)))


@pytest.fixture(scope="session")
def disk_mesh():
    """Unit square with one centred disk, coarse."""
    return generate_mesh(GeometrySpec(Rectangle(0, 0, 1, 1), (Disk(0.5, 0.5, 0.2),), 1 / 16))


@pytest.fixture(scope="session")
def two_disk_mesh():
    return generate_mesh(GeometrySpec(Rectangle(0, 0, 1, 1), (Disk(0.3, 0.3, 0.12), Disk(0.7, 0.65, 0.15)), 1 / 20))


@pytest.fixture(scope="session")
def empty_mesh():
    return generate_mesh(GeometrySpec(Rectangle(0, 0, 1, 1), (), 0.125))


@pytest.fixture(scope="session")
def thirty_six_mesh():
    return generate_mesh(thirty_six_inclusions())


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
