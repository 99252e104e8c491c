import time
from dataclasses import dataclass

import pytest

from slowfast.models.epidemic import CASE1, CenterManifoldTable, build_center_manifold


@dataclass
class BuiltTable:
    table: CenterManifoldTable
    seconds: float
    path: str


@pytest.fixture(scope="session")
def epidemic_table(tmp_path_factory):
    """Default-resolution surface, built once per session; shared by both profiles."""
    t0 = time.perf_counter()
    table = build_center_manifold(CASE1)
    seconds = time.perf_counter() - t0
    path = str(tmp_path_factory.mktemp("table") / "center_manifold.csv")
    table.to_csv(path)
    return BuiltTable(table, seconds, path)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    """Store the outcome of acceptance criterion ``n`` for the summary block."""
    ACCEPTANCE[n] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
