import sys
from pathlib import Path

import pytest

from chargeloc.instance import load_instance
from chargeloc.solver import get_backend

DATA = Path(__file__).parent / "data"
sys.path.insert(0, str(Path(__file__).parent))


def backend_available(name: str) -> bool:
    try:
        return get_backend(name).available()
    except Exception:
        return False


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def tiny():
    return load_instance(DATA / "tiny.json")


@pytest.fixture(scope="session")
def grid3():
    return load_instance(DATA / "grid3x3_seed1.json")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in results:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
