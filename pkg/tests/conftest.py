import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import batchscene  # noqa: E402
from batchscene.config import load_config  # noqa: E402

CONFIG_DIR = Path(batchscene.__file__).parent / "configs"


def config_path(name: str) -> Path:
    return CONFIG_DIR / f"{name}.yaml"


@pytest.fixture(scope="session")
def mid_config():
    return load_config(config_path("mid"))


@pytest.fixture(scope="session")
def hard_config():
    return load_config(config_path("hard"))


@pytest.fixture(scope="session")
def hard_plus_config():
    return load_config(config_path("hard_plus"))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
