import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridmc.matpower import parse_matpower

DATA = Path(__file__).parent / "data"


def case_path(name: str) -> Path:
    return DATA / f"{name}.m"


def load_case(name: str):
    return parse_matpower(case_path(name).read_text())


@pytest.fixture(scope="session")
def case14():
    return load_case("case14")


@pytest.fixture(scope="session")
def case30():
    return load_case("case30")


@pytest.fixture(scope="session")
def case118():
    return load_case("case118")


@pytest.fixture(scope="session")
def data_dir():
    return DATA
