from __future__ import annotations

import warnings
from pathlib import Path

import pytest

from junction_asym.experiments import Workbench
from junction_asym.geometry import PlateDomain
from junction_asym.mesh import mesh_plate, mesh_symmetric_disk

ROOT = Path(__file__).resolve().parents[1]
STANDARD = ROOT / "configs" / "standard_j1.toml"

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_configure(config):
    warnings.filterwarnings("ignore", message="anchor is not a mesh vertex")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def standard_workbench() -> Workbench:
    return Workbench.from_file(STANDARD)


@pytest.fixture(scope="session")
def unit_disk_centre():
    return PlateDomain(kind="disk", radius=1.0, anchors=((0.0, 0.0),))


@pytest.fixture(scope="session")
def disk_mesh_003(unit_disk_centre):
    return mesh_plate(unit_disk_centre, 0.03)


@pytest.fixture(scope="session")
def symmetric_disk_005():
    return mesh_symmetric_disk(1.0, 0.05)


@pytest.fixture(scope="session")
def fast_config(tmp_path_factory) -> Path:
    """The standard configuration with coarse numerics, for exercising the command line."""
    text = STANDARD.read_text()
    for key, val in (("plate_mesh_size", "0.05"), ("reference_level", "0"), ("layer_level", "0")):
        lines = [f"{key} = {val}" if ln.split("=")[0].strip() == key else ln for ln in text.splitlines()]
        text = "\n".join(lines) + "\n"
    path = tmp_path_factory.mktemp("cfg") / "fast.toml"
    path.write_text(text)
    return path
