import functools
import warnings

import pytest

from sectorpass.geometry import build_disk_mesh, mesh_sector, sector
from sectorpass.mpa import SolverOptions, mountain_pass
from sectorpass.nonlinearity import Nonlinearity

COARSE_H = 0.05


@functools.lru_cache(maxsize=None)
def sector_mesh(m, h=COARSE_H, focus_levels=4):
    return mesh_sector(sector(m), h, focus_levels=focus_levels)


@functools.lru_cache(maxsize=None)
def disk_mesh(m, h=COARSE_H, focus_levels=4):
    return build_disk_mesh(m, sector_mesh(m, h, focus_levels))


@functools.lru_cache(maxsize=None)
def solved(m, h=COARSE_H, lam=1.0, mode="mpa", focus_levels=4, tol=1e-6):
    nl = Nonlinearity("canonical", lam, truncated=True)
    return mountain_pass(nl, sector_mesh(m, h, focus_levels), SolverOptions(mode=mode, tol=tol))


@pytest.fixture(autouse=True)
def _quiet_quad():
    # scipy's quad warns about roundoff on the steep exponential integrands even when
    # the returned value meets our own tolerance check
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*roundoff error.*")
        yield


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
