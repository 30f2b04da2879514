import numpy as np
import pytest

from cem_perforated.basis import BasisBuilder
from cem_perforated.coarse import build_coarse_grid, kappa_tilde
from cem_perforated.fem import assemble_system
from cem_perforated.geometry import (
    DiskPerforation,
    PerforatedDomainSpec,
    generate_perforations,
    triangulate,
)
from cem_perforated.spectral import build_aux_space


def make_spec(*disks, clip=False):
    return PerforatedDomainSpec(tuple(DiskPerforation(*d) for d in disks), allow_boundary_clip=clip)


@pytest.fixture(scope="session")
def square16():
    return triangulate(make_spec(), 16)


@pytest.fixture(scope="session")
def holey32():
    spec = generate_perforations(6, (0.03, 0.05), 0.01, seed=3)
    return triangulate(spec, 32)


@pytest.fixture(scope="session")
def small_setup(holey32):
    """Perforated 32x32 mesh, 4x4 coarse blocks, l=3, with a random source."""
    rng = np.random.default_rng(0)
    f = rng.uniform(0.5, 1.5, holey32.n_triangles)
    system = assemble_system(holey32, f)
    grid = build_coarse_grid(holey32, 4)
    aux = build_aux_space(grid, kappa_tilde(grid), 3)
    return BasisBuilder(system, grid, aux)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    lines = test_acceptance.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
