import numpy as np
import pytest

from cem_perforated.coarse import build_coarse_grid, kappa_tilde, layers_for, oversample
from cem_perforated.errors import NonNested
from cem_perforated.fem import DofMap
from cem_perforated.geometry import triangulate

from conftest import make_spec


def test_counting():
    grid = build_coarse_grid(triangulate(make_spec(), 8), 4)
    assert grid.n_blocks == 16 and grid.n_vertices == 25
    assert all(len(t) == 8 for t in grid.block_triangles)
    assert grid.H == 0.25


def test_non_nested(square16):
    with pytest.raises(NonNested):
        build_coarse_grid(square16, 3)


def test_partition_of_unity(holey32):
    grid = build_coarse_grid(holey32, 4)
    assert np.abs(grid.hats.sum(axis=0) - 1).max() <= 1e-12


def test_fully_perforated_block_is_empty():
    # the disk covers block [0.25, 0.5]^2 (half diagonal 0.177)
    mesh = triangulate(make_spec((0.375, 0.375, 0.19)), 16)
    grid = build_coarse_grid(mesh, 4)
    assert grid.n_blocks == 15
    assert list(grid.empty_lattice_blocks) == [1 * 4 + 1]
    assert grid.compact_of_lattice[5] == -1


def test_kappa_tilde_values(square16):
    grid = build_coarse_grid(square16, 4)
    H = grid.H
    centre = kappa_tilde(grid, [[0.125, 0.375]])
    corner = kappa_tilde(grid, [[0.25, 0.5]])
    assert centre[0] == pytest.approx(2 / H**2, rel=1e-12)
    assert corner[0] == pytest.approx(4 / H**2, rel=1e-12)
    fine = build_coarse_grid(square16, 8)
    pts = np.random.default_rng(0).random((20, 2)) * 0.25  # same local coords when H halves
    assert np.allclose(kappa_tilde(fine, pts / 2), 4 * kappa_tilde(grid, pts), rtol=1e-10)


def test_kappa_tilde_is_sum_of_hat_gradients(square16):
    # brute force with finite differences of the hats through their bilinear formula
    grid = build_coarse_grid(square16, 4)
    pts = np.random.default_rng(1).random((30, 2))
    nb = 4

    def hat_grad(j, p):
        vx, vy = j % (nb + 1), j // (nb + 1)
        x, y = p * nb
        if abs(x - vx) >= 1 or abs(y - vy) >= 1:
            return np.zeros(2)
        wx, wy = 1 - abs(x - vx), 1 - abs(y - vy)
        return nb * np.array([-np.sign(x - vx) * wy, -np.sign(y - vy) * wx])

    oracle = [sum(hat_grad(j, p) @ hat_grad(j, p) for j in range(25)) for p in pts]
    assert np.allclose(kappa_tilde(grid, pts), oracle, rtol=1e-12)


def test_oversample_counts(square16):
    grid = build_coarse_grid(square16, 4)
    idx = DofMap.from_mesh(square16).index
    interior = int(grid.compact_of_lattice[1 * 4 + 1])
    assert len(oversample(grid, idx, interior, 1).blocks) == 9
    assert len(oversample(grid, idx, 0, 1).blocks) == 4
    assert len(oversample(grid, idx, 0, 0).blocks) == 1


def test_oversample_saturates(holey32):
    grid = build_coarse_grid(holey32, 4)
    dofs = DofMap.from_mesh(holey32)
    region = oversample(grid, dofs.index, 5, 4)
    assert len(region.blocks) == grid.n_blocks
    assert np.array_equal(region.free_dofs, np.arange(dofs.n_free))


def test_oversample_cut_boundary_is_fixed(square16):
    grid = build_coarse_grid(square16, 4)
    dofs = DofMap.from_mesh(square16)
    region = oversample(grid, dofs.index, 0, 0)
    # block [0,1/4]^2: free nodes strictly inside, off the x=0 / y=0 Dirichlet edges
    xy = square16.nodes[dofs.free_nodes[region.free_dofs]]
    assert len(xy) == 9
    assert np.all((xy > 0) & (xy < 0.25))


def test_layers_rule():
    assert layers_for("log", 1 / 8) == 3
    assert layers_for("log", 1 / 32) == 5
    assert layers_for(4, 1 / 32) == 4
