import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.special import jn_zeros

from conftest import disk_mesh, sector_mesh
from sectorpass.fem import (Field, SolverError, energy, energy_and_gradient, fem_space, grad_energy, h1_norm,
                            lambda1, nonlinear_terms, poisson_solve, quadrature_rule, solve_spd, stiffness_full,
                            zero_extension)
from sectorpass.geometry import MeshError, TriMesh, mesh_sector, sector
from sectorpass.nonlinearity import Nonlinearity, NonlinearityRangeError

CANON = Nonlinearity()
ZERO = Nonlinearity("zero")


def bump(mesh, amp=0.6, width=0.3):
    s = sector(mesh.m)
    r2 = ((mesh.nodes - s.incenter) ** 2).sum(axis=1)
    return Field(mesh, amp * np.exp(-r2 / (width * s.inradius) ** 2))


def random_field(mesh, rng, amp=0.5):
    # smooth random field: a few random Gaussian bumps
    s = sector(mesh.m)
    v = np.zeros(mesh.n_nodes)
    for _ in range(4):
        c = s.incenter + rng.uniform(-0.5, 0.5, 2) * s.inradius
        v += rng.uniform(-1, 1) * np.exp(-((mesh.nodes - c) ** 2).sum(axis=1) / (0.4 * s.inradius) ** 2)
    return Field(mesh, amp * v / np.abs(v).max())


@pytest.mark.parametrize("level", [0, 1, 2])
def test_quadrature_exact_degree5(level):
    bary, wts = quadrature_rule(level)
    assert wts.sum() == pytest.approx(1.0, abs=1e-15)
    # int over the reference simplex of l1^a l2^b l3^c = a! b! c! 2! / (a+b+c+2)!, normalised by area 1/2
    for a, b, c in [(5, 0, 0), (2, 2, 1), (3, 1, 1), (4, 1, 0), (0, 0, 0), (1, 2, 2)]:
        exact = 2 * math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 2)
        got = (wts * bary[:, 0] ** a * bary[:, 1] ** b * bary[:, 2] ** c).sum()
        assert got == pytest.approx(exact, rel=1e-13)


def test_stiffness_symmetric_and_row_sums():
    mesh = sector_mesh(2)
    Kf = stiffness_full(mesh)
    assert abs(Kf - Kf.T).max() == 0.0
    assert np.abs(np.asarray(Kf.sum(axis=1))).max() < 1e-12
    K = fem_space(mesh).K
    assert abs(K - K.T).max() == 0.0


def test_patch_test_linear_reproduction():
    # for linear u, (K u)_i = int_boundary (du/dn) phi_i exactly: zero at interior nodes, and at a
    # boundary node the sum over its boundary edges of (grad u . n) |e| / 2
    mesh = sector_mesh(1)
    Kf = stiffness_full(mesh)
    grad = np.array([0.7, -1.3])
    r = Kf @ (mesh.nodes @ grad)
    assert np.abs(r[~mesh.boundary]).max() < 1e-12
    t = mesh.triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(directed, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    outer = directed[counts[inv.ravel()] == 1]
    d = mesh.nodes[outer[:, 1]] - mesh.nodes[outer[:, 0]]
    # counterclockwise triangles: the outward normal of a boundary edge a->b is (dy, -dx) / |d|
    flux = 0.5 * (d[:, 1] * grad[0] - d[:, 0] * grad[1])
    expected = np.zeros(mesh.n_nodes)
    np.add.at(expected, outer[:, 0], flux)
    np.add.at(expected, outer[:, 1], flux)
    assert np.abs(r - expected).max() < 1e-12


def test_degenerate_triangle_named():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 3], [0, 1, 2]])
    mesh = TriMesh(nodes, tris, np.array([True, True, True, True]), 1.0)
    with pytest.raises(MeshError, match="triangle 1"):
        fem_space(mesh)


def test_energy_trivial_cases():
    mesh = sector_mesh(1)
    zero = Field.zeros(mesh)
    assert energy(CANON, zero) == 0.0
    assert np.array_equal(grad_energy(CANON, zero).values, np.zeros(mesh.n_nodes))
    u = bump(mesh)
    assert energy(ZERO, u) == pytest.approx(0.5 * h1_norm(u) ** 2, rel=1e-14)
    _, g = energy_and_gradient(ZERO, u)
    space = fem_space(mesh)
    assert np.array_equal(g, space.K @ u.values[space.free])
    assert h1_norm(zero) == 0.0


def test_energy_split_identity():
    mesh = sector_mesh(1)
    u = bump(mesh)
    Fint, _ = nonlinear_terms(CANON, fem_space(mesh), u.values, want_load=False)
    assert energy(CANON, u) + Fint == pytest.approx(0.5 * h1_norm(u) ** 2, rel=1e-14)


def test_gradient_finite_difference_order():
    mesh = sector_mesh(1)
    rng = np.random.default_rng(7)
    space = fem_space(mesh)
    orders = []
    for _ in range(20):
        u = random_field(mesh, rng, amp=0.8)
        v = random_field(mesh, rng, amp=1.0)
        _, g = energy_and_gradient(CANON, u)
        exact = float(g @ v.values[space.free])
        errs = []
        for h in (4e-2, 2e-2):
            fd = (energy(CANON, u + h * v) - energy(CANON, u - h * v)) / (2 * h)
            errs.append(abs(fd - exact))
        orders.append(math.log2(errs[0] / errs[1]))
    assert min(orders) >= 1.9


def test_range_error_not_clamped():
    mesh = sector_mesh(1)
    u = bump(mesh, amp=8.0)
    with pytest.raises(NonlinearityRangeError):
        energy(CANON, u)


def test_zero_extension_isometry():
    mesh = sector_mesh(2)
    disk = disk_mesh(2)
    u = bump(mesh)
    for k in range(4):
        assert h1_norm(zero_extension(u, disk, k)) == pytest.approx(h1_norm(u), rel=1e-12)


def test_solve_spd():
    K = fem_space(sector_mesh(1)).K
    assert np.array_equal(solve_spd(K, np.zeros(K.shape[0])), np.zeros(K.shape[0]))
    b = np.random.default_rng(3).normal(size=K.shape[0])
    x = solve_spd(K, b)
    assert np.linalg.norm(K @ x - b) <= 1e-10 * np.linalg.norm(b)
    with pytest.raises(SolverError, match="last residual"):
        solve_spd(K, b, maxiter=2)
    # deterministic
    assert np.array_equal(solve_spd(K, b), x)


def test_lambda1_monotone_toward_bessel_zero():
    j11 = jn_zeros(1, 1)[0] ** 2
    coarse = lambda1(mesh_sector(sector(1), 0.08))
    fine = lambda1(mesh_sector(sector(1), 0.04))
    assert coarse > fine > j11
    assert fine == pytest.approx(j11, rel=0.03)


def test_lambda1_needs_free_nodes():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = TriMesh(nodes, np.array([[0, 1, 2]]), np.ones(3, dtype=bool), 1.0)
    with pytest.raises(ValueError):
        lambda1(mesh)


def test_manufactured_poisson_small_error():
    disk = disk_mesh(1)
    u = poisson_solve(disk, lambda x: np.ones(len(x)))
    exact = (1 - (disk.nodes**2).sum(axis=1)) / 4
    assert np.abs(u.values - exact).max() < 2e-3
    assert sp.issparse(fem_space(disk).K)
