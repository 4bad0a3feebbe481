import numpy as np
import pytest

from conftest import sector_mesh, solved
from sectorpass.fem import Field, energy, energy_and_gradient, fem_space, h1_norm
from sectorpass.geometry import sector
from sectorpass.mpa import (MountainPassError, NoRidgeError, SolverOptions, default_bump, find_endpoint,
                            mountain_geometry_probe, mountain_pass, residual_check, residual_vector)
from sectorpass.nonlinearity import Nonlinearity

TRUNC = Nonlinearity(truncated=True)


def mirror(u):
    mesh = u.mesh
    key = {tuple(np.round(x, 12)): i for i, x in enumerate(mesh.nodes)}
    perm = np.array([key[tuple(np.round(x * [-1.0, 1.0], 12) + 0.0)] for x in mesh.nodes])
    return Field(mesh, u.values[perm])


def test_default_bump_support():
    mesh = sector_mesh(1)
    phi = default_bump(mesh)
    s = sector(1)
    far = np.hypot(*(mesh.nodes - s.incenter).T) >= s.inradius / 2
    assert (phi.values >= 0).all() and phi.values.max() > 0
    assert (phi.values[far] == 0).all()


def test_find_endpoint():
    mesh = sector_mesh(1)
    t0, e = find_endpoint(TRUNC, mesh)
    assert energy(TRUNC, e) < 0
    r, _ = mountain_geometry_probe(TRUNC, mesh, n_dirs=20)
    assert h1_norm(e) > r
    # past the ridge the energy keeps falling along the ray
    assert energy(TRUNC, 2 * e) < energy(TRUNC, e)


def test_find_endpoint_zero_model():
    with pytest.raises(NoRidgeError, match="no ridge"):
        find_endpoint(Nonlinearity("zero", truncated=True), sector_mesh(1))


def test_find_endpoint_rejects_signed_direction():
    mesh = sector_mesh(1)
    with pytest.raises(ValueError):
        find_endpoint(TRUNC, mesh, phi=-default_bump(mesh))


def test_probe_canonical():
    r, rho = mountain_geometry_probe(TRUNC, sector_mesh(1), n_dirs=100)
    assert r >= 0.1 and rho > 0


def test_probe_zero_model_exact():
    r, rho = mountain_geometry_probe(Nonlinearity("zero", truncated=True), sector_mesh(1), n_dirs=30)
    assert rho == pytest.approx(r * r / 2, rel=1e-12)


def test_probe_large_lambda_shrinks_radius():
    mesh = sector_mesh(1)
    r1, _ = mountain_geometry_probe(TRUNC, mesh, n_dirs=30)
    r2, _ = mountain_geometry_probe(TRUNC.with_(lam=1e4), mesh, n_dirs=30)
    assert r2 < r1


@pytest.mark.parametrize("m", [1, 2])
def test_mountain_pass_result(m):
    res = solved(m)
    assert res.grad_norm <= 1e-6 * max(1.0, res.norm)
    assert 0.0 < res.level < 0.5
    assert res.positive and res.min_value >= -1e-10
    assert energy(TRUNC, res.u) == pytest.approx(res.level, rel=1e-12)
    assert residual_check(TRUNC, res.u.mesh, res.u) <= 1e-5
    assert len(res.path_trace) >= 64
    ts = [t for t, _ in res.path_trace]
    assert ts[0] == 0.0 and ts[-1] == 1.0 and all(np.diff(ts) >= 0)
    top = max(e for _, e in res.path_trace)
    assert top == pytest.approx(res.level, rel=1e-3)
    summary = res.summary()
    s = sector(m)
    # the peak sits near the incenter
    assert np.hypot(*(np.array(summary["peak_location"]) - s.incenter)) < 0.25 * s.inradius


def test_nehari_mode_agrees():
    a, b = solved(1), solved(1, mode="nehari")
    assert b.level == pytest.approx(a.level, rel=1e-8)


def test_lambda_times_ten_lowers_level():
    assert solved(1, lam=10.0).level < solved(1).level


def test_mirror_image_is_also_a_solution():
    res = solved(2)
    mesh = res.u.mesh
    base = residual_check(TRUNC, mesh, res.u)
    assert residual_check(TRUNC, mesh, mirror(res.u)) <= base * (1 + 1e-6)


def test_perturbation_inflates_residual():
    res = solved(1)
    mesh = res.u.mesh
    rng = np.random.default_rng(0)
    noisy = Field(mesh, res.u.values * (1 + 0.01 * rng.standard_normal(mesh.n_nodes)))
    assert residual_check(TRUNC, mesh, noisy) > 100 * residual_check(TRUNC, mesh, res.u)


def test_residual_of_zero():
    mesh = sector_mesh(1)
    assert residual_check(TRUNC, mesh, Field.zeros(mesh)) == 0.0
    r = residual_vector(TRUNC, mesh, Field.zeros(mesh))
    assert r.shape == (mesh.n_nodes,) and not r.any()


def test_residual_is_independent_of_solver_gradient():
    # the cotangent re-assembly and the solver's own gradient agree on a generic field
    mesh = sector_mesh(1)
    u = default_bump(mesh) * 0.8
    _, g = energy_and_gradient(TRUNC, u)
    space = fem_space(mesh)
    diag = space.K.diagonal()
    assert np.allclose(residual_vector(TRUNC, mesh, u)[space.free], np.abs(g) / diag, rtol=1e-9, atol=1e-15)


def test_determinism():
    a = solved(1)
    b = mountain_pass(TRUNC, sector_mesh(1))
    assert np.array_equal(a.u.values, b.u.values) and a.level == b.level


def test_requires_truncated_model_and_valid_options():
    with pytest.raises(ValueError):
        mountain_pass(Nonlinearity(), sector_mesh(1))
    with pytest.raises(ValueError):
        SolverOptions(mode="newton")
    with pytest.raises(ValueError):
        SolverOptions(path_points=2)


def test_zero_model_has_no_ridge():
    with pytest.raises(NoRidgeError):
        mountain_pass(Nonlinearity("zero", truncated=True), sector_mesh(1))
    assert issubclass(NoRidgeError, MountainPassError)


@pytest.mark.slow
@pytest.mark.parametrize("m", [1, 2])
def test_refinement_changes_level_by_under_two_percent(m):
    a, b = solved(m, h=0.02), solved(m, h=0.01)
    assert abs(b.level - a.level) < 0.02 * a.level
