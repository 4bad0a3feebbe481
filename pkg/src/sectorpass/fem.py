"""P1 finite elements for I(u) = 1/2 int |grad u|^2 - int F(u) with homogeneous Dirichlet data."""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .geometry import MeshError, TriMesh
from .nonlinearity import MODEL_CODES, Nonlinearity, NonlinearityRangeError, S_SAFE


class SolverError(RuntimeError):
    def __init__(self, message, history=()):
        self.history = list(history)
        last = f"; last residual {self.history[-1]:.3e}" if self.history else ""
        super().__init__(message + last)


# ---------------------------------------------------------------------------
# quadrature

def _degree5_rule():
    """7-point rule exact for polynomials of degree 5 (barycentric points, weights sum to 1)."""
    r15 = math.sqrt(15.0)
    a1, w1 = (6 - r15) / 21, (155 - r15) / 1200
    a2, w2 = (6 + r15) / 21, (155 + r15) / 1200
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9 / 40]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1 - 2 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
        wts += [w] * 3
    return np.array(pts), np.array(wts)


def _subdivide(bary, wts):
    """Apply a rule on each of the four midpoint subtriangles."""
    corners = np.eye(3)
    mids = np.array([[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]])
    subs = [
        (corners[0], mids[0], mids[2]),
        (mids[0], corners[1], mids[1]),
        (mids[2], mids[1], corners[2]),
        (mids[1], mids[2], mids[0]),
    ]
    pts, w = [], []
    for v in subs:
        V = np.array(v)
        pts.append(bary @ V)
        w.append(wts / 4)
    return np.concatenate(pts), np.concatenate(w)


def quadrature_rule(level: int = 0):
    """Degree-5 rule, refined by ``level`` rounds of 4-way subdivision."""
    bary, wts = _degree5_rule()
    for _ in range(level):
        bary, wts = _subdivide(bary, wts)
    return np.ascontiguousarray(bary), np.ascontiguousarray(wts)


# ---------------------------------------------------------------------------
# discretization

@dataclass(eq=False)
class FemSpace:
    mesh: TriMesh
    area: np.ndarray
    grads: np.ndarray  # (nt, 3, 2) gradients of barycentric coordinates
    K_full: sp.csr_matrix
    M_full: sp.csr_matrix
    free: np.ndarray  # indices of non-Dirichlet nodes
    K: sp.csr_matrix
    M: sp.csr_matrix
    bary: np.ndarray
    wts: np.ndarray

    @property
    def n_free(self):
        return self.free.size

    def restrict(self, values):
        return np.asarray(values)[self.free]

    def extend(self, reduced):
        out = np.zeros(self.mesh.n_nodes)
        out[self.free] = reduced
        return out


def element_geometry(mesh: TriMesh):
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    # d lambda_i / dx = (y_j - y_k) / (2A), d lambda_i / dy = (x_k - x_j) / (2A)
    dy = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    dx = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    twice = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    bad = np.flatnonzero(np.abs(twice) <= 1e-14 * max(1.0, np.abs(twice).max(initial=0.0)))
    if bad.size:
        raise MeshError(f"degenerate triangle {bad[0]} (nodes {mesh.triangles[bad[0]].tolist()})")
    area = 0.5 * twice
    grads = np.stack([dy, dx], axis=2) / twice[:, None, None]
    return area, grads


def _assemble(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness_full(mesh: TriMesh):
    area, grads = element_geometry(mesh)
    local = area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    return _assemble(mesh, local)


def mass_full(mesh: TriMesh):
    area, _ = element_geometry(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _assemble(mesh, area[:, None, None] * ref)


_spaces: "weakref.WeakKeyDictionary[TriMesh, dict]" = weakref.WeakKeyDictionary()


def fem_space(mesh: TriMesh, quad_level: int = 0) -> FemSpace:
    cache = _spaces.setdefault(mesh, {})
    if quad_level not in cache:
        area, grads = element_geometry(mesh)
        K_full = stiffness_full(mesh)
        M_full = mass_full(mesh)
        free = np.flatnonzero(~mesh.boundary)
        K = K_full[free][:, free].tocsr()
        M = M_full[free][:, free].tocsr()
        bary, wts = quadrature_rule(quad_level)
        cache[quad_level] = FemSpace(mesh, area, grads, K_full, M_full, free, K, M, bary, wts)
    return cache[quad_level]


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    """Stiffness matrix on the free (non-Dirichlet) nodes."""
    return fem_space(mesh).K


# ---------------------------------------------------------------------------
# fields

@dataclass(eq=False)
class Field:
    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError(f"field has shape {self.values.shape}, mesh has {self.mesh.n_nodes} nodes")
        if np.any(self.values[self.mesh.boundary] != 0.0):
            self.values = self.values.copy()
            self.values[self.mesh.boundary] = 0.0

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_nodes))

    @classmethod
    def from_function(cls, mesh, func):
        return cls(mesh, func(mesh.nodes))

    def __add__(self, other):
        return Field(self.mesh, self.values + other.values)

    def __sub__(self, other):
        return Field(self.mesh, self.values - other.values)

    def __mul__(self, c):
        return Field(self.mesh, c * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.mesh, -self.values)

    def energy(self, nl, quad_level=0):
        return energy(nl, self, quad_level)

    def norm(self):
        return h1_norm(self)


def _kernel_args(nl: Nonlinearity):
    if nl.uses_table:
        tab = nl.table
        tab_s, tab_F, tab_f = tab.s, tab.F, tab.f
    else:
        tab_s = tab_F = tab_f = np.zeros(2)
    return (MODEL_CODES[nl.model], float(nl.lam), bool(nl.truncated), float(nl.even_perturbation),
            tab_s, tab_F, tab_f, bool(nl.uses_table))


def _check_range(values):
    a = np.abs(values).max(initial=0.0)
    if not np.isfinite(a):
        raise ValueError("field contains non-finite values")
    if a > S_SAFE:
        raise NonlinearityRangeError(a)


def nonlinear_terms(nl: Nonlinearity, space: FemSpace, values, want_load=True):
    """(int F(u_h), load vector on all nodes) by element quadrature."""
    _check_range(values)
    model, lam, trunc, eps, tab_s, tab_F, tab_f, use_table = _kernel_args(nl)
    return kernels.nonlinear_terms(space.mesh.triangles, space.area, np.ascontiguousarray(values, dtype=float),
                                   space.bary, space.wts, model, lam, trunc, eps,
                                   tab_s, tab_F, tab_f, use_table, want_load)


def quadratic_part(space: FemSpace, values):
    ur = values[space.free]
    return 0.5 * float(ur @ (space.K @ ur))


def energy(nl: Nonlinearity, u: Field, quad_level: int = 0) -> float:
    space = fem_space(u.mesh, quad_level)
    Fint, _ = nonlinear_terms(nl, space, u.values, want_load=False)
    return quadratic_part(space, u.values) - Fint


def energy_and_gradient(nl: Nonlinearity, u: Field, quad_level: int = 0):
    """Return (I(u), Ku - b(u) on free nodes)."""
    space = fem_space(u.mesh, quad_level)
    Fint, load = nonlinear_terms(nl, space, u.values, want_load=True)
    ur = u.values[space.free]
    Ku = space.K @ ur
    return 0.5 * float(ur @ Ku) - Fint, Ku - load[space.free]


def grad_energy(nl: Nonlinearity, u: Field, quad_level: int = 0) -> Field:
    _, g = energy_and_gradient(nl, u, quad_level)
    return Field(u.mesh, fem_space(u.mesh).extend(g))


def h1_norm(u: Field) -> float:
    space = fem_space(u.mesh)
    ur = u.values[space.free]
    return math.sqrt(max(0.0, float(ur @ (space.K @ ur))))


# ---------------------------------------------------------------------------
# linear algebra

def solve_spd(K, rhs, rtol=1e-10, maxiter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients; raises SolverError on non-convergence."""
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    maxiter = maxiter or max(100, 10 * n)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n)
    dinv = 1.0 / K.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = rhs - K @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    history = []
    for _ in range(maxiter):
        rn = np.linalg.norm(r) / bnorm
        history.append(rn)
        if rn <= rtol:
            return x
        Kp = K @ p
        alpha = rz / (p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    rn = np.linalg.norm(rhs - K @ x) / bnorm
    history.append(rn)
    if rn <= rtol:
        return x
    raise SolverError(f"CG did not reach rtol={rtol} in {maxiter} iterations", history)


def lambda1(mesh: TriMesh, tol=1e-8, maxiter=500):
    """Smallest eigenvalue of K x = lam M x by inverse iteration with CG solves."""
    space = fem_space(mesh)
    if space.n_free == 0:
        raise ValueError("mesh has no free nodes")
    K, M = space.K, space.M
    x = np.ones(space.n_free)
    x /= math.sqrt(x @ (M @ x))
    history = []
    lam = float(x @ (K @ x))
    for _ in range(maxiter):
        y = solve_spd(K, M @ x, rtol=1e-12, x0=x / lam)
        x = y / math.sqrt(y @ (M @ y))
        Kx = K @ x
        Mx = M @ x
        lam = float(x @ Kx)
        res = np.linalg.norm(Kx - lam * Mx) / np.linalg.norm(Kx)
        history.append(res)
        if res < tol:
            return lam
    raise SolverError("inverse iteration stagnated", history)


def poisson_solve(mesh: TriMesh, source):
    """Solve -Laplace u = source (callable of points) with zero Dirichlet data; P1 load by quadrature."""
    space = fem_space(mesh)
    pts = np.einsum("qk,tkd->tqd", space.bary, mesh.nodes[mesh.triangles])
    fq = source(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    local = space.area[:, None] * ((fq * space.wts) @ space.bary)
    load = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)
    ur = solve_spd(space.K, load[space.free], rtol=1e-12)
    return Field(mesh, space.extend(ur))


def natural_gradient(space: FemSpace, g, x0=None):
    """K^{-1} g: the H_0^1 Riesz representative of the residual."""
    return solve_spd(space.K, g, rtol=1e-10, x0=x0)


def dual_norm(g, Kinv_g):
    return math.sqrt(max(0.0, float(g @ Kinv_g)))


def zero_extension(u: Field, disk: TriMesh, copy: int = 0) -> Field:
    """Embed a sector field into the disk mesh built from its sector mesh, zero elsewhere."""
    if disk.copy_nodes is None:
        raise ValueError("disk mesh carries no copy map; build it with build_disk_mesh")
    vals = np.zeros(disk.n_nodes)
    vals[disk.copy_nodes[copy]] = u.values
    return Field(disk, vals)
