"""Positive mountain-pass solutions of -Laplace u = f(u) on a sector A_m.

The primary algorithm deforms a discrete path from 0 to a negative-energy
endpoint e. Each sweep uses the polyline 0 -> T w -> e through the current
direction w, locates the path maximum (sampled, then refined by a bounded 1-D
search), and moves the maximizer downhill with Armijo backtracking on the new
path maximum, until the gradient norm at the maximizer is below tolerance.
Search directions come from L-BFGS preconditioned by the H_0^1 Riesz map; the
ridge has nearly flat directions (the position of a concentrated peak) on
which plain gradient steps crawl. ``mode="nehari"`` replaces the path by the
ray {t w}, i.e. minimizes max_t I(t w) directly.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import splu

from .fem import Field, fem_space, nonlinear_terms
from .geometry import TriMesh, sector
from .nonlinearity import Nonlinearity, NonlinearityRangeError


class MountainPassError(RuntimeError):
    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)


class NoRidgeError(MountainPassError):
    pass


@dataclass
class SolverOptions:
    mode: str = "mpa"
    tol: float = 1e-6
    path_points: int = 64
    max_iters: int = 3000
    quad_level: int = 0
    armijo: float = 1e-4
    sign_eps: float = 1e-10
    refine_fraction: float = 0.1
    max_path_points: int = 512
    memory: int = 8

    def __post_init__(self):
        if self.mode not in ("mpa", "nehari"):
            raise ValueError(f"solver mode must be 'mpa' or 'nehari', got {self.mode!r}")
        if not self.tol > 0:
            raise ValueError("solver tol must be positive")
        if self.path_points < 4:
            raise ValueError("solver path_points must be at least 4")


@dataclass
class MountainPassResult:
    u: Field
    level: float
    grad_norm: float
    iterations: int
    path_trace: list
    positive: bool
    min_value: float
    norm: float
    history: list = field(default_factory=list)

    def summary(self):
        return {
            "level": self.level,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "positive": self.positive,
            "min_value": self.min_value,
            "max_value": float(self.u.values.max()),
            "peak_location": [float(c) for c in self.u.mesh.nodes[int(np.argmax(self.u.values))]],
            "h1_norm": self.norm,
            "n_nodes": int(self.u.mesh.n_nodes),
            "n_triangles": int(self.u.mesh.n_triangles),
        }


class _Problem:
    """Energy, gradient and H_0^1 Riesz map on the free nodes of one mesh."""

    def __init__(self, nl, mesh, quad_level=0):
        self.nl = nl
        self.mesh = mesh
        self.space = fem_space(mesh, quad_level)
        self._lu = None

    def full(self, ur):
        return self.space.extend(ur)

    def energy(self, ur):
        Fint, _ = nonlinear_terms(self.nl, self.space, self.full(ur), want_load=False)
        return 0.5 * float(ur @ (self.space.K @ ur)) - Fint

    def energy_grad(self, ur):
        Fint, load = nonlinear_terms(self.nl, self.space, self.full(ur), want_load=True)
        Ku = self.space.K @ ur
        return 0.5 * float(ur @ Ku) - Fint, Ku - load[self.space.free]

    def riesz(self, g):
        if self._lu is None:
            self._lu = splu(sp.csc_matrix(self.space.K))
        return self._lu.solve(g)

    def norm(self, ur):
        return math.sqrt(max(0.0, float(ur @ (self.space.K @ ur))))


def default_bump(mesh: TriMesh) -> Field:
    """Smooth nonnegative bump supported on B(x_m, d_m / 2)."""
    s = sector(mesh.m)
    rad = s.inradius / 2
    rho2 = ((mesh.nodes - s.incenter) ** 2).sum(axis=1) / rad**2
    vals = np.zeros(mesh.n_nodes)
    inside = rho2 < 1
    vals[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
    return Field(mesh, vals)


def find_endpoint(nl: Nonlinearity, mesh: TriMesh, phi: Field | None = None, quad_level: int = 0):
    """Return (t0, e = t0 * phi) with I(e) < 0, found by doubling t."""
    phi = phi or default_bump(mesh)
    if np.any(phi.values < 0) or not np.any(phi.values > 0):
        raise ValueError("endpoint direction must be nonnegative and nonzero")
    prob = _Problem(nl, mesh, quad_level)
    pr = phi.values[prob.space.free]
    peak = float(np.abs(phi.values).max())
    t_small = 1e-2 / peak
    if not prob.energy(t_small * pr) > 0:
        raise NoRidgeError(f"no ridge: I(t*phi) <= 0 already at t={t_small:.3g}; mountain-pass geometry fails")
    t = 0.25 / peak
    while True:
        if t * peak > nl.s_safe:
            raise NoRidgeError(
                "no ridge: I(t*phi) stays positive up to the nonlinearity range cap "
                f"(t*max(phi) <= {nl.s_safe:.3f}); use a larger lambda or a finer bump"
            )
        try:
            val = prob.energy(t * pr)
        except NonlinearityRangeError as exc:
            raise NoRidgeError(f"no ridge: range cap reached before I turned negative ({exc})") from exc
        if val < 0:
            return t, Field(mesh, t * phi.values)
        t *= 2.0


def mountain_geometry_probe(nl: Nonlinearity, mesh: TriMesh, n_dirs: int = 100,
                            radii=(1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 0.005), seed: int = 0,
                            quad_level: int = 0):
    """Empirical (r, rho): min over sampled unit directions d of I(r d) equals rho > 0.

    Radii are tried from largest to smallest; directions are smooth random
    fields K^{-1} xi normalized in H_0^1.
    """
    prob = _Problem(nl, mesh, quad_level)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((n_dirs, prob.space.n_free))
    dirs = []
    for x in xi:
        d = prob.riesz(prob.space.M @ x)
        dirs.append(d / prob.norm(d))
    for r in sorted(radii, reverse=True):
        try:
            vals = [prob.energy(r * d) for d in dirs]
        except NonlinearityRangeError:
            continue
        rho = min(vals)
        if rho > 0:
            return float(r), float(rho)
    raise MountainPassError(f"no positive level found down to r = {min(radii)}: mountain-pass geometry violated")


def _finish(prob, ur, level, gnorm, it, path, energies, opts, history):
    mesh = prob.mesh
    u = Field(mesh, prob.full(ur))
    min_val = float(ur.min()) if ur.size else 0.0
    positive = min_val >= -opts.sign_eps
    trace = []
    if path is not None:
        lengths = np.concatenate([[0.0], np.cumsum([prob.norm(path[j + 1] - path[j]) for j in range(len(path) - 1)])])
        tpar = lengths / lengths[-1] if lengths[-1] > 0 else lengths
        trace = [(float(t), float(e)) for t, e in zip(tpar, energies)]
    result = MountainPassResult(u, float(level), float(gnorm), it, trace, positive, min_val, prob.norm(ur), history)
    if not positive:
        raise MountainPassError(f"computed critical point is not positive (min nodal value {min_val:.3e})", history)
    return result


def mountain_pass(nl: Nonlinearity, mesh: TriMesh, opts: SolverOptions | None = None,
                  endpoint: Field | None = None) -> MountainPassResult:
    opts = opts or SolverOptions()
    if not nl.truncated:
        raise ValueError("mountain_pass expects the truncated nonlinearity (f = 0 for s <= 0)")
    if endpoint is None:
        _, endpoint = find_endpoint(nl, mesh, quad_level=opts.quad_level)
    prob = _Problem(nl, mesh, opts.quad_level)
    er = endpoint.values[prob.space.free]
    locate = _RayLocator(prob) if opts.mode == "nehari" else _PathLocator(prob, er, opts)
    return _ridge_descent(prob, er, opts, locate)


def _build_path(prob, v, T, er, opts):
    """Polyline 0 -> T v -> e; three quarters of the samples lie on the ray."""
    P = opts.path_points
    n_ray = max(2, (3 * P) // 4)
    ts = np.linspace(0.0, T, n_ray + 1)
    path = [t * v for t in ts]
    tail = T * v
    for j in range(1, P - n_ray + 1):
        path.append(tail + j / (P - n_ray) * (er - tail))
    return path, ts


def _negative_scale(prob, v, T):
    """Smallest T' = T * 2^k with I(T' v) < 0."""
    for _ in range(60):
        try:
            if prob.energy(T * v) < 0:
                return T
        except NonlinearityRangeError as exc:
            raise MountainPassError(f"path endpoint left the nonlinearity range ({exc})") from exc
        T *= 2.0
    raise NoRidgeError("no ridge: energy stays positive along the ray")


def _local_bracket(prob, v, width=0.05, tries=6):
    """Bracket the ray maximum near t = 1, where the previous iterate sits; None if that fails."""
    try:
        e1 = prob.energy(v)
        for _ in range(tries):
            lo, hi = 1.0 - width, 1.0 + width
            if lo <= 0:
                return None
            if prob.energy(lo * v) <= e1 and prob.energy(hi * v) <= e1:
                return lo, hi, 1.0, e1
            width *= 2.0
    except NonlinearityRangeError:
        return None
    return None


class _PathLocator:
    """Maximum of I over the discrete path 0 -> T w -> e through the direction w."""

    def __init__(self, prob, er, opts):
        self.prob, self.er, self.opts = prob, er, opts
        self.T = 1.0

    def __call__(self, w, near_one=True):
        prob = self.prob
        bracket = _local_bracket(prob, w) if near_one else None
        if bracket is None:
            self.T = _negative_scale(prob, w, max(self.T, 1.0))
            _, ts = _build_path(prob, w, self.T, self.er, self.opts)
            ray_E = [0.0] + [prob.energy(t * w) for t in ts[1:]]
            k = int(np.argmax(ray_E))
            if k == 0 or k == ts.size - 1:
                raise MountainPassError("path slid off the ridge: maximum at a path endpoint")
            bracket = (ts[k - 1], ts[k + 1], ts[k], ray_E[k])
        lo, hi, t_mid, e_mid = bracket
        res = minimize_scalar(lambda t: -prob.energy(t * w), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-9 * hi})
        t_star, level = (float(res.x), -float(res.fun)) if -res.fun >= e_mid else (float(t_mid), e_mid)
        self.T = max(2.0 * self.T / max(t_star, 1e-300), 2.0) if t_star > 0 else self.T
        return t_star * w, level

    def trace(self, u):
        prob = self.prob
        path = _build_path(prob, u, _negative_scale(prob, u, 1.5), self.er, self.opts)[0]
        energies = [prob.energy(p) for p in path]
        _refine_path(prob, path, energies, self.opts)
        return path, energies


class _RayLocator:
    """max over t >= 0 of I(t w); the Nehari projection of w."""

    def __init__(self, prob):
        self.prob = prob

    def __call__(self, w, near_one=True):
        t, level = _ray_max(self.prob, w / self.prob.norm(w))
        return t * w / self.prob.norm(w), level

    def trace(self, u):
        ts = np.linspace(0, 1.5, 31)
        return [s * u for s in ts], [self.prob.energy(s * u) for s in ts]


def _lbfgs_direction(prob, g, d, memory):
    """H g by the two-loop recursion, with H_0 = gamma K^{-1}."""
    if not memory:
        return d
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    s, y, _ = memory[-1]
    ky = prob.riesz(y)
    gamma = float(s @ y) / float(y @ ky)
    r = gamma * prob.riesz(q)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return r


def _ridge_descent(prob, er, opts, locate):
    """Minimize the ridge value max_t I(t w) over directions w.

    Each accepted point u is a maximizer of I along its path, so the gradient
    of the ridge value at u equals grad I(u). Steps use L-BFGS with the
    H_0^1 Riesz map as the base metric and Armijo backtracking on the ridge value.
    """
    history = []
    u, level = locate(er, near_one=False)
    first_level = level
    level, g = prob.energy_grad(u)
    memory = deque(maxlen=opts.memory)
    gnorm = math.inf
    for it in range(1, opts.max_iters + 1):
        d = prob.riesz(g)
        gnorm = math.sqrt(max(0.0, float(g @ d)))
        history.append((it, level, gnorm))
        if level <= 1e-6 * max(first_level, 1e-300):
            raise MountainPassError("path slid off the ridge: level collapsed toward 0", history)
        if gnorm <= opts.tol * max(1.0, prob.norm(u)):
            path, energies = locate.trace(u)
            return _finish(prob, u, level, gnorm, it, path, energies, opts, history)
        p = -_lbfgs_direction(prob, g, d, memory)
        slope = float(g @ p)
        if not slope < 0:
            memory.clear()
            p, slope = -d, -gnorm * gnorm
        step = 1.0
        while True:
            try:
                new_u, new_level = locate(u + step * p)
            except (NonlinearityRangeError, MountainPassError):
                new_level = math.inf
            if new_level <= level + opts.armijo * step * slope:
                break
            step *= 0.5
            if step < 1e-10:
                raise MountainPassError(f"descent stalled at grad_norm {gnorm:.3e}", history)
        new_level, new_g = prob.energy_grad(new_u)
        s, y = new_u - u, new_g - g
        sy = float(s @ y)
        if sy > 1e-12 * math.sqrt(float(s @ (prob.space.K @ s)) * float(y @ prob.riesz(y))):
            memory.append((s, y, 1.0 / sy))
        u, level, g = new_u, new_level, new_g
    raise MountainPassError(f"no convergence in {opts.max_iters} iterations (grad_norm {gnorm:.3e})", history)


def _refine_path(prob, path, energies, opts):
    """Insert midpoints where adjacent energies differ by more than a fraction of the level."""
    level = max(energies)
    j = 0
    while j + 1 < len(path) and len(path) < opts.max_path_points:
        if abs(energies[j + 1] - energies[j]) > opts.refine_fraction * abs(level):
            mid = 0.5 * (path[j] + path[j + 1])
            path.insert(j + 1, mid)
            energies.insert(j + 1, prob.energy(mid))
        else:
            j += 1


def _ray_max(prob, v):
    """max over t >= 0 of I(t v): returns (t, value)."""
    # bracket: I(t v) rises then falls for superlinear F
    t_hi = 1.0
    prev = prob.energy(t_hi * v)
    for _ in range(60):
        nxt = prob.energy(2 * t_hi * v)
        if nxt < prev:
            break
        t_hi, prev = 2 * t_hi, nxt
    else:
        raise NoRidgeError("no ridge along the ray")
    res = minimize_scalar(lambda t: -prob.energy(t * v), bounds=(0.0, 2 * t_hi), method="bounded",
                          options={"xatol": 1e-10 * t_hi})
    return float(res.x), -float(res.fun)


def residual_check(nl: Nonlinearity, mesh: TriMesh, u: Field) -> float:
    """max_i |(K u - b(u))_i| / K_ii over free nodes."""
    r = residual_vector(nl, mesh, u)
    free = ~mesh.boundary
    return float(r[free].max()) if free.any() else 0.0


def residual_vector(nl: Nonlinearity, mesh: TriMesh, u: Field) -> np.ndarray:
    """Per-node |(K u - b(u))_i| / K_ii, re-assembled from scratch (0 at Dirichlet nodes).

    Uses the cotangent form of the P1 stiffness matrix and evaluates f through
    ``Nonlinearity.f`` rather than the compiled kernels.
    """
    from .fem import quadrature_rule

    x = mesh.nodes
    t = mesh.triangles
    vals = u.values
    n = mesh.n_nodes
    Ku = np.zeros(n)
    diag = np.zeros(n)
    p0, p1, p2 = x[t[:, 0]], x[t[:, 1]], x[t[:, 2]]
    corners = (p0, p1, p2)
    area2 = np.abs((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
    for c in range(3):
        # edge opposite corner c joins i, j; weight cot(angle at c) / 2
        i, j = (c + 1) % 3, (c + 2) % 3
        a = corners[i] - corners[c]
        b = corners[j] - corners[c]
        cot = (a * b).sum(axis=1) / area2
        w = 0.5 * cot
        ti, tj = t[:, i], t[:, j]
        np.add.at(Ku, ti, w * (vals[ti] - vals[tj]))
        np.add.at(Ku, tj, w * (vals[tj] - vals[ti]))
        np.add.at(diag, ti, w)
        np.add.at(diag, tj, w)
    bary, wts = quadrature_rule(0)
    uq = vals[t] @ bary.T
    fq = np.asarray(nl.f(uq))
    local = (0.5 * area2)[:, None] * ((fq * wts) @ bary)
    b = np.zeros(n)
    np.add.at(b, t.ravel(), local.ravel())
    r = np.zeros(n)
    free = ~mesh.boundary
    r[free] = np.abs(Ku - b)[free] / diag[free]
    return r
