"""Moser concentration functions, their limit integrals, and energy scans along t * w_n."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import dblquad, quad
from scipy.optimize import minimize_scalar

from .fem import Field, energy, h1_norm
from .geometry import Sector, TriMesh
from .mpa import NoRidgeError
from .nonlinearity import ALPHA0, Nonlinearity, QuadratureError

DEFAULT_N = (4, 16, 256, 10**4, 10**6)
INV_SQRT_2PI = 1.0 / math.sqrt(2 * math.pi)


def _check_n(n):
    if n < 2:
        raise ValueError(f"Moser index n must be >= 2, got {n}")


def moser_bar_radial(n, r):
    """w_bar_n as a function of |x|."""
    _check_n(n)
    r = np.asarray(r, dtype=float)
    ln = math.log(n)
    with np.errstate(divide="ignore"):
        mid = INV_SQRT_2PI * np.log(1.0 / r) / math.sqrt(ln)
    out = np.where(r <= 1.0 / n, INV_SQRT_2PI * math.sqrt(ln), np.where(r < 1.0, mid, 0.0))
    return out[()] if out.ndim == 0 else out


def moser_bar(n, x):
    x = np.asarray(x, dtype=float)
    return moser_bar_radial(n, np.hypot(x[..., 0], x[..., 1]))


def moser_scaled(s: Sector, n, x):
    """w_n(x) = w_bar_n((x - x_m) / d_m), supported in the closed ball B(x_m, d_m)."""
    x = np.asarray(x, dtype=float)
    return moser_bar(n, (x - s.incenter) / s.inradius)


def _quad(func, a, b, points=None, epsabs=1e-13, epsrel=1e-13, limit=500, tol=1e-12, what="integral"):
    val, err = quad(func, a, b, points=points, epsabs=epsabs, epsrel=epsrel, limit=limit)
    if err > tol * max(1.0, abs(val)):
        raise QuadratureError(f"{what} did not meet its tolerance", err)
    return val


def moser_norm_radial(n) -> float:
    """int |grad w_bar_n|^2 = 2 pi int_{1/n}^1 (1 / (2 pi ln n)) r^{-2} r dr, by adaptive quadrature."""
    _check_n(n)
    ln = math.log(n)
    pts = list(np.geomspace(1.0 / n, 1.0, 8)[1:-1])
    return _quad(lambda r: 2 * math.pi * r / (2 * math.pi * ln * r * r), 1.0 / n, 1.0, points=pts,
                 what="Moser norm")


def limit_L1(n) -> float:
    """2 ln(n) int_0^1 exp(2 ln(n) (s^2 - s)) ds."""
    _check_n(n)
    a = 2 * math.log(n)
    w = min(0.25, 1.0 / a)
    J = _quad(lambda s: math.exp(a * (s * s - s)), 0.0, 1.0, points=[w, 0.5, 1 - w], what="L1 integral")
    return a * J


def limit_L2(s: Sector, n) -> float:
    """int over B(x_m, d_m) of exp(4 pi w_n^2), computed in the radial variable r = |x - x_m| / d_m.

    d_m^2 { pi/n^2 * n^2 + 2 pi int_{1/n}^1 exp(2 ln(1/r)^2 / ln n) r dr }
    """
    _check_n(n)
    ln = math.log(n)
    d2 = s.inradius**2

    def g(u):  # u = ln r, r dr = e^{2u} du
        return math.exp(2 * u * u / ln + 2 * u)

    pts = list(np.linspace(-ln, 0.0, 9)[1:-1])
    radial = _quad(g, -ln, 0.0, points=pts, what="L2 radial integral")
    return d2 * (math.pi + 2 * math.pi * radial)


def limit_L2_2d(s: Sector, n, epsrel=1e-9) -> float:
    """Independent Cartesian 2-D adaptive quadrature of exp(4 pi w_n^2) over B(x_m, d_m)."""
    _check_n(n)
    d = s.inradius

    def integrand(y, x):
        w = moser_bar_radial(n, math.hypot(x, y) / d)
        return math.exp(ALPHA0 * w * w)

    total = 0.0
    # split at the plateau radius so the kink lies on panel boundaries in x
    cuts = [-d, -d / n, d / n, d]
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = dblquad(integrand, a, b, lambda x: -math.sqrt(max(d * d - x * x, 0.0)),
                         lambda x: math.sqrt(max(d * d - x * x, 0.0)), epsabs=1e-12, epsrel=epsrel)
        total += val
    return total


# ---------------------------------------------------------------------------
# energy scans

def radial_F_integral(nl: Nonlinearity, s: Sector, n, t) -> float:
    """int over A_m of F(t w_n), via r = n^{-sigma} in the annulus."""
    ln = math.log(n)
    c = math.sqrt(ln / (2 * math.pi))
    plateau = math.pi / n**2 * float(nl.F(t * c))

    def g(sig):
        return float(nl.F(t * c * sig)) * math.exp(-2 * ln * sig)

    w = min(0.25, 1.0 / (2 * ln))
    annulus = 2 * math.pi * ln * _quad(g, 0.0, 1.0, points=[w, 0.5, 1 - w], epsabs=1e-14, epsrel=1e-11,
                                       tol=1e-9, what="energy-scan radial integral")
    return s.inradius**2 * (plateau + annulus)


def radial_energy(nl: Nonlinearity, s: Sector, n, t) -> float:
    """I(t w_n) = t^2/2 - int F(t w_n), using ||w_n|| = 1 exactly."""
    return 0.5 * t * t - radial_F_integral(nl, s, n, t)


@dataclass
class EnergyScan:
    n: int
    t_star: float
    max_I: float
    below_half: bool


def energy_scan(nl: Nonlinearity, s: Sector, n, mesh: TriMesh | None = None, growth=1.15):
    """max over t >= 0 of I(t w_n) with the maximizing t.

    The primary evaluation is radial quadrature. When ``mesh`` is given the
    scan is repeated on the finite-element interpolant of w_n, which needs the
    plateau disk B(x_m, d_m/n) resolved (edges <= d_m/(3n)).
    """
    _check_n(n)
    if mesh is not None:
        return energy_scan_fem(nl, s, mesh, n, growth)
    c = math.sqrt(math.log(n) / (2 * math.pi))
    t_cap = nl.s_safe / c
    return _scan(lambda t: radial_energy(nl, s, n, t), n, t_cap, growth)


def _scan(func, n, t_cap, growth):
    ts = [0.0]
    vals = [0.0]
    t = 0.05
    while t <= t_cap:
        ts.append(t)
        vals.append(func(t))
        if len(vals) >= 3 and vals[-1] < vals[-2] and vals[-1] < 0:
            break
        t *= growth
    else:
        raise NoRidgeError(f"no ridge: I(t w_{n}) has no interior maximum up to the range cap t = {t_cap:.3g}")
    k = int(np.argmax(vals))
    if k == 0 or k == len(vals) - 1:
        raise NoRidgeError(f"no ridge: scan maximum for n={n} sits on the scan boundary")
    res = minimize_scalar(lambda x: -func(x), bounds=(ts[k - 1], ts[k + 1]), method="bounded",
                          options={"xatol": 1e-10})
    t_star, best = (float(res.x), -float(res.fun)) if -res.fun >= vals[k] else (ts[k], vals[k])
    return EnergyScan(int(n), t_star, best, best < 0.5)


def interpolate_moser(s: Sector, mesh: TriMesh, n) -> Field:
    return Field(mesh, moser_scaled(s, n, mesh.nodes))


def check_resolution(s: Sector, mesh: TriMesh, n):
    rad = s.inradius / n
    near = np.hypot(*(mesh.nodes - s.incenter).T) <= rad
    tri_near = near[mesh.triangles].any(axis=1)
    if not tri_near.any():
        raise ValueError(f"mesh has no node inside B(x_m, d_m/{n}); too coarse for n={n}")
    p = mesh.nodes[mesh.triangles[tri_near]]
    edges = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
    longest = float(np.hypot(edges[:, 0], edges[:, 1]).max())
    if longest > s.inradius / (3 * n):
        raise ValueError(f"mesh too coarse for n={n}: edges near x_m reach {longest:.3g} "
                         f"> d_m/(3n) = {s.inradius / (3 * n):.3g}")


def energy_scan_fem(nl, s, mesh, n, growth=1.15):
    check_resolution(s, mesh, n)
    w = interpolate_moser(s, mesh, n)
    c = float(np.abs(w.values).max())
    return _scan(lambda t: energy(nl, t * w), n, nl.s_safe / c, growth)


# ---------------------------------------------------------------------------
# reports

@dataclass
class MoserReport:
    m: int
    n_list: list
    norms: list
    L1: list
    L2: list
    L2_limit: float
    energy_scan: list
    beta_threshold: float
    h3_proxy: float
    h3_proxy_s: float
    h3_exceeds_threshold: bool

    def rows(self):
        return [
            {"n": n, "norm": nm, "L1": a, "L2": b, "max_I": sc["max_I"] if sc else None}
            for n, nm, a, b, sc in zip(self.n_list, self.norms, self.L1, self.L2, self.energy_scan)
        ]

    def to_dict(self):
        return asdict(self)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["n", "norm", "L1", "L2", "max_I"])
            for row in self.rows():
                wr.writerow([row["n"], repr(row["norm"]), repr(row["L1"]), repr(row["L2"]),
                             "" if row["max_I"] is None else repr(row["max_I"])])

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def moser_report(s: Sector, n_list=DEFAULT_N, nl: Nonlinearity | None = None) -> MoserReport:
    n_list = [int(n) for n in n_list]
    norms = [moser_norm_radial(n) for n in n_list]
    L1 = [limit_L1(n) for n in n_list]
    L2 = [limit_L2(s, n) for n in n_list]
    scans = []
    for n in n_list:
        if nl is None:
            scans.append(None)
        else:
            sc = energy_scan(nl, s, n)
            scans.append({"t_star": sc.t_star, "max_I": sc.max_I, "below_half": sc.below_half})
    beta = 1.0 / (2 * math.pi * s.inradius**2)
    s_top = 7.0
    proxy = float(s_top * nl.f(s_top) * math.exp(-ALPHA0 * s_top**2)) if nl is not None else math.nan
    return MoserReport(s.m, n_list, norms, L1, L2, 3 * math.pi * s.inradius**2, scans, beta,
                       proxy, s_top, bool(proxy > beta))
