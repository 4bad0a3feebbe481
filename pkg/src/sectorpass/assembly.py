"""Sign-changing disk solutions from a positive sector solution by antisymmetric reflection.

Copy k of the sector (image under ``group_element(m, k)``) carries the values
(-1)^k u. Values are copied with sign flips only, so antisymmetry across every
interface line holds bitwise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .fem import Field, energy
from .geometry import MERGE_TOL, MeshError, TriMesh, build_disk_mesh, interface_normals, reflect_point, write_vtk
from .mpa import residual_vector
from .nonlinearity import Nonlinearity

TRACE_TOL = 1e-10
SIGN_EPS_REL = 1e-9


class AssemblyError(ValueError):
    pass


@dataclass
class AssembledSolution:
    u: Field
    m: int
    parity_sign: list
    nodal_domains: int
    interface_max: float
    residual: float
    sector_residual: float = float("nan")
    energy_disk: float = float("nan")
    energy_sector: float = float("nan")
    antisymmetric: bool = False
    sign_eps: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def energy_ratio(self):
        return self.energy_disk / (2**self.m * self.energy_sector)

    def summary(self):
        return {
            "m": self.m,
            "n_nodes": int(self.u.mesh.n_nodes),
            "n_triangles": int(self.u.mesh.n_triangles),
            "parity_sign": list(self.parity_sign),
            "nodal_domains": int(self.nodal_domains),
            "expected_nodal_domains": 2**self.m,
            "interface_max": float(self.interface_max),
            "residual": float(self.residual),
            "sector_residual": float(self.sector_residual),
            "energy_disk": float(self.energy_disk),
            "energy_sector": float(self.energy_sector),
            "energy_ratio": float(self.energy_ratio),
            "antisymmetric": bool(self.antisymmetric),
            "sign_eps": float(self.sign_eps),
        }


def reflection_map(mesh: TriMesh, normal) -> np.ndarray:
    """Node permutation p with nodes[p[i]] = reflect(nodes[i]); raises if the mesh is not reflection-conforming."""
    img = reflect_point(mesh.nodes, np.asarray(normal, dtype=float))
    dist, idx = cKDTree(mesh.nodes).query(img)
    bad = dist > MERGE_TOL
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise MeshError(f"mesh is not reflection-conforming: node {i} has no mirror image "
                        f"(nearest at distance {dist[i]:.2e})")
    return idx


def reflect_antisymmetric(u: Field, mirror, interface) -> Field:
    """u on A (zero on A'), mirror[i] = reflected node of i -> u on A, -u(reflect x) on A', 0 on the interface."""
    mirror = np.asarray(mirror)
    interface = np.asarray(interface, dtype=bool)
    if mirror.shape != u.values.shape or (mirror < 0).any():
        raise MeshError("reflection node map is missing entries; mesh is not reflection-conforming")
    vals = u.values
    on_a = (vals != 0.0) | (vals[mirror] == 0.0)
    out = np.where(on_a, vals, -vals[mirror])
    out[interface] = 0.0
    return Field(u.mesh, out)


def triangle_signs(u: Field, eps: float) -> np.ndarray:
    v = u.values[u.mesh.triangles]
    sign = np.zeros(v.shape[0], dtype=np.int8)
    sign[(v > eps).all(axis=1)] = 1
    sign[(v < -eps).all(axis=1)] = -1
    return sign


def count_nodal_domains(u: Field, eps: float | None = None) -> int:
    """Connected components of edge-adjacent triangles sharing a strict sign (|u| > eps at all corners)."""
    if eps is None:
        eps = SIGN_EPS_REL * float(np.abs(u.values).max(initial=0.0))
    if eps < 0:
        raise ValueError("sign threshold eps must be >= 0")
    sign = triangle_signs(u, eps)
    pairs = np.ascontiguousarray(u.mesh.triangle_neighbors(), dtype=np.int64)
    count, _ = kernels.count_components(u.mesh.n_triangles, pairs, sign)
    return int(count)


def disk_values(disk: TriMesh, u_sector: Field) -> np.ndarray:
    vals = np.zeros(disk.n_nodes)
    for k in range(disk.copy_nodes.shape[0]):
        vals[disk.copy_nodes[k]] = u_sector.values if k % 2 == 0 else -u_sector.values
    # shared side nodes are written by two copies; store a clean +0.0 there
    vals[disk.interface | disk.boundary] = 0.0
    return vals


def check_antisymmetry(u: Field) -> bool:
    """u(R x) == -u(x) bitwise for the reflection R across every interface line."""
    for nrm in interface_normals(u.mesh.m):
        p = reflection_map(u.mesh, nrm)
        if not np.array_equal(u.values[p], -u.values):
            return False
    return True


def interface_band(disk: TriMesh) -> np.ndarray:
    """Free disk nodes on an interface line."""
    return disk.interface & ~disk.boundary


def assemble_disk_solution(m: int, u_sector: Field, nl: Nonlinearity, disk: TriMesh | None = None,
                           eps: float | None = None) -> AssembledSolution:
    smesh = u_sector.mesh
    side = smesh.boundary
    trace = float(np.abs(u_sector.values[side]).max(initial=0.0))
    if trace > TRACE_TOL:
        raise AssemblyError(f"sector solution has nonzero boundary trace {trace:.3e} > {TRACE_TOL:g}")
    if disk is None:
        disk = build_disk_mesh(m, smesh)
    u = Field(disk, disk_values(disk, u_sector))
    odd = nl.with_(truncated=False)
    if eps is None:
        eps = SIGN_EPS_REL * float(np.abs(u.values).max(initial=0.0))
    res_sector = residual_vector(odd, smesh, u_sector)
    res_disk = residual_vector(odd, disk, u)
    return AssembledSolution(
        u=u,
        m=m,
        parity_sign=[1 if k % 2 == 0 else -1 for k in range(2**m)],
        nodal_domains=count_nodal_domains(u, eps),
        interface_max=float(np.abs(u.values[disk.interface]).max(initial=0.0)),
        residual=float(res_disk.max(initial=0.0)),
        sector_residual=float(res_sector.max(initial=0.0)),
        energy_disk=energy(odd, u),
        energy_sector=energy(odd, u_sector),
        antisymmetric=check_antisymmetry(u),
        sign_eps=eps,
        extra={"interface_band_residual": float(res_disk[interface_band(disk)].max(initial=0.0))},
    )


@dataclass
class OddnessAblation:
    perturbation: float
    residual: float
    band_residual: float
    baseline_band_residual: float

    @property
    def inflation(self):
        if self.baseline_band_residual == 0.0:
            return float("inf") if self.band_residual > 0 else 1.0
        return self.band_residual / self.baseline_band_residual

    def __float__(self):
        return float(self.residual)

    def to_dict(self):
        return {"perturbation": self.perturbation, "residual": self.residual,
                "band_residual": self.band_residual,
                "baseline_band_residual": self.baseline_band_residual,
                "inflation": self.inflation}


def oddness_ablation(m: int, u_sector: Field, nl_even_broken: Nonlinearity,
                     disk: TriMesh | None = None) -> OddnessAblation:
    """Disk residual of the assembled solution when f carries an even perturbation."""
    if disk is None:
        disk = build_disk_mesh(m, u_sector.mesh)
    u = Field(disk, disk_values(disk, u_sector))
    band = interface_band(disk)
    pert = residual_vector(nl_even_broken.with_(truncated=False), disk, u)
    base = residual_vector(nl_even_broken.with_(truncated=False, even_perturbation=0.0), disk, u)
    return OddnessAblation(float(nl_even_broken.even_perturbation), float(pert.max(initial=0.0)),
                           float(pert[band].max(initial=0.0)), float(base[band].max(initial=0.0)))


# ---------------------------------------------------------------------------
# exports

def write_field_csv(u: Field, path):
    with open(path, "w") as fh:
        fh.write("id,x,y,u\n")
        for i, ((x, y), v) in enumerate(zip(u.mesh.nodes, u.values)):
            fh.write(f"{i},{x!r},{y!r},{float(v)!r}\n")


def write_field_vtk(u: Field, path):
    write_vtk(u.mesh, path, point_data={"u": u.values}, title="sectorpass field")


def sample_on_grid(u: Field, size: int):
    """P1 interpolation of u at pixel centres of [-1,1]^2; NaN outside the mesh."""
    mesh = u.mesh
    c = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    X, Y = np.meshgrid(c, -c)
    pix = np.column_stack([X.ravel(), Y.ravel()])
    out = np.full(pix.shape[0], np.nan)
    inside = np.hypot(pix[:, 0], pix[:, 1]) < 1.0
    p = mesh.nodes[mesh.triangles]
    tree = cKDTree(p.mean(axis=1))
    todo = np.flatnonzero(inside)
    for k in (8, 64, 512):
        if todo.size == 0:
            break
        _, cand = tree.query(pix[todo], k=min(k, mesh.n_triangles))
        found = np.zeros(todo.size, dtype=bool)
        for j in range(cand.shape[1]):
            t = cand[:, j]
            a, b, cc = p[t, 0], p[t, 1], p[t, 2]
            det = (b[:, 0] - a[:, 0]) * (cc[:, 1] - a[:, 1]) - (cc[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
            q = pix[todo] - a
            l1 = (q[:, 0] * (cc[:, 1] - a[:, 1]) - (cc[:, 0] - a[:, 0]) * q[:, 1]) / det
            l2 = ((b[:, 0] - a[:, 0]) * q[:, 1] - q[:, 0] * (b[:, 1] - a[:, 1])) / det
            l0 = 1.0 - l1 - l2
            hit = ~found & (l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12)
            tv = u.values[mesh.triangles[t]]
            out[todo[hit]] = (l0 * tv[:, 0] + l1 * tv[:, 1] + l2 * tv[:, 2])[hit]
            found |= hit
        todo = todo[~found]
    return out.reshape(size, size)


def write_heatmap_ppm(u: Field, path, size: int = 256, eps: float | None = None):
    """Binary PPM: red where u > eps, blue where u < -eps, white in between, grey outside the disk."""
    vals = sample_on_grid(u, size)
    vmax = float(np.abs(u.values).max(initial=0.0)) or 1.0
    if eps is None:
        eps = SIGN_EPS_REL * vmax
    img = np.full((size, size, 3), 160, dtype=np.uint8)
    ok = ~np.isnan(vals)
    a = np.zeros_like(vals)
    a[ok] = np.clip(np.abs(vals[ok]) / vmax, 0.0, 1.0)
    fade = np.round(255 * (1 - (0.25 + 0.75 * a))).astype(np.uint8)
    white = ok & (np.abs(np.nan_to_num(vals)) <= eps)
    pos = ok & ~white & (vals > 0)
    neg = ok & ~white & (vals < 0)
    img[white] = 255
    img[pos] = np.stack([np.full(pos.sum(), 255), fade[pos], fade[pos]], axis=1)
    img[neg] = np.stack([fade[neg], fade[neg], np.full(neg.sum(), 255)], axis=1)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{size} {size}\n255\n".encode())
        fh.write(img.tobytes())


def write_verification_json(sol: AssembledSolution, path):
    with open(path, "w") as fh:
        json.dump(sol.summary(), fh, sort_keys=True, indent=2)
        fh.write("\n")
