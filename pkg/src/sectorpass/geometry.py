"""Angular sectors of the unit disk, their structured meshes, and the disk
mesh obtained by reflecting a sector mesh around the circle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

MERGE_TOL = 1e-10
MIN_TRIANGLES = 8


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Sector:
    """Sector of the unit disk with half-opening ``half_angle`` around the positive x2-axis."""

    m: int
    half_angle: float
    inradius: float
    incenter: np.ndarray
    axis: np.ndarray

    def contains(self, x):
        """Open-set membership, vectorized over trailing rows of ``x``."""
        x = np.atleast_2d(x)
        c, s = math.cos(self.half_angle), math.sin(self.half_angle)
        inside = (c * np.abs(x[:, 0]) < s * x[:, 1]) & (np.hypot(x[:, 0], x[:, 1]) < 1.0)
        return inside

    def on_boundary(self, x, tol=1e-12):
        x = np.atleast_2d(x)
        c, s = math.cos(self.half_angle), math.sin(self.half_angle)
        r = np.hypot(x[:, 0], x[:, 1])
        side = np.abs(c * np.abs(x[:, 0]) - s * x[:, 1]) <= tol
        arc = np.abs(r - 1.0) <= tol
        in_closure = (c * np.abs(x[:, 0]) <= s * x[:, 1] + tol) & (r <= 1.0 + tol)
        return (side | arc) & in_closure

    def side_normals(self):
        """Unit normals of the lines carrying the right and left straight sides."""
        b = self.half_angle
        right_dir = np.array([math.sin(b), math.cos(b)])
        left_dir = np.array([-math.sin(b), math.cos(b)])
        return _normal(right_dir), _normal(left_dir)


def _normal(direction):
    return np.array([-direction[1], direction[0]])


def sector(m: int) -> Sector:
    if int(m) != m or m < 1:
        raise ValueError(f"sector index m must be a positive integer, got {m}")
    m = int(m)
    beta = math.pi / 2**m
    d = math.sin(beta) / (1.0 + math.sin(beta))
    incenter = np.array([0.0, 1.0 - d])
    incenter.setflags(write=False)
    axis = np.array([0.0, 1.0])
    axis.setflags(write=False)
    return Sector(m, beta, d, incenter, axis)


def reflect_point(x, normal):
    """Householder reflection across the line through the origin with unit ``normal``."""
    x = np.asarray(x, dtype=float)
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    return x - 2.0 * np.multiply.outer(x @ n, n) if x.ndim > 1 else x - 2.0 * (x @ n) * n


@dataclass(eq=False)
class TriMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    h: float
    parity: np.ndarray | None = None
    # copy_nodes[k, i] = disk node index of g_k applied to sector node i
    copy_nodes: np.ndarray | None = None
    # interface[i] is True for disk nodes lying on a straight sector side
    interface: np.ndarray | None = None
    m: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def signed_areas(self):
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self):
        return float(self.signed_areas().sum())

    def edges(self):
        """Unique undirected edges as a sorted (n_edges, 2) array."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self):
        e = self.edges()
        d = self.nodes[e[:, 0]] - self.nodes[e[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])

    def triangle_neighbors(self):
        """Pairs (t1, t2) of triangles sharing an edge."""
        t = self.triangles
        nt = t.shape[0]
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        owner = np.tile(np.arange(nt), 3)
        key = e[:, 0].astype(np.int64) * (self.n_nodes + 1) + e[:, 1]
        order = np.argsort(key, kind="stable")
        key, owner = key[order], owner[order]
        same = key[1:] == key[:-1]
        return np.stack([owner[:-1][same], owner[1:][same]], axis=1)


def _ring_angles(n, beta, a):
    # spacing shrinks by (1 - a)/(1 + a) from the axis to the side
    eta = np.linspace(0.0, 1.0, n + 1)
    th = beta * (eta + a * np.sin(math.pi * eta) / math.pi)
    th[-1] = beta
    return th


def _half_sector(beta, h, grading):
    """Mesh of {0 <= angle-from-axis <= beta, r <= 1} with rings r_i = (i/N)^grading."""
    n_rings = max(2, int(math.ceil(grading / h)))
    radii = (np.arange(n_rings + 1) / n_rings) ** grading
    a = 0.5 * (grading - 1.0) / (grading + 1.0)
    nodes = [np.zeros((1, 2))]
    ring_start = [0]
    ring_angles = [np.zeros(1)]
    count = 1
    for i in range(1, n_rings + 1):
        r = radii[i]
        dr = radii[i] - radii[i - 1]
        # power-of-two counts keep ring-to-ring transitions regular and nested under h -> h/2
        n_ang = 2 ** max(0, int(math.ceil(math.log2(max(r * beta / dr, 1.0)) - 1e-9)))
        th = _ring_angles(n_ang, beta, a)
        ring_angles.append(th)
        pts = np.stack([r * np.sin(th), r * np.cos(th)], axis=1)
        pts[0, 0] = 0.0  # axis nodes exactly on x1 = 0
        nodes.append(pts)
        ring_start.append(count)
        count += th.size
    tris = []
    for i in range(1, n_rings + 1):
        inner, outer = ring_angles[i - 1], ring_angles[i]
        a0, b0 = ring_start[i - 1], ring_start[i]
        if inner.size == 1:
            for j in range(outer.size - 1):
                tris.append((a0, b0 + j, b0 + j + 1))
            continue
        a = b = 0
        ia, ib = inner / beta, outer / beta
        while a < inner.size - 1 or b < outer.size - 1:
            adv_b = a == inner.size - 1 or (b < outer.size - 1 and ib[b + 1] <= ia[a + 1])
            if adv_b:
                tris.append((a0 + a, b0 + b, b0 + b + 1))
                b += 1
            else:
                tris.append((a0 + a, b0 + b, a0 + a + 1))
                a += 1
    return np.concatenate(nodes), np.array(tris, dtype=np.int64), radii, ring_start


def red_green_refine(nodes, tris, marked):
    """One round of red refinement of ``marked`` triangles with green closure.

    Triangles with two or three split edges are split into four; triangles with
    exactly one split edge are bisected from the opposite vertex. Midpoints of
    edges whose endpoints both lie on the unit circle are projected onto it.
    """
    nodes = [tuple(p) for p in nodes]
    tris = [tuple(t) for t in tris]
    split = set()
    for k in np.flatnonzero(marked):
        a, b, c = tris[k]
        split.update({tuple(sorted((a, b))), tuple(sorted((b, c))), tuple(sorted((c, a)))})
    changed = True
    while changed:
        changed = False
        for a, b, c in tris:
            es = [tuple(sorted(e)) for e in ((a, b), (b, c), (c, a))]
            n_split = sum(e in split for e in es)
            if n_split == 2:
                split.update(es)
                changed = True
    mid = {}
    for e in sorted(split):
        p, q = np.array(nodes[e[0]]), np.array(nodes[e[1]])
        x = 0.5 * (p + q)
        if abs(np.hypot(*p) - 1) < 1e-12 and abs(np.hypot(*q) - 1) < 1e-12:
            x = x / np.hypot(*x)
        mid[e] = len(nodes)
        nodes.append(tuple(x))
    out = []
    for a, b, c in tris:
        ab, bc, ca = (mid.get(tuple(sorted(e))) for e in ((a, b), (b, c), (c, a)))
        n_split = sum(v is not None for v in (ab, bc, ca))
        if n_split == 0:
            out.append((a, b, c))
        elif n_split == 3:
            out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        elif ab is not None:
            out += [(a, ab, c), (ab, b, c)]
        elif bc is not None:
            out += [(b, bc, a), (bc, c, a)]
        else:
            out += [(c, ca, b), (ca, a, b)]
    return np.array(nodes), np.array(out, dtype=np.int64)


def _focus_refine(nodes, tris, center, h, levels, radius_factor, max_radius):
    """Nested red-green refinement around ``center``; level k refines a disk of radius ~ radius_factor * h / 2^k."""
    for k in range(levels):
        rad = min(max_radius, radius_factor * h / 2**k)
        cent = nodes[tris].mean(axis=1)
        marked = np.hypot(*(cent - center).T) < rad
        if not marked.any():
            break
        nodes, tris = red_green_refine(nodes, tris, marked)
    return nodes, tris


def _orient_ccw(nodes, tris):
    p = nodes[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    tris = tris.copy()
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _merge_nodes(points, tol=MERGE_TOL):
    """Map each point to a representative index; first occurrence wins."""
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    rep = np.arange(points.shape[0])
    if pairs.size:
        pairs.sort(axis=1)
        # resolve chains so every point maps to the smallest index in its cluster
        for i, j in pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]:
            ri, rj = rep[i], rep[j]
            while rep[ri] != ri:
                ri = rep[ri]
            while rep[rj] != rj:
                rj = rep[rj]
            if ri != rj:
                rep[max(ri, rj)] = min(ri, rj)
        for k in range(rep.size):
            r = k
            while rep[r] != r:
                r = rep[r]
            rep[k] = r
    uniq, new_index = np.unique(rep, return_inverse=True)
    return uniq, new_index


def mesh_sector(s: Sector, h: float, grading: float = 2.0, focus_levels: int = 0,
                focus_radius: float = 6.0) -> TriMesh:
    """Structured ring mesh of A_m, mirror-symmetric about the x2-axis.

    ``focus_levels`` rounds of nested red-green refinement are applied around
    the incenter x_m, where positive solutions concentrate; round k covers the
    disk of radius ``focus_radius * h / 2^k`` (capped at d_m / 2).
    """
    if not (0 < h < 1):
        raise ValueError(f"mesh size h must lie in (0, 1), got {h}")
    if grading < 1:
        raise ValueError(f"grading must be >= 1, got {grading}")
    beta = s.half_angle
    half_nodes, half_tris, radii, ring_start = _half_sector(beta, h, grading)
    if focus_levels:
        half_tris = _orient_ccw(half_nodes, half_tris)
        half_nodes, half_tris = _focus_refine(half_nodes, half_tris, s.incenter, h, focus_levels,
                                              focus_radius, 0.5 * s.inradius)
    mirror = half_nodes * np.array([-1.0, 1.0])
    allpts = np.concatenate([half_nodes, mirror])
    uniq, idx = _merge_nodes(allpts)
    nodes = allpts[uniq]
    nh = half_nodes.shape[0]
    tris = np.concatenate([idx[half_tris], idx[half_tris + nh]])
    tris = _orient_ccw(nodes, tris)
    if tris.shape[0] < MIN_TRIANGLES:
        raise MeshError(f"h = {h} is too coarse: only {tris.shape[0]} triangles")
    # sort nodes lexicographically by (ring radius, angle) for deterministic ordering
    order = np.lexsort((np.arctan2(nodes[:, 0], nodes[:, 1]), np.round(np.hypot(*nodes.T), 12)))
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    nodes = nodes[order]
    tris = inv[tris]
    r = np.hypot(nodes[:, 0], nodes[:, 1])
    c, sn = math.cos(beta), math.sin(beta)
    side = np.abs(c * np.abs(nodes[:, 0]) - sn * nodes[:, 1]) <= 1e-12
    arc = np.abs(r - 1.0) <= 1e-12
    boundary = side | arc
    mesh = TriMesh(nodes, tris, boundary, h, m=s.m,
                   meta={"grading": grading, "focus_levels": focus_levels, "kind": "sector"})
    _validate(mesh)
    return mesh


def _validate(mesh):
    a = mesh.signed_areas()
    bad = np.flatnonzero(a <= 0)
    if bad.size:
        raise MeshError(f"triangle {bad[0]} has non-positive signed area {a[bad[0]]:.3e}")


def group_element(m: int, k: int) -> np.ndarray:
    """g_k = Rot(2 k beta) S^k, where S mirrors across the x2-axis.

    g_k maps A_m onto the k-th copy counted counterclockwise; consecutive
    copies are related by the reflection across their shared side.
    """
    beta = math.pi / 2**m
    th = 2 * k * beta
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    if k % 2:
        return rot @ np.array([[-1.0, 0.0], [0.0, 1.0]])
    return rot


def interface_normals(m: int):
    """Unit normals of the distinct lines through the origin that carry copy interfaces."""
    beta = math.pi / 2**m
    n_lines = max(1, 2 ** (m - 1))
    out = []
    for j in range(n_lines):
        phi = math.pi / 2 + beta + 2 * j * beta
        out.append(np.array([-math.sin(phi), math.cos(phi)]))
    return out


def _check_mirror_consistent(sector_mesh):
    """Left-side nodes must be exact mirror images of right-side nodes."""
    x = sector_mesh.nodes
    bnd = sector_mesh.boundary
    r = np.hypot(x[:, 0], x[:, 1])
    off_arc = bnd & (np.abs(r - 1) > 1e-12) & (r > 0)
    right = x[off_arc & (x[:, 0] > 0)]
    left = x[off_arc & (x[:, 0] < 0)]
    if right.shape != left.shape:
        raise MeshError("sector side nodes are not mirror-consistent: counts differ")
    if right.size:
        d, _ = cKDTree(left).query(right * np.array([-1.0, 1.0]))
        if d.max() > MERGE_TOL:
            raise MeshError(f"sector side nodes are not mirror-consistent (gap {d.max():.2e})")


def build_disk_mesh(m: int, sector_mesh: TriMesh) -> TriMesh:
    """Tile the unit disk with the 2^m images g_k(A_m) of a sector mesh."""
    if sector_mesh.m is not None and sector_mesh.m != m:
        raise ValueError(f"sector mesh was built for m={sector_mesh.m}, not m={m}")
    _check_mirror_consistent(sector_mesh)
    n_copies = 2**m
    ns = sector_mesh.n_nodes
    pts = np.concatenate([sector_mesh.nodes @ group_element(m, k).T for k in range(n_copies)])
    uniq, idx = _merge_nodes(pts)
    nodes = pts[uniq]
    copy_nodes = idx.reshape(n_copies, ns)
    tris, parity = [], []
    for k in range(n_copies):
        t = copy_nodes[k][sector_mesh.triangles]
        if k % 2:
            t = t[:, [0, 2, 1]]
        tris.append(t)
        parity.append(np.full(t.shape[0], k, dtype=np.int64))
    tris = np.concatenate(tris)
    parity = np.concatenate(parity)
    r = np.hypot(nodes[:, 0], nodes[:, 1])
    boundary = np.abs(r - 1.0) <= 1e-12
    interface = np.zeros(nodes.shape[0], dtype=bool)
    side = sector_mesh.boundary & (np.abs(np.hypot(*sector_mesh.nodes.T) - 1) > 1e-12)
    for k in range(n_copies):
        interface[copy_nodes[k][side]] = True
    mesh = TriMesh(nodes, tris, boundary, sector_mesh.h, parity=parity, copy_nodes=copy_nodes,
                   interface=interface, m=m, meta={**sector_mesh.meta, "kind": "disk"})
    _validate(mesh)
    return mesh


# ---------------------------------------------------------------------------
# export

def write_mesh_csv(mesh: TriMesh, nodes_path, triangles_path):
    with open(nodes_path, "w") as fh:
        fh.write("id,x,y,boundary\n")
        for i, (x, y) in enumerate(mesh.nodes):
            fh.write(f"{i},{x!r},{y!r},{int(mesh.boundary[i])}\n")
    parity = mesh.parity if mesh.parity is not None else np.zeros(mesh.n_triangles, dtype=int)
    with open(triangles_path, "w") as fh:
        fh.write("n0,n1,n2,parity\n")
        for (a, b, c), p in zip(mesh.triangles, parity):
            fh.write(f"{a},{b},{c},{p}\n")


def write_vtk(mesh: TriMesh, path, point_data=None, title="sectorpass mesh"):
    """Legacy ASCII VTK unstructured grid with optional scalar point data."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.nodes]
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    if mesh.parity is not None:
        lines += [f"CELL_DATA {nt}", "SCALARS parity int 1", "LOOKUP_TABLE default"]
        lines += [str(int(p)) for p in mesh.parity]
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(v)) for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
