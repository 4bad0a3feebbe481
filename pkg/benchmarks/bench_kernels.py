"""Compare the compiled and pure-numpy kernel backends on a realistic mesh.

    python3 benchmarks/bench_kernels.py [--h 0.02] [--m 1] [--repeat 5] [--json out.json]

Times the energy integral, the energy plus load vector, and nodal-domain
union-find on the assembled disk mesh, and checks that both backends agree.
"""
import argparse
import json
import sys
import time

import numpy as np

from sectorpass import kernels
from sectorpass.fem import _kernel_args, fem_space
from sectorpass.geometry import build_disk_mesh, mesh_sector, sector
from sectorpass.nonlinearity import Nonlinearity


def best_of(func, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--h", type=float, default=0.02)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write timings to this file")
    args = ap.parse_args(argv)

    impls = kernels.implementations()
    if "cython" not in impls:
        print("compiled backend not built; only the python fallback is available", file=sys.stderr)

    s = sector(args.m)
    mesh = mesh_sector(s, args.h, focus_levels=4)
    space = fem_space(mesh)
    x = mesh.nodes
    u = 0.9 * np.exp(-((x - s.incenter) ** 2).sum(axis=1) / (0.5 * s.inradius) ** 2)
    u[mesh.boundary] = 0.0
    nl = Nonlinearity(truncated=True)
    model, lam, trunc, eps, tab_s, tab_F, tab_f, use_table = _kernel_args(nl)

    disk = build_disk_mesh(args.m, mesh)
    vals = np.zeros(disk.n_nodes)
    for k in range(disk.copy_nodes.shape[0]):
        vals[disk.copy_nodes[k]] = u if k % 2 == 0 else -u
    tv = vals[disk.triangles]
    sign = np.zeros(disk.n_triangles, dtype=np.int8)
    sign[(tv > 1e-12).all(axis=1)] = 1
    sign[(tv < -1e-12).all(axis=1)] = -1
    pairs = np.ascontiguousarray(disk.triangle_neighbors(), dtype=np.int64)

    cases = {
        "energy": lambda impl: impl.nonlinear_terms(mesh.triangles, space.area, u, space.bary, space.wts,
                                                    model, lam, trunc, eps, tab_s, tab_F, tab_f, use_table,
                                                    False),
        "energy+load": lambda impl: impl.nonlinear_terms(mesh.triangles, space.area, u, space.bary, space.wts,
                                                         model, lam, trunc, eps, tab_s, tab_F, tab_f,
                                                         use_table, True),
        "components": lambda impl: impl.count_components(disk.n_triangles, pairs, sign),
    }

    print(f"sector m={args.m} h={args.h}: {mesh.n_triangles} triangles, "
          f"{space.bary.shape[0]} quadrature points each; disk {disk.n_triangles} triangles")
    print(f"{'kernel':<14}" + "".join(f"{name:>14}" for name in impls) + f"{'speedup':>10}")
    rows = {}
    for case, func in cases.items():
        timing, results = {}, {}
        for name, impl in impls.items():
            timing[name], results[name] = best_of(lambda: func(impl), args.repeat)
        if len(results) == 2:
            a, b = results["python"], results["cython"]
            if case == "components":
                assert a[0] == b[0] and np.array_equal(a[1], b[1]), "backends disagree on components"
            else:
                assert abs(a[0] - b[0]) <= 1e-12 * max(1.0, abs(a[0])), "backends disagree on the energy"
                if a[1] is not None:
                    assert np.allclose(a[1], b[1], rtol=1e-12, atol=1e-15), "backends disagree on the load"
        speed = timing["python"] / timing["cython"] if "cython" in timing else float("nan")
        rows[case] = {**timing, "speedup": speed}
        print(f"{case:<14}" + "".join(f"{timing[n] * 1e3:>12.2f}ms" for n in impls) + f"{speed:>9.1f}x")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"m": args.m, "h": args.h, "n_triangles": mesh.n_triangles, "timings_s": rows}, fh,
                      indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
