"""Command-line pipeline: hypotheses -> sector solve -> energy level -> assembly -> verification.

    sectorpass <subcommand> [--config PATH] [--out DIR] [--no-timings]

Exit status is 0 when every checked invariant holds, 1 when an invariant
fails, and 2 when a stage raises.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, kernels
from .assembly import (assemble_disk_solution, oddness_ablation, write_field_csv, write_field_vtk,
                       write_heatmap_ppm)
from .config import ConfigError, RunConfig, load_config, parse_config
from .geometry import build_disk_mesh, mesh_sector, sector
from .moser import moser_report
from .mpa import SolverOptions, mountain_geometry_probe, mountain_pass, residual_check
from .nonlinearity import Nonlinearity, check_hypotheses

SUBCOMMANDS = ("check-hypotheses", "solve-sector", "moser-limits", "assemble", "full")
SECTIONS = ("hypotheses", "probe", "solver", "energy_level", "moser", "assembly", "ablation")
LEVEL_CAP = 0.5


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        self.stage = stage
        self.exc = exc
        super().__init__(f"stage {stage} failed: {exc}")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    def __init__(self, cfg: RunConfig, out_dir, timings=True):
        self.cfg = cfg
        self.out = out_dir
        self.want_timings = timings
        self.sections = {name: {"skipped": True} for name in SECTIONS}
        self.invariants = {}
        self.files = []
        self.timings = {}
        self._solution = None
        self._mesh = None

    # -- helpers ---------------------------------------------------------
    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(_clean(obj), fh, sort_keys=True, indent=2)
            fh.write("\n")

    def stage(self, name, func):
        t0 = time.perf_counter()
        try:
            return func()
        except Exception as exc:  # surfaced with stage attribution
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0

    def nl(self, truncated=False):
        return Nonlinearity(self.cfg.model, self.cfg.lam, truncated=truncated)

    def mesh(self):
        if self._mesh is None:
            c = self.cfg
            self._mesh = mesh_sector(sector(c.m), c.mesh_h, c.mesh_grading, focus_levels=c.mesh_focus_levels)
        return self._mesh

    # -- stages ----------------------------------------------------------
    def hypotheses(self):
        rep = check_hypotheses(self.nl())
        d = rep.to_dict()
        self.sections["hypotheses"] = d
        self.invariants["hypotheses_all_passed"] = rep.all_passed
        self.write_json("hypotheses.json", d)

    def solve(self):
        c = self.cfg
        mesh = self.mesh()
        nl = self.nl(truncated=True)
        r, rho = mountain_geometry_probe(nl, mesh, n_dirs=c.probe_directions, seed=c.seed)
        self.sections["probe"] = {"r": r, "rho": rho, "directions": c.probe_directions, "seed": c.seed}
        opts = SolverOptions(mode=c.solver_mode, tol=c.solver_tol, path_points=c.solver_path_points,
                             max_iters=c.solver_max_iters)
        res = mountain_pass(nl, mesh, opts)
        resid = residual_check(nl, mesh, res.u)
        summary = res.summary()
        summary.update({"residual": resid, "mode": c.solver_mode, "tol": c.solver_tol,
                        "m": c.m, "h": c.mesh_h, "grading": c.mesh_grading,
                        "focus_levels": c.mesh_focus_levels})
        self.sections["solver"] = summary
        self.invariants["solver_positive"] = bool(res.positive)
        self.invariants["solver_residual_within_10x_tol"] = resid <= 10 * c.solver_tol
        self.invariants["solver_level_in_0_half"] = 0.0 < res.level < LEVEL_CAP
        self.write_json("solver.json", summary)
        write_field_csv(res.u, self.path("sector_field.csv"))
        write_field_vtk(res.u, self.path("sector_field.vtk"))
        with open(self.path("path_trace.csv"), "w") as fh:
            fh.write("t,energy\n")
            for t, e in res.path_trace:
                fh.write(f"{t!r},{e!r}\n")
        self._solution = res

    def moser(self):
        rep = moser_report(sector(self.cfg.m), self.cfg.moser_n_list, self.nl())
        d = rep.to_dict()
        self.sections["moser"] = d
        self.write_json("moser.json", d)
        rep.write_csv(self.path("moser_convergence.csv"))
        return rep

    def energy_level(self, rep):
        scans = [s for s in rep.energy_scan if s is not None]
        best = min((s["max_I"] for s in scans), default=math.nan)
        level = self._solution.level
        self.sections["energy_level"] = {"level": level, "cap": LEVEL_CAP, "moser_min_max_I": best,
                                         "level_below_moser_bound": bool(level <= best)}
        self.invariants["energy_level_below_half"] = 0.0 < level < LEVEL_CAP
        self.invariants["moser_scan_below_half"] = bool(best < LEVEL_CAP)

    def assemble(self):
        c = self.cfg
        u = self._solution.u
        disk = build_disk_mesh(c.m, u.mesh)
        sol = assemble_disk_solution(c.m, u, self.nl(), disk=disk)
        d = sol.summary()
        d.update(sol.extra)
        self.sections["assembly"] = d
        self.invariants["assembly_antisymmetric"] = sol.antisymmetric
        self.invariants["assembly_interface_zero"] = sol.interface_max == 0.0
        self.invariants["assembly_nodal_domains"] = sol.nodal_domains == 2**c.m
        self.invariants["assembly_residual_within_10x_sector"] = sol.residual <= 10 * sol.sector_residual
        self.invariants["assembly_energy_additive"] = abs(sol.energy_ratio - 1.0) <= 5e-3
        self.write_json("assembly.json", d)
        write_field_csv(sol.u, self.path("disk_field.csv"))
        write_field_vtk(sol.u, self.path("disk_field.vtk"))
        write_heatmap_ppm(sol.u, self.path("heatmap.ppm"), size=c.heatmap_size, eps=sol.sign_eps)
        return disk

    def ablation(self, disk):
        c = self.cfg
        ab = oddness_ablation(c.m, self._solution.u, self.nl().with_(even_perturbation=c.ablation_perturbation),
                              disk=disk)
        d = ab.to_dict()
        self.sections["ablation"] = d
        self.invariants["ablation_inflation_at_least_100x"] = ab.inflation >= 100
        self.write_json("ablation.json", d)

    # -- orchestration ---------------------------------------------------
    def execute(self, sub):
        if sub in ("check-hypotheses", "full"):
            self.stage("hypotheses", self.hypotheses)
        if sub in ("solve-sector", "assemble", "full"):
            self.stage("solve-sector", self.solve)
        if sub in ("moser-limits", "full"):
            rep = self.stage("moser-limits", self.moser)
            if sub == "full":
                self.stage("energy-level", lambda: self.energy_level(rep))
        if sub in ("assemble", "full"):
            disk = self.stage("assemble", self.assemble)
            if sub == "full":
                self.stage("ablation", lambda: self.ablation(disk))

    def report(self, sub, error=None):
        manifest = [{"file": name, "sha256": _sha256(os.path.join(self.out, name)),
                     "bytes": os.path.getsize(os.path.join(self.out, name))} for name in sorted(set(self.files))]
        ok = error is None and all(self.invariants.values())
        rep = {
            "tool": "sectorpass",
            "version": __version__,
            "subcommand": sub,
            "config": {k: v for k, v in self.cfg.to_dict().items() if k != "output_dir"},
            "kernel_backend": kernels.BACKEND,
            "sections": self.sections,
            "invariants": self.invariants,
            "status": "ok" if ok else ("error" if error else "invariant_failed"),
            "error": error,
            "manifest": manifest,
        }
        if self.want_timings:
            rep["timings"] = self.timings
        return _clean(rep)


def run(subcommand: str, cfg: RunConfig, out_dir=None, timings=True):
    """Run a subcommand; returns (exit_code, report dict). Artifacts land in ``out_dir``."""
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}; expected one of {SUBCOMMANDS}")
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    r = Run(cfg, out_dir, timings)
    error = None
    try:
        r.execute(subcommand)
    except StageError as exc:
        error = {"stage": exc.stage, "type": type(exc.exc).__name__, "message": str(exc.exc)}
    rep = r.report(subcommand, error)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(rep, fh, sort_keys=True, indent=2)
        fh.write("\n")
    code = 2 if error else (0 if rep["status"] == "ok" else 1)
    return code, rep


def build_parser():
    p = argparse.ArgumentParser(prog="sectorpass",
                                description="Sign-changing solutions of -Laplace u = f(u) on the unit disk.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="key = value configuration file (defaults apply when omitted)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock timings from report.json")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else parse_config("")
    except (ConfigError, OSError) as exc:
        print(f"sectorpass: config error: {exc}", file=sys.stderr)
        return 2
    code, rep = run(args.subcommand, cfg, args.out, timings=not args.no_timings)
    if rep["error"]:
        err = rep["error"]
        print(f"sectorpass: {err['stage']} failed: {err['message']}", file=sys.stderr)
    else:
        failed = [k for k, v in rep["invariants"].items() if not v]
        for k in failed:
            print(f"sectorpass: invariant failed: {k}", file=sys.stderr)
    print(f"sectorpass {args.subcommand}: {rep['status']} "
          f"(report at {os.path.join(args.out or cfg.output_dir, 'report.json')})")
    return code


if __name__ == "__main__":
    sys.exit(main())
