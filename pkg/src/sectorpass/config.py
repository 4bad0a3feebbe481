"""Line-based ``key = value`` run configuration."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .moser import DEFAULT_N
from .nonlinearity import MODELS


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class RunConfig:
    m: int = 1
    mesh_h: float = 0.02
    mesh_grading: float = 2.0
    mesh_focus_levels: int = 4
    model: str = "canonical"
    lam: float = 1.0
    solver_mode: str = "mpa"
    solver_tol: float = 1e-6
    solver_path_points: int = 64
    solver_max_iters: int = 3000
    moser_n_list: tuple = DEFAULT_N
    ablation_perturbation: float = 1e-3
    probe_directions: int = 100
    heatmap_size: int = 256
    seed: int = 0
    output_dir: str = "out"

    def to_dict(self):
        d = asdict(self)
        d["moser_n_list"] = list(self.moser_n_list)
        return d


def _int(text):
    v = float(text) if any(c in text for c in ".eE") else int(text, 10)
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        v = int(v)
    return v


def _float(text):
    return float(text)


def _choice(options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return conv


def _n_list(text):
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise ValueError("n_list must contain at least one integer")
    return tuple(_int(p) for p in items)


def _in(lo, hi, lo_open=False):
    def check(v):
        if isinstance(v, tuple):
            return all(check(x) for x in v)
        if lo_open:
            return lo < v <= hi
        return lo <= v <= hi
    return check


# config key -> (RunConfig field, converter, range check, range description)
KEYS = {
    "m": ("m", _int, _in(1, 10), "1 <= m <= 10"),
    "mesh.h": ("mesh_h", _float, _in(0.0, 0.5, lo_open=True), "0 < h <= 0.5"),
    "mesh.grading": ("mesh_grading", _float, _in(1.0, 4.0), "1 <= grading <= 4"),
    "mesh.focus_levels": ("mesh_focus_levels", _int, _in(0, 8), "0 <= focus_levels <= 8"),
    "nonlinearity.model": ("model", _choice(MODELS), lambda v: True, ""),
    "nonlinearity.lambda": ("lam", _float, _in(0.0, 1e6, lo_open=True), "0 < lambda <= 1e6"),
    "solver.mode": ("solver_mode", _choice(("mpa", "nehari")), lambda v: True, ""),
    "solver.tol": ("solver_tol", _float, _in(0.0, 0.1, lo_open=True), "0 < tol <= 0.1"),
    "solver.path_points": ("solver_path_points", _int, _in(4, 4096), "4 <= path_points <= 4096"),
    "solver.max_iters": ("solver_max_iters", _int, _in(1, 10**6), "1 <= max_iters <= 1e6"),
    "moser.n_list": ("moser_n_list", _n_list, _in(2, 10**12), "every n in 2..1e12"),
    "ablation.perturbation": ("ablation_perturbation", _float, _in(0.0, 1.0), "0 <= perturbation <= 1"),
    "probe.directions": ("probe_directions", _int, _in(1, 10**4), "1 <= directions <= 1e4"),
    "heatmap.size": ("heatmap_size", _int, _in(16, 4096), "16 <= size <= 4096"),
    "seed": ("seed", _int, _in(0, 2**63 - 1), "0 <= seed < 2^63"),
    "output.dir": ("output_dir", str, lambda v: bool(v), "non-empty path"),
}

assert {k[0] for k in KEYS.values()} == {f.name for f in fields(RunConfig)}


def parse_config(text: str) -> RunConfig:
    values = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed line {raw.strip()!r} (expected 'key = value')", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno)
        if not value:
            raise ConfigError(f"missing value for {key!r}", lineno)
        name, conv, ok, desc = KEYS[key]
        try:
            v = conv(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
        if not ok(v):
            raise ConfigError(f"{key} = {value} is out of range ({desc})", lineno)
        seen[key] = lineno
        values[name] = v
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def config_keys():
    return dict(KEYS)


__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "config_keys"]
