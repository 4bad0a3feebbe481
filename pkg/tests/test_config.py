import pytest

from sectorpass.config import ConfigError, RunConfig, config_keys, load_config, parse_config
from sectorpass.moser import DEFAULT_N


def test_empty_gives_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert (cfg.m, cfg.model, cfg.lam, cfg.mesh_h) == (1, "canonical", 1.0, 0.02)
    assert cfg.moser_n_list == DEFAULT_N


def test_values_and_comments():
    cfg = parse_config("""
# a comment line
m = 3
nonlinearity.model = cubic   # trailing comment
nonlinearity.lambda = 2.5
moser.n_list = 100, 1e4, 1000000
solver.mode = nehari
""")
    assert cfg.m == 3 and cfg.model == "cubic" and cfg.lam == 2.5
    assert cfg.moser_n_list == (100, 10000, 1000000)
    assert cfg.solver_mode == "nehari"


@pytest.mark.parametrize("text, line, fragment", [
    ("m = 0", 1, "out of range"),
    ("\nmesh.h = 0", 2, "out of range"),
    ("m = 1\nbogus = 3", 2, "unknown key"),
    ("m = 1\nm = 2", 2, "duplicate"),
    ("just words", 1, "malformed"),
    ("m =", 1, "missing value"),
    ("m = 1.5", 1, "integer"),
    ("nonlinearity.model = quartic", 1, "expected one of"),
    ("nonlinearity.lambda = abc", 1, "bad value"),
    ("moser.n_list = ,", 1, "at least one"),
    ("moser.n_list = 100, 1", 1, "out of range"),
])
def test_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigError, match=fragment) as info:
        parse_config(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_load_and_roundtrip(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("m = 2\noutput.dir = results\n")
    cfg = load_config(p)
    assert cfg.m == 2 and cfg.output_dir == "results"
    d = cfg.to_dict()
    assert isinstance(d["moser_n_list"], list)
    assert set(config_keys()) >= {"m", "mesh.h", "nonlinearity.model", "moser.n_list"}
