import json
from pathlib import Path

import numpy as np
import pytest

from doublebubble.cli import main, parse_config, fmt, ConfigError


def write_cfg(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


BASE_CFG = """
chart = round_sphere
chart.a = 1.0
bubble.m = 2
bubble.h0 = 0
bubble.h1 = 3
bubble.h2 = 3
rho_list = 0.2,0.14,0.1
grid = 16,32
sector_nodes = 6
quantities = area,v1
"""


def test_parse_config_defaults_and_rejection(tmp_path):
    cfg = parse_config(write_cfg(tmp_path / "a.cfg", "chart = euclidean\n# comment\n"))
    assert cfg["chart"] == "euclidean"
    assert cfg["bubble.m"] == "2"
    with pytest.raises(ConfigError):
        parse_config(write_cfg(tmp_path / "b.cfg", "unknown_key = 3\n"))
    with pytest.raises(ConfigError):
        parse_config(write_cfg(tmp_path / "c.cfg", "just a line\n"))


def test_fmt_17_digits():
    assert fmt(1.0 / 3.0) == "0.33333333333333331"
    assert fmt(True) == "true"
    assert fmt(float("nan")) == "nan"
    assert fmt(3) == "3"


def test_geometry_and_constants_commands(tmp_path):
    cfg = write_cfg(tmp_path / "run.cfg", BASE_CFG)
    out = tmp_path / "out"
    assert main(["geometry", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "geometry.csv").read_text().splitlines()
    assert lines[0] == "sheet,radius,phi,center,area"
    assert len(lines) == 4
    assert main(["constants", "--config", str(cfg), "--out", str(out)]) == 0
    body = (out / "constants.csv").read_text()
    assert "A," in body and "B," in body


def test_constants_symmetric_values(tmp_path):
    cfg = write_cfg(tmp_path / "run.cfg", BASE_CFG)
    out = tmp_path / "out"
    main(["constants", "--config", str(cfg), "--out", str(out)])
    rows = {l.split(",")[0]: l.split(",") for l in (out / "constants.csv").read_text().splitlines()[1:]}
    r4 = (2.0 / 3.0) ** 4
    assert float(rows["A"][1]) / r4 == pytest.approx(2.86875, abs=1e-12)
    assert float(rows["B"][1]) / r4 == pytest.approx(0.984375, abs=1e-12)
    assert abs(float(rows["A"][3])) <= 1e-10
    assert abs(float(rows["B"][3])) <= 1e-10


def test_verify_flat_chart_exits_zero(tmp_path):
    cfg = write_cfg(
        tmp_path / "flat.cfg",
        BASE_CFG.replace("round_sphere", "euclidean").replace("chart.a = 1.0\n", ""),
    )
    out = tmp_path / "out"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    body = (out / "verify.csv").read_text()
    assert body.splitlines()[0] == "quantity,rho,oracle,expansion,error,slope_so_far"
    assert ",inf," in body or "pass" in body


def test_verify_deterministic_bytes(tmp_path):
    cfg = write_cfg(tmp_path / "run.cfg", BASE_CFG)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["verify", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["verify", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out1 / "verify.csv").read_bytes() == (out2 / "verify.csv").read_bytes()


def test_verify_parallel_matches_serial(tmp_path):
    cfg = write_cfg(tmp_path / "run.cfg", BASE_CFG)
    out1, out2 = tmp_path / "s", tmp_path / "p"
    assert main(["verify", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["verify", "--config", str(cfg), "--out", str(out2), "--jobs", "2"]) == 0
    assert (out1 / "verify.csv").read_bytes() == (out2 / "verify.csv").read_bytes()


def test_predict_command_json_records(tmp_path):
    cfg = write_cfg(
        tmp_path / "p.cfg",
        """
chart = conformal_bump
chart.eps = -0.1
chart.s = 0.5
bubble.m = 2
bubble.h0 = 1
bubble.h1 = 3
bubble.h2 = 2
rho = 0.05
seeds = 0.2,0,0; -0.1,0.15,0
""",
    )
    out = tmp_path / "out"
    assert main(["predict", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "predictions.json").read_text().splitlines()
    assert len(lines) == 1
    rec = json.loads(lines[0])
    for key in ("point", "sc", "hessian_eigs", "mu", "multiplicity", "axis",
                "rho", "curvatures", "phi_leading", "count"):
        assert key in rec
    assert rec["count"] == 2
    assert np.linalg.norm(np.array(rec["point"])) <= 1e-4


def test_curvature_command(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg", BASE_CFG + "points = 0,0,0; 0.2,0.1,-0.1\n")
    out = tmp_path / "out"
    assert main(["curvature", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "curvature.csv").read_text().splitlines()
    assert len(lines) == 3
    first = lines[1].split(",")
    assert float(first[1]) == pytest.approx(6.0, abs=1e-9)


def test_exit_codes(tmp_path):
    bad = write_cfg(tmp_path / "bad.cfg", "nope = 1\n")
    assert main(["geometry", "--config", str(bad), "--out", str(tmp_path)]) == 2
    unbalanced = write_cfg(tmp_path / "ub.cfg", "bubble.h0 = 1\nbubble.h1 = 3\nbubble.h2 = 3\n")
    assert main(["geometry", "--config", str(unbalanced), "--out", str(tmp_path)]) == 2
    # numerically impossible: bubble does not fit the chart at rho
    big = write_cfg(tmp_path / "big.cfg", BASE_CFG + "rho_list = 3.0,2.0,1.0\n")
    assert main(["verify", "--config", str(big), "--out", str(tmp_path)]) == 3


def test_verify_perturbed_path(tmp_path):
    cfg = write_cfg(
        tmp_path / "pert.cfg",
        BASE_CFG + "perturbed = true\nfield_amplitude = 0.02\nseed = 4\n",
    )
    out = tmp_path / "out"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    body = (out / "verify.csv").read_text()
    assert body.count("pass") == 2
