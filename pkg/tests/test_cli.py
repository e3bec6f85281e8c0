import math

import numpy as np
import pytest

from busefield.cli import dispatch, parse_config
from busefield.eikonal import load_field_csv
from busefield.errors import ConfigError

BASE_CFG = """
# demo experiment
[chart]
kind = euclidean
bounds = -2, 2, -2, 2
resolution = 65, 65

[objects]
point p0 = 0.0, 0.0
point base = 0.0, 0.0
ray r0 = 0.0, 0.0, 1.0, 0.0, 30.0
line l0 = 0.0, 0.0, 1.0, 0.0, 30.0
line l1 = 0.0, 1.0, 1.0, 0.0, 30.0
circle k0 = 0.0, 0.0, 8.0
circle k1 = 0.0, 0.0, 12.0
circle k2 = 0.0, 0.0, 16.0

[solver]
schedule = 12, 18, 24
cauchy_tol = 0.5
dt = 0.02
seed = 0

[outputs]
format = csv
"""


@pytest.fixture(scope="module")
def cfg_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("cfg")
    p = d / "euclid.cfg"
    p.write_text(BASE_CFG + f"out_dir = {d}\n")
    return str(p)


def test_parse_config_reads_sections(cfg_path):
    cfg = parse_config(cfg_path)
    assert cfg.chart_kind == "euclidean"
    assert cfg.resolution == (65, 65)
    assert set(cfg.rays) == {"r0"}
    assert set(cfg.lines) == {"l0", "l1"}
    assert cfg.schedule == (12.0, 18.0, 24.0)


def test_unknown_key_is_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[chart]\nkind = euclidean\ncolour = blue\n")
    with pytest.raises(ConfigError):
        parse_config(str(p))
    assert dispatch(["distance", "--config", str(p)]) == 2


def test_out_of_range_tolerance_exits_two(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[chart]\nkind = euclidean\n[solver]\ndt = 0\n")
    assert dispatch(["distance", "--config", str(p)]) == 2


def test_missing_config_file_exits_two():
    assert dispatch(["distance", "--config", "/nonexistent.cfg"]) == 2


def test_no_subcommand_exits_two():
    assert dispatch([]) == 2


def test_distance_writes_field(cfg_path, tmp_path, capsys):
    out = tmp_path / "d.csv"
    status = dispatch(["distance", "--config", cfg_path, "--source", "p0",
                       "--out", str(out)])
    assert status == 0
    fld = load_field_csv(str(out))
    assert fld.tag == "distance"
    assert abs(fld.value_at((1.0, 0.0)) - 1.0) < 0.2
    summary = capsys.readouterr().out
    assert "masked fraction" in summary


def test_busemann_round_trip_is_bit_exact(cfg_path, tmp_path):
    out1 = tmp_path / "b.csv"
    out2 = tmp_path / "b2.csv"
    assert dispatch(["busemann", "--config", cfg_path, "--ray", "r0",
                     "--out", str(out1)]) == 0
    assert dispatch(["export", "--in", str(out1), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_export_to_pgm(cfg_path, tmp_path):
    src = tmp_path / "b.csv"
    assert dispatch(["busemann", "--config", cfg_path, "--ray", "r0",
                     "--out", str(src)]) == 0
    out = tmp_path / "b.pgm"
    assert dispatch(["export", "--in", str(src), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0].strip() == "P2"


def test_relate_prints_verdict(cfg_path, capsys):
    status = dispatch(["relate", "--config", cfg_path, "--candidate", "l1",
                       "--reference", "l0", "--relation", "equivalent"])
    assert status == 0
    assert "holds: true" in capsys.readouterr().out


def test_classify_finds_one_class(cfg_path, capsys):
    assert dispatch(["classify", "--config", cfg_path]) == 0
    out = capsys.readouterr().out
    assert "1 equivalence classes" in out


def test_barrier_reports_zero_set(cfg_path, tmp_path, capsys):
    out = tmp_path / "B.csv"
    status = dispatch(["barrier", "--config", cfg_path, "--line", "l0",
                       "--out", str(out)])
    assert status == 0
    assert "Zero set" in capsys.readouterr().out


def test_verify_writes_reports(tmp_path):
    p = tmp_path / "v.cfg"
    p.write_text("[chart]\nkind = euclidean\n[solver]\nsuites = distance\n"
                 f"[outputs]\nout_dir = {tmp_path}\nreport = rep\n")
    assert dispatch(["verify", "--config", str(p)]) == 0
    assert (tmp_path / "rep.txt").exists()
    assert (tmp_path / "rep.csv").exists()
    body = (tmp_path / "rep.txt").read_text()
    assert "overall: PASS" in body
