import pytest

from busefield.errors import ValidationError
from busefield.verify import (ALL_SUITES, REGISTRY, SuiteConfig, claims_for,
                              default_config, run_suite, write_report)


def test_registry_claim_ids_are_unique():
    ids = [c.claim_id for c in REGISTRY]
    assert len(ids) == len(set(ids))


def test_every_registry_suite_is_known():
    assert all(c.suite in ALL_SUITES for c in REGISTRY)


@pytest.mark.parametrize("kind", ["euclidean", "half_plane", "cylinder",
                                  "paraboloid"])
def test_default_config_is_valid(kind):
    cfg = default_config(kind)
    assert claims_for(kind, cfg.suites)


def test_unknown_chart_kind_is_rejected():
    with pytest.raises(ValidationError):
        SuiteConfig(chart_kind="torus")


def test_unknown_suite_is_rejected():
    with pytest.raises(ValidationError):
        SuiteConfig(chart_kind="euclidean", suites=("distance", "nope"))


@pytest.fixture(scope="module")
def euclid_distance_report():
    cfg = default_config("euclidean", suites=("distance",))
    return run_suite(cfg)


def test_distance_suite_passes(euclid_distance_report):
    report = euclid_distance_report
    assert report.overall_pass
    assert not report.missing_claims
    assert all(r.status == "PASS" for r in report.records)


def test_report_is_deterministic(euclid_distance_report):
    cfg = default_config("euclidean", suites=("distance",))
    again = run_suite(cfg)
    assert again.canonical_text() == euclid_distance_report.canonical_text()


def test_csv_rows_runtime_column_is_separable(euclid_distance_report):
    rows = euclid_distance_report.csv_rows()
    header = rows[0].split(",")
    runtime_col = header.index("runtime")
    stripped = ["," .join(r.split(",")[:runtime_col]) for r in rows[1:]]
    again = run_suite(default_config("euclidean", suites=("distance",)))
    stripped2 = [",".join(r.split(",")[:runtime_col])
                 for r in again.csv_rows()[1:]]
    assert stripped == stripped2


def test_write_report_emits_text_and_csv(tmp_path, euclid_distance_report):
    txt = tmp_path / "report.txt"
    csv = tmp_path / "report.csv"
    write_report(euclid_distance_report, str(txt), str(csv))
    body = txt.read_text()
    assert "overall: PASS" in body
    assert body.startswith("# generated:")
    assert csv.read_text().splitlines()[0].startswith("claim_id,")


def test_corrupted_fields_fail_residual_checks():
    from dataclasses import replace
    cfg = replace(default_config("euclidean", suites=("busemann",)),
                  corrupt_fields=True, field_resolutions=(65,))
    report = run_suite(cfg)
    failed = {r.claim_id for r in report.records if r.status == "FAIL"}
    assert "eikonal_unit_gradient" in failed
    assert not report.overall_pass
