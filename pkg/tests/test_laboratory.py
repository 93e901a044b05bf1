import io
import json

import numpy as np
import pytest

import rellich_lab
from src.laboratory import EXIT_CONFIG, EXIT_FAILED, EXIT_PASS, EXIT_RUNTIME, RellichLaboratory, sample_points
from src.rellich.identities import IdentityChecker
from src.rellich.quadrature import SphereRule
from src.utils.config import load_config
from src.utils.errors import ConfigError, DimensionError, EvaluationError
from src.utils.output import ReportWriter
from tests.conftest import field


def read_records(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_lemma_suite_passes(capsys):
    assert rellich_lab.main(["run", "--suite", "lemma", "--seed", "7"]) == EXIT_PASS
    out = capsys.readouterr().out
    assert "[PASS] lemma/abstract_lemma_random" in out


def test_rellich_suite_json_lines(tmp_path):
    out = tmp_path / "reports.jsonl"
    code = rellich_lab.main(
        ["run", "--suite", "rellich", "--format", "json-lines", "--out", str(out)]
    )
    assert code == EXIT_PASS
    records = read_records(out)
    assert records[0]["record"] == "manifest"
    assert records[0]["tool"] == "rellich-lab"
    assert "d-2" in records[0]["error_model"]
    assert "batch means" in records[0]["error_model"]
    reports = records[1:]
    assert [r["identity"] for r in reports] == [
        "rellich_form_1",
        "rellich_form_2",
        "rellich_form_3",
        "rellich_implies_inequality",
    ]
    assert all(r["pass"] for r in reports)
    assert reports[0]["terms"]["f_over_r2"]["value"] == pytest.approx(23.32454, rel=1e-6)


def test_csv_output(tmp_path):
    out = tmp_path / "reports.csv"
    code = rellich_lab.main(
        ["run", "--suite", "inequality", "--format", "csv", "--out", str(out)]
    )
    assert code == EXIT_PASS
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# manifest ")
    assert lines[1].startswith("suite,identity,n,field,kind")
    assert len(lines) == 3
    assert "rho_squared=" in lines[2]


def test_dimension_four_is_a_config_error():
    assert rellich_lab.main(["run", "--dim", "4", "--suite", "rellich"]) == EXIT_CONFIG


def test_hardy_admits_dimension_three(tmp_path):
    out = tmp_path / "hardy.jsonl"
    code = rellich_lab.main(
        ["run", "--dim", "3", "--suite", "hardy", "--format", "json-lines", "--out", str(out)]
    )
    assert code == EXIT_PASS
    assert {r["n"] for r in read_records(out)[1:]} == {3}


def test_pointwise_suite(tmp_path):
    out = tmp_path / "pointwise.jsonl"
    code = rellich_lab.main(
        [
            "run", "--suite", "pointwise", "--seed", "7", "--field", "SolidGaussian:axis=2",
            "--format", "json-lines", "--out", str(out),
        ]
    )
    assert code == EXIT_PASS
    reports = read_records(out)[1:]
    assert {r["kind"] for r in reports} == {"pointwise"}
    assert "bessel_expansion" in {r["identity"] for r in reports}
    bessel = next(r for r in reports if r["identity"] == "bessel_expansion")
    assert set(bessel["terms"]) == {"max_abs_lhs", "max_abs_rhs"}
    assert bessel["lhs"] == bessel["terms"]["max_abs_lhs"]["value"] > 0
    assert bessel["rhs"] == pytest.approx(bessel["lhs"], rel=1e-6)
    assert bessel["note"].startswith("worst over ")


def test_pointwise_without_seed_is_a_config_error():
    assert rellich_lab.main(["run", "--suite", "pointwise"]) == EXIT_CONFIG


def test_emit_rule_round_trip(tmp_path):
    out = tmp_path / "sphere.txt"
    assert rellich_lab.main(["emit-rule", "--dim", "5", "--degree", "6", "--out", str(out)]) == 0
    rule = SphereRule.from_text(out.read_text())
    assert rule.n == 5 and rule.degree == 6
    assert rule.weights.sum() == pytest.approx(26.31894, rel=1e-6)


@pytest.mark.parametrize("dim, degree", [(12, 6), (5, 5)])
def test_emit_rule_rejects_unsupported_requests(dim, degree):
    assert rellich_lab.main(["emit-rule", "--dim", str(dim), "--degree", str(degree)]) == EXIT_CONFIG


def test_invalid_workers_environment(monkeypatch):
    monkeypatch.setenv("RELLICH_LAB_WORKERS", "many")
    assert rellich_lab.main(["run", "--suite", "rellich"]) == EXIT_CONFIG


def _report_lines(path):
    return [line for line in path.read_text().splitlines() if '"record": "report"' in line]


def test_output_does_not_depend_on_workers(tmp_path):
    outputs = []
    for workers in ("1", "3"):
        out = tmp_path / f"workers{workers}.jsonl"
        code = rellich_lab.main(
            [
                "run", "--suite", "hardy", "--suite", "rellich",
                "--field", "GaussianRadial:sigma=1", "--field", "SolidGaussian:axis=1",
                "--workers", workers, "--format", "json-lines", "--out", str(out),
            ]
        )
        assert code == EXIT_PASS
        outputs.append(_report_lines(out))
    assert outputs[0] == outputs[1]
    assert len(outputs[0]) == 12


def test_unresolved_scan_exits_with_failure(tmp_path):
    config = tmp_path / "scan.yml"
    config.write_text(
        "suites: [scan]\n"
        "scan:\n  deltas: [0.01]\n"
        "quadrature:\n  radial_n: 6\n  sphere_degree: 2\n"
    )
    assert rellich_lab.main(["run", "--config", str(config)]) == EXIT_FAILED


def test_runtime_errors_are_reported(monkeypatch):
    def broken(self):
        raise EvaluationError("ln outside its domain", operation="ln")

    monkeypatch.setattr(IdentityChecker, "rellich_equalities", broken)
    laboratory = RellichLaboratory(load_config(overrides={"suites": ["rellich"]}))

    assert laboratory.run(ReportWriter(io.StringIO())) == EXIT_RUNTIME
    assert laboratory.stats["errors"] == 1
    assert "ln outside its domain" in laboratory.errors[0]


def test_config_file_and_flags(tmp_path):
    config = tmp_path / "run.yml"
    config.write_text(
        "dimensions: [5, 6]\n"
        "fields:\n  - family: SolidGaussian\n    axis: 2\n  - AnnulusBump:r0=1,r1=2\n"
        "suites: [rellich, theorem2]\n"
        "quadrature:\n  sphere_degree: 6\n"
    )
    run = load_config(str(config), {"seed": 11})
    assert run.dimensions == (5, 6)
    assert [p.label for p in run.field_params(6)] == [
        "SolidGaussian(axis=2)",
        "AnnulusBump(r0=1,r1=2)",
    ]
    assert run.quadrature.sphere_degree == 6
    assert run.quadrature.seed == 11
    assert len(RellichLaboratory(run).tasks()) == 4


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"suites": ["nope"]}, "suites[0]"),
        ({"suites": []}, "suites"),
        ({"suites": ["lemma"]}, "seed"),
        ({"dimensions": [8], "quadrature": {"sphere": "product"}}, "quadrature.sphere"),
        ({"quadrature": {"nodes": 5}}, "quadrature"),
        ({"quadrature": {"sphere_degree": 7}}, "quadrature.sphere_degree"),
        ({"tolerance": {"slack": 1.0}}, "tolerance"),
        ({"suites": ["scan"], "scan": {"deltas": [0.1, 0.2]}}, "scan.deltas"),
        ({"fields": [{"sigma": 1.0}]}, "fields"),
        ({"fields": ["GaussianRadial:sigma=-1"]}, "fields"),
        ({"output": {"format": "xml"}}, "output.format"),
        ({"dimensions": [9]}, "seed"),
    ],
)
def test_config_validation(overrides, key):
    with pytest.raises(ConfigError) as excinfo:
        load_config(overrides=overrides)
    assert excinfo.value.field == key


def test_dimension_errors_name_the_minimum():
    with pytest.raises(DimensionError, match="n ≥ 5 required"):
        load_config(overrides={"dimensions": [4]})
    with pytest.raises(DimensionError, match="n ≤ 9 supported"):
        load_config(overrides={"dimensions": [10], "seed": 1})
    assert load_config(overrides={"dimensions": [3], "suites": ["hardy"]}).dimensions == (3,)


def test_sample_points_respect_support():
    f = field("AnnulusBump", r0=1.0, r1=2.0)
    x = sample_points(f, 200, 0.2, 4.0, seed=5)
    r = np.linalg.norm(x, axis=1)
    assert np.all((r >= 1.0) & (r <= 2.0))
    assert np.array_equal(x, sample_points(f, 200, 0.2, 4.0, seed=5))
    assert not np.array_equal(x, sample_points(f, 200, 0.2, 4.0, seed=5, stream=1))
