import math

import numpy as np
import pytest

from src.rellich.identities import (
    EVIDENCE_NOTE,
    HermitianTriple,
    IdentityChecker,
    IdentityReport,
    Tolerances,
    check_abstract_lemma,
    check_corollary,
    check_hardy,
    check_lemma_batch,
    check_proof_chain,
    check_rellich_equalities,
    check_rellich_inequality,
    check_theorem2,
    equality_report,
    extremiser_scan,
    inequality_report,
    strict_report,
)
from src.rellich.quadrature import (
    Estimate,
    Integrator,
    QuadratureSettings,
    QuadratureSpec,
    RadialRule,
    sphere_product_rule,
)
from src.utils.errors import ConfigError, DimensionError, EvaluationError, QuadratureError
from tests.conftest import field

PI52 = math.pi**2.5


@pytest.fixture
def gaussian_checker(gaussian, quadrature):
    return IdentityChecker(gaussian, quadrature)


def by_name(reports):
    return {r.name: r for r in reports}


def test_equality_report_uses_floor():
    report = equality_report(
        "demo", "close", Estimate.exact(1.0), Estimate.exact(1.0 + 1e-12), {}, Tolerances()
    )
    assert report.passed
    assert report.tolerance == 1e-10
    assert report.abs_residual == pytest.approx(1e-12)


def test_equality_report_fails_beyond_tolerance():
    report = equality_report(
        "demo", "far", Estimate(1.0, coarse=1.0), Estimate(1.001, coarse=1.001), {}, Tolerances()
    )
    assert not report.passed
    assert report.rel_residual == pytest.approx(1e-3 / 1.001)


def test_tolerance_follows_error_estimate():
    lhs = Estimate(2.0, coarse=2.0 + 1e-8)
    report = equality_report("demo", "loose", lhs, Estimate.exact(2.0 + 1e-8), {"lhs": lhs}, Tolerances())
    assert report.tolerance == pytest.approx(10 * 1e-8 / (2.0 + 1e-8), rel=1e-6)
    assert report.passed
    assert report.note == ""


def test_large_error_estimate_is_unresolved():
    lhs = Estimate(2.0, coarse=2.0 + 1e-6)
    report = equality_report("demo", "loose", lhs, Estimate.exact(2.0), {"lhs": lhs}, Tolerances())
    assert report.tolerance > Tolerances().max_relative
    assert report.rel_residual == 0.0
    assert not report.passed
    assert "unresolved" in report.note


def test_unresolved_inequality_fails():
    lhs = Estimate(1.0, coarse=1.1)
    report = inequality_report("demo", "le", lhs, Estimate.exact(2.0), {"lhs": lhs}, Tolerances())
    assert report.abs_residual == 0.0
    assert not report.passed
    assert "unresolved" in report.note


def test_monte_carlo_tolerance_is_not_capped():
    tolerances = Tolerances()
    deterministic = Estimate(1.0, coarse=1.1)
    sampled = Estimate(1.0, batches=np.array([0.9, 1.0, 1.1]))
    assert tolerances.unresolved(deterministic, 1e-3) is not None
    assert tolerances.unresolved(deterministic, 1e-7) is None
    assert tolerances.unresolved(sampled, 1e-3) is None


def test_coarse_rule_cannot_pass_rellich(gaussian):
    checker = IdentityChecker(gaussian, QuadratureSettings(radial_n=8))
    reports = checker.rellich_equalities()
    assert reports
    for report in reports:
        assert not report.passed
        assert "unresolved" in report.note


def test_inequality_report_violation():
    ok = inequality_report("demo", "le", Estimate.exact(1.0), Estimate.exact(2.0), {}, Tolerances())
    assert ok.passed and ok.abs_residual == 0.0
    bad = inequality_report("demo", "le", Estimate.exact(2.0), Estimate.exact(1.0), {}, Tolerances())
    assert not bad.passed and bad.abs_residual == 1.0


def test_strict_report_has_zero_tolerance():
    assert strict_report("demo", "lt", 0.5, 1.0, 1e-10, {}).passed
    report = strict_report("demo", "lt", 1.0, 1.0, 1e-10, {"x": (1.0, 0.0)})
    assert not report.passed
    assert report.tolerance == 0.0
    assert report.kind == "strict"


def test_report_rejects_non_finite_values():
    with pytest.raises(EvaluationError):
        IdentityReport("demo", "nan", (), float("nan"), 0.0, 0.0, 0.0, 1e-10, False)


def test_report_record_layout(gaussian_checker):
    record = gaussian_checker.rellich_equalities()[0].as_record()
    assert record["suite"] == "rellich"
    assert record["identity"] == "rellich_form_1"
    assert record["n"] == 5
    assert record["field"] == "GaussianRadial(sigma=1)"
    assert record["pass"] is True
    assert record["seed"] is None
    assert len(record["quadrature"]) == 16
    assert list(record["terms"]) == [
        "f_over_r2", "lhs", "bessel", "rellich_r1", "rellich_r2", "2c*rellich_r2",
    ]


def test_gaussian_rellich_ledger(gaussian_checker):
    reports = gaussian_checker.rellich_equalities()
    assert [r.name for r in reports] == ["rellich_form_1", "rellich_form_2", "rellich_form_3"]
    for report in reports:
        assert report.passed, report
        assert report.rel_residual < 1e-10
        terms = report.term_values
        assert terms["f_over_r2"] == pytest.approx(4 * PI52 / 3, rel=1e-10)
        assert terms["lhs"] == pytest.approx(36.44459, rel=1e-6)
        assert terms["bessel"] == pytest.approx(35 * PI52 / 4, rel=1e-10)
        assert terms["rellich_r1"] == pytest.approx(5 * PI52, rel=1e-10)
        assert terms["rellich_r2"] == pytest.approx(2 * PI52 / 3, rel=1e-10)
        assert terms["2c*rellich_r2"] == pytest.approx(29.15568, rel=1e-6)


def test_gaussian_rellich_implication(gaussian_checker):
    report = gaussian_checker.rellich_implication()
    assert report.passed
    assert report.kind == "inequality"
    assert report.lhs < report.rhs


def test_gaussian_hardy(gaussian_checker):
    reports = by_name(gaussian_checker.hardy())
    assert set(reports) == {"hardy_divergence_form", "hardy_remainder_form"}
    for report in reports.values():
        assert report.passed
        assert report.lhs == pytest.approx(1.5 * PI52, rel=1e-10)
    remainder = reports["hardy_remainder_form"]
    assert remainder.term("hardy_remainder") == pytest.approx(PI52, rel=1e-10)
    assert remainder.term("radial_d1") == pytest.approx(2.5 * PI52, rel=1e-10)


def test_hardy_in_dimension_three():
    reports = check_hardy(field("GaussianRadial", n=3, sigma=0.7))
    assert all(r.passed for r in reports)


def test_rellich_needs_dimension_five():
    checker = IdentityChecker(field("GaussianRadial", n=4))
    with pytest.raises(DimensionError, match="n ≥ 5 required"):
        checker.rellich_equalities()


def test_gaussian_rellich_inequality(gaussian_checker):
    report = gaussian_checker.rellich_inequality()
    assert report.passed
    assert report.term("rho_squared") == pytest.approx(5 / 21, rel=1e-10)
    assert report.lhs == pytest.approx(math.sqrt(5 / 21), rel=1e-10)


def test_gaussian_theorem2_and_corollary(gaussian_checker):
    reports = gaussian_checker.theorem2()
    assert all(r.passed for r in reports)
    decomposition = reports[0]
    assert decomposition.term("laplacian") == pytest.approx(35 * PI52 / 4, rel=1e-10)
    assert abs(decomposition.term("spherical_laplacian")) < 1e-20
    corollary = by_name(gaussian_checker.corollary())
    assert set(corollary) == {"bessel_below_laplacian", "radial_equality"}
    assert all(r.passed for r in corollary.values())
    equality = corollary["radial_equality"]
    assert equality.abs_residual <= 1e-9 * equality.term("laplacian")


@pytest.mark.parametrize(
    "family, values",
    [("SolidGaussian", {"axis": 2}), ("PolyGaussian", {"alpha": (2, 0, 1)})],
)
def test_theorem2_on_non_radial_fields(family, values, quadrature):
    checker = IdentityChecker(field(family, **values), quadrature)
    for report in checker.theorem2():
        assert report.passed, report
        assert report.term("spherical_laplacian") > 0
    corollary = by_name(checker.corollary())
    assert set(corollary) == {"bessel_below_laplacian", "gap_equals_angular_sum", "non_radial_gap"}
    assert all(r.passed for r in corollary.values())
    assert corollary["gap_equals_angular_sum"].term("gap") > 0
    assert corollary["non_radial_gap"].note == EVIDENCE_NOTE


def test_solid_gaussian_gap_is_a_visible_share(solid, quadrature):
    corollary = by_name(IdentityChecker(solid, quadrature).corollary())
    gap = corollary["gap_equals_angular_sum"]
    assert gap.term("gap") >= 1e-2 * gap.term("laplacian")
    assert gap.rel_residual < 1e-7
    assert corollary["bessel_below_laplacian"].lhs < corollary["bessel_below_laplacian"].rhs


def test_solid_gaussian_theorem2_matches_closed_forms(solid, quadrature):
    from src.rellich.fields import closed_form_norms

    exact = closed_form_norms(solid.params)
    report = IdentityChecker(solid, quadrature).theorem2()[0]
    c = 5 / 4
    assert report.term("laplacian") == pytest.approx(exact["laplacian"], rel=1e-10)
    assert report.term("bessel") == pytest.approx(exact["bessel"], rel=1e-10)
    assert report.term("spherical_laplacian") == pytest.approx(exact["spherical_laplacian"], rel=1e-10)
    assert report.term("2c*spherical_over_r") == pytest.approx(2 * c * exact["spherical_over_r"], rel=1e-10)
    assert report.term("2*spherical_hardy") == pytest.approx(2 * exact["spherical_hardy"], rel=1e-10)


def test_laplacian_norm_is_shared_across_suites(gaussian_checker):
    rellich = gaussian_checker.rellich_equalities()[0]
    theorem2 = gaussian_checker.theorem2()[0]
    assert rellich.term("bessel") == theorem2.term("bessel")


def test_gaussian_proof_chain(gaussian_checker):
    reports = by_name(gaussian_checker.proof_chain())
    assert {
        "by_parts_first", "radial_split", "hardy_on_f_over_r", "cross_term",
        "first_order_rellich", "second_integral_split", "cubic_weight", "assembled",
        "lemma_reconstruction_first", "lemma_reconstruction_fourth", "laplacian_expansion",
        "exchange", "by_parts_step", "bessel_expansion_integrated",
        "spherical_intermediate", "spherical_energy",
    } == set(reports)
    for name, report in reports.items():
        assert report.passed, name
    assert reports["cubic_weight"].lhs == pytest.approx(-11.66227, rel=1e-6)
    assert reports["cross_term"].term("cross") == pytest.approx(-34.98681, rel=1e-6)


@pytest.mark.slow
def test_solid_gaussian_proof_chain(solid, quadrature):
    for report in IdentityChecker(solid, quadrature).proof_chain():
        assert report.passed, report.name


@pytest.mark.slow
@pytest.mark.parametrize("n", [6, 7])
def test_rellich_in_higher_dimensions(n, quadrature):
    checker = IdentityChecker(field("GaussianRadial", n=n, sigma=1.3), quadrature)
    assert all(r.passed for r in checker.rellich_equalities())
    assert checker.rellich_inequality().passed


def test_annulus_bump_rellich(quadrature):
    from dataclasses import replace

    settings = replace(quadrature, radial_n=200)
    checker = IdentityChecker(field("AnnulusBump", r0=1.0, r1=2.0), settings)
    for report in checker.rellich_equalities():
        assert report.passed, report
        assert report.rel_residual < 1e-7


def test_zero_field():
    checker = IdentityChecker(field("Zero"))
    assert all(r.passed for r in checker.rellich_equalities())
    report = checker.rellich_inequality()
    assert report.passed
    assert "vacuous" in report.note


def _shifted_bump():
    return field("ShiftedBump", center=(1.5, 0.0, 0.0, 0.0, 0.0), radius=0.5)


def test_rule_missing_the_support_is_an_error():
    f = _shifted_bump()
    # every node has 3 < |x| < 4; the bump lives in 1 <= |x| <= 2
    spec = QuadratureSpec(
        5, RadialRule.build("legendre", 8, (3.0, 4.0)), sphere=sphere_product_rule(5, 2)
    )
    checker = IdentityChecker(f, integrator=Integrator(spec))
    with pytest.raises(QuadratureError, match="misses the field's support"):
        checker.rellich_equalities()
    with pytest.raises(QuadratureError):
        checker.rellich_inequality()


@pytest.mark.slow
def test_shifted_bump_off_the_origin(quadrature):
    checker = IdentityChecker(_shifted_bump(), quadrature)
    for report in checker.theorem2() + checker.rellich_equalities():
        assert report.passed, report
        assert report.rel_residual < 1e-7
        assert "unresolved" not in report.note
    inequality = checker.rellich_inequality()
    assert inequality.passed
    assert "vacuous" not in inequality.note
    assert 0.0 < inequality.term("rho") < 1.0
    gap = by_name(checker.corollary())["non_radial_gap"]
    assert gap.passed


@pytest.mark.slow
@pytest.mark.parametrize("n", [8, 9])
def test_monte_carlo_in_high_dimensions(n):
    settings = QuadratureSettings(seed=7, mc_samples=1_000_000)
    checker = IdentityChecker(field("GaussianRadial", n=n), settings)
    assert checker.spec.monte_carlo
    reports = checker.rellich_equalities() + checker.hardy()
    for report in reports:
        assert report.passed, report
        assert report.fingerprint.seed == 7


def test_complex_field_rellich(quadrature):
    checker = IdentityChecker(field("ComplexSolidGaussian", axis_re=1, axis_im=2), quadrature)
    from src.rellich.fields import closed_form_norms

    exact = closed_form_norms(checker.field.params)
    report = checker.rellich_equalities()[0]
    assert report.passed
    assert report.term("f_over_r2") == pytest.approx(exact["f_over_r2"], rel=1e-10)


def test_lemma_worked_example():
    t = HermitianTriple([1.0, 0.0], [0.0, 1.0], 2.0)
    assert t.a == 1.0
    report = check_abstract_lemma(t)
    assert report.passed
    assert report.term("a") == 1.0


def test_lemma_zero_vectors():
    t = HermitianTriple([0.0], [0.0], 3.0)
    assert t.a == 0.0
    assert check_abstract_lemma(t).passed


def test_lemma_complex_example():
    t = HermitianTriple([1j, 2.0], [1.0 - 1j, 0.5j], 0.5)
    # ||u||^2 = 5, Re(u|v) = Re(i(1+i)) = -1
    assert t.a == pytest.approx(5.0 - 0.5)
    assert check_abstract_lemma(t).passed


@pytest.mark.parametrize(
    "u, v, c", [([1.0], [1.0, 2.0], 1.0), ([1.0], [1.0], 0.0), ([], [], 1.0)]
)
def test_lemma_rejects_bad_triples(u, v, c):
    with pytest.raises(ConfigError):
        HermitianTriple(u, v, c)


def test_lemma_batch():
    report = check_lemma_batch(1000, seed=7)
    assert report.name == "abstract_lemma_random"
    assert report.passed
    assert report.rel_residual <= 1e-12
    assert report.term("triples") == 1000.0


def test_lemma_batch_is_reproducible():
    a = check_lemma_batch(50, seed=3)
    b = check_lemma_batch(50, seed=3)
    assert a.as_record() == b.as_record()


@pytest.mark.parametrize("deltas", [[], [0.1, 0.2], [0.5, -0.1], [0.3, 0.3]])
def test_scan_rejects_bad_deltas(deltas):
    with pytest.raises(ConfigError) as excinfo:
        extremiser_scan(deltas)
    assert excinfo.value.field == "scan.deltas"


def test_extremiser_scan():
    deltas = [0.5, 0.25, 0.1, 0.05]
    rows, reports = extremiser_scan(deltas, n=5)
    c = 5 / 4
    assert [row.delta for row in rows] == deltas
    for row in rows:
        d = row.delta
        assert row.resolved
        assert row.rho == pytest.approx(
            math.sqrt(c * c / (c * c + 2 * d * c + 4 * d + 3 * d * d)), rel=1e-9
        )
        assert row.rho == pytest.approx(row.expected["rho"], rel=1e-9)
        assert row.share == pytest.approx(d / c**2, rel=1e-9)
        assert row.rho_laplacian == pytest.approx(row.rho, rel=1e-9)
        assert row.rho < 1.0
    rhos = [row.rho for row in rows]
    assert rhos == sorted(rhos)
    named = by_name(reports)
    assert all(named[f"extremiser_rho[delta={d:g}]"].passed for d in deltas)
    assert named["extremiser_rho_increasing"].passed
    assert named["extremiser_share_decreasing"].passed
    assert named["extremiser_share_decreasing"].note == EVIDENCE_NOTE


def test_unresolved_scan_rows_fail():
    coarse = QuadratureSettings(radial_n=6, sphere_degree=2)
    rows, reports = extremiser_scan([0.01], n=5, settings=coarse)
    assert not rows[0].resolved
    report = reports[0]
    assert not report.passed
    assert report.tolerance == Tolerances().resolution
    assert report.rel_residual == rows[0].quadrature_error
    assert np.isfinite(report.rel_residual)


def _trend(values, errors, increasing=True):
    from types import SimpleNamespace

    from src.rellich.identities import _monotone_report

    rows = [SimpleNamespace(delta=0.5 / 2**k) for k in range(len(values))]
    return _monotone_report(
        "trend", rows, values, errors, increasing, None, Tolerances().strict_margin
    )


def test_flat_trend_is_not_monotone():
    report = _trend([0.9, 0.9, 0.9], [0.0, 0.0, 0.0])
    assert not report.passed
    assert report.kind == "strict"


def test_trend_must_clear_its_error_bars():
    assert _trend([0.90, 0.92, 0.95], [1e-4, 1e-4, 1e-4]).passed
    assert not _trend([0.90, 0.92], [0.01, 0.01]).passed
    assert _trend([0.3, 0.2], [0.0, 0.0], increasing=False).passed


def test_single_delta_scan_shows_no_trend():
    rows, reports = extremiser_scan([0.1], n=5)
    named = by_name(reports)
    assert rows[0].resolved
    assert named["extremiser_rho[delta=0.1]"].passed
    for name in ("extremiser_rho_increasing", "extremiser_share_decreasing"):
        assert not named[name].passed
        assert "no trend" in named[name].note


@pytest.mark.parametrize(
    "check",
    [
        check_rellich_equalities,
        check_theorem2,
        check_corollary,
        check_rellich_inequality,
        check_proof_chain,
    ],
)
def test_module_level_checks(check, gaussian, quadrature):
    result = check(gaussian, quadrature)
    reports = [result] if isinstance(result, IdentityReport) else list(result)
    assert reports
    assert all(r.passed for r in reports)
    assert {r.fingerprint.n for r in reports} == {5}
