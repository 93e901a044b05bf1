"""
Tolerance-checked reports for the Hardy and Rellich equalities

Every report lists the integrals it is built from, the two sides, the
residual relative to the largest participating term and the tolerance
derived from the quadrature error model. Integrals go through one shared
Integrator per field, so a term used by several identities is computed once.
"""

import logging
import math
from dataclasses import dataclass, field as dataclass_field, replace
from typing import Optional, Tuple

import numpy as np

from src.rellich import operators as ops
from src.rellich.fields import FamilyParams, closed_form_norms, make_field
from src.rellich.quadrature import Estimate, Integrator, QuadratureSettings
from src.utils.errors import ConfigError, EvaluationError, QuadratureError

logger = logging.getLogger("rellich-lab")

EVIDENCE_NOTE = "strictness on sampled fields is evidence, not proof"


@dataclass(frozen=True)
class Tolerances:
    """
    Tolerance model.

    Deterministic rules use ``factor`` times the relative error estimate,
    Monte Carlo uses ``mc_factor`` standard errors; neither goes below
    ``floor``. A deterministic tolerance above ``max_relative`` means the rule
    did not resolve the terms, and the check fails as unresolved.
    """

    floor: float = 1e-10
    factor: float = 10.0
    mc_factor: float = 4.0
    pointwise: float = 1e-9
    lemma: float = 1e-12
    strict_margin: float = 1e-10
    resolution: float = 1e-8
    max_relative: float = 1e-6

    def for_estimates(self, residual, terms, scale):
        if scale <= 0:
            return self.floor
        if residual.monte_carlo:
            return max(self.floor, self.mc_factor * residual.error / scale)
        error = max([residual.error + residual.edge] + [t.error + t.edge for t in terms])
        return max(self.floor, self.factor * error / scale)

    def unresolved(self, residual, tolerance):
        """Note for a deterministic tolerance above ``max_relative``, else None."""
        if residual.monte_carlo or tolerance <= self.max_relative:
            return None
        return (
            f"unresolved: error estimate allows {tolerance:.2e} "
            f"> max_relative {self.max_relative:.0e}"
        )


@dataclass(frozen=True)
class Fingerprint:
    field: str
    n: int
    quadrature: str = "exact"
    seed: Optional[int] = None


@dataclass(frozen=True)
class IdentityReport:
    """
    Outcome of one identity check.

    ``terms`` holds (label, value, error) triples. For equalities the
    residual is |lhs - rhs|; for inequalities lhs <= rhs and the residual is
    the violation; strict reports require lhs + margin <= rhs.
    """

    suite: str
    name: str
    terms: Tuple
    lhs: float
    rhs: float
    abs_residual: float
    rel_residual: float
    tolerance: float
    passed: bool
    error_estimate: float = 0.0
    kind: str = "equality"
    fingerprint: Optional[Fingerprint] = None
    note: str = ""

    def __post_init__(self):
        numbers = [self.lhs, self.rhs, self.abs_residual, self.rel_residual, self.tolerance]
        numbers += [v for _, v, _ in self.terms] + [e for _, _, e in self.terms]
        if not all(math.isfinite(x) for x in numbers):
            raise EvaluationError(f"non-finite value in report '{self.name}'", self.name)

    @property
    def term_values(self):
        return {label: value for label, value, _ in self.terms}

    def term(self, label):
        return self.term_values[label]

    def as_record(self):
        """Flat mapping used by the output writers."""
        fp = self.fingerprint or Fingerprint("", 0)
        return {
            "suite": self.suite,
            "identity": self.name,
            "n": fp.n,
            "field": fp.field,
            "kind": self.kind,
            "terms": {label: {"value": v, "error": e} for label, v, e in self.terms},
            "lhs": self.lhs,
            "rhs": self.rhs,
            "abs_residual": self.abs_residual,
            "rel_residual": self.rel_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "error_estimate": self.error_estimate,
            "seed": fp.seed,
            "quadrature": fp.quadrature,
            "note": self.note,
        }


def _term_table(terms):
    return tuple((label, float(t.value), float(t.error)) for label, t in terms.items())


def _scale(lhs, rhs, terms):
    return max([abs(lhs.value), abs(rhs.value)] + [abs(t.value) for t in terms.values()])


def _with_note(note, extra):
    if not extra:
        return note
    return f"{note}; {extra}" if note else extra


def equality_report(suite, name, lhs, rhs, terms, tolerances, fingerprint=None, note=""):
    """
    Report for lhs = rhs with Estimate sides.

    Args:
        suite (str): Suite the report belongs to
        name (str): Identity name
        lhs (Estimate): Left-hand side
        rhs (Estimate): Right-hand side
        terms (dict): Label to Estimate, in display order
        tolerances (Tolerances): Tolerance model
        fingerprint (Fingerprint, optional): Field and rule identity
        note (str): Free text carried into the output

    Returns:
        IdentityReport: The report
    """
    residual = lhs - rhs
    scale = _scale(lhs, rhs, terms)
    abs_residual = abs(residual.value)
    rel = abs_residual / scale if scale > 0 else abs_residual
    tolerance = tolerances.for_estimates(residual, terms.values(), scale)
    unresolved = tolerances.unresolved(residual, tolerance)
    return IdentityReport(
        suite,
        name,
        _term_table(terms),
        lhs.value,
        rhs.value,
        abs_residual,
        rel,
        tolerance,
        unresolved is None and rel <= tolerance,
        residual.error,
        "equality",
        fingerprint,
        _with_note(note, unresolved),
    )


def inequality_report(suite, name, lhs, rhs, terms, tolerances, fingerprint=None, note=""):
    """Report for lhs <= rhs; the residual is the violation max(lhs - rhs, 0)."""
    residual = lhs - rhs
    scale = _scale(lhs, rhs, terms)
    violation = max(residual.value, 0.0)
    rel = violation / scale if scale > 0 else violation
    tolerance = tolerances.for_estimates(residual, terms.values(), scale)
    unresolved = tolerances.unresolved(residual, tolerance)
    return IdentityReport(
        suite,
        name,
        _term_table(terms),
        lhs.value,
        rhs.value,
        violation,
        rel,
        tolerance,
        unresolved is None and rel <= tolerance,
        residual.error,
        "inequality",
        fingerprint,
        _with_note(note, unresolved),
    )


def strict_report(suite, name, lhs, rhs, margin, terms, fingerprint=None, note=""):
    """Report for lhs + margin <= rhs on plain floats; tolerance is zero."""
    violation = max(lhs + margin - rhs, 0.0)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return IdentityReport(
        suite,
        name,
        tuple((label, float(v), float(e)) for label, (v, e) in terms.items()),
        float(lhs),
        float(rhs),
        violation,
        violation / scale,
        0.0,
        violation == 0.0,
        0.0,
        "strict",
        fingerprint,
        note,
    )


class IdentityChecker:
    """
    Evaluate the integral identities for one field.

    Args:
        field (ScalarField): Test function
        settings (QuadratureSettings, optional): Rule selection
        tolerances (Tolerances, optional): Tolerance model
        integrator (Integrator, optional): Shared integrator for field's spec
    """

    def __init__(self, field, settings=None, tolerances=None, integrator=None):
        self.field = field
        self.n = field.n
        self.settings = settings or QuadratureSettings()
        self.tolerances = tolerances or Tolerances()
        if integrator is None:
            spec = self.settings.spec_for(field)
            integrator = Integrator(spec, self.settings.chunk_size, self.settings.workers)
        self.integrator = integrator
        self.spec = integrator.spec
        self.fingerprint = Fingerprint(field.label, self.n, self.spec.fingerprint, self.spec.seed)

    @property
    def c(self):
        return self.n * (self.n - 4) / 4.0

    def integrals(self, pairs):
        """
        Estimates for a dict of label -> (u, v) operator pairs, one batch.

        Raises:
            QuadratureError: If the rule sees no mass of a field that is not
                identically zero
        """
        labels = list(pairs)
        f = ops.identity(self.n)
        mass, *values = self.integrator.inner_many(
            self.field, [(f, f)] + [pairs[k] for k in labels]
        )
        if mass.value == 0.0 and not self.field.vanishes:
            raise QuadratureError(
                f"{self.field.label}: ||f||^2 integrates to 0 on "
                f"{self.spec.describe()}; the rule misses the field's support"
            )
        return dict(zip(labels, values))

    def norms(self, exprs):
        return self.integrals({k: (e, e) for k, e in exprs.items()})

    def _equality(self, suite, name, lhs, rhs, terms, note=""):
        report = equality_report(
            suite, name, lhs, rhs, terms, self.tolerances, self.fingerprint, note
        )
        log_report(report)
        return report

    def _inequality(self, suite, name, lhs, rhs, terms, note=""):
        report = inequality_report(
            suite, name, lhs, rhs, terms, self.tolerances, self.fingerprint, note
        )
        log_report(report)
        return report

    def _spherical_sums(self, inner):
        """sum_j ||inner(L_j f)||^2 over j = 1..n."""
        exprs = {j: ops.radial_of_spherical(inner, j) for j in range(1, self.n + 1)}
        return sum(self.norms(exprs).values(), Estimate.exact(0.0))

    def hardy(self):
        """Both Hardy equalities: ((n-2)/2)^2 ||f/r||^2 = ||d_r f||^2 - ||remainder||^2."""
        n = ops.require_dimension(self.n, ops.HARDY_MIN_DIMENSION)
        norms = self.norms(
            {
                "f_over_r": ops.multiply_weight(-1.0, n),
                "radial_d1": ops.radial_d1(n),
                "hardy_divergence": ops.hardy_divergence(n),
                "hardy_remainder": ops.hardy_remainder(n),
            }
        )
        lhs = norms["f_over_r"] * ((n - 2) / 2.0) ** 2
        reports = []
        for name, remainder in (
            ("hardy_divergence_form", "hardy_divergence"),
            ("hardy_remainder_form", "hardy_remainder"),
        ):
            terms = {
                "f_over_r": norms["f_over_r"],
                "lhs": lhs,
                "radial_d1": norms["radial_d1"],
                remainder: norms[remainder],
            }
            rhs = norms["radial_d1"] - norms[remainder]
            reports.append(self._equality("hardy", name, lhs, rhs, terms))
        return reports

    def _rellich_terms(self, form):
        n = ops.require_dimension(self.n)
        a = ops.bessel(n) if form == 1 else ops.bessel_divergence(n)
        norms = self.norms(
            {
                "f_over_r2": ops.multiply_weight(-2.0, n),
                "bessel": a,
                "rellich_r1": ops.rellich_r1(n, form),
                "rellich_r2": ops.rellich_r2(n, 1 if form == 1 else 2),
            }
        )
        c = self.c
        return {
            "f_over_r2": norms["f_over_r2"],
            "lhs": norms["f_over_r2"] * c**2,
            "bessel": norms["bessel"],
            "rellich_r1": norms["rellich_r1"],
            "rellich_r2": norms["rellich_r2"],
            "2c*rellich_r2": norms["rellich_r2"] * (2.0 * c),
        }

    def rellich_equalities(self):
        """
        The three spellings of c^2 ||f/r^2||^2 = ||Af||^2 - ||R1 f||^2 - 2c ||R2 f||^2.

        Spelling 1 uses A and both remainders in non-divergence form; 2 and
        3 use the divergence form of A and of R2 with the matching R1.
        """
        reports = []
        for form in (1, 2, 3):
            terms = self._rellich_terms(form)
            rhs = terms["bessel"] - terms["rellich_r1"] - terms["2c*rellich_r2"]
            reports.append(
                self._equality("rellich", f"rellich_form_{form}", terms["lhs"], rhs, terms)
            )
        return reports

    def rellich_implication(self):
        """Both remainders are non-negative, so c^2 ||f/r^2||^2 <= ||Af||^2."""
        terms = self._rellich_terms(1)
        return self._inequality(
            "rellich", "rellich_implies_inequality", terms["lhs"], terms["bessel"], terms
        )

    def _theorem2_terms(self):
        n = ops.require_dimension(self.n)
        norms = self.norms(
            {
                "laplacian": ops.laplacian(n),
                "bessel": ops.bessel(n),
                "spherical_laplacian": ops.spherical_laplacian(n),
            }
        )
        norms["spherical_over_r"] = self._spherical_sums(ops.multiply_weight(-1.0, n))
        norms["spherical_hardy"] = self._spherical_sums(ops.hardy_remainder(n))
        norms["spherical_hardy_divergence"] = self._spherical_sums(ops.hardy_divergence(n))
        return norms

    def theorem2(self):
        """
        ||Δf||^2 = ||Af||^2 + ||Σ L_j^2 f||^2 + 2c Σ ||L_j f/r||^2 + 2 Σ ||H h_j||^2

        with h_j = L_j f and H the Hardy remainder, in its plain and its
        divergence form.
        """
        norms = self._theorem2_terms()
        c = self.c
        reports = []
        for name, key in (
            ("laplacian_decomposition", "spherical_hardy"),
            ("laplacian_decomposition_divergence", "spherical_hardy_divergence"),
        ):
            terms = {
                "laplacian": norms["laplacian"],
                "bessel": norms["bessel"],
                "spherical_laplacian": norms["spherical_laplacian"],
                "2c*spherical_over_r": norms["spherical_over_r"] * (2.0 * c),
                f"2*{key}": norms[key] * 2.0,
            }
            rhs = (
                terms["bessel"]
                + terms["spherical_laplacian"]
                + terms["2c*spherical_over_r"]
                + terms[f"2*{key}"]
            )
            reports.append(self._equality("theorem2", name, norms["laplacian"], rhs, terms))
        return reports

    def corollary(self):
        """
        ||Af||^2 <= ||Δf||^2, with a gap that is zero for radial fields and
        otherwise equals the angular sum and is strictly positive.
        """
        norms = self._theorem2_terms()
        laplacian, bessel = norms["laplacian"], norms["bessel"]
        gap = laplacian - bessel
        terms = {"laplacian": laplacian, "bessel": bessel, "gap": gap}
        reports = [
            self._inequality("corollary", "bessel_below_laplacian", bessel, laplacian, terms)
        ]
        if self.field.radial:
            reports.append(
                self._equality("corollary", "radial_equality", laplacian, bessel, terms)
            )
            return reports
        angular = (
            norms["spherical_laplacian"]
            + norms["spherical_over_r"] * (2.0 * self.c)
            + norms["spherical_hardy"] * 2.0
        )
        terms["angular_sum"] = angular
        reports.append(
            self._equality("corollary", "gap_equals_angular_sum", gap, angular, terms)
        )
        bars = gap.error + gap.edge
        if gap.monte_carlo:
            bars = self.tolerances.mc_factor * gap.error
        report = strict_report(
            "corollary",
            "non_radial_gap",
            bars,
            gap.value,
            self.tolerances.strict_margin * laplacian.value,
            {"gap": (gap.value, gap.error), "laplacian": (laplacian.value, laplacian.error)},
            self.fingerprint,
            EVIDENCE_NOTE,
        )
        log_report(report)
        reports.append(report)
        return reports

    def rellich_inequality(self):
        """ρ(f) = c ||f/r^2|| / ||Δf|| < 1."""
        n = ops.require_dimension(self.n)
        norms = self.norms(
            {"f_over_r2": ops.multiply_weight(-2.0, n), "laplacian": ops.laplacian(n)}
        )
        weight, lap = norms["f_over_r2"], norms["laplacian"]
        terms = {
            "f_over_r2": (weight.value, weight.error),
            "laplacian": (lap.value, lap.error),
        }
        margin = self.tolerances.strict_margin
        if self.field.vanishes:
            report = strict_report(
                "inequality", "rellich_inequality", 0.0, 1.0, margin, terms,
                self.fingerprint, "f = 0: vacuous pass",
            )
        elif lap.value <= 0.0:
            report = strict_report(
                "inequality", "rellich_inequality", self.c * math.sqrt(weight.value), 0.0,
                margin, terms, self.fingerprint, "||Δf|| = 0 with f ≠ 0: inconsistent input",
            )
        else:
            rho_squared = self.c**2 * weight.value / lap.value
            rho = math.sqrt(rho_squared)
            error = 0.5 * rho * (weight.error / weight.value + lap.error / lap.value)
            terms["rho_squared"] = (rho_squared, 2.0 * rho * error)
            terms["rho"] = (rho, error)
            report = strict_report(
                "inequality", "rellich_inequality", rho, 1.0, margin, terms, self.fingerprint
            )
        log_report(report)
        return report

    def _second_order_chain(self):
        n = ops.require_dimension(self.n)
        c = self.c
        w2, w3 = ops.multiply_weight(-2.0, n), ops.multiply_weight(-3.0, n)
        d1_over_r = ops.weighted_chain(-1.0, 0.0, n)
        d_f_over_r = ops.weighted_chain(0.0, -1.0, n)
        r2 = ops.rellich_r2(n, 2)
        a = ops.bessel(n)
        v = self.integrals(
            {
                "f_over_r2": (w2, w2),
                "d1_over_r": (d1_over_r, d1_over_r),
                "weight_d2": (w2, ops.radial_d2(n)),
                "d_f_over_r": (d_f_over_r, d_f_over_r),
                "cross": (d_f_over_r, w2),
                "rellich_r2": (r2, r2),
                "weight_bessel": (w2, a),
                "cubic": (w3, ops.radial_d1(n)),
                "bessel": (a, a),
                "rellich_r1": (ops.rellich_r1(n, 1), ops.rellich_r1(n, 1)),
            }
        )
        weight = v["f_over_r2"]
        chain = "proof-chain"
        yield self._equality(
            chain,
            "by_parts_first",
            weight,
            (v["d1_over_r"] + v["weight_d2"]) * (2.0 / ((n - 3) * (n - 4))),
            {k: v[k] for k in ("f_over_r2", "d1_over_r", "weight_d2")},
        )
        yield self._equality(
            chain,
            "radial_split",
            v["d1_over_r"],
            v["d_f_over_r"] + v["cross"] * 2.0 + weight,
            {k: v[k] for k in ("d1_over_r", "d_f_over_r", "cross", "f_over_r2")},
        )
        yield self._equality(
            chain,
            "hardy_on_f_over_r",
            v["d_f_over_r"],
            weight * ((n - 2) / 2.0) ** 2 + v["rellich_r2"],
            {k: v[k] for k in ("d_f_over_r", "f_over_r2", "rellich_r2")},
        )
        yield self._equality(
            chain,
            "cross_term",
            v["cross"] * 2.0,
            weight * -(n - 2.0),
            {k: v[k] for k in ("cross", "f_over_r2")},
        )
        yield self._equality(
            chain,
            "first_order_rellich",
            v["d1_over_r"],
            weight * ((n - 4) / 2.0) ** 2 + v["rellich_r2"],
            {k: v[k] for k in ("d1_over_r", "f_over_r2", "rellich_r2")},
        )
        yield self._equality(
            chain,
            "second_integral_split",
            v["weight_d2"],
            v["weight_bessel"] - v["cubic"] * (n - 1.0),
            {k: v[k] for k in ("weight_d2", "weight_bessel", "cubic")},
        )
        yield self._equality(
            chain,
            "cubic_weight",
            v["cubic"],
            weight * (-(n - 4) / 2.0),
            {k: v[k] for k in ("cubic", "f_over_r2")},
        )
        yield self._equality(
            chain,
            "assembled",
            weight * c,
            -v["weight_bessel"] - v["rellich_r2"],
            {k: v[k] for k in ("f_over_r2", "weight_bessel", "rellich_r2")},
        )
        # u = f/r^2, v = Af, lemma constant 1/c, a = -||R2' f||^2 / c
        c_lemma = 1.0 / c
        a_lemma = v["rellich_r2"] * -c_lemma
        yield self._equality(
            chain,
            "lemma_reconstruction_first",
            weight,
            v["weight_bessel"] * -c_lemma + a_lemma,
            {"f_over_r2": weight, "weight_bessel": v["weight_bessel"], "a": a_lemma},
        )
        yield self._equality(
            chain,
            "lemma_reconstruction_fourth",
            weight / c_lemma**2,
            v["bessel"] - v["rellich_r1"] + a_lemma * (2.0 / c_lemma**2),
            {
                "lhs": weight / c_lemma**2,
                "bessel": v["bessel"],
                "rellich_r1": v["rellich_r1"],
                "a": a_lemma,
            },
        )

    def _spherical_chain(self):
        n = ops.require_dimension(self.n)
        c = self.c
        a = ops.bessel(n)
        indices = range(1, n + 1)
        pairs = {
            "laplacian": (ops.laplacian(n), ops.laplacian(n)),
            "bessel": (a, a),
            "spherical_laplacian": (ops.spherical_laplacian(n), ops.spherical_laplacian(n)),
            "bessel_spherical_laplacian": (a, ops.spherical_laplacian(n)),
            "bessel_spherical2_1": (a, ops.spherical2(1, n)),
            "weighted_1": (a, ops.coordinate_weight(1, -2.0, ops.spherical(1, n))),
        }
        w1 = ops.multiply_weight(-1.0, n)
        expansion = ops.bessel_of_spherical_expansion(n)
        for j in indices:
            h = ops.spherical(j, n)
            pairs[f"exchange_{j}"] = (ops.spherical_of_radial(j, a), h)
            pairs[f"expansion_{j}"] = (ops.radial_of_spherical(expansion, j), h)
            pairs[f"radial_d1_h_{j}"] = (ops.radial_of_spherical(ops.radial_d1(n), j),) * 2
            pairs[f"h_over_r_{j}"] = (ops.radial_of_spherical(w1, j),) * 2
            pairs[f"hardy_h_{j}"] = (ops.radial_of_spherical(ops.hardy_divergence(n), j),) * 2
        v = self.integrals(pairs)

        def total(prefix):
            return sum((v[f"{prefix}_{j}"] for j in indices), Estimate.exact(0.0))

        exchange = total("exchange")
        radial_h, h_over_r, hardy_h = total("radial_d1_h"), total("h_over_r"), total("hardy_h")
        chain = "proof-chain"
        yield self._equality(
            chain,
            "laplacian_expansion",
            v["laplacian"],
            v["bessel"] + v["spherical_laplacian"] + v["bessel_spherical_laplacian"] * 2.0,
            {
                k: v[k]
                for k in ("laplacian", "bessel", "spherical_laplacian", "bessel_spherical_laplacian")
            },
        )
        yield self._equality(
            chain,
            "exchange",
            v["bessel_spherical_laplacian"],
            -exchange,
            {"bessel_spherical_laplacian": v["bessel_spherical_laplacian"], "exchange": exchange},
        )
        yield self._equality(
            chain,
            "by_parts_step",
            v["bessel_spherical2_1"],
            -v["exchange_1"] + v["weighted_1"] * (n - 1.0),
            {k: v[k] for k in ("bessel_spherical2_1", "exchange_1", "weighted_1")},
        )
        yield self._equality(
            chain,
            "bessel_expansion_integrated",
            exchange,
            total("expansion"),
            {"exchange": exchange, "expansion": total("expansion")},
        )
        yield self._equality(
            chain,
            "spherical_intermediate",
            -exchange,
            radial_h - h_over_r,
            {"exchange": exchange, "radial_d1_h": radial_h, "h_over_r": h_over_r},
        )
        yield self._equality(
            chain,
            "spherical_energy",
            -exchange,
            h_over_r * c + hardy_h,
            {"exchange": exchange, "h_over_r": h_over_r, "hardy_h": hardy_h},
        )

    def proof_chain(self):
        """Every intermediate equality of the radial and the spherical argument."""
        return list(self._second_order_chain()) + list(self._spherical_chain())


def log_report(report):
    mark = "✓" if report.passed else "✗"
    message = (
        f"{mark} {report.suite}/{report.name}: rel_residual={report.rel_residual:.3e} "
        f"(tol {report.tolerance:.1e})"
    )
    if report.note:
        message += f" [{report.note}]"
    if report.passed:
        logger.info(message)
    else:
        logger.warning(message)


def check_hardy(f, settings=None, tolerances=None):
    return IdentityChecker(f, settings, tolerances).hardy()


def check_rellich_equalities(f, settings=None, tolerances=None):
    return IdentityChecker(f, settings, tolerances).rellich_equalities()


def check_theorem2(f, settings=None, tolerances=None):
    return IdentityChecker(f, settings, tolerances).theorem2()


def check_corollary(f, settings=None, tolerances=None):
    return IdentityChecker(f, settings, tolerances).corollary()


def check_rellich_inequality(f, settings=None, tolerances=None):
    return IdentityChecker(f, settings, tolerances).rellich_inequality()


def check_proof_chain(f, settings=None, tolerances=None):
    return IdentityChecker(f, settings, tolerances).proof_chain()


@dataclass(frozen=True, eq=False)
class HermitianTriple:
    """
    Vectors u, v in C^m and a constant c > 0.

    The fourth quantity of the lemma, a, is derived from the first
    statement: a = ||u||^2 + c Re(u|v).
    """

    u: np.ndarray
    v: np.ndarray
    c: float

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=complex))
        v = np.atleast_1d(np.asarray(self.v, dtype=complex))
        if u.ndim != 1 or u.shape != v.shape or len(u) < 1:
            raise ConfigError(
                f"u and v must be vectors of one length m >= 1 (got {u.shape}, {v.shape})",
                field="lemma",
            )
        if not self.c > 0:
            raise ConfigError(f"c > 0 required (got c={self.c})", field="lemma")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "c", float(self.c))

    @property
    def m(self):
        return len(self.u)

    @property
    def a(self):
        return _norm2(self.u) + self.c * _inner(self.u, self.v)


def _inner(x, y):
    """Re(x|y) = Re sum x_i conj(y_i)."""
    return float(np.real(np.vdot(y, x)))


def _norm2(x):
    return _inner(x, x)


def _lemma_statements(t):
    """(label, lhs, rhs, terms) for the four statements and the proof identity."""
    u, v, c, a = t.u, t.v, t.c, t.a
    uu, uv = _norm2(u), _inner(u, v)
    u_cv = _norm2(u + c * v)
    cv = _norm2(c * v)
    v_u = _norm2(v + u / c)
    vv = _norm2(v)
    u_ucv = _inner(u, u + c * v)
    return [
        ("first", uu, -c * uv + a, (uu, c * uv, a)),
        ("second", u_ucv, a, (u_ucv, a)),
        ("third", cv, u_cv + uu - 2.0 * a, (cv, u_cv, uu, 2.0 * a)),
        ("fourth", uu / c**2, vv - v_u + 2.0 * a / c**2, (uu / c**2, vv, v_u, 2.0 * a / c**2)),
        ("proof_identity", cv, u_cv + uu - 2.0 * u_ucv, (cv, u_cv, uu, 2.0 * u_ucv)),
    ]


def _lemma_residuals(t):
    out = {}
    for label, lhs, rhs, terms in _lemma_statements(t):
        scale = max(abs(x) for x in terms)
        diff = abs(lhs - rhs)
        out[label] = (diff, diff / scale if scale > 0 else diff)
    return out


def check_abstract_lemma(t, tolerances=None):
    """
    Check that a fixed by the first statement satisfies the other three.

    Args:
        t (HermitianTriple): Vectors and constant
        tolerances (Tolerances, optional): Uses ``lemma`` as the threshold

    Returns:
        IdentityReport: Worst relative residual over the statements
    """
    tolerances = tolerances or Tolerances()
    residuals = _lemma_residuals(t)
    worst = max(residuals, key=lambda k: residuals[k][1])
    diff, rel = residuals[worst]
    third = _lemma_statements(t)[2]
    terms = (("a", t.a, 0.0),) + tuple(
        (f"residual_{label}", r, 0.0) for label, (_, r) in residuals.items()
    )
    report = IdentityReport(
        "lemma",
        "abstract_lemma",
        terms,
        third[1],
        third[2],
        diff,
        rel,
        tolerances.lemma,
        rel <= tolerances.lemma,
        fingerprint=Fingerprint("HermitianTriple", t.m),
        note=f"worst statement: {worst}",
    )
    logger.debug(f"Lemma m={t.m} c={t.c:.4g}: worst {worst} {rel:.2e}")
    return report


def random_triples(count, seed, max_dim=8, c_max=10.0):
    """
    Seeded random triples with m in 1..max_dim and c in (0, c_max].

    Yields:
        HermitianTriple
    """
    rng = np.random.default_rng(seed)
    for _ in range(int(count)):
        m = int(rng.integers(1, max_dim + 1))
        u = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        c = c_max * (1.0 - rng.random())
        yield HermitianTriple(u, v, c)


def check_lemma_batch(count, seed, max_dim=8, c_max=10.0, tolerances=None):
    """Worst-case lemma report over ``count`` random triples."""
    tolerances = tolerances or Tolerances()
    worst = None
    for t in random_triples(count, seed, max_dim, c_max):
        report = check_abstract_lemma(t, tolerances)
        if worst is None or report.rel_residual > worst.rel_residual:
            worst = report
    if worst is None:
        raise ConfigError("lemma batch needs at least one triple", field="lemma.triples")
    terms = (("triples", float(count), 0.0), ("max_dim", float(max_dim), 0.0)) + worst.terms
    report = IdentityReport(
        "lemma",
        "abstract_lemma_random",
        terms,
        worst.lhs,
        worst.rhs,
        worst.abs_residual,
        worst.rel_residual,
        worst.tolerance,
        worst.passed,
        fingerprint=Fingerprint("HermitianTriple", max_dim, "exact", seed),
        note=worst.note,
    )
    log_report(report)
    return report


@dataclass(frozen=True)
class ScanRow:
    """One δ of the near-extremiser scan with its error bars."""

    delta: float
    rho: float
    rho_error: float
    share: float
    share_error: float
    rho_laplacian: float
    resolved: bool
    quadrature_error: float = 0.0
    expected: dict = dataclass_field(default_factory=dict)


def _relative(estimate):
    if estimate.value == 0:
        return math.inf
    return (estimate.error + estimate.edge) / abs(estimate.value)


def _scan_row(delta, n, settings, tolerances):
    f = make_field(FamilyParams.of("NearExtremiser", n, delta=delta))
    checker = IdentityChecker(f, settings, tolerances)
    norms = checker.norms(
        {
            "f_over_r2": ops.multiply_weight(-2.0, n),
            "bessel": ops.bessel(n),
            "rellich_r2": ops.rellich_r2(n, 2),
            "laplacian": ops.laplacian(n),
        }
    )
    c = checker.c
    weight, bessel = norms["f_over_r2"], norms["bessel"]
    rho = c * math.sqrt(weight.value / bessel.value)
    rho_rel = 0.5 * (_relative(weight) + _relative(bessel))
    share = norms["rellich_r2"].value / (c**2 * weight.value)
    share_rel = _relative(norms["rellich_r2"]) + _relative(weight)
    quadrature_error = max(_relative(e) for e in norms.values())
    resolved = quadrature_error <= tolerances.resolution
    exact = closed_form_norms(f.params)
    expected = {
        "rho": c * math.sqrt(exact["f_over_r2"] / exact["bessel"]),
        "share": exact["rellich_r2"] / (c**2 * exact["f_over_r2"]),
    }
    row = ScanRow(
        float(delta),
        rho,
        rho * rho_rel,
        share,
        share * share_rel,
        c * math.sqrt(weight.value / norms["laplacian"].value),
        resolved,
        quadrature_error,
        expected,
    )
    logger.info(
        f"Scan δ={delta:g}: ρ={rho:.12f} s={share:.6e} "
        f"({'resolved' if resolved else 'unresolved'})"
    )
    return row, checker.fingerprint


def _monotone_report(name, rows, values, errors, increasing, fingerprint, margin):
    """
    Strict report that every step exceeds its error bars by ``margin``.

    A single δ shows no trend, so it fails.
    """
    if len(rows) < 2:
        report = strict_report(
            "scan", name, 0.0, 0.0, margin, {}, fingerprint,
            "a single δ shows no trend: not evidence of monotonicity",
        )
        report = replace(report, passed=False)
        log_report(report)
        return report
    worst = None
    terms = {}
    for k in range(len(rows) - 1):
        step = values[k + 1] - values[k]
        if not increasing:
            step = -step
        bars = errors[k] + errors[k + 1]
        terms[f"step[{rows[k].delta:g}->{rows[k + 1].delta:g}]"] = (step, bars)
        if worst is None or step - bars < worst[1] - worst[0]:
            worst = (bars, step)
    bars, step = worst
    report = strict_report("scan", name, bars, step, margin, terms, fingerprint, EVIDENCE_NOTE)
    log_report(report)
    return report


def extremiser_scan(deltas, n=5, settings=None, tolerances=None):
    """
    Rellich ratio and remainder share along the near-extremiser family.

    Args:
        deltas (sequence): Strictly decreasing positive δ values
        n (int): Dimension, n >= 5
        settings (QuadratureSettings, optional): Rule selection
        tolerances (Tolerances, optional): ``resolution`` decides whether a δ
            counts as resolved

    Returns:
        tuple: (list of ScanRow, list of IdentityReport)

    Raises:
        ConfigError: If the δ list is empty, non-positive or not strictly decreasing
    """
    n = ops.require_dimension(n)
    deltas = [float(d) for d in deltas]
    if not deltas or any(d <= 0 for d in deltas):
        raise ConfigError("scan deltas must be a non-empty list of δ > 0", field="scan.deltas")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ConfigError("scan deltas must be strictly decreasing", field="scan.deltas")
    settings = settings or QuadratureSettings()
    tolerances = tolerances or Tolerances()

    rows, reports = [], []
    fingerprint = None
    for delta in deltas:
        row, fingerprint = _scan_row(delta, n, settings, tolerances)
        rows.append(row)
        terms = {
            "rho": (row.rho, row.rho_error),
            "share": (row.share, row.share_error),
            "rho_laplacian": (row.rho_laplacian, row.rho_error),
        }
        note = EVIDENCE_NOTE if row.resolved else "unresolved: quadrature error above resolution"
        report = strict_report(
            "scan", f"extremiser_rho[delta={delta:g}]", row.rho, 1.0,
            tolerances.strict_margin, terms, fingerprint, note,
        )
        if not row.resolved:
            report = replace(
                report,
                rel_residual=row.quadrature_error,
                tolerance=tolerances.resolution,
                passed=False,
            )
        log_report(report)
        reports.append(report)

    fingerprint = replace(
        fingerprint, field=f"NearExtremiser(delta={deltas[0]:g}..{deltas[-1]:g})"
    )
    reports.append(
        _monotone_report(
            "extremiser_rho_increasing", rows,
            [r.rho for r in rows], [r.rho_error for r in rows], True, fingerprint,
            tolerances.strict_margin,
        )
    )
    reports.append(
        _monotone_report(
            "extremiser_share_decreasing", rows,
            [r.share for r in rows], [r.share_error for r in rows], False, fingerprint,
            tolerances.strict_margin,
        )
    )
    return rows, reports
