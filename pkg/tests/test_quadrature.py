import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import beta

from src.rellich import operators as ops
from src.rellich.fields import sphere_area
from src.rellich.quadrature import (
    Estimate,
    Integrator,
    ERROR_MODEL,
    MonteCarloSampler,
    QuadratureSettings,
    QuadratureSpec,
    RadialRule,
    SphereRule,
    centred_sphere_degree,
    compensated_sum,
    gauss_rule_1d,
    l2_inner,
    pairwise_sum,
    sphere_monomial_integral,
    required_sphere_degree,
    sphere_node_count,
    sphere_product_rule,
)
from src.utils.errors import ConfigError, QuadratureError

PI52 = math.pi**2.5


def monomials(n, degree):
    for alpha in itertools.product(range(degree + 1), repeat=n):
        if sum(alpha) <= degree:
            yield alpha


def test_gauss_legendre_exactness():
    x, w = gauss_rule_1d(5)
    for k in range(10):
        expected = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.sum(w * x**k) == pytest.approx(expected, abs=1e-14)


@given(
    st.sampled_from([1, 2, 5, 9, 21]),
    st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.5]),
)
def test_gauss_jacobi_weight_sum(N, a):
    x, w = gauss_rule_1d(N, a, a)
    assert np.all(np.diff(x) > 0)
    assert np.all(w > 0)
    assert np.sum(w) == pytest.approx(2.0 ** (2 * a + 1) * beta(a + 1, a + 1), rel=1e-12)


def test_gauss_jacobi_exactness():
    a, b = 1.5, 0.5
    x, w = gauss_rule_1d(6, a, b)
    assert np.sum(w) == pytest.approx(2.0 ** (a + b + 1) * beta(a + 1, b + 1), rel=1e-12)
    assert np.sum(w * (1.0 - x) ** 2) == pytest.approx(
        2.0 ** (a + b + 3) * beta(a + 3, b + 1), rel=1e-12
    )
    assert np.sum(w * (1.0 + x) ** 5) == pytest.approx(
        2.0 ** (a + b + 6) * beta(a + 1, b + 6), rel=1e-12
    )


@pytest.mark.parametrize("N, a", [(0, 0.0), (3, -1.0), (2.5, 0.0)])
def test_gauss_rule_rejects_bad_input(N, a):
    with pytest.raises(QuadratureError):
        gauss_rule_1d(N, a, 0.0)


def test_sphere_monomial_integral():
    assert sphere_monomial_integral(5, ()) == pytest.approx(sphere_area(5), rel=1e-14)
    assert sphere_monomial_integral(5, (2,)) == pytest.approx(sphere_area(5) / 5, rel=1e-14)
    assert sphere_monomial_integral(5, (1, 1)) == 0.0


def test_sphere_rule_weights_sum_to_area():
    rule = sphere_product_rule(5, 8)
    assert rule.weights.sum() == pytest.approx(8 * math.pi**2 / 3, rel=1e-14)
    assert rule.weights.sum() == pytest.approx(26.31894, rel=1e-6)
    np.testing.assert_allclose(np.linalg.norm(rule.nodes, axis=1), 1.0, rtol=1e-15)


def _check_exactness(n, degree):
    rule = sphere_product_rule(n, degree)
    for alpha in monomials(n, degree):
        values = np.prod(rule.nodes ** np.array(alpha), axis=1)
        expected = sphere_monomial_integral(n, alpha)
        assert np.sum(rule.weights * values) == pytest.approx(expected, abs=1e-12), alpha


@pytest.mark.parametrize("degree", [6, 10])
def test_sphere_rule_exactness_n5(degree):
    _check_exactness(5, degree)


@pytest.mark.slow
@pytest.mark.parametrize("n", [3, 4, 6, 7])
def test_sphere_rule_exactness_other_dimensions(n):
    _check_exactness(n, 6)


@pytest.mark.slow
@pytest.mark.parametrize("n", [6, 7])
def test_sphere_rule_degree_ten_exactness(n):
    _check_exactness(n, 10)


def test_sphere_rule_text_round_trip():
    rule = sphere_product_rule(5, 6)
    parsed = SphereRule.from_text(rule.to_text())
    assert parsed.n == 5 and parsed.degree == 6
    assert parsed.fingerprint == rule.fingerprint
    assert rule.coarse().degree == 4


@pytest.mark.parametrize("n, degree", [(12, 6), (2, 4), (5, 7), (5, 42)])
def test_unsupported_sphere_rules(n, degree):
    with pytest.raises(QuadratureError):
        sphere_product_rule(n, degree)


def test_radial_legendre_integral():
    rule = RadialRule.build("legendre", 96, (0.0, 10.0))
    value = np.sum(rule.weights * rule.nodes**4 * np.exp(-rule.nodes**2))
    assert value == pytest.approx(0.75 * math.sqrt(math.pi) / 2, rel=1e-13)
    assert rule.coarse().count == 48


def test_radial_log_integral():
    rule = RadialRule.build("log", 160, (-10.0, 10.0))
    value = np.sum(rule.weights * np.exp(-np.log(rule.nodes) ** 2) / rule.nodes)
    assert value == pytest.approx(math.sqrt(math.pi), rel=1e-12)


def test_radial_rational_integral():
    rule = RadialRule.build("rational", 64, (1.0, 0.0))
    assert np.sum(rule.weights * np.exp(-rule.nodes)) == pytest.approx(1.0, rel=1e-6)


def test_radial_rule_text_round_trip():
    rule = RadialRule.build("log", 40, (-3.0, 3.0))
    assert RadialRule.from_text(rule.to_text()).fingerprint == rule.fingerprint


@pytest.mark.parametrize(
    "kind, params", [("legendre", (2.0, 1.0)), ("rational", (0.0, 0.0)), ("log", (1.0, 1.0))]
)
def test_radial_rule_rejects_bad_params(kind, params):
    with pytest.raises(QuadratureError):
        RadialRule.build(kind, 8, params)


def test_sampler_sample_count():
    with pytest.raises(ConfigError, match="multiple of 100"):
        MonteCarloSampler(5, 150, 1, "chi", (1.0, 0.0))


def test_sampler_batches_are_reproducible():
    sampler = MonteCarloSampler(5, 1000, 42, "chi", (0.8, 0.0))
    x1, w1 = sampler.draw(3)
    x2, w2 = MonteCarloSampler(5, 1000, 42, "chi", (0.8, 0.0)).draw(3)
    assert np.array_equal(x1, x2) and np.array_equal(w1, w2)
    x3, _ = sampler.draw(4)
    assert not np.array_equal(x1, x3)


def test_monte_carlo_needs_seed(gaussian):
    with pytest.raises(ConfigError, match="seed is mandatory"):
        QuadratureSettings(sphere="mc").spec_for(gaussian)


def test_pairwise_and_compensated_sums():
    values = [1e16, 1.0, -1e16, 1.0]
    assert compensated_sum(values) == 2.0
    assert pairwise_sum(np.ones(1001)) == 1001.0
    assert pairwise_sum([]) == 0.0
    rng = np.random.default_rng(3)
    a = rng.standard_normal(777)
    assert pairwise_sum(a) == pairwise_sum(a.tolist())
    assert pairwise_sum(a) == pytest.approx(math.fsum(a), abs=1e-12)


def test_estimate_arithmetic():
    a = Estimate(1.0, coarse=0.9)
    b = Estimate(2.0, coarse=2.05, edge=1e-3)
    total = a + b
    assert total.value == 3.0
    assert total.error == pytest.approx(0.05)
    assert total.edge == 1e-3
    scaled = 2.0 * a - 1.0
    assert scaled.value == 1.0 and scaled.error == pytest.approx(0.2)
    assert Estimate.exact(4.0).error == 0.0


def test_monte_carlo_estimate_arithmetic():
    a = Estimate(1.0, batches=np.array([0.9, 1.1, 1.0, 1.0]))
    b = Estimate(0.5, batches=np.array([0.5, 0.5, 0.4, 0.6]))
    diff = a - b
    assert diff.monte_carlo
    np.testing.assert_allclose(diff.batches, [0.4, 0.6, 0.6, 0.4])
    assert diff.error == pytest.approx(np.std([0.4, 0.6, 0.6, 0.4], ddof=1) / 2)


def test_spec_fingerprint_and_coarse(gaussian, quadrature):
    spec = quadrature.spec_for(gaussian)
    assert len(spec.fingerprint) == 16
    int(spec.fingerprint, 16)
    coarse = spec.coarse()
    assert coarse.radial.count == spec.radial.count // 2
    assert coarse.sphere.degree == spec.sphere.degree - 2
    assert spec.fingerprint == quadrature.spec_for(gaussian).fingerprint


def test_integrator_gaussian_norms(gaussian, quadrature):
    integrator = Integrator(quadrature.spec_for(gaussian))
    assert integrator.norm2(gaussian, ops.identity(5)).value == pytest.approx(PI52, rel=1e-12)
    assert integrator.norm2(gaussian, ops.multiply_weight(-2.0, 5)).value == pytest.approx(
        4 * PI52 / 3, rel=1e-12
    )
    bessel = integrator.norm2(gaussian, ops.bessel(5))
    assert bessel.value == pytest.approx(35 * PI52 / 4, rel=1e-11)
    assert bessel.error < 1e-9
    cross = integrator.inner(gaussian, ops.multiply_weight(-2.0, 5), ops.bessel(5))
    assert cross.value == pytest.approx(-7 * PI52 / 3, rel=1e-11)


def test_integrator_solid_gaussian_spherical_term(solid, quadrature):
    integrator = Integrator(quadrature.spec_for(solid))
    # Σ L_j² f = -4 f / r² for a degree-one harmonic in n = 5
    value = integrator.norm2(solid, ops.spherical_laplacian(5)).value
    expected = 16 * integrator.norm2(solid, ops.multiply_weight(-2.0, 5)).value
    assert value == pytest.approx(expected, rel=1e-11)


def test_integrator_cache(gaussian, quadrature):
    integrator = Integrator(quadrature.spec_for(gaussian))
    u, v = ops.identity(5), ops.radial_d1(5)
    first = integrator.inner(gaussian, u, v)
    second = integrator.inner(gaussian, v, u)
    assert second is first
    assert integrator.stats["integrals"] == 1
    assert integrator.stats["cache_hits"] == 1


def test_integrator_is_independent_of_workers(solid, quadrature):
    spec = quadrature.spec_for(solid)
    pairs = [(ops.bessel(5), ops.bessel(5)), (ops.identity(5), ops.laplacian(5))]
    serial = Integrator(spec, chunk_size=4096, workers=1).inner_many(solid, pairs)
    threaded = Integrator(spec, chunk_size=4096, workers=4).inner_many(solid, pairs)
    assert [e.value for e in serial] == [e.value for e in threaded]
    assert [e.coarse for e in serial] == [e.coarse for e in threaded]


def test_integrator_rejects_other_dimensions(gaussian, quadrature):
    integrator = Integrator(quadrature.spec_for(gaussian))
    with pytest.raises(QuadratureError, match="dimension mismatch"):
        integrator.norm2(gaussian, ops.identity(6))


def test_log_map_for_near_extremiser():
    from tests.conftest import field

    f = field("NearExtremiser", delta=0.25)
    spec = QuadratureSettings().spec_for(f)
    assert spec.radial.kind.value == "log"
    assert spec.radial.params == (-10.0, 10.0)


@pytest.mark.slow
def test_monte_carlo_gaussian_norm(gaussian):
    settings = QuadratureSettings(sphere="mc", mc_samples=200_000, seed=7)
    estimate = Integrator(settings.spec_for(gaussian)).norm2(gaussian, ops.identity(5))
    assert estimate.monte_carlo
    assert abs(estimate.value - PI52) < 5 * estimate.error
    assert estimate.error < 0.02 * PI52


def test_l2_inner_across_fields(gaussian, solid, quadrature):
    spec = quadrature.spec_for(gaussian)
    u = (ops.identity(5), gaussian)
    assert l2_inner(u, u, spec).value == pytest.approx(PI52, rel=1e-12)
    # x_1 e^{-r²/2} is odd in x_1
    assert abs(l2_inner(u, (ops.identity(5), solid), spec).value) < 1e-12


def test_centred_sphere_degree():
    # t = (1.5² + 0.5²) / (2 · 1.5 · 0.5) = 5/3, ellipse parameter 3
    assert required_sphere_degree(1.5, 0.5, 1e-11) == 24
    assert centred_sphere_degree(5, 1.5, 0.5) == 24
    assert sphere_node_count(5, 24) == 13**3 * 25
    assert sphere_node_count(5, 8) == sphere_product_rule(5, 8).count
    capped = centred_sphere_degree(7, 1.05, 1.0)
    assert capped % 2 == 0
    assert sphere_node_count(7, capped) <= 200_000


def test_shifted_bump_gets_a_centred_rule(quadrature):
    from tests.conftest import field

    f = field("ShiftedBump", center=(1.5, 0.0, 0.0, 0.0, 0.0), radius=0.5)
    spec = quadrature.spec_for(f)
    assert spec.centre == (1.5, 0.0, 0.0, 0.0, 0.0)
    assert spec.radial.kind.value == "legendre"
    assert spec.radial.params == (0.0, 0.5)
    assert spec.sphere.degree == 24
    assert spec.coarse().centre == spec.centre
    assert "about (1.5" in spec.describe()
    assert spec.fingerprint != QuadratureSpec(5, spec.radial, sphere=spec.sphere).fingerprint
    offsets = np.array([[0.5, 0.0, 0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(spec.place(offsets), [[2.0, 0.0, 0.0, 0.0, 0.0]])


def test_centred_monte_carlo_samples_the_ball():
    from tests.conftest import field

    f = field("ShiftedBump", center=(0.0, 2.0), radius=1.0)
    spec = QuadratureSettings(sphere="mc", seed=3).spec_for(f)
    assert spec.monte_carlo
    assert spec.centre == (0.0, 2.0, 0.0, 0.0, 0.0)
    assert spec.sampler.proposal == "uniform"


def test_centre_needs_every_coordinate(gaussian, quadrature):
    spec = quadrature.spec_for(gaussian)
    with pytest.raises(QuadratureError, match="centre"):
        QuadratureSpec(5, spec.radial, sphere=spec.sphere, centre=(1.0, 0.0))


def test_error_model_is_described(quadrature, gaussian):
    spec = quadrature.spec_for(gaussian)
    assert f"error from N={spec.radial.count // 2}, d={spec.sphere.degree - 2}" in spec.describe()
    assert "d-2" in ERROR_MODEL
