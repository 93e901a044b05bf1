"""
Polar-coordinate quadrature for L^2(R^n) inner products

Integrals over R^n are computed as int_0^inf r^(n-1) int_{S^(n-1)} g(r w) dw dr
with a one-dimensional radial rule and a product rule on the sphere, or by
importance-sampled Monte Carlo. Reductions use a fixed pairwise order over
fixed-size chunks, so results do not depend on the number of workers.
"""

import functools
import hashlib
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import stats
from scipy.special import gammaln

from src.rellich import jets
from src.rellich.fields import Decay, sphere_area
from src.rellich.operators import FieldJets
from src.utils.errors import ConfigError, EvaluationError, QuadratureError

logger = logging.getLogger("rellich-lab")

NEWTON_MAX_ITERATIONS = 100
NEWTON_TOLERANCE = 1e-15

MAX_SPHERE_DEGREE = 40
SPHERE_DIMENSIONS = (3, 7)
MAX_SPHERE_NODES = 10_000_000

MC_BATCHES = 100
DEFAULT_CHUNK_SIZE = 16384

CENTRED_ACCURACY = 1e-11
CENTRED_RADIAL_NODES = 128
MAX_CENTRED_SPHERE_NODES = 200_000

ERROR_MODEL = (
    "deterministic: |fine - coarse| with the coarse rule at radial N//2 and sphere degree d-2; "
    f"monte carlo: standard error of {MC_BATCHES} batch means"
)


def _jacobi(N, a, b, x):
    """P_N^(a,b)(x) by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if N == 0:
        return p_prev
    p = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x
    for k in range(2, N + 1):
        s = 2.0 * k + a + b
        c1 = 2.0 * k * (k + a + b) * (s - 2.0)
        c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b)
        c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s
        p_prev, p = p, (c2 * p - c3 * p_prev) / c1
    return p


def _jacobi_with_derivative(N, a, b, x):
    value = _jacobi(N, a, b, x)
    if N == 0:
        return value, np.zeros_like(value)
    return value, 0.5 * (N + a + b + 1.0) * _jacobi(N - 1, a + 1.0, b + 1.0, x)


@functools.lru_cache(maxsize=64)
def gauss_rule_1d(N, a=0.0, b=0.0):
    """
    Gauss-Jacobi nodes and weights on (-1, 1) for the weight (1-x)^a (1+x)^b.

    a = b = 0 gives Gauss-Legendre. Roots are found one at a time by Newton
    iteration with deflation against the roots already found.

    Args:
        N (int): Number of nodes, N >= 1
        a (float): Exponent of (1 - x), a > -1
        b (float): Exponent of (1 + x), b > -1

    Returns:
        tuple: (nodes, weights), read-only arrays in increasing node order

    Raises:
        QuadratureError: If N < 1, a or b <= -1, or Newton fails to converge
    """
    if int(N) != N or N < 1:
        raise QuadratureError(f"Gauss rule needs N >= 1 (got {N})")
    if a <= -1 or b <= -1:
        raise QuadratureError(f"Jacobi exponents must exceed -1 (got a={a}, b={b})")
    N = int(N)
    roots = np.zeros(N)
    for k in range(N):
        x = -math.cos((2 * k + 1) * math.pi / (2 * N))
        for _ in range(NEWTON_MAX_ITERATIONS):
            p, dp = _jacobi_with_derivative(N, a, b, x)
            deflation = np.sum(1.0 / (x - roots[:k])) if k else 0.0
            step = float(p / (dp - p * deflation))
            x -= step
            if abs(step) < NEWTON_TOLERANCE:
                break
        else:
            raise QuadratureError(
                f"Newton iteration for Gauss-Jacobi root {k} of N={N}, a={a}, b={b} "
                f"did not converge in {NEWTON_MAX_ITERATIONS} iterations"
            )
        roots[k] = x
    roots.sort()
    _, dp = _jacobi_with_derivative(N, a, b, roots)
    log_scale = (
        gammaln(N + a + 1.0)
        + gammaln(N + b + 1.0)
        - gammaln(N + a + b + 1.0)
        - gammaln(N + 1.0)
        + (a + b + 1.0) * math.log(2.0)
    )
    weights = math.exp(log_scale) / ((1.0 - roots**2) * dp**2)
    roots.setflags(write=False)
    weights.setflags(write=False)
    return roots, weights


def sphere_monomial_integral(n, alpha):
    """
    Exact integral of w^alpha over S^(n-1).

    Args:
        n (int): Ambient dimension, n >= 2
        alpha (sequence): Multi-index; missing trailing entries are zero

    Returns:
        float: 0 if any exponent is odd, else 2 prod Gamma((a_i+1)/2) / Gamma((n+|a|)/2)
    """
    alpha = tuple(int(a) for a in alpha) + (0,) * (n - len(alpha))
    if any(a % 2 for a in alpha):
        return 0.0
    log_value = sum(gammaln((a + 1) / 2.0) for a in alpha) - gammaln((n + sum(alpha)) / 2.0)
    return 2.0 * math.exp(log_value)


def _table_text(header, columns):
    buffer = io.StringIO()
    np.savetxt(buffer, np.column_stack(columns), fmt="%.16e", header=header)
    return buffer.getvalue()


def _parse_table(text, kind):
    header = {}
    for line in text.splitlines():
        if line.startswith("#"):
            for item in line.lstrip("# ").split():
                key, _, value = item.partition("=")
                header[key] = value
            break
    if header.get("kind") != kind:
        raise QuadratureError(f"expected a {kind} rule table (got kind={header.get('kind')})")
    return header, np.loadtxt(io.StringIO(text), ndmin=2)


@dataclass(frozen=True, eq=False)
class SphereRule:
    """
    Nodes and weights on S^(n-1) with a declared polynomial exactness degree.

    Args:
        n (int): Ambient dimension
        degree (int): All monomials of total degree <= degree are exact
        nodes (np.ndarray): Unit vectors, shape (K, n)
        weights (np.ndarray): Positive weights, shape (K,)
    """

    n: int
    degree: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def count(self):
        return len(self.weights)

    def to_text(self):
        header = f"kind=sphere n={self.n} degree={self.degree} nodes={self.count}"
        return _table_text(header, [self.nodes, self.weights])

    @classmethod
    def from_text(cls, text):
        header, table = _parse_table(text, "sphere")
        n = int(header["n"])
        return cls(n, int(header["degree"]), table[:, :n].copy(), table[:, n].copy())

    @functools.cached_property
    def fingerprint(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def coarse(self):
        return sphere_product_rule(self.n, max(self.degree - 2, 0))


def sphere_node_count(n, degree):
    return (degree // 2 + 1) ** (n - 2) * (degree + 1)


def required_sphere_degree(distance, radius, accuracy):
    """
    Even degree at which a product rule reaches ``accuracy`` on a ball
    |x - c| <= radius off the origin, before any node limit.

    On the shell |x - c| = s every integrand is analytic in c.w, with its
    nearest singularity (x = 0) on the Bernstein ellipse of parameter
    t + sqrt(t^2 - 1), t = (|c|^2 + s^2) / (2 s |c|); the rule error falls like
    that parameter to the power -degree. The worst shell is s = radius.
    """
    t = (distance**2 + radius**2) / (2.0 * distance * radius)
    ellipse = t + math.sqrt(t * t - 1.0)
    degree = math.ceil(math.log(1.0 / accuracy) / math.log(ellipse))
    return degree + degree % 2


def centred_sphere_degree(n, distance, radius, accuracy=CENTRED_ACCURACY):
    """
    Sphere degree for a rule centred on the ball |x - c| <= radius.

    Args:
        n (int): Ambient dimension
        distance (float): |c|
        radius (float): Ball radius, below ``distance``
        accuracy (float): Target relative rule error

    Returns:
        int: ``required_sphere_degree``, lowered until the rule fits
        MAX_SPHERE_DEGREE and MAX_CENTRED_SPHERE_NODES
    """
    degree = min(required_sphere_degree(distance, radius, accuracy), MAX_SPHERE_DEGREE)
    while degree > 2 and sphere_node_count(n, degree) > MAX_CENTRED_SPHERE_NODES:
        degree -= 2
    return degree


def _check_sphere_request(n, degree):
    low, high = SPHERE_DIMENSIONS
    if not low <= n <= high:
        raise QuadratureError(
            f"sphere product rules support {low} <= n <= {high} (got n={n}); "
            "use Monte Carlo for larger n"
        )
    if degree < 0 or degree % 2 or degree > MAX_SPHERE_DEGREE:
        raise QuadratureError(
            f"sphere degree must be even and 0 <= d <= {MAX_SPHERE_DEGREE} (got d={degree})"
        )
    count = sphere_node_count(n, degree)
    if count > MAX_SPHERE_NODES:
        raise QuadratureError(
            f"sphere rule n={n}, d={degree} would need {count} nodes "
            f"(limit {MAX_SPHERE_NODES})"
        )


@functools.lru_cache(maxsize=16)
def sphere_product_rule(n, degree):
    """
    Product rule on S^(n-1) exact for polynomials of total degree <= degree.

    Angles theta_1..theta_(n-2) use Gauss-Jacobi rules in t = cos(theta_i)
    with weight (1-t^2)^((n-2-i)/2) and degree/2 + 1 nodes; the last angle
    uses degree + 1 equispaced nodes.

    Raises:
        QuadratureError: If n or degree is unsupported
    """
    _check_sphere_request(n, degree)
    q = degree // 2 + 1
    angle_rules = []
    for i in range(1, n - 1):
        a = (n - 2 - i) / 2.0
        angle_rules.append(gauss_rule_1d(q, a, a))
    m = degree + 1
    phi = 2.0 * math.pi * np.arange(m) / m
    phi_weights = np.full(m, 2.0 * math.pi / m)

    grids = np.meshgrid(*[t for t, _ in angle_rules], phi, indexing="ij")
    weight_grids = np.meshgrid(*[w for _, w in angle_rules], phi_weights, indexing="ij")
    weights = functools.reduce(np.multiply, (g.ravel() for g in weight_grids))

    count = weights.size
    nodes = np.empty((count, n))
    sine = np.ones(count)
    for i, grid in enumerate(grids[:-1]):
        t = grid.ravel()
        nodes[:, i] = sine * t
        sine = sine * np.sqrt(1.0 - t * t)
    angle = grids[-1].ravel()
    nodes[:, n - 2] = sine * np.cos(angle)
    nodes[:, n - 1] = sine * np.sin(angle)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    logger.debug(f"Sphere product rule n={n}, d={degree}: {count} nodes")
    return SphereRule(n, degree, nodes, weights)


class RadialMap(str, Enum):
    LEGENDRE = "legendre"
    RATIONAL = "rational"
    LOG = "log"


@dataclass(frozen=True, eq=False)
class RadialRule:
    """
    Nodes and plain weights for int_0^inf g(r) dr.

    ``base_weights`` are the weights in the mapped variable; ``extent`` is the
    length of the mapped interval for truncated maps (0 when the map covers
    the whole half-line).
    """

    kind: RadialMap
    params: Tuple[float, float]
    nodes: np.ndarray
    weights: np.ndarray
    base_weights: np.ndarray
    extent: float

    @property
    def count(self):
        return len(self.nodes)

    @classmethod
    def build(cls, kind, count, params):
        """
        Args:
            kind (RadialMap): legendre on [a, b], rational r = L t/(1-t), log r = e^s on [s0, s1]
            count (int): Node count
            params (tuple): (a, b), (L, 0) or (s0, s1)
        """
        kind = RadialMap(kind)
        x, w = gauss_rule_1d(int(count))
        lo, hi = (float(p) for p in params)
        if kind is RadialMap.LEGENDRE:
            if not 0.0 <= lo < hi:
                raise QuadratureError(f"legendre radial map needs 0 <= a < b (got {lo}, {hi})")
            half = 0.5 * (hi - lo)
            nodes, base = lo + half * (x + 1.0), half * w
            weights, extent = base, hi - lo
        elif kind is RadialMap.RATIONAL:
            if lo <= 0:
                raise QuadratureError(f"rational radial map needs L > 0 (got {lo})")
            t, base = 0.5 * (x + 1.0), 0.5 * w
            nodes = lo * t / (1.0 - t)
            weights, extent = base * lo / (1.0 - t) ** 2, 0.0
        else:
            if not lo < hi:
                raise QuadratureError(f"log radial map needs s0 < s1 (got {lo}, {hi})")
            half = 0.5 * (hi - lo)
            s, base = lo + half * (x + 1.0), half * w
            nodes = np.exp(s)
            weights, extent = base * nodes, hi - lo
        return cls(kind, (lo, hi), nodes, weights, base, extent)

    def coarse(self):
        return RadialRule.build(self.kind, max(self.count // 2, 1), self.params)

    def to_text(self):
        lo, hi = self.params
        header = (
            f"kind=radial map={self.kind.value} lo={lo!r} hi={hi!r} nodes={self.count}"
        )
        return _table_text(header, [self.nodes, self.weights])

    @classmethod
    def from_text(cls, text):
        header, table = _parse_table(text, "radial")
        rule = cls.build(
            header["map"], int(header["nodes"]), (float(header["lo"]), float(header["hi"]))
        )
        if not (np.array_equal(table[:, 0], rule.nodes) and np.array_equal(table[:, 1], rule.weights)):
            raise QuadratureError("radial rule table does not match its header")
        return rule

    @functools.cached_property
    def fingerprint(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()


@dataclass(frozen=True)
class MonteCarloSampler:
    """
    Importance sampler x = rho * w with w uniform on S^(n-1).

    rho follows a frozen scipy distribution chosen for the field's decay:
    chi with max(1, n-4) degrees of freedom for Gaussian decay, uniform on
    the support for compact fields, log-normal for log-Gaussian decay.
    Batch b is drawn from default_rng([seed, b]), so batches are
    reproducible in any evaluation order.
    """

    n: int
    samples: int
    seed: int
    proposal: str
    params: Tuple[float, float]
    batches: int = MC_BATCHES

    def __post_init__(self):
        if self.samples < 2 * self.batches or self.samples % self.batches:
            raise ConfigError(
                f"mc_samples must be a positive multiple of {self.batches} "
                f"and at least {2 * self.batches} (got {self.samples})",
                field="quadrature.mc_samples",
            )

    @functools.cached_property
    def distribution(self):
        a, b = self.params
        if self.proposal == "chi":
            return stats.chi(df=max(1, self.n - 4), scale=a)
        if self.proposal == "uniform":
            return stats.uniform(loc=a, scale=b - a)
        if self.proposal == "lognormal":
            return stats.lognorm(s=a, scale=1.0)
        raise ConfigError(f"unknown radial proposal '{self.proposal}'", field="quadrature")

    @property
    def batch_size(self):
        return self.samples // self.batches

    def draw(self, batch):
        """Points and importance weights of one batch."""
        rng = np.random.default_rng([self.seed, batch])
        g = rng.standard_normal((self.batch_size, self.n))
        omega = g / np.linalg.norm(g, axis=1, keepdims=True)
        rho = self.distribution.rvs(size=self.batch_size, random_state=rng)
        rho = np.maximum(rho, np.finfo(float).tiny)
        weights = sphere_area(self.n) * rho ** (self.n - 1) / self.distribution.pdf(rho)
        return rho[:, None] * omega, weights

    @property
    def description(self):
        a, b = self.params
        return (
            f"mc n={self.n} samples={self.samples} seed={self.seed} "
            f"proposal={self.proposal} params={a!r},{b!r} batches={self.batches}"
        )


class Summation(str, Enum):
    PAIRWISE = "pairwise"
    COMPENSATED = "compensated"


def pairwise_sum(values):
    """Sum in a fixed binary-tree order: adjacent pairs first, odd tails padded."""
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        return 0.0
    while a.size > 1:
        if a.size % 2:
            a = np.append(a, 0.0)
        a = a[0::2] + a[1::2]
    return float(a[0])


def compensated_sum(values):
    """
    Second-order Neumaier (Klein) compensated sum in sequence order.
    """
    s = cs = ccs = 0.0
    for x in np.asarray(values, dtype=float).ravel().tolist():
        t = s + x
        c = (s - t) + x if abs(s) >= abs(x) else (x - t) + s
        s = t
        t = cs + c
        cc = (cs - t) + c if abs(cs) >= abs(c) else (c - t) + cs
        cs = t
        ccs += cc
    return s + cs + ccs


_SUMMATION = {Summation.PAIRWISE: pairwise_sum, Summation.COMPENSATED: compensated_sum}


@dataclass(frozen=True, eq=False)
class QuadratureSpec:
    """
    A radial rule with a sphere rule, or a Monte Carlo sampler, for dimension n.

    Nodes sit at centre + r * w; without a centre the rule is polar about the
    origin.
    """

    n: int
    radial: RadialRule
    sphere: Optional[SphereRule] = None
    sampler: Optional[MonteCarloSampler] = None
    summation: Summation = Summation.PAIRWISE
    centre: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if (self.sphere is None) == (self.sampler is None):
            raise QuadratureError("a quadrature spec needs exactly one of sphere rule or sampler")
        inner = self.sphere if self.sphere is not None else self.sampler
        if inner.n != self.n:
            raise QuadratureError(
                f"dimension mismatch: spec n={self.n}, sphere/sampler n={inner.n}"
            )
        if self.centre is not None:
            centre = tuple(float(c) for c in self.centre)
            if len(centre) != self.n:
                raise QuadratureError(f"centre needs n={self.n} coordinates (got {len(centre)})")
            object.__setattr__(self, "centre", centre)
        object.__setattr__(self, "summation", Summation(self.summation))

    @property
    def monte_carlo(self):
        return self.sampler is not None

    @property
    def seed(self):
        return self.sampler.seed if self.monte_carlo else None

    @property
    def node_count(self):
        if self.monte_carlo:
            return self.sampler.samples
        return self.radial.count * self.sphere.count

    @functools.cached_property
    def fingerprint(self):
        inner = self.sampler.description if self.monte_carlo else self.sphere.fingerprint
        text = f"{self.n}|{self.radial.fingerprint}|{inner}|{self.summation.value}"
        if self.centre is not None:
            text += f"|centre={self.centre!r}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def describe(self):
        about = "" if self.centre is None else f" about {self.centre}"
        if self.monte_carlo:
            return f"{self.sampler.description}{about}"
        return (
            f"{self.radial.kind.value} N={self.radial.count} on {self.radial.params}{about}, "
            f"sphere d={self.sphere.degree} ({self.sphere.count} nodes), "
            f"error from N={max(self.radial.count // 2, 1)}, d={max(self.sphere.degree - 2, 0)}"
        )

    def place(self, offsets):
        """Node coordinates for offsets r * w from the rule's centre."""
        if self.centre is None:
            return offsets
        return offsets + np.asarray(self.centre)

    def coarse(self):
        """The same rule at half radial resolution and sphere degree d - 2."""
        if self.monte_carlo:
            raise QuadratureError("Monte Carlo specs have no coarse companion")
        return QuadratureSpec(
            self.n,
            self.radial.coarse(),
            self.sphere.coarse(),
            summation=self.summation,
            centre=self.centre,
        )

    def reduce(self, values):
        return _SUMMATION[self.summation](values)


@dataclass(frozen=True, eq=False)
class Estimate:
    """
    A quadrature value with its error model.

    Deterministic estimates carry the value of the coarse companion rule;
    Monte Carlo estimates carry batch means. Both propagate through linear
    combinations, so the error of a combination is estimated as a whole.
    ``edge`` bounds the integrand mass at the ends of a truncated radial map.
    """

    value: float
    coarse: Optional[float] = None
    batches: Optional[np.ndarray] = None
    edge: float = 0.0

    @classmethod
    def exact(cls, value):
        return cls(float(value), coarse=float(value))

    @property
    def monte_carlo(self):
        return self.batches is not None

    @property
    def error(self):
        if self.batches is not None:
            return float(np.std(self.batches, ddof=1) / math.sqrt(len(self.batches)))
        if self.coarse is not None:
            return abs(self.value - self.coarse)
        return 0.0

    def _combine(self, other, sign):
        if isinstance(other, (int, float)):
            other = Estimate.exact(other)
        if not isinstance(other, Estimate):
            return NotImplemented
        coarse = None
        if self.coarse is not None or other.coarse is not None:
            mine = self.value if self.coarse is None else self.coarse
            theirs = other.value if other.coarse is None else other.coarse
            coarse = mine + sign * theirs
        batches = None
        if self.batches is not None or other.batches is not None:
            mine = self.value if self.batches is None else self.batches
            theirs = other.value if other.batches is None else other.batches
            batches = mine + sign * np.asarray(theirs)
        return Estimate(
            self.value + sign * other.value, coarse, batches, self.edge + other.edge
        )

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float)):
            return NotImplemented
        c = float(scalar)
        return Estimate(
            c * self.value,
            None if self.coarse is None else c * self.coarse,
            None if self.batches is None else c * self.batches,
            abs(c) * self.edge,
        )

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __repr__(self):
        return f"Estimate({self.value!r} ± {self.error:.3g})"


@dataclass(frozen=True)
class QuadratureSettings:
    """
    Configured quadrature choices, resolved per field by ``spec_for``.

    ``auto`` picks the radial map from the field's decay and uses the
    sphere product rule for n <= 7, Monte Carlo above.
    """

    radial_map: str = "auto"
    radial_n: Optional[int] = None
    sphere: str = "auto"
    sphere_degree: int = 8
    mc_samples: int = 1_000_000
    seed: Optional[int] = None
    log_extent: float = 24.0
    gaussian_extent: float = 10.0
    chunk_size: int = DEFAULT_CHUNK_SIZE
    workers: int = 1
    summation: str = "pairwise"

    def _radial_for(self, field):
        kind = self.radial_map
        if kind == "auto":
            kind = {
                Decay.COMPACT: "legendre",
                Decay.GAUSSIAN: "legendre",
                Decay.LOG_GAUSSIAN: "log",
            }[field.decay]
        kind = RadialMap(kind)
        count = self.radial_n or (160 if kind is RadialMap.LOG else 96)
        scale = field.length_scale
        extent = self.log_extent
        if field.log_width is not None:
            extent = min(extent, 10.0 * field.log_width)
        if kind is RadialMap.LEGENDRE:
            if field.support is not None:
                params = field.support
            elif field.decay is Decay.LOG_GAUSSIAN:
                params = (scale * math.exp(-extent), scale * math.exp(extent))
            else:
                params = (0.0, self.gaussian_extent * scale)
        elif kind is RadialMap.RATIONAL:
            params = (scale, 0.0)
        else:
            centre = math.log(scale)
            params = (centre - extent, centre + extent)
        return RadialRule.build(kind, count, params)

    def _sampler_for(self, field, n):
        if self.seed is None:
            raise ConfigError("seed is mandatory for Monte Carlo quadrature", field="seed")
        if field.centre is not None:
            proposal, params = "uniform", (0.0, field.centre_radius)
        elif field.decay is Decay.COMPACT and field.support is not None:
            proposal, params = "uniform", tuple(field.support)
        elif field.decay is Decay.LOG_GAUSSIAN:
            width = field.log_width or self.log_extent / 6.0
            proposal, params = "lognormal", (1.2 * width, 0.0)
        else:
            proposal, params = "chi", (0.8 * field.length_scale, 0.0)
        return MonteCarloSampler(n, int(self.mc_samples), int(self.seed), proposal, params)

    def _centred_radial(self, field):
        return RadialRule.build(
            RadialMap.LEGENDRE,
            self.radial_n or CENTRED_RADIAL_NODES,
            (0.0, field.centre_radius),
        )

    def _centred_degree(self, field, n):
        distance = math.sqrt(sum(c * c for c in field.centre))
        degree = centred_sphere_degree(n, distance, field.centre_radius)
        if degree < required_sphere_degree(distance, field.centre_radius, 1e-8):
            logger.warning(
                f"{field.label}: sphere degree {degree} is the largest within "
                f"{MAX_CENTRED_SPHERE_NODES} nodes and may not resolve the field"
            )
        return max(int(self.sphere_degree), degree)

    def spec_for(self, field, n=None):
        """
        Quadrature spec suited to ``field``.

        Fields living in a ball off the origin get a rule centred on the
        ball: Gauss-Legendre in |x - c| on [0, radius] and a sphere degree
        chosen from the distance of the ball to the origin.

        Args:
            field (ScalarField): Field to integrate
            n (int, optional): Dimension; defaults to the field's

        Returns:
            QuadratureSpec: Resolved spec
        """
        n = field.n if n is None else n
        centre = field.centre
        radial = self._radial_for(field) if centre is None else self._centred_radial(field)
        mode = self.sphere
        if mode == "auto":
            mode = "product" if n <= SPHERE_DIMENSIONS[1] else "mc"
        if mode == "mc":
            spec = QuadratureSpec(
                n,
                radial,
                sampler=self._sampler_for(field, n),
                summation=self.summation,
                centre=centre,
            )
        elif mode == "product":
            degree = int(self.sphere_degree)
            if centre is not None:
                degree = self._centred_degree(field, n)
            sphere = sphere_product_rule(n, degree)
            spec = QuadratureSpec(
                n, radial, sphere=sphere, summation=self.summation, centre=centre
            )
        else:
            raise ConfigError(f"unknown sphere mode '{mode}'", field="quadrature.sphere")
        logger.debug(f"Quadrature for {field.key}: {spec.describe()} [{spec.fingerprint}]")
        return spec


def _locate_failure(error, exprs, part, points):
    """Re-evaluate point by point to tag an evaluation error with its node."""
    for x in points.coordinates:
        try:
            ctx = FieldJets(part, x[None, :])
            for expr in exprs:
                expr.evaluate(ctx)
        except EvaluationError:
            return error.at(x)
    return error


class Integrator:
    """
    Real inner products Re(Eu | Fv) of operator-applied fields on one spec.

    Results are cached by (field, operator, field, operator), so every term
    that appears in several identities is computed once and shared bit for
    bit.

    Args:
        spec (QuadratureSpec): Quadrature rule
        chunk_size (int): Nodes per evaluation chunk; fixes the reduction tree
        workers (int): Threads evaluating chunks
    """

    def __init__(self, spec, chunk_size=DEFAULT_CHUNK_SIZE, workers=1):
        self.spec = spec
        self.chunk_size = int(chunk_size)
        self.workers = max(1, int(workers))
        self._coarse = None if spec.monte_carlo else spec.coarse()
        self._cache = {}
        self.stats = {"integrals": 0, "cache_hits": 0, "nodes": 0}

    def inner(self, field, u, v):
        return self.inner_many(field, [(u, v)])[0]

    def norm2(self, field, u):
        return self.inner(field, u, u)

    def inner_many(self, field, pairs):
        """
        Estimates of Re(u f | v f) for (u, v) operator pairs on one field.
        """
        return self.inner_terms([((u, field), (v, field)) for u, v in pairs])

    def inner_terms(self, pairs):
        """
        Estimates of Re(u | v) for pairs of (operator, field) integrands.
        """
        keys = [self._key(u, v) for u, v in pairs]
        missing = []
        for key, pair in zip(keys, pairs):
            if key in self._cache:
                self.stats["cache_hits"] += 1
            elif key not in {k for k, _ in missing}:
                missing.append((key, pair))
        if missing:
            for (key, _), estimate in zip(missing, self._compute([p for _, p in missing])):
                self._cache[key] = estimate
        return [self._cache[key] for key in keys]

    def _key(self, u, v):
        (eu, fu), (ev, fv) = u, v
        for expr, field in (u, v):
            if expr.n != self.spec.n or field.n != self.spec.n:
                raise QuadratureError(
                    f"dimension mismatch: spec n={self.spec.n}, operator n={expr.n}, "
                    f"field n={field.n}"
                )
        a, b = (fu.key, eu), (fv.key, ev)
        return (a, b) if hash(a) <= hash(b) else (b, a)

    def _compute(self, pairs):
        self.stats["integrals"] += len(pairs)
        if self.spec.monte_carlo:
            sums = self._monte_carlo(pairs)
            m = self.spec.sampler.samples
            batches = self.spec.sampler.batches
            return [
                Estimate(self.spec.reduce(s) / m, batches=np.asarray(s) * batches / m)
                for s in sums
            ]
        fine, edges = self._deterministic(self.spec, pairs, track_edges=True)
        coarse, _ = self._deterministic(self._coarse, pairs)
        return [
            Estimate(self.spec.reduce(f), coarse=self._coarse.reduce(c), edge=e)
            for f, c, e in zip(fine, coarse, edges)
        ]

    def _evaluate(self, pairs, points, weights):
        """Weighted products u*v on one chunk, one row per pair."""
        contexts = {}
        values = {}
        for (eu, fu), (ev, fv) in pairs:
            for expr, field in ((eu, fu), (ev, fv)):
                for index, part in enumerate(field.parts):
                    key = (expr, field.key, index)
                    if key in values:
                        continue
                    ctx = contexts.setdefault((field.key, index), FieldJets(part, points))
                    try:
                        values[key] = expr.evaluate(ctx)
                    except EvaluationError as err:
                        raise _locate_failure(err, [expr], part, points) from err
        rows = np.zeros((len(pairs), len(weights)))
        for row, ((eu, fu), (ev, fv)) in enumerate(pairs):
            for index in range(min(len(fu.parts), len(fv.parts))):
                rows[row] += values[(eu, fu.key, index)] * values[(ev, fv.key, index)]
        return rows * weights

    def _map(self, work, items):
        if self.workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                return list(executor.map(work, items))
        return [work(item) for item in items]

    def _deterministic(self, spec, pairs, track_edges=False):
        radial, sphere = spec.radial, spec.sphere
        k = sphere.count
        total = radial.count * k
        jacobian = radial.weights * radial.nodes ** (spec.n - 1)
        starts = list(range(0, total, self.chunk_size))

        def work(start):
            index = np.arange(start, min(start + self.chunk_size, total))
            i_r, i_s = np.divmod(index, k)
            points = jets.Points(spec.place(radial.nodes[i_r, None] * sphere.nodes[i_s]))
            rows = self._evaluate(pairs, points, jacobian[i_r] * sphere.weights[i_s])
            sums = [spec.reduce(row) for row in rows]
            shells = None
            if track_edges and radial.extent > 0:
                first, last = i_r == 0, i_r == radial.count - 1
                shells = [(row[first].sum(), row[last].sum()) for row in rows]
            return sums, shells

        results = self._map(work, starts)
        self.stats["nodes"] += total
        logger.debug(f"Integrated {len(pairs)} pairs on {total} nodes ({len(starts)} chunks)")
        chunk_sums = np.array([sums for sums, _ in results]).T
        for p, row in enumerate(chunk_sums):
            if not np.all(np.isfinite(row)):
                raise QuadratureError(f"non-finite partial sum for pair {p}")
        edges = [0.0] * len(pairs)
        if track_edges and radial.extent > 0:
            for p in range(len(pairs)):
                first = sum(s[p][0] for _, s in results if s is not None)
                last = sum(s[p][1] for _, s in results if s is not None)
                edges[p] = radial.extent * max(
                    abs(first) / radial.base_weights[0], abs(last) / radial.base_weights[-1]
                )
        return list(chunk_sums), edges

    def _monte_carlo(self, pairs):
        sampler = self.spec.sampler

        def work(batch):
            x, weights = sampler.draw(batch)
            x = self.spec.place(x)
            parts = []
            for start in range(0, len(weights), self.chunk_size):
                stop = start + self.chunk_size
                rows = self._evaluate(pairs, jets.Points(x[start:stop]), weights[start:stop])
                parts.append([self.spec.reduce(row) for row in rows])
            return [self.spec.reduce(col) for col in np.array(parts).T]

        results = self._map(work, list(range(sampler.batches)))
        self.stats["nodes"] += sampler.samples
        sums = np.array(results).T
        if not np.all(np.isfinite(sums)):
            raise QuadratureError("non-finite partial sum in Monte Carlo integration")
        return list(sums)


def l2_inner(u, v, spec, integrator=None):
    """
    Re(u | v) in L^2(R^n) with the r^(n-1) Jacobian applied here.

    Args:
        u (tuple): (OperatorExpr, ScalarField)
        v (tuple): (OperatorExpr, ScalarField)
        spec (QuadratureSpec): Rule to integrate with
        integrator (Integrator, optional): Reuse an integrator and its cache

    Returns:
        Estimate: Value with error estimate
    """
    integrator = integrator or Integrator(spec)
    return integrator.inner_terms([(u, v)])[0]
