"""
Differential operators of the Rellich and Hardy identities as pointwise evaluators

Radial operators and weighted conjugations r^a d_r(r^b .) are reduced at
construction to a normal form c0(r) f + c1(r) d_r f + c2(r) d_r^2 f.
Spherical derivatives L_j = d_j - (x_j/r) d_r are evaluated from the
gradient and Hessian; the two compositions of L_j with a second-order radial
form use one nested jet pass for the third derivatives they need.
"""

import functools
import logging
import operator
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from src.rellich import jets
from src.utils.errors import DimensionError, OperatorOrderError

logger = logging.getLogger("rellich-lab")

MAX_DIMENSION = 9
RELLICH_MIN_DIMENSION = 5
HARDY_MIN_DIMENSION = 3

# Highest derivative order an evaluable expression may require
MAX_ORDER = 3

_POWER_DIGITS = 12
_COEFF_EPS = 1e-12


def require_dimension(n, minimum=RELLICH_MIN_DIMENSION):
    """
    Check that ``n`` lies in the range an expression or suite admits.

    Raises:
        DimensionError: If n < minimum or n > MAX_DIMENSION
    """
    if not float(n).is_integer() or int(n) < minimum:
        raise DimensionError(f"n ≥ {minimum} required (got n={n})", field="dimensions")
    if int(n) > MAX_DIMENSION:
        raise DimensionError(
            f"n ≤ {MAX_DIMENSION} supported (got n={n})", field="dimensions"
        )
    return int(n)


def _laurent(items):
    """Normalise (power, coefficient) pairs: merge equal powers, drop zeros."""
    merged = {}
    for p, c in items:
        key = round(float(p), _POWER_DIGITS) + 0.0
        merged[key] = merged.get(key, 0.0) + float(c)
    return tuple(sorted((p, c) for p, c in merged.items() if abs(c) > _COEFF_EPS))


def _laurent_derivative(coeffs):
    return _laurent((p - 1.0, p * c) for p, c in coeffs if p != 0.0)


def _laurent_shift(coeffs, power, scale=1.0):
    return _laurent((p + power, scale * c) for p, c in coeffs)


def _laurent_value(coeffs, r):
    """sum c r^p at an array of radii or at a radius jet."""
    if isinstance(r, np.ndarray):
        return sum(c * np.power(r, p) for p, c in coeffs)
    return functools.reduce(operator.add, (jets.power(r, p) * c for p, c in coeffs))


def _show_laurent(coeffs):
    if not coeffs:
        return "0"
    return " + ".join(f"{c:g}·r^{p:g}" for p, c in coeffs)


@dataclass(frozen=True)
class RadialForm:
    """
    c0(r) f + c1(r) d_r f + c2(r) d_r^2 f.

    Each coefficient is a tuple of (power, coefficient) pairs sorted by
    power; powers are rounded so that equal exponents reached along
    different chains merge.
    """

    c0: Tuple = ()
    c1: Tuple = ()
    c2: Tuple = ()

    @classmethod
    def identity(cls):
        return cls(c0=((0.0, 1.0),))

    @classmethod
    def of(cls, c0=None, c1=None, c2=None):
        """Build from {power: coefficient} mappings."""
        return cls(*(_laurent((c or {}).items()) for c in (c0, c1, c2)))

    @property
    def coefficients(self):
        return (self.c0, self.c1, self.c2)

    @property
    def order(self):
        if self.c2:
            return 2
        return 1 if self.c1 else 0

    def weighted(self, power, scale=1.0):
        """Multiply the form by scale * r^power."""
        return RadialForm(*(_laurent_shift(c, power, scale) for c in self.coefficients))

    def differentiated(self):
        """Apply d_r to the form."""
        if self.c2:
            raise OperatorOrderError(
                "d_r of a second-order radial form needs third derivatives"
            )
        return RadialForm(
            _laurent_derivative(self.c0),
            _laurent(self.c0 + _laurent_derivative(self.c1)),
            self.c1,
        )

    def __add__(self, other):
        return RadialForm(
            *(_laurent(a + b) for a, b in zip(self.coefficients, other.coefficients))
        )

    def same_as(self, other, rel=1e-12):
        """Coefficient-wise equality up to a relative tolerance."""
        for mine, theirs in zip(self.coefficients, other.coefficients):
            a, b = dict(mine), dict(theirs)
            for p in set(a) | set(b):
                x, y = a.get(p, 0.0), b.get(p, 0.0)
                if abs(x - y) > rel * max(1.0, abs(x), abs(y)):
                    return False
        return True

    def apply(self, r, u, du=None, d2u=None):
        """
        Evaluate the form given u, d_r u and d_r^2 u.

        All arguments are arrays of the batch shape or jets of the same
        kind; derivatives the form does not use may be omitted.
        """
        total = u * 0.0
        for coeffs, value in zip(self.coefficients, (u, du, d2u)):
            if coeffs:
                total = total + _laurent_value(coeffs, r) * value
        return total

    def __str__(self):
        return (
            f"[{_show_laurent(self.c0)}] f + [{_show_laurent(self.c1)}] f' "
            f"+ [{_show_laurent(self.c2)}] f''"
        )


def chain_form(*weights):
    """
    Normal form of r^w_k d_r( ... r^w_1 d_r(r^w_0 f)).

    Args:
        *weights (float): Exponents from the innermost weight outwards

    Raises:
        OperatorOrderError: If the chain needs more than two derivatives
    """
    inner, *outer = weights
    form = RadialForm.identity().weighted(inner)
    for w in outer:
        form = form.differentiated().weighted(w)
    return form


# Helpers over lists of coordinate jets and matching partial-derivative jets.


def _partial_jets(jet):
    """Jet1 of every first partial of a Jet2: value d_k u, gradient row k of Hess u."""
    n = jet.dim
    return [
        jets.Jet1(jet.gradient[..., k], tuple(jet.hessian[..., k, i] for i in range(n)))
        for k in range(n)
    ]


def _radial_part(partials, coords, r):
    return functools.reduce(operator.add, (x * p for x, p in zip(coords, partials))) / r


def _tangential(partials, coords, r, index, radial=None):
    if radial is None:
        radial = _radial_part(partials, coords, r)
    return partials[index] - coords[index] * radial / r


def _dot(a, b):
    return np.einsum("mi,mi->m", a, b)


def _radial_of_jet1(u, omega):
    return _dot(omega, u.gradient_array())


def _spherical_of_jet1(u, omega, index):
    grad = u.gradient_array()
    return grad[:, index] - omega[:, index] * _dot(omega, grad)


class FieldJets:
    """
    Derivative data of one real field on a batch of points.

    Everything is computed on first use and shared by all operators
    evaluated on the batch, so equal integrands are bit-identical.

    Args:
        field (ScalarField): Real field (one part of a complex field)
        points (Points | np.ndarray): Evaluation points, origin excluded
    """

    def __init__(self, field, points):
        self.field = field
        self.points = jets.as_points(points)
        self.coords = self.points.coordinates
        self.r = self.points.radius
        self.omega = self.points.direction
        self._spherical1 = {}
        self._spherical2 = {}

    @property
    def n(self):
        return self.points.dim

    @functools.cached_property
    def jet(self):
        return jets.evaluate_jet2(self.field, self.points)

    @property
    def value(self):
        return self.jet.value

    @property
    def gradient(self):
        return self.jet.gradient

    @property
    def hessian(self):
        return self.jet.hessian

    @functools.cached_property
    def radial_d1(self):
        return _dot(self.omega, self.gradient)

    @functools.cached_property
    def radial_d2(self):
        return np.einsum("mi,mij,mj->m", self.omega, self.hessian, self.omega)

    @functools.cached_property
    def partials(self):
        """Jet2 of every first partial, from the nested pass."""
        logger.debug(f"Nested jet pass for {self.field.key} on {self.points.count} points")
        return jets.evaluate_partials_jet2(self.field, self.points)

    @functools.cached_property
    def third_norm(self):
        return np.sqrt(sum(np.sum(p.hessian**2, axis=(-2, -1)) for p in self.partials))

    @functools.cached_property
    def _coords1(self):
        return jets.seed_jet1(self.coords)

    @functools.cached_property
    def radius_jet1(self):
        return jets.radius(self._coords1)

    @functools.cached_property
    def _coords2(self):
        return jets.seed_jet2(self.coords)

    @functools.cached_property
    def _radius2(self):
        return jets.radius(self._coords2)

    @functools.cached_property
    def _first(self):
        return _partial_jets(self.jet)

    @functools.cached_property
    def value_jet1(self):
        n = self.n
        return jets.Jet1(self.value, tuple(self.gradient[:, i] for i in range(n)))

    @functools.cached_property
    def radial_d1_jet1(self):
        return _radial_part(self._first, self._coords1, self.radius_jet1)

    @functools.cached_property
    def radial_d1_jet2(self):
        return _radial_part(self.partials, self._coords2, self._radius2)

    @functools.cached_property
    def radial_d2_jet1(self):
        return _radial_part(
            _partial_jets(self.radial_d1_jet2), self._coords1, self.radius_jet1
        )

    def spherical_value(self, index):
        return self.gradient[:, index] - self.omega[:, index] * self.radial_d1

    def spherical_jet1(self, index):
        """L_j f with its gradient."""
        if index not in self._spherical1:
            self._spherical1[index] = _tangential(
                self._first, self._coords1, self.radius_jet1, index, self.radial_d1_jet1
            )
        return self._spherical1[index]

    def spherical_jet2(self, index):
        """L_j f with gradient and Hessian."""
        if index not in self._spherical2:
            self._spherical2[index] = _tangential(
                self.partials, self._coords2, self._radius2, index, self.radial_d1_jet2
            )
        return self._spherical2[index]

    def radial(self, form):
        return form.apply(
            self.r,
            self.value,
            self.radial_d1 if form.c1 else None,
            self.radial_d2 if form.c2 else None,
        )

    def radial_jet1(self, form):
        """The form applied to f, with its gradient."""
        return form.apply(
            self.radius_jet1,
            self.value_jet1,
            self.radial_d1_jet1 if form.c1 else None,
            self.radial_d2_jet1 if form.c2 else None,
        )

    def scale(self, order):
        """
        Natural size of derivative terms of the given order at each point.

        Sum of |D^i f| r^(i - order) for i up to the order.
        """
        r = self.r
        parts = [
            np.abs(self.value),
            np.linalg.norm(self.gradient, axis=-1),
            np.linalg.norm(self.hessian, axis=(-2, -1)),
        ]
        if order >= 3:
            parts.append(self.third_norm)
        return sum(p * r ** (i - order) for i, p in enumerate(parts[: order + 1]))


class OperatorExpr:
    """
    Immutable operator tree node built for a fixed dimension ``n``.

    Supports ``+``, ``-`` and scalar multiplication, which build
    ``LinearCombination`` nodes.
    """

    nested = False

    @property
    def order(self):
        raise NotImplementedError

    @property
    def label(self):
        raise NotImplementedError

    def evaluate(self, ctx):
        raise NotImplementedError

    def __add__(self, other):
        if not isinstance(other, OperatorExpr):
            return NotImplemented
        return linear_combination([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        if not isinstance(other, OperatorExpr):
            return NotImplemented
        return linear_combination([(1.0, self), (-1.0, other)])

    def __neg__(self):
        return linear_combination([(-1.0, self)])

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float)):
            return NotImplemented
        return linear_combination([(float(scalar), self)])

    __rmul__ = __mul__

    def __repr__(self):
        return f"{type(self).__name__}<{self.label}, n={self.n}>"


@dataclass(frozen=True, repr=False)
class Radial(OperatorExpr):
    """A radial operator or weighted conjugation in normal form."""

    form: RadialForm
    n: int
    name: str

    @property
    def order(self):
        return self.form.order

    @property
    def label(self):
        return self.name

    def evaluate(self, ctx):
        return ctx.radial(self.form)


@dataclass(frozen=True, repr=False)
class Laplacian(OperatorExpr):
    n: int

    order = 2
    label = "Δ"

    def evaluate(self, ctx):
        return np.trace(ctx.hessian, axis1=-2, axis2=-1)


@dataclass(frozen=True, repr=False)
class Spherical(OperatorExpr):
    """L_j f = d_j f - (x_j/r) d_r f."""

    j: int
    n: int

    order = 1

    @property
    def label(self):
        return f"L_{self.j}"

    def evaluate(self, ctx):
        return ctx.spherical_value(self.j - 1)


@dataclass(frozen=True, repr=False)
class Spherical2(OperatorExpr):
    """L_j^2 f by differentiating the field y -> L_j f(y)."""

    j: int
    n: int

    order = 2

    @property
    def label(self):
        return f"L_{self.j}²"

    def evaluate(self, ctx):
        index = self.j - 1
        return _spherical_of_jet1(ctx.spherical_jet1(index), ctx.omega, index)


@dataclass(frozen=True, repr=False)
class SphericalLaplacian(OperatorExpr):
    """sum_j L_j^2 f."""

    n: int

    order = 2
    label = "ΣL_j²"

    def evaluate(self, ctx):
        return sum(Spherical2(j, self.n).evaluate(ctx) for j in range(1, self.n + 1))


@dataclass(frozen=True, repr=False)
class AngularMomentum(OperatorExpr):
    """r^-2 sum_{j<k} (x_j d_k - x_k d_j)^2 f from Hessian entries."""

    n: int

    order = 2
    label = "r⁻²Σ(x_j∂_k−x_k∂_j)²"

    def evaluate(self, ctx):
        x, g, h = ctx.coords, ctx.gradient, ctx.hessian
        total = np.zeros(len(x))
        for j in range(self.n):
            for k in range(j + 1, self.n):
                total += (
                    x[:, j] ** 2 * h[:, k, k]
                    + x[:, k] ** 2 * h[:, j, j]
                    - 2.0 * x[:, j] * x[:, k] * h[:, j, k]
                    - x[:, j] * g[:, j]
                    - x[:, k] * g[:, k]
                )
        return total / ctx.r**2


def _require_radial(inner):
    if not isinstance(inner, Radial):
        raise OperatorOrderError(
            f"L_j composes only with radial forms (got {inner.label})"
        )


@dataclass(frozen=True, repr=False)
class RadialOfSpherical(OperatorExpr):
    """A radial form applied to h_j = L_j f."""

    inner: Radial
    j: int
    n: int

    def __post_init__(self):
        _require_radial(self.inner)

    @property
    def order(self):
        return self.inner.order + 1

    @property
    def nested(self):
        return self.inner.order == 2

    @property
    def label(self):
        return f"{self.inner.label}∘L_{self.j}"

    def evaluate(self, ctx):
        index = self.j - 1
        if not self.nested:
            h = ctx.spherical_jet1(index)
            return self.inner.form.apply(ctx.r, jets.primal(h.value), _radial_of_jet1(h, ctx.omega))
        h = ctx.spherical_jet2(index)
        du = _dot(ctx.omega, h.gradient)
        d2u = np.einsum("mi,mij,mj->m", ctx.omega, h.hessian, ctx.omega)
        return self.inner.form.apply(ctx.r, h.value, du, d2u)


@dataclass(frozen=True, repr=False)
class SphericalOfRadial(OperatorExpr):
    """L_j applied to a radial form of f."""

    j: int
    inner: Radial
    n: int

    def __post_init__(self):
        _require_radial(self.inner)

    @property
    def order(self):
        return self.inner.order + 1

    @property
    def nested(self):
        return self.inner.order == 2

    @property
    def label(self):
        return f"L_{self.j}∘{self.inner.label}"

    def evaluate(self, ctx):
        index = self.j - 1
        return _spherical_of_jet1(ctx.radial_jet1(self.inner.form), ctx.omega, index)


@dataclass(frozen=True, repr=False)
class CoordinateWeight(OperatorExpr):
    """x_j r^power times another operator."""

    j: int
    power: float
    inner: OperatorExpr
    n: int

    @property
    def order(self):
        return self.inner.order

    @property
    def nested(self):
        return self.inner.nested

    @property
    def label(self):
        return f"x_{self.j}·r^{self.power:g}·{self.inner.label}"

    def evaluate(self, ctx):
        return ctx.coords[:, self.j - 1] * ctx.r**self.power * self.inner.evaluate(ctx)


@dataclass(frozen=True, repr=False)
class LinearCombination(OperatorExpr):
    terms: Tuple
    n: int

    def __post_init__(self):
        if self.order > MAX_ORDER:
            raise OperatorOrderError(
                f"expression of order {self.order} exceeds {MAX_ORDER}"
            )

    @property
    def order(self):
        return max((t.order for _, t in self.terms), default=0)

    @property
    def nested(self):
        return any(t.nested for _, t in self.terms)

    @property
    def label(self):
        return " + ".join(f"{c:g}·{t.label}" for c, t in self.terms) or "0"

    def evaluate(self, ctx):
        total = np.zeros(ctx.points.count)
        for c, term in self.terms:
            total = total + c * term.evaluate(ctx)
        return total


def _same_dimension(exprs):
    dims = {e.n for e in exprs}
    if len(dims) > 1:
        raise DimensionError(
            f"operators built for different dimensions {sorted(dims)}", field="dimensions"
        )
    return dims.pop()


def linear_combination(pairs):
    """
    sum c_k E_k; nested combinations are flattened.

    Args:
        pairs (iterable): (coefficient, OperatorExpr) pairs
    """
    flat = []
    for c, expr in pairs:
        if isinstance(expr, LinearCombination):
            flat.extend((c * c_inner, e) for c_inner, e in expr.terms)
        else:
            flat.append((float(c), expr))
    n = _same_dimension([e for _, e in flat])
    return LinearCombination(tuple(flat), n)


# Factories. Spherical indices j are 1-based.


def _radial(form, n, name, minimum=HARDY_MIN_DIMENSION):
    return Radial(form, require_dimension(n, minimum), name)


def _index(j, n):
    if not 1 <= int(j) <= n:
        raise DimensionError(f"1 ≤ j ≤ n violated (j={j}, n={n})", field="operators")
    return int(j)


def identity(n):
    return _radial(RadialForm.identity(), n, "f")


def radial_d1(n):
    return _radial(RadialForm.of(c1={0: 1.0}), n, "∂_r")


def radial_d2(n):
    return _radial(RadialForm.of(c2={0: 1.0}), n, "∂_r²")


def multiply_weight(power, n):
    """r^power f."""
    return _radial(RadialForm.of(c0={power: 1.0}), n, f"r^{power:g}")


def weighted_chain(alpha, beta, n):
    """r^alpha d_r(r^beta f)."""
    return _radial(chain_form(beta, alpha), n, f"r^{alpha:g}∂_r(r^{beta:g}·)")


def weighted_chain2(alpha, beta, gamma, n):
    """r^alpha d_r(r^beta d_r(r^gamma f))."""
    return _radial(
        chain_form(gamma, beta, alpha),
        n,
        f"r^{alpha:g}∂_r(r^{beta:g}∂_r(r^{gamma:g}·))",
    )


def bessel(n):
    """A = d_r^2 + (n-1)/r d_r."""
    return _radial(RadialForm.of(c1={-1: n - 1.0}, c2={0: 1.0}), n, "A")


def bessel_divergence(n):
    """A in divergence form r^(1-n) d_r(r^(n-1) d_r f)."""
    return weighted_chain2(1.0 - n, n - 1.0, 0.0, n)


def hardy_remainder(n):
    """d_r f + (n-2)/(2r) f."""
    return _radial(
        RadialForm.of(c0={-1: (n - 2) / 2.0}, c1={0: 1.0}), n, "∂_r+(n−2)/(2r)"
    )


def hardy_divergence(n):
    """r^(1-n/2) d_r(r^(n/2-1) f)."""
    return weighted_chain(1.0 - n / 2.0, n / 2.0 - 1.0, n)


def rellich_r1(n, form=1):
    """
    Second-order Rellich remainder in one of its three spellings.

    1: d_r^2 f + (n-1)/r d_r f + n(n-4)/(4r^2) f
    2: r^(1-n/2) d_r(r^-1 d_r(r^(n/2) f))
    3: r^(-n/2-1) d_r(r^3 d_r(r^((n-4)/2) f))
    """
    require_dimension(n, RELLICH_MIN_DIMENSION)
    if form == 1:
        c = n * (n - 4) / 4.0
        return _radial(
            RadialForm.of(c0={-2: c}, c1={-1: n - 1.0}, c2={0: 1.0}),
            n,
            "R₁",
            RELLICH_MIN_DIMENSION,
        )
    if form == 2:
        return replace(weighted_chain2(1.0 - n / 2.0, -1.0, n / 2.0, n), name="R₁⁽²⁾")
    if form == 3:
        chain = weighted_chain2(-n / 2.0 - 1.0, 3.0, (n - 4) / 2.0, n)
        return replace(chain, name="R₁⁽³⁾")
    raise ValueError(f"R1 has spellings 1, 2 and 3 (got {form})")


def rellich_r2(n, form=1):
    """
    First-order Rellich remainder.

    1: (1/r) d_r f + (n-4)/(2r^2) f
    2: r^(1-n/2) d_r(r^(n/2-2) f)
    """
    require_dimension(n, RELLICH_MIN_DIMENSION)
    if form == 1:
        return _radial(
            RadialForm.of(c0={-2: (n - 4) / 2.0}, c1={-1: 1.0}),
            n,
            "R₂",
            RELLICH_MIN_DIMENSION,
        )
    if form == 2:
        return replace(weighted_chain(1.0 - n / 2.0, n / 2.0 - 2.0, n), name="R₂⁽²⁾")
    raise ValueError(f"R2 has spellings 1 and 2 (got {form})")


def bessel_of_spherical_expansion(n):
    """d_r^2 + (n+1)/r d_r + (n-1)/r^2, the form L_j A f takes in h_j = L_j f."""
    return _radial(
        RadialForm.of(c0={-2: n - 1.0}, c1={-1: n + 1.0}, c2={0: 1.0}), n, "A⁺"
    )


def laplacian(n):
    return Laplacian(require_dimension(n, HARDY_MIN_DIMENSION))


def spherical(j, n):
    n = require_dimension(n, HARDY_MIN_DIMENSION)
    return Spherical(_index(j, n), n)


def spherical2(j, n):
    n = require_dimension(n, HARDY_MIN_DIMENSION)
    return Spherical2(_index(j, n), n)


def spherical_laplacian(n):
    return SphericalLaplacian(require_dimension(n, HARDY_MIN_DIMENSION))


def angular_momentum(n):
    return AngularMomentum(require_dimension(n, HARDY_MIN_DIMENSION))


def radial_of_spherical(inner, j):
    return RadialOfSpherical(inner, _index(j, inner.n), inner.n)


def spherical_of_radial(j, inner):
    return SphericalOfRadial(_index(j, inner.n), inner, inner.n)


def coordinate_weight(j, power, inner):
    return CoordinateWeight(_index(j, inner.n), float(power), inner, inner.n)


def _check_match(expr, field):
    if expr.n != field.n:
        raise DimensionError(
            f"operator built for n={expr.n} applied to a field in n={field.n}",
            field="dimensions",
        )


def apply(expr, f, x):
    """
    Evaluate an operator applied to a real field at points.

    Args:
        expr (OperatorExpr): Operator built for f's dimension
        f (ScalarField): Real field (complex fields: apply to each part)
        x (np.ndarray | Points): One point (n,) or a batch (m, n), origin excluded

    Returns:
        float | np.ndarray: Value at the point, or one value per point
    """
    _check_match(expr, f)
    values = expr.evaluate(FieldJets(f, x))
    if isinstance(x, np.ndarray) and x.ndim == 1:
        return float(values[0])
    return values


def spherical2_closed_form(gradient, hessian, x, j):
    """
    L_j^2 f from the gradient and Hessian by explicit contraction.

    Args:
        gradient (np.ndarray): Shape (m, n)
        hessian (np.ndarray): Shape (m, n, n)
        x (np.ndarray): Points, shape (m, n)
        j (int): 1-based index
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = np.atleast_2d(gradient)
    h = np.asarray(hessian).reshape(x.shape + (x.shape[-1],))
    index = j - 1
    r2 = np.sum(x * x, axis=-1)
    xg = _dot(x, g)
    hx = np.einsum("mik,mk->mi", h, x)
    xj = x[:, index]
    # d_i h_j for every i
    dh = (
        h[:, :, index]
        - xj[:, None] * g / r2[:, None]
        + 2.0 * x * (xj * xg / r2**2)[:, None]
        - xj[:, None] * hx / r2[:, None]
    )
    dh[:, index] -= xg / r2
    return dh[:, index] - xj * _dot(x, dh) / r2


DEFAULT_LAMBDAS = (-3.7, -1.0, 0.5, 2.0)


@dataclass(frozen=True)
class PointwiseResidual:
    """
    Largest residual of one pointwise identity over a batch of points.

    ``lhs_max`` and ``rhs_max`` are the largest magnitudes of the two sides.
    """

    name: str
    abs_residual: float
    rel_residual: float
    lhs_max: float = 0.0
    rhs_max: float = 0.0

    def merged(self, other):
        return PointwiseResidual(
            self.name,
            max(self.abs_residual, other.abs_residual),
            max(self.rel_residual, other.rel_residual),
            max(self.lhs_max, other.lhs_max),
            max(self.rhs_max, other.rhs_max),
        )

    def passed(self, tolerance):
        return self.rel_residual <= tolerance


def _residual(name, lhs, rhs, scale):
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    diff = np.abs(lhs - rhs)
    size = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), scale)
    rel = np.where(size > 0, diff / np.where(size > 0, size, 1.0), diff)
    return PointwiseResidual(
        name,
        float(np.max(diff)),
        float(np.max(rel)),
        float(np.max(np.abs(lhs))),
        float(np.max(np.abs(rhs))),
    )


def _worst(name, residuals):
    return functools.reduce(PointwiseResidual.merged, residuals, PointwiseResidual(name, 0.0, 0.0))


def _pointwise_residuals(ctx, lambdas):
    n, r, omega = ctx.n, ctx.r, ctx.omega
    s1, s2, s3 = ctx.scale(1), ctx.scale(2), ctx.scale(3)
    indices = range(n)
    sph_lap = spherical_laplacian(n).evaluate(ctx)

    yield _residual(
        "laplacian_decomposition",
        laplacian(n).evaluate(ctx),
        ctx.radial_d2 + (n - 1.0) / r * ctx.radial_d1 + sph_lap,
        s2,
    )
    yield _residual("angular_momentum", angular_momentum(n).evaluate(ctx), sph_lap, s2)
    yield _residual(
        "euler_tangential",
        sum(ctx.coords[:, i] * ctx.spherical_value(i) for i in indices),
        0.0,
        r * s1,
    )

    def commutation(i):
        h = ctx.spherical_jet1(i)
        rhs = _radial_of_jet1(h, omega) + jets.primal(h.value) / r
        return _residual("radial_commutation", _spherical_of_jet1(ctx.radial_d1_jet1, omega, i), rhs, s2)

    yield _worst("radial_commutation", (commutation(i) for i in indices))

    def weight(lam, i):
        weighted = jets.power(ctx.radius_jet1, lam) * ctx.value_jet1
        rhs = r**lam * ctx.spherical_value(i)
        return _residual("weight_commutation", _spherical_of_jet1(weighted, omega, i), rhs, r**lam * s1)

    yield _worst("weight_commutation", (weight(lam, i) for lam in lambdas for i in indices))

    a, expansion = bessel(n), bessel_of_spherical_expansion(n)
    yield _worst(
        "bessel_expansion",
        (
            _residual(
                "bessel_expansion",
                spherical_of_radial(j, a).evaluate(ctx),
                radial_of_spherical(expansion, j).evaluate(ctx),
                s3,
            )
            for j in range(1, n + 1)
        ),
    )

    r1 = [ctx.radial(rellich_r1(n, k).form) for k in (1, 2, 3)]
    yield _worst(
        "rellich_r1_forms",
        (_residual("rellich_r1_forms", r1[0], other, s2) for other in r1[1:]),
    )
    yield _residual(
        "rellich_r2_forms",
        ctx.radial(rellich_r2(n, 1).form),
        ctx.radial(rellich_r2(n, 2).form),
        s1 / r,
    )
    yield _residual(
        "bessel_divergence", ctx.radial(a.form), ctx.radial(bessel_divergence(n).form), s2
    )
    yield _residual(
        "hardy_forms",
        ctx.radial(hardy_remainder(n).form),
        ctx.radial(hardy_divergence(n).form),
        s1,
    )
    yield _worst(
        "spherical2_closed_form",
        (
            _residual(
                "spherical2_closed_form",
                spherical2(j, n).evaluate(ctx),
                spherical2_closed_form(ctx.gradient, ctx.hessian, ctx.coords, j),
                s2,
            )
            for j in range(1, n + 1)
        ),
    )


def pointwise_identity_suite(f, x, lambdas=DEFAULT_LAMBDAS):
    """
    Residuals of every pointwise operator identity at a batch of points.

    Each residual is |lhs - rhs| relative to the larger of the two sides and
    the natural derivative scale of f at the point; the worst point wins.
    Complex fields contribute both parts.

    Args:
        f (ScalarField): Field in dimension n >= 5
        x (np.ndarray | Points): Points, origin excluded
        lambdas (tuple): Exponents for the weight commutation L_j(r^λ u) = r^λ L_j u

    Returns:
        dict: Identity name to PointwiseResidual
    """
    require_dimension(f.n, RELLICH_MIN_DIMENSION)
    points = jets.as_points(x)
    results = {}
    for part in f.parts:
        ctx = FieldJets(part, points)
        for residual in _pointwise_residuals(ctx, lambdas):
            previous = results.get(residual.name)
            results[residual.name] = residual if previous is None else previous.merged(residual)
    worst = max(results.values(), key=lambda res: res.rel_residual)
    logger.debug(
        f"Pointwise suite for {f.label} n={f.n} on {points.count} points: "
        f"worst {worst.name} {worst.rel_residual:.3e}"
    )
    return results


def radial_forms_agree(n, rel=1e-12):
    """True when the spellings of R1, R2, A and the Hardy remainder agree coefficient-wise."""
    return all(
        (
            rellich_r1(n, 1).form.same_as(rellich_r1(n, 2).form, rel),
            rellich_r1(n, 1).form.same_as(rellich_r1(n, 3).form, rel),
            rellich_r2(n, 1).form.same_as(rellich_r2(n, 2).form, rel),
            bessel(n).form.same_as(bessel_divergence(n).form, rel),
            hardy_remainder(n).form.same_as(hardy_divergence(n).form, rel),
        )
    )
