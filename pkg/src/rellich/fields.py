"""
Catalog of test functions for the Rellich and Hardy identities

Every field is a pure map from coordinate jets to a jet, so the same
evaluator serves plain arrays, ``Jet1``, ``Jet2`` and nested jets.
"""

import logging
import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import gamma

from src.rellich import jets
from src.utils.errors import FieldParameterError

logger = logging.getLogger("rellich-lab")


class Decay(str, Enum):
    COMPACT = "compact"
    GAUSSIAN = "gaussian"
    LOG_GAUSSIAN = "log_gaussian"


class Smoothness(str, Enum):
    WHOLE_SPACE = "all"
    PUNCTURED = "punctured"


def sphere_area(n):
    """|S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


@dataclass(frozen=True)
class FamilyParams:
    """
    Family id, dimension and parameters of a test function.

    Parameters are stored as sorted (key, value) pairs; list values become
    tuples so the record stays hashable.
    """

    family: str
    n: int
    values: Tuple = ()

    @classmethod
    def of(cls, family, n, **values):
        items = []
        for key, value in sorted(values.items()):
            if isinstance(value, (list, tuple)):
                value = tuple(value)
            items.append((key, value))
        return cls(family, int(n), tuple(items))

    def get(self, key, default=None):
        return dict(self.values).get(key, default)

    @property
    def label(self):
        def show(v):
            if isinstance(v, tuple):
                return "/".join(f"{x:g}" for x in v)
            return f"{v:g}" if isinstance(v, (int, float)) else str(v)

        inner = ",".join(f"{k}={show(v)}" for k, v in self.values)
        return f"{self.family}({inner})" if inner else self.family


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    A test function with its metadata.

    Complex-valued fields carry their imaginary part in ``imag``; ``parts``
    yields the real fields whose contributions are summed in every norm.
    A field with a ``centre`` vanishes outside the ball of radius
    ``centre_radius`` about it. ``vanishes`` marks the identically zero field.
    """

    params: FamilyParams
    evaluator: Callable
    radial: bool
    smooth_on: Smoothness
    decay: Decay
    length_scale: float
    support: Optional[Tuple[float, float]] = None
    imag: Optional["ScalarField"] = None
    part: str = "re"
    log_width: Optional[float] = None
    centre: Optional[Tuple[float, ...]] = None
    centre_radius: Optional[float] = None
    vanishes: bool = False

    def __call__(self, coords):
        return self.evaluator(coords)

    @property
    def n(self):
        return self.params.n

    @property
    def key(self):
        return f"{self.params.label}[n={self.n}]:{self.part}"

    @property
    def label(self):
        return self.params.label

    @property
    def parts(self):
        if self.imag is None:
            return (self,)
        return (replace(self, imag=None), self.imag)

    def __eq__(self, other):
        return isinstance(other, ScalarField) and self.key == other.key

    def __hash__(self):
        return hash(self.key)


def _require(condition, message):
    if not condition:
        raise FieldParameterError(message, field="fields")


def _positive(p, key, default=None):
    value = p.get(key, default)
    _require(value is not None, f"{p.family} requires parameter '{key}'")
    value = float(value)
    _require(value > 0, f"{p.family}: {key} > 0 violated (got {value})")
    return value


def _padded(p, key, default=()):
    raw = tuple(p.get(key, default))
    _require(len(raw) <= p.n, f"{p.family}: '{key}' has more than n={p.n} entries")
    return raw + (0,) * (p.n - len(raw))


def _axis(p, key="axis", default=1):
    axis = p.get(key, default)
    _require(
        float(axis).is_integer() and 1 <= int(axis) <= p.n,
        f"{p.family}: 1 <= {key} <= n violated (got {axis})",
    )
    return int(axis) - 1


def _gaussian(sigma):
    scale = -0.5 / sigma**2

    def envelope(coords):
        return jets.exp(jets.radius_squared(coords) * scale)

    return envelope


def _smooth_step(t):
    """0 for t <= 0, 1 for t >= 1, C-infinity in between."""
    rising = jets.smooth_cutoff(t)
    return rising / (rising + jets.smooth_cutoff(1.0 - t))


def _gaussian_radial(p):
    sigma = _positive(p, "sigma", 1.0)
    return ScalarField(
        p, _gaussian(sigma), True, Smoothness.WHOLE_SPACE, Decay.GAUSSIAN, sigma
    )


def _poly_gaussian(p):
    sigma = _positive(p, "sigma", 1.0)
    alpha = _padded(p, "alpha")
    _require(
        all(float(a).is_integer() and a >= 0 for a in alpha),
        f"{p.family}: alpha must be a multi-index of non-negative integers",
    )
    alpha = tuple(int(a) for a in alpha)
    envelope = _gaussian(sigma)

    def evaluator(coords):
        out = envelope(coords)
        for c, a in zip(coords, alpha):
            if a:
                out = out * jets.power(c, a)
        return out

    return ScalarField(
        p, evaluator, sum(alpha) == 0, Smoothness.WHOLE_SPACE, Decay.GAUSSIAN, sigma
    )


def _solid_gaussian(p):
    sigma = _positive(p, "sigma", 1.0)
    j = _axis(p)
    envelope = _gaussian(sigma)
    return ScalarField(
        p,
        lambda coords: coords[j] * envelope(coords),
        False,
        Smoothness.WHOLE_SPACE,
        Decay.GAUSSIAN,
        sigma,
    )


def _complex_solid_gaussian(p):
    sigma = _positive(p, "sigma", 1.0)
    axis_re, axis_im = _axis(p, "axis_re") + 1, _axis(p, "axis_im", 2) + 1
    real = _solid_gaussian(FamilyParams.of("SolidGaussian", p.n, axis=axis_re, sigma=sigma))
    imag = _solid_gaussian(FamilyParams.of("SolidGaussian", p.n, axis=axis_im, sigma=sigma))
    return ScalarField(
        p,
        real.evaluator,
        False,
        Smoothness.WHOLE_SPACE,
        Decay.GAUSSIAN,
        sigma,
        imag=replace(imag, params=p, part="im"),
    )


def _annulus_bump(p):
    r0, r1 = _positive(p, "r0"), _positive(p, "r1")
    _require(r0 < r1, f"{p.family}: 0 < r0 < r1 violated (got r0={r0}, r1={r1})")
    width = _positive(p, "width", (r1 - r0) / 2.0)
    _require(
        width <= (r1 - r0) / 2.0,
        f"{p.family}: width <= (r1 - r0)/2 violated (got {width})",
    )

    def evaluator(coords):
        r = jets.radius(coords)
        return _smooth_step((r - r0) / width) * _smooth_step((r1 - r) / width)

    return ScalarField(
        p, evaluator, True, Smoothness.WHOLE_SPACE, Decay.COMPACT, r1, support=(r0, r1)
    )


def _near_extremiser(p):
    delta = _positive(p, "delta")
    m = (p.n - 4) / 2.0

    def evaluator(coords):
        s = jets.log(jets.radius(coords))
        return jets.exp(s * (-m) - delta * s * s)

    return ScalarField(
        p,
        evaluator,
        True,
        Smoothness.PUNCTURED,
        Decay.LOG_GAUSSIAN,
        1.0,
        log_width=0.5 / math.sqrt(delta),
    )


def _shifted_bump(p):
    rho = _positive(p, "radius")
    center = np.array(_padded(p, "center"), dtype=float)
    distance = float(np.linalg.norm(center))
    _require(
        distance > rho,
        f"{p.family}: |center| > radius > 0 violated (|center|={distance}, radius={rho})",
    )

    def evaluator(coords):
        shifted = [c - float(x0) for c, x0 in zip(coords, center)]
        return jets.smooth_cutoff(1.0 - jets.radius_squared(shifted) / rho**2)

    return ScalarField(
        p,
        evaluator,
        False,
        Smoothness.WHOLE_SPACE,
        Decay.COMPACT,
        distance + rho,
        support=(distance - rho, distance + rho),
        centre=tuple(float(c) for c in center),
        centre_radius=rho,
    )


def _zero(p):
    return ScalarField(
        p,
        lambda coords: coords[0] * 0.0,
        True,
        Smoothness.WHOLE_SPACE,
        Decay.GAUSSIAN,
        1.0,
        vanishes=True,
    )


FAMILIES = {
    "GaussianRadial": _gaussian_radial,
    "PolyGaussian": _poly_gaussian,
    "SolidGaussian": _solid_gaussian,
    "ComplexSolidGaussian": _complex_solid_gaussian,
    "AnnulusBump": _annulus_bump,
    "NearExtremiser": _near_extremiser,
    "ShiftedBump": _shifted_bump,
    "Zero": _zero,
}


def make_field(p):
    """
    Build the test function described by ``p``.

    Args:
        p (FamilyParams): Family id, dimension and parameters

    Returns:
        ScalarField: The field with its metadata

    Raises:
        FieldParameterError: If a family constraint is violated
    """
    builder = FAMILIES.get(p.family)
    if builder is None:
        raise FieldParameterError(
            f"Unknown field family '{p.family}' (known: {', '.join(FAMILIES)})",
            field="fields",
        )
    _require(p.n >= 1, f"{p.family}: dimension n >= 1 violated")
    field = builder(p)
    logger.debug(f"Built field {field.key}")
    return field


_NUMBER = re.compile(r"^[+-]?\d+$")


def _parse_value(text):
    text = text.strip()
    if "/" in text:
        return tuple(_parse_value(t) for t in text.split("/") if t.strip())
    if _NUMBER.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def parse_field_spec(text, n):
    """
    Parse ``"Family:key=val,key=val"``; list values use ``/`` separators.

    Args:
        text (str): Field description as given on the command line
        n (int): Dimension

    Returns:
        FamilyParams: Parsed parameters
    """
    family, _, rest = text.partition(":")
    values = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, raw = item.partition("=")
        if not sep:
            raise FieldParameterError(
                f"Field parameter '{item}' in '{text}' is not of the form key=value",
                field="fields",
            )
        values[key.strip()] = _parse_value(raw)
    return FamilyParams.of(family.strip(), n, **values)


class _GaussianProfile:
    """Radial profile u(r) = sum_p c_p r^p exp(-a r^2) with integer powers p."""

    def __init__(self, a, coeffs):
        self.a = a
        self.coeffs = {p: c for p, c in coeffs.items() if c != 0.0}

    def derivative(self):
        out = {}
        for p, c in self.coeffs.items():
            out[p - 1] = out.get(p - 1, 0.0) + p * c
            out[p + 1] = out.get(p + 1, 0.0) - 2.0 * self.a * c
        return _GaussianProfile(self.a, out)

    def shift(self, power, scale=1.0):
        return _GaussianProfile(
            self.a, {p + power: scale * c for p, c in self.coeffs.items()}
        )

    def __add__(self, other):
        out = dict(self.coeffs)
        for p, c in other.coeffs.items():
            out[p] = out.get(p, 0.0) + c
        return _GaussianProfile(self.a, out)

    def bessel(self, n):
        return self.derivative().derivative() + self.derivative().shift(-1, n - 1.0)

    def norm2(self, n, angular):
        """|S^{n-1}| * angular * int_0^inf r^{n-1} u(r)^2 dr."""
        total = 0.0
        for p, cp in self.coeffs.items():
            for q, cq in self.coeffs.items():
                k = n - 1 + p + q
                if k <= -1:
                    raise ValueError(f"r^{k} is not integrable at the origin")
                total += cp * cq * gamma((k + 1) / 2.0) / (
                    2.0 * (2.0 * self.a) ** ((k + 1) / 2.0)
                )
        return sphere_area(n) * angular * total


def _gaussian_table(n, sigma, degree):
    """Closed-form norms of omega_j^degree * r^degree * exp(-r^2/(2 sigma^2))."""
    u = _GaussianProfile(0.5 / sigma**2, {degree: 1.0})
    c = n * (n - 4) / 4.0
    angular = 1.0 / n if degree else 1.0
    u1 = u.derivative()
    bessel = u.bessel(n)
    profiles = {
        "f_over_r": (u.shift(-1), angular),
        "f_over_r2": (u.shift(-2), angular),
        "radial_d1": (u1, angular),
        "hardy_remainder": (u1 + u.shift(-1, (n - 2) / 2.0), angular),
        "bessel": (bessel, angular),
        "laplacian": (bessel + u.shift(-2, -degree * (degree + n - 2.0)), angular),
        "rellich_r1": (bessel + u.shift(-2, c), angular),
        "rellich_r2": (u1.shift(-1) + u.shift(-2, (n - 4) / 2.0), angular),
    }
    if degree:
        v = u.shift(-1)
        complement = 1.0 - 1.0 / n
        profiles.update(
            {
                "spherical_over_r": (u.shift(-2), complement),
                "spherical_laplacian": (u.shift(-2, -(n - 1.0)), angular),
                "spherical_hardy": (v.derivative() + v.shift(-1, (n - 2) / 2.0), complement),
            }
        )
    table = {}
    for name, (profile, weight) in profiles.items():
        try:
            table[name] = profile.norm2(n, weight)
        except ValueError:
            logger.debug(f"Closed form '{name}' diverges for n={n}; omitted")
    if not degree:
        table.update(spherical_over_r=0.0, spherical_laplacian=0.0, spherical_hardy=0.0)
    return table


def _near_extremiser_table(n, delta):
    c = n * (n - 4) / 4.0
    mu = sphere_area(n) * math.sqrt(math.pi / (2.0 * delta))
    bessel = mu * (c * c + 2.0 * delta * c + 4.0 * delta + 3.0 * delta**2)
    return {
        "f_over_r2": mu,
        "bessel": bessel,
        "laplacian": bessel,
        "rellich_r1": mu * (3.0 * delta**2 + 4.0 * delta),
        "rellich_r2": mu * delta,
        "spherical_over_r": 0.0,
        "spherical_laplacian": 0.0,
        "spherical_hardy": 0.0,
    }


def closed_form_norms(p):
    """
    Exact squared L^2 norms of operator-applied fields from Gamma integrals.

    Keys name the operator: ``f_over_r2`` is ||f/|x|^2||^2, ``bessel`` is
    ||Af||^2, ``rellich_r1``/``rellich_r2`` the Rellich remainders,
    ``spherical_*`` the angular terms of the Laplacian decomposition.

    Args:
        p (FamilyParams): Field description

    Returns:
        dict: Name to exact value; empty for families without closed forms
    """
    make_field(p)
    if p.family == "GaussianRadial":
        return _gaussian_table(p.n, float(p.get("sigma", 1.0)), 0)
    if p.family == "SolidGaussian":
        return _gaussian_table(p.n, float(p.get("sigma", 1.0)), 1)
    if p.family == "ComplexSolidGaussian":
        single = _gaussian_table(p.n, float(p.get("sigma", 1.0)), 1)
        return {k: 2.0 * v for k, v in single.items()}
    if p.family == "NearExtremiser":
        return _near_extremiser_table(p.n, float(p.get("delta")))
    if p.family == "Zero":
        return dict.fromkeys(_gaussian_table(max(p.n, 5), 1.0, 0), 0.0)
    return {}
