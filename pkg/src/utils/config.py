"""
Configuration utilities for the Rellich verification lab
"""

import copy
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Tuple

import yaml

from src.rellich.fields import FamilyParams, make_field, parse_field_spec
from src.rellich.identities import Tolerances
from src.rellich.operators import HARDY_MIN_DIMENSION, MAX_DIMENSION, RELLICH_MIN_DIMENSION
from src.rellich.quadrature import (
    MAX_SPHERE_DEGREE,
    SPHERE_DIMENSIONS,
    QuadratureSettings,
    RadialMap,
    Summation,
)
from src.utils.errors import ConfigError, DimensionError

# Initialize logger
logger = logging.getLogger("rellich-lab")

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "config" / "default_config.yml"

SUITES = (
    "hardy",
    "rellich",
    "theorem2",
    "corollary",
    "inequality",
    "proof-chain",
    "lemma",
    "pointwise",
    "scan",
)
FIELD_SUITES = ("hardy", "rellich", "theorem2", "corollary", "inequality", "proof-chain", "pointwise")
FORMATS = ("text", "json-lines", "csv")


@dataclass(frozen=True)
class PointwiseSettings:
    points: int = 1000
    r_min: float = 0.2
    r_max: float = 4.0
    lambdas: Tuple = (-3.7, -1.0, 0.5, 2.0)


@dataclass(frozen=True)
class LemmaSettings:
    triples: int = 1000
    max_dim: int = 8
    c_max: float = 10.0


@dataclass(frozen=True)
class ScanSettings:
    deltas: Tuple = (0.5, 0.25, 0.1, 0.05)
    resolution: float = 1e-8


@dataclass(frozen=True)
class RunConfig:
    """
    Validated run configuration.

    ``fields`` keeps one (family, parameters) pair per configured field;
    ``field_params(n)`` instantiates them for a dimension.
    """

    dimensions: Tuple
    fields: Tuple
    suites: Tuple
    quadrature: QuadratureSettings
    seed: Optional[int]
    pointwise: PointwiseSettings
    lemma: LemmaSettings
    scan: ScanSettings
    tolerances: Tolerances
    output_format: str = "text"
    output_path: Optional[str] = None

    def field_params(self, n):
        return [FamilyParams(family, n, values) for family, values in self.fields]

    def as_dict(self):
        """Config echo for the run manifest."""
        return {
            "dimensions": list(self.dimensions),
            "fields": [FamilyParams(family, 0, values).label for family, values in self.fields],
            "suites": list(self.suites),
            "quadrature": asdict(self.quadrature),
            "seed": self.seed,
            "pointwise": asdict(self.pointwise),
            "lemma": asdict(self.lemma),
            "scan": asdict(self.scan),
            "tolerance": asdict(self.tolerances),
            "output": {"format": self.output_format, "path": self.output_path},
        }


def _merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _read_yaml(path):
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read configuration file {path}: {e}", field="config") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {path}: {e}", field="config") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration in {path} must be a mapping", field="config")
    return data


def load_config(config_file=None, overrides=None):
    """
    Load the YAML configuration merged over the defaults.

    Args:
        config_file (str, optional): Path to the YAML config file
        overrides (dict, optional): Values that win over the file, e.g. from flags

    Returns:
        RunConfig: The validated configuration

    Raises:
        ConfigError: If the configuration cannot be read or is invalid
    """
    config = _read_yaml(DEFAULT_CONFIG)
    if config_file:
        config = _merge(config, _read_yaml(config_file))
        logger.info(f"Successfully loaded configuration from {config_file}")
    config = _merge(config, overrides)
    return validate_config(config)


def _as_list(config, key):
    value = config.get(key)
    if value is None:
        return []
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"'{key}' must be a list", field=key)
    return list(value)


def _integer(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{key}' must be an integer (got {value!r})", field=key)
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{key}' must be >= {minimum} (got {value})", field=key)
    return value


def _number(value, key, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number (got {value!r})", field=key)
    if positive and not value > 0:
        raise ConfigError(f"'{key}' must be > 0 (got {value})", field=key)
    return float(value)


def _section(config, key):
    value = config.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be a mapping", field=key)
    return value


def _choice(value, key, allowed):
    if value not in allowed:
        raise ConfigError(
            f"'{key}' must be one of {', '.join(map(str, allowed))} (got {value!r})", field=key
        )
    return value


def _field_entry(entry, i):
    if isinstance(entry, str):
        p = parse_field_spec(entry, RELLICH_MIN_DIMENSION)
        return p.family, p.values
    if isinstance(entry, dict):
        if "family" not in entry:
            raise ConfigError(f"Field at index {i} is missing required 'family' field", field="fields")
        values = {k: v for k, v in entry.items() if k != "family"}
        p = FamilyParams.of(entry["family"], RELLICH_MIN_DIMENSION, **values)
        return p.family, p.values
    raise ConfigError(f"Field at index {i} must be a string or a mapping", field="fields")


def _validate_dimensions(dimensions, suites):
    minimum = HARDY_MIN_DIMENSION if set(suites) <= {"hardy", "lemma"} else RELLICH_MIN_DIMENSION
    for i, n in enumerate(dimensions):
        _integer(n, f"dimensions[{i}]")
        if n < minimum:
            raise DimensionError(f"n ≥ {minimum} required (got n={n})", field="dimensions")
        if n > MAX_DIMENSION:
            raise DimensionError(f"n ≤ {MAX_DIMENSION} supported (got n={n})", field="dimensions")


def _quadrature_settings(section):
    known = {
        "radial_map", "radial_n", "sphere", "sphere_degree", "mc_samples",
        "log_extent", "gaussian_extent", "chunk_size", "workers", "summation",
    }
    unknown = set(section) - known
    if unknown:
        raise ConfigError(
            f"Unknown quadrature setting(s): {', '.join(sorted(unknown))}", field="quadrature"
        )
    _choice(section.get("radial_map", "auto"), "quadrature.radial_map",
            ("auto",) + tuple(m.value for m in RadialMap))
    _choice(section.get("sphere", "auto"), "quadrature.sphere", ("auto", "product", "mc"))
    _choice(section.get("summation", "pairwise"), "quadrature.summation",
            tuple(s.value for s in Summation))
    if section.get("radial_n") is not None:
        _integer(section["radial_n"], "quadrature.radial_n", 2)
    degree = _integer(section.get("sphere_degree", 8), "quadrature.sphere_degree", 0)
    if degree % 2 or degree > MAX_SPHERE_DEGREE:
        raise ConfigError(
            f"'quadrature.sphere_degree' must be even and <= {MAX_SPHERE_DEGREE} (got {degree})",
            field="quadrature.sphere_degree",
        )
    _integer(section.get("mc_samples", 1_000_000), "quadrature.mc_samples", 1)
    _integer(section.get("chunk_size", 16384), "quadrature.chunk_size", 1)
    _integer(section.get("workers", 1), "quadrature.workers", 1)
    for key in ("log_extent", "gaussian_extent"):
        if key in section:
            _number(section[key], f"quadrature.{key}", positive=True)
    return QuadratureSettings(**section)


def validate_config(config):
    """
    Validate the configuration structure.

    Args:
        config (dict): The merged configuration

    Returns:
        RunConfig: The validated configuration

    Raises:
        ConfigError: If the configuration is invalid; ``field`` names the key
    """
    suites = _as_list(config, "suites")
    if not suites:
        raise ConfigError("Configuration does not select any suite", field="suites")
    for i, suite in enumerate(suites):
        _choice(suite, f"suites[{i}]", SUITES)
    suites = tuple(dict.fromkeys(suites))

    dimensions = _as_list(config, "dimensions")
    if not dimensions and set(suites) != {"lemma"}:
        raise ConfigError("'dimensions' must list at least one n", field="dimensions")
    _validate_dimensions(dimensions, suites)

    fields = tuple(_field_entry(entry, i) for i, entry in enumerate(_as_list(config, "fields")))
    if not fields and set(suites) & set(FIELD_SUITES):
        raise ConfigError("'fields' must list at least one field", field="fields")
    for family, values in fields:
        for n in dimensions:
            make_field(FamilyParams(family, n, values))

    seed = config.get("seed")
    if seed is not None:
        _integer(seed, "seed", 0)

    quadrature = _section(config, "quadrature")
    settings = _quadrature_settings(quadrature)
    uses_mc = settings.sphere == "mc" or (
        settings.sphere == "auto" and any(n > SPHERE_DIMENSIONS[1] for n in dimensions)
    )
    if settings.sphere == "product" and any(n > SPHERE_DIMENSIONS[1] for n in dimensions):
        raise ConfigError(
            f"sphere product rules support n <= {SPHERE_DIMENSIONS[1]}; use 'mc'",
            field="quadrature.sphere",
        )
    needs_seed = {"lemma", "pointwise"} & set(suites)
    if seed is None and (needs_seed or uses_mc):
        reason = ", ".join(sorted(needs_seed)) or "Monte Carlo quadrature"
        raise ConfigError(f"'seed' is mandatory for {reason}", field="seed")
    settings = QuadratureSettings(**{**asdict(settings), "seed": seed})

    section = _section(config, "pointwise")
    pointwise = PointwiseSettings(
        points=_integer(section.get("points", 1000), "pointwise.points", 1),
        r_min=_number(section.get("r_min", 0.2), "pointwise.r_min", positive=True),
        r_max=_number(section.get("r_max", 4.0), "pointwise.r_max", positive=True),
        lambdas=tuple(
            _number(x, "pointwise.lambdas") for x in section.get("lambdas", PointwiseSettings.lambdas)
        ),
    )
    if pointwise.r_min >= pointwise.r_max:
        raise ConfigError("'pointwise.r_min' must be below 'pointwise.r_max'", field="pointwise.r_min")

    section = _section(config, "lemma")
    lemma = LemmaSettings(
        triples=_integer(section.get("triples", 1000), "lemma.triples", 1),
        max_dim=_integer(section.get("max_dim", 8), "lemma.max_dim", 1),
        c_max=_number(section.get("c_max", 10.0), "lemma.c_max", positive=True),
    )

    section = _section(config, "scan")
    deltas = tuple(_number(d, "scan.deltas", positive=True) for d in section.get("deltas", ()))
    if "scan" in suites:
        if not deltas:
            raise ConfigError("'scan.deltas' must list at least one δ", field="scan.deltas")
        if any(b >= a for a, b in zip(deltas, deltas[1:])):
            raise ConfigError("'scan.deltas' must be strictly decreasing", field="scan.deltas")
    scan = ScanSettings(
        deltas=deltas,
        resolution=_number(section.get("resolution", 1e-8), "scan.resolution", positive=True),
    )

    section = _section(config, "tolerance")
    known = set(Tolerances.__dataclass_fields__) - {"resolution"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(
            f"Unknown tolerance setting(s): {', '.join(sorted(unknown))}", field="tolerance"
        )
    tolerances = Tolerances(
        resolution=scan.resolution,
        **{key: _number(value, f"tolerance.{key}", positive=True) for key, value in section.items()},
    )

    section = _section(config, "output")
    output_format = _choice(section.get("format", "text"), "output.format", FORMATS)

    run_config = RunConfig(
        dimensions=tuple(dimensions),
        fields=fields,
        suites=suites,
        quadrature=settings,
        seed=seed,
        pointwise=pointwise,
        lemma=lemma,
        scan=scan,
        tolerances=tolerances,
        output_format=output_format,
        output_path=section.get("path"),
    )
    logger.debug(f"Validated configuration: {run_config.as_dict()}")
    return run_config
