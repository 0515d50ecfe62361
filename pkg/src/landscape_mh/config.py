"""INI experiment configs.

Sections and keys are fixed by :data:`SCHEMA`; anything else is an error.
Lists are comma separated.  Example::

    [model]
    kind = reference
    name = double-well

    [landscape]
    f = quadratic
    alpha = 1.0
    delta = 0.5

    [run]
    seed = 7
    horizon = 1000
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .core import LandscapeParams, PenaltyFunction
from .models import IsingModel, PottsModel, load_tabular, reference_chain
from .sim import Schedule

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMA", "load_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _strs(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA = {
    "model": {"kind": str, "size": int, "q": int, "j": float, "h": float, "path": str, "name": str},
    "landscape": {
        "f": str, "alpha": float, "c": float, "delta": float, "reference": str, "printed_form": _bool,
        "schedule": str, "scale": float, "rate": float, "p": float,
    },
    "run": {
        "seed": int, "horizon": float, "x0": int, "replicas": int, "starts": _ints, "times": _floats,
        "eta": float, "eps": float, "g": _floats, "a": float, "variance_times": _floats,
    },
    "analysis": {"which": _strs, "times": _floats, "x0": int, "beta_grid": _floats, "c_const": float},
    "bench": {"suite": str, "sizes": _ints, "delta": float, "alpha": float, "q": int, "times": _floats},
    "oracle": {"samples": int, "tol": float},
    "output": {"dir": str, "format": str},
}

MODEL_KINDS = ("ising-hypercube", "ising-complete", "potts", "tabular", "reference")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    source: str | None = None

    def get(self, section, key, default=None):
        return self.values.get(section, {}).get(key, default)

    def require(self, section, key):
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"missing [{section}] {key}")
        return value

    def set(self, section, key, value):
        if key not in SCHEMA.get(section, {}):
            raise ConfigError(f"unknown key [{section}] {key}")
        self.values.setdefault(section, {})[key] = value

    def resolved(self):
        """Plain nested dict of every value in effect, for run records."""
        return {s: dict(sorted(kv.items())) for s, kv in sorted(self.values.items())}

    # -- builders ----------------------------------------------------------

    def model(self):
        kind = self.require("model", "kind")
        if kind not in MODEL_KINDS:
            raise ConfigError(f"[model] kind must be one of {', '.join(MODEL_KINDS)}")
        J = self.get("model", "j", 1.0)
        if kind == "ising-hypercube":
            return IsingModel.hypercube(self.require("model", "size"), J, self.get("model", "h", 1.0))
        if kind == "ising-complete":
            return IsingModel.complete(self.require("model", "size"), J, self.get("model", "h", 1.0))
        if kind == "potts":
            return PottsModel(self.require("model", "size"), self.get("model", "q", 2), J)
        if kind == "tabular":
            return load_tabular(self.require("model", "path"))
        return reference_chain(self.require("model", "name"))

    def penalty(self):
        f = PenaltyFunction.from_name(self.get("landscape", "f", "quadratic"))
        if self.get("landscape", "printed_form", False):
            if f.kind != "exp_minus_one":
                raise ConfigError("printed_form applies to the exp_minus_one penalty only")
            f = PenaltyFunction.exp_minus_one(printed_form=True)
        return f

    def params(self, model):
        c = self.get("landscape", "c")
        delta = self.get("landscape", "delta")
        if (c is None) == (delta is None):
            raise ConfigError("[landscape] needs exactly one of c (absolute) and delta (ground + delta)")
        params = LandscapeParams(
            alpha=self.get("landscape", "alpha", 1.0),
            c=c,
            f=self.penalty(),
            delta=delta,
            reference=self.get("landscape", "reference", "ground"),
        )
        return params.resolve(model)

    def schedule(self):
        kind = self.get("landscape", "schedule", "constant")
        if kind == "constant":
            return Schedule.constant(self.get("landscape", "alpha", 1.0))
        if kind == "exponential":
            return Schedule.exponential(self.get("landscape", "scale", 1.0), self.get("landscape", "rate", 1.0))
        if kind == "logarithmic":
            return Schedule.logarithmic(self.require("landscape", "p"))
        raise ConfigError(f"unknown schedule {kind!r}")


def load_config(path=None, text=None):
    """Parse an INI file (or string) against :data:`SCHEMA`."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from None
    cfg = ExperimentConfig(source=None if path is None else str(path))
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            conv = SCHEMA[section].get(key)
            if conv is None:
                raise ConfigError(f"unknown key [{section}] {key}")
            try:
                cfg.values.setdefault(section, {})[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    return cfg
