"""Campaign configuration: YAML documents validated against a bundled schema.

A configuration names a model, optionally the input law, the PDD method,
the coefficient engine and the run settings.  Missing sections are filled
from :data:`DEFAULTS`; the normalized document round-trips through YAML.
"""

from __future__ import annotations

import copy
import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .adaptive import AdaptiveConfig
from .models import Example1, ExternalModel, SpringMassSystem
from .qmc import SamplingEngine
from .quadrature import FsiEngine, FullGridEngine
from .random_input import RandomInput, marginal_from_dict

__all__ = [
    "ConfigError",
    "DEFAULTS",
    "load_config",
    "parse_config",
    "apply_overrides",
    "normalize",
    "dump_config",
    "build_model",
    "build_engine",
    "adaptive_config",
    "Campaign",
]

DEFAULTS = {
    "input": {"uniform_convention": "unit"},
    "method": {
        "kind": "adaptive-full",
        "eps1": 1e-6,
        "eps2": 1e-6,
        "eps3": 0.7,
        "ranking": "full",
        "ranking_criterion": "unchanged",
        "max_order": 16,
    },
    "engine": {"kind": "fullgrid", "R": None, "n_points": 5, "level": 3, "L": 16384, "skip": 0, "scramble": False,
               "reference": None},
    "budget": None,
    "seed": 0,
    "threads": 1,
    "output": "out",
    "mcs": {"L": 1000000, "source": "surrogate", "surrogate": None, "cdf_rows": 2000, "paired": True},
    "sweep": {"tolerances": [1e-3, 1e-4, 1e-5, 1e-6, 1e-7], "reference_variance": None, "output": 0,
              "truncated_S": [], "truncated_m": [], "targets": []},
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@lru_cache(maxsize=1)
def _schema() -> dict:
    return json.loads(resources.files("pdduq").joinpath("data/config.schema.json").read_text())


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _validate_schema(doc):
    validator = jsonschema.Draft7Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        path = ".".join(str(p) for p in err.absolute_path)
        raise ConfigError(err.message, path or "<root>")


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings; values are parsed as YAML scalars."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value", "--set")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError("cannot descend into a non-mapping field", ".".join(parts))
        node[parts[-1]] = _scalar(raw)
    return doc


def _scalar(raw: str):
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        # YAML 1.1 reads exponent floats without a dot ("1e-6") as strings
        try:
            return float(value)
        except ValueError:
            pass
    return value


def _semantic_checks(doc):
    model, method, engine = doc["model"], doc["method"], doc["engine"]
    ri = _random_input(doc)
    N = ri.dim
    if "external" in model and model["external"]["dim"] != N:
        raise ConfigError(f"external model has {model['external']['dim']} inputs but the input law has {N}",
                          "model.external.dim")
    params = model.get("params", {})
    if model.get("builtin") == "spring_mass":
        if N != 9:
            raise ConfigError("the spring-mass model has 9 inputs", "input")
        if "dim" in params:
            raise ConfigError("spring_mass has a fixed dimension", "model.params.dim")
    if model.get("builtin") == "example1":
        if N != params.get("dim", 5):
            raise ConfigError(f"example1 has {params.get('dim', 5)} inputs but the input law has {N}", "input")
        if "cov" in params or "scales" in params:
            raise ConfigError("example1 accepts only the 'dim' parameter", "model.params")
    for i, m in enumerate(doc.get("input", {}).get("marginals", [])):
        if m["kind"] == "uniform" and not m.get("a", 0.0) < m.get("b", 1.0):
            raise ConfigError("uniform bounds need a < b", f"input.marginals.{i}")
    kind = method["kind"]
    if kind in ("adaptive-partial", "truncated") and "S" not in method:
        raise ConfigError(f"method {kind!r} requires S", "method.S")
    if kind == "truncated" and "m" not in method:
        raise ConfigError("method 'truncated' requires m", "method.m")
    if "S" in method and method["S"] > N:
        raise ConfigError(f"S={method['S']} exceeds the number of variables {N}", "method.S")
    if engine["R"] is not None and engine["R"] > N:
        raise ConfigError(f"R={engine['R']} exceeds the number of variables {N}", "engine.R")
    if engine["reference"] is not None and len(engine["reference"]) != N:
        raise ConfigError(f"reference point needs {N} coordinates", "engine.reference")
    if engine["kind"] == "sparse-fsi":
        bad = [i + 1 for i, m in enumerate(ri.marginals) if m.standard != "normal"]
        if bad:
            raise ConfigError(
                f"sparse-fsi needs Gaussian-standardizable marginals; variables {bad} are not", "engine.kind"
            )
    if kind == "truncated":
        m = method["m"]
        if engine["kind"] == "fullgrid" and m > engine["n_points"]:
            raise ConfigError(f"order m={m} exceeds the {engine['n_points']}-point Gauss rule", "method.m")
        if engine["kind"] == "sparse-fsi" and m > 2 * engine["level"] + 1:
            raise ConfigError(f"order m={m} exceeds the exactness of FSI level {engine['level']}", "method.m")
        if m > method["max_order"]:
            raise ConfigError(f"order m={m} exceeds max_order", "method.m")
    if engine["kind"] == "fullgrid" and engine["n_points"] > method["max_order"] + 1:
        raise ConfigError("n_points may not exceed max_order + 1", "engine.n_points")


def normalize(doc: dict) -> dict:
    """Schema-validate, fill defaults and run cross-field checks."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping", "<root>")
    _validate_schema(doc)
    full = _merge(DEFAULTS, doc)
    _validate_schema(full)
    try:
        _semantic_checks(full)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), "input") from exc
    return full


def parse_config(text: str, overrides=None) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return normalize(apply_overrides(doc or {}, overrides))


def load_config(path, overrides=None) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {str(p)!r} not found", "--config")
    return parse_config(p.read_text(), overrides)


def dump_config(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=True)


def _random_input(doc) -> RandomInput:
    model, inp = doc["model"], doc.get("input", {})
    conv = inp.get("uniform_convention", "unit")
    if "marginals" in inp:
        return RandomInput.from_list(inp["marginals"], conv)
    if "iid" in inp:
        return RandomInput.iid(marginal_from_dict(inp["iid"]["marginal"], conv), inp["iid"]["dim"])
    if model.get("builtin") == "example1":
        return Example1(model.get("params", {}).get("dim", 5)).random_input(conv)
    if model.get("builtin") == "spring_mass":
        p = model.get("params", {})
        return SpringMassSystem(p.get("scales"), p.get("cov", 0.3)).random_input()
    raise ConfigError("external models need an explicit input law", "input")


def build_model(doc: dict):
    """``(model, random_input, exact_variance or None)`` for a normalized config."""
    model = doc["model"]
    ri = _random_input(doc)
    p = model.get("params", {})
    if model.get("builtin") == "example1":
        if "cov" in p or "scales" in p:
            raise ConfigError("example1 accepts only the 'dim' parameter", "model.params")
        ex = Example1(p.get("dim", 5))
        custom_law = "marginals" in doc.get("input", {}) or "iid" in doc.get("input", {})
        exact = None if custom_law else ex.exact_variance()
        return ex, ri, exact
    if model.get("builtin") == "spring_mass":
        if "dim" in p:
            raise ConfigError("spring_mass has a fixed dimension", "model.params.dim")
        return SpringMassSystem(p.get("scales"), p.get("cov", 0.3)), ri, None
    ext = model["external"]
    em = ExternalModel(ext["command"], ext["dim"], ext["n_outputs"], timeout=ext.get("timeout", 30.0),
                       workers=ext.get("workers", 1))
    return em, ri, None


def build_engine(doc: dict, model, random_input, evaluator=None):
    eng, method = doc["engine"], doc["method"]
    kw = dict(max_order=method["max_order"], budget=doc["budget"], threads=doc["threads"], evaluator=evaluator)
    if eng["kind"] == "fullgrid":
        return FullGridEngine(model, random_input, R=eng["R"], n_points=eng["n_points"], reference=eng["reference"], **kw)
    if eng["kind"] == "sparse-fsi":
        return FsiEngine(model, random_input, R=eng["R"], level=eng["level"], reference=eng["reference"], **kw)
    return SamplingEngine(model, random_input, eng["L"], sampler="sobol", skip=eng["skip"], scramble=eng["scramble"],
                          seed=doc["seed"], **kw)


def adaptive_config(doc: dict) -> AdaptiveConfig:
    m = doc["method"]
    S = None if m["kind"] == "adaptive-full" else m.get("S")
    return AdaptiveConfig(S=S, eps1=m["eps1"], eps2=m["eps2"], eps3=m["eps3"], ranking=m["ranking"],
                          ranking_criterion=m["ranking_criterion"], max_order=m["max_order"])


class Campaign:
    """A normalized configuration together with its model, input and engine."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.model, self.input, self.exact_variance = build_model(doc)
        self._engine = None

    @property
    def engine(self):
        if self._engine is None:
            self._engine = build_engine(self.doc, self.model, self.input)
        return self._engine

    def close(self):
        close = getattr(self.model, "close", None)
        if close is not None:
            close()
