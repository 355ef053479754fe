"""Experiment configuration: TOML documents validated into model objects.

Schema (all times in the model's time unit)::

    seed = 42                      # unsigned integer
    threads = 1

    [model]
    lifetimes = [1.0]              # mean lifetime per type
    offspring = [[[[0], 0.5], [[2], 0.5]]]   # per type: [[vector, prob], ...]
    immigrant = [[[1], 1.0]]

    [immigration]
    family = "poisson"             # poisson | inhomogeneous_poisson | cox | fpp | dpp
    rate = 1.0                     # poisson, fpp
    # inhomogeneous_poisson: rate_inf, delta, envelope (optional)
    # cox: directing = "gamma" (shape, rate) | "shot_noise" (arrival_rate, decay,
    #      amplitude) | "deterministic" (rate)
    # fpp: order, rate
    # dpp: kernel = "identity" | "ginibre" (scale) | "spectral_cosine"
    #      (eigenvalues, window); reference density rate_inf, delta

    [experiment]
    kind = "simulate"              # see EXPERIMENT_KEYS

    [output]
    dir = "out"
    format = "csv"                 # simulate only: csv | binary | both
"""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import kernels as kern
from . import point_processes as pp
from .errors import ConfigError, SpecError
from .model import BranchingSpec

TOP_KEYS = {"seed", "threads", "model", "immigration", "experiment", "output"}
MODEL_KEYS = {"lifetimes", "offspring", "immigrant"}
OUTPUT_KEYS = {"dir", "format"}

IMMIGRATION_KEYS = {
    "poisson": {"rate"},
    "inhomogeneous_poisson": {"rate_inf", "delta", "envelope"},
    "cox": {"directing", "shape", "rate", "arrival_rate", "decay", "amplitude"},
    "fpp": {"order", "rate"},
    "dpp": {"kernel", "scale", "eigenvalues", "window", "rate_inf", "delta"},
}

EXPERIMENT_KEYS = {
    "simulate": {"horizon": 10.0, "snapshots": None, "n_rep": 1000,
                 "founding_immigrant": False},
    "moments": {"t_grid": [1.0]},
    "transform": {"t_grid": [1.0], "s_grid": [[0.5]], "mode": "pgf", "n_rep": 2000},
    "rescaled_limit": {"t_grid": [9.0, 12.0], "s_grid": [1.0], "n_rep": 4000,
                       "horizon": 40.0, "dump_samples": False},
    "l2_rates": {"regime": "delta_dominant", "t_grid": [5.0, 10.0, 15.0, 20.0, 25.0],
                 "n_rep": 2000, "final_tol": 0.05, "dump_samples": False},
    "gamma_limit": {"t": 300.0, "n_rep": 2000, "dump_samples": False},
    "subcritical_limit": {"t_pair": [40.0, 80.0], "s_grid": [0.25, 0.5, 1.0, 2.0],
                          "n_rep": 5000, "dump_samples": False},
    "conv_asymptote": {"case": "exp_decay", "t_grid": [10.0, 20.0, 40.0]},
}

CONV_CASES = {
    # alpha(t), beta(t), growth rate of alpha
    "exp_decay": ("exp(0.3 t)", "exp(-0.2 t)", 0.3),
    "linear_exp": ("exp(0.3 t)", "t exp(-0.1 t)", 0.3),
    "constants": ("1", "1", None),
}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    raw: dict
    seed: int
    threads: int
    spec: BranchingSpec
    immigration: object
    kind: str
    params: dict
    out_dir: str
    out_format: str

    def config_hash(self):
        """SHA-256 of the canonical config document (thread count excluded)."""
        doc = {k: v for k, v in self.raw.items() if k != "threads"}
        doc.setdefault("output", {})
        doc = copy.deepcopy(doc)
        doc["output"].pop("dir", None)
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def load_document(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None


def parse_value(text):
    """Interpret an override value as TOML, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(doc, assignment):
    if "=" not in assignment:
        raise ConfigError("--override", f"expected KEY=VALUE, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(key, "cannot descend into a non-table value")
    node[parts[-1]] = parse_value(value.strip())
    return doc


def _reject_unknown(table, allowed, path):
    for k in table:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown field")


def _require(table, key, path, kind=None):
    if key not in table:
        raise ConfigError(f"{path}.{key}", "missing required field")
    value = table[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}", f"expected {kind.__name__}")
    return value


def _number(table, key, path, default=None):
    if key not in table:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", "expected a number")
    return float(v)


def _pairs(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a nonempty list of [vector, probability] pairs")
    out = []
    for n, item in enumerate(value):
        if not (isinstance(item, list) and len(item) == 2):
            raise ConfigError(f"{path}[{n}]", "expected [vector, probability]")
        out.append((item[0], item[1]))
    return out


def build_model(table, path="model"):
    if not isinstance(table, dict):
        raise ConfigError(path, "expected a table")
    _reject_unknown(table, MODEL_KEYS, path)
    lifetimes = _require(table, "lifetimes", path, list)
    offspring = _require(table, "offspring", path, list)
    immigrant = _require(table, "immigrant", path, list)
    try:
        return BranchingSpec.from_pairs(
            lifetimes,
            [_pairs(o, f"{path}.offspring[{i}]") for i, o in enumerate(offspring)],
            _pairs(immigrant, f"{path}.immigrant"),
        )
    except (SpecError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from exc


def _density(table, path):
    rate_inf = _number(table, "rate_inf", path, 1.0)
    delta = _number(table, "delta", path, 0.0)
    if delta == 0:
        return kern.ConstantDensity(rate_inf)
    return kern.ExponentialDensity(rate_inf, delta)


def build_kernel(table, path="immigration"):
    name = table.get("kernel", "identity")
    density = _density(table, path)
    if name == "identity":
        return kern.PoissonIdentity(density)
    if name == "ginibre":
        return kern.GinibreGaussian(_number(table, "scale", path, 1.0), density)
    if name == "spectral_cosine":
        eig = _require(table, "eigenvalues", path, list)
        window = _number(table, "window", path)
        if not isinstance(density, kern.ConstantDensity):
            raise ConfigError(f"{path}.delta", "spectral kernels need a constant density")
        return kern.spectral_cosine(tuple(float(e) for e in eig), window, density.rate)
    raise ConfigError(f"{path}.kernel", f"unknown kernel {name!r}")


def build_immigration(table, path="immigration"):
    if not isinstance(table, dict):
        raise ConfigError(path, "expected a table")
    family = _require(table, "family", path, str)
    if family not in IMMIGRATION_KEYS:
        raise ConfigError(f"{path}.family", f"unknown family {family!r}")
    _reject_unknown(table, IMMIGRATION_KEYS[family] | {"family"}, path)
    try:
        if family == "poisson":
            return pp.HomogeneousPoisson(_number(table, "rate", path))
        if family == "inhomogeneous_poisson":
            dens = _density(table, path)
            env = table.get("envelope")
            return pp.InhomogeneousPoisson(dens, None if env is None else float(env))
        if family == "cox":
            kind = _require(table, "directing", path, str)
            if kind == "gamma":
                d = pp.GammaMixedRate(_number(table, "shape", path), _number(table, "rate", path))
            elif kind == "shot_noise":
                d = pp.ShotNoise(_number(table, "arrival_rate", path),
                                 _number(table, "decay", path),
                                 _number(table, "amplitude", path, 1.0))
            elif kind == "deterministic":
                d = pp.DeterministicRate(_number(table, "rate", path))
            else:
                raise ConfigError(f"{path}.directing", f"unknown directing measure {kind!r}")
            return pp.Cox(d)
        if family == "fpp":
            return pp.FPP(_number(table, "order", path), _number(table, "rate", path))
        return pp.DPP(build_kernel(table, path))
    except SpecError as exc:
        # kernel admissibility errors keep their own type for the caller
        if type(exc) is SpecError:
            raise ConfigError(path, str(exc)) from exc
        raise


def _experiment(table, path="experiment"):
    if not isinstance(table, dict):
        raise ConfigError(path, "expected a table")
    kind = _require(table, "kind", path, str)
    if kind not in EXPERIMENT_KEYS:
        raise ConfigError(f"{path}.kind", f"unknown experiment kind {kind!r}")
    defaults = EXPERIMENT_KEYS[kind]
    _reject_unknown(table, set(defaults) | {"kind"}, path)
    params = copy.deepcopy(defaults)
    params.update({k: v for k, v in table.items() if k != "kind"})
    if "n_rep" in params and (not isinstance(params["n_rep"], int) or params["n_rep"] < 1):
        raise ConfigError(f"{path}.n_rep", "expected a positive integer")
    for key in ("t_grid", "s_grid", "t_pair"):
        if key in params and not (isinstance(params[key], list) and params[key]):
            raise ConfigError(f"{path}.{key}", "expected a nonempty list")
    if kind == "l2_rates" and params["regime"] not in ("delta_dominant",
                                                       "delta_equals_rho_super"):
        raise ConfigError(f"{path}.regime", f"unknown regime {params['regime']!r}")
    if kind == "transform" and params["mode"] not in ("pgf", "laplace"):
        raise ConfigError(f"{path}.mode", "expected 'pgf' or 'laplace'")
    if kind == "conv_asymptote" and params["case"] not in CONV_CASES:
        raise ConfigError(f"{path}.case", f"unknown case {params['case']!r}")
    return kind, params


def validate(doc, out_dir=None):
    """Validate a raw document into an ``ExperimentConfig`` before any computation."""
    if not isinstance(doc, dict):
        raise ConfigError("", "expected a table at the top level")
    _reject_unknown(doc, TOP_KEYS, "")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "expected an unsigned 64-bit integer")
    threads = doc.get("threads", 1)
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise ConfigError("threads", "expected a positive integer")
    kind, params = _experiment(doc.get("experiment", {"kind": "simulate"}))
    needs_model = kind != "conv_asymptote"
    spec = build_model(_require(doc, "model", "", dict), "model") if needs_model else None
    imm = None
    if needs_model:
        imm = build_immigration(_require(doc, "immigration", "", dict))
    output = doc.get("output", {})
    _reject_unknown(output, OUTPUT_KEYS, "output")
    fmt = output.get("format", "csv")
    if fmt not in ("csv", "binary", "both"):
        raise ConfigError("output.format", "expected csv, binary or both")
    return ExperimentConfig(
        raw=doc, seed=seed, threads=threads, spec=spec, immigration=imm, kind=kind,
        params=params, out_dir=out_dir or output.get("dir", "out"), out_format=fmt,
    )
