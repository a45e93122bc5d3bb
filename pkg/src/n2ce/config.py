"""Experiment configuration: strict parsing, defaults, and serialization.

Configs are YAML documents with one section per experiment family. Every
field has a default, unknown keys are hard errors listing their location,
and serialization writes floats with 17 significant digits so that
parse -> serialize -> parse is the identity and reruns from a resolved
sidecar are byte-identical.
"""
import copy
import json

import yaml

from .objectives import MLE_EXACT, N2CE, NCE, NEG_REWEIGHT, NWJ, ObjectiveKind

# estimator grids of the two MSE-sweep presets (low-sample and n=500)
SWEEP_N2_ESTIMATORS = ("NWJ", "N2CE:1", "N2CE:1.5", "N2CE:2", "N2CE:5",
                       "N2CE:10", "N2CE:100", "N2CE:1000", "N2CE:1e9")
SWEEP_N500_ESTIMATORS = ("NWJ", "N2CE:1", "N2CE:10", "N2CE:50", "N2CE:100",
                         "N2CE:1000", "N2CE:1e4", "N2CE:2e4", "N2CE:1e9")

DEFAULTS = {
    "seed": 0,
    "trajectory": {
        "target_mean": [1.5, -0.8],
        "init_mean": [-2.0, 1.0],
        "estimators": ["MLE_EXACT", "N2CE:1000", "N2CE:100", "N2CE:10",
                       "NCE:1"],
        "samples_per_iter": 4000,
        "step_size": 0.2,
        "iterations": 150,
        "negatives": "model",
    },
    "sweep": {
        "dim": 5,
        "n": 500,
        "repeats": 100,
        "estimators": list(SWEEP_N500_ESTIMATORS),
        "step_size": 0.2,
        "iterations": 150,
    },
    "bias_decay": {
        "alpha": [-2.0, 1.0],
        "target": [1.5, -0.8],
        "n": 1000000,
        "repeats": 5,
        "M_values": [10.0, 30.0, 100.0, 300.0, 1000.0],
    },
    "optimal_m": {
        "ns": [2, 50, 500],
        "repeats": 100,
        "M_values": [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0,
                     512.0],
    },
    "converge": {
        "alpha0": [-2.0, 1.0],
        "target": [1.5, -0.8],
        "M": 1000.0,
        "delta": 0.05,
        "step": 0.025,
        "n": 100000,
        "constant": 10.0,
    },
    "divergence": {
        "mean_diff": 1.0,
        "n": 100000,
        "M_values": [1.0, 1e9],
    },
    "telescoping": {
        "schedule": "K3_PAPER",
        "sigma_sq": [],
        "M": 100.0,
        "iterations": 1500,
        "batch_n1": 64,
        "learning_rate": 0.001,
        "convention": "scaled-negatives",
        "use_stage_weights": False,
        "coupled_draws": True,
        "lr_decay": True,
        "target_mean": [2.0, 2.0],
    },
    "sampler": {
        "kind": "SVGD",
        "langevin_steps": 100,
        "langevin_step_size": 0.4,
        "svgd_steps": 500,
        "particle_count": 128,
        "svgd_initial_step": 0.4,
        "bandwidth_floor": 1e-6,
        "gmm_variance": 0.25,
    },
    "bbo": {
        "dataset_size": 5000,
        "remove_top_fraction": 0.1,
        "schedule": "K6_PAPER",
        "M": 100.0,
        "sampler": "SVGD",
        "Q": 128,
        "prior_quantile": 0.25,
        "prior_iterations": 800,
        "prior_batch": 32,
        "prior_stage_weights": True,
        "regressor_iterations": 2000,
        "seeds": [0, 1, 2, 3, 4],
    },
}


class ConfigError(ValueError):
    """Invalid configuration; `problems` lists every offending location."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def default_config():
    return copy.deepcopy(DEFAULTS)


def _coerce(value, default, location, problems):
    """Coerce a parsed value to the default's shape, recording mismatches."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append("%s: expected a boolean" % location)
            return default
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append("%s: expected an integer" % location)
            return default
        if isinstance(value, float):
            if value != int(value):
                problems.append("%s: expected an integer" % location)
                return default
            value = int(value)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append("%s: expected a number" % location)
            return default
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            problems.append("%s: expected a string" % location)
            return default
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            problems.append("%s: expected a list" % location)
            return copy.deepcopy(default)
        if default and isinstance(default[0], str):
            if not all(isinstance(v, str) for v in value):
                problems.append("%s: expected a list of strings" % location)
                return copy.deepcopy(default)
            return list(value)
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                problems.append("%s[%d]: expected a number" % (location, i))
                return copy.deepcopy(default)
            if default and isinstance(default[0], int):
                if isinstance(v, float) and v != int(v):
                    problems.append("%s[%d]: expected an integer"
                                    % (location, i))
                    return copy.deepcopy(default)
                out.append(int(v))
            else:
                out.append(float(v))
        return out
    raise TypeError("unsupported default type at %s" % location)


def parse_config(text):
    """Parse a YAML config against the defaults; unknown keys are errors."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(["document: invalid YAML (%s)" % exc]) from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(["document: top level must be a mapping"])
    cfg = default_config()
    problems = []
    for section, content in doc.items():
        if section == "seed":
            cfg["seed"] = _coerce(content, DEFAULTS["seed"], "seed", problems)
            continue
        if section not in DEFAULTS or not isinstance(DEFAULTS[section], dict):
            problems.append("%s: unknown section" % section)
            continue
        if content is None:
            continue
        if not isinstance(content, dict):
            problems.append("%s: expected a mapping" % section)
            continue
        for key, value in content.items():
            location = "%s.%s" % (section, key)
            if key not in DEFAULTS[section]:
                problems.append("%s: unknown key" % location)
                continue
            cfg[section][key] = _coerce(value, DEFAULTS[section][key],
                                        location, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def format_float(x):
    """17-significant-digit float text that YAML reads back as a float."""
    out = "%.17g" % x
    if "e" in out or "E" in out:
        mantissa, _, exponent = out.partition("e")
        if "." not in mantissa:
            mantissa += ".0"
        if exponent and exponent[0] not in "+-":
            exponent = "+" + exponent
        return mantissa + "e" + exponent
    if "." not in out and "inf" not in out and "nan" not in out:
        out += ".0"
    return out


def _format_scalar(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return "%d" % value
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError("cannot serialize %r" % (value,))


def serialize_config(cfg):
    """Deterministic YAML emission in the canonical section order."""
    lines = ["seed: %s" % _format_scalar(cfg["seed"])]
    for section, defaults in DEFAULTS.items():
        if section == "seed":
            continue
        lines.append("%s:" % section)
        for key in defaults:
            value = cfg[section][key]
            if isinstance(value, list):
                body = ", ".join(_format_scalar(v) for v in value)
                lines.append("  %s: [%s]" % (key, body))
            else:
                lines.append("  %s: %s" % (key, _format_scalar(value)))
    return "\n".join(lines) + "\n"


def estimator_from_spec(spec):
    """Build an ObjectiveKind from a 'TAG' or 'TAG:M' string."""
    tag, _, magnitude = spec.partition(":")
    tag = tag.strip()
    if tag not in (NCE, N2CE, NWJ, NEG_REWEIGHT, MLE_EXACT):
        raise ConfigError(["estimator %r: unknown tag" % spec])
    if not magnitude:
        return ObjectiveKind(tag)
    try:
        M = float(magnitude)
    except ValueError:
        raise ConfigError(
            ["estimator %r: noise magnitude must be a number" % spec]) from None
    try:
        return ObjectiveKind(tag, M)
    except ValueError as exc:
        raise ConfigError(["estimator %r: %s" % (spec, exc)]) from exc
