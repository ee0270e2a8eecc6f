"""Strict experiment configuration: a single YAML tree per experiment.

Unknown keys anywhere in the tree are errors (catching sweep typos early),
every value is type- and range-checked, and referenced data paths must exist
at validation time.  See ``validate_config`` for the full schema.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .model import NoiseSpec

__all__ = ["ExperimentConfig", "load_config", "validate_config", "SWEEPABLE_KEYS"]

_TOP_KEYS = {"scenario", "model", "sensors", "mode", "sampling_dt", "noise",
             "steps", "seed", "outputs", "sweep"}
_SCENARIO_KEYS = {
    "torus": {"kind", "rows", "cols", "n_fourier", "n_gauss", "gauss_width",
              "freq_range", "damp_range"},
    "ks": {"kind", "n_grid", "domain_length", "dt_solver", "t_final"},
    "gridded": {"kind", "path", "format", "wrap_lon"},
}
_MODEL_KEYS = {"known": {"kind"}, "dmd": {"kind", "rank"}}
_MODE_KEYS = {"stationary": {"kind"}, "mobile": {"kind", "speed", "period"}}
_NOISE_KEYS = {"q", "rho"}

# dotted config paths a sweep may vary
SWEEPABLE_KEYS = ("sensors", "sampling_dt", "steps", "seed", "noise.q",
                  "noise.rho", "mode.speed", "mode.period", "model.rank")


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description.

    ``resolved`` is the normalized plain-dict form (defaults filled in) that
    manifests record and sweep points re-validate after substitution.
    """

    scenario: dict
    model: dict
    sensors: int
    mode: dict
    sampling_dt: float
    noise: NoiseSpec
    steps: int
    seed: int
    outputs: str
    sweep: tuple = ()
    resolved: dict = field(default_factory=dict, compare=False)


def _check_keys(d, allowed, path):
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} under '{path}' "
                          f"(allowed: {sorted(allowed)})")


def _get(d, key, path, expected, required=True, default=None):
    if key not in d:
        if required:
            raise ConfigError(f"missing required key '{path}.{key}'")
        return default
    v = d[key]
    if expected is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'{path}.{key}' must be a number, got {v!r}")
        return float(v)
    if expected is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"'{path}.{key}' must be an integer, got {v!r}")
        return v
    if not isinstance(v, expected):
        raise ConfigError(
            f"'{path}.{key}' must be {expected.__name__}, got {type(v).__name__}")
    return v


def _positive(v, name):
    if not (v > 0):
        raise ConfigError(f"'{name}' must be positive, got {v!r}")
    return v


def _range_pair(d, key, path):
    v = d.get(key)
    if v is None:
        return None
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)):
        raise ConfigError(f"'{path}.{key}' must be a two-number list, got {v!r}")
    return (float(v[0]), float(v[1]))


def _validate_scenario(d, base_dir):
    if not isinstance(d, dict):
        raise ConfigError("'scenario' must be a mapping")
    kind = _get(d, "kind", "scenario", str)
    if kind not in _SCENARIO_KEYS:
        raise ConfigError(f"'scenario.kind' must be one of "
                          f"{sorted(_SCENARIO_KEYS)}, got {kind!r}")
    _check_keys(d, _SCENARIO_KEYS[kind], "scenario")
    out = {"kind": kind}
    if kind == "torus":
        for k in ("rows", "cols", "n_fourier", "n_gauss"):
            v = _get(d, k, "scenario", int, required=False)
            if v is not None:
                out[k] = v
        v = _get(d, "gauss_width", "scenario", float, required=False)
        if v is not None:
            out["gauss_width"] = _positive(v, "scenario.gauss_width")
        for k in ("freq_range", "damp_range"):
            pair = _range_pair(d, k, "scenario")
            if pair is not None:
                out[k] = list(pair)
    elif kind == "ks":
        for k, typ in (("n_grid", int), ("domain_length", float),
                       ("dt_solver", float), ("t_final", float)):
            v = _get(d, k, "scenario", typ, required=False)
            if v is not None:
                out[k] = _positive(v, f"scenario.{k}")
    else:  # gridded
        path = _get(d, "path", "scenario", str)
        resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
        if not os.path.exists(resolved):
            raise ConfigError(f"'scenario.path' does not exist: {resolved}")
        out["path"] = resolved
        fmt = _get(d, "format", "scenario", str, required=False, default="binary_grid")
        if fmt not in ("binary_grid", "csv_grid"):
            raise ConfigError(f"'scenario.format' must be binary_grid or csv_grid, got {fmt!r}")
        out["format"] = fmt
        wrap = d.get("wrap_lon", True)
        if not isinstance(wrap, bool):
            raise ConfigError(f"'scenario.wrap_lon' must be boolean, got {wrap!r}")
        out["wrap_lon"] = wrap
    return out


def _validate_model(d):
    if not isinstance(d, dict):
        raise ConfigError("'model' must be a mapping")
    kind = _get(d, "kind", "model", str)
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"'model.kind' must be known or dmd, got {kind!r}")
    _check_keys(d, _MODEL_KEYS[kind], "model")
    out = {"kind": kind}
    if kind == "dmd":
        out["rank"] = _positive(_get(d, "rank", "model", int), "model.rank")
    return out


def _validate_mode(d):
    if not isinstance(d, dict):
        raise ConfigError("'mode' must be a mapping")
    kind = _get(d, "kind", "mode", str)
    if kind not in _MODE_KEYS:
        raise ConfigError(f"'mode.kind' must be stationary or mobile, got {kind!r}")
    _check_keys(d, _MODE_KEYS[kind], "mode")
    out = {"kind": kind}
    if kind == "mobile":
        speed = d.get("speed")
        if speed == "inf":
            speed = float("inf")
        if isinstance(speed, bool) or not isinstance(speed, (int, float)):
            raise ConfigError(f"'mode.speed' must be a number or \"inf\", got {speed!r}")
        if not (speed >= 0):
            raise ConfigError(f"'mode.speed' must be non-negative, got {speed!r}")
        out["speed"] = float(speed)
        out["period"] = _positive(_get(d, "period", "mode", int), "mode.period")
    return out


def _validate_sweep(sweep):
    if sweep is None:
        return ()
    if not isinstance(sweep, list) or not sweep:
        raise ConfigError("'sweep' must be a non-empty list of axes")
    axes = []
    seen = set()
    for i, axis in enumerate(sweep):
        if not isinstance(axis, dict):
            raise ConfigError(f"'sweep[{i}]' must be a mapping with key/values")
        _check_keys(axis, {"key", "values"}, f"sweep[{i}]")
        key = _get(axis, "key", f"sweep[{i}]", str)
        if key not in SWEEPABLE_KEYS:
            raise ConfigError(f"'sweep[{i}].key' {key!r} is not sweepable "
                              f"(choose from {list(SWEEPABLE_KEYS)})")
        if key in seen:
            raise ConfigError(f"duplicate sweep axis {key!r}")
        seen.add(key)
        values = axis.get("values")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"'sweep[{i}].values' must be a non-empty list")
        axes.append((key, tuple(values)))
    return tuple(axes)


def set_by_path(tree, dotted, value):
    """Set ``tree[a][b] = value`` for dotted key ``"a.b"`` (in place)."""
    parts = dotted.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def validate_config(data, base_dir="."):
    """Validate a parsed config mapping and return an ``ExperimentConfig``.

    Raises :class:`ConfigError` on unknown keys, type errors, bad ranges,
    missing files, or invalid sweep axes.
    """
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(data, _TOP_KEYS, "<root>")
    scenario = _validate_scenario(_get(data, "scenario", "<root>", dict), base_dir)
    model = _validate_model(_get(data, "model", "<root>", dict))
    sensors = _positive(_get(data, "sensors", "<root>", int), "sensors")
    mode = _validate_mode(_get(data, "mode", "<root>", dict))
    sampling_dt = _positive(
        _get(data, "sampling_dt", "<root>", float, required=False, default=1.0),
        "sampling_dt")
    noise_d = _get(data, "noise", "<root>", dict, required=False, default={})
    _check_keys(noise_d, _NOISE_KEYS, "noise")
    q = _get(noise_d, "q", "noise", float, required=False, default=0.0)
    rho = _get(noise_d, "rho", "noise", float, required=False, default=1.0)
    if q < 0:
        raise ConfigError(f"'noise.q' must be non-negative, got {q!r}")
    if not (rho > 0):
        raise ConfigError(f"'noise.rho' must be positive, got {rho!r}")
    steps = _positive(_get(data, "steps", "<root>", int), "steps")
    seed = _get(data, "seed", "<root>", int, required=False, default=0)
    outputs = _get(data, "outputs", "<root>", str)
    sweep = _validate_sweep(data.get("sweep"))

    if scenario["kind"] != "torus" and model["kind"] == "known":
        raise ConfigError(
            f"model.kind 'known' requires a torus scenario (the "
            f"{scenario['kind']} scenario has no closed-form model); use dmd")

    resolved = {
        "scenario": dict(scenario), "model": dict(model), "sensors": sensors,
        "mode": dict(mode), "sampling_dt": sampling_dt,
        "noise": {"q": q, "rho": rho}, "steps": steps, "seed": seed,
        "outputs": outputs,
    }
    if sweep:
        resolved["sweep"] = [{"key": k, "values": list(v)} for k, v in sweep]
        # fail before any computation if a grid point would be invalid
        for key, values in sweep:
            for v in values:
                probe = _deep_copy(resolved)
                probe.pop("sweep")
                set_by_path(probe, key, v)
                validate_config(probe, base_dir)

    return ExperimentConfig(scenario=scenario, model=model, sensors=sensors,
                            mode=mode, sampling_dt=sampling_dt,
                            noise=NoiseSpec(q=q, rho=rho), steps=steps,
                            seed=seed, outputs=outputs, sweep=sweep,
                            resolved=resolved)


def _deep_copy(tree):
    if isinstance(tree, dict):
        return {k: _deep_copy(v) for k, v in tree.items()}
    if isinstance(tree, list):
        return [_deep_copy(v) for v in tree]
    return tree


def load_config(path):
    """Parse and validate a YAML experiment config file."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"could not read {path}: {exc}") from None
    if data is None:
        raise ConfigError(f"{path} is empty")
    return validate_config(data, base_dir=os.path.dirname(os.path.abspath(path)))
