"""Declarative experiment configuration: schema validation and presets.

Config files are JSON. Units are stated per key: powers in dBm, densities in
BSs per m^2, distances in meters, noise/interference levels in watts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .geometry import zero_forcing_array_gain

KINDS = ("association_sweep", "allocation_sweep", "link_level")

_COMMON_KEYS = {"kind", "name", "seed", "trials", "workers", "sweep"}
_SWEEP_KEYS = {"variable", "values"}
_TIER_KEYS = {"tier_id", "tx_power_dbm", "density_per_m2",
              "density_factor_of_sweep", "array_gain", "antennas", "streams",
              "path_loss_exponent"}
_ASSOC_KEYS = _COMMON_KEYS | {"region_radius_m", "probe", "guaranteed_bs",
                              "a_m", "a_n", "tiers"}
_ALLOC_KEYS = _COMMON_KEYS | {"n_rb", "taus", "schemes", "macro_power_dbm",
                              "small_power_dbm", "sigma2_w",
                              "protection_ratio_db", "region_radius_m",
                              "user_ring_radius_m", "alpha", "a_m", "a_n"}
_LINK_KEYS = _COMMON_KEYS | {"scheme", "k", "n", "q", "matrix_params",
                             "max_iters"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    data: dict

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def trials(self) -> int:
        return self.data["trials"]

    @property
    def workers(self) -> int:
        return self.data["workers"]

    @property
    def sweep_values(self) -> list:
        return self.data["sweep"]["values"]


def _require(data: dict, key: str, types, pred=None, what: str = ""):
    if key not in data:
        raise ConfigError(f"missing required key {key!r}")
    val = data[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise ConfigError(f"key {key!r} has invalid type {type(val).__name__}")
    if pred is not None and not pred(val):
        raise ConfigError(f"key {key!r} invalid: {what}")
    return val


def _reject_unknown(data: dict, allowed: set, where: str = "config"):
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _validate_sweep(data: dict, variable: str, value_pred, what: str):
    sweep = _require(data, "sweep", dict)
    _reject_unknown(sweep, _SWEEP_KEYS, "sweep")
    var = _require(sweep, "variable", str)
    if var != variable:
        raise ConfigError(f"key 'sweep.variable' must be {variable!r}, got {var!r}")
    values = _require(sweep, "values", list, lambda v: len(v) > 0,
                      "must be non-empty")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not value_pred(v):
            raise ConfigError(f"key 'sweep.values' invalid entry {v!r}: {what}")
    if sorted(values) != list(values) or len(set(values)) != len(values):
        raise ConfigError("key 'sweep.values' must be strictly increasing")


def _validate_common(data: dict):
    kind = _require(data, "kind", str, lambda k: k in KINDS,
                    f"must be one of {KINDS}")
    data.setdefault("name", kind)
    data.setdefault("seed", 0)
    data.setdefault("workers", 1)
    _require(data, "seed", int, lambda s: s >= 0, "must be >= 0")
    _require(data, "trials", int, lambda t: t >= 1, "trials must be >= 1")
    _require(data, "workers", int, lambda w: w >= 1, "must be >= 1")
    _require(data, "name", str, lambda n: len(n) > 0, "must be non-empty")
    return kind


def _validate_tier(tier: dict, idx: int) -> dict:
    where = f"tiers[{idx}]"
    if not isinstance(tier, dict):
        raise ConfigError(f"{where} must be an object")
    _reject_unknown(tier, _TIER_KEYS, where)
    _require(tier, "tier_id", str)
    _require(tier, "tx_power_dbm", (int, float), math.isfinite, "must be finite")
    tier.setdefault("density_per_m2", 0.0)
    tier.setdefault("density_factor_of_sweep", 0.0)
    tier.setdefault("path_loss_exponent", 4.0)
    _require(tier, "density_per_m2", (int, float), lambda d: d >= 0, "must be >= 0")
    _require(tier, "density_factor_of_sweep", (int, float), lambda d: d >= 0,
             "must be >= 0")
    _require(tier, "path_loss_exponent", (int, float), lambda a: a > 2,
             "must be > 2")
    if "antennas" in tier or "streams" in tier:
        m = _require(tier, "antennas", int, lambda v: v >= 1, "must be >= 1")
        n = _require(tier, "streams", int, lambda v: v >= 1, "must be >= 1")
        gain = zero_forcing_array_gain(m, n)
        if "array_gain" in tier and not math.isclose(tier["array_gain"], gain):
            raise ConfigError(f"{where}: array_gain conflicts with antennas/streams")
        tier["array_gain"] = gain
    tier.setdefault("array_gain", 1.0)
    _require(tier, "array_gain", (int, float), lambda g: g >= 1, "must be >= 1")
    return tier


def _validate_association(data: dict):
    _reject_unknown(data, _ASSOC_KEYS)
    data.setdefault("probe", "uniform")
    data.setdefault("guaranteed_bs", None)
    data.setdefault("a_m", 0.6)
    data.setdefault("a_n", 0.4)
    _require(data, "region_radius_m", (int, float), lambda r: r > 0, "must be > 0")
    _require(data, "probe", str, lambda p: p in ("origin", "uniform"),
             "must be 'origin' or 'uniform'")
    if data["guaranteed_bs"] not in (None, "center", "uniform"):
        raise ConfigError("key 'guaranteed_bs' must be null, 'center' or 'uniform'")
    _check_power_split(data)
    tiers = _require(data, "tiers", list, lambda t: len(t) >= 1,
                     "need at least one tier")
    for i, tier in enumerate(tiers):
        _validate_tier(tier, i)
    ids = [t["tier_id"] for t in tiers]
    if len(set(ids)) != len(ids):
        raise ConfigError("key 'tiers' contains duplicate tier_id values")
    _validate_sweep(data, "small_cell_density_per_m2", lambda v: v >= 0,
                    "must be >= 0")


def _check_power_split(data: dict):
    a_m, a_n = data["a_m"], data["a_n"]
    if abs(a_m + a_n - 1.0) > 1e-12 or not 0.0 < a_n < a_m < 1.0:
        raise ConfigError("keys 'a_m'/'a_n' must satisfy 0 < a_n < a_m < 1, "
                          "a_m + a_n = 1")


def _validate_allocation(data: dict):
    _reject_unknown(data, _ALLOC_KEYS)
    data.setdefault("a_m", 0.6)
    data.setdefault("a_n", 0.4)
    data.setdefault("alpha", 4.0)
    data.setdefault("schemes", ["noma", "oma"])
    data.setdefault("protection_ratio_db", 10.0)
    _require(data, "n_rb", int, lambda n: n >= 1, "must be >= 1")
    taus = _require(data, "taus", list, lambda t: len(t) >= 1, "must be non-empty")
    for t in taus:
        if isinstance(t, bool) or not isinstance(t, int) or t < 1:
            raise ConfigError(f"key 'taus' entries must be integers >= 1, got {t!r}")
    schemes = data["schemes"]
    if not isinstance(schemes, list) or not schemes or \
            any(s not in ("noma", "oma") for s in schemes):
        raise ConfigError("key 'schemes' must be a non-empty subset of ['noma','oma']")
    _require(data, "macro_power_dbm", (int, float), math.isfinite, "must be finite")
    _require(data, "small_power_dbm", (int, float), math.isfinite, "must be finite")
    _require(data, "sigma2_w", (int, float), lambda s: s > 0, "must be > 0")
    _require(data, "protection_ratio_db", (int, float), math.isfinite,
             "must be finite")
    _require(data, "region_radius_m", (int, float), lambda r: r > 0, "must be > 0")
    _require(data, "user_ring_radius_m", (int, float), lambda r: r > 0,
             "must be > 0")
    _require(data, "alpha", (int, float), lambda a: a > 2, "must be > 2")
    _check_power_split(data)
    _validate_sweep(data, "n_small_cells",
                    lambda v: isinstance(v, int) and v >= 1,
                    "must be integers >= 1")


def _validate_link(data: dict):
    _reject_unknown(data, _LINK_KEYS)
    data.setdefault("max_iters", 8)
    data.setdefault("matrix_params", {})
    _require(data, "scheme", str,
             lambda s: s in ("pd-noma", "scma", "pdma", "musa"),
             "must be a NOMA scheme tag")
    _require(data, "k", int, lambda v: v >= 1, "must be >= 1")
    _require(data, "n", int, lambda v: v >= 1, "must be >= 1")
    _require(data, "q", int, lambda v: v in (2, 4, 8), "must be 2, 4 or 8")
    _require(data, "max_iters", int, lambda v: v >= 1, "must be >= 1")
    _require(data, "matrix_params", dict)
    _validate_sweep(data, "snr_db", math.isfinite, "must be finite")


def validate_config(data: dict) -> ExperimentConfig:
    """Validate a raw config dict (applying defaults); unknown keys rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    data = json.loads(json.dumps(data))  # deep copy, JSON-typed
    kind = _validate_common(data)
    if kind == "association_sweep":
        _validate_association(data)
    elif kind == "allocation_sweep":
        _validate_allocation(data)
    else:
        _validate_link(data)
    return ExperimentConfig(kind, data)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return validate_config(data)


_MACRO_DENSITY = 1.0 / (2.0 * math.pi * 500.0**2)


def preset_config(name: str) -> ExperimentConfig:
    """Built-in case-study presets."""
    if name == "fig4":
        data = {
            "kind": "association_sweep",
            "name": "fig4",
            "seed": 42,
            "trials": 20000,
            "workers": 1,
            "region_radius_m": 500.0,
            "probe": "uniform",
            "guaranteed_bs": "center",
            "a_m": 0.6,
            "a_n": 0.4,
            "tiers": [
                {"tier_id": "macro", "tx_power_dbm": 40.0,
                 "density_per_m2": _MACRO_DENSITY,
                 "antennas": 200, "streams": 15},
                {"tier_id": "pico", "tx_power_dbm": 30.0,
                 "density_factor_of_sweep": 1.0},
                {"tier_id": "femto", "tx_power_dbm": 20.0,
                 "density_factor_of_sweep": 5.0},
            ],
            "sweep": {
                "variable": "small_cell_density_per_m2",
                "values": [_MACRO_DENSITY * m for m in (1, 2, 5, 10, 20, 50)],
            },
        }
    elif name == "fig5":
        data = {
            "kind": "allocation_sweep",
            "name": "fig5",
            "seed": 7,
            "trials": 100,
            "workers": 1,
            "n_rb": 4,
            "taus": [2, 3],
            "schemes": ["noma", "oma"],
            "macro_power_dbm": 43.0,
            "small_power_dbm": 23.0,
            "sigma2_w": 1e-9,
            "protection_ratio_db": 10.0,
            "region_radius_m": 500.0,
            "user_ring_radius_m": 50.0,
            "alpha": 4.0,
            "a_m": 0.6,
            "a_n": 0.4,
            "sweep": {
                "variable": "n_small_cells",
                "values": [12, 16, 20, 24, 28, 32],
            },
        }
    else:
        raise ConfigError(f"unknown preset {name!r} (available: fig4, fig5)")
    return validate_config(data)
