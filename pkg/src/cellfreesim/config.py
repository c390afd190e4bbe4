"""Campaign configuration files: TOML schema, validation, canonical form.

Every field has a default reproducing the baseline evaluation constants
(20 MHz bandwidth, 290 K, 7 dB noise figure, 0.2 W / 0.1 W UE powers,
512 single-antenna APs serving 8 UEs with MMSE combining). Unknown keys are
rejected by name so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import copy
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import channel as ch
from . import harness, scenario, tpc
from .errors import ConfigError
from .metrics import SystemConfig

_STR = "str"
_INT = "int"
_FLOAT = "float"
_FLOAT_LIST = "float_list"
_STR_LIST = "str_list"

# section -> key -> (type, default, allowed-values or None)
SCHEMA = {
    "system": {
        "bandwidth_hz": (_FLOAT, 20e6, None),
        "noise_temperature_k": (_FLOAT, 290.0, None),
        "noise_figure_db": (_FLOAT, 7.0, None),
        "max_transmit_power_w": (_FLOAT, 0.2, None),
        "circuit_power_w": (_FLOAT, 0.1, None),
        "transmit_snr": (_FLOAT, 0.0, None),  # 0 = derive from the constants above
        "pilot_snr": (_FLOAT, 0.0, None),  # 0 = equal to the transmit SNR
        "pilot_length": (_INT, 0, None),  # 0 = number of UEs
    },
    "area": {
        "width_m": (_FLOAT, 200.0, None),
        "depth_m": (_FLOAT, 200.0, None),
        "ap_heights_m": (_FLOAT_LIST, [25.0, 35.0, 45.0], None),
        "ue_height_m": (_FLOAT, 1.5, None),
    },
    "deployment": {
        "num_aps": (_INT, 512, None),
        "antennas_per_ap": (_INT, 1, None),
        "num_ues": (_INT, 8, None),
        "ap_placement": (_STR, "random", ("random", "grid")),
        "ue_placement": (_STR, "spread", ("spread", "clustered")),
        "cluster_radius_m": (_FLOAT, 15.0, None),
        "indoor_fraction": (_FLOAT, 0.0, None),
        "min_antenna_spacing_m": (_FLOAT, scenario.DEFAULT_MIN_SPACING, None),
    },
    "channel": {
        "model": (_STR, "adjusted", ("adjusted", "literature", "custom")),
        "intercept_db": (_FLOAT, ch.ADJUSTED_MODEL.intercept, None),
        "slope_db_per_decade": (_FLOAT, ch.ADJUSTED_MODEL.slope, None),
        "reference_distance_m": (_FLOAT, ch.ADJUSTED_MODEL.reference_distance, None),
        "shadow_sigma_db": (_FLOAT, ch.ADJUSTED_MODEL.shadow_sigma, None),
        "indoor_penalty_db": (_FLOAT, ch.DEFAULT_INDOOR_PENALTY_DB, None),
        "source": (_STR, "synthetic", None),
        "csi": (_STR, "mmse", ("mmse", "perfect")),
    },
    "campaign": {
        "drops": (_INT, 20, None),
        "realizations_per_drop": (_INT, 1, None),
        "base_seed": (_INT, 1, None),
        "combiners": (_STR_LIST, ["mmse"], ("mr", "mmse")),
        "algorithms": (
            _STR_LIST,
            ["max_power", "max_min_se", "max_min_ee"],
            tpc.ALGORITHMS,
        ),
        "target_se": (_FLOAT, 1.0, None),
    },
    "tpc": {
        "bisection_tol": (_FLOAT, 1e-4, None),
        "fixed_point_tol": (_FLOAT, 1e-7, None),
        "max_fixed_point_iters": (_INT, 20_000, None),
        "alternations": (_INT, 5, None),
        "hill_step_init": (_FLOAT, 0.1, None),
        "hill_step_min": (_FLOAT, 1e-4, None),
    },
}

PROFILES = {
    "paper": {},  # the schema defaults are that baseline
    "desk": {"deployment": {"num_aps": 64}, "campaign": {"drops": 200}},
}


def default_config(profile: str = "paper") -> dict:
    """Fully-populated configuration dict for a named profile."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile: {profile!r} (choose from {sorted(PROFILES)})")
    cfg = {
        section: {key: copy.deepcopy(spec[1]) for key, spec in keys.items()}
        for section, keys in SCHEMA.items()
    }
    for section, overrides in PROFILES[profile].items():
        cfg[section].update(copy.deepcopy(overrides))
    return cfg


def _check_value(path: str, value, kind: str, allowed):
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        if allowed is not None and value not in allowed:
            raise ConfigError(f"{path}: {value!r} is not one of {sorted(allowed)}")
        return value
    if kind == _FLOAT_LIST:
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a nonempty list of numbers")
        out = []
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"{path}[{i}]: expected a number, got {item!r}")
            out.append(float(item))
        return out
    if kind == _STR_LIST:
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a nonempty list of strings")
        for i, item in enumerate(value):
            if not isinstance(item, str):
                raise ConfigError(f"{path}[{i}]: expected a string, got {item!r}")
            if allowed is not None and item not in allowed:
                raise ConfigError(f"{path}[{i}]: {item!r} is not one of {sorted(allowed)}")
        return list(value)
    raise AssertionError(kind)


def validate_config(raw: dict, profile: str = "paper") -> dict:
    """Merge a parsed TOML tree over a profile's defaults, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a table")
    cfg = default_config(profile)
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section: {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: expected a table")
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key: {section}.{key}")
            kind, _, allowed = SCHEMA[section][key]
            cfg[section][key] = _check_value(f"{section}.{key}", value, kind, allowed)
    return cfg


def parse_config(text: str, profile: str = "paper") -> dict:
    """Parse and validate TOML text into a fully-populated config dict."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    return validate_config(raw, profile)


def load_config(path, profile: str = "paper") -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), profile)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise AssertionError(f"unhandled config value type: {type(value)}")


def serialize_config(cfg: dict) -> str:
    """Canonical TOML rendering: schema order, one key per line."""
    lines = []
    for section in SCHEMA:
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            lines.append(f"{key} = {_toml_value(cfg[section][key])}")
        lines.append("")
    return "\n".join(lines)


def path_loss_model(cfg: dict) -> ch.PathLossModel:
    body = cfg["channel"]
    if body["model"] == "custom":
        return ch.PathLossModel(
            intercept=body["intercept_db"],
            slope=body["slope_db_per_decade"],
            reference_distance=body["reference_distance_m"],
            shadow_sigma=body["shadow_sigma_db"],
        )
    return ch.PATH_LOSS_PRESETS[body["model"]]


def system_config(cfg: dict) -> SystemConfig:
    body = cfg["system"]
    return SystemConfig(
        bandwidth=body["bandwidth_hz"],
        noise_temperature=body["noise_temperature_k"],
        noise_figure_db=body["noise_figure_db"],
        p_max=body["max_transmit_power_w"],
        p_circuit=body["circuit_power_w"],
        rho=body["transmit_snr"] or None,
        rho_p=body["pilot_snr"] or None,
        tau_p=body["pilot_length"] or None,
    )


def build_campaign(cfg: dict, seed_override: int | None = None) -> harness.CampaignSpec:
    """Assemble the harness CampaignSpec from a validated config dict."""
    area = scenario.AreaSpec(
        width=cfg["area"]["width_m"],
        depth=cfg["area"]["depth_m"],
        ap_heights=tuple(cfg["area"]["ap_heights_m"]),
        ue_height=cfg["area"]["ue_height_m"],
    )
    dep = cfg["deployment"]
    camp = cfg["campaign"]
    options = tpc.TpcOptions(target_se=camp["target_se"], **cfg["tpc"])
    algorithms = tuple(harness.AlgorithmSpec(name) for name in camp["algorithms"])
    return harness.CampaignSpec(
        L=dep["num_aps"],
        N=dep["antennas_per_ap"],
        K=dep["num_ues"],
        drops=camp["drops"],
        realizations_per_drop=camp["realizations_per_drop"],
        base_seed=camp["base_seed"] if seed_override is None else seed_override,
        area=area,
        system=system_config(cfg),
        path_loss=path_loss_model(cfg),
        ap_mode=dep["ap_placement"],
        ue_mode=dep["ue_placement"],
        cluster_radius=dep["cluster_radius_m"],
        indoor_fraction=dep["indoor_fraction"],
        indoor_penalty_db=cfg["channel"]["indoor_penalty_db"],
        min_antenna_spacing=dep["min_antenna_spacing_m"],
        channel_source=cfg["channel"]["source"],
        csi=cfg["channel"]["csi"],
        combiners=tuple(camp["combiners"]),
        algorithms=algorithms,
        tpc_options=options,
    )
