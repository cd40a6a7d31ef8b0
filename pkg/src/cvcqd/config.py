"""Scenario configuration: strict JSON schema, presets, parameter paths.

Configuration is plain JSON.  Validation is strict: unknown fields are
rejected at every nesting level (a typo in a security-relevant knob must
fail loudly, not silently fall back to a default) and every range is
checked before anything runs.
"""

from __future__ import annotations

import json
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import ChannelParams
from .comparison import ComparisonParams
from .dialogue import RunParams
from .errors import ConfigError

PROTOCOLS = ("cqd", "smp2", "smpn")
EXPERIMENTS = (
    "protocol-run",
    "reference-variance",
    "engine-cross-oracle",
    "bs-replication",
)
ATTACK_KINDS = ("disturbance", "intercept-resend", "clone-noise", "beam-splitter", "passive-listen")
CHARLIE_MODES = ("honest", "aux-mode-swap", "separable-state")

DEFAULTS = {
    "protocol": "cqd",
    "experiment": "protocol-run",
    "squeezing_r": 1.0,
    "channel": {"eta": 1.0, "epsilon": 0.0, "amp": "paper-ideal"},
    "decoys": {"charlie_bob": 50, "alice_bob": 50, "alice_bob_return": 50},
    "decoys_per_hop": 50,
    "threshold_c": 4.0,
    "schedule_variance": 25.0,
    "reveal_fraction": 1.0,
    "offsets": {"x": 0.0, "y": 0.0},
    "fresh_reference": False,
    "quantize_bits": None,
    "quantize_span": 8.0,
    "messages": {"mode": "gaussian", "variance": 0.25},
    "wealth": {"mode": "gaussian", "variance": 0.25},
    "n_parties": 3,
    "hardening_variance": 0.0,
    "equality_tolerance": None,
    "debug_expose_statistic": False,
    "attack": None,
    "charlie_mode": "honest",
    "trials": 1,
    "seed": 0,
    "mi_trials": 10_000,
    "frames": 100_000,
    "pipelines": 20,
    "samples": 100_000,
    "realizations": 100,
    "sweep": None,
    "attack_suite": None,
    "attack_metric": "detection",
    "capacity": {"r_grid": [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25], "sigma": 0.0},
    "workers": 1,
}


def _check_keys(section: dict, allowed: set[str], path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0],
                          "unknown field")


def _number(value, path, low=None, high=None, integer=False, allow_none=False):
    if value is None:
        if allow_none:
            return None
        raise ConfigError(path, "must not be null")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    if integer and int(value) != value:
        raise ConfigError(path, "expected an integer")
    if low is not None and value < low:
        raise ConfigError(path, f"must be >= {low}")
    if high is not None and value > high:
        raise ConfigError(path, f"must be <= {high}")
    return int(value) if integer else float(value)


def _choice(value, path, options):
    if value not in options:
        raise ConfigError(path, f"must be one of {list(options)}")
    return value


def _bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(path, "expected true or false")
    return value


def _validate_channel(raw: dict, path: str) -> dict:
    _check_keys(raw, {"eta", "epsilon", "amp"}, path)
    out = dict(DEFAULTS["channel"])
    out.update(raw)
    _number(out["eta"], f"{path}.eta", low=1e-12, high=1.0)
    if out["eta"] <= 0:
        raise ConfigError(f"{path}.eta", "must lie in (0, 1]")
    _number(out["epsilon"], f"{path}.epsilon", low=0.0)
    _choice(out["amp"], f"{path}.amp", ("paper-ideal", "phase-insensitive"))
    return out


def _validate_attack(raw, path: str):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object or null")
    allowed = {"kind", "d", "r_eve", "delta", "beta1", "beta2", "beta3", "hops"}
    _check_keys(raw, allowed, path)
    if "kind" not in raw:
        raise ConfigError(f"{path}.kind", "required")
    _choice(raw["kind"], f"{path}.kind", ATTACK_KINDS)
    for key in ("d", "delta"):
        if key in raw:
            _number(raw[key], f"{path}.{key}", low=0.0)
    for key in ("beta1", "beta2", "beta3"):
        if key in raw:
            _number(raw[key], f"{path}.{key}", low=0.0, high=1.0)
    if "r_eve" in raw:
        _number(raw["r_eve"], f"{path}.r_eve", low=0.0)
    if "hops" in raw:
        if not isinstance(raw["hops"], list) or not all(h in ("cb", "ca", "ab") for h in raw["hops"]):
            raise ConfigError(f"{path}.hops", "expected a list drawn from ['cb', 'ca', 'ab']")
    return dict(raw)


def _validate_generator(raw: dict, path: str, fixed_key: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    mode = raw.get("mode")
    if mode == "gaussian":
        _check_keys(raw, {"mode", "variance"}, path)
        out = {"mode": "gaussian", "variance": _number(raw.get("variance", 0.25),
                                                       f"{path}.variance", low=1e-12)}
        return out
    if mode == "fixed":
        _check_keys(raw, {"mode", fixed_key} if fixed_key == "values" else {"mode", "alice", "bob"}, path)
        return dict(raw)
    if mode == "separated" and fixed_key == "values":
        _check_keys(raw, {"mode", "gap_min", "gap_max", "base_range"}, path)
        out = {
            "mode": "separated",
            "gap_min": _number(raw.get("gap_min", 1.0), f"{path}.gap_min", low=0.0),
            "gap_max": _number(raw.get("gap_max", 10.0), f"{path}.gap_max", low=0.0),
            "base_range": _number(raw.get("base_range", 10.0), f"{path}.base_range", low=0.0),
        }
        if out["gap_max"] < out["gap_min"]:
            raise ConfigError(f"{path}.gap_max", "must be >= gap_min")
        return out
    if mode == "equal" and fixed_key == "values":
        _check_keys(raw, {"mode", "base_range"}, path)
        return {"mode": "equal",
                "base_range": _number(raw.get("base_range", 10.0), f"{path}.base_range", low=0.0)}
    raise ConfigError(f"{path}.mode", "unrecognized generator mode")


def validate_config(raw: dict) -> dict:
    """Validate and normalize a scenario configuration (strict)."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be an object")
    _check_keys(raw, set(DEFAULTS), "")
    cfg = json.loads(json.dumps(DEFAULTS))  # deep copy
    for key, value in raw.items():
        if key in ("channel", "decoys", "offsets", "capacity") and isinstance(value, dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value

    _choice(cfg["protocol"], "protocol", PROTOCOLS)
    _choice(cfg["experiment"], "experiment", EXPERIMENTS)
    _number(cfg["squeezing_r"], "squeezing_r", low=0.0)
    cfg["channel"] = _validate_channel(raw.get("channel", {}), "channel")
    _check_keys(cfg["decoys"], {"charlie_bob", "alice_bob", "alice_bob_return"}, "decoys")
    for key in cfg["decoys"]:
        cfg["decoys"][key] = _number(cfg["decoys"][key], f"decoys.{key}", low=0, integer=True)
    _number(cfg["decoys_per_hop"], "decoys_per_hop", low=0, integer=True)
    _number(cfg["threshold_c"], "threshold_c", low=1e-12)
    _number(cfg["schedule_variance"], "schedule_variance", low=0.0)
    _number(cfg["reveal_fraction"], "reveal_fraction", low=0.0, high=1.0)
    _check_keys(cfg["offsets"], {"x", "y"}, "offsets")
    _number(cfg["offsets"]["x"], "offsets.x")
    _number(cfg["offsets"]["y"], "offsets.y")
    _bool(cfg["fresh_reference"], "fresh_reference")
    if cfg["quantize_bits"] is not None:
        _number(cfg["quantize_bits"], "quantize_bits", low=1, integer=True)
    _number(cfg["quantize_span"], "quantize_span", low=1e-12)
    cfg["messages"] = _validate_generator(cfg["messages"], "messages", "alice")
    cfg["wealth"] = _validate_generator(cfg["wealth"], "wealth", "values")
    _number(cfg["n_parties"], "n_parties", low=2, integer=True)
    _number(cfg["hardening_variance"], "hardening_variance", low=0.0)
    if cfg["equality_tolerance"] is not None:
        _number(cfg["equality_tolerance"], "equality_tolerance", low=0.0)
    _bool(cfg["debug_expose_statistic"], "debug_expose_statistic")
    cfg["attack"] = _validate_attack(cfg["attack"], "attack")
    _choice(cfg["charlie_mode"], "charlie_mode", CHARLIE_MODES)
    _number(cfg["trials"], "trials", low=1, integer=True)
    _number(cfg["seed"], "seed", integer=True)
    _number(cfg["mi_trials"], "mi_trials", low=100, integer=True)
    _number(cfg["frames"], "frames", low=2, integer=True)
    _number(cfg["pipelines"], "pipelines", low=1, integer=True)
    _number(cfg["samples"], "samples", low=100, integer=True)
    _number(cfg["realizations"], "realizations", low=1, integer=True)
    _number(cfg["workers"], "workers", low=1, integer=True)
    if cfg["sweep"] is not None:
        if not isinstance(cfg["sweep"], dict):
            raise ConfigError("sweep", "expected an object or null")
        _check_keys(cfg["sweep"], {"parameter", "grid"}, "sweep")
        if "parameter" not in cfg["sweep"] or "grid" not in cfg["sweep"]:
            raise ConfigError("sweep", "needs 'parameter' and 'grid'")
        if not isinstance(cfg["sweep"]["grid"], list) or len(cfg["sweep"]["grid"]) == 0:
            raise ConfigError("sweep.grid", "expected a non-empty list")
    if cfg["attack_suite"] is not None:
        if not isinstance(cfg["attack_suite"], list) or len(cfg["attack_suite"]) == 0:
            raise ConfigError("attack_suite", "expected a non-empty list")
        cfg["attack_suite"] = [
            None if entry is None or entry == "none" else _validate_attack(entry, f"attack_suite[{i}]")
            for i, entry in enumerate(cfg["attack_suite"])
        ]
    _choice(cfg["attack_metric"], "attack_metric", ("detection", "information"))
    _check_keys(cfg["capacity"], {"r_grid", "sigma"}, "capacity")
    if not isinstance(cfg["capacity"]["r_grid"], list) or len(cfg["capacity"]["r_grid"]) == 0:
        raise ConfigError("capacity.r_grid", "expected a non-empty list")
    for i, r in enumerate(cfg["capacity"]["r_grid"]):
        _number(r, f"capacity.r_grid[{i}]", low=0.0)
    _number(cfg["capacity"]["sigma"], "capacity.sigma", low=0.0)
    return cfg


def load_config(path: str | Path) -> dict:
    """Read and validate a JSON config; JSON syntax errors keep their
    line/column diagnostics."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from exc
    return validate_config(raw)


def load_preset(name: str) -> dict:
    """Load a named preset shipped with the package."""
    ref = resources.files("cvcqd").joinpath(f"presets/{name}.json")
    if not ref.is_file():
        raise ConfigError("preset", f"unknown preset {name!r} (see `presets` directory)")
    return validate_config(json.loads(ref.read_text()))


def preset_names() -> list[str]:
    ref = resources.files("cvcqd").joinpath("presets")
    return sorted(p.name[:-5] for p in ref.iterdir() if p.name.endswith(".json"))


# ---------------------------------------------------------------------------
# config -> run parameter objects


def build_run_params(cfg: dict) -> RunParams:
    ch = ChannelParams(eta=cfg["channel"]["eta"], epsilon=cfg["channel"]["epsilon"],
                       amp_mode=cfg["channel"]["amp"])
    return RunParams(
        r=cfg["squeezing_r"],
        channel_cb=ch,
        channel_ca=ch,
        channel_ab=ch,
        n_decoy_cb=cfg["decoys"]["charlie_bob"],
        n_decoy_ab=cfg["decoys"]["alice_bob"],
        n_decoy_abo=cfg["decoys"]["alice_bob_return"],
        threshold_c=cfg["threshold_c"],
        schedule_variance=cfg["schedule_variance"],
        offset_x=cfg["offsets"]["x"],
        offset_y=cfg["offsets"]["y"],
        reveal_fraction=cfg["reveal_fraction"],
        fresh_reference=cfg["fresh_reference"],
        quantize_bits=cfg["quantize_bits"],
        quantize_span=cfg["quantize_span"],
    )


def build_comparison_params(cfg: dict) -> ComparisonParams:
    ch = ChannelParams(eta=cfg["channel"]["eta"], epsilon=cfg["channel"]["epsilon"],
                       amp_mode=cfg["channel"]["amp"])
    return ComparisonParams(
        r=cfg["squeezing_r"],
        channel=ch,
        decoys_per_hop=cfg["decoys_per_hop"],
        threshold_c=cfg["threshold_c"],
        schedule_variance=cfg["schedule_variance"],
        equality_tolerance=cfg["equality_tolerance"],
        hardening_variance=cfg["hardening_variance"],
        fresh_reference=cfg["fresh_reference"],
        debug_expose_statistic=cfg["debug_expose_statistic"],
    )


def draw_messages(cfg: dict, rng: np.random.Generator) -> tuple[tuple, tuple]:
    gen = cfg["messages"]
    if gen["mode"] == "fixed":
        return tuple(gen["alice"]), tuple(gen["bob"])
    std = np.sqrt(gen["variance"])
    vals = rng.normal(0.0, std, 4)
    return (vals[0], vals[1]), (vals[2], vals[3])


def draw_wealth(cfg: dict, rng: np.random.Generator) -> list[float]:
    gen = cfg["wealth"]
    n = 2 if cfg["protocol"] == "smp2" else cfg["n_parties"]
    if gen["mode"] == "fixed":
        return [float(v) for v in gen["values"]]
    if gen["mode"] == "equal":
        return [float(rng.uniform(0.0, gen["base_range"]))] * n
    if gen["mode"] == "separated":
        base = rng.uniform(0.0, gen["base_range"])
        gap = rng.uniform(gen["gap_min"], gen["gap_max"]) * (1 if rng.integers(2) else -1)
        return [float(base + gap), float(base)] if n == 2 else [float(base)] * n
    return [float(v) for v in rng.normal(0.0, np.sqrt(gen["variance"]), n)]


def resolve_sweep_path(cfg: dict, path: str, value) -> dict:
    """Set a dotted numeric parameter path in a copy of the config."""
    known = {
        "squeezing_r", "channel.eta", "channel.epsilon", "threshold_c",
        "schedule_variance", "reveal_fraction", "offsets.x", "offsets.y",
        "n_parties", "decoys_per_hop", "hardening_variance", "frames",
        "decoys.charlie_bob", "decoys.alice_bob", "decoys.alice_bob_return",
        "attack.d", "attack.delta", "attack.beta1", "attack.beta2", "attack.beta3",
        "attack.r_eve", "messages.variance", "wealth.variance", "trials",
    }
    if path not in known:
        raise ConfigError("sweep.parameter", f"unknown numeric parameter {path!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("sweep.grid", f"grid value {value!r} is not a number")
    out = json.loads(json.dumps(cfg))
    node = out
    parts = path.split(".")
    for part in parts[:-1]:
        if node.get(part) is None:
            raise ConfigError("sweep.parameter", f"section {part!r} is absent from the config")
        node = node[part]
    node[parts[-1]] = value
    return validate_config(out)
