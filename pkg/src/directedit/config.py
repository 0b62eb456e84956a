"""JSON run configuration for the ``edit`` command."""
from __future__ import annotations

import copy
import json
from pathlib import Path

from .core import InvalidArgument, make_schedule
from .dag import DagConfig
from .safc import MaskConfig

DEFAULTS = {
    "scene": None,
    "c_src": None,
    "c_tar": None,
    "schedule": {"n_total": 50, "n_skip": 10},
    "cfg": {"s_src": 3.5, "s_tar": 10.5},
    "safc": {
        "enabled": False,
        "kernel": 11,
        "delta": 0.25,
        "apply_softening": True,
        "provider": "velocity",
        "mask_scope": "estimate",
        "freeze_step0": False,
        "attention_noise": 0.0,
    },
    "dag": {
        "enabled": False,
        "l_hq": 4,
        "l_bl": 2,
        "subset_mode": "exhaustive",
        "k_subsets": None,
        "w": 2.75,
    },
    "n_samples": 1,
    "master_seed": 0,
    "output": None,
}
REQUIRED = ("scene", "c_src", "c_tar")
# Not echoed into resolved-config.json: where a run writes is not a run parameter.
LOCATION_KEYS = ("output",)


class ConfigError(InvalidArgument):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _merge(defaults: dict, given: dict, path: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(path or "config", "expected an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(path or "config", f"unknown keys {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        sub = f"{path}.{key}" if path else key
        if isinstance(default, dict):
            out[key] = _merge(default, given.get(key, {}), sub)
        else:
            out[key] = given.get(key, default)
    return out


def _typed(value, kind, path, *, allow_none=False):
    if value is None and allow_none:
        return None
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ConfigError(path, f"expected {kind.__name__}, got {value!r}")
    return value


def resolve(doc: dict, base_dir=None) -> dict:
    """Materialize defaults, check types and constraints, return a new dict."""
    cfg = _merge(DEFAULTS, doc, "")
    for key in REQUIRED:
        if cfg[key] is None:
            raise ConfigError(key, "missing")
    cfg["scene"] = _typed(cfg["scene"], str, "scene")
    scene = Path(cfg["scene"])
    if base_dir is not None and not scene.is_absolute():
        scene = Path(base_dir) / scene
    cfg["scene"] = str(scene.resolve())
    if not scene.is_file():
        raise ConfigError("scene", f"file not found: {scene}")
    cfg["c_src"] = _typed(cfg["c_src"], str, "c_src")
    cfg["c_tar"] = _typed(cfg["c_tar"], str, "c_tar")

    sch = cfg["schedule"]
    sch["n_total"] = _typed(sch["n_total"], int, "schedule.n_total")
    sch["n_skip"] = _typed(sch["n_skip"], int, "schedule.n_skip")
    try:
        make_schedule(sch["n_total"], sch["n_skip"])
    except InvalidArgument as exc:
        raise ConfigError("schedule", str(exc)) from None

    cfg["cfg"]["s_src"] = _typed(cfg["cfg"]["s_src"], float, "cfg.s_src")
    cfg["cfg"]["s_tar"] = _typed(cfg["cfg"]["s_tar"], float, "cfg.s_tar")

    s = cfg["safc"]
    for key in ("enabled", "apply_softening", "freeze_step0"):
        s[key] = _typed(s[key], bool, f"safc.{key}")
    s["kernel"] = _typed(s["kernel"], int, "safc.kernel")
    s["delta"] = _typed(s["delta"], float, "safc.delta")
    s["provider"] = _typed(s["provider"], str, "safc.provider")
    s["mask_scope"] = _typed(s["mask_scope"], str, "safc.mask_scope")
    s["attention_noise"] = _typed(s["attention_noise"], float, "safc.attention_noise")
    if s["attention_noise"] < 0:
        raise ConfigError("safc.attention_noise", "must be >= 0")
    try:
        mask_config(cfg)
    except InvalidArgument as exc:
        raise ConfigError("safc", str(exc)) from None

    d = cfg["dag"]
    d["enabled"] = _typed(d["enabled"], bool, "dag.enabled")
    d["l_hq"] = _typed(d["l_hq"], int, "dag.l_hq")
    d["l_bl"] = _typed(d["l_bl"], int, "dag.l_bl")
    d["subset_mode"] = _typed(d["subset_mode"], str, "dag.subset_mode")
    d["k_subsets"] = _typed(d["k_subsets"], int, "dag.k_subsets", allow_none=True)
    d["w"] = _typed(d["w"], float, "dag.w")
    try:
        dag_config(cfg)
    except InvalidArgument as exc:
        raise ConfigError("dag", str(exc)) from None

    cfg["n_samples"] = _typed(cfg["n_samples"], int, "n_samples")
    if cfg["n_samples"] < 1:
        raise ConfigError("n_samples", "must be >= 1")
    cfg["master_seed"] = _typed(cfg["master_seed"], int, "master_seed")
    if not 0 <= cfg["master_seed"] < 2**64:
        raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
    if cfg["output"] is not None:
        cfg["output"] = _typed(cfg["output"], str, "output")
    return cfg


def load(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    return resolve(doc, base_dir=path.parent)


def mask_config(cfg: dict) -> MaskConfig:
    s = cfg["safc"]
    return MaskConfig(s["kernel"], s["delta"], s["apply_softening"], s["provider"],
                      s["mask_scope"], s["freeze_step0"])


def dag_config(cfg: dict) -> DagConfig:
    d = cfg["dag"]
    return DagConfig(d["l_hq"], d["l_bl"], d["subset_mode"], d["k_subsets"], d["w"])


def echo(cfg: dict) -> str:
    """Canonical JSON of a resolved config, without location keys."""
    out = copy.deepcopy(cfg)
    for key in LOCATION_KEYS:
        out.pop(key, None)
    return json.dumps(out, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
