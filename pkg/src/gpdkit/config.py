"""Run configuration: one TOML document with a section per pipeline stage.

Every key has a default; files and command-line flags override them.
Unknown sections or keys are rejected.
"""

from __future__ import annotations

import copy
import dataclasses
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .candgen import HandGeometry
from .encode import GRID_SIZE, OCCLUSION_RADIUS, Variant
from .eval.detect import SelectionConfig
from .learn.train import SolverConfig
from .oracle.antipodal import AntipodalParams
from .oracle.build import RenderSettings
from .oracle.render import Intrinsics


class ConfigError(ValueError):
    pass


def _fields(obj, skip=()):
    out = {}
    for f in dataclasses.fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def defaults():
    render = _fields(RenderSettings(), skip=("intrinsics",))
    render.update({"image_width": Intrinsics().width, "image_height": Intrinsics().height,
                   "hfov_deg": Intrinsics().hfov_deg})
    return {
        "run": {"seed": 0, "threads": 0},
        "hand": _fields(HandGeometry()),
        "sampler": {"n_samples": 100, "n_orientations": 8},
        "encoder": {"variant": Variant.FIFTEEN.value, "grid_size": GRID_SIZE,
                    "occlusion_radius": OCCLUSION_RADIUS},
        "render": render,
        "oracle": _fields(AntipodalParams()),
        "dataset": {"family": "standard", "meshes": [], "per_mesh_candidates": 400, "balance": True},
        "solver": dict(_fields(SolverConfig(), skip=("seed",)), test_interval=100),
        "split": {"mode": "view", "test_fraction": 0.25, "test_object": ""},
        "detect": {"threshold": 0.5, "min_precision": 0.99},
        "selection": _fields(SelectionConfig()),
    }


def _check_type(section, key, default, value):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{section}.{key}: expected {type(default).__name__}, got {value!r}")
    return value


def merge(base, override):
    out = copy.deepcopy(base)
    for section, items in override.items():
        if section not in out:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(items, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in items.items():
            if key not in out[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            out[section][key] = _check_type(section, key, out[section][key], value)
    return out


def load(path=None, overrides=None):
    cfg = defaults()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        cfg = merge(cfg, data)
    if overrides:
        cfg = merge(cfg, overrides)
    validate(cfg)
    return cfg


def dumps(cfg):
    return tomli_w.dumps(cfg)


def validate(cfg):
    # building every object runs its own checks
    try:
        hand(cfg), solver(cfg), params(cfg), selection(cfg), render(cfg)
        Variant(cfg["encoder"]["variant"])
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    if cfg["split"]["mode"] not in ("view", "object"):
        raise ConfigError("split.mode must be 'view' or 'object'")


def hand(cfg):
    return HandGeometry(**cfg["hand"])


def solver(cfg):
    kw = {k: v for k, v in cfg["solver"].items() if k != "test_interval"}
    return SolverConfig(seed=cfg["run"]["seed"], **kw)


def params(cfg):
    return AntipodalParams(**cfg["oracle"])


def selection(cfg):
    kw = dict(cfg["selection"])
    kw["nominal_point"] = tuple(kw["nominal_point"])
    return SelectionConfig(**kw)


def render(cfg):
    kw = dict(cfg["render"])
    intr = Intrinsics(kw.pop("image_width"), kw.pop("image_height"), kw.pop("hfov_deg"))
    return RenderSettings(intrinsics=intr, **kw)
