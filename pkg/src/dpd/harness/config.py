"""Run configuration: one TOML or JSON file with one table per subsystem.

Tables: ``kinematics``, ``reward``, ``uncertainty``, ``arbitration``,
``fusion`` and ``reasoner`` (the latter may hold ``camera`` and ``rules``
sub-tables).  Every key is optional and falls back to its documented default.

Environment overrides:

* ``DPD_CONFIG`` names the config file when none is passed explicitly.
* ``DPD__<TABLE>__<KEY>=<json value>`` overrides a single key, e.g.
  ``DPD__REWARD__SIGMA_COLL=3``.  Sub-tables use a third component:
  ``DPD__REASONER__CAMERA__FOV=1.2``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..arbitration import SwitchConfig
from ..fast_pathway import KinematicsConfig
from ..fusion import FusionConfig
from ..reward import RewardWeights
from ..slow_pathway.external import ReasonerConfig
from ..slow_pathway.prompts import CameraConfig
from ..slow_pathway.rules import RuleParams
from ..uncertainty import UncertaintyConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_CONFIG = "DPD_CONFIG"
ENV_PREFIX = "DPD__"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    kinematics: KinematicsConfig = field(default_factory=KinematicsConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    arbitration: SwitchConfig = field(default_factory=SwitchConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    rules: RuleParams = field(default_factory=RuleParams)

    def to_dict(self) -> dict[str, Any]:
        reasoner = _plain(dataclasses.asdict(self.reasoner))
        reasoner["camera"] = _plain(dataclasses.asdict(self.camera))
        reasoner["rules"] = _plain(dataclasses.asdict(self.rules))
        return {
            "kinematics": _plain(dataclasses.asdict(self.kinematics)),
            "reward": _plain(dataclasses.asdict(self.reward)),
            "uncertainty": _plain(dataclasses.asdict(self.uncertainty)),
            "arbitration": _plain(dataclasses.asdict(self.arbitration)),
            "fusion": _plain(dataclasses.asdict(self.fusion)),
            "reasoner": reasoner,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _plain(d: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


_TABLES = {
    "kinematics": KinematicsConfig,
    "reward": RewardWeights,
    "uncertainty": UncertaintyConfig,
    "arbitration": SwitchConfig,
    "fusion": FusionConfig,
    "reasoner": ReasonerConfig,
}
_SUBTABLES = {"camera": CameraConfig, "rules": RuleParams}


def _build(cls, values: Mapping[str, Any], ctx: str):
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(names))
    if unknown:
        raise ConfigError(f"{ctx}: unknown key(s) {', '.join(unknown)}")
    kw = {}
    for k, v in values.items():
        kw[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{ctx}: {exc}") from None


def config_from_dict(data: Mapping[str, Any]) -> Config:
    unknown = sorted(set(data) - set(_TABLES))
    if unknown:
        raise ConfigError(f"unknown config table(s): {', '.join(unknown)}")
    parts: dict[str, Any] = {}
    for name, cls in _TABLES.items():
        table = dict(data.get(name, {}))
        if name == "reasoner":
            for sub, sub_cls in _SUBTABLES.items():
                parts[sub] = _build(sub_cls, table.pop(sub, {}), f"reasoner.{sub}")
        parts[name] = _build(cls, table, name)
    return Config(**parts)


def _read(path: Path) -> dict:
    text = path.read_bytes()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode("utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _apply_env(data: dict, environ: Mapping[str, str]) -> dict:
    data = json.loads(json.dumps(data))
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX):].split("__")]
        if len(path) < 2:
            raise ConfigError(f"{key}: expected {ENV_PREFIX}<TABLE>__<KEY>")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = value
    return data


def load_config(path: str | Path | None = None, environ: Mapping[str, str] | None = None) -> Config:
    environ = os.environ if environ is None else environ
    if path is None and environ.get(ENV_CONFIG):
        path = environ[ENV_CONFIG]
    data = _read(Path(path)) if path is not None else {}
    return config_from_dict(_apply_env(data, environ))
