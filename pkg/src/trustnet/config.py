"""Scenario configuration: dataclasses, YAML loading, dotted overrides.

A config file is an overlay on :func:`default_config`; any key it sets must
exist in the schema, and every validation failure names its dotted path.
"""

from __future__ import annotations

import collections.abc
import copy
import dataclasses
import enum
import os
import types
import typing
from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .detection import ThresholdConfig
from .errors import ConfigError, FieldError
from .traffic import AttackSpec, DeviceClass, DisturbanceSpec, TrafficConfig
from .trust import KbtProfile, WeightConfig


@dataclass(frozen=True)
class DeviceClassConfig:
    service_rate: float
    buffer: int = 500
    kbt: KbtProfile = KbtProfile()
    criticality: str = "standard"

    def __post_init__(self) -> None:
        if self.service_rate <= 0:
            raise FieldError("service_rate", "service_rate must be > 0")
        if self.buffer < 1:
            raise FieldError("buffer", "buffer must be >= 1")


@dataclass(frozen=True)
class DeviceConfig:
    id: str
    device_class: DeviceClass
    criticality: str | None = None
    kbt: KbtProfile | None = None
    position: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "device_class", DeviceClass(self.device_class))
        if not self.id:
            raise FieldError("id", "device id must be non-empty")


@dataclass(frozen=True)
class TopologyConfig:
    mode: str = "star"
    hub: str = "hub"
    area: tuple[float, float] = (800.0, 600.0)
    comm_range: float = 50.0
    link_rate: float = 100e6
    hub_link_rate: float = 1e9
    max_attempts: int = 100

    def __post_init__(self) -> None:
        if self.mode not in ("star", "range"):
            raise FieldError("mode", f"mode must be 'star' or 'range', got {self.mode!r}")
        if self.area[0] <= 0 or self.area[1] <= 0:
            raise FieldError("area", "area dimensions must be > 0")
        if self.comm_range <= 0:
            raise FieldError("comm_range", "comm_range must be > 0")
        if self.link_rate <= 0:
            raise FieldError("link_rate", "link_rate must be > 0")
        if self.hub_link_rate <= 0:
            raise FieldError("hub_link_rate", "hub_link_rate must be > 0")
        if self.max_attempts < 1:
            raise FieldError("max_attempts", "max_attempts must be >= 1")


def default_classes() -> dict[str, DeviceClassConfig]:
    return {
        "camera": DeviceClassConfig(2000.0, 500, KbtProfile(0.8, 0.9, 0.8)),
        "plug": DeviceClassConfig(150.0, 500, KbtProfile(0.35, 0.3, 0.34)),
        "lamp": DeviceClassConfig(150.0, 500, KbtProfile(0.65, 0.65, 0.65)),
        "sensor": DeviceClassConfig(100.0, 500, KbtProfile(0.55, 0.5, 0.57)),
        "alarm": DeviceClassConfig(150.0, 500, KbtProfile(0.7, 0.7, 0.7)),
        "router": DeviceClassConfig(100000.0, 5000, KbtProfile(1.0, 1.0, 1.0), "router"),
    }


DEFAULT_FLEET = {"camera": 2, "plug": 3, "lamp": 1, "sensor": 1, "alarm": 1}
NAME_PREFIX = {"camera": "cam", "plug": "plug", "lamp": "lamp", "sensor": "sensor", "alarm": "alarm"}


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 1
    duration: float = 1800.0
    sample_interval: float = 1.0
    topology: TopologyConfig = TopologyConfig()
    # explicit device list; when empty the fleet counts are expanded instead
    devices: tuple[DeviceConfig, ...] = ()
    fleet: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_FLEET))
    classes: Mapping[str, DeviceClassConfig] = field(default_factory=default_classes)
    weights: WeightConfig = WeightConfig()
    thresholds: ThresholdConfig = ThresholdConfig()
    traffic: TrafficConfig = TrafficConfig()
    attacks: tuple[AttackSpec, ...] = ()
    disturbances: tuple[DisturbanceSpec, ...] = ()
    repository: str = "min"
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise FieldError("duration", "duration must be > 0")
        if self.sample_interval <= 0:
            raise FieldError("sample_interval", "sample_interval must be > 0")
        if self.repository not in ("min", "mean", "off"):
            raise FieldError("repository", "repository must be one of min, mean, off")
        for name, count in self.fleet.items():
            if name not in NAME_PREFIX:
                raise FieldError("fleet", f"unknown device class {name!r} in fleet")
            if count < 0:
                raise FieldError("fleet", f"fleet count for {name!r} must be >= 0")


def resolve_devices(cfg: ScenarioConfig) -> list[DeviceConfig]:
    """Hub first, then the devices in config order (explicit list or expanded fleet)."""
    hub = DeviceConfig(cfg.topology.hub, DeviceClass.ROUTER)
    if cfg.devices:
        devices = [d for d in cfg.devices if d.id != cfg.topology.hub]
        given_hub = [d for d in cfg.devices if d.id == cfg.topology.hub]
        if given_hub:
            hub = given_hub[0]
        return [hub, *devices]
    out = [hub]
    for cls_name in NAME_PREFIX:
        for i in range(cfg.fleet.get(cls_name, 0)):
            out.append(DeviceConfig(f"{NAME_PREFIX[cls_name]}{i + 1}", DeviceClass(cls_name)))
    return out


def scaled_fleet(base: Mapping[str, int], size: int) -> dict[str, int]:
    """Replicate the class mix of ``base`` to ``size`` devices (largest remainder)."""
    total = sum(base.values())
    if total <= 0:
        raise ValueError("base fleet is empty")
    exact = {k: v * size / total for k, v in base.items()}
    counts = {k: int(x) for k, x in exact.items()}
    order = sorted(base, key=lambda k: (-(exact[k] - counts[k]), list(base).index(k)))
    for k in order[: size - sum(counts.values())]:
        counts[k] += 1
    return counts


def default_config() -> ScenarioConfig:
    return ScenarioConfig()


# ---------------------------------------------------------------- conversion


def to_plain(value: Any) -> Any:
    """Dataclasses to nested dicts/lists of YAML-safe scalars."""
    if dataclasses.is_dataclass(value):
        return {f.name: to_plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, Mapping):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    return value


def _type_name(tp: Any) -> str:
    return getattr(tp, "__name__", str(tp))


def _convert(tp: Any, value: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        errors = []
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _convert(arg, value, path)
            except ConfigError as exc:
                errors.append(exc.message)
        raise ConfigError(path, "; ".join(errors))
    if tp is Any:
        return value
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            allowed = ", ".join(str(m.value) for m in tp)
            raise ConfigError(path, f"expected one of {allowed}, got {value!r}") from None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}.{i}") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(path, f"expected {len(args)} items, got {len(value)}")
        return tuple(_convert(a, v, f"{path}.{i}") for i, (a, v) in enumerate(zip(args, value)))
    if origin in (dict, collections.abc.Mapping):
        if not isinstance(value, Mapping):
            raise ConfigError(path, f"expected a mapping, got {value!r}")
        ktype, vtype = args
        return {_convert(ktype, k, path): _convert(vtype, v, f"{path}.{k}") for k, v in value.items()}
    raise ConfigError(path, f"unsupported type {_type_name(tp)}")


def from_dict(cls: type, data: Any, path: str = "") -> Any:
    if isinstance(data, cls):
        return data
    if not isinstance(data, Mapping):
        raise ConfigError(path, f"expected a mapping for {cls.__name__}, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        key = unknown[0]
        raise ConfigError(_join(path, str(key)), f"unknown key (allowed: {', '.join(sorted(names))})")
    kwargs = {k: _convert(hints[k], v, _join(path, k)) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except FieldError as exc:
        raise ConfigError(_join(path, exc.field), str(exc)) from None
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _merge(base: Any, overlay: Any) -> Any:
    if isinstance(base, dict) and isinstance(overlay, Mapping):
        out = dict(base)
        for k, v in overlay.items():
            out[k] = _merge(base[k], v) if k in base else v
        return out
    return overlay


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigError("", f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError("", f"override {text!r} has an empty key")
    return key.split("."), yaml.safe_load(raw) if raw.strip() else ""


def apply_override(data: dict, parts: list[str], value: Any) -> None:
    node: Any = data
    for i, part in enumerate(parts[:-1]):
        node = _child(node, part, ".".join(parts[: i + 1]))
    last = parts[-1]
    if isinstance(node, list):
        node[_index(node, last, ".".join(parts))] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ConfigError(".".join(parts[:-1]), "cannot override inside a scalar")


def _index(node: list, part: str, path: str) -> int:
    try:
        idx = int(part)
    except ValueError:
        raise ConfigError(path, "list index must be an integer") from None
    if not (0 <= idx < len(node)):
        raise ConfigError(path, f"index out of range (length {len(node)})")
    return idx


def _child(node: Any, part: str, path: str) -> Any:
    if isinstance(node, list):
        return node[_index(node, part, path)]
    if isinstance(node, dict):
        if part not in node:
            node[part] = {}
        return node[part]
    raise ConfigError(path, "cannot descend into a scalar")


def validate(cfg: ScenarioConfig) -> None:
    """Cross-section checks that single dataclasses cannot perform."""
    devices = resolve_devices(cfg)
    ids = [d.id for d in devices]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ConfigError("devices", f"duplicate device ids {dupes}")
    if len(devices) < 2:
        raise ConfigError("devices", "need at least one device besides the hub")
    known = set(ids)
    for d in devices:
        cls_name = d.device_class.value
        if cls_name not in cfg.classes:
            raise ConfigError("classes", f"no class profile for {cls_name!r}")
        crit = d.criticality or cfg.classes[cls_name].criticality
        if crit not in cfg.thresholds.criticality_offsets:
            raise ConfigError("thresholds.criticality_offsets", f"no offset for criticality {crit!r}")
    w = cfg.weights
    ratio = w.update_interval / cfg.sample_interval
    if abs(ratio - round(ratio)) > 1e-9:
        raise ConfigError("weights.update_interval", "must be a whole multiple of sample_interval")
    # the simulator only revisits requests from the previous tick when settling replies
    if cfg.traffic.response_deadline > w.update_interval:
        raise ConfigError("traffic.response_deadline", "must not exceed weights.update_interval")
    for name in ("sample_interval", "duration"):
        v = getattr(cfg, name)
        if abs(v * 1e6 - round(v * 1e6)) > 1e-6:
            raise ConfigError(name, "must be a whole number of microseconds")
    for i, a in enumerate(cfg.attacks):
        p = f"attacks.{i}"
        if a.attacker not in known or a.attacker == cfg.topology.hub:
            raise ConfigError(f"{p}.attacker", f"unknown attacker {a.attacker!r}")
        if a.targets != "random":
            bad = [t for t in a.targets if t not in known or t == a.attacker]
            if bad:
                raise ConfigError(f"{p}.targets", f"invalid targets {bad}")
        if a.end > cfg.duration:
            raise ConfigError(f"{p}.duration", "attack window extends past the scenario duration")
    for i, d in enumerate(cfg.disturbances):
        if d.node not in known or d.node == cfg.topology.hub:
            raise ConfigError(f"disturbances.{i}.node", f"unknown node {d.node!r}")


def build_config(data: Mapping[str, Any] | None = None, overrides: list[str] | tuple[str, ...] = ()) -> ScenarioConfig:
    raw = _merge(to_plain(default_config()), copy.deepcopy(dict(data or {})))
    for text in overrides:
        parts, value = parse_override(text)
        apply_override(raw, parts, value)
    cfg = from_dict(ScenarioConfig, raw)
    validate(cfg)
    return cfg


def load_config(
    path: str | os.PathLike | None,
    overrides: list[str] | tuple[str, ...] = (),
    *,
    env: Mapping[str, str] | None = None,
) -> ScenarioConfig:
    data: Any = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("", f"cannot parse {path}: {exc}") from None
        if not isinstance(data, Mapping):
            raise ConfigError("", f"{path} must contain a mapping at the top level")
    cfg = build_config(data, overrides)
    env = os.environ if env is None else env
    seed = env.get("TRUSTNET_SEED")
    if seed:
        try:
            cfg = dataclasses.replace(cfg, seed=int(seed))
        except ValueError:
            raise ConfigError("seed", f"TRUSTNET_SEED must be an integer, got {seed!r}") from None
    return cfg


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_plain(cfg), sort_keys=True)
