"""
Flat key=value experiment configuration files.

    # comment
    scheme.kind=discounted
    scheme.gamma=0.7
    tracker.E=20

Keys are dotted paths into ExperimentConfig; list values are comma separated.
Overrides (`--set key=value`) are applied after the file is read.
"""

from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

from pydantic import ValidationError

from app.config import settings
from app.errors import ConfigurationError
from app.models import ExperimentConfig

# dotted key -> field path inside ExperimentConfig
KEYS: Dict[str, Tuple[str, ...]] = {
    "experiment.name": ("name",),
    "experiment.horizon": ("horizon",),
    "experiment.num_runs": ("num_runs",),
    "experiment.E_values": ("E_values",),
    "experiment.record_every": ("record_every",),
    "experiment.window_fraction": ("window_fraction",),
    "experiment.envelope_scale": ("envelope_scale",),
    "scheme.kind": ("scheme", "kind"),
    "scheme.gamma": ("scheme", "gamma"),
    "loss.mu": ("loss", "mu"),
    "loss.L": ("loss", "L"),
    "loss.C": ("loss", "C"),
    "loss.curvature": ("loss", "curvature"),
    "tracker.eta": ("tracker", "eta"),
    "tracker.E": ("tracker", "E"),
    "tracker.w0": ("tracker", "w0"),
    "walk.c_max": ("walk", "c_max"),
    "walk.sigma2": ("walk", "sigma2"),
    "walk.c0": ("walk", "c0"),
    "walk.dim": ("walk", "dim"),
    "walk.seed": ("walk", "seed"),
    "theory.epsilon": ("epsilon",),
}

LIST_KEYS = frozenset({"experiment.E_values", "loss.curvature", "tracker.w0", "walk.c0"})

_PATHS = {path: key for key, path in KEYS.items()}
_SECTIONS = {"scheme", "loss", "tracker", "walk"}


def split_assignment(line: str, where: str = "override") -> Tuple[str, str]:
    if "=" not in line:
        raise ConfigurationError(f"{where}: expected key=value, got {line!r}")
    key, value = line.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(f"{where}: empty key in {line!r}")
    return key, value.strip()


def parse_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Raw dotted-key values; blank lines and `#` comments are skipped."""
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, value = split_assignment(line, where=f"{source}:{number}")
        values[key] = value
    return values


def load_values(
    path: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
) -> Dict[str, str]:
    """File values with overrides applied on top."""
    values: Dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigurationError(f"cannot read config file {path}: {e.strerror or e}") from e
        values.update(parse_text(text, source=str(path)))
    for override in overrides:
        key, value = split_assignment(override)
        values[key] = value
    return values


def _key_for(loc: Tuple) -> str:
    parts = tuple(str(p) for p in loc)
    for size in range(len(parts), 0, -1):
        if parts[:size] in _PATHS:
            return _PATHS[parts[:size]]
    if parts and parts[0] in _SECTIONS:
        return parts[0]
    return "experiment"


def build_config(values: Mapping[str, str]) -> ExperimentConfig:
    """Validate raw values into an ExperimentConfig; errors name the dotted key."""
    tree: Dict[str, object] = {}
    for key, value in values.items():
        if key not in KEYS:
            raise ConfigurationError(f"unknown configuration key {key!r}", key=key)
        if value == "":
            continue
        parsed = [item.strip() for item in value.split(",")] if key in LIST_KEYS else value
        node = tree
        *parents, leaf = KEYS[key]
        for parent in parents:
            node = node.setdefault(parent, {})
        node[leaf] = parsed

    walk = tree.setdefault("walk", {})
    if isinstance(walk, dict):
        walk.setdefault("seed", settings.base_seed)

    try:
        return ExperimentConfig.model_validate(tree)
    except ValidationError as e:
        error = e.errors()[0]
        key = _key_for(tuple(error["loc"]))
        raise ConfigurationError(f"{key}: {error['msg']}", key=key) from e


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
) -> ExperimentConfig:
    values = load_values(path, overrides)
    if seed is not None:
        values["walk.seed"] = str(seed)
    return build_config(values)


def _format(value) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Every set field as key=value, in KEYS order; load_config reads it back unchanged."""
    lines = []
    for key, path in KEYS.items():
        value = cfg
        for part in path:
            value = getattr(value, part)
        if value is None or (key == "experiment.E_values" and not value):
            continue
        lines.append(f"{key}={_format(value)}")
    return "\n".join(lines)
