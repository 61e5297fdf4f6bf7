"""Run configuration files.

A run config is an INI-style document: one ``[section]`` per component,
``key = value`` lines inside. Unknown sections and keys are rejected;
missing keys take the component defaults. Relative paths are resolved
against the directory holding the config file. Environment variables are
never consulted.

Example::

    [data]
    root = drive

    [model]
    depth = 4
    base_channels = 64

    [train]
    epochs = 50
"""

import configparser
import dataclasses
import os
from dataclasses import dataclass, field, fields

from .augment import AugmentSpec
from .clahe import ClaheConfig
from .dataset import SplitSpec
from .errors import ConfigError, ParameterError
from .losses import LossConfig
from .training import TrainConfig
from .unet import UNetConfig


@dataclass(frozen=True)
class DataConfig:
    root: str = "data"


@dataclass(frozen=True)
class PreprocessConfig:
    size: int = 512
    grayscale: str = "luma"
    clahe: bool = True

    def __post_init__(self):
        if self.size < 1:
            raise ParameterError(f"size must be >= 1, got {self.size}")
        if self.grayscale not in ("luma", "green"):
            raise ParameterError(f"grayscale must be 'luma' or 'green', got {self.grayscale!r}")


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    clahe: ClaheConfig = field(default_factory=ClaheConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    model: UNetConfig = field(default_factory=UNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def clahe_or_none(self):
        return self.clahe if self.preprocess.clahe else None


SECTIONS = tuple(f.name for f in fields(RunConfig))


def _parse_value(raw, default, where):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(p.strip() for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return raw


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(str(p) for p in v)
    return str(v)


def parse_run_config(text, base_dir="."):
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")

    defaults = RunConfig()
    built = {}
    for section in SECTIONS:
        proto = getattr(defaults, section)
        values = {}
        if parser.has_section(section):
            known = {f.name: f for f in fields(proto)}
            for key, raw in parser.items(section):
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                values[key] = _parse_value(raw, getattr(proto, key), f"[{section}] {key}")
        try:
            built[section] = dataclasses.replace(proto, **values)
        except ParameterError as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
    root = built["data"].root
    if not os.path.isabs(root):
        built["data"] = DataConfig(root=os.path.normpath(os.path.join(base_dir, root)))
    return RunConfig(**built)


def load_run_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_run_config(text, os.path.dirname(os.path.abspath(path)))


def dump_run_config(cfg):
    """Canonical text form: every section and key, in declaration order."""
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        sub = getattr(cfg, section)
        for f in fields(sub):
            lines.append(f"{f.name} = {_format_value(getattr(sub, f.name))}")
        lines.append("")
    return "\n".join(lines)
