"""Flat ``key = value`` run configuration.

Every training setting plus file locations. Lines starting with ``#`` and
blank lines are ignored. Relative paths are resolved against the directory
of the config file.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from moegan.training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    corpus: str = "train.txt"
    test_corpus: str = "test.txt"
    vocab: str = "vocab.txt"
    oracle: str = "oracle.moeg"  # empty: no oracle metric
    out_dir: str = "run"
    ablation_seeds: tuple[int, ...] = (1, 2, 3)
    base_dir: Path = field(default=Path("."), repr=False)

    PATH_KEYS = ("corpus", "test_corpus", "vocab", "oracle", "out_dir")

    def path(self, key: str) -> Path | None:
        value = getattr(self, key)
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def items(self) -> list[tuple[str, object]]:
        out = [(f.name, getattr(self.train, f.name)) for f in dataclasses.fields(TrainConfig)]
        out += [(k, getattr(self, k)) for k in self.PATH_KEYS]
        out.append(("ablation_seeds", self.ablation_seeds))
        return out

    def text(self) -> str:
        """Effective configuration with every default resolved."""
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.items())

    def with_train(self, **changes) -> RunConfig:
        return dataclasses.replace(self, train=dataclasses.replace(self.train, **changes))


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parser_for(default):
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        return lambda raw: tuple(int(v) for v in raw.split(",") if v.strip())
    return str


def parse_config(text: str, base_dir=".") -> RunConfig:
    train_defaults = TrainConfig()
    run_defaults = RunConfig()
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    run_fields = set(RunConfig.PATH_KEYS) | {"ablation_seeds"}
    train_values, run_values = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in train_fields:
            target, default = train_values, getattr(train_defaults, key)
        elif key in run_fields:
            target, default = run_values, getattr(run_defaults, key)
        else:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        if key in target:
            raise ConfigError(f"duplicate config key {key!r} (line {lineno})")
        try:
            target[key] = _parser_for(default)(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for config key {key!r} (line {lineno}): {exc}") from None
    try:
        train = TrainConfig(**train_values)
    except ValueError as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    cfg = RunConfig(train=train, base_dir=Path(base_dir), **run_values)
    if not cfg.ablation_seeds:
        raise ConfigError("ablation_seeds must list at least one seed")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)
