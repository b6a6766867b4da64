"""Sweep configuration read from a flat ``key = value`` text file.

Example::

    # frame length sweep at two PA settings
    soi_tx_db = -10
    si_tx_db = 0
    hpr3_db = 200, 35
    n_symbols = 10, 25, 50, 100
    trials = 20
    seed = 1
    noise_power_db = -40

List-valued keys take comma-separated values; every combination is one
sweep point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields
from pathlib import Path

CHANNEL_MODELS = ("flat", "multipath")
LIST_KEYS = ("soi_tx_db", "si_tx_db", "hpr3_db", "n_symbols")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepPoint:
    soi_tx_db: float
    si_tx_db: float
    hpr3_db: float
    n_symbols: int


@dataclass
class SweepConfig:
    soi_tx_db: list[float] = field(default_factory=lambda: [-10.0])
    si_tx_db: list[float] = field(default_factory=lambda: [0.0])
    hpr3_db: list[float] = field(default_factory=lambda: [200.0])
    n_symbols: list[int] = field(default_factory=lambda: [100])
    trials: int = 10
    seed: int = 0
    noise_power_db: float = -40.0
    channel: str = "flat"
    n_taps: int = 4
    modulation: int = 4
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        for key in LIST_KEYS:
            if not getattr(self, key):
                raise ConfigError(f"{key} needs at least one value")
        for h in self.hpr3_db:
            if not 0 <= h <= 200:
                raise ConfigError(f"hpr3_db value {h} outside [0, 200]")
        for n in self.n_symbols:
            if n < 4:
                raise ConfigError(f"n_symbols value {n} too small (need >= 4)")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.channel not in CHANNEL_MODELS:
            raise ConfigError(f"channel must be one of {CHANNEL_MODELS}")
        if not 1 <= self.n_taps <= 17:
            raise ConfigError("n_taps must lie in [1, 17]")
        if self.modulation not in (4, 16, 64):
            raise ConfigError("modulation must be 4, 16 or 64")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def points(self) -> list[SweepPoint]:
        return [SweepPoint(*p) for p in itertools.product(
            self.soi_tx_db, self.si_tx_db, self.hpr3_db, self.n_symbols)]

    @property
    def noise_power(self) -> float:
        return 10.0 ** (self.noise_power_db / 10.0)


def _convert(key, raw, kind):
    try:
        if key in LIST_KEYS:
            items = [v.strip() for v in raw.split(",") if v.strip()]
            return [kind(v) for v in items]
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text: str) -> SweepConfig:
    kinds = {"soi_tx_db": float, "si_tx_db": float, "hpr3_db": float, "n_symbols": int,
             "trials": int, "seed": int, "noise_power_db": float, "channel": str,
             "n_taps": int, "modulation": int, "jobs": int}
    known = {f.name for f in fields(SweepConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, kinds[key])
    return SweepConfig(**values)


def load_config(path) -> SweepConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
