"""Experiment configuration: flat ``key = value`` text with one section per command."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

COMMANDS = ("twoqubit-scan", "bipartite-scan", "lmg-scan", "spinglass-run",
            "spinglass-histogram", "kappa-report")

# Defaults follow the figure parameters; grids bracket every quoted value.
DEFAULTS: dict[str, dict[str, str]] = {
    "twoqubit-scan": {
        "A": "0, 1, 2, 3, 4, 5",
        "T": "2, 4, 8, 16, 32, 64, 128",
        "T_fixed": "1.5",
        "dt": "0.01",
        "samples": "100",
    },
    "bipartite-scan": {
        "N": "14",
        "A": "0, 1, 2, 3, 4, 5",
        "T": "10",
        "dt": "0.01",
        "samples": "100",
    },
    "lmg-scan": {
        "N": "4",
        "T": "100, 1000, 10000",
        "dt": "0.01",
        "samples": "100",
        "shift_theta": "1e-4",
        "shift_phi": "0",
    },
    "spinglass-run": {
        "N": "8",
        "seed": "23",
        "D": "1, 2, 4, 16",
        "T": "100, 200, 400, 800, 1600, 3200",
        "dt": "0.05",
        "order": "2",
        "samples": "100",
        "trace_T": "3200",
        "instance": "",
        "oracle_T": "100, 200",
        "oracle_dt": "0.05",
        "oracle_order": "4",
    },
    "spinglass-histogram": {
        "N": "8",
        "seed": "1000",
        "instances": "100",
        "T": "1600",
        "D": "1, 2, 4, 8",
        "dt": "0.2",
        "order": "2",
        "threshold": "0.1",
        "recovery_D": "8",
    },
    "kappa-report": {
        "model": "twoqubit",
        "N": "2",
        "A": "0",
        "T": "8, 16, 32, 64, 128",
        "dt": "0.01",
        "grid": "201",
        "s_min": "0",
        "s_max": "1",
        "window": "0.05",
        "shift_theta": "1e-4",
    },
}

TEXT_KEYS = ("model", "instance")
OPTIONAL_KEYS = ("oracle_T",)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line when known."""


@dataclass
class ExperimentConfig:
    command: str
    values: dict = field(default_factory=dict)
    out: str = "out"
    workers: int = 1
    plots: bool = False
    source: str = ""

    def get(self, key: str) -> str:
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"[{self.command}] missing key {key!r}") from None

    def floats(self, key: str) -> list[float]:
        raw = self.get(key)
        try:
            out = [float(x) for x in raw.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"[{self.command}] {key} = {raw!r}: expected numbers") from None
        if not out:
            raise ConfigError(f"[{self.command}] {key} is empty")
        return out

    def optional_floats(self, key: str) -> list[float]:
        """Like :meth:`floats` but an empty value gives an empty list."""
        return self.floats(key) if self.get(key).strip() else []

    def ints(self, key: str) -> list[int]:
        vals = self.floats(key)
        if any(v != int(v) for v in vals):
            raise ConfigError(f"[{self.command}] {key}: expected integers")
        return [int(v) for v in vals]

    def float(self, key: str) -> float:
        vals = self.floats(key)
        if len(vals) != 1:
            raise ConfigError(f"[{self.command}] {key}: expected one value")
        return vals[0]

    def int(self, key: str) -> int:
        return self.ints(key)[0]

    def digest(self) -> str:
        """Hash of the command and its resolved values (order-independent)."""
        text = self.command + "\n" + "".join(f"{k}={self.values[k]}\n" for k in sorted(self.values))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def validate(self) -> None:
        for key in self.values:
            if key in TEXT_KEYS:
                continue
            self.optional_floats(key) if key in OPTIONAL_KEYS else self.floats(key)
        if "dt" in self.values and self.float("dt") <= 0:
            raise ConfigError(f"[{self.command}] dt must be positive")
        if "instances" in self.values and self.int("instances") < 1:
            raise ConfigError(f"[{self.command}] instances must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def load_config(command: str, path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve the section for ``command``: defaults, then the file, then ``overrides``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    values = dict(DEFAULTS[command])
    source = ""
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                source = fh.read()
            parser.read_string(source, source=path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if parser.has_section(command):
            for key, val in parser.items(command):
                if key not in values:
                    line = _line_of(source, command, key)
                    raise ConfigError(f"{path}:{line}: unknown key {key!r} in [{command}]")
                values[key] = val
    for key, val in (overrides or {}).items():
        values[key] = str(val)
    cfg = ExperimentConfig(command, values, source=source)
    return cfg


def _line_of(text: str, section: str, key: str) -> int:
    inside = False
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("["):
            inside = s == f"[{section}]"
        elif inside and s.split("=", 1)[0].strip() == key:
            return n
    return 0


def default_config_text() -> str:
    """All sections with their defaults, in the file format accepted by :func:`load_config`."""
    parts = []
    for cmd in COMMANDS:
        parts.append(f"[{cmd}]")
        parts.extend(f"{k} = {v}" for k, v in DEFAULTS[cmd].items())
        parts.append("")
    return "\n".join(parts)
