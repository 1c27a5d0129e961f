"""Experiment configuration: defaults, flat ``key = value`` files and validation.

Precedence is defaults < config file < command-line flags. Every value is
validated before a simulation starts, and error messages name the key.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    text = str(text).strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    text = str(text).strip()
    return tuple(int(v) for v in text.split(",")) if text else ()


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Param:
    parse: Callable[[Any], Any]
    default: Any
    check: Callable[[Any], bool] = lambda v: True
    rule: str = ""
    help: str = ""


positive = dict(check=lambda v: v > 0, rule="must be positive")
non_negative = dict(check=lambda v: v >= 0, rule="must be non-negative")

SCHEMAS: dict[str, dict[str, Param]] = {
    "torus": {
        "N": Param(int, 2, **positive, help="number of Fourier modes"),
        "gamma": Param(float, 1.0, **non_negative, help="deposition rate"),
        "beta": Param(float, 1.0, **positive, help="inverse temperature"),
        "dt": Param(float, 1e-3, **positive, help="Euler-Maruyama step"),
        "horizon": Param(float, 1e4, **positive, help="simulated time"),
        "grid": Param(int, 128, **positive, help="number of output angles"),
        "cos": Param(_floats, (0.0, 1.0), help="cosine coefficients of F"),
        "sin": Param(_floats, (0.5, 0.0), help="sine coefficients of F"),
        "allow_violation": Param(_bool, False, help="permit N below the degree of F"),
    },
    "discrete": {
        "K": Param(int, 2, **positive, help="number of edges"),
        "A": Param(_floats, (), help="free energies A_0..A_K (flat when empty)"),
        "beta": Param(float, 1.0, **positive, help="inverse temperature"),
        "gamma": Param(float, 1.0, **positive, help="deposition rate"),
        "horizon": Param(float, 1e4, **positive, help="simulated time"),
        "i0": Param(int, 0, **non_negative, help="starting site"),
        "batches": Param(int, 32, check=lambda v: v >= 16, rule="must be at least 16"),
        "sand_check": Param(_bool, False, help="also report the sand identity residual"),
    },
    "rayknight-validate": {
        "K": Param(int, 1, **positive, help="number of edges"),
        "j": Param(int, 0, **non_negative, help="anchor site"),
        "i0": Param(int, 0, **non_negative, help="starting site"),
        "r": Param(float, 1.0, **positive, help="target local time at the anchor"),
        "beta": Param(float, 1.0, **positive, help="inverse temperature"),
    },
    "nonadiabatic-2d": {
        "gamma": Param(float, 1.0, **non_negative, help="deposition rate"),
        "beta": Param(float, 0.02, **positive, help="inverse temperature"),
        "dt": Param(float, 1e-4, **positive, help="Euler-Maruyama step"),
        "horizon": Param(float, 1e3, **positive, help="simulated time"),
        "I": Param(int, 40, check=lambda v: v >= 3, rule="must be at least 3"),
        "x0": Param(float, 0.0, help="initial x"),
        "y0": Param(float, 6.0, help="initial y"),
    },
    "bins": {
        "V": Param(_floats, (0.0, 2.0, 2.0, 0.5), help="site potential V_0..V_K"),
        "bins": Param(_ints, (0, 0, 1, 1), help="bin index of every site"),
        "beta": Param(float, 1.0, **positive, help="inverse temperature"),
        "gamma": Param(float, 1.0, **positive, help="deposition rate"),
        "horizon": Param(float, 1e5, **positive, help="simulated time"),
        "i0": Param(int, 0, **non_negative, help="starting site"),
    },
    "simp": {
        "beta": Param(float, 1.0, **positive, help="inverse temperature"),
        "gamma": Param(float, 1.0, **positive, help="deposition rate"),
        "d_plus": Param(float, 1.5, **positive, help="barrier D_+"),
        "d_minus": Param(float, 2.0, **positive, help="barrier D_-"),
        "horizon": Param(float, 1e5, **positive, help="simulated time"),
        "grid": Param(int, 200, **positive, help="number of density bins"),
    },
}

GLOBALS: dict[str, Param] = {
    "seed": Param(int, 0, **non_negative, help="master seed"),
    "replicas": Param(int, 1, **positive, help="number of independent replicas"),
    "out": Param(str, "out", help="output directory"),
}


@dataclass
class ExperimentConfig:
    command: str
    params: dict[str, Any]
    seed: int = 0
    replicas: int = 1
    out: Path = field(default_factory=lambda: Path("out"))

    def as_lines(self) -> list[str]:
        lines = [f"command = {self.command}", f"seed = {self.seed}", f"replicas = {self.replicas}", f"out = {self.out}"]
        for key, value in self.params.items():
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            lines.append(f"{key} = {value}")
        return lines

    def write_sidecar(self, path: Path):
        path.write_text("\n".join(self.as_lines()) + "\n", encoding="utf-8")


def read_config_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    entries = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = value
    return entries


def _coerce(key: str, param: Param, raw):
    try:
        value = param.parse(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None
    if not param.check(value):
        raise ConfigError(f"{key}: {param.rule} (got {value!r})")
    return value


def build_config(command: str, file_values: dict | None = None, flag_values: dict | None = None) -> ExperimentConfig:
    """Merge defaults, file entries and flags into a validated configuration."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = SCHEMAS[command]
    merged: dict[str, Any] = {}
    for source in (file_values or {}, flag_values or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            if key == "command":
                if raw != command:
                    raise ConfigError(f"command: file is for {raw!r}, not {command!r}")
                continue
            if key not in schema and key not in GLOBALS:
                raise ConfigError(f"{key}: unknown key for {command!r}")
            merged[key] = raw
    values = {}
    for key, param in {**GLOBALS, **schema}.items():
        values[key] = _coerce(key, param, merged[key]) if key in merged else param.default
    cfg = ExperimentConfig(
        command=command,
        params={k: values[k] for k in schema},
        seed=values["seed"],
        replicas=values["replicas"],
        out=Path(values["out"]),
    )
    _cross_check(cfg)
    return cfg


def _cross_check(cfg: ExperimentConfig):
    p = cfg.params
    if cfg.command == "torus":
        if len(p["cos"]) != len(p["sin"]):
            raise ConfigError("cos: needs as many coefficients as sin")
    elif cfg.command == "discrete":
        if p["A"] and len(p["A"]) != p["K"] + 1:
            raise ConfigError(f"A: needs K+1 = {p['K'] + 1} values, got {len(p['A'])}")
        if p["i0"] > p["K"]:
            raise ConfigError(f"i0: must lie in 0..K = 0..{p['K']}")
    elif cfg.command == "rayknight-validate":
        for key in ("j", "i0"):
            if p[key] > p["K"]:
                raise ConfigError(f"{key}: must lie in 0..K = 0..{p['K']}")
    elif cfg.command == "bins":
        if len(p["V"]) != len(p["bins"]):
            raise ConfigError("bins: needs one bin index per entry of V")
        if p["i0"] >= len(p["V"]):
            raise ConfigError("i0: outside the sites of V")
