"""Flat dotted-key configuration files.

One ``section.key = value`` assignment per line; ``#`` starts a comment.
Values are JSON literals (numbers, ``true``/``false``, ``"strings"``,
``[lists]``); a bare word is read as a string.  Example::

    sweep.scenario = "shear_analytic"
    sweep.nu_list = [1e-2, 1e-3, 1e-4]
    criteria.rho = [0.05, 0.1]
"""

from __future__ import annotations

import json
import math
import re
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

SCENARIOS = ("shear_analytic", "shear_numeric", "perturbed_shear", "snapshot_replay")
GRID_POLICIES = ("fixed", "refined")
CHECKS = ("rate", "identity", "complete")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSection:
    scenario: str = "shear_analytic"
    nu_list: list = field(default_factory=list)
    T: float = 1.0
    t_min: float = 0.0  # 0 selects 1e-3 * T
    samples: int = 41
    spacing: str = "geometric"
    jobs: int = 1


@dataclass(frozen=True)
class GridSection:
    policy: str = "fixed"
    nx: int = 32
    ny: int = 257
    length_x1: float = 2.0 * math.pi
    height_x2: float = 4.0
    top_bc: str = "free_slip"
    grading: float = 1.0
    cells_per_layer: float = 8.0


@dataclass(frozen=True)
class FlowSection:
    U0: float = 1.0
    amplitude: float = 0.1
    mode: int = 1
    length_scale: float = 0.5
    snapshot_dir: str = ""


@dataclass(frozen=True)
class CorrectorSection:
    scale: str = "prandtl"
    a: float = 0.5
    eta: bool = True


@dataclass(frozen=True)
class CriteriaSection:
    C: float = 1.0
    a: float = 0.5
    c: float = 0.5
    rho: list = field(default_factory=lambda: [0.01, 0.05, 0.1, 0.5])


@dataclass(frozen=True)
class SolverSection:
    cfl: float = 0.4
    diffusion_safety: float = 0.25


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    svg: bool = True


@dataclass(frozen=True)
class ChecksSection:
    enabled: list = field(default_factory=lambda: ["complete"])
    rate_exponent: float = 0.25
    rate_tol: float = 0.02
    identity_tol: float = 1e-2


SECTIONS = {
    "sweep": SweepSection,
    "grid": GridSection,
    "flow": FlowSection,
    "corrector": CorrectorSection,
    "criteria": CriteriaSection,
    "solver": SolverSection,
    "output": OutputSection,
    "checks": ChecksSection,
}


@dataclass(frozen=True)
class SweepConfig:
    sweep: SweepSection = field(default_factory=SweepSection)
    grid: GridSection = field(default_factory=GridSection)
    flow: FlowSection = field(default_factory=FlowSection)
    corrector: CorrectorSection = field(default_factory=CorrectorSection)
    criteria: CriteriaSection = field(default_factory=CriteriaSection)
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputSection = field(default_factory=OutputSection)
    checks: ChecksSection = field(default_factory=ChecksSection)

    def __post_init__(self):
        validate(self)

    @property
    def nu0(self) -> float:
        return max(self.sweep.nu_list) if self.sweep.nu_list else 0.0

    @property
    def t_min(self) -> float:
        return self.sweep.t_min if self.sweep.t_min > 0 else 1e-3 * self.sweep.T

    def echo(self) -> dict:
        return {name: {f.name: getattr(getattr(self, name), f.name) for f in fields(sec)}
                for name, sec in SECTIONS.items()}

    def with_values(self, **dotted) -> SweepConfig:
        """Copy with ``section__key=value`` overrides."""
        parts = {}
        for k, v in dotted.items():
            sec, key = k.split("__", 1)
            parts.setdefault(sec, {})[key] = v
        return replace(self, **{s: replace(getattr(self, s), **kv) for s, kv in parts.items()})


def valid_keys() -> list[str]:
    return [f"{name}.{f.name}" for name, sec in SECTIONS.items() for f in fields(sec)]


def _field_types(sec) -> dict:
    hints = typing.get_type_hints(sec)
    return {f.name: hints[f.name] for f in fields(sec)}


def validate(cfg: SweepConfig) -> None:
    s = cfg.sweep
    if s.scenario not in SCENARIOS:
        raise ConfigError(f"sweep.scenario must be one of {SCENARIOS}, got {s.scenario!r}")
    nus = list(s.nu_list)
    if any(not isinstance(v, (int, float)) or v <= 0 for v in nus):
        raise ConfigError("sweep.nu_list entries must be positive numbers")
    if any(b >= a for a, b in zip(nus, nus[1:])):
        raise ConfigError(f"sweep.nu_list must be strictly decreasing, got {nus}")
    if not s.T > 0:
        raise ConfigError("sweep.T must be positive")
    if s.t_min < 0 or (s.t_min > 0 and s.t_min >= s.T):
        raise ConfigError("sweep.t_min must lie in (0, T); 0 selects 1e-3 * T")
    if s.samples < 3:
        raise ConfigError("sweep.samples must be at least 3 for the energy audit")
    if s.spacing not in ("geometric", "linear"):
        raise ConfigError("sweep.spacing must be 'geometric' or 'linear'")
    if s.jobs < 1:
        raise ConfigError("sweep.jobs must be >= 1")
    if cfg.grid.policy not in GRID_POLICIES:
        raise ConfigError(f"grid.policy must be one of {GRID_POLICIES}")
    if cfg.corrector.scale not in ("prandtl", "power"):
        raise ConfigError("corrector.scale must be 'prandtl' or 'power'")
    if any(not r > 0 for r in cfg.criteria.rho):
        raise ConfigError("criteria.rho entries must be positive")
    unknown = set(cfg.checks.enabled) - set(CHECKS)
    if unknown:
        raise ConfigError(f"unknown checks {sorted(unknown)}; valid: {CHECKS}")


_BARE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-/]*$")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if _BARE.match(text):
            return text
        raise


def _coerce(value, typ, where: str):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false, got {value!r}")
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if typ is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return [float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v for v in value]
    raise ConfigError(f"{where}: unsupported type {typ}")


def loads(text: str, source: str = "<config>") -> SweepConfig:
    values: dict[str, dict] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'section.key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if "." not in key or key.split(".", 1)[0] not in SECTIONS:
            raise ConfigError(f"{where}: unknown key {key!r}; valid keys: {', '.join(valid_keys())}")
        sec, name = key.split(".", 1)
        types = _field_types(SECTIONS[sec])
        if name not in types:
            raise ConfigError(f"{where}: unknown key {key!r}; valid keys: {', '.join(valid_keys())}")
        if key in seen:
            raise ConfigError(f"{where}: {key} already set on line {seen[key]}")
        seen[key] = lineno
        try:
            parsed = _parse_value(val)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{where}: cannot parse value for {key}: {exc.msg}") from None
        values.setdefault(sec, {})[name] = _coerce(parsed, types[name], f"{where}: {key}")
    try:
        return SweepConfig(**{sec: SECTIONS[sec](**kv) for sec, kv in values.items()})
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        if ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out).strip()


def load_config(path) -> SweepConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text, str(path))


def dumps(cfg: SweepConfig) -> str:
    """Every key, one per line; ``loads(dumps(c)) == c``."""
    lines = []
    for name, sec in SECTIONS.items():
        part = getattr(cfg, name)
        for f in fields(sec):
            lines.append(f"{name}.{f.name} = {json.dumps(getattr(part, f.name))}")
        lines.append("")
    return "\n".join(lines)
