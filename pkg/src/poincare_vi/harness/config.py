"""Run configuration: validated settings for one integration run.

Configs come from ``key = value`` files (``#`` starts a comment, keys may use
dashes or underscores) and command-line flags, flags taking precedence.
Validation collects every problem before raising, so a bad config is
reported in one go.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

PROBLEMS = ("kepler", "harmonic", "free")
INTEGRATORS = ("euler-b", "htvi4", "euler-b-fixed", "stormer-verlet", "explicit-euler")
FIXED_INTEGRATORS = ("euler-b-fixed", "stormer-verlet", "explicit-euler")
MONITORS = ("none", "trunc", "arclength", "power", "energy")
EXPANSIONS = ("reduced", "full")


class ConfigError(ValueError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class RunConfig:
    problem: str = "kepler"
    ecc: float = 0.9
    dim: int = 1
    integrator: str = "euler-b"
    monitor: str = "none"
    tol: Optional[float] = None
    gamma: float = 1.0
    fourth_root: bool = False
    g_min: Optional[float] = None
    g_max: Optional[float] = None
    dt_min: Optional[float] = None
    dt_max: Optional[float] = None
    expansion: str = "reduced"
    h: float = 0.1
    t_end: float = 10.0
    csv: Optional[str] = None
    max_steps: int = 10 ** 8
    label: Optional[str] = None
    # published values a preset reproduces; informational only
    ref_steps: Optional[int] = None
    ref_global_error: Optional[float] = None
    ref_energy_error: Optional[float] = None

    def validate(self) -> "RunConfig":
        errs = []
        pos = lambda v: v is not None and math.isfinite(v) and v > 0
        if self.problem not in PROBLEMS:
            errs.append(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.problem == "kepler" and not (0 <= self.ecc < 1):
            errs.append(f"ecc must lie in [0, 1), got {self.ecc}")
        if self.dim < 1:
            errs.append(f"dim must be at least 1, got {self.dim}")
        if self.integrator not in INTEGRATORS:
            errs.append(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.monitor not in MONITORS:
            errs.append(f"monitor must be one of {MONITORS}, got {self.monitor!r}")
        if self.expansion not in EXPANSIONS:
            errs.append(f"expansion must be one of {EXPANSIONS}, got {self.expansion!r}")
        if not pos(self.h):
            errs.append(f"h must be positive, got {self.h}")
        if not pos(self.t_end):
            errs.append(f"t_end must be positive, got {self.t_end}")
        if self.max_steps < 1:
            errs.append("max_steps must be at least 1")
        fixed = self.integrator in FIXED_INTEGRATORS
        bounded = any(v is not None for v in (self.g_min, self.g_max, self.dt_min, self.dt_max))
        if fixed and (self.monitor != "none" or bounded):
            errs.append(f"fixed-step integrator {self.integrator!r} takes no monitor or bounds")
        if self.monitor == "trunc" and not pos(self.tol):
            errs.append("trunc monitor needs a positive tol")
        if self.monitor != "trunc" and self.tol is not None:
            errs.append("tol only applies to the trunc monitor")
        if self.monitor == "power" and not math.isfinite(self.gamma):
            errs.append("gamma must be finite")
        if self.monitor == "none" and bounded:
            errs.append("bounds need a monitor to bound")
        g_pair = (self.g_min, self.g_max)
        dt_pair = (self.dt_min, self.dt_max)
        if any(v is not None for v in g_pair) and any(v is not None for v in dt_pair):
            errs.append("give either g_min/g_max or dt_min/dt_max, not both")
        for lo_name, hi_name, lo, hi in (("g_min", "g_max", *g_pair), ("dt_min", "dt_max", *dt_pair)):
            if (lo is None) != (hi is None):
                errs.append(f"{lo_name} and {hi_name} must be given together")
            elif lo is not None and not (pos(lo) and pos(hi) and lo < hi):
                errs.append(f"need 0 < {lo_name} < {hi_name}, got {lo} and {hi}")
        if self.monitor == "trunc" and self.problem == "free" and not bounded:
            errs.append("trunc monitor is unbounded for the free particle; give bounds")
        if errs:
            raise ConfigError(errs)
        return self

    @property
    def bounds(self):
        """``(a, b)`` for the bounded monitor, or ``None``."""
        if self.g_min is not None:
            return self.g_min, self.g_max
        if self.dt_min is not None:
            return self.dt_min / self.h, self.dt_max / self.h
        return None

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(name, raw: str):
    kind = _FIELDS[name].type
    text = raw.strip()
    if "Optional" in str(kind) and text.lower() in ("", "none", "-"):
        return None
    try:
        if "bool" in str(kind):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in str(kind):
            return int(float(text)) if float(text).is_integer() else int(text)
        if "float" in str(kind):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values, errs = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(f"{source}:{lineno}: expected key = value, got {line!r}")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            errs.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw)
        except ConfigError as exc:
            errs.extend(f"{source}:{lineno}: {p}" for p in exc.problems)
    if errs:
        raise ConfigError(errs)
    return values


def load_config(path, **overrides) -> RunConfig:
    """Read a config file; non-``None`` ``overrides`` (e.g. CLI flags) win."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    values = parse_config_text(text, str(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values).validate()


def make_config(**values) -> RunConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError([f"unknown setting {k!r}" for k in unknown])
    return RunConfig(**{k: v for k, v in values.items() if v is not None}).validate()
