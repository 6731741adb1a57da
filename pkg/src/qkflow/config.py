"""Run configuration: a flat INI file with one section per concern.

Example::

    [run]
    kind = flow
    n = 2
    k = 1
    t_final = 0.2

    [domain]
    lower = -0.5, -0.5
    upper = 0.5, 0.5
    h = 0.03125

    [initial]
    profile = shrinking_cap
    R0 = 1.0

    [boundary]
    type = exact

    [monitors]
    names = sphere_radius_law, pinching
    max_v.R = 0.5

Unknown keys are rejected so typos fail loudly.  ``serialize`` writes every
field, and ``parse(serialize(cfg)) == cfg`` holds for any valid config.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SCHEMES = ("euler", "rk2")
POLICIES = ("abort", "flag")
BOUNDARIES = ("exact", "fixed", "periodic")
KINDS = ("flow", "translator")

# field name -> (section, key)
_LAYOUT = {
    "kind": ("run", "kind"),
    "n": ("run", "n"),
    "k": ("run", "k"),
    "seed": ("run", "seed"),
    "t_final": ("run", "t_final"),
    "safety": ("run", "safety"),
    "dt_max": ("run", "dt_max"),
    "record_every": ("run", "record_every"),
    "scheme": ("run", "scheme"),
    "cone_policy": ("run", "cone_policy"),
    "monitor_policy": ("run", "monitor_policy"),
    "threads": ("run", "threads"),
    "lower": ("domain", "lower"),
    "upper": ("domain", "upper"),
    "h": ("domain", "h"),
    "r_max": ("domain", "r_max"),
    "initial": ("initial", "profile"),
    "initial_path": ("initial", "path"),
    "bc": ("boundary", "type"),
    "monitors": ("monitors", "names"),
    "relax": ("translator", "relax"),
    "relax_h": ("translator", "relax_h"),
    "relax_half_width": ("translator", "relax_half_width"),
    "relax_rtol": ("translator", "relax_rtol"),
    "relax_initial": ("translator", "relax_initial"),
    "relax_curvature": ("translator", "relax_curvature"),
    "max_steps": ("translator", "max_steps"),
    "growth_lo": ("translator", "growth_lo"),
    "growth_hi": ("translator", "growth_hi"),
    "panel_center": ("translator", "panel_center"),
    "panel_radii": ("translator", "panel_radii"),
}

TOLERANCE_DEFAULTS = {
    "cone_rtol": 1e-9,
    "pinch_tol": 1e-10,
    "radius_law_tol": 5e-3,
    "max_v_tol": 1e-3,
    "sphere_fit_rms": 1e-2,
    "roundtrip_tol": 1e-6,
    "growth_min": 1.2,
    "gradient_c_max": 100.0,
    "curvature_c_max": 1e3,
}


@dataclass
class SolverConfig:
    n: int
    k: int
    kind: str = "flow"
    seed: int = 0
    t_final: float = 0.1
    safety: float = 0.2
    dt_max: float = math.inf
    record_every: int = 10
    scheme: str = "rk2"
    cone_policy: str = "abort"
    monitor_policy: str = "fail"
    threads: int = 1
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    h: float = 0.05
    r_max: float = 10.0
    initial: str = "flat"
    initial_params: dict[str, float] = field(default_factory=dict)
    initial_path: str = ""
    bc: str = "exact"
    monitors: tuple[str, ...] = ()
    monitor_params: dict[str, str] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=lambda: dict(TOLERANCE_DEFAULTS))
    relax: bool = False
    relax_h: float = 0.0625
    relax_half_width: float = 1.0
    relax_rtol: float = 1e-8
    relax_initial: str = "profile"
    relax_curvature: float = 0.3
    max_steps: int = 200000
    growth_lo: float = 10.0
    growth_hi: float = 100.0
    panel_center: float = 3.0
    panel_radii: tuple[float, ...] = (1.0, 1.5, 2.0, 2.5, 3.0, 4.0)
    base_dir: str = field(default=".", compare=False)

    def resolved_initial_path(self) -> Path:
        p = Path(self.initial_path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def monitor_param(self, monitor: str, key: str, default=None, cast=float):
        raw = self.monitor_params.get(f"{monitor}.{key}")
        if raw is None:
            return default
        if cast in (tuple, list):
            return tuple(float(x) for x in _split(raw))
        return cast(raw)

    def validate(self) -> "SolverConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 1 <= self.n <= 16:
            raise ConfigError(f"n={self.n} outside [1, 16]")
        if not 0 <= self.k <= self.n - 1:
            raise ConfigError(f"k={self.k} must satisfy 0 <= k <= n-1 = {self.n - 1}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.cone_policy not in POLICIES:
            raise ConfigError(f"cone_policy must be one of {POLICIES}")
        if self.monitor_policy not in ("fail", "warn"):
            raise ConfigError("monitor_policy must be 'fail' or 'warn'")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        for name in ("t_final", "safety", "dt_max", "h", "r_max", "relax_h", "relax_half_width",
                     "relax_rtol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.safety > 1:
            raise ConfigError("safety must lie in (0, 1]")
        from .monitors import MONITORS

        unknown = [m for m in self.monitors if m not in MONITORS]
        if unknown:
            raise ConfigError(f"unknown monitors {unknown}; choose from {MONITORS}")
        for key, val in self.tolerances.items():
            if not val > 0:
                raise ConfigError(f"tolerance {key} must be positive")
        if self.kind == "flow":
            if self.n not in (1, 2):
                raise ConfigError("grid runs need n in {1, 2}")
            if self.bc not in BOUNDARIES:
                raise ConfigError(f"boundary type must be one of {BOUNDARIES}")
            if self.initial == "file":
                if not self.resolved_initial_path().is_file():
                    raise ConfigError(f"initial file {self.resolved_initial_path()} not found")
            elif len(self.lower) != self.n or len(self.upper) != self.n:
                raise ConfigError("domain lower/upper must have n entries")
            elif any(not hi > lo for lo, hi in zip(self.lower, self.upper)):
                raise ConfigError("domain upper must exceed lower")
            elif any((hi - lo) / self.h < 4 for lo, hi in zip(self.lower, self.upper)):
                raise ConfigError("domain must hold at least 5 nodes per axis")
        else:
            if self.relax and self.n != 2:
                raise ConfigError("2-d relaxation needs n = 2")
            if not self.r_max > 10 * self.h:
                raise ConfigError("r_max must exceed 10 h")
        return self


def _split(raw: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt_value(x) for x in v)
    return str(v)


def _coerce(name: str, raw: str, default):
    ftype = type(default)
    try:
        if ftype is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        if ftype is int:
            return int(raw)
        if ftype is float:
            return float(raw)
        if ftype is tuple:
            items = _split(raw)
            if name == "monitors":
                return tuple(items)
            return tuple(float(x) for x in items)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def _defaults() -> dict:
    out = {}
    for f in dataclasses.fields(SolverConfig):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


def parse_string(text: str, base_dir: str = ".") -> SolverConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    reverse = {v: k for k, v in _LAYOUT.items()}
    defaults = _defaults()
    values: dict = {}
    initial_params: dict[str, float] = {}
    monitor_params: dict[str, str] = {}
    tolerances = dict(TOLERANCE_DEFAULTS)
    for section in cp.sections():
        for key, raw in cp.items(section):
            if (section, key) in reverse:
                name = reverse[(section, key)]
                default = defaults.get(name, 0)
                values[name] = _coerce(name, raw, default)
            elif section == "initial":
                try:
                    initial_params[key] = float(raw)
                except ValueError as exc:
                    raise ConfigError(f"initial parameter {key} must be numeric") from exc
            elif section == "monitors":
                monitor_params[key] = raw.strip()
            elif section == "tolerances":
                if key not in TOLERANCE_DEFAULTS:
                    raise ConfigError(f"unknown tolerance {key!r}")
                tolerances[key] = float(raw)
            else:
                raise ConfigError(f"unknown key [{section}] {key}")
    for required in ("n", "k"):
        if required not in values:
            raise ConfigError(f"missing required key [run] {required}")
    return SolverConfig(initial_params=initial_params, monitor_params=monitor_params,
                        tolerances=tolerances, base_dir=str(base_dir), **values)


def load(path) -> SolverConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_string(path.read_text(), base_dir=str(path.parent))


def serialize(cfg: SolverConfig) -> str:
    sections: dict[str, list[tuple[str, str]]] = {}
    for name, (section, key) in _LAYOUT.items():
        sections.setdefault(section, []).append((key, _fmt_value(getattr(cfg, name))))
    for key, val in sorted(cfg.initial_params.items()):
        sections["initial"].append((key, _fmt_value(float(val))))
    for key, val in sorted(cfg.monitor_params.items()):
        sections["monitors"].append((key, val))
    sections["tolerances"] = [(k, _fmt_value(float(v))) for k, v in sorted(cfg.tolerances.items())]
    lines = []
    for section, items in sections.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in items)
        lines.append("")
    return "\n".join(lines)
