"""Physical and protocol parameters for the membrane-fusion TX channel.

Units are fixed throughout the package: lengths in um, times in s,
diffusion coefficients in um^2/s, k_f in um/s and k_d in 1/s.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union


class ParameterError(ValueError):
    """Raised by :func:`validate` with the complete list of violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class MFStepWarning(UserWarning):
    """The per-step fusion probability is not small compared to one."""


@dataclass(frozen=True)
class ChannelParams:
    r_T: float = 10.0
    r_R: float = 10.0
    D_v: float = 9.0
    D_sigma: float = 1000.0
    k_f: float = 30.0
    k_d: float = 0.8
    N_v: int = 200
    eta: int = 5
    rho: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "rho", 1.0 / (4.0 * math.pi * self.r_T**2))

    def replace(self, **changes) -> "ChannelParams":
        return dataclasses.replace(self, **changes)

    @property
    def total_molecules(self) -> int:
        return self.N_v * self.eta


@dataclass(frozen=True)
class StaticGeometry:
    l: float = 40.0


@dataclass(frozen=True)
class MobileParams:
    l0: float = 40.0
    D_T: float = 8.0
    D_R: float = 8.0
    t_prime: float = 2.0
    # copied from the channel so that D2 can be derived at construction
    D_sigma: float = 1000.0
    D1: float = field(init=False)
    D2: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "D1", self.D_T + self.D_R)
        object.__setattr__(self, "D2", self.D_R + self.D_sigma)

    @classmethod
    def for_channel(cls, channel: ChannelParams, **kwargs) -> "MobileParams":
        return cls(D_sigma=channel.D_sigma, **kwargs)

    def replace(self, **changes) -> "MobileParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class BitTxParams:
    W: int = 5
    phi: float = 2.0
    P1: float = 0.5
    xi: int = 1
    C: int = 3

    @property
    def P0(self) -> float:
        return 1.0 - self.P1

    def replace(self, **changes) -> "BitTxParams":
        return dataclasses.replace(self, **changes)


MEMBRANE_MODES = ("transparent", "reflecting")
# how a molecule step that ends outside the RX is tested for a mid-step hit
CROSSING_RULES = ("bridge", "endpoint")


@dataclass(frozen=True)
class SimParams:
    dt: float = 1e-3
    realizations: int = 1000
    seed: int = 0
    membrane_mode: str = "transparent"
    crossing: str = "bridge"
    t_end: float = 20.0
    bin_width: float = 0.05

    def replace(self, **changes) -> "SimParams":
        return dataclasses.replace(self, **changes)


AnyParams = Union[ChannelParams, StaticGeometry, MobileParams, BitTxParams, SimParams]


def mf_step_probability(k_f: float, D_v: float, dt: float) -> float:
    """Probability that a vesicle hitting the membrane fuses within one step."""
    return k_f * math.sqrt(math.pi * dt / D_v)


def _positive(obj, names, out):
    for name in names:
        value = getattr(obj, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            out.append(f"{name} must be > 0 (got {value!r})")


def _nonnegative(obj, names, out):
    for name in names:
        value = getattr(obj, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
            out.append(f"{name} must be >= 0 (got {value!r})")


def validate(params: AnyParams, channel: ChannelParams | None = None,
             mf_warn_threshold: float = 0.1) -> AnyParams:
    """Check every invariant of ``params`` and return it unchanged.

    Geometry types need ``channel`` for the overlap test; ``SimParams`` uses it
    for the fusion step-probability check. Raises :class:`ParameterError`
    listing all violations at once.
    """
    errors: list[str] = []
    if isinstance(params, ChannelParams):
        _positive(params, ("r_T", "r_R", "D_v", "D_sigma"), errors)
        _nonnegative(params, ("k_f", "k_d"), errors)
        for name in ("N_v", "eta"):
            value = getattr(params, name)
            if not isinstance(value, int) or value < 1:
                errors.append(f"{name} must be an integer >= 1 (got {value!r})")
        if params.r_T > 0 and not math.isclose(params.rho, 1.0 / (4 * math.pi * params.r_T**2),
                                               rel_tol=1e-15):
            errors.append("rho inconsistent with r_T")
    elif isinstance(params, StaticGeometry):
        _positive(params, ("l",), errors)
        if channel is not None and not params.l > channel.r_T + channel.r_R:
            errors.append(f"l must exceed r_T + r_R = {channel.r_T + channel.r_R} "
                          f"(overlapping spheres, got l={params.l})")
    elif isinstance(params, MobileParams):
        _positive(params, ("l0", "t_prime", "D_sigma"), errors)
        _nonnegative(params, ("D_T", "D_R"), errors)
        if channel is not None:
            if not params.l0 > channel.r_T + channel.r_R:
                errors.append(f"l0 must exceed r_T + r_R = {channel.r_T + channel.r_R} "
                              f"(overlapping spheres, got l0={params.l0})")
            if params.D_sigma != channel.D_sigma:
                errors.append("D_sigma differs from the channel's D_sigma")
        if params.D1 != params.D_T + params.D_R or params.D2 != params.D_R + params.D_sigma:
            errors.append("derived D1/D2 inconsistent")
    elif isinstance(params, BitTxParams):
        if not 0.0 <= params.P1 <= 1.0:
            errors.append(f"P1 must lie in [0, 1] (got {params.P1})")
        for name, low in (("W", 1), ("xi", 1), ("C", 1)):
            value = getattr(params, name)
            if not isinstance(value, int) or value < low:
                errors.append(f"{name} must be an integer >= {low} (got {value!r})")
        _positive(params, ("phi",), errors)
    elif isinstance(params, SimParams):
        _positive(params, ("dt",), errors)
        if not isinstance(params.realizations, int) or params.realizations < 1:
            errors.append(f"realizations must be an integer >= 1 (got {params.realizations!r})")
        if params.membrane_mode not in MEMBRANE_MODES:
            errors.append(f"membrane_mode must be one of {MEMBRANE_MODES}")
        if params.crossing not in CROSSING_RULES:
            errors.append(f"crossing must be one of {CROSSING_RULES}")
        _positive(params, ("t_end", "bin_width"), errors)
        if channel is not None and params.dt > 0 and channel.D_v > 0:
            p = mf_step_probability(channel.k_f, channel.D_v, params.dt)
            if p >= 1.0:
                errors.append(f"fusion step probability k_f*sqrt(pi*dt/D_v) = {p:.3g} must be < 1")
            elif p > mf_warn_threshold:
                warnings.warn(f"fusion step probability {p:.3g} is not << 1; "
                              "the simulated fusion kinetics are approximate", MFStepWarning,
                              stacklevel=2)
    else:
        raise TypeError(f"cannot validate {type(params).__name__}")
    if errors:
        raise ParameterError(errors)
    return params


# --- configuration files -------------------------------------------------

SECTIONS = {
    "ChannelParams": ChannelParams,
    "StaticGeometry": StaticGeometry,
    "MobileParams": MobileParams,
    "BitTxParams": BitTxParams,
    "SimParams": SimParams,
}


def _init_fields(cls):
    return [f for f in dataclasses.fields(cls) if f.init]


def _format(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _parse(text: str, default):
    if isinstance(default, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip()


def dumps_config(*objs: AnyParams) -> str:
    """Serialize parameter objects to the sectioned key=value format."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for obj in objs:
        section = type(obj).__name__
        cp[section] = {f.name: _format(getattr(obj, f.name)) for f in _init_fields(type(obj))}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads_config(text: str, source: str = "<string>") -> dict[str, AnyParams]:
    """Parse a configuration text into parameter objects keyed by section name.

    Missing keys take the dataclass defaults. Unknown sections or keys raise
    :class:`ParameterError` with the line number.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ParameterError([str(exc)]) from exc

    lines = text.splitlines()

    def lineno(section, key=None):
        in_section = False
        for i, line in enumerate(lines, 1):
            stripped = line.strip()
            if stripped.startswith("["):
                in_section = stripped == f"[{section}]"
                if in_section and key is None:
                    return i
            elif in_section and key is not None and stripped.split("=")[0].strip() == key:
                return i
        return 0

    out: dict[str, AnyParams] = {}
    errors = []
    for section in cp.sections():
        cls = SECTIONS.get(section)
        if cls is None:
            errors.append(f"{source}:{lineno(section)}: unknown section [{section}]")
            continue
        defaults = cls()
        known = {f.name: f for f in _init_fields(cls)}
        kwargs = {}
        for key, raw in cp[section].items():
            if key not in known:
                errors.append(f"{source}:{lineno(section, key)}: unknown key {key!r} in [{section}]")
                continue
            try:
                kwargs[key] = _parse(raw, getattr(defaults, key))
            except ValueError:
                errors.append(f"{source}:{lineno(section, key)}: bad value {raw!r} for {key}")
        if not errors:
            out[section] = cls(**kwargs)
    if errors:
        raise ParameterError(errors)
    return out


def load_config(path: str | Path) -> dict[str, AnyParams]:
    path = Path(path)
    return loads_config(path.read_text(), source=str(path))


def save_config(path: str | Path, *objs: AnyParams) -> None:
    Path(path).write_text(dumps_config(*objs))
