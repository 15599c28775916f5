"""Declarative scenario configuration and the shipped presets.

Signals are described by small named parametric families so that a scenario
file stays plain data:

* delay: ``constant`` (``value``) or ``sinusoidal``
  (``offset + amplitude sin(2 pi frequency t)``);
* disturbance terms: Gaussian pulses ``amplitude exp(-rate (t-center)^2)``
  modulated in time by ``carrier(wavenumber pi t)`` (boundary channels) or in
  space by ``offset + weight * carrier(wavenumber pi x)`` (distributed term);
* initial-history terms: ``amplitude (1 - tau)^power profile(x)`` with
  ``profile`` either ``parabola`` (``x (1 - x)``) or ``sine``
  (``sin(wavenumber pi x) (1 + slope x)``).
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .control import Actuation
from .simulate import DelaySignal, Disturbance, InitialHistory
from .spectral import BeamParams


class ConfigError(ValueError):
    pass


_CARRIERS = {"cos": np.cos, "sin": np.sin, "one": lambda z: np.ones_like(z)}


def _carrier(name: str):
    try:
        return _CARRIERS[name]
    except KeyError:
        raise ConfigError(f"unknown carrier {name!r}; expected one of {sorted(_CARRIERS)}") from None


@dataclass(frozen=True)
class DelaySpec:
    kind: str = "sinusoidal"
    value: float = 0.12
    offset: float = 0.12
    amplitude: float = 0.1
    frequency: float = 3.0

    def build(self) -> DelaySignal:
        if self.kind == "constant":
            return DelaySignal.constant(self.value)
        if self.kind == "sinusoidal":
            return DelaySignal.sinusoidal(self.offset, self.amplitude, self.frequency)
        raise ConfigError(f"unknown delay kind {self.kind!r}")


@dataclass(frozen=True)
class PulseTerm:
    """``amplitude exp(-rate (t - center)^2) carrier(wavenumber pi s)``.

    ``s`` is time for boundary channels and space for the distributed term,
    where the spatial factor is ``offset + weight * carrier(...)``.
    """

    amplitude: float = 1.0
    center: float = 5.0
    rate: float = 2.0
    carrier: str = "cos"
    wavenumber: float = 0.0
    offset: float = 0.0
    weight: float = 1.0

    def envelope(self, t):
        return self.amplitude * np.exp(-self.rate * (t - self.center) ** 2)


@dataclass(frozen=True)
class DisturbanceSpec:
    distributed: tuple[PulseTerm, ...] = ()
    boundary_left: tuple[PulseTerm, ...] = ()
    boundary_right: tuple[PulseTerm, ...] = ()

    def build(self) -> Disturbance:
        dist = bnd = None
        if self.distributed:
            terms = self.distributed

            def dist(t, x):
                return sum(
                    term.envelope(t) * (term.offset + term.weight * _carrier(term.carrier)(term.wavenumber * math.pi * x))
                    for term in terms
                )

        if self.boundary_left or self.boundary_right:
            channels = (self.boundary_left, self.boundary_right)

            def bnd(t):
                t = np.asarray(t, dtype=float)
                out = np.zeros(t.shape + (2,))
                for j, terms in enumerate(channels):
                    for term in terms:
                        out[..., j] += term.envelope(t) * _carrier(term.carrier)(term.wavenumber * math.pi * t)
                return out

        return Disturbance(dist, bnd)


@dataclass(frozen=True)
class ProfileTerm:
    """``amplitude (1 - tau)^power profile(x)``."""

    amplitude: float = 1.0
    power: float = 0.0
    profile: str = "parabola"
    wavenumber: int = 1
    slope: float = 0.0

    def shape(self, x):
        if self.profile == "parabola":
            return x * (1 - x)
        if self.profile == "sine":
            return np.sin(self.wavenumber * math.pi * x) * (1 + self.slope * x)
        raise ConfigError(f"unknown profile {self.profile!r}")

    def value(self, tau, x):
        return self.amplitude * (1 - tau) ** self.power * self.shape(x)

    def dtau(self, tau, x):
        if self.power == 0:
            return 0.0 * tau * x
        return -self.power * self.amplitude * (1 - tau) ** (self.power - 1) * self.shape(x)


@dataclass(frozen=True)
class InitialSpec:
    displacement: tuple[ProfileTerm, ...] = ()
    velocity: tuple[ProfileTerm, ...] = ()

    def build(self) -> InitialHistory:
        def total(terms, attr):
            def f(tau, x):
                out = 0.0 * tau * x
                for term in terms:
                    out = out + getattr(term, attr)(tau, x)
                return out

            return f

        return InitialHistory(
            y0=total(self.displacement, "value"),
            yt0=total(self.velocity, "value"),
            dy0_dtau=total(self.displacement, "dtau"),
            dyt0_dtau=total(self.velocity, "dtau"),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    alpha: float = 1.5
    beta0: float = 50.0
    gamma: float = 50.0
    N0: int = 2
    n_sim: int = 12
    actuation: str = "both"
    poles: tuple[float, ...] = (-5.0, -6.0, -7.0, -8.0)
    open_loop: bool = False
    delay: DelaySpec = field(default_factory=DelaySpec)
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    dt: float = 1e-4
    T: float = 20.0
    save_every: float = 0.01
    x_points: int = 101
    field_snapshots: int = 21
    resolution: float = 1e-3
    gain_file: str | None = None

    def validate(self) -> "ScenarioConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.alpha > 1, f"alpha must be > 1, got {self.alpha}")
        need(self.beta0 >= 0, f"beta0 must be >= 0, got {self.beta0}")
        need(self.gamma > 0, f"gamma must be > 0, got {self.gamma}")
        need(isinstance(self.N0, int) and self.N0 >= 0, f"N0 must be a non-negative integer, got {self.N0}")
        need(isinstance(self.n_sim, int) and self.n_sim >= max(1, self.N0), f"n_sim must be an integer >= max(1, N0), got {self.n_sim}")
        need(self.actuation in {a.value for a in Actuation}, f"actuation must be left, right or both, got {self.actuation!r}")
        need(all(p < 0 for p in self.poles), "poles must be negative reals")
        need(self.dt > 0 and self.T > 0, "dt and T must be positive")
        need(self.save_every >= self.dt, "save_every must be at least dt")
        need(self.x_points >= 2 and self.field_snapshots >= 1, "x_points >= 2 and field_snapshots >= 1 required")
        need(self.resolution > 0, "resolution must be positive")
        need(self.delay.kind in {"constant", "sinusoidal"}, f"unknown delay kind {self.delay.kind!r}")
        try:
            d = self.delay.build()
        except ValueError as exc:
            raise ConfigError(f"invalid delay: {exc}") from None
        need(self.dt <= d.h_min / 4 * (1 + 1e-12), f"dt={self.dt} exceeds h_min/4={d.h_min / 4}")
        for t in (*self.disturbance.distributed, *self.disturbance.boundary_left, *self.disturbance.boundary_right):
            _carrier(t.carrier)
            need(t.rate >= 0, "pulse rate must be non-negative")
        for t in (*self.initial.displacement, *self.initial.velocity):
            need(t.profile in {"parabola", "sine"}, f"unknown profile {t.profile!r}")
            need(t.power >= 0, "profile power must be non-negative")
        return self

    def check_pole_count(self) -> None:
        """Pole count is checked separately so that a failing mode count is reported first."""
        if len(self.poles) != 2 * self.N0:
            raise ConfigError(f"need {2 * self.N0} poles for N0={self.N0}, got {len(self.poles)}")

    @property
    def params(self) -> BeamParams:
        return BeamParams(self.alpha, self.beta0, self.gamma)


_NESTED = {
    "delay": DelaySpec,
    "disturbance": DisturbanceSpec,
    "initial": InitialSpec,
}
_TERM_LISTS = {
    "distributed": PulseTerm,
    "boundary_left": PulseTerm,
    "boundary_right": PulseTerm,
    "displacement": ProfileTerm,
    "velocity": ProfileTerm,
}


def _make(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _NESTED and cls is ScenarioConfig:
            kwargs[key] = _make(_NESTED[key], value, f"{where}.{key}")
        elif key in _TERM_LISTS:
            if not isinstance(value, list):
                raise ConfigError(f"{where}.{key}: expected a list of terms")
            kwargs[key] = tuple(_make(_TERM_LISTS[key], v, f"{where}.{key}[{i}]") for i, v in enumerate(value))
        elif key == "poles":
            if not isinstance(value, list):
                raise ConfigError(f"{where}.poles: expected a list")
            kwargs[key] = tuple(_number(v, f"{where}.poles") for v in value)
        else:
            kwargs[key] = _coerce(names[key], value, f"{where}.{key}")
    return cls(**kwargs)


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{where}: must be finite")
    return float(v)


def _coerce(f: dataclasses.Field, value, where):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if kind == "float":
        return _number(value, where)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if kind == "str" or kind == "str | None":
        if not (isinstance(value, str) or (value is None and "None" in kind)):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def config_from_dict(data: dict) -> ScenarioConfig:
    return _make(ScenarioConfig, data, "config").validate()


def config_to_dict(cfg: ScenarioConfig) -> dict:
    def conv(v):
        if dataclasses.is_dataclass(v):
            return {k: conv(x) for k, x in dataclasses.asdict(v).items()}
        if isinstance(v, tuple):
            return [conv(x) for x in v]
        return v

    return conv(cfg)


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return config_from_dict(data or {})


def _sec6_base() -> dict:
    return {
        "alpha": 1.5,
        "beta0": 50.0,
        "gamma": 50.0,
        "N0": 2,
        "n_sim": 12,
        "actuation": "both",
        "poles": [-5.0, -6.0, -7.0, -8.0],
        "delay": {"kind": "sinusoidal", "offset": 0.12, "amplitude": 0.1, "frequency": 3.0},
        "disturbance": {
            "distributed": [
                {"amplitude": 3.0, "center": 5.0, "rate": 2.0, "carrier": "cos", "wavenumber": 2.0, "offset": 2.0, "weight": 1.0}
            ],
            "boundary_left": [{"amplitude": 1.0, "center": 5.0, "rate": 2.0, "carrier": "cos", "wavenumber": 2.0}],
            "boundary_right": [{"amplitude": -1.0, "center": 5.0, "rate": 2.0, "carrier": "sin", "wavenumber": 3.0}],
        },
        "initial": {
            "displacement": [{"amplitude": 2.0, "power": 2.0, "profile": "parabola"}],
            "velocity": [{"amplitude": -1.0, "power": 2.0, "profile": "sine", "wavenumber": 4, "slope": 2.0}],
        },
        "dt": 1e-4,
        "T": 20.0,
    }


def _preset_openloop() -> dict:
    d = _sec6_base()
    d.update(open_loop=True, disturbance={}, T=10.0)
    return d


def _preset_full() -> dict:
    d = _sec6_base()
    d.update(n_sim=40, dt=1e-5)
    return d


PRESETS = {
    "paper-sec6": _sec6_base,
    "paper-sec6-closedloop": _sec6_base,
    "paper-sec6-openloop": _preset_openloop,
    "paper-sec6-40modes": _preset_full,
}


def preset(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name]())
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
