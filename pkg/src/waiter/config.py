"""Scenario configuration: YAML document <-> nested dataclasses.

Every section is optional; missing keys take the desk-scale defaults below.
Unknown keys are rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .contact import ComBox, ContactSet
from .errors import ConfigError
from .moments.shape import BoundingShape
from .trajopt import OcpConfig, default_input_bound, default_state_bound, planner_params

METHODS = ("center", "top", "robust")


@dataclass
class ObjectSpec:
    base: list = field(default_factory=lambda: [0.15, 0.15])   # side lengths of the base (m)
    height: float = 0.6
    com_margin: float = 0.015        # CoM box inset from the object's sides (m)


@dataclass
class ContactSpec:
    mu_plan: float = 0.0
    mu_verify: float = 0.2
    mu_sim: float = 0.2


@dataclass
class OcpSpec:
    T: float = 10.0
    dt: float = 0.1
    w_s: float = 100.0
    sqp_iters: int = 3
    terminal_weight: float = 1000.0
    W_r: list = field(default_factory=lambda: [1.0] * 3)
    W_x: list = field(default_factory=lambda: [0.0] * 6 + [0.1] * 6 + [0.01] * 6)
    W_u: list = field(default_factory=lambda: [1e-3] * 6)
    x_ub: list = field(default_factory=lambda: default_state_bound().tolist())
    u_ub: list = field(default_factory=lambda: default_input_bound().tolist())


@dataclass
class VerifySpec:
    interval: float = 0.01
    order: int = 2
    prune: bool = True


@dataclass
class SimSpec:
    dt: float = 0.001
    inertia_scales: list = field(default_factory=lambda: [1.0, 0.5, 0.1])


@dataclass
class SweepSpec:
    heights: list = field(default_factory=lambda: [0.3, 0.4, 0.5, 0.6])
    methods: list = field(default_factory=lambda: list(METHODS))


@dataclass
class ScenarioConfig:
    object: ObjectSpec = field(default_factory=ObjectSpec)
    contacts: ContactSpec = field(default_factory=ContactSpec)
    method: str = "robust"
    goals: list = field(default_factory=lambda: [[-2.0, 1.0, 0.0], [0.0, 2.0, 0.25], [2.0, 0.0, -0.25]])
    goal_index: int = 0
    ocp: OcpSpec = field(default_factory=OcpSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)
    simulate: SimSpec = field(default_factory=SimSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------ checks

    def validate(self):
        o = self.object
        if len(o.base) != 2 or min(o.base) <= 0 or o.height <= 0:
            raise ConfigError("object base and height must be positive")
        if not 0 <= o.com_margin < 0.5 * min(o.base):
            raise ConfigError("com_margin must leave a non-empty CoM box inside the object")
        c = self.contacts
        if min(c.mu_plan, c.mu_verify, c.mu_sim) < 0:
            raise ConfigError("friction coefficients must be non-negative")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if any(m not in METHODS for m in self.sweep.methods):
            raise ConfigError(f"sweep methods must be among {METHODS}")
        if not self.goals or any(len(g) != 3 for g in self.goals):
            raise ConfigError("goals must be a non-empty list of 3-vectors")
        if not 0 <= self.goal_index < len(self.goals):
            raise ConfigError("goal_index out of range")
        if self.verify.interval <= 0 or self.verify.order < 1:
            raise ConfigError("verify interval must be positive and order >= 1")
        if not 0 < self.simulate.dt <= 1e-3:
            raise ConfigError("simulation step must be in (0, 1 ms]")
        if any(h <= 0 for h in self.sweep.heights):
            raise ConfigError("sweep heights must be positive")
        try:
            self.ocp_config(self.object.height, self.method, self.goals[self.goal_index])
        except ValueError as exc:
            raise ConfigError(f"ocp section: {exc}") from exc
        # cross-reference: CoM box inside the object
        for h in {self.object.height, *self.sweep.heights}:
            shape = self.shape(h)
            if not all(shape.contains(v, 1e-12) for v in self.com_box(h).vertices):
                raise ConfigError(f"CoM box is not contained in the object at height {h}")

    # ------------------------------------------------------------------ builders

    def dims(self, height=None):
        h = self.object.height if height is None else height
        return (float(self.object.base[0]), float(self.object.base[1]), float(h))

    def shape(self, height=None) -> BoundingShape:
        a, b, h = self.dims(height)
        return BoundingShape.box([-a / 2, -b / 2, 0.0], [a / 2, b / 2, h])

    def com_box(self, height=None) -> ComBox:
        a, b, h = self.dims(height)
        m = self.object.com_margin
        return ComBox.box([-a / 2 + m, -b / 2 + m, 0.0], [a / 2 - m, b / 2 - m, h])

    def contact_set(self, mu) -> ContactSet:
        a, b, _ = self.dims()
        corners = [(sx * a / 2, sy * b / 2, 0.0) for sx in (-1, 1) for sy in (-1, 1)]
        return ContactSet.polygon(corners, mu=mu)

    def ocp_config(self, height=None, method=None, goal=None) -> OcpConfig:
        method = self.method if method is None else method
        goal = self.goals[self.goal_index] if goal is None else goal
        o = self.ocp
        params = planner_params(method, self.com_box(height), self.dims(height))
        return OcpConfig(goal=np.asarray(goal, dtype=float), contacts=self.contact_set(self.contacts.mu_plan),
                         params=params, T=o.T, dt=o.dt, W_r=o.W_r, W_x=o.W_x, W_u=o.W_u, w_s=o.w_s,
                         x_ub=o.x_ub, u_ub=o.u_ub, sqp_iters=o.sqp_iters, terminal_weight=o.terminal_weight)

    # ------------------------------------------------------------------ I/O

    def to_dict(self):
        return asdict(self)

    def dump(self, path):
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    @classmethod
    def from_dict(cls, d):
        d = {} if d is None else d
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping")
        return _build(cls, d, "")

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                d = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(d)


_SECTIONS = {"object": ObjectSpec, "contacts": ContactSpec, "ocp": OcpSpec, "verify": VerifySpec,
             "simulate": SimSpec, "sweep": SweepSpec}


def _build(cls, d, prefix):
    names = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(names)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(prefix + k for k in unknown)}")
    kw = {}
    for k, v in d.items():
        sub = _SECTIONS.get(k) if cls is ScenarioConfig else None
        if sub is not None:
            if not isinstance(v, dict):
                raise ConfigError(f"section {prefix + k} must be a mapping")
            kw[k] = _build(sub, v, prefix + k + ".")
        else:
            kw[k] = v
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in {prefix or 'top level'}: {exc}") from exc
