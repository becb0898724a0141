"""Built-in uncertain initial-value problems and user-supplied ones."""

import importlib
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Tuple

import numpy as np

from sfvrom.config import ConfigurationError, log, raise_error
from sfvrom.grid import Interval, build_tensor_grid
from sfvrom.models.physics import Burgers, ConservationLaw, Euler, EulerParams
from sfvrom.solver import SFVDiscretization
from sfvrom.weno import BoundaryKind, WenoParams

DEFAULT_T_FINAL = 0.2
SOD_LEFT = (1.0, 0.0, 1.0)
SOD_RIGHT = (0.125, 0.0, 0.1)
"""Primitive ``(rho, u, p)`` states on either side of the Sod diaphragm."""


@dataclass(frozen=True)
class Problem:
    """A conservation law with an uncertain initial condition ``u0(x, y)``.

    ``initial_condition`` receives ``x`` of shape ``(P,)`` and ``y`` of shape
    ``(P, q)`` and returns conserved states ``(P, n)``.
    """

    name: str
    law: ConservationLaw
    physical: Interval
    stochastic: Tuple[Interval, ...]
    bc: BoundaryKind
    initial_condition: Callable
    t_final: float = DEFAULT_T_FINAL
    nx: int = 64
    counts: Tuple[int, ...] = ()

    @property
    def q(self):
        return len(self.stochastic)

    def grid(self, nx=None, counts=None):
        counts = self.counts if counts is None else tuple(counts)
        if len(counts) != self.q:
            raise_error(
                ConfigurationError,
                f"{self.name} has q={self.q} stochastic dimensions, got counts {counts}.",
            )
        return build_tensor_grid(
            self.physical, self.nx if nx is None else nx, list(zip(self.stochastic, counts))
        )

    def discretization(self, nx=None, counts=None, weno: WenoParams = WenoParams()):
        return SFVDiscretization(self.grid(nx, counts), self.law, self.bc, weno)

    def at(self, y):
        """Initial condition of the deterministic problem at parameter point ``y``."""
        y = np.asarray(y, dtype=float).reshape(self.q)
        return lambda x, _: self.initial_condition(x, np.tile(y, (len(x), 1)))


def burgers_sine(x, y):
    """:math:`u_0 = (1 + 0.5 y_1) \\sin(2 \\pi x) + y_2`."""
    return ((1.0 + 0.5 * y[:, 0]) * np.sin(2.0 * np.pi * x) + y[:, 1])[:, None]


def sod_initial_condition(law: Euler, center, spread):
    """Sod states split at ``x_0 = center + spread * y``."""
    left = law.to_conserved(np.array(SOD_LEFT))
    right = law.to_conserved(np.array(SOD_RIGHT))

    def u0(x, y):
        diaphragm = center + spread * y[:, 0]
        return np.where((x < diaphragm)[:, None], left, right)

    return u0


def _sod(name, center, spread):
    law = Euler(EulerParams())
    return Problem(
        name=name,
        law=law,
        physical=Interval(0.0, 1.0),
        stochastic=(Interval(0.0, 1.0),),
        bc=BoundaryKind.outflow,
        initial_condition=sod_initial_condition(law, center, spread),
        nx=128,
        counts=(32,),
    )


class Preset(str, Enum):
    """Problems available from the command line."""

    burgers_sine = "burgers-sine"
    """Burgers on [0, 1], periodic, y uniform on [0, 1]^2."""
    sod_narrow = "sod-narrow"
    """Sod shock tube with diaphragm at 0.475 + 0.05 y."""
    sod_wide = "sod-wide"
    """Sod shock tube with diaphragm at 0.3 + 0.3 y."""
    custom = "custom"
    """``module:function`` returning a :class:`Problem`."""

    def build(self, custom=None) -> Problem:
        if self is Preset.burgers_sine:
            return Problem(
                name=self.value,
                law=Burgers(),
                physical=Interval(0.0, 1.0),
                stochastic=(Interval(0.0, 1.0), Interval(0.0, 1.0)),
                bc=BoundaryKind.periodic,
                initial_condition=burgers_sine,
                nx=64,
                counts=(32, 32),
            )
        if self is Preset.sod_narrow:
            return _sod(self.value, 0.475, 0.05)
        if self is Preset.sod_wide:
            return _sod(self.value, 0.3, 0.3)
        return load_custom_problem(custom)


def load_custom_problem(target) -> Problem:
    """Import ``module:function`` and call it without arguments."""
    if not target or ":" not in target:
        raise_error(
            ConfigurationError,
            f"custom_problem must look like 'module:function', got {target!r}.",
        )
    module_name, function_name = target.split(":", 1)
    try:
        factory = getattr(importlib.import_module(module_name), function_name)
    except (ImportError, AttributeError) as error:
        raise_error(ConfigurationError, f"Cannot load custom problem {target}: {error}")
    problem = factory()
    if not isinstance(problem, Problem):
        raise_error(ConfigurationError, f"{target} did not return a Problem.")
    log.info(f"Loaded custom problem {problem.name} from {target}")
    return problem


def get_problem(name, custom=None) -> Problem:
    try:
        preset = Preset(name)
    except ValueError:
        raise_error(
            ConfigurationError,
            f"Unknown problem {name!r}; choose from {[p.value for p in Preset]}.",
        )
    return preset.build(custom)
