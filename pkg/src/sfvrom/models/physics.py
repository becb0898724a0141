"""Conservation laws, wave-speed bounds and the Lax-Friedrichs numerical flux.

All functions act on arrays whose last axis holds the solution components,
so a single call covers every interface, stochastic cell and quadrature node.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from sfvrom.config import ConfigurationError, PositivityError, raise_error

DEFAULT_GAMMA = 1.4


def _first_violation(mask):
    return tuple(int(i) for i in np.unravel_index(np.argmax(mask), mask.shape))


class ConservationLaw(ABC):
    """Flux ``F(u)`` of a 1D system with ``n_components`` conserved variables."""

    n_components: int
    component_names: tuple

    @abstractmethod
    def flux(self, u):
        """Physical flux, same shape as ``u``."""

    @abstractmethod
    def wave_speed(self, u):
        """Upper bound of the characteristic speeds of each state, shape ``u.shape[:-1]``."""

    def violations(self, u):
        """Pairs ``(quantity, mask)`` flagging inadmissible states."""
        return []

    def admissible(self, u):
        u = np.asarray(u, dtype=float)
        mask = np.isfinite(u).all(axis=-1)
        for _, bad in self.violations(u):
            mask &= ~bad
        return mask

    def max_wave_speed(self, u_left, u_right):
        return np.maximum(self.wave_speed(u_left), self.wave_speed(u_right))


@dataclass(frozen=True)
class Burgers(ConservationLaw):
    n_components = 1
    component_names = ("u",)

    def flux(self, u):
        return burgers_flux(u)

    def wave_speed(self, u):
        return np.abs(np.asarray(u, dtype=float)[..., 0])


@dataclass(frozen=True)
class EulerParams:
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not self.gamma > 1:
            raise_error(ConfigurationError, f"gamma must exceed 1, got {self.gamma}.")


@dataclass(frozen=True)
class Euler(ConservationLaw):
    """1D compressible Euler equations in conserved variables ``(rho, rho u, E)``."""

    params: EulerParams = EulerParams()

    n_components = 3
    component_names = ("rho", "rhou", "E")

    @property
    def gamma(self):
        return self.params.gamma

    def flux(self, u):
        return euler_flux(u, self.gamma)

    def pressure(self, u):
        return euler_pressure(u, self.gamma)

    def sound_speed(self, u):
        u = np.asarray(u, dtype=float)
        return np.sqrt(self.gamma * self.pressure(u) / u[..., 0])

    def wave_speed(self, u):
        u = np.asarray(u, dtype=float)
        _check_admissible(u, self.gamma)
        return np.abs(u[..., 1] / u[..., 0]) + self.sound_speed(u)

    def violations(self, u):
        u = np.asarray(u, dtype=float)
        rho = u[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            p = (self.gamma - 1.0) * (u[..., 2] - 0.5 * u[..., 1] ** 2 / rho)
        return [("density", ~(rho > 0)), ("pressure", ~(p > 0))]

    def to_conserved(self, primitive):
        return primitive_to_conserved(primitive, self.gamma)

    def to_primitive(self, u):
        return conserved_to_primitive(u, self.gamma)


def burgers_flux(u):
    u = np.asarray(u, dtype=float)
    return 0.5 * u**2


def euler_pressure(state, gamma=DEFAULT_GAMMA):
    state = np.asarray(state, dtype=float)
    rho = state[..., 0]
    if np.any(~(rho > 0)):
        bad = ~(rho > 0)
        raise_error(
            PositivityError,
            f"Non-positive density {rho[bad].flat[0]} in Euler state.",
            location={"index": _first_violation(bad), "quantity": "density"},
        )
    return (gamma - 1.0) * (state[..., 2] - 0.5 * state[..., 1] ** 2 / rho)


def _check_admissible(state, gamma):
    p = euler_pressure(state, gamma)
    if np.any(~(p > 0)):
        bad = ~(p > 0)
        raise_error(
            PositivityError,
            f"Non-positive pressure {p[bad].flat[0]} in Euler state.",
            location={"index": _first_violation(bad), "quantity": "pressure"},
        )
    return p


def euler_flux(state, gamma=DEFAULT_GAMMA):
    state = np.asarray(state, dtype=float)
    p = _check_admissible(state, gamma)
    rho, momentum, energy = state[..., 0], state[..., 1], state[..., 2]
    velocity = momentum / rho
    return np.stack(
        [momentum, momentum * velocity + p, velocity * (energy + p)], axis=-1
    )


def primitive_to_conserved(primitive, gamma=DEFAULT_GAMMA):
    """``(rho, u, p)`` to ``(rho, rho u, E)``."""
    primitive = np.asarray(primitive, dtype=float)
    rho, velocity, p = primitive[..., 0], primitive[..., 1], primitive[..., 2]
    energy = p / (gamma - 1.0) + 0.5 * rho * velocity**2
    return np.stack([rho, rho * velocity, energy], axis=-1)


def conserved_to_primitive(state, gamma=DEFAULT_GAMMA):
    state = np.asarray(state, dtype=float)
    p = euler_pressure(state, gamma)
    return np.stack([state[..., 0], state[..., 1] / state[..., 0], p], axis=-1)


def davis_wave_speed(u_left, u_right, law: ConservationLaw):
    """Davis bound ``max(|u_L| + c_L, |u_R| + c_R)`` (``max(|u_L|, |u_R|)`` for Burgers)."""
    return law.max_wave_speed(u_left, u_right)


def lax_friedrichs(u_left, u_right, law: ConservationLaw):
    """Local Lax-Friedrichs flux with the Davis wave speed."""
    u_left = np.asarray(u_left, dtype=float)
    u_right = np.asarray(u_right, dtype=float)
    speed = davis_wave_speed(u_left, u_right, law)[..., None]
    return 0.5 * (law.flux(u_left) + law.flux(u_right)) - 0.5 * speed * (
        u_right - u_left
    )
