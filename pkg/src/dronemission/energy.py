"""Drone power model: physical per-time-step rates and the scaled simulator rates.

The physical model computes hover and forward-flight power from airframe
parameters (rotor geometry, mass, air density, speed, pitch). The simulator
itself always runs on the scaled rate triple returned by :func:`scaled_rates`;
the physical rates back the ``physics`` CLI command and the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class SolverError(RuntimeError):
    """Induced-velocity solver failed to converge; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class PhysicsParams:
    """Airframe and environment parameters for the power model.

    Defaults are a quadcopter base case: 0.254 m rotors, 2.07 kg all-up mass,
    10 m/s ground speed, 0.0139 rad pitch, 0.7 power efficiency, sea-level-ish
    air density. Drag force defaults to zero.
    """

    rotor_diameter_m: float = 0.254
    drone_mass_kg: float = 2.07
    ground_speed_mps: float = 10.0
    pitch_angle_rad: float = 0.0139
    power_efficiency: float = 0.7
    air_density_kgpm3: float = 1.2193
    rotor_count: int = 4
    drag_force_N: float = 0.0
    gravity_mps2: float = 9.81

    def validate(self) -> None:
        if not (self.rotor_diameter_m > 0 and self.drone_mass_kg > 0
                and self.ground_speed_mps > 0 and self.air_density_kgpm3 > 0
                and self.gravity_mps2 > 0):
            raise ValueError("physical quantities must be strictly positive")
        if not 0 < self.power_efficiency <= 1:
            raise ValueError("power_efficiency must be in (0, 1]")
        if not 0 <= self.pitch_angle_rad < math.pi / 2:
            raise ValueError("pitch_angle_rad must be in [0, pi/2)")
        if self.drag_force_N < 0:
            raise ValueError("drag_force_N must be >= 0")
        if self.rotor_count < 1:
            raise ValueError("rotor_count must be a positive integer")

    @property
    def thrust_weight(self) -> float:
        """m*g + F_drag, the force term shared by all three power formulas."""
        return self.drone_mass_kg * self.gravity_mps2 + self.drag_force_N


@dataclass(frozen=True)
class PowerRates:
    """Energy drawn per time step while hovering, flying forward, or running payload."""

    hover: float
    forward: float
    facilities: float

    def validate(self) -> None:
        if min(self.hover, self.forward, self.facilities) < 0:
            raise ValueError("power rates must be >= 0")


def _induced_velocity_rhs(params: PhysicsParams, v_s: float) -> float:
    """Right-hand side of the induced-velocity fixed-point equation."""
    v = params.ground_speed_mps
    alpha = params.pitch_angle_rad
    denom = (math.pi * params.rotor_count * params.rotor_diameter_m ** 2
             * params.air_density_kgpm3
             * math.sqrt((v * math.cos(alpha)) ** 2 + (v * math.sin(alpha) + v_s) ** 2))
    return 2.0 * params.thrust_weight / denom


def solve_induced_velocity(params: PhysicsParams, tol: float = 1e-12,
                           max_iter: int = 500) -> float:
    """Solve for the induced velocity v_s needed to sustain forward thrust.

    The residual v_s - RHS(v_s) is strictly increasing in v_s (the RHS is
    decreasing), so bisection on a sign-changing bracket always converges.
    The upper bracket is grown geometrically until the residual turns positive.

    Raises SolverError if the bracket cannot be tightened to ``tol``.
    """
    params.validate()

    def residual(v_s: float) -> float:
        return v_s - _induced_velocity_rhs(params, v_s)

    lo = 0.0
    hi = 1.0
    grow = 0
    while residual(hi) < 0:
        hi *= 2.0
        grow += 1
        if grow > 200:
            raise SolverError("could not bracket induced velocity", residual(hi))

    last = math.inf
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        last = residual(mid)
        if abs(last) <= tol:
            return mid
        if last < 0:
            lo = mid
        else:
            hi = mid
    raise SolverError(f"induced-velocity bisection did not reach tol={tol}", last)


def hover_power(params: PhysicsParams) -> float:
    """Power to hover for one time step: (m g + F)^1.5 / (eta sqrt(pi c D^2 rho / 2))."""
    params.validate()
    disk = 0.5 * math.pi * params.rotor_count * params.rotor_diameter_m ** 2 \
        * params.air_density_kgpm3
    return params.thrust_weight ** 1.5 / (params.power_efficiency * math.sqrt(disk))


def forward_power(params: PhysicsParams, v_s: float) -> float:
    """Power to fly forward for one time step: (m g + F)(v sin(alpha) + v_s) / eta."""
    params.validate()
    v = params.ground_speed_mps
    return params.thrust_weight * (v * math.sin(params.pitch_angle_rad) + v_s) \
        / params.power_efficiency


def scaled_rates() -> PowerRates:
    """The proportionally scaled-down rate triple the simulator runs on."""
    return PowerRates(hover=4.0, forward=2.5, facilities=3.0)
