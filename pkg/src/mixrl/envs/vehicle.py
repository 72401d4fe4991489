"""Single-track vehicle model, lane-change reference path and tracking run.

State ``[v_y, r, v_x, phi, y]``: lateral velocity, yaw rate, deviation from
the speed setpoint, yaw angle, lateral offset. Action ``[delta, a_x]``:
front-wheel angle and longitudinal acceleration. A random longitudinal
interference force disturbs the speed channel; discretized with explicit
Euler it appears as additive noise on the ``v_x`` coordinate with mean
``F_mean * dt / m``.

The training environment tracks a straight reference (pure regulation, so
the origin is an equilibrium). The lane-change evaluation integrates the
same dynamics in absolute coordinates and feeds the policy the error state
relative to the reference path at the vehicle's current station.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..numkit import Gaussian, RngStream, sample_gaussian
from .base import Environment

__all__ = [
    "VehicleParams",
    "fiala_force",
    "vehicle_derivative",
    "VehicleEnv",
    "ReferencePath",
    "reference_path_dlc",
    "LaneChangeResult",
    "simulate_lane_change",
]

GRAVITY = 9.81

#: Cost weights: speed deviation, lateral offset, steering, acceleration.
W_SPEED = 45.0
W_LATERAL = 60.0
W_STEER = 800.0
W_ACCEL = 1.0

DEFAULT_INIT_STD = (0.1, 0.05, 0.5, 0.02, 0.2)
DEFAULT_STEER_BOUND = 0.35
DEFAULT_ACCEL_MIN = -4.0
DEFAULT_ACCEL_MAX = 3.0


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the benchmark vehicle."""

    mass: float = 1500.0
    dist_front: float = 1.14
    dist_rear: float = 1.40
    yaw_inertia: float = 2420.0
    stiff_front: float = 88000.0
    stiff_rear: float = 94000.0
    friction: float = 1.0
    speed_setpoint: float = 12.0
    dt: float = 1.0 / 200.0
    dis_force_mean: float = 261.0
    dis_force_std: float = math.sqrt(32.0)

    def __post_init__(self):
        for name in (
            "mass",
            "dist_front",
            "dist_rear",
            "yaw_inertia",
            "stiff_front",
            "stiff_rear",
            "friction",
            "speed_setpoint",
            "dt",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def load_front(self) -> float:
        """Static front-axle normal load (no load transfer)."""
        wheelbase = self.dist_front + self.dist_rear
        return self.mass * GRAVITY * self.dist_rear / wheelbase

    @property
    def load_rear(self) -> float:
        wheelbase = self.dist_front + self.dist_rear
        return self.mass * GRAVITY * self.dist_front / wheelbase

    def packed(self) -> np.ndarray:
        """Parameter vector consumed by the simulation kernels."""
        return np.array(
            [
                self.mass,
                self.dist_front,
                self.dist_rear,
                self.yaw_inertia,
                self.stiff_front,
                self.stiff_rear,
                self.friction,
                self.speed_setpoint,
                self.load_front,
                self.load_rear,
            ]
        )

    def noise_distribution(self) -> Gaussian:
        """Per-step additive disturbance implied by the interference force.

        Only the speed channel is disturbed; the other coordinates carry a
        vanishing 1e-20 variance so the covariance stays positive definite
        and sampling reproduces the physical spread exactly.
        """
        mean = np.zeros(5)
        mean[2] = self.dis_force_mean * self.dt / self.mass
        diag = np.full(5, 1e-20)
        diag[2] = (self.dis_force_std * self.dt / self.mass) ** 2
        return Gaussian(mean, np.diag(diag))


def fiala_force(slip_angle, cornering_stiffness, normal_load, friction):
    """Lateral tire force (see ``kernels.reference.fiala_force`` for the law)."""
    return kernels.fiala_force(slip_angle, cornering_stiffness, normal_load, friction)


def vehicle_derivative(x, u, params: VehicleParams, dis_force: float) -> np.ndarray:
    """Continuous-time state derivative at the given interference force."""
    return kernels.vehicle_rates(
        np.asarray(x, dtype=float), np.asarray(u, dtype=float), params.packed(), float(dis_force)
    )


class VehicleEnv(Environment):
    """Euler-discretized vehicle regulation task around the straight path."""

    def __init__(
        self,
        params: VehicleParams | None = None,
        init_std=DEFAULT_INIT_STD,
        steer_bound: float = DEFAULT_STEER_BOUND,
        accel_min: float = DEFAULT_ACCEL_MIN,
        accel_max: float = DEFAULT_ACCEL_MAX,
    ):
        self.params = params if params is not None else VehicleParams()
        self._packed = self.params.packed()
        self.state_dim = 5
        self.action_dim = 2
        self.true_noise = self.params.noise_distribution()
        self.action_lo = np.array([-steer_bound, accel_min])
        self.action_hi = np.array([steer_bound, accel_max])
        self.init_std = np.asarray(init_std, dtype=float)

    def f(self, x, u):
        return kernels.vehicle_step(
            np.asarray(x, dtype=float), np.asarray(u, dtype=float), self._packed, self.params.dt
        )

    def f_batch(self, X, U):
        return kernels.vehicle_step_batch(
            np.asarray(X, dtype=float), np.asarray(U, dtype=float), self._packed, self.params.dt
        )

    def utility(self, x_next, u):
        return float(
            W_SPEED * x_next[2] ** 2
            + W_LATERAL * x_next[4] ** 2
            + W_STEER * u[0] ** 2
            + W_ACCEL * u[1] ** 2
        )

    def utility_batch(self, X_next, U):
        return (
            W_SPEED * X_next[:, 2] ** 2
            + W_LATERAL * X_next[:, 4] ** 2
            + W_STEER * U[:, 0] ** 2
            + W_ACCEL * U[:, 1] ** 2
        )

    def utility_grads(self, X_next, U):
        dl_dx = np.zeros_like(X_next)
        dl_dx[:, 2] = 2.0 * W_SPEED * X_next[:, 2]
        dl_dx[:, 4] = 2.0 * W_LATERAL * X_next[:, 4]
        dl_du = np.empty_like(U)
        dl_du[:, 0] = 2.0 * W_STEER * U[:, 0]
        dl_du[:, 1] = 2.0 * W_ACCEL * U[:, 1]
        return dl_dx, dl_du

    def init_state(self, rng: RngStream):
        return self.init_std * rng.standard_normal(5)


@dataclass(frozen=True)
class ReferencePath:
    """Piecewise lateral reference ``y_ref(s)`` over longitudinal station ``s``.

    Segments: straight lead-in, cosine ramp to ``offset``, hold, cosine ramp
    back, straight lead-out. The cosine blend makes the path C1 at the knots.
    """

    lead_in: float
    offset: float
    ramp: float
    hold: float
    ramp_back: float
    lead_out: float

    def __post_init__(self):
        if self.offset <= 0 or self.ramp <= 0 or self.ramp_back <= 0:
            raise ValueError("offset and ramp lengths must be positive")

    @property
    def knots(self) -> tuple[float, float, float, float]:
        s1 = self.lead_in
        s2 = s1 + self.ramp
        s3 = s2 + self.hold
        s4 = s3 + self.ramp_back
        return s1, s2, s3, s4

    @property
    def total_length(self) -> float:
        return self.knots[3] + self.lead_out

    def y_ref(self, s):
        s = np.asarray(s, dtype=float)
        s1, s2, s3, s4 = self.knots
        up = 0.5 * self.offset * (1.0 - np.cos(np.pi * (s - s1) / self.ramp))
        down = 0.5 * self.offset * (1.0 + np.cos(np.pi * (s - s3) / self.ramp_back))
        out = np.select(
            [s < s1, s < s2, s < s3, s < s4],
            [0.0, up, self.offset, down],
            default=0.0,
        )
        return float(out) if out.ndim == 0 else out

    def slope(self, s):
        """d y_ref / d s."""
        s = np.asarray(s, dtype=float)
        s1, s2, s3, s4 = self.knots
        up = 0.5 * self.offset * np.pi / self.ramp * np.sin(np.pi * (s - s1) / self.ramp)
        down = (
            -0.5 * self.offset * np.pi / self.ramp_back * np.sin(np.pi * (s - s3) / self.ramp_back)
        )
        out = np.select([s < s1, s < s2, s < s3, s < s4], [0.0, up, 0.0, down], default=0.0)
        return float(out) if out.ndim == 0 else out

    def heading_ref(self, s):
        return np.arctan(self.slope(s))


def reference_path_dlc(
    lead_in: float = 50.0,
    offset: float = 3.5,
    ramp: float = 30.0,
    hold: float = 25.0,
    ramp_back: float = 30.0,
    lead_out: float = 50.0,
) -> ReferencePath:
    """Double-lane-change layout: shift to the left lane, hold, return."""
    return ReferencePath(lead_in, offset, ramp, hold, ramp_back, lead_out)


@dataclass
class LaneChangeResult:
    """Time series and summary errors of one lane-change tracking run."""

    time: np.ndarray
    station: np.ndarray
    y_abs: np.ndarray
    y_target: np.ndarray
    lateral_error: np.ndarray
    speed_error: np.ndarray
    steer: np.ndarray
    accel: np.ndarray
    mean_abs_lateral_error: float = field(init=False)
    mean_abs_speed_error: float = field(init=False)

    def __post_init__(self):
        self.mean_abs_lateral_error = float(np.mean(np.abs(self.lateral_error)))
        self.mean_abs_speed_error = float(np.mean(np.abs(self.speed_error)))


def simulate_lane_change(
    env: VehicleEnv,
    policy,
    path: ReferencePath,
    rng: RngStream,
    max_duration_factor: float = 2.0,
) -> LaneChangeResult:
    """Drive the maneuver under ``policy`` and record the tracking errors.

    The absolute state is integrated alongside the station (arc progress of
    the vehicle along the road axis); the policy sees the error state
    ``[v_y, r, v_x, phi - phi_ref, y - y_ref]``. Terminates when the station
    passes the end of the path or the time budget runs out.
    """
    par = env.params
    dt = par.dt
    packed = env._packed
    max_steps = int(max_duration_factor * path.total_length / par.speed_setpoint / dt)

    state = np.zeros(5)
    station = 0.0
    rows = []
    for step in range(max_steps):
        err = state.copy()
        err[3] -= path.heading_ref(station)
        err[4] -= path.y_ref(station)
        u = env.clip_action(np.asarray(policy(err), dtype=float))

        vx_act = state[2] + par.speed_setpoint
        station += dt * (vx_act * math.cos(state[3]) - state[0] * math.sin(state[3]))
        xi = sample_gaussian(env.true_noise, rng)
        state = kernels.vehicle_step(state, u, packed, dt) + xi

        rows.append(
            (
                (step + 1) * dt,
                station,
                state[4],
                path.y_ref(station),
                state[4] - path.y_ref(station),
                state[2],
                u[0],
                u[1],
            )
        )
        if station >= path.total_length:
            break

    cols = np.array(rows).T
    return LaneChangeResult(
        time=cols[0],
        station=cols[1],
        y_abs=cols[2],
        y_target=cols[3],
        lateral_error=cols[4],
        speed_error=cols[5],
        steer=cols[6],
        accel=cols[7],
    )
