"""Pure NumPy/Python implementation of the hot simulation kernels.

This is the fallback backend (and the readable definition of the math) for
the compiled `_fastpath` extension. Both backends expose the same functions
and must agree to floating-point round-off; `tests/test_kernels.py` holds
them to that.

Vehicle state layout: ``x = [v_y, r, v_x, phi, y]`` where ``v_x`` is the
deviation from the speed setpoint (the kinematics internally add the setpoint
back). Action layout: ``u = [delta, a_x]``.

Parameter vector layout (see ``envs.vehicle.VehicleParams.packed``):
``[m, a, b, I_z, C_f, C_r, mu, v_des, F_zf, F_zr]``.
"""

import math

import numpy as np

#: Slip angles divide by the longitudinal speed; below this floor the
#: denominator is clamped (tire model only, kinematics use the true speed).
MIN_SLIP_SPEED = 0.5

HALF_PI = 0.5 * math.pi


def fiala_force(alpha: float, stiffness: float, normal_load: float, friction: float) -> float:
    """Lateral tire force for slip angle ``alpha`` (saturating Fiala law).

    Linear ``-C tan(alpha)`` for small slip, cubic falloff, and a hard
    friction limit ``-mu F_z sign(alpha)`` once ``|tan(alpha)|`` exceeds
    ``3 mu F_z / C``. Odd in ``alpha``; total (slip angles past +-pi/2
    count as fully saturated).
    """
    mu_fz = friction * normal_load
    if alpha >= HALF_PI:
        return -mu_fz
    if alpha <= -HALF_PI:
        return mu_fz
    sigma = math.tan(alpha)
    limit = 3.0 * mu_fz / stiffness
    if sigma >= limit:
        return -mu_fz
    if sigma <= -limit:
        return mu_fz
    c2 = stiffness * stiffness
    return (
        -stiffness * sigma
        + c2 * sigma * abs(sigma) / (3.0 * mu_fz)
        - c2 * stiffness * sigma ** 3 / (27.0 * mu_fz * mu_fz)
    )


def fiala_force_arr(alpha, stiffness: float, normal_load: float, friction: float) -> np.ndarray:
    """Vectorized :func:`fiala_force` over an array of slip angles."""
    alpha = np.asarray(alpha, dtype=float)
    mu_fz = friction * normal_load
    wrapped = np.abs(alpha) >= HALF_PI
    sigma = np.tan(np.where(wrapped, 0.0, alpha))
    limit = 3.0 * mu_fz / stiffness
    saturated = wrapped | (np.abs(sigma) >= limit)
    c2 = stiffness * stiffness
    cubic = (
        -stiffness * sigma
        + c2 * sigma * np.abs(sigma) / (3.0 * mu_fz)
        - c2 * stiffness * sigma ** 3 / (27.0 * mu_fz * mu_fz)
    )
    sign = np.where(wrapped, np.sign(alpha), np.sign(sigma))
    return np.where(saturated, -mu_fz * sign, cubic)


def vehicle_rates(x, u, par, f_dis: float) -> np.ndarray:
    """Continuous-time state derivative of the single-track vehicle model."""
    m, a, b, iz, cf, cr, mu, v_des, fzf, fzr = (float(v) for v in par)
    v_y = float(x[0])
    r = float(x[1])
    v_x = float(x[2])
    phi = float(x[3])
    delta = float(u[0])
    a_x = float(u[1])

    vx_act = v_x + v_des
    vx_eff = vx_act if vx_act > MIN_SLIP_SPEED else MIN_SLIP_SPEED
    alpha_f = math.atan((v_y + a * r) / vx_eff) - delta
    alpha_r = math.atan((v_y - b * r) / vx_eff)
    fyf = fiala_force(alpha_f, cf, fzf, mu)
    fyr = fiala_force(alpha_r, cr, fzr, mu)
    cos_d = math.cos(delta)

    out = np.empty(5)
    out[0] = (fyf * cos_d + fyr) / m - vx_act * r
    out[1] = (a * fyf * cos_d - b * fyr) / iz
    out[2] = a_x + v_y * r - fyf * math.sin(delta) / m + f_dis / m
    out[3] = r
    out[4] = vx_act * math.sin(phi) + v_y * math.cos(phi)
    return out


def vehicle_rates_batch(X, U, par, f_dis: float) -> np.ndarray:
    """Batched :func:`vehicle_rates`: ``X`` is (B, 5), ``U`` is (B, 2)."""
    m, a, b, iz, cf, cr, mu, v_des, fzf, fzr = (float(v) for v in par)
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    v_y = X[:, 0]
    r = X[:, 1]
    phi = X[:, 3]
    delta = U[:, 0]
    a_x = U[:, 1]

    vx_act = X[:, 2] + v_des
    vx_eff = np.maximum(vx_act, MIN_SLIP_SPEED)
    alpha_f = np.arctan((v_y + a * r) / vx_eff) - delta
    alpha_r = np.arctan((v_y - b * r) / vx_eff)
    fyf = fiala_force_arr(alpha_f, cf, fzf, mu)
    fyr = fiala_force_arr(alpha_r, cr, fzr, mu)
    cos_d = np.cos(delta)

    out = np.empty_like(X)
    out[:, 0] = (fyf * cos_d + fyr) / m - vx_act * r
    out[:, 1] = (a * fyf * cos_d - b * fyr) / iz
    out[:, 2] = a_x + v_y * r - fyf * np.sin(delta) / m + f_dis / m
    out[:, 3] = r
    out[:, 4] = vx_act * np.sin(phi) + v_y * np.cos(phi)
    return out


def vehicle_step(x, u, par, dt: float) -> np.ndarray:
    """Deterministic Euler step ``x + dt * rates`` (disturbance force 0)."""
    rates = vehicle_rates(x, u, par, 0.0)
    out = np.empty(5)
    for i in range(5):
        out[i] = float(x[i]) + dt * rates[i]
    return out


def vehicle_step_batch(X, U, par, dt: float) -> np.ndarray:
    """Batched deterministic Euler step."""
    X = np.asarray(X, dtype=float)
    return X + dt * vehicle_rates_batch(X, U, par, 0.0)
