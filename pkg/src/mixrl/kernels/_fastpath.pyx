# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot simulation kernels.

Mirrors `reference.py` function-for-function; see that module for the math
and the parameter-vector layout. Built optionally by setup.py - the package
falls back to the reference implementation when this extension is missing.
"""

from libc.math cimport atan, cos, sin, tan, fabs

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double MIN_SLIP_SPEED = 0.5
cdef double HALF_PI = 1.5707963267948966


cdef inline double _fiala(double alpha, double stiffness, double mu_fz) nogil:
    cdef double sigma, limit, c2
    if alpha >= HALF_PI:
        return -mu_fz
    if alpha <= -HALF_PI:
        return mu_fz
    sigma = tan(alpha)
    limit = 3.0 * mu_fz / stiffness
    if sigma >= limit:
        return -mu_fz
    if sigma <= -limit:
        return mu_fz
    c2 = stiffness * stiffness
    return (-stiffness * sigma
            + c2 * sigma * fabs(sigma) / (3.0 * mu_fz)
            - c2 * stiffness * sigma * sigma * sigma / (27.0 * mu_fz * mu_fz))


def fiala_force(double alpha, double stiffness, double normal_load, double friction):
    return _fiala(alpha, stiffness, friction * normal_load)


def fiala_force_arr(alpha, double stiffness, double normal_load, double friction):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(alpha, dtype=np.float64).ravel()
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double mu_fz = friction * normal_load
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = _fiala(a[i], stiffness, mu_fz)
    shaped = np.asarray(alpha, dtype=np.float64)
    if shaped.ndim == 0:
        return float(out[0])
    return out.reshape(shaped.shape)


cdef inline void _rates(const double* x, const double* u, const double* p,
                        double f_dis, double* out) nogil:
    # p = [m, a, b, iz, cf, cr, mu, v_des, fzf, fzr]
    cdef double v_y = x[0]
    cdef double r = x[1]
    cdef double phi = x[3]
    cdef double delta = u[0]
    cdef double a_x = u[1]
    cdef double vx_act = x[2] + p[7]
    cdef double vx_eff = vx_act if vx_act > MIN_SLIP_SPEED else MIN_SLIP_SPEED
    cdef double alpha_f = atan((v_y + p[1] * r) / vx_eff) - delta
    cdef double alpha_r = atan((v_y - p[2] * r) / vx_eff)
    cdef double fyf = _fiala(alpha_f, p[4], p[6] * p[8])
    cdef double fyr = _fiala(alpha_r, p[5], p[6] * p[9])
    cdef double cos_d = cos(delta)
    out[0] = (fyf * cos_d + fyr) / p[0] - vx_act * r
    out[1] = (p[1] * fyf * cos_d - p[2] * fyr) / p[3]
    out[2] = a_x + v_y * r - fyf * sin(delta) / p[0] + f_dis / p[0]
    out[3] = r
    out[4] = vx_act * sin(phi) + v_y * cos(phi)


def vehicle_rates(x, u, par, double f_dis):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pv = np.ascontiguousarray(par, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(5, dtype=np.float64)
    _rates(&xv[0], &uv[0], &pv[0], f_dis, &out[0])
    return out


def vehicle_rates_batch(X, U, par, double f_dis):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pv = np.ascontiguousarray(par, dtype=np.float64)
    cdef Py_ssize_t nb = Xv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nb, 5), dtype=np.float64)
    cdef Py_ssize_t i
    with nogil:
        for i in range(nb):
            _rates(&Xv[i, 0], &Uv[i, 0], &pv[0], f_dis, &out[i, 0])
    return out


def vehicle_step(x, u, par, double dt):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pv = np.ascontiguousarray(par, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(5, dtype=np.float64)
    cdef double rates[5]
    cdef Py_ssize_t i
    _rates(&xv[0], &uv[0], &pv[0], 0.0, rates)
    for i in range(5):
        out[i] = xv[i] + dt * rates[i]
    return out


def vehicle_step_batch(X, U, par, double dt):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pv = np.ascontiguousarray(par, dtype=np.float64)
    cdef Py_ssize_t nb = Xv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nb, 5), dtype=np.float64)
    cdef double rates[5]
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(nb):
            _rates(&Xv[i, 0], &Uv[i, 0], &pv[0], 0.0, rates)
            for j in range(5):
                out[i, j] = Xv[i, j] + dt * rates[j]
    return out
