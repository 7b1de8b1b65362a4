"""JIT-compiled inner loop for attitude integration.

Same math as :func:`satsched.attitude.integrate_attitude_numpy`, written as
scalar loops so numba can compile it; the rollout hot path spends most of its
time here (10 RK4 substeps per craft per control step).  Falls back to the
numpy implementation when numba is unavailable.  Agreement between the two
paths is covered by tests.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @njit(cache=True)
    def _deriv(sg, om, h, te, inertia, A, ds, do):
        s2 = sg[0] * sg[0] + sg[1] * sg[1] + sg[2] * sg[2]
        dot = sg[0] * om[0] + sg[1] * om[1] + sg[2] * om[2]
        cx = sg[1] * om[2] - sg[2] * om[1]
        cy = sg[2] * om[0] - sg[0] * om[2]
        cz = sg[0] * om[1] - sg[1] * om[0]
        ds[0] = 0.25 * ((1.0 - s2) * om[0] + 2.0 * cx + 2.0 * dot * sg[0])
        ds[1] = 0.25 * ((1.0 - s2) * om[1] + 2.0 * cy + 2.0 * dot * sg[1])
        ds[2] = 0.25 * ((1.0 - s2) * om[2] + 2.0 * cz + 2.0 * dot * sg[2])
        H0 = inertia * om[0] + (A[0, 0] * h[0] + A[0, 1] * h[1] + A[0, 2] * h[2])
        H1 = inertia * om[1] + (A[1, 0] * h[0] + A[1, 1] * h[1] + A[1, 2] * h[2])
        H2 = inertia * om[2] + (A[2, 0] * h[0] + A[2, 1] * h[1] + A[2, 2] * h[2])
        At0 = A[0, 0] * te[0] + A[0, 1] * te[1] + A[0, 2] * te[2]
        At1 = A[1, 0] * te[0] + A[1, 1] * te[1] + A[1, 2] * te[2]
        At2 = A[2, 0] * te[0] + A[2, 1] * te[1] + A[2, 2] * te[2]
        wx = om[1] * H2 - om[2] * H1
        wy = om[2] * H0 - om[0] * H2
        wz = om[0] * H1 - om[1] * H0
        do[0] = (-wx - At0) / inertia
        do[1] = (-wy - At1) / inertia
        do[2] = (-wz - At2) / inertia

    @njit(cache=True)
    def _integrate(sigma, omega, speeds, tau, inertia, axes, wheel_inertia,
                   max_speed, efficiency, dt, substeps,
                   out_sigma, out_omega, out_speeds, out_sat, out_power):
        n_craft = sigma.shape[0]
        sub_dt = dt / substeps
        sg = np.empty(3)
        om = np.empty(3)
        h = np.empty(3)
        te = np.empty(3)
        tmp_s = np.empty(3)
        tmp_o = np.empty(3)
        tmp_h = np.empty(3)
        k1s = np.empty(3); k1o = np.empty(3)
        k2s = np.empty(3); k2o = np.empty(3)
        k3s = np.empty(3); k3o = np.empty(3)
        k4s = np.empty(3); k4o = np.empty(3)

        for n in range(n_craft):
            J = wheel_inertia[n]
            inert = inertia[n]
            A = axes[n]
            hmax = J * max_speed[n]
            for kk in range(3):
                sg[kk] = sigma[n, kk]
                om[kk] = omega[n, kk]
                h[kk] = J * speeds[n, kk]
            sat = False
            energy = 0.0

            for _ in range(substeps):
                for kk in range(3):
                    t_k = tau[n, kk]
                    if (h[kk] >= hmax and t_k > 0.0) or (h[kk] <= -hmax and t_k < 0.0):
                        te[kk] = 0.0
                        sat = True
                    else:
                        te[kk] = t_k
                    energy += abs(te[kk] * (h[kk] / J)) * sub_dt

                _deriv(sg, om, h, te, inert, A, k1s, k1o)
                for kk in range(3):
                    tmp_s[kk] = sg[kk] + 0.5 * sub_dt * k1s[kk]
                    tmp_o[kk] = om[kk] + 0.5 * sub_dt * k1o[kk]
                    tmp_h[kk] = h[kk] + 0.5 * sub_dt * te[kk]
                _deriv(tmp_s, tmp_o, tmp_h, te, inert, A, k2s, k2o)
                for kk in range(3):
                    tmp_s[kk] = sg[kk] + 0.5 * sub_dt * k2s[kk]
                    tmp_o[kk] = om[kk] + 0.5 * sub_dt * k2o[kk]
                _deriv(tmp_s, tmp_o, tmp_h, te, inert, A, k3s, k3o)
                for kk in range(3):
                    tmp_s[kk] = sg[kk] + sub_dt * k3s[kk]
                    tmp_o[kk] = om[kk] + sub_dt * k3o[kk]
                    tmp_h[kk] = h[kk] + sub_dt * te[kk]
                _deriv(tmp_s, tmp_o, tmp_h, te, inert, A, k4s, k4o)
                for kk in range(3):
                    sg[kk] = sg[kk] + (sub_dt / 6.0) * (
                        k1s[kk] + 2.0 * k2s[kk] + 2.0 * k3s[kk] + k4s[kk]
                    )
                    om[kk] = om[kk] + (sub_dt / 6.0) * (
                        k1o[kk] + 2.0 * k2o[kk] + 2.0 * k3o[kk] + k4o[kk]
                    )
                    h[kk] = h[kk] + (sub_dt / 6.0) * (
                        te[kk] + 2.0 * te[kk] + 2.0 * te[kk] + te[kk]
                    )
                    if h[kk] > hmax:
                        h[kk] = hmax
                        sat = True
                    elif h[kk] < -hmax:
                        h[kk] = -hmax
                        sat = True
                s2 = sg[0] * sg[0] + sg[1] * sg[1] + sg[2] * sg[2]
                if s2 > 1.0:
                    for kk in range(3):
                        sg[kk] = -sg[kk] / s2

            for kk in range(3):
                out_sigma[n, kk] = sg[kk]
                out_omega[n, kk] = om[kk]
                out_speeds[n, kk] = h[kk] / J
            out_sat[n] = sat
            out_power[n] = energy / (efficiency[n] * dt)

    def integrate_attitude(sigma, omega, speeds, tau, inertia, axes,
                           wheel_inertia, max_speed, efficiency, dt, substeps):
        n = sigma.shape[0]
        out_sigma = np.empty((n, 3))
        out_omega = np.empty((n, 3))
        out_speeds = np.empty((n, 3))
        out_sat = np.zeros(n, dtype=np.bool_)
        out_power = np.empty(n)
        _integrate(
            np.ascontiguousarray(sigma, dtype=np.float64),
            np.ascontiguousarray(omega, dtype=np.float64),
            np.ascontiguousarray(speeds, dtype=np.float64),
            np.ascontiguousarray(tau, dtype=np.float64),
            np.ascontiguousarray(inertia, dtype=np.float64),
            np.ascontiguousarray(axes, dtype=np.float64),
            np.ascontiguousarray(wheel_inertia, dtype=np.float64),
            np.ascontiguousarray(max_speed, dtype=np.float64),
            np.ascontiguousarray(efficiency, dtype=np.float64),
            float(dt), int(substeps),
            out_sigma, out_omega, out_speeds, out_sat, out_power,
        )
        return out_sigma, out_omega, out_speeds, out_sat, out_power

else:  # pragma: no cover

    def integrate_attitude(sigma, omega, speeds, tau, inertia, axes,
                           wheel_inertia, max_speed, efficiency, dt, substeps):
        from .attitude import integrate_attitude_numpy

        return integrate_attitude_numpy(
            sigma, omega, speeds, tau, inertia, axes, wheel_inertia,
            max_speed, efficiency, dt, substeps,
        )
