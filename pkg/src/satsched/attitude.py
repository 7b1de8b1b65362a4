"""Rigid-body attitude dynamics with reaction wheels and MRP feedback control.

Attitude is parameterized by Modified Rodrigues Parameters (MRP).  ``sigma``
is the attitude of the body frame relative to inertial; ``mrp_to_dcm(sigma)``
returns the direction cosine matrix C = [BN] mapping inertial coordinates to
body coordinates (v_B = C @ v_N).  For a body frame rotated by angle theta
about unit axis e, sigma = e * tan(theta/4).  Whenever |sigma|^2 > 1 the
shadow set -sigma/|sigma|^2 is used, so the representation never approaches
the 360-degree singularity.

The spacecraft model: a rigid body with scaled-identity inertia and an
orthonormal triad of reaction wheels.  With A the matrix whose columns are
the wheel spin axes, h_k = J_w * Omega_k the wheel angular momenta, and tau_k
the motor torques,

    body:   I * domega/dt = -omega x (I*omega + A h) - A tau
    wheels: dh_k/dt = tau_k

which conserves the total angular momentum [NB](I*omega + A h) exactly.
Motor torque on a wheel at its speed limit that would drive it further
outward is zeroed (the wheel/body torque pair vanishes together, so the
conservation law survives saturation).

The feedback law tracks a fixed inertial reference attitude:

    u = -k*sigma_err - p*omega - ki*z,   z <- clip(z + sigma_err*dt, +/-lim)

with the integrator update applied before use.  The commanded body torque is
distributed to the wheels through the orthonormal triad (tau = -A^T u) and
held constant over one control step, which is integrated with RK4 internal
substeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_WHEEL_SPEED_RPM = 6000.0
MAX_WHEEL_SPEED_RAD_S = MAX_WHEEL_SPEED_RPM * 2.0 * math.pi / 60.0


# ---------------------------------------------------------------------------
# MRP algebra
# ---------------------------------------------------------------------------

def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def mrp_to_dcm(sigma: np.ndarray) -> np.ndarray:
    """DCM [BN] from an MRP attitude (inertial -> body)."""
    sigma = np.asarray(sigma, dtype=float)
    s2 = float(sigma @ sigma)
    S = skew(sigma)
    return np.eye(3) + (8.0 * S @ S - 4.0 * (1.0 - s2) * S) / (1.0 + s2) ** 2


def mrp_to_dcm_batch(sigma: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mrp_to_dcm` for (N, 3) input -> (N, 3, 3)."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0]
    s2 = np.sum(sigma * sigma, axis=1)
    S = np.zeros((n, 3, 3))
    S[:, 0, 1] = -sigma[:, 2]
    S[:, 0, 2] = sigma[:, 1]
    S[:, 1, 0] = sigma[:, 2]
    S[:, 1, 2] = -sigma[:, 0]
    S[:, 2, 0] = -sigma[:, 1]
    S[:, 2, 1] = sigma[:, 0]
    SS = S @ S
    scale = (1.0 + s2) ** 2
    return np.eye(3)[None] + (8.0 * SS - 4.0 * (1.0 - s2)[:, None, None] * S) / scale[:, None, None]


def mrp_shadow(sigma: np.ndarray) -> np.ndarray:
    """Map to the shadow set: -sigma / |sigma|^2."""
    s2 = float(np.dot(sigma, sigma))
    return -sigma / s2


def mrp_normalize(sigma: np.ndarray) -> np.ndarray:
    """Switch to the shadow set whenever |sigma|^2 > 1 (short rotation kept)."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 1:
        return mrp_shadow(sigma) if sigma @ sigma > 1.0 else sigma
    s2 = np.sum(sigma * sigma, axis=-1, keepdims=True)
    safe = np.where(s2 > 1.0, s2, 1.0)  # avoid 0/0 on the untaken branch
    return np.where(s2 > 1.0, -sigma / safe, sigma)


def mrp_angle(sigma: np.ndarray) -> float | np.ndarray:
    """Principal rotation angle (rad) encoded by an MRP, 4*atan(|sigma|)."""
    norm = np.linalg.norm(sigma, axis=-1)
    return 4.0 * np.arctan(norm)


def mrp_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """MRP of a body frame rotated by ``angle`` about unit ``axis``."""
    axis = np.asarray(axis, dtype=float)
    return axis / np.linalg.norm(axis) * math.tan(angle / 4.0)


def mrp_to_quat(sigma: np.ndarray) -> np.ndarray:
    """Scalar-first unit quaternion of the same attitude (w >= 0 branch)."""
    sigma = np.asarray(sigma, dtype=float)
    s2 = np.sum(sigma * sigma, axis=-1, keepdims=True)
    w = (1.0 - s2) / (1.0 + s2)
    v = 2.0 * sigma / (1.0 + s2)
    return np.concatenate([w, v], axis=-1)


def quat_to_mrp(q: np.ndarray) -> np.ndarray:
    """MRP from a scalar-first quaternion; sign chosen so |sigma| <= 1."""
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        if q[0] < 0.0:
            q = -q
        return q[1:] / (1.0 + q[0])
    flip = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    q = q * flip
    return q[..., 1:] / (1.0 + q[..., :1])


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product; composes so that C(q1 (x) q2) = C(q2) @ C(q1)."""
    w1, v1 = q1[..., :1], q1[..., 1:]
    w2, v2 = q2[..., :1], q2[..., 1:]
    w = w1 * w2 - np.sum(v1 * v2, axis=-1, keepdims=True)
    v = w1 * v2 + w2 * v1 + np.cross(v1, v2)
    return np.concatenate([w, v], axis=-1)


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=float, copy=True)
    out[..., 1:] *= -1.0
    return out


def dcm_to_mrp(C: np.ndarray) -> np.ndarray:
    """MRP of a DCM via quaternion extraction (Shepperd's method)."""
    C = np.asarray(C, dtype=float)
    tr = C[0, 0] + C[1, 1] + C[2, 2]
    b2 = np.array(
        [
            (1.0 + tr) / 4.0,
            (1.0 + 2.0 * C[0, 0] - tr) / 4.0,
            (1.0 + 2.0 * C[1, 1] - tr) / 4.0,
            (1.0 + 2.0 * C[2, 2] - tr) / 4.0,
        ]
    )
    i = int(np.argmax(b2))
    q = np.empty(4)
    if i == 0:
        q[0] = math.sqrt(b2[0])
        q[1] = (C[1, 2] - C[2, 1]) / (4.0 * q[0])
        q[2] = (C[2, 0] - C[0, 2]) / (4.0 * q[0])
        q[3] = (C[0, 1] - C[1, 0]) / (4.0 * q[0])
    elif i == 1:
        q[1] = math.sqrt(b2[1])
        q[0] = (C[1, 2] - C[2, 1]) / (4.0 * q[1])
        q[2] = (C[0, 1] + C[1, 0]) / (4.0 * q[1])
        q[3] = (C[2, 0] + C[0, 2]) / (4.0 * q[1])
    elif i == 2:
        q[2] = math.sqrt(b2[2])
        q[0] = (C[2, 0] - C[0, 2]) / (4.0 * q[2])
        q[1] = (C[0, 1] + C[1, 0]) / (4.0 * q[2])
        q[3] = (C[1, 2] + C[2, 1]) / (4.0 * q[2])
    else:
        q[3] = math.sqrt(b2[3])
        q[0] = (C[0, 1] - C[1, 0]) / (4.0 * q[3])
        q[1] = (C[2, 0] + C[0, 2]) / (4.0 * q[3])
        q[2] = (C[1, 2] + C[2, 1]) / (4.0 * q[3])
    return quat_to_mrp(q)


def mrp_error(sigma: np.ndarray, sigma_ref: np.ndarray) -> np.ndarray:
    """MRP of the body attitude relative to a reference: C_err = C(s) C(ref)^T."""
    q = mrp_to_quat(sigma)
    q_ref = mrp_to_quat(sigma_ref)
    return quat_to_mrp(quat_multiply(quat_conjugate(q_ref), q))


def mrp_kinematics(sigma: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """dsigma/dt = 1/4 [(1 - s^2) I + 2 skew(sigma) + 2 sigma sigma^T] omega.

    Broadcasts over leading axes (sigma and omega of shape (..., 3)).
    """
    sigma = np.asarray(sigma, dtype=float)
    omega = np.asarray(omega, dtype=float)
    s2 = np.sum(sigma * sigma, axis=-1, keepdims=True)
    dot = np.sum(sigma * omega, axis=-1, keepdims=True)
    return 0.25 * ((1.0 - s2) * omega + 2.0 * np.cross(sigma, omega) + 2.0 * dot * sigma)


# ---------------------------------------------------------------------------
# Guidance
# ---------------------------------------------------------------------------

def pointing_reference(
    sat_pos: np.ndarray, target_pos: np.ndarray, boresight_body: np.ndarray
) -> np.ndarray:
    """Reference MRP that aims the body boresight along the line of sight.

    Returns the minimal rotation taking the inertial LOS direction onto the
    body boresight axis, i.e. C(sigma_ref) @ los_hat = boresight_body, so a
    body at the reference attitude has its boresight pointing at the target.
    """
    return pointing_reference_batch(
        np.asarray(sat_pos, dtype=float)[None, :],
        np.asarray(target_pos, dtype=float)[None, :],
        np.asarray(boresight_body, dtype=float),
    )[0]


def pointing_reference_batch(
    sat_pos: np.ndarray, target_pos: np.ndarray, boresight_body: np.ndarray
) -> np.ndarray:
    los = target_pos - sat_pos
    los = los / np.linalg.norm(los, axis=-1, keepdims=True)
    b = boresight_body / np.linalg.norm(boresight_body)
    cross = np.cross(b[None, :], los)  # rotation axis (see module notes)
    sin_th = np.linalg.norm(cross, axis=-1)
    cos_th = los @ b
    angle = np.arctan2(sin_th, cos_th)

    axis = np.zeros_like(los)
    ok = sin_th > 1e-12
    axis[ok] = cross[ok] / sin_th[ok, None]
    # Anti-parallel LOS: any axis perpendicular to the boresight works; pick
    # one deterministically.
    anti = (~ok) & (cos_th < 0.0)
    if np.any(anti):
        helper = np.array([1.0, 0.0, 0.0])
        if abs(b @ helper) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        perp = np.cross(b, helper)
        axis[anti] = perp / np.linalg.norm(perp)
    return axis * np.tan(angle / 4.0)[:, None]


# ---------------------------------------------------------------------------
# Wheel geometry and control parameters
# ---------------------------------------------------------------------------

def euler_zyx_matrix(angles_deg: tuple[float, float, float] | np.ndarray) -> np.ndarray:
    """Rotation matrix R = Rz(a0) @ Ry(a1) @ Rx(a2), angles in degrees.

    Used to orient asset-frame triads (wheel axes, panel normal) in the body
    frame: the columns of the result are the rotated x/y/z axes.
    """
    a0, a1, a2 = np.radians(np.asarray(angles_deg, dtype=float))
    c0, s0 = math.cos(a0), math.sin(a0)
    c1, s1 = math.cos(a1), math.sin(a1)
    c2, s2 = math.cos(a2), math.sin(a2)
    rz = np.array([[c0, -s0, 0.0], [s0, c0, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[c1, 0.0, s1], [0.0, 1.0, 0.0], [-s1, 0.0, c1]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, c2, -s2], [0.0, s2, c2]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class ControlGains:
    """MRP feedback gains: proportional k, integral ki, rate p, clamp limit."""

    k: float
    ki: float
    p: float
    integral_limit: float


@dataclass
class ReactionWheelSet:
    """Orthonormal three-wheel assembly.

    ``axes`` holds the wheel spin directions as matrix columns (body frame);
    ``speeds`` are signed wheel rates in rad/s.  ``wheel_inertia`` is derived
    so that the momentum envelope is hit exactly at the 6000 rpm speed limit.
    """

    axes: np.ndarray  # (3, 3), columns = spin axes
    max_momentum: float  # per-wheel envelope, kg m^2/s
    power_rating: float  # W (asset descriptor; not a torque limit)
    efficiency: float  # electrical-to-mechanical, 0..1
    speeds: np.ndarray = field(default_factory=lambda: np.zeros(3))  # rad/s
    max_speed: float = MAX_WHEEL_SPEED_RAD_S  # rad/s
    wheel_inertia: float = 0.0  # kg m^2, derived in __post_init__ if zero

    def __post_init__(self) -> None:
        self.axes = np.asarray(self.axes, dtype=float)
        self.speeds = np.asarray(self.speeds, dtype=float)
        if self.wheel_inertia == 0.0:
            self.wheel_inertia = self.max_momentum / self.max_speed

    def momenta(self) -> np.ndarray:
        return self.wheel_inertia * self.speeds


# ---------------------------------------------------------------------------
# Dynamics integration (vectorized over an ensemble of spacecraft)
# ---------------------------------------------------------------------------

def _ensemble_derivatives(
    sigma: np.ndarray,
    omega: np.ndarray,
    wheel_h: np.ndarray,
    tau: np.ndarray,
    inertia: np.ndarray,
    axes: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time derivatives of (sigma, omega, wheel momenta) for N spacecraft."""
    sigma_dot = mrp_kinematics(sigma, omega)
    Ah = np.einsum("nij,nj->ni", axes, wheel_h)
    Atau = np.einsum("nij,nj->ni", axes, tau)
    H = inertia[:, None] * omega + Ah
    omega_dot = (-np.cross(omega, H) - Atau) / inertia[:, None]
    return sigma_dot, omega_dot, tau


def integrate_attitude_numpy(
    sigma: np.ndarray,
    omega: np.ndarray,
    speeds: np.ndarray,
    tau: np.ndarray,
    inertia: np.ndarray,
    axes: np.ndarray,
    wheel_inertia: np.ndarray,
    max_speed: np.ndarray,
    efficiency: np.ndarray,
    dt: float,
    substeps: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Reference RK4 integrator for one control step of N spacecraft.

    Motor torques ``tau`` (N, 3) are held over the step; a wheel at its speed
    limit being driven further outward has its torque zeroed for the substep
    (checked at each substep boundary).  Returns updated (sigma, omega,
    speeds), a per-craft saturation flag, and the mean electrical wheel power
    over the step (W).
    """
    sigma = sigma.copy()
    omega = omega.copy()
    h = wheel_inertia[:, None] * speeds
    h_max = wheel_inertia * max_speed
    sub_dt = dt / substeps
    saturated = np.zeros(sigma.shape[0], dtype=bool)
    energy = np.zeros(sigma.shape[0])

    for _ in range(substeps):
        outward = ((h >= h_max[:, None]) & (tau > 0.0)) | (
            (h <= -h_max[:, None]) & (tau < 0.0)
        )
        saturated |= outward.any(axis=1)
        tau_eff = np.where(outward, 0.0, tau)
        energy += np.sum(np.abs(tau_eff * (h / wheel_inertia[:, None])), axis=1) * sub_dt

        k1 = _ensemble_derivatives(sigma, omega, h, tau_eff, inertia, axes)
        k2 = _ensemble_derivatives(
            sigma + 0.5 * sub_dt * k1[0], omega + 0.5 * sub_dt * k1[1],
            h + 0.5 * sub_dt * k1[2], tau_eff, inertia, axes,
        )
        k3 = _ensemble_derivatives(
            sigma + 0.5 * sub_dt * k2[0], omega + 0.5 * sub_dt * k2[1],
            h + 0.5 * sub_dt * k2[2], tau_eff, inertia, axes,
        )
        k4 = _ensemble_derivatives(
            sigma + sub_dt * k3[0], omega + sub_dt * k3[1],
            h + sub_dt * k3[2], tau_eff, inertia, axes,
        )
        sigma = sigma + (sub_dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        omega = omega + (sub_dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        h = h + (sub_dt / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])

        over = np.abs(h) > h_max[:, None]
        if over.any():
            saturated |= over.any(axis=1)
            h = np.clip(h, -h_max[:, None], h_max[:, None])
        sigma = mrp_normalize(sigma)

    power = energy / (efficiency * dt)
    return sigma, omega, h / wheel_inertia[:, None], saturated, power


def feedback_torque_batch(
    sigma_err: np.ndarray,
    omega: np.ndarray,
    integral: np.ndarray,
    k: np.ndarray,
    ki: np.ndarray,
    p: np.ndarray,
    integral_limit: np.ndarray,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """MRP feedback: returns (commanded body torque u, updated integral z)."""
    z = np.clip(
        integral + sigma_err * dt,
        -integral_limit[:, None],
        integral_limit[:, None],
    )
    u = -k[:, None] * sigma_err - p[:, None] * omega - ki[:, None] * z
    return u, z


def control_and_integrate(
    sigma: np.ndarray,
    omega: np.ndarray,
    speeds: np.ndarray,
    integral: np.ndarray,
    sigma_ref: np.ndarray,
    hold_mask: np.ndarray,
    k: np.ndarray,
    ki: np.ndarray,
    p: np.ndarray,
    integral_limit: np.ndarray,
    inertia: np.ndarray,
    axes: np.ndarray,
    wheel_inertia: np.ndarray,
    max_speed: np.ndarray,
    efficiency: np.ndarray,
    dt: float,
    substeps: int,
    use_fast_kernel: bool = True,
) -> dict:
    """One full control step for N spacecraft.

    ``hold_mask`` marks craft with no pointing target: their attitude error
    is zero, so the law reduces to rate damping.  The commanded torque is
    mapped to wheel motor torques through the orthonormal triad and held for
    the whole step.  Returns a dict with the new state arrays plus
    ``saturated`` flags and mean ``wheel_power`` in watts.
    """
    err = mrp_error_batch(sigma, sigma_ref)
    err[hold_mask] = 0.0
    u, z = feedback_torque_batch(err, omega, integral, k, ki, p, integral_limit, dt)
    tau = -np.einsum("nij,ni->nj", axes, u)

    if use_fast_kernel:
        from . import _kernels

        new_sigma, new_omega, new_speeds, saturated, power = _kernels.integrate_attitude(
            sigma, omega, speeds, tau, inertia, axes, wheel_inertia,
            max_speed, efficiency, dt, substeps,
        )
    else:
        new_sigma, new_omega, new_speeds, saturated, power = integrate_attitude_numpy(
            sigma, omega, speeds, tau, inertia, axes, wheel_inertia,
            max_speed, efficiency, dt, substeps,
        )
    return {
        "sigma": new_sigma,
        "omega": new_omega,
        "speeds": new_speeds,
        "integral": z,
        "saturated": saturated,
        "wheel_power": power,
        "pointing_error": err,
    }


def mrp_error_batch(sigma: np.ndarray, sigma_ref: np.ndarray) -> np.ndarray:
    q = mrp_to_quat(sigma)
    q_ref = mrp_to_quat(sigma_ref)
    return quat_to_mrp(quat_multiply(quat_conjugate(q_ref), q))


# ---------------------------------------------------------------------------
# Control-loop validation (rest-to-rest slew gate)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlewTest:
    """Rest-to-rest slew acceptance test for a spacecraft control loop."""

    angle_deg: float = 60.0
    duration_s: float = 120.0
    settle_tol_deg: float = 0.5
    rate_tol: float = 0.01  # rad/s
    control_dt: float = 1.0
    substeps: int = 10
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class SlewResult:
    passed: bool
    final_error_deg: float
    final_rate: float
    saturated: bool
    settle_time_s: float  # first time the error enters and stays in band
    peak_momentum_fraction: float


def run_slew_test(
    inertia: float,
    gains: ControlGains,
    wheels: ReactionWheelSet,
    test: SlewTest = SlewTest(),
    use_fast_kernel: bool = True,
) -> SlewResult:
    """Simulate a rest-to-rest slew and grade it.

    Pass requires: finite states throughout, no wheel saturation, pointing
    error below the settle tolerance at the end of the window, and body rate
    below the rate tolerance.
    """
    sigma_ref = mrp_from_axis_angle(np.asarray(test.axis), math.radians(test.angle_deg))

    sigma = np.zeros((1, 3))
    omega = np.zeros((1, 3))
    speeds = wheels.speeds[None, :].copy()
    integral = np.zeros((1, 3))
    axes = wheels.axes[None]
    inertia_arr = np.array([inertia])
    k = np.array([gains.k])
    ki = np.array([gains.ki])
    p = np.array([gains.p])
    lim = np.array([gains.integral_limit])
    J = np.array([wheels.wheel_inertia])
    vmax = np.array([wheels.max_speed])
    eff = np.array([wheels.efficiency])
    hold = np.zeros(1, dtype=bool)
    ref = sigma_ref[None, :]

    steps = int(round(test.duration_s / test.control_dt))
    saturated = False
    peak_h = 0.0
    errors = np.empty(steps)
    for i in range(steps):
        out = control_and_integrate(
            sigma, omega, speeds, integral, ref, hold,
            k, ki, p, lim, inertia_arr, axes, J, vmax, eff,
            test.control_dt, test.substeps, use_fast_kernel=use_fast_kernel,
        )
        sigma, omega, speeds, integral = (
            out["sigma"], out["omega"], out["speeds"], out["integral"],
        )
        saturated = saturated or bool(out["saturated"][0])
        peak_h = max(peak_h, float(np.max(np.abs(speeds)) * wheels.wheel_inertia))
        err = mrp_error(sigma[0], sigma_ref)
        errors[i] = math.degrees(mrp_angle(err))
        if not (np.isfinite(sigma).all() and np.isfinite(omega).all()):
            return SlewResult(False, float("nan"), float("nan"), saturated,
                              float("inf"), peak_h / wheels.max_momentum)

    final_error = float(errors[-1])
    final_rate = float(np.linalg.norm(omega[0]))
    in_band = errors < test.settle_tol_deg
    settle = float("inf")
    if in_band[-1]:
        # walk back to the start of the final in-band stretch
        idx = steps - 1
        while idx > 0 and in_band[idx - 1]:
            idx -= 1
        settle = (idx + 1) * test.control_dt
    passed = (
        final_error < test.settle_tol_deg
        and final_rate < test.rate_tol
        and not saturated
    )
    return SlewResult(
        passed=passed,
        final_error_deg=final_error,
        final_rate=final_rate,
        saturated=saturated,
        settle_time_s=settle,
        peak_momentum_fraction=peak_h / wheels.max_momentum,
    )
