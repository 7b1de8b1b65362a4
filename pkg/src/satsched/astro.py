"""Two-body orbital mechanics, ground-target geometry, and illumination.

Frames and conventions
----------------------
Everything runs in an Earth-centered inertial (ECI) frame with a spherical,
uniformly rotating Earth.  The Earth-fixed frame is aligned with ECI at the
scenario epoch (``gmst_at_epoch = 0``) and rotates about +z at the sidereal
rate.  The Sun is a fixed direction at infinity (default +x) with constant
flux; eclipse is a cylindrical Earth shadow.  Units: km, km/s, rad, s, unless
a name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Physical constants (spherical Earth model).
MU_EARTH = 398600.4418  # gravitational parameter, km^3/s^2
R_EARTH = 6371.0  # mean radius, km
OMEGA_EARTH = 7.2921159e-5  # sidereal rotation rate, rad/s
SOLAR_FLUX = 1361.0  # W/m^2 at 1 AU


class KeplerConvergenceError(RuntimeError):
    """Raised when the Kepler solver fails to reach tolerance."""


@dataclass(frozen=True)
class EarthModel:
    """Central-body and illumination constants for one scenario.

    ``sun_direction`` is a unit vector in ECI; the Sun is treated as fixed
    over a scenario horizon (an hour of simulated time moves the true Sun
    by ~0.04 deg, far below the sensitivity of the power model).
    """

    mu: float = MU_EARTH
    radius: float = R_EARTH
    rotation_rate: float = OMEGA_EARTH
    gmst_at_epoch: float = 0.0
    solar_flux: float = SOLAR_FLUX
    sun_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def sun_unit(self) -> np.ndarray:
        v = np.asarray(self.sun_direction, dtype=float)
        return v / np.linalg.norm(v)


DEFAULT_EARTH = EarthModel()


@dataclass(frozen=True)
class OrbitalElements:
    """Classical Keplerian elements. Angles in degrees, semi-major axis km."""

    semi_major_axis: float
    eccentricity: float
    inclination: float
    raan: float
    arg_perigee: float
    true_anomaly: float  # at epoch


@dataclass(frozen=True)
class StateVectorECI:
    position: np.ndarray  # (3,) km
    velocity: np.ndarray  # (3,) km/s


@dataclass(frozen=True)
class GeodeticTarget:
    """Fixed ground point. Latitude/longitude in degrees (spherical Earth)."""

    latitude: float
    longitude: float


def orbital_period(semi_major_axis: float, mu: float = MU_EARTH) -> float:
    """Keplerian period T = 2*pi*sqrt(a^3/mu), seconds."""
    return 2.0 * math.pi * math.sqrt(semi_major_axis**3 / mu)


def solve_kepler(
    mean_anomaly: np.ndarray | float,
    eccentricity: np.ndarray | float,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> np.ndarray | float:
    """Solve Kepler's equation E - e*sin(E) = M for eccentric anomaly E.

    Newton iteration from E0 = M + e*sin(M), tolerance on |dE| in radians.
    Entries that have not converged after ``max_iter`` Newton steps fall back
    to bisection on [M - e, M + e] (which always brackets the root for e < 1);
    if that also fails a :class:`KeplerConvergenceError` is raised.  Works
    elementwise on arrays.
    """
    scalar = np.isscalar(mean_anomaly) and np.isscalar(eccentricity)
    M = np.atleast_1d(np.asarray(mean_anomaly, dtype=float))
    e = np.broadcast_to(np.asarray(eccentricity, dtype=float), M.shape).copy()
    if np.any((e < 0.0) | (e >= 1.0)):
        raise ValueError("eccentricity must lie in [0, 1)")

    E = M + e * np.sin(M)
    converged = np.zeros(M.shape, dtype=bool)
    for _ in range(max_iter):
        f = E - e * np.sin(E) - M
        fp = 1.0 - e * np.cos(E)
        step = f / fp
        E = np.where(converged, E, E - step)
        converged |= np.abs(step) < tol
        if converged.all():
            break

    if not converged.all():
        idx = np.flatnonzero(~converged)
        for i in idx:
            E[i] = _bisect_kepler(float(M[i]), float(e[i]), tol)

    return float(E[0]) if scalar else E.reshape(np.shape(mean_anomaly))


def _bisect_kepler(M: float, e: float, tol: float) -> float:
    lo, hi = M - e, M + e
    flo = lo - e * math.sin(lo) - M
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = mid - e * math.sin(mid) - M
        if fmid == 0.0 or (hi - lo) < tol:
            return mid
        if (flo < 0.0) == (fmid < 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    raise KeplerConvergenceError(f"bisection stalled at M={M!r}, e={e!r}")


def true_to_eccentric(nu: float, e: float) -> float:
    """Eccentric anomaly from true anomaly (radians)."""
    return math.atan2(math.sqrt(1.0 - e * e) * math.sin(nu), e + math.cos(nu))


def _perifocal_basis(elements: OrbitalElements) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors (p_hat, q_hat) of the perifocal frame expressed in ECI."""
    inc = math.radians(elements.inclination)
    raan = math.radians(elements.raan)
    argp = math.radians(elements.arg_perigee)
    cO, sO = math.cos(raan), math.sin(raan)
    ci, si = math.cos(inc), math.sin(inc)
    cw, sw = math.cos(argp), math.sin(argp)
    p_hat = np.array(
        [cO * cw - sO * sw * ci, sO * cw + cO * sw * ci, sw * si]
    )
    q_hat = np.array(
        [-cO * sw - sO * cw * ci, -sO * sw + cO * cw * ci, cw * si]
    )
    return p_hat, q_hat


def propagate_orbit(
    elements: OrbitalElements, t: float, earth: EarthModel = DEFAULT_EARTH
) -> StateVectorECI:
    """Two-body state at ``t`` seconds past epoch (closed-form Kepler)."""
    pos, vel = OrbitEnsemble([elements], earth).states_at(np.asarray([t], dtype=float))
    return StateVectorECI(position=pos[0, 0], velocity=vel[0, 0])


class OrbitEnsemble:
    """Vectorized propagator for a fixed set of orbits.

    Precomputes the perifocal bases once; ``states_at(times)`` then returns
    positions and velocities of shape ``(len(times), n_orbits, 3)``.  Used by
    the simulator to tabulate a full horizon up front.
    """

    def __init__(self, elements: list[OrbitalElements], earth: EarthModel = DEFAULT_EARTH):
        self.earth = earth
        self.n = len(elements)
        self.a = np.array([el.semi_major_axis for el in elements])
        self.e = np.array([el.eccentricity for el in elements])
        self.mean_motion = np.sqrt(earth.mu / self.a**3)
        nu0 = np.radians([el.true_anomaly for el in elements])
        E0 = np.arctan2(
            np.sqrt(1.0 - self.e**2) * np.sin(nu0), self.e + np.cos(nu0)
        )
        self.M0 = E0 - self.e * np.sin(E0)
        bases = [_perifocal_basis(el) for el in elements]
        self.p_hat = np.array([b[0] for b in bases])  # (n, 3)
        self.q_hat = np.array([b[1] for b in bases])

    def states_at(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(times, dtype=float)
        M = self.M0[None, :] + self.mean_motion[None, :] * times[:, None]
        E = solve_kepler(M, np.broadcast_to(self.e, M.shape))
        cosE, sinE = np.cos(E), np.sin(E)
        boa = np.sqrt(1.0 - self.e**2)
        x = self.a * (cosE - self.e)
        y = (self.a * boa) * sinE
        r = self.a * (1.0 - self.e * cosE)
        Edot = self.mean_motion * self.a / r
        vx = -self.a * sinE * Edot
        vy = (self.a * boa) * cosE * Edot
        pos = x[..., None] * self.p_hat[None] + y[..., None] * self.q_hat[None]
        vel = vx[..., None] * self.p_hat[None] + vy[..., None] * self.q_hat[None]
        return pos, vel


def earth_rotation_angle(t: float, earth: EarthModel = DEFAULT_EARTH) -> float:
    """Angle of the Earth-fixed frame past ECI at time t (rad)."""
    return earth.gmst_at_epoch + earth.rotation_rate * t


def target_ecef_unit(target: GeodeticTarget) -> np.ndarray:
    """Unit vector of a ground point in the Earth-fixed frame."""
    lat = math.radians(target.latitude)
    lon = math.radians(target.longitude)
    return np.array(
        [math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]
    )


def target_position_eci(
    target: GeodeticTarget, t: float, earth: EarthModel = DEFAULT_EARTH
) -> np.ndarray:
    """ECI position (km) of a ground target at time t."""
    u = target_ecef_unit(target)
    return earth.radius * rotate_ecef_to_eci(u[None, :], t, earth)[0]


def rotate_ecef_to_eci(
    vectors: np.ndarray, t: float, earth: EarthModel = DEFAULT_EARTH
) -> np.ndarray:
    """Rotate (N, 3) Earth-fixed vectors into ECI at time t."""
    theta = earth_rotation_angle(t, earth)
    c, s = math.cos(theta), math.sin(theta)
    out = np.empty_like(vectors)
    out[:, 0] = c * vectors[:, 0] - s * vectors[:, 1]
    out[:, 1] = s * vectors[:, 0] + c * vectors[:, 1]
    out[:, 2] = vectors[:, 2]
    return out


def visibility_check(
    sat_pos: np.ndarray,
    target_pos: np.ndarray,
    earth: EarthModel = DEFAULT_EARTH,
    min_elevation: float = 0.0,
) -> bool | np.ndarray:
    """True when the satellite is above the target's local horizon.

    Elevation is the angle of the target->satellite line above the local
    tangent plane; the mask defaults to 0 deg (geometric horizon).
    Broadcasts over leading axes of both inputs.
    """
    los = sat_pos - target_pos
    rng = np.linalg.norm(los, axis=-1)
    up = target_pos / np.linalg.norm(target_pos, axis=-1, keepdims=True)
    sin_el = np.sum(los * up, axis=-1) / rng
    return sin_el >= math.sin(min_elevation)


def eclipse_check(
    sat_pos: np.ndarray, earth: EarthModel = DEFAULT_EARTH
) -> bool | np.ndarray:
    """True when the satellite is inside the cylindrical Earth shadow.

    The shadow is the half-cylinder of radius R_E anti-sunward of Earth:
    the satellite is eclipsed iff its sun-axis coordinate is negative and
    its distance from the shadow axis is below the Earth radius.
    """
    sun = earth.sun_unit()
    axial = np.sum(sat_pos * sun, axis=-1)
    radial2 = np.sum(sat_pos * sat_pos, axis=-1) - axial**2
    return (axial < 0.0) & (radial2 < earth.radius**2)


def slant_range(sat_pos: np.ndarray, target_pos: np.ndarray) -> np.ndarray:
    """Euclidean distance between satellite(s) and target(s), km."""
    return np.linalg.norm(sat_pos - target_pos, axis=-1)


def specific_energy(
    pos: np.ndarray, vel: np.ndarray, mu: float = MU_EARTH
) -> np.ndarray:
    """Two-body specific orbital energy v^2/2 - mu/r (km^2/s^2)."""
    r = np.linalg.norm(pos, axis=-1)
    v2 = np.sum(vel * vel, axis=-1)
    return 0.5 * v2 - mu / r
