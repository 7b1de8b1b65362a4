"""Propagate a small constellation and find target visibility windows.

Walks the lowest layer of the stack: closed-form two-body propagation,
Earth rotation, line-of-sight geometry, and eclipse checks.  Everything
else in the package (access windows, power budgets, the simulator's
precomputed geometry tables) is built on these calls.
"""

import numpy as np

from satsched.astro import (
    DEFAULT_EARTH,
    GeodeticTarget,
    OrbitalElements,
    OrbitEnsemble,
    eclipse_check,
    orbital_period,
    slant_range,
    target_position_eci,
    visibility_check,
)


def main():
    earth = DEFAULT_EARTH
    elements = [
        OrbitalElements(semi_major_axis=6871.0, eccentricity=0.001,
                        inclination=53.0, raan=0.0, arg_perigee=0.0,
                        true_anomaly=0.0),
        OrbitalElements(semi_major_axis=6871.0, eccentricity=0.001,
                        inclination=53.0, raan=120.0, arg_perigee=0.0,
                        true_anomaly=40.0),
        OrbitalElements(semi_major_axis=7071.0, eccentricity=0.02,
                        inclination=97.8, raan=60.0, arg_perigee=90.0,
                        true_anomaly=0.0),
    ]
    print("constellation:")
    for i, el in enumerate(elements):
        period = orbital_period(el.semi_major_axis, earth.mu)
        print(f"  sat {i}: a={el.semi_major_axis:.0f} km  "
              f"i={el.inclination:.1f} deg  period {period / 60:.1f} min")

    # One sidereal-ish hour of geometry at 1 Hz.
    times = np.arange(0.0, 3600.0, 1.0)
    ensemble = OrbitEnsemble(elements, earth)
    pos, vel = ensemble.states_at(times)
    speed = np.linalg.norm(vel, axis=-1)
    alt = np.linalg.norm(pos, axis=-1) - earth.radius
    print(f"\naltitude range over the hour: "
          f"{alt.min():.0f} .. {alt.max():.0f} km")
    print(f"speed range: {speed.min():.3f} .. {speed.max():.3f} km/s")

    # A ground target rotating with the Earth.
    target = GeodeticTarget(latitude=47.6, longitude=-122.3)
    tgt_pos = np.stack([target_position_eci(target, t, earth) for t in times])
    visible = visibility_check(pos, tgt_pos[:, None, :], earth,
                               min_elevation=np.radians(10.0))
    print(f"\nvisibility of ({target.latitude:.1f}N, "
          f"{-target.longitude:.1f}W) at 10 deg mask:")
    for i in range(len(elements)):
        mask = visible[:, i]
        if not mask.any():
            print(f"  sat {i}: no passes this hour")
            continue
        edges = np.flatnonzero(np.diff(mask.astype(int)))
        starts = [0] if mask[0] else []
        starts += [int(e) + 1 for e in edges if not mask[e]]
        ends = [int(e) + 1 for e in edges if mask[e]]
        if mask[-1]:
            ends.append(len(times))
        rng = slant_range(pos[:, i], tgt_pos)
        for s, e in zip(starts, ends):
            lo = rng[s:e].min()
            print(f"  sat {i}: pass {times[s]:6.0f}s .. {times[e - 1]:6.0f}s"
                  f"  ({e - s:4d}s, closest {lo:6.0f} km)")

    shadow = eclipse_check(pos, earth)
    frac = shadow.mean(axis=0)
    print("\neclipse fraction over the hour:",
          "  ".join(f"sat {i}: {f:.1%}" for i, f in enumerate(frac)))


if __name__ == "__main__":
    main()
