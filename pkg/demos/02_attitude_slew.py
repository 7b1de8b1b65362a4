"""Command a rest-to-rest slew and watch the control loop settle.

The same feedback law and reaction-wheel model the simulator runs for every
satellite at every timestep, isolated to one spacecraft so the transient is
easy to read.  Ends with the pass/fail gate used to screen generated assets.
"""

import math

import numpy as np

from satsched.attitude import (
    ControlGains,
    ReactionWheelSet,
    SlewTest,
    control_and_integrate,
    mrp_angle,
    mrp_error,
    mrp_from_axis_angle,
    run_slew_test,
)


def main():
    inertia = 12.0  # kg m^2, symmetric body
    gains = ControlGains(k=3.0, ki=0.02, p=9.0, integral_limit=0.3)
    wheels = ReactionWheelSet(axes=np.eye(3), max_momentum=18.0,
                              power_rating=60.0, efficiency=0.85)

    target = mrp_from_axis_angle(np.array([1.0, 0.0, 0.0]),
                                 math.radians(60.0))
    sigma = np.zeros((1, 3))
    omega = np.zeros((1, 3))
    speeds = wheels.speeds[None, :].copy()
    integral = np.zeros((1, 3))

    print("60 deg slew, 1 Hz control, printed every 10 s:")
    print(f"{'t':>5} {'err deg':>9} {'rate rad/s':>11} {'wheel rpm max':>14}")
    for t in range(121):
        if t % 10 == 0:
            err = math.degrees(mrp_angle(mrp_error(sigma[0], target)))
            rpm = np.abs(speeds[0]).max() * 60 / (2 * math.pi)
            rate = np.linalg.norm(omega[0])
            print(f"{t:5d} {err:9.3f} {rate:11.5f} {rpm:14.1f}")
        out = control_and_integrate(
            sigma, omega, speeds, integral, target[None, :],
            np.zeros(1, dtype=bool),
            np.array([gains.k]), np.array([gains.ki]), np.array([gains.p]),
            np.array([gains.integral_limit]), np.array([inertia]),
            wheels.axes[None], np.array([wheels.wheel_inertia]),
            np.array([wheels.max_speed]), np.array([wheels.efficiency]),
            1.0, 10,
        )
        sigma, omega, speeds, integral = (
            out["sigma"], out["omega"], out["speeds"], out["integral"])

    result = run_slew_test(inertia, gains, wheels, SlewTest())
    print(f"\nacceptance gate: {'PASS' if result.passed else 'FAIL'}")
    print(f"  settle time     {result.settle_time_s:.0f} s")
    print(f"  final error     {result.final_error_deg:.4f} deg")
    print(f"  final rate      {result.final_rate:.2e} rad/s")
    print(f"  peak momentum   {result.peak_momentum_fraction:.1%} of wheel "
          f"capacity")
    print(f"  saturated       {result.saturated}")


if __name__ == "__main__":
    main()
