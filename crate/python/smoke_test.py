"""Smoke test for the pyswitchrate extension module.

Build and run from the repository root:

    cargo build --release -p pyswitchrate --features extension-module
    cp target/release/libpyswitchrate.so python/pyswitchrate.so
    python3 python/smoke_test.py
"""

import json
import math

import pyswitchrate as sr


def main():
    sys = sr.System.example()
    assert sys.dimension == 2 and len(sys) == 2
    assert sr.System.from_json(sys.to_json()).to_json() == sys.to_json()

    cert = sr.compute_m(sys, 1.0)
    assert 0.0 < cert.m < 1.0
    assert cert.beta(1.0, 0.0) == 1.0
    assert cert.beta(1.0, 10.0) < cert.beta(1.0, 5.0)
    sphere = sr.compute_m(sys, 1.0, method="sphere", samples=512)
    assert abs(sphere.m - cert.m) < 1e-9

    violations, max_ratio = sr.verify_homogeneous(sys, cert, trials=100)
    assert violations == 0 and max_ratio <= 1.0 + 1e-8

    u = sr.Signal.dwell_time(7, 2, 1.0, 20.0)
    assert u.has_dwell_time(1.0)
    assert u.has_average_dwell_time(1.0, 1)
    times, states, indices = sys.simulate(u, [1.0, 0.0], record_dt=0.5)
    assert times[0] == 0.0 and math.isclose(times[-1], 20.0)
    assert len(states) == len(times) == len(indices)
    assert sys.lyapunov_value(states[-1]) < 1.0

    curve = sr.m_curve(sys, [0.5, 1.0, 2.0])
    assert curve[0][1] >= curve[1][1] >= curve[2][1]

    cubic = sr.System.cubic_damped_example()
    nl = sr.compute_nonlinear_certificate(cubic, 1.0, 4.0, samples=128)
    assert nl.m2 < 1.0 and nl.gamma > 0.0 and nl.alpha > 1.0
    assert json.loads(nl.to_json())["kind"] == "nonlinear-certificate"

    try:
        sr.System.from_json("{")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed JSON accepted")

    try:
        sr.Signal.chaotic_like(1, 1.0, 3.0)
    except ValueError:
        pass
    else:
        raise AssertionError("single-mode chaotic-like signal accepted")

    print("pyswitchrate", sr.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
