"""Regenerate ``frozen.json`` from independent high-precision evaluations.

Run ``python tests/oracles/generate.py`` to refresh; tests only read the JSON.
Nothing here imports the package under test.
"""
from __future__ import annotations

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 40
OUT = Path(__file__).with_name("frozen.json")


def flat_tail(a, w, x):
    r = mp.sqrt(a * a - 4)
    l1, l2 = (a - r) / 2, (a + r) / 2
    s = abs(x) - w
    if s <= 0:
        return 1 / (2 * (w + a))
    return (l2 * mp.e ** (-l1 * s) - l1 * mp.e ** (-l2 * s)) / (2 * (w + a) * r)


def example1():
    w = mp.asinh(1)
    h = 1 / (2 * (w + mp.sqrt(2)))
    u = lambda x: h if abs(x) <= w else 2 * h * mp.sinh(abs(x)) / mp.cosh(x) ** 2  # noqa: E731
    mass = 2 * (mp.quad(u, [0, w]) + mp.quad(u, [w, mp.inf]))
    derived = mp.quad(lambda x: h * (1 + 2 * mp.sech(x) ** 2), [-w, w])
    printed = mp.quad(lambda x: h * (1 + mp.sech(x) ** 2), [-w, w])
    return {
        "w": float(w), "h": float(h), "u_at_2": float(u(mp.mpf(2))), "mass": float(mass),
        "beta_rate_derived": float(derived), "beta_rate_printed": float(printed),
    }


def example2():
    a = mp.mpf(3)
    r = mp.sqrt(a * a - 4)
    l1, l2 = (a - r) / 2, (a + r) / 2
    mass_flat = 2 * (mp.quad(lambda x: flat_tail(a, 1, x), [0, 1]) + mp.quad(lambda x: flat_tail(a, 1, x), [1, mp.inf]))
    crit = lambda x: mp.e ** (-abs(x)) * (abs(x) + 1) / 4  # noqa: E731
    return {
        "lambda1": float(l1), "lambda2": float(l2), "level_w1": float(1 / (2 * (1 + a))),
        "flat_u_at_2": float(flat_tail(a, 1, mp.mpf(2))), "flat_mass": float(mass_flat),
        "sharp_upper_u0": float(1 / (2 * l1)), "sharp_lower_u0": float(1 / (2 * a)),
        "critical_u0": float(crit(0)), "critical_mass": float(2 * mp.quad(crit, [0, mp.inf])),
        "critical_slope_right": float(mp.diff(crit, mp.mpf(0), direction=1)),
    }


def mollified_q_tanh(x, radius=mp.mpf("0.5"), scale=2):
    """Positive and negative parts of -scale*tanh convolved with the unit bump."""
    bump = lambda s: mp.e ** (-1 / (1 - (s / radius) ** 2)) if abs(s) < radius else mp.mpf(0)  # noqa: E731
    norm = mp.quad(bump, [-radius, radius])
    b = lambda y: -scale * mp.tanh(y)  # noqa: E731
    g1 = mp.quad(lambda s: max(b(x - s), 0) * bump(s), [-radius, radius]) / norm
    return float(g1), float(-b(x) + g1)


def printed_beta_residual():
    """T * |int phi h sech^2| for the centred unit-width bump of radius 1.5 (T=1)."""
    w = mp.asinh(1)
    h = 1 / (2 * (w + mp.sqrt(2)))
    phi = lambda x: mp.e ** (-1 / (1 - (x / 1.5) ** 2)) if abs(x) < 1.5 else mp.mpf(0)  # noqa: E731
    return float(mp.quad(lambda x: phi(x) * h * mp.sech(x) ** 2, [-w, 0, w]))


def main():
    q1, q2 = mollified_q_tanh(mp.mpf(-5))
    data = {
        "example1": example1(),
        "example2_a3": example2(),
        "tanh_q_at_minus5": {"q1": q1, "q2": q2},
        "example1_printed_residual_bump0": printed_beta_residual(),
    }
    OUT.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(json.dumps(data, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
