"""24-hour load shape library and resampling helpers."""

from __future__ import annotations

import numpy as np


def _shape(base: float, bumps: list[tuple[float, float, float]]) -> np.ndarray:
    # bumps: (peak hour, width in hours, amplitude); wrapped around midnight
    h = np.arange(24, dtype=float)
    y = np.full(24, base)
    for hour, width, amp in bumps:
        d = np.minimum(np.abs(h - hour), 24 - np.abs(h - hour))
        y += amp * np.exp(-0.5 * (d / width) ** 2)
    return y / y.max()


PROFILE_LIBRARY: dict[str, np.ndarray] = {
    "flat": np.ones(24),
    "residential_evening": _shape(0.25, [(7.5, 1.5, 0.45), (19.5, 2.0, 1.0)]),
    "residential_morning": _shape(0.3, [(7.0, 1.8, 1.0), (20.0, 1.5, 0.35)]),
    "commercial": _shape(0.2, [(13.0, 3.5, 1.0)]),
    "industrial": _shape(0.55, [(10.0, 4.0, 0.6), (15.0, 3.0, 0.5)]),
    "night": _shape(0.15, [(1.0, 3.0, 1.0), (23.0, 2.0, 0.4)]),
    "school": _shape(0.1, [(10.0, 2.0, 1.0), (14.0, 1.5, 0.6)]),
    "agricultural": _shape(0.2, [(5.0, 1.5, 1.0), (17.0, 2.0, 0.8)]),
}


def resample(profile, steps: int) -> np.ndarray:
    """Sample a periodic daily profile at ``steps`` equally spaced instants.

    The profile's ``L`` values are taken to lie at ``24*i/L`` hours; values in
    between are linearly interpolated with wrap-around at midnight.
    """
    profile = np.asarray(profile, dtype=float)
    n = len(profile)
    if n == 0:
        raise ValueError("empty profile")
    if n == steps:
        return profile.copy()
    src = np.arange(n + 1) * (24.0 / n)
    vals = np.append(profile, profile[0])
    t = np.arange(steps) * (24.0 / steps)
    return np.interp(t, src, vals)


def clear_sky_irradiance(steps: int, peak: float = 1000.0) -> np.ndarray:
    """Half-sine irradiance between 06:00 and 18:00, zero at night."""
    t = np.arange(steps) * (24.0 / steps)
    s = peak * np.sin(np.pi * (t - 6.0) / 12.0)
    s[(t <= 6.0) | (t >= 18.0)] = 0.0
    return np.clip(s, 0.0, None)
