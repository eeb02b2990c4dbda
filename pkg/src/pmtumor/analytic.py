"""Closed-form reference solutions and front-radius ODEs for the accuracy harness.

The self-similar source solution benchmarks the scheme on dn/dt =
(n**(gamma+1))_xx; the in vitro / in vivo profiles and their front ODEs
benchmark the nutrient-coupled runs in the stiff large-gamma regime, where
the density is a moving patch and the pressure solves an elliptic problem on
it.  Reference curves are integrated far more accurately (classical
fourth-order one-step method, fixed step) than the PDE solutions they judge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "barenblatt",
    "FrontRadius",
    "integrate_front_vitro",
    "integrate_front_vivo",
    "vitro_exact",
    "vivo_exact",
]


def barenblatt(x, t, gamma: float, coeff: float, t0: float = 0.01):
    """Delayed self-similar source profile of dn/dt = (n**(gamma+1))_xx.

    Evaluates at shifted time t + t0, so t = 0 is the delayed initial slice:

        n = tau**(-b) * |coeff - b*gamma/(2(gamma+1)) * x**2 / tau**(2b)|_+ ** (1/gamma),

    with b = 1/(gamma+2) and tau = t + t0.  Nonnegative, even, compactly
    supported; its mass is time-invariant.
    """
    tau = t + t0
    if tau <= 0:
        raise ValueError(f"shifted time t + t0 = {tau:g} must be positive")
    b = 1.0 / (gamma + 2.0)
    xx = np.asarray(x, dtype=float)
    core = coeff - b * gamma / (2.0 * (gamma + 1.0)) * xx**2 / tau ** (2.0 * b)
    out = tau ** (-b) * np.maximum(core, 0.0) ** (1.0 / gamma)
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class FrontRadius:
    """Sampled front radius R(t) on a uniform time grid; strictly increasing."""

    times: np.ndarray
    radii: np.ndarray

    def at(self, t) -> np.ndarray:
        """Linear interpolation; t must lie inside the sampled range."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ValueError("time outside the integrated range")
        return np.interp(t, self.times, self.radii)


def _rk4(rate, r0: float, t_end: float, dt: float) -> FrontRadius:
    steps = max(1, int(np.ceil(t_end / dt - 1e-12)))
    times = np.empty(steps + 1)
    radii = np.empty(steps + 1)
    times[0] = 0.0
    radii[0] = r0
    t, r = 0.0, r0
    for k in range(steps):
        h = min(dt, t_end - t)
        k1 = rate(r)
        k2 = rate(r + 0.5 * h * k1)
        k3 = rate(r + 0.5 * h * k2)
        k4 = rate(r + h * k3)
        r = r + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + h
        times[k + 1] = t
        radii[k + 1] = r
    return FrontRadius(times, radii)


def integrate_front_vitro(R0: float, c_b: float, t_end: float, dt: float = 1e-4) -> FrontRadius:
    """Front radius for the in vitro patch: R' = c_b * tanh(R)."""
    if R0 <= 0:
        raise ValueError("R0 must be positive")
    return _rk4(lambda r: c_b * np.tanh(r), R0, t_end, dt)


def integrate_front_vivo(
    R0: float, c_b: float, g0: float, t_end: float, dt: float = 1e-4
) -> FrontRadius:
    """Front radius for the in vivo patch: R' = c_b * g0 * sinh(R)/e^R.

    sinh(R)/e^R is evaluated as (1 - exp(-2R))/2, which saturates at 1/2
    without overflow.
    """
    if R0 <= 0:
        raise ValueError("R0 must be positive")
    return _rk4(lambda r: c_b * g0 * 0.5 * (1.0 - np.exp(-2.0 * r)), R0, t_end, dt)


def vitro_exact(x, R: float, c_b: float):
    """Limit nutrient and pressure of the in vitro patch of radius R.

    c = c_b*cosh(x)/cosh(R) inside, c_b outside; p = c_b - c inside, 0
    outside, so c + p = c_b on the patch and both are continuous at |x| = R.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    xx = np.asarray(x, dtype=float)
    inside = np.abs(xx) <= R
    c_in = c_b * np.cosh(xx) / np.cosh(R)
    c = np.where(inside, c_in, c_b)
    p = np.where(inside, c_b - c_in, 0.0)
    if np.ndim(x) == 0:
        return float(c), float(p)
    return c, p


def vivo_exact(x, R: float, c_b: float, g0: float = 1.0):
    """Limit nutrient and pressure of the avascular in vivo patch of radius R.

    c = (c_b/e^R)*cosh(x) inside and c_b - c_b*sinh(R)*e^{-|x|} outside
    (continuous at |x| = R since cosh(R) = e^R - sinh(R)); the pressure is
    (c_b*g0/e^R)*(cosh(R) - cosh(x)) inside and 0 outside.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    xx = np.asarray(x, dtype=float)
    inside = np.abs(xx) <= R
    amp = c_b * np.exp(-R)
    c = np.where(inside, amp * np.cosh(np.minimum(np.abs(xx), R)),
                 c_b - c_b * np.sinh(R) * np.exp(-np.abs(xx)))
    p = np.where(inside, g0 * amp * (np.cosh(R) - np.cosh(np.minimum(np.abs(xx), R))), 0.0)
    if np.ndim(x) == 0:
        return float(c), float(p)
    return c, p
