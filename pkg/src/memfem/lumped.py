"""Closed-form parallel-plate actuator model.

A rigid plate of area A on a linear spring k over a gap g, driven by a
voltage across the gap, is the one electro-mechanical system whose pull-in
behaviour is analytic. At constant voltage the plate minimises

    U(x) = 1/2 k x^2 - 1/2 C(x) V^2,      C(x) = eps A / (g - x),

which loses its stable well at the fold

    x_pi = g / 3,        V_pi = sqrt(8 k g^3 / (27 eps A)).

For a voltage step from rest the undamped plate overshoots, so it escapes
earlier: the turning point meets the energy barrier at x = g/2 and

    V_dpi = sqrt(k g^3 / (4 eps A)),      V_dpi / V_pi = sqrt(27/32).

These expressions calibrate the finite element machinery: a stiff plate on
explicit springs must reproduce them, and the step/static voltage ratio
carries over as a qualitative check for deformable structures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from memfem.materials import EPSILON_0


@dataclass(frozen=True)
class ParallelPlate:
    """Spring-suspended rigid plate capacitor.

    Attributes:
        stiffness: suspension constant k.
        gap: rest separation g.
        area: plate area A (per unit depth in 2D contexts).
        mass: moving mass, only used by the dynamic helpers.
        eps: gap permittivity.
    """

    stiffness: float
    gap: float
    area: float
    mass: float = 1.0
    eps: float = EPSILON_0

    def __post_init__(self):
        if min(self.stiffness, self.gap, self.area, self.mass, self.eps) <= 0.0:
            raise ValueError("all parallel-plate parameters must be positive")

    # -- statics -----------------------------------------------------------

    def electrostatic_force(self, x: float, voltage: float) -> float:
        """Attractive force at plate travel x (positive toward the stator)."""
        return 0.5 * self.eps * self.area * voltage ** 2 / (self.gap - x) ** 2

    def energy(self, x: float, v: float, voltage: float) -> float:
        """Total energy at constant voltage (co-energy convention)."""
        well = 0.5 * self.stiffness * x ** 2 \
            - 0.5 * self.eps * self.area * voltage ** 2 / (self.gap - x)
        return 0.5 * self.mass * v ** 2 + well

    def equilibrium_voltage(self, x: float) -> float:
        """Voltage whose equilibrium curve passes through travel x.

        Single-valued inverse of the fold-shaped x(V): rises to V_pi at
        x = g/3, falls beyond (the unstable branch).
        """
        if not 0.0 <= x < self.gap:
            raise ValueError("travel must lie inside [0, gap)")
        return math.sqrt(2.0 * self.stiffness * x / (self.eps * self.area)) \
            * (self.gap - x)

    def pull_in(self) -> tuple[float, float]:
        """(V_pi, x_pi) of the static fold."""
        v = math.sqrt(8.0 * self.stiffness * self.gap ** 3
                      / (27.0 * self.eps * self.area))
        return v, self.gap / 3.0

    def step_pull_in(self) -> float:
        """Voltage step from rest that just escapes (undamped)."""
        return math.sqrt(self.stiffness * self.gap ** 3
                         / (4.0 * self.eps * self.area))

    def natural_frequency(self) -> float:
        """Angular frequency of the unbiased suspension."""
        return math.sqrt(self.stiffness / self.mass)

    # -- dynamics ----------------------------------------------------------

    def simulate_step(self, voltage: float, t_end: float, dt: float,
                      x0: float = 0.0, v0: float = 0.0):
        """Integrate the voltage-step response with classic RK4.

        Integration stops early when the plate closes 99.9% of the gap (the
        force law is singular at contact).

        Returns:
            (t, x, v, pulled_in): sample arrays and whether contact ended
            the run.
        """
        k, m, g = self.stiffness, self.mass, self.gap
        half_eps_a_v2 = 0.5 * self.eps * self.area * voltage ** 2

        def accel(x, v):
            return (half_eps_a_v2 / (g - x) ** 2 - k * x) / m

        n = int(math.ceil(t_end / dt))
        ts = np.empty(n + 1)
        xs = np.empty(n + 1)
        vs = np.empty(n + 1)
        ts[0], xs[0], vs[0] = 0.0, x0, v0
        stop = 0.999 * g
        x, v = x0, v0
        for i in range(1, n + 1):
            k1x = v
            k1v = accel(x, v)
            k2x = v + 0.5 * dt * k1v
            k2v = accel(x + 0.5 * dt * k1x, k2x)
            k3x = v + 0.5 * dt * k2v
            k3v = accel(x + 0.5 * dt * k2x, k3x)
            k4x = v + dt * k3v
            k4v = accel(x + dt * k3x, k4x)
            x = x + dt * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
            v = v + dt * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0
            ts[i], xs[i], vs[i] = i * dt, x, v
            if x >= stop:
                return ts[:i + 1], xs[:i + 1], vs[:i + 1], True
        return ts, xs, vs, False

    def step_pulls_in(self, voltage: float, periods: float = 30.0,
                      steps_per_period: int = 400) -> bool:
        """Whether a voltage step from rest reaches contact within the horizon."""
        period = 2.0 * math.pi / self.natural_frequency()
        dt = period / steps_per_period
        _, _, _, hit = self.simulate_step(voltage, periods * period, dt)
        return hit

    def search_step_pull_in(self, rel_tol: float = 1e-3, **kw) -> float:
        """Bisect the step response for the escape threshold.

        A direct dynamic reproduction of what :meth:`step_pull_in` states in
        closed form; the two must agree for this model.
        """
        v_pi, _ = self.pull_in()
        lo, hi = 0.5 * v_pi, v_pi
        if self.step_pulls_in(lo, **kw):
            raise ValueError("bisection bracket broken: pull-in at half V_pi")
        if not self.step_pulls_in(hi, **kw):
            raise ValueError("bisection bracket broken: bounded at V_pi")
        while hi - lo > rel_tol * v_pi:
            mid = 0.5 * (lo + hi)
            if self.step_pulls_in(mid, **kw):
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)
