"""Material models: isotropic St. Venant-Kirchhoff solids and linear dielectrics.

All quantities are SI. The 2D formulation works per unit out-of-plane depth,
so assembled forces are N/m and capacitances F/m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Vacuum permittivity, F/m (2018 CODATA).
EPSILON_0 = 8.8541878128e-12

PLANE_STRAIN = "strain"
PLANE_STRESS = "stress"


@dataclass(frozen=True)
class MechanicalMaterial:
    """Isotropic elastic solid for the total-Lagrangian St. Venant-Kirchhoff law.

    Args:
        E: Young's modulus, Pa.
        nu: Poisson ratio.
        rho: mass density, kg/m^3 (zero is allowed for massless fixtures).
        plane: "strain" (default, appropriate for wide micro-beams) or "stress".
    """

    E: float
    nu: float
    rho: float = 0.0
    plane: str = PLANE_STRAIN

    def __post_init__(self):
        if self.E <= 0.0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")
        if self.rho < 0.0:
            raise ValueError(f"density must be non-negative, got {self.rho}")
        if self.plane not in (PLANE_STRAIN, PLANE_STRESS):
            raise ValueError(f"plane must be 'strain' or 'stress', got {self.plane!r}")

    def stiffness_voigt(self) -> np.ndarray:
        """3x3 constitutive matrix in Voigt order (S11, S22, 2*S12)."""
        E, nu = self.E, self.nu
        if self.plane == PLANE_STRAIN:
            c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
            return np.array([
                [c * (1.0 - nu), c * nu, 0.0],
                [c * nu, c * (1.0 - nu), 0.0],
                [0.0, 0.0, 0.5 * E / (1.0 + nu)],
            ])
        c = E / (1.0 - nu * nu)
        return np.array([
            [c, c * nu, 0.0],
            [c * nu, c, 0.0],
            [0.0, 0.0, 0.5 * E / (1.0 + nu)],
        ])


@dataclass(frozen=True)
class ElectricMaterial:
    """Linear dielectric; ``eps`` is the absolute permittivity in F/m."""

    eps: float = EPSILON_0

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ValueError(f"permittivity must be positive, got {self.eps}")

    @classmethod
    def from_relative(cls, eps_r: float) -> "ElectricMaterial":
        return cls(eps=eps_r * EPSILON_0)
