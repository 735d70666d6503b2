"""Gauss quadrature rules on the reference triangle (0,0)-(1,0)-(0,1).

Weights include the reference-triangle area, so they sum to 1/2 and
``sum(w_q * f(xi_q))`` approximates the integral over the reference element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QuadratureRule", "triangle_rule"]


@dataclass(frozen=True)
class QuadratureRule:
    degree: int          # highest polynomial degree integrated exactly
    points: np.ndarray   # (nq, 2) barycentric-free reference coordinates
    weights: np.ndarray  # (nq,)

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_points(self) -> int:
        return len(self.weights)


def _orbit3(a: float) -> list[tuple[float, float]]:
    b = 1.0 - 2.0 * a
    return [(a, a), (b, a), (a, b)]


def _build_rules() -> dict[int, QuadratureRule]:
    rules: dict[int, QuadratureRule] = {}

    rules[1] = QuadratureRule(
        1, np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5]))

    pts = np.array(_orbit3(1.0 / 6.0))
    rules[2] = QuadratureRule(2, pts, np.full(3, 1.0 / 6.0))

    # Six-point degree-4 rule (two symmetric orbits).
    a1, w1 = 0.445948490915965, 0.223381589678011
    a2, w2 = 0.091576213509771, 0.109951743655322
    pts = np.array(_orbit3(a1) + _orbit3(a2))
    wts = 0.5 * np.array([w1] * 3 + [w2] * 3)
    rules[4] = QuadratureRule(4, pts, wts)

    # Seven-point degree-5 rule (centroid plus two orbits).
    a1, w1 = 0.470142064105115, 0.132394152788506
    a2, w2 = 0.101286507323456, 0.125939180544827
    pts = np.array([[1.0 / 3.0, 1.0 / 3.0]] + _orbit3(a1) + _orbit3(a2))
    wts = 0.5 * np.array([0.225] + [w1] * 3 + [w2] * 3)
    rules[5] = QuadratureRule(5, pts, wts)

    return rules


_RULES = _build_rules()
_MAX_DEGREE = max(_RULES)


def triangle_rule(degree: int) -> QuadratureRule:
    """Smallest shipped rule exact to at least ``degree``.

    Degrees 1..5 are supported; all shipped rules have strictly positive
    weights and interior points.
    """
    if degree < 1 or degree > _MAX_DEGREE:
        raise ValueError(
            f"quadrature degree {degree} unsupported (supported: 1..{_MAX_DEGREE})")
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise AssertionError("unreachable")
