"""Per-element kernels (reference numpy implementations).

Mechanics: total-Lagrangian Green-Lagrange strain with a St. Venant-Kirchhoff
law, evaluated on the undeformed coordinates. Electrostatics: the element
energy W_e = 1/2 eps |grad(phi)|^2 integrated on the *displaced* coordinates;
nodal forces and all coupled tangent blocks are exact derivatives of that
discrete energy with respect to nodal coordinates and potentials, so the
assembled tangent is the literal Hessian of the total potential and every
block pair is symmetric by construction.

Sign conventions: every kernel returns derivatives of its own energy with a
positive sign; the assembly layer composes them with the saddle-point signs
(the electric energy enters the total potential negated).

The batch Cython core mirrors these routines; this module is the oracle the
compiled path is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from memfem.errors import ElementInversionError
from memfem.quadrature import QuadratureRule, triangle_rule

__all__ = [
    "shape_eval", "shape_table", "default_degree",
    "mech_element", "mass_element",
    "elec_element", "elec_force", "coupled_tangent",
    "MechResult", "ElecResult",
]


def shape_eval(nen: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shape functions and reference gradients at one point.

    Args:
        nen: 3 (linear) or 6 (quadratic) triangle.
        xi: reference coordinates (xi, eta).

    Returns:
        (N (nen,), dN (nen, 2)) with dN[a] = (dN_a/dxi, dN_a/deta).
    """
    x, y = float(xi[0]), float(xi[1])
    l0, l1, l2 = 1.0 - x - y, x, y
    if nen == 3:
        n = np.array([l0, l1, l2])
        dn = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return n, dn
    if nen == 6:
        n = np.array([
            l0 * (2.0 * l0 - 1.0),
            l1 * (2.0 * l1 - 1.0),
            l2 * (2.0 * l2 - 1.0),
            4.0 * l0 * l1,
            4.0 * l1 * l2,
            4.0 * l2 * l0,
        ])
        d0 = np.array([-1.0, -1.0])
        d1 = np.array([1.0, 0.0])
        d2 = np.array([0.0, 1.0])
        dn = np.vstack([
            (4.0 * l0 - 1.0) * d0,
            (4.0 * l1 - 1.0) * d1,
            (4.0 * l2 - 1.0) * d2,
            4.0 * (l1 * d0 + l0 * d1),
            4.0 * (l2 * d1 + l1 * d2),
            4.0 * (l0 * d2 + l2 * d0),
        ])
        return n, dn
    raise ValueError(f"unsupported element node count {nen} (expected 3 or 6)")


_TABLE_CACHE: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}


def shape_table(nen: int, rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Shape values/gradients tabulated at every quadrature point (cached)."""
    key = (nen, rule.degree, rule.n_points)
    hit = _TABLE_CACHE.get(key)
    if hit is None:
        ns = np.empty((rule.n_points, nen))
        dns = np.empty((rule.n_points, nen, 2))
        for q in range(rule.n_points):
            ns[q], dns[q] = shape_eval(nen, rule.points[q])
        ns.setflags(write=False)
        dns.setflags(write=False)
        hit = _TABLE_CACHE[key] = (ns, dns)
    return hit


def default_degree(nen: int, purpose: str) -> int:
    """Shipped quadrature degrees.

    TRI3 mechanics is constant-strain (1-point exact); the quartic TRI6
    St.V-K energy needs degree 4. Electric kernels use 3-point / 6-point
    rules so the coupled blocks of curved or distorted elements stay
    consistently integrated.
    """
    table = {
        (3, "mech"): 1, (6, "mech"): 4,
        (3, "elec"): 2, (6, "elec"): 4,
        (3, "mass"): 2, (6, "mass"): 4,
    }
    try:
        return table[(nen, purpose)]
    except KeyError:
        raise ValueError(f"no default degree for nen={nen}, purpose={purpose!r}") \
            from None


@dataclass
class MechResult:
    energy: float
    f: np.ndarray                 # (2*nen,) internal force, node-major (x, y)
    K: np.ndarray | None          # (2*nen, 2*nen) material + geometric tangent


@dataclass
class ElecResult:
    energy: float
    q: np.ndarray                 # (nen,) dW_e/dphi
    K_phiphi: np.ndarray | None   # (nen, nen) PSD, nullspace = constant phi


def _jacobian(coords: np.ndarray, dn: np.ndarray):
    jac = coords.T @ dn
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    return jac, det


def mech_element(coords: np.ndarray, material, u_e: np.ndarray,
                 want_tangent: bool = True, degree: int | None = None) -> MechResult:
    """Strain energy, internal force and tangent of one solid element.

    Args:
        coords: (nen, 2) undeformed nodal coordinates.
        material: :class:`~memfem.materials.MechanicalMaterial`.
        u_e: (nen, 2) nodal displacements.

    Raises:
        ElementInversionError: det(F) <= 0 at a quadrature point.
    """
    coords = np.asarray(coords, dtype=float)
    u_e = np.asarray(u_e, dtype=float)
    nen = len(coords)
    rule = triangle_rule(degree if degree is not None else default_degree(nen, "mech"))
    _, dns = shape_table(nen, rule)
    cmat = material.stiffness_voigt()

    energy = 0.0
    f = np.zeros(2 * nen)
    k = np.zeros((2 * nen, 2 * nen)) if want_tangent else None
    eye = np.eye(2)
    for q in range(rule.n_points):
        jac, det = _jacobian(coords, dns[q])
        if det <= 0.0:
            raise ElementInversionError(-1, "mechanical",
                                        f"reference Jacobian {det:.3e}")
        grad = dns[q] @ np.linalg.inv(jac)          # (nen, 2), d/dX
        fdef = eye + u_e.T @ grad                   # deformation gradient
        detf = fdef[0, 0] * fdef[1, 1] - fdef[0, 1] * fdef[1, 0]
        if detf <= 0.0:
            raise ElementInversionError(-1, "mechanical", f"det F = {detf:.3e}")
        egl = 0.5 * (fdef.T @ fdef - eye)
        eps_v = np.array([egl[0, 0], egl[1, 1], 2.0 * egl[0, 1]])
        stress = cmat @ eps_v
        w = rule.weights[q] * det
        energy += 0.5 * w * (eps_v @ stress)

        b = np.zeros((3, 2 * nen))
        b[0, 0::2] = fdef[0, 0] * grad[:, 0]
        b[0, 1::2] = fdef[1, 0] * grad[:, 0]
        b[1, 0::2] = fdef[0, 1] * grad[:, 1]
        b[1, 1::2] = fdef[1, 1] * grad[:, 1]
        b[2, 0::2] = fdef[0, 0] * grad[:, 1] + fdef[0, 1] * grad[:, 0]
        b[2, 1::2] = fdef[1, 0] * grad[:, 1] + fdef[1, 1] * grad[:, 0]
        f += w * (b.T @ stress)

        if want_tangent:
            k += w * (b.T @ cmat @ b)
            smat = np.array([[stress[0], stress[2]], [stress[2], stress[1]]])
            ageo = w * (grad @ smat @ grad.T)
            k[0::2, 0::2] += ageo
            k[1::2, 1::2] += ageo
    return MechResult(energy, f, k)


def mass_element(coords: np.ndarray, rho: float,
                 degree: int | None = None) -> np.ndarray:
    """Consistent mass matrix (2*nen square, node-major x/y interleaved)."""
    coords = np.asarray(coords, dtype=float)
    nen = len(coords)
    rule = triangle_rule(degree if degree is not None else default_degree(nen, "mass"))
    ns, dns = shape_table(nen, rule)
    a = np.zeros((nen, nen))
    for q in range(rule.n_points):
        _, det = _jacobian(coords, dns[q])
        a += (rho * rule.weights[q] * det) * np.outer(ns[q], ns[q])
    m = np.zeros((2 * nen, 2 * nen))
    m[0::2, 0::2] = a
    m[1::2, 1::2] = a
    return m


def _elec_qp(coords: np.ndarray, phi_e: np.ndarray, dn: np.ndarray):
    jac, det = _jacobian(coords, dn)
    if det <= 0.0:
        raise ElementInversionError(-1, "electric", f"current Jacobian {det:.3e}")
    grad = dn @ np.linalg.inv(jac)       # (nen, 2), d/dx on displaced coords
    g = grad.T @ phi_e                   # potential gradient
    return grad, g, det


def elec_element(coords: np.ndarray, eps: float, phi_e: np.ndarray,
                 want_tangent: bool = True, degree: int | None = None) -> ElecResult:
    """Field energy, nodal charge gradient and phi-phi stiffness.

    ``coords`` are the *displaced* nodal coordinates. ``K_phiphi`` is positive
    semi-definite with the constant-potential nullspace.
    """
    coords = np.asarray(coords, dtype=float)
    phi_e = np.asarray(phi_e, dtype=float)
    nen = len(coords)
    rule = triangle_rule(degree if degree is not None else default_degree(nen, "elec"))
    _, dns = shape_table(nen, rule)

    energy = 0.0
    q_vec = np.zeros(nen)
    k = np.zeros((nen, nen)) if want_tangent else None
    for q in range(rule.n_points):
        grad, g, det = _elec_qp(coords, phi_e, dns[q])
        w = eps * rule.weights[q] * det
        energy += 0.5 * w * (g @ g)
        q_vec += w * (grad @ g)
        if want_tangent:
            k += w * (grad @ grad.T)
    return ElecResult(energy, q_vec, k)


def elec_force(coords: np.ndarray, eps: float, phi_e: np.ndarray,
               degree: int | None = None) -> np.ndarray:
    """Nodal electrostatic force f = dW_e/dx at fixed potentials, (2*nen,).

    Scales exactly quadratically with the potentials and is translation
    invariant (the energy only sees coordinate differences).
    """
    coords = np.asarray(coords, dtype=float)
    phi_e = np.asarray(phi_e, dtype=float)
    nen = len(coords)
    rule = triangle_rule(degree if degree is not None else default_degree(nen, "elec"))
    _, dns = shape_table(nen, rule)

    f = np.zeros((nen, 2))
    for q in range(rule.n_points):
        grad, g, det = _elec_qp(coords, phi_e, dns[q])
        s = 0.5 * eps * rule.weights[q] * det
        p = grad @ g
        f += s * ((g @ g) * grad - 2.0 * np.outer(p, g))
    return f.ravel()


def coupled_tangent(coords: np.ndarray, eps: float, phi_e: np.ndarray,
                    degree: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Second derivatives of the element field energy.

    Returns:
        (K_uu, K_uphi): K_uu = d2W_e/dx2 (2*nen square, symmetric) and
        K_uphi = d2W_e/dx dphi (2*nen by nen). Both are exact derivatives of
        the quadrature-discretised energy, so finite differences of
        :func:`elec_force` / :func:`elec_element` reproduce them.
    """
    coords = np.asarray(coords, dtype=float)
    phi_e = np.asarray(phi_e, dtype=float)
    nen = len(coords)
    rule = triangle_rule(degree if degree is not None else default_degree(nen, "elec"))
    _, dns = shape_table(nen, rule)

    kuu = np.zeros((nen, 2, nen, 2))
    kup = np.zeros((nen, 2, nen))
    for q in range(rule.n_points):
        grad, g, det = _elec_qp(coords, phi_e, dns[q])
        s = 0.5 * eps * rule.weights[q] * det
        p = grad @ g                      # p[a] = g . grad_a
        gg = g @ g
        gram = grad @ grad.T              # (nen, nen)

        kup += 2.0 * s * (np.einsum("a,bk->bka", p, grad)
                          - np.einsum("ak,b->bka", grad, p)
                          - np.einsum("k,ab->bka", g, gram))

        kuu += s * (gg * np.einsum("bk,cl->bkcl", grad, grad)
                    - 2.0 * np.einsum("k,b,cl->bkcl", g, p, grad)
                    - 2.0 * np.einsum("l,c,bk->bkcl", g, p, grad)
                    - gg * np.einsum("bl,ck->bkcl", grad, grad)
                    + 2.0 * np.einsum("l,ck,b->bkcl", g, grad, p)
                    + 2.0 * np.einsum("k,l,bc->bkcl", g, g, gram)
                    + 2.0 * np.einsum("k,bl,c->bkcl", g, grad, p))

    return kuu.reshape(2 * nen, 2 * nen), kup.reshape(2 * nen, nen)
