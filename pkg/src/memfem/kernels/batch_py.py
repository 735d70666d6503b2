"""Vectorised numpy batch kernels (the always-available backend).

Calling convention shared with the Cython core: inputs are element-local
gathers (``ecoords[e, a]`` = coordinates of local node ``a``), outputs are
per-element arrays the assembly layer scatters into global storage. Local
displacement dofs are interleaved (2*a + component); tangent blocks are dense
row-major over local dofs.

On an inverted element the functions return ``bad >= 0`` (the local element
index); output arrays are then undefined and the caller raises.
"""

from __future__ import annotations

import numpy as np


def _batch_jacobians(ecoords: np.ndarray, dn_q: np.ndarray):
    """Jacobians at one quadrature point for every element.

    Returns (jinv (E,2,2), det (E,)); caller checks positivity.
    """
    jac = np.einsum("eai,aj->eij", ecoords, dn_q)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    jinv = np.empty_like(jac)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = 1.0 / det
    jinv[:, 0, 0] = jac[:, 1, 1] * inv_det
    jinv[:, 1, 1] = jac[:, 0, 0] * inv_det
    jinv[:, 0, 1] = -jac[:, 0, 1] * inv_det
    jinv[:, 1, 0] = -jac[:, 1, 0] * inv_det
    return jinv, det


def _first_bad(det: np.ndarray) -> int:
    bad = np.nonzero(det <= 0.0)[0]
    return int(bad[0]) if len(bad) else -1


def mech_batch(ecoords: np.ndarray, eu: np.ndarray, dn: np.ndarray,
               w: np.ndarray, cmat: np.ndarray,
               fout: np.ndarray, kout: np.ndarray | None):
    """Total-Lagrangian St. Venant-Kirchhoff kernels for one element group.

    Args:
        ecoords: (E, nen, 2) undeformed coordinates.
        eu: (E, nen, 2) displacements.
        dn: (nq, nen, 2) reference shape gradients.
        w: (nq,) quadrature weights.
        cmat: (3, 3) constitutive matrix.
        fout: (E, nen, 2) internal forces, overwritten.
        kout: (E, 2*nen, 2*nen) tangents, overwritten, or None.

    Returns:
        (strain energy, bad) with bad = -1 on success.
    """
    n_el, nen, _ = ecoords.shape
    nq = len(w)
    fout[:] = 0.0
    if kout is not None:
        kout[:] = 0.0
    energy = 0.0

    for q in range(nq):
        jinv, det = _batch_jacobians(ecoords, dn[q])
        bad = _first_bad(det)
        if bad >= 0:
            return 0.0, bad
        grad = np.einsum("aj,eji->eai", dn[q], jinv)         # d/dX
        fdef = np.eye(2) + np.einsum("eai,eaj->eij", eu, grad)
        detf = fdef[:, 0, 0] * fdef[:, 1, 1] - fdef[:, 0, 1] * fdef[:, 1, 0]
        bad = _first_bad(detf)
        if bad >= 0:
            return 0.0, bad

        ctc = np.einsum("eki,ekj->eij", fdef, fdef)          # F^T F
        eps_v = np.stack([0.5 * (ctc[:, 0, 0] - 1.0),
                          0.5 * (ctc[:, 1, 1] - 1.0),
                          ctc[:, 0, 1]], axis=1)
        stress = eps_v @ cmat.T
        wdet = w[q] * det
        energy += 0.5 * np.dot(wdet, np.einsum("er,er->e", eps_v, stress))

        bmat = np.zeros((n_el, 3, 2 * nen))
        bmat[:, 0, 0::2] = fdef[:, 0, 0, None] * grad[:, :, 0]
        bmat[:, 0, 1::2] = fdef[:, 1, 0, None] * grad[:, :, 0]
        bmat[:, 1, 0::2] = fdef[:, 0, 1, None] * grad[:, :, 1]
        bmat[:, 1, 1::2] = fdef[:, 1, 1, None] * grad[:, :, 1]
        bmat[:, 2, 0::2] = (fdef[:, 0, 0, None] * grad[:, :, 1]
                            + fdef[:, 0, 1, None] * grad[:, :, 0])
        bmat[:, 2, 1::2] = (fdef[:, 1, 0, None] * grad[:, :, 1]
                            + fdef[:, 1, 1, None] * grad[:, :, 0])

        fq = np.einsum("erd,er->ed", bmat, stress) * wdet[:, None]
        fout += fq.reshape(n_el, nen, 2)

        if kout is not None:
            kout += np.einsum("erd,rs,esg->edg", bmat, cmat, bmat) \
                * wdet[:, None, None]
            smat = np.empty((n_el, 2, 2))
            smat[:, 0, 0] = stress[:, 0]
            smat[:, 1, 1] = stress[:, 1]
            smat[:, 0, 1] = smat[:, 1, 0] = stress[:, 2]
            ageo = np.einsum("eai,eij,ebj->eab", grad, smat, grad) \
                * wdet[:, None, None]
            kout[:, 0::2, 0::2] += ageo
            kout[:, 1::2, 1::2] += ageo

    return float(energy), -1


def elec_batch(ecoords: np.ndarray, ephi: np.ndarray, dn: np.ndarray,
               w: np.ndarray, eps: float,
               qout: np.ndarray, fout: np.ndarray,
               kpp: np.ndarray | None, kup: np.ndarray | None,
               kuu: np.ndarray | None):
    """Electrostatic kernels on displaced coordinates for one element group.

    Outputs (each overwritten; tangent arrays may be None):
        qout: (E, nen) dW_e/dphi.
        fout: (E, nen, 2) dW_e/dx.
        kpp: (E, nen, nen) d2W_e/dphi2.
        kup: (E, 2*nen, nen) d2W_e/dx dphi.
        kuu: (E, 2*nen, 2*nen) d2W_e/dx2.

    Returns:
        (field energy, bad) with bad = -1 on success.
    """
    n_el, nen, _ = ecoords.shape
    nq = len(w)
    qout[:] = 0.0
    fout[:] = 0.0
    want_tangent = kpp is not None
    if want_tangent:
        kpp[:] = 0.0
        kup[:] = 0.0
        kuu[:] = 0.0
    energy = 0.0

    for q in range(nq):
        jinv, det = _batch_jacobians(ecoords, dn[q])
        bad = _first_bad(det)
        if bad >= 0:
            return 0.0, bad
        grad = np.einsum("aj,eji->eai", dn[q], jinv)         # d/dx, displaced
        g = np.einsum("eai,ea->ei", grad, ephi)
        p = np.einsum("eai,ei->ea", grad, g)                 # g . grad_a
        gg = np.einsum("ei,ei->e", g, g)
        s = (0.5 * eps * w[q]) * det

        energy += np.dot(s, gg)
        qout += (2.0 * s)[:, None] * p
        fout += s[:, None, None] * (gg[:, None, None] * grad
                                    - 2.0 * np.einsum("ea,ei->eai", p, g))

        if want_tangent:
            gram = np.einsum("eai,ebi->eab", grad, grad)
            kpp += (2.0 * s)[:, None, None] * gram

            t = (np.einsum("ea,ebk->ebka", p, grad)
                 - np.einsum("eak,eb->ebka", grad, p)
                 - np.einsum("ek,eab->ebka", g, gram))
            kup += (2.0 * s)[:, None, None] * t.reshape(n_el, 2 * nen, nen)

            t6 = (gg[:, None, None, None, None]
                  * np.einsum("ebk,ecl->ebkcl", grad, grad)
                  - 2.0 * np.einsum("ek,eb,ecl->ebkcl", g, p, grad)
                  - 2.0 * np.einsum("el,ec,ebk->ebkcl", g, p, grad)
                  - gg[:, None, None, None, None]
                  * np.einsum("ebl,eck->ebkcl", grad, grad)
                  + 2.0 * np.einsum("el,eck,eb->ebkcl", g, grad, p)
                  + 2.0 * np.einsum("ek,el,ebc->ebkcl", g, g, gram)
                  + 2.0 * np.einsum("ek,ebl,ec->ebkcl", g, grad, p))
            kuu += s[:, None, None] * t6.reshape(n_el, 2 * nen, 2 * nen)

    return float(energy), -1
