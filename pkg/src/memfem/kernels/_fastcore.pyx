# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch element kernels.

Same calling convention and numbers as :mod:`memfem.kernels.batch_py`, which
holds the reference semantics; this module exists because the pure-numpy
loops dominate the runtime of transient sweeps. Scalar C loops over fixed
local workspaces (up to 8 nodes per element), no temporaries per call.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def mech_batch(const double[:, :, ::1] ecoords, const double[:, :, ::1] eu,
               const double[:, :, ::1] dn, const double[::1] w,
               const double[:, ::1] cmat,
               double[:, :, ::1] fout, kout_opt):
    """Total-Lagrangian St. Venant-Kirchhoff kernels for one element group."""
    cdef Py_ssize_t n_el = ecoords.shape[0]
    cdef Py_ssize_t nen = ecoords.shape[1]
    cdef Py_ssize_t nq = w.shape[0]
    if nen > 8:
        raise ValueError("element has more than 8 nodes")

    cdef bint want_k = kout_opt is not None
    cdef double[:, :, ::1] kout = kout_opt if want_k else None

    cdef double c00 = cmat[0, 0], c01 = cmat[0, 1], c02 = cmat[0, 2]
    cdef double c10 = cmat[1, 0], c11 = cmat[1, 1], c12 = cmat[1, 2]
    cdef double c20 = cmat[2, 0], c21 = cmat[2, 1], c22 = cmat[2, 2]

    cdef double grad[8][2]
    cdef double bm[3][16]
    cdef double cb[3][16]
    cdef double j00, j01, j10, j11, det, inv
    cdef double i00, i01, i10, i11
    cdef double f00, f01, f10, f11, detf
    cdef double x, y, d0, d1, ga0, ga1
    cdef double e0, e1, e2, s0, s1, s2, wdet, ageo
    cdef double energy = 0.0
    cdef Py_ssize_t e, q, a, b, d, g, nd = 2 * nen

    fout[:, :, :] = 0.0
    if want_k:
        kout[:, :, :] = 0.0

    for e in range(n_el):
        for q in range(nq):
            j00 = j01 = j10 = j11 = 0.0
            for a in range(nen):
                x = ecoords[e, a, 0]
                y = ecoords[e, a, 1]
                d0 = dn[q, a, 0]
                d1 = dn[q, a, 1]
                j00 += x * d0
                j01 += x * d1
                j10 += y * d0
                j11 += y * d1
            det = j00 * j11 - j01 * j10
            if det <= 0.0:
                return 0.0, e
            inv = 1.0 / det
            i00 = j11 * inv
            i01 = -j01 * inv
            i10 = -j10 * inv
            i11 = j00 * inv
            for a in range(nen):
                d0 = dn[q, a, 0]
                d1 = dn[q, a, 1]
                grad[a][0] = d0 * i00 + d1 * i10
                grad[a][1] = d0 * i01 + d1 * i11

            f00 = 1.0
            f01 = 0.0
            f10 = 0.0
            f11 = 1.0
            for a in range(nen):
                x = eu[e, a, 0]
                y = eu[e, a, 1]
                f00 += x * grad[a][0]
                f01 += x * grad[a][1]
                f10 += y * grad[a][0]
                f11 += y * grad[a][1]
            detf = f00 * f11 - f01 * f10
            if detf <= 0.0:
                return 0.0, e

            e0 = 0.5 * (f00 * f00 + f10 * f10 - 1.0)
            e1 = 0.5 * (f01 * f01 + f11 * f11 - 1.0)
            e2 = f00 * f01 + f10 * f11
            s0 = c00 * e0 + c01 * e1 + c02 * e2
            s1 = c10 * e0 + c11 * e1 + c12 * e2
            s2 = c20 * e0 + c21 * e1 + c22 * e2
            wdet = w[q] * det
            energy += 0.5 * wdet * (e0 * s0 + e1 * s1 + e2 * s2)

            for a in range(nen):
                ga0 = grad[a][0]
                ga1 = grad[a][1]
                bm[0][2 * a] = f00 * ga0
                bm[0][2 * a + 1] = f10 * ga0
                bm[1][2 * a] = f01 * ga1
                bm[1][2 * a + 1] = f11 * ga1
                bm[2][2 * a] = f00 * ga1 + f01 * ga0
                bm[2][2 * a + 1] = f10 * ga1 + f11 * ga0

            for a in range(nen):
                fout[e, a, 0] += wdet * (bm[0][2 * a] * s0
                                         + bm[1][2 * a] * s1
                                         + bm[2][2 * a] * s2)
                fout[e, a, 1] += wdet * (bm[0][2 * a + 1] * s0
                                         + bm[1][2 * a + 1] * s1
                                         + bm[2][2 * a + 1] * s2)

            if want_k:
                for g in range(nd):
                    cb[0][g] = c00 * bm[0][g] + c01 * bm[1][g] + c02 * bm[2][g]
                    cb[1][g] = c10 * bm[0][g] + c11 * bm[1][g] + c12 * bm[2][g]
                    cb[2][g] = c20 * bm[0][g] + c21 * bm[1][g] + c22 * bm[2][g]
                for d in range(nd):
                    for g in range(nd):
                        kout[e, d, g] += wdet * (bm[0][d] * cb[0][g]
                                                 + bm[1][d] * cb[1][g]
                                                 + bm[2][d] * cb[2][g])
                for a in range(nen):
                    for b in range(nen):
                        ageo = wdet * (
                            grad[a][0] * (s0 * grad[b][0] + s2 * grad[b][1])
                            + grad[a][1] * (s2 * grad[b][0] + s1 * grad[b][1]))
                        kout[e, 2 * a, 2 * b] += ageo
                        kout[e, 2 * a + 1, 2 * b + 1] += ageo

    return energy, -1


def elec_batch(const double[:, :, ::1] ecoords, const double[:, ::1] ephi,
               const double[:, :, ::1] dn, const double[::1] w, double eps,
               double[:, ::1] qout, double[:, :, ::1] fout,
               kpp_opt, kup_opt, kuu_opt):
    """Electrostatic kernels on displaced coordinates for one element group."""
    cdef Py_ssize_t n_el = ecoords.shape[0]
    cdef Py_ssize_t nen = ecoords.shape[1]
    cdef Py_ssize_t nq = w.shape[0]
    if nen > 8:
        raise ValueError("element has more than 8 nodes")

    cdef bint want_k = kpp_opt is not None
    cdef double[:, :, ::1] kpp = kpp_opt if want_k else None
    cdef double[:, :, ::1] kup = kup_opt if want_k else None
    cdef double[:, :, ::1] kuu = kuu_opt if want_k else None

    cdef double grad[8][2]
    cdef double p[8]
    cdef double gram[8][8]
    cdef double j00, j01, j10, j11, det, inv
    cdef double i00, i01, i10, i11
    cdef double x, y, d0, d1, g0, g1, gg, s, s2, phi_a
    cdef double pb, pc, gb0, gb1, gc0, gc1, gk, gl
    cdef double energy = 0.0
    cdef Py_ssize_t e, q, a, b, c, k, l

    qout[:, :] = 0.0
    fout[:, :, :] = 0.0
    if want_k:
        kpp[:, :, :] = 0.0
        kup[:, :, :] = 0.0
        kuu[:, :, :] = 0.0

    for e in range(n_el):
        for q in range(nq):
            j00 = j01 = j10 = j11 = 0.0
            for a in range(nen):
                x = ecoords[e, a, 0]
                y = ecoords[e, a, 1]
                d0 = dn[q, a, 0]
                d1 = dn[q, a, 1]
                j00 += x * d0
                j01 += x * d1
                j10 += y * d0
                j11 += y * d1
            det = j00 * j11 - j01 * j10
            if det <= 0.0:
                return 0.0, e
            inv = 1.0 / det
            i00 = j11 * inv
            i01 = -j01 * inv
            i10 = -j10 * inv
            i11 = j00 * inv

            g0 = 0.0
            g1 = 0.0
            for a in range(nen):
                d0 = dn[q, a, 0]
                d1 = dn[q, a, 1]
                grad[a][0] = d0 * i00 + d1 * i10
                grad[a][1] = d0 * i01 + d1 * i11
                phi_a = ephi[e, a]
                g0 += grad[a][0] * phi_a
                g1 += grad[a][1] * phi_a
            gg = g0 * g0 + g1 * g1
            for a in range(nen):
                p[a] = grad[a][0] * g0 + grad[a][1] * g1
            s = 0.5 * eps * w[q] * det
            s2 = 2.0 * s

            energy += s * gg
            for a in range(nen):
                qout[e, a] += s2 * p[a]
                fout[e, a, 0] += s * (gg * grad[a][0] - 2.0 * p[a] * g0)
                fout[e, a, 1] += s * (gg * grad[a][1] - 2.0 * p[a] * g1)

            if want_k:
                for a in range(nen):
                    for b in range(nen):
                        gram[a][b] = (grad[a][0] * grad[b][0]
                                      + grad[a][1] * grad[b][1])
                        kpp[e, a, b] += s2 * gram[a][b]
                for b in range(nen):
                    pb = p[b]
                    for k in range(2):
                        gk = g0 if k == 0 else g1
                        for a in range(nen):
                            kup[e, 2 * b + k, a] += s2 * (
                                p[a] * grad[b][k]
                                - grad[a][k] * pb
                                - gk * gram[a][b])
                for b in range(nen):
                    pb = p[b]
                    gb0 = grad[b][0]
                    gb1 = grad[b][1]
                    for k in range(2):
                        gk = g0 if k == 0 else g1
                        for c in range(nen):
                            pc = p[c]
                            gc0 = grad[c][0]
                            gc1 = grad[c][1]
                            for l in range(2):
                                gl = g0 if l == 0 else g1
                                kuu[e, 2 * b + k, 2 * c + l] += s * (
                                    gg * grad[b][k] * grad[c][l]
                                    - 2.0 * gk * pb * grad[c][l]
                                    - 2.0 * gl * pc * grad[b][k]
                                    - gg * grad[b][l] * grad[c][k]
                                    + 2.0 * gl * grad[c][k] * pb
                                    + 2.0 * gk * gl * gram[b][c]
                                    + 2.0 * gk * grad[b][l] * pc)

    return energy, -1
