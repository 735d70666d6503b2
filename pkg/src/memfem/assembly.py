"""Global assembly of the coupled electro-mechanical system.

The package works with one monolithic state vector that holds every nodal
quantity ("slot"): two displacement slots for each node referenced by any
element and one potential slot for each node of an electric-physics element,
in node-major order. Prescribed values enter through an affine carrier

    x_full = x0_const + V * x0_slope + P @ z

where P is a sparse prolongation whose columns span the unknowns z. Clamped
and conductor slots simply have no column. In ``slaved`` morph mode the
displacements of vacuum-interior nodes are not unknowns either: they follow
the wetted interface through a precomputed elastic extension, which shows up
in P as a dense block of influence coefficients. Because that constraint is
linear, reducing with P is exact, not an approximation of the chain rule.

Everything assembled here is a derivative of the single scalar

    Pi(x) = W_mech + W_spring + W_morph - W_field

so the tangent is literally a Hessian: symmetric by construction and, once
potential slots are present, an indefinite saddle (the field block enters
negated). The reduced forms every solver consumes are

    r = P^T grad Pi,   K = P^T (hess Pi) P,   dr/dV = P^T (hess Pi) x0_slope.

Stability bookkeeping rides on that structure: with n_phi free potential
slots, the displacement Schur complement of K has exactly
n_neg(K) - n_phi negative eigenvalues, so equilibria can be classified from
the factorization of K alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from memfem import elements
from memfem.errors import (
    ConfigError,
    ElementInversionError,
    SingularSystemError,
)
from memfem.kernels import get_backend
from memfem.materials import ElectricMaterial, MechanicalMaterial
from memfem.mesh import ELECTRIC, MECHANICAL, Mesh

logger = logging.getLogger(__name__)

# Slot classes.
DIRICHLET = 0
FREE = 1
SLAVED = 2

_AXES = {"x": (0,), "y": (1,), "xy": (0, 1), "yx": (0, 1)}


@dataclass(frozen=True)
class Spring:
    """Grounded springs on one displacement axis of a node set.

    ``stiffness`` is the set total; each node receives an equal share, so a
    suspension keeps its lumped constant when the mesh is refined.
    """

    node_set: str
    axis: int
    stiffness: float


@dataclass(frozen=True)
class BoundaryConditions:
    """Prescriptions applied to the monolithic state.

    Attributes:
        clamps: (node_set, axes) pairs; axes is "x", "y" or "xy". Clamped
            displacement slots are held at zero.
        grounds: node sets whose potential is held at zero.
        electrodes: (node_set, coefficient) pairs; the potential on the set
            follows coefficient * V as the drive voltage V changes.
        springs: grounded springs, see :class:`Spring`.
    """

    clamps: tuple[tuple[str, str], ...] = ()
    grounds: tuple[str, ...] = ()
    electrodes: tuple[tuple[str, float], ...] = ()
    springs: tuple[Spring, ...] = ()


@dataclass
class DofMap:
    """Slot layout plus the affine reduction onto the unknown vector z."""

    n_slots: int
    slot_of_u: np.ndarray          # (n_nodes, 2), -1 where absent
    slot_of_phi: np.ndarray        # (n_nodes,), -1 where absent
    has_u: np.ndarray
    has_phi: np.ndarray
    mech_touched: np.ndarray       # node belongs to a mechanical element
    kind: np.ndarray               # (n_slots,) DIRICHLET / FREE / SLAVED
    is_phi_slot: np.ndarray        # (n_slots,) bool
    x0_const: np.ndarray
    x0_slope: np.ndarray
    electrode_slots: dict[str, np.ndarray]
    ground_slots: dict[str, np.ndarray]
    # Filled in by Problem once the morph treatment is known.
    P: sp.csr_matrix | None = None
    free_slots: np.ndarray | None = None   # z column -> slot index
    z_is_phi: np.ndarray | None = None
    z_is_u: np.ndarray | None = None
    n_free_phi: int = 0

    @property
    def n_z(self) -> int:
        return 0 if self.P is None else self.P.shape[1]


def _node_set(mesh: Mesh, name: str, context: str) -> np.ndarray:
    try:
        return mesh.node_sets[name]
    except KeyError:
        raise ConfigError(f"{context} references unknown node set {name!r}") from None


def build_dofmap(mesh: Mesh, bcs: BoundaryConditions) -> DofMap:
    """Lay out slots node-major and apply the Dirichlet data.

    Re-prescribing a slot is allowed only when the new value agrees with the
    old one (listing a set twice is harmless); conflicting prescriptions such
    as a grounded electrode raise :class:`ConfigError`.
    """
    n_nodes = mesh.n_nodes
    has_u = np.zeros(n_nodes, dtype=bool)
    has_phi = np.zeros(n_nodes, dtype=bool)
    mech_touched = np.zeros(n_nodes, dtype=bool)
    for e in range(mesh.n_elements):
        nn = mesh.element_nodes(e)
        has_u[nn] = True
        if mesh.region_of(e).physics == ELECTRIC:
            has_phi[nn] = True
        else:
            mech_touched[nn] = True

    per_node = 2 * has_u.astype(np.int64) + has_phi.astype(np.int64)
    starts = np.concatenate(([0], np.cumsum(per_node)))
    n_slots = int(starts[-1])

    slot_of_u = np.full((n_nodes, 2), -1, dtype=np.int64)
    slot_of_phi = np.full(n_nodes, -1, dtype=np.int64)
    slot_of_u[has_u, 0] = starts[:-1][has_u]
    slot_of_u[has_u, 1] = starts[:-1][has_u] + 1
    slot_of_phi[has_phi] = starts[:-1][has_phi] + 2 * has_u[has_phi]

    is_phi_slot = np.zeros(n_slots, dtype=bool)
    is_phi_slot[slot_of_phi[has_phi]] = True

    kind = np.full(n_slots, FREE, dtype=np.int8)
    x0_const = np.zeros(n_slots)
    x0_slope = np.zeros(n_slots)

    def prescribe(slots: np.ndarray, const: float, slope: float, what: str) -> None:
        clash = (kind[slots] == DIRICHLET) & (
            (x0_const[slots] != const) | (x0_slope[slots] != slope))
        if clash.any():
            raise ConfigError(f"{what} conflicts with an earlier prescription "
                              f"on {int(clash.sum())} slot(s)")
        kind[slots] = DIRICHLET
        x0_const[slots] = const
        x0_slope[slots] = slope

    for set_name, axes in bcs.clamps:
        if axes not in _AXES:
            raise ConfigError(f"clamp axes must be 'x', 'y' or 'xy', got {axes!r}")
        ids = _node_set(mesh, set_name, "clamp")
        for ax in _AXES[axes]:
            slots = slot_of_u[ids, ax]
            if (slots < 0).any():
                raise ConfigError(f"clamp {set_name!r} touches nodes without "
                                  "displacement slots")
            prescribe(slots, 0.0, 0.0, f"clamp {set_name!r}")

    ground_slots: dict[str, np.ndarray] = {}
    for set_name in bcs.grounds:
        ids = _node_set(mesh, set_name, "ground")
        slots = slot_of_phi[ids]
        if (slots < 0).any():
            raise ConfigError(f"ground {set_name!r} touches nodes outside the "
                              "electric region")
        prescribe(slots, 0.0, 0.0, f"ground {set_name!r}")
        ground_slots[set_name] = slots

    electrode_slots: dict[str, np.ndarray] = {}
    for set_name, coeff in bcs.electrodes:
        ids = _node_set(mesh, set_name, "electrode")
        slots = slot_of_phi[ids]
        if (slots < 0).any():
            raise ConfigError(f"electrode {set_name!r} touches nodes outside "
                              "the electric region")
        prescribe(slots, 0.0, float(coeff), f"electrode {set_name!r}")
        electrode_slots[set_name] = slots

    if not (kind == DIRICHLET).any():
        logger.warning("no Dirichlet data at all; the assembled system will "
                       "be singular")

    return DofMap(n_slots, slot_of_u, slot_of_phi, has_u, has_phi,
                  mech_touched, kind, is_phi_slot, x0_const, x0_slope,
                  electrode_slots, ground_slots)


@dataclass
class SystemState:
    """One assembly of the reduced residual, tangent and scalar diagnostics.

    ``charges`` maps each electrode and ground set to the total charge (per
    unit depth) its nodes carry, computed from the field-energy gradient.
    """

    residual: np.ndarray
    tangent: sp.csr_matrix | None
    dr_dv: np.ndarray | None
    w_mech: float
    w_spring: float
    w_morph: float
    w_elec: float
    charges: dict[str, float]
    elec_force_full: np.ndarray | None = None

    @property
    def w_strain(self) -> float:
        """Stored mechanical energy (structure, springs, morph fiction)."""
        return self.w_mech + self.w_spring + self.w_morph

    @property
    def total_potential(self) -> float:
        return self.w_mech + self.w_spring + self.w_morph - self.w_elec


class _Group:
    """Elements of one (order, region) bucket with precomputed index arrays."""

    def __init__(self, mesh: Mesh, els: np.ndarray, dof: DofMap,
                 material, physics: str):
        self.physics = physics
        self.material = material
        self.els = els
        nen = int(mesh.kinds[els[0]])
        self.nen = nen
        self.conn = mesh.conn[els, :nen]
        self.ecoords = mesh.nodes[self.conn]
        purpose = "mech" if physics == MECHANICAL else "elec"
        from memfem.quadrature import triangle_rule
        rule = triangle_rule(elements.default_degree(nen, purpose))
        _, self.dn = elements.shape_table(nen, rule)
        self.w = rule.weights
        self.uslot = dof.slot_of_u[self.conn]            # (E, nen, 2)
        self.flat_u = self.uslot.reshape(len(els), 2 * nen)
        if physics == MECHANICAL:
            self.cmat = material.stiffness_voigt()
            self.pslot = None
        else:
            self.eps = material.eps
            self.pslot = dof.slot_of_phi[self.conn]      # (E, nen)

    def tangent_blocks(self):
        """(rows, cols) index arrays for each tangent block, kernel order."""
        e = len(self.els)
        fu = self.flat_u
        if self.physics == MECHANICAL:
            return [(np.broadcast_to(fu[:, :, None], (e, 2 * self.nen, 2 * self.nen)),
                     np.broadcast_to(fu[:, None, :], (e, 2 * self.nen, 2 * self.nen)))]
        p = self.pslot
        nen = self.nen
        return [
            (np.broadcast_to(p[:, :, None], (e, nen, nen)),
             np.broadcast_to(p[:, None, :], (e, nen, nen))),          # phi-phi
            (np.broadcast_to(fu[:, :, None], (e, 2 * nen, nen)),
             np.broadcast_to(p[:, None, :], (e, 2 * nen, nen))),      # u-phi
            (np.broadcast_to(p[:, :, None], (e, nen, 2 * nen)),
             np.broadcast_to(fu[:, None, :], (e, nen, 2 * nen))),     # phi-u
            (np.broadcast_to(fu[:, :, None], (e, 2 * nen, 2 * nen)),
             np.broadcast_to(fu[:, None, :], (e, 2 * nen, 2 * nen))), # u-u
        ]


class Problem:
    """A mesh, its materials and boundary conditions, ready to assemble.

    Args:
        mesh: geometry with regions tagged MECHANICAL or ELECTRIC.
        materials: region material name -> MechanicalMaterial or
            ElectricMaterial, matching the region physics.
        bcs: see :class:`BoundaryConditions`.
        morph: how electric-region nodes move with the structure. ``slaved``
            (default) eliminates them through a linear elastic extension of
            the interface motion; ``elastic`` keeps them as unknowns held by
            a fictitious elastic material of modulus ``morph_modulus`` whose
            energy joins the total potential. The slaved form adds no
            parasitic stiffness and is what every shipped configuration uses;
            the elastic form is retained as an independent cross-check.
        morph_modulus: fictitious modulus in Pa, required for ``elastic``.
        backend: kernel backend name or module (None = fastest available).
    """

    def __init__(self, mesh: Mesh, materials: dict, bcs: BoundaryConditions,
                 morph: str = "slaved", morph_modulus: float | None = None,
                 backend=None):
        if morph not in ("slaved", "elastic"):
            raise ConfigError(f"morph must be 'slaved' or 'elastic', got {morph!r}")
        self.mesh = mesh
        self.materials = dict(materials)
        self.bcs = bcs
        self.morph = morph
        self.backend = get_backend(backend) if (backend is None or
                                                isinstance(backend, str)) else backend
        self.dof = build_dofmap(mesh, bcs)
        self._groups = self._build_groups()
        self._rows, self._cols, self._block_meta = self._tangent_pattern()

        unit_morph = self._morph_unit_stiffness()
        self.k_morph = None
        if morph == "elastic":
            if unit_morph is not None:
                if morph_modulus is None or morph_modulus <= 0.0:
                    raise ConfigError("elastic morph requires a positive "
                                      "morph_modulus")
                self.k_morph = (morph_modulus * unit_morph).tocsr()
        elif unit_morph is not None:
            self._enslave_vacuum(unit_morph)
        self.k_spring = self._spring_stiffness()
        self._finalize_reduction()
        self._mass_full: sp.csr_matrix | None = None
        self._mass_red: sp.csr_matrix | None = None

    # -- setup ------------------------------------------------------------

    def _build_groups(self) -> list[_Group]:
        mesh = self.mesh
        buckets: dict[tuple[int, int], list[int]] = {}
        for e in range(mesh.n_elements):
            buckets.setdefault((int(mesh.kinds[e]), int(mesh.region_ids[e])),
                               []).append(e)
        groups = []
        for (nen, rid), els in sorted(buckets.items()):
            region = mesh.regions[rid]
            try:
                material = self.materials[region.material]
            except KeyError:
                raise ConfigError(f"no material named {region.material!r} for "
                                  f"region {region.name!r}") from None
            want = MechanicalMaterial if region.physics == MECHANICAL \
                else ElectricMaterial
            if not isinstance(material, want):
                raise ConfigError(
                    f"region {region.name!r} ({region.physics}) needs a "
                    f"{want.__name__}, got {type(material).__name__}")
            groups.append(_Group(mesh, np.asarray(els, dtype=np.int64),
                                 self.dof, material, region.physics))
        return groups

    def _tangent_pattern(self):
        rows, cols, meta = [], [], []
        offset = 0
        for gi, grp in enumerate(self._groups):
            for bi, (r, c) in enumerate(grp.tangent_blocks()):
                size = r.size
                rows.append(np.ascontiguousarray(r).ravel())
                cols.append(np.ascontiguousarray(c).ravel())
                meta.append((gi, bi, offset, size))
                offset += size
        if rows:
            return np.concatenate(rows), np.concatenate(cols), meta
        return (np.empty(0, dtype=np.int64),) * 2 + (meta,)

    def _morph_unit_stiffness(self) -> sp.csr_matrix | None:
        """Linear elastic stiffness of the electric regions at unit modulus.

        Assembled once on the undeformed mesh; it is the smoothing operator
        behind both morph treatments. Poisson ratio zero keeps the element
        response spring-like and the extension problem well conditioned.
        """
        probe = MechanicalMaterial(1.0, 0.0)
        rows, cols, vals = [], [], []
        for grp in self._groups:
            if grp.physics != ELECTRIC:
                continue
            e, nen = len(grp.els), grp.nen
            fout = np.empty((e, nen, 2))
            kout = np.empty((e, 2 * nen, 2 * nen))
            _, bad = self.backend.mech_batch(
                grp.ecoords, np.zeros((e, nen, 2)), grp.dn, grp.w,
                probe.stiffness_voigt(), fout, kout)
            if bad >= 0:
                raise ElementInversionError(int(grp.els[bad]), "electric",
                                            "undeformed mesh")
            rows.append(np.broadcast_to(grp.flat_u[:, :, None],
                                        kout.shape).ravel())
            cols.append(np.broadcast_to(grp.flat_u[:, None, :],
                                        kout.shape).ravel())
            vals.append(kout.ravel())
        if not rows:
            return None
        n = self.dof.n_slots
        return sp.coo_matrix((np.concatenate(vals),
                              (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n)).tocsr()

    def _enslave_vacuum(self, unit_morph: sp.csr_matrix) -> None:
        """Mark vacuum-interior displacement slots SLAVED and solve for the
        influence of the wetted interface on them (modulus cancels)."""
        dof = self.dof
        vac_nodes = dof.has_phi & ~dof.mech_touched
        vac = dof.slot_of_u[vac_nodes].ravel()
        vac = vac[(vac >= 0) & (dof.kind[vac] == FREE)]
        iface_nodes = dof.has_phi & dof.mech_touched
        anchors = dof.slot_of_u[iface_nodes].ravel()
        anchors = anchors[(anchors >= 0) & (dof.kind[anchors] == FREE)]
        if len(vac) == 0:
            return
        dof.kind[vac] = SLAVED
        if len(anchors) == 0:
            return                       # interface fully clamped: slaves stay 0
        kvv = unit_morph[vac][:, vac].tocsc()
        kva = unit_morph[vac][:, anchors].toarray()
        try:
            lu = spla.splu(kvv)
        except RuntimeError as exc:
            raise SingularSystemError(
                f"mesh-following extension is singular: {exc}") from None
        self._slave_rows = vac
        self._slave_anchor_slots = anchors
        self._slave_coeff = -lu.solve(kva)        # (n_vac, n_anchor)

    def _spring_stiffness(self) -> sp.csr_matrix | None:
        if not self.bcs.springs:
            return None
        dof = self.dof
        n = dof.n_slots
        diag = np.zeros(n)
        for spring in self.bcs.springs:
            if spring.axis not in (0, 1):
                raise ConfigError(f"spring axis must be 0 or 1, got {spring.axis}")
            if spring.stiffness < 0.0:
                raise ConfigError("spring stiffness must be non-negative")
            ids = _node_set(self.mesh, spring.node_set, "spring")
            slots = dof.slot_of_u[ids, spring.axis]
            if (slots < 0).any():
                raise ConfigError(f"spring {spring.node_set!r} touches nodes "
                                  "without displacement slots")
            diag[slots] += spring.stiffness / len(ids)
        return sp.diags(diag).tocsr()

    def _finalize_reduction(self) -> None:
        dof = self.dof
        free = np.flatnonzero(dof.kind == FREE)
        col_of = np.full(dof.n_slots, -1, dtype=np.int64)
        col_of[free] = np.arange(len(free))
        rows = [free]
        cols = [col_of[free]]
        vals = [np.ones(len(free))]
        if hasattr(self, "_slave_coeff"):
            t = self._slave_coeff
            anchor_cols = col_of[self._slave_anchor_slots]
            rr, cc = np.nonzero(np.abs(t) > 1e-14)
            rows.append(self._slave_rows[rr])
            cols.append(anchor_cols[cc])
            vals.append(t[rr, cc])
        dof.P = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dof.n_slots, len(free)))
        dof.free_slots = free
        dof.z_is_phi = dof.is_phi_slot[free]
        dof.z_is_u = ~dof.z_is_phi
        dof.n_free_phi = int(dof.z_is_phi.sum())

    # -- state handling ----------------------------------------------------

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.dof.n_z)

    def full_state(self, z: np.ndarray, voltage: float) -> np.ndarray:
        """Expand unknowns to the monolithic slot vector at drive voltage."""
        dof = self.dof
        return dof.x0_const + voltage * dof.x0_slope + dof.P @ z

    def node_displacements(self, x_full: np.ndarray) -> np.ndarray:
        """(n_nodes, 2) displacement field (zero where a node has no slots)."""
        dof = self.dof
        u = np.zeros((self.mesh.n_nodes, 2))
        u[dof.has_u] = x_full[dof.slot_of_u[dof.has_u]]
        return u

    def node_potentials(self, x_full: np.ndarray) -> np.ndarray:
        """(n_nodes,) potential field (zero outside the electric region)."""
        dof = self.dof
        phi = np.zeros(self.mesh.n_nodes)
        phi[dof.has_phi] = x_full[dof.slot_of_phi[dof.has_phi]]
        return phi

    # -- assembly ----------------------------------------------------------

    def assemble(self, z: np.ndarray, voltage: float, want_tangent: bool = True,
                 parts: tuple[str, ...] = ("mech", "elec"),
                 keep_elec_force: bool = False) -> SystemState:
        """Residual, tangent and diagnostics at state (z, V).

        ``parts`` restricts the physics included (the staggered solver uses
        single-physics assemblies); constant spring/morph stiffness always
        participates. ``keep_elec_force`` additionally returns the raw field
        energy gradient on displacement slots, the dead load the staggered
        scheme freezes.

        Raises:
            ElementInversionError: a deformation gradient or displaced
                element Jacobian lost positivity.
        """
        dof = self.dof
        x = self.full_state(z, voltage)
        u = np.zeros((self.mesh.n_nodes, 2))
        u[dof.has_u] = x[dof.slot_of_u[dof.has_u]]
        phi = np.zeros(self.mesh.n_nodes)
        phi[dof.has_phi] = x[dof.slot_of_phi[dof.has_phi]]

        g_full = np.zeros(dof.n_slots)
        q_phi = np.zeros(dof.n_slots)
        f_elec = np.zeros(dof.n_slots) if keep_elec_force else None
        vals: list[np.ndarray] = [None] * len(self._block_meta)
        w_mech = 0.0
        w_elec = 0.0

        bi = 0
        for grp in self._groups:
            e, nen = len(grp.els), grp.nen
            if grp.physics == MECHANICAL:
                if "mech" in parts:
                    eu = u[grp.conn]
                    fout = np.empty((e, nen, 2))
                    kout = np.empty((e, 2 * nen, 2 * nen)) if want_tangent else None
                    energy, bad = self.backend.mech_batch(
                        grp.ecoords, eu, grp.dn, grp.w, grp.cmat, fout, kout)
                    if bad >= 0:
                        raise ElementInversionError(
                            int(grp.els[bad]), "mechanical", f"V={voltage:g}")
                    w_mech += energy
                    np.add.at(g_full, grp.uslot, fout)
                    if want_tangent:
                        vals[bi] = kout.ravel()
                elif want_tangent:
                    vals[bi] = np.zeros(4 * nen * nen * e)
                bi += 1
            else:
                if "elec" in parts:
                    ecoords = grp.ecoords + u[grp.conn]
                    ephi = phi[grp.conn]
                    qout = np.empty((e, nen))
                    fout = np.empty((e, nen, 2))
                    if want_tangent:
                        kpp = np.empty((e, nen, nen))
                        kup = np.empty((e, 2 * nen, nen))
                        kuu = np.empty((e, 2 * nen, 2 * nen))
                    else:
                        kpp = kup = kuu = None
                    energy, bad = self.backend.elec_batch(
                        ecoords, ephi, grp.dn, grp.w, grp.eps,
                        qout, fout, kpp, kup, kuu)
                    if bad >= 0:
                        raise ElementInversionError(
                            int(grp.els[bad]), "electric", f"V={voltage:g}")
                    w_elec += energy
                    np.add.at(g_full, grp.pslot, -qout)
                    np.add.at(g_full, grp.uslot, -fout)
                    np.add.at(q_phi, grp.pslot, qout)
                    if f_elec is not None:
                        np.add.at(f_elec, grp.uslot, fout)
                    if want_tangent:
                        vals[bi] = -kpp.ravel()
                        vals[bi + 1] = -kup.ravel()
                        vals[bi + 2] = -kup.transpose(0, 2, 1).ravel()
                        vals[bi + 3] = -kuu.ravel()
                elif want_tangent:
                    vals[bi] = np.zeros(nen * nen * e)
                    vals[bi + 1] = np.zeros(2 * nen * nen * e)
                    vals[bi + 2] = np.zeros(2 * nen * nen * e)
                    vals[bi + 3] = np.zeros(4 * nen * nen * e)
                bi += 4

        w_spring = 0.0
        if self.k_spring is not None:
            ks_x = self.k_spring @ x
            g_full += ks_x
            w_spring = 0.5 * float(x @ ks_x)
        w_morph = 0.0
        if self.k_morph is not None:
            km_x = self.k_morph @ x
            g_full += km_x
            w_morph = 0.5 * float(x @ km_x)

        residual = dof.P.T @ g_full
        tangent = None
        dr_dv = None
        if want_tangent:
            n = dof.n_slots
            k_full = sp.coo_matrix((np.concatenate(vals),
                                    (self._rows, self._cols)),
                                   shape=(n, n)).tocsr()
            if self.k_spring is not None:
                k_full = k_full + self.k_spring
            if self.k_morph is not None:
                k_full = k_full + self.k_morph
            tangent = (dof.P.T @ (k_full @ dof.P)).tocsr()
            dr_dv = dof.P.T @ (k_full @ dof.x0_slope)

        charges = {name: float(q_phi[slots].sum())
                   for name, slots in {**dof.electrode_slots,
                                       **dof.ground_slots}.items()}
        return SystemState(residual, tangent, dr_dv, float(w_mech), w_spring,
                           w_morph, float(w_elec), charges, f_elec)

    def assemble_mass(self) -> sp.csr_matrix:
        """Reduced diagonally lumped mass matrix (constant, cached).

        Lumped by diagonal scaling of the consistent element matrix
        (each diagonal entry multiplied by element mass over diagonal
        sum), which keeps every nodal mass positive on quadratic
        triangles where plain row summing puts zero on the corners.
        A consistent matrix turns a voltage step into grid-frequency
        acceleration ringing that the undamped average-acceleration
        integrator never dissipates; lumping removes the excitation.
        """
        if self._mass_red is not None:
            return self._mass_red
        dof = self.dof
        rows, vals = [], []
        for grp in self._groups:
            if grp.physics != MECHANICAL or grp.material.rho == 0.0:
                continue
            for i, e in enumerate(grp.els):
                m = elements.mass_element(grp.ecoords[i], grp.material.rho)
                d = m.diagonal()
                rows.append(grp.flat_u[i])
                vals.append(d * (m.sum() / d.sum()))
        n = dof.n_slots
        if rows:
            diag = np.zeros(n)
            np.add.at(diag, np.concatenate(rows), np.concatenate(vals))
            m_full = sp.diags(diag, format="csr")
        else:
            m_full = sp.csr_matrix((n, n))
        self._mass_full = m_full
        self._mass_red = (dof.P.T @ (m_full @ dof.P)).tocsr()
        return self._mass_red


# -- linear algebra --------------------------------------------------------


def _scaling(diag: np.ndarray) -> np.ndarray:
    mags = np.abs(diag)
    # Structural zeros keep unit scale; everything else is brought to +-1.
    return np.where(mags > 1e-290, 1.0 / np.sqrt(np.maximum(mags, 1e-290)), 1.0)


def factorize(matrix: sp.spmatrix) -> Callable[[np.ndarray], np.ndarray]:
    """Equilibrated sparse LU, returned as a solve callable.

    Factors once so several right-hand sides share the cost (Newton
    direction plus step-acceptance probes). Each call runs one step of
    iterative refinement; if the refined residual is still not small
    against ``|K| |x| + |b|`` the matrix is reported singular, with a
    null-space estimate attached when the problem is small enough to
    analyse densely.

    Raises:
        SingularSystemError
    """
    k = matrix.tocsr()
    s = _scaling(k.diagonal())
    # Scale rows and columns on the data array directly; the two diagonal
    # matmuls cost more than the factorization on small systems.
    ks = k.copy()
    ks.data *= np.repeat(s, np.diff(k.indptr)) * s[k.indices]
    try:
        lu = spla.splu(ks.tocsc())
        # A tiny pivot ratio on the equilibrated matrix is the singularity
        # signal; backward error alone stays small even for rank-deficient
        # systems (the solution just blows up along the null space).
        pivots = np.abs(lu.U.diagonal())
        if pivots.min() <= 1e-13 * pivots.max():
            raise _singular_error(k, s, f"pivot ratio "
                                  f"{pivots.min() / pivots.max():.2e}")
    except RuntimeError:
        raise _singular_error(k, s, "factorization failed") from None
    row_norm = float(np.abs(k).sum(axis=1).max())

    def solve(rhs: np.ndarray) -> np.ndarray:
        b = np.asarray(rhs, dtype=float)
        x = s * lu.solve(s * b)
        r = b - k @ x
        x = x + s * lu.solve(s * r)
        r = b - k @ x
        denom = row_norm * np.linalg.norm(x, np.inf) \
            + np.linalg.norm(b, np.inf)
        if denom == 0.0:
            return x
        rel = np.linalg.norm(r, np.inf) / denom
        if not np.isfinite(rel) or rel > 1e-8:
            raise _singular_error(k, s, f"refined residual {rel:.2e}")
        return x

    return solve


def linear_solve(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse solve: :func:`factorize` applied to one right-hand side.

    Raises:
        SingularSystemError
    """
    return factorize(matrix)(rhs)


def _singular_error(k: sp.csr_matrix, s: np.ndarray,
                    why: str) -> SingularSystemError:
    null = None
    if k.shape[0] <= 4096:
        dense = (sp.diags(s) @ k @ sp.diags(s)).toarray()
        dense = 0.5 * (dense + dense.T)
        vals, vecs = scipy.linalg.eigh(dense)
        v = s * vecs[:, int(np.argmin(np.abs(vals)))]
        null = v / np.linalg.norm(v)
    return SingularSystemError(f"linear system singular to working precision "
                               f"({why})", null)


@dataclass(frozen=True)
class Inertia:
    """Signature of a symmetric matrix from a Bunch-Kaufman factorization."""

    neg: int
    zero: int
    pos: int
    min_abs: float
    max_abs: float

    def schur_negatives(self, n_phi: int) -> int:
        """Negative count of the displacement Schur complement.

        The potential block of the saddle Hessian is negative definite, so
        by the Haynsworth identity its elimination removes exactly one
        negative eigenvalue per free potential slot.
        """
        return self.neg - n_phi


def matrix_inertia(matrix, zero_rtol: float = 1e-9) -> Inertia:
    """Eigenvalue sign counts of a symmetric matrix (dense factorization).

    Counting happens on the diagonally equilibrated matrix: equilibration is
    a congruence, so the signs are those of the input, while the wild scale
    spread between displacement and potential slots cannot starve the
    factorization. "Zero" therefore means zero at unit diagonal scale; a
    tiny but healthy stiffness counts by its sign, an actual rank loss (a
    fold, a free-floating slot) lands in ``zero``. ``min_abs`` near zero is
    the matching conditioning alarm.
    """
    a = matrix.toarray() if sp.issparse(matrix) else np.array(matrix, dtype=float)
    a = 0.5 * (a + a.T)
    s = _scaling(np.diag(a))
    a = a * np.outer(s, s)
    _, d, _ = scipy.linalg.ldl(a)
    eigs = []
    n = a.shape[0]
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            # 2x2 pivot block, eigenvalues in closed form.
            p, q, r = d[i, i], d[i + 1, i + 1], d[i + 1, i]
            mid = 0.5 * (p + q)
            rad = np.hypot(0.5 * (p - q), r)
            eigs.extend((mid - rad, mid + rad))
            i += 2
        else:
            eigs.append(d[i, i])
            i += 1
    eigs = np.asarray(eigs)
    mags = np.abs(eigs)
    top = mags.max() if len(mags) else 0.0
    tol = zero_rtol * top
    zero = int((mags <= tol).sum())
    neg = int((eigs < -tol).sum())
    pos = int((eigs > tol).sum())
    return Inertia(neg, zero, pos, float(mags.min() if len(mags) else 0.0),
                   float(top))
