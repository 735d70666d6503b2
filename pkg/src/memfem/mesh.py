"""Triangle meshes for coupled electro-mechanical models.

A mesh is a flat container: node coordinates, element connectivity (3-node or
6-node triangles, counter-clockwise), named regions carrying a physics tag
(``MECHANICAL`` or ``ELECTRIC``) and a material-table key, and named node sets
used to apply boundary conditions.

The structured generator builds the standard actuator stack: an elastic beam
layer sitting on top of a vacuum gap, with electrode node sets on the gap
floor. Meshes round-trip through a plain-text format (see :func:`write_mesh`).

Example::

    mesh = generate_beam_mesh(length=300e-6, thickness=0.5e-6, gap=6e-6,
                              electrode_length=60e-6,
                              electrode_centers=(60e-6, 150e-6, 240e-6),
                              nx=30, ny_beam=1, ny_gap=3, order=2)
    write_mesh(mesh, "beam.mesh")
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from memfem.errors import GeometryError, MeshFormatError
from memfem.quadrature import triangle_rule

logger = logging.getLogger(__name__)

MECHANICAL = "MECHANICAL"
ELECTRIC = "ELECTRIC"

# Node ordering: corners CCW, then mid-sides (m01, m12, m20) for TRI6.
_TRI6_CCW_FIX = (0, 2, 1, 5, 4, 3)   # permutation that flips a clockwise TRI6
_TRI3_CCW_FIX = (0, 2, 1)


@dataclass(frozen=True)
class Region:
    """Named element group with a physics tag and a material-table key."""

    name: str
    physics: str
    material: str

    def __post_init__(self):
        if self.physics not in (MECHANICAL, ELECTRIC):
            raise ValueError(f"physics must be MECHANICAL or ELECTRIC, "
                             f"got {self.physics!r}")


@dataclass(frozen=True)
class Diagnostic:
    """One finding from :func:`validate`."""

    code: str
    message: str
    entities: tuple = ()

    def __str__(self):
        return f"[{self.code}] {self.message}"


@dataclass
class Mesh:
    """Immutable triangle mesh.

    Attributes:
        nodes: (n_nodes, 2) coordinates, metres.
        conn: (n_elements, 6) connectivity, -1-padded for TRI3 rows.
        kinds: (n_elements,) node count per element (3 or 6).
        region_ids: (n_elements,) index into ``regions``.
        regions: tuple of :class:`Region`.
        node_sets: name -> sorted node-id array.
    """

    nodes: np.ndarray
    conn: np.ndarray
    kinds: np.ndarray
    region_ids: np.ndarray
    regions: tuple[Region, ...]
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=np.float64)
        self.conn = np.ascontiguousarray(self.conn, dtype=np.int64)
        self.kinds = np.ascontiguousarray(self.kinds, dtype=np.int64)
        self.region_ids = np.ascontiguousarray(self.region_ids, dtype=np.int64)
        self.regions = tuple(self.regions)
        self.node_sets = {k: np.unique(np.asarray(v, dtype=np.int64))
                          for k, v in self.node_sets.items()}
        for a in (self.nodes, self.conn, self.kinds, self.region_ids,
                  *self.node_sets.values()):
            a.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.conn)

    def element_nodes(self, e: int) -> np.ndarray:
        return self.conn[e, : self.kinds[e]]

    def region_of(self, e: int) -> Region:
        return self.regions[self.region_ids[e]]

    def elements_in_region(self, name: str) -> np.ndarray:
        idx = [i for i, r in enumerate(self.regions) if r.name == name]
        if not idx:
            raise KeyError(f"no region named {name!r}")
        return np.nonzero(np.isin(self.region_ids, idx))[0]

    def nodes_in_physics(self, physics: str) -> np.ndarray:
        """Sorted ids of nodes touched by any element of the given physics."""
        mask = np.array([r.physics == physics for r in self.regions])
        rows = mask[self.region_ids]
        used = self.conn[rows].ravel()
        return np.unique(used[used >= 0])

    def areas(self) -> np.ndarray:
        """Undeformed element areas (quadrature-exact for both orders)."""
        out = np.empty(self.n_elements)
        for e in range(self.n_elements):
            out[e] = _element_area(self.nodes[self.element_nodes(e)])
        return out

    def char_length(self) -> float:
        """Longest corner edge in the mesh."""
        c = self.conn[:, :3]
        p = self.nodes[c]                               # (E, 3, 2)
        d = p - np.roll(p, -1, axis=1)
        return float(np.sqrt((d ** 2).sum(axis=2)).max())

    def find_node(self, x: float, y: float, within: np.ndarray | None = None) -> int:
        """Id of the node nearest (x, y), optionally restricted to a set."""
        ids = np.arange(self.n_nodes) if within is None else np.asarray(within)
        d2 = ((self.nodes[ids] - [x, y]) ** 2).sum(axis=1)
        return int(ids[np.argmin(d2)])


def _shape_tri6_detj(coords: np.ndarray, xi: np.ndarray) -> float:
    # Local helper: geometric Jacobian of a TRI6 at one reference point.
    from memfem.elements import shape_eval  # deferred: avoids import cycle
    _, dn = shape_eval(6, xi)
    jac = coords.T @ dn
    return float(np.linalg.det(jac))


def _element_area(coords: np.ndarray) -> float:
    if len(coords) == 3:
        (x0, y0), (x1, y1), (x2, y2) = coords
        return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
    rule = triangle_rule(2)
    area = 0.0
    for q in range(rule.n_points):
        area += rule.weights[q] * _shape_tri6_detj(coords, rule.points[q]) * 2.0
    return 0.5 * area


def _corner_area(coords3: np.ndarray) -> float:
    (x0, y0), (x1, y1), (x2, y2) = coords3
    return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))


# ---------------------------------------------------------------------------
# structured generator
# ---------------------------------------------------------------------------

def generate_beam_mesh(length: float, thickness: float, gap: float,
                       electrode_length: float,
                       electrode_centers: tuple[float, ...],
                       nx: int, ny_beam: int, ny_gap: int,
                       order: int = 1,
                       beam_material: str = "structure",
                       gap_material: str = "vacuum") -> Mesh:
    """Structured beam-over-gap mesh.

    The beam occupies y in [0, thickness] (region ``beam``, MECHANICAL), the
    vacuum gap y in [-gap, 0] (region ``gap``, ELECTRIC); the two layers share
    the interface nodes at y = 0. Emitted node sets: ``clamp_left``,
    ``clamp_right`` (beam end columns), ``beam_bottom`` (interface),
    ``beam`` (all beam-layer nodes), ``substrate`` (gap floor) and
    ``electrode_k`` (1-based, floor segments of the given length centred at
    ``electrode_centers``).

    Args:
        order: 1 for TRI3, 2 for TRI6 (generated by mid-side elevation).

    Raises:
        GeometryError: non-positive dimensions/subdivisions, electrodes that
            overlap or leave [0, length].
    """
    if min(length, thickness, gap) <= 0.0:
        raise GeometryError("length, thickness and gap must be positive")
    if min(nx, ny_beam, ny_gap) < 1:
        raise GeometryError("nx, ny_beam and ny_gap must be at least 1")
    if order not in (1, 2):
        raise GeometryError(f"order must be 1 or 2, got {order}")
    if electrode_length <= 0.0:
        raise GeometryError("electrode_length must be positive")
    centers = tuple(float(c) for c in electrode_centers)
    if not centers:
        raise GeometryError("at least one electrode is required")
    tol = 1e-9 * length
    half = 0.5 * electrode_length
    spans = sorted((c - half, c + half) for c in centers)
    for lo, hi in spans:
        if lo < -tol or hi > length + tol:
            raise GeometryError(
                f"electrode [{lo:.6g}, {hi:.6g}] leaves the beam span [0, {length:.6g}]")
    for (_, hi), (lo, _) in zip(spans, spans[1:]):
        if lo < hi - tol:
            raise GeometryError("electrodes overlap")

    # Node grid, row-major from the gap floor upwards.
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.concatenate([np.linspace(-gap, 0.0, ny_gap + 1),
                         np.linspace(0.0, thickness, ny_beam + 1)[1:]])
    n_cols, n_rows = nx + 1, ny_gap + ny_beam + 1
    xx, yy = np.meshgrid(xs, ys)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(col: int, row: int) -> int:
        return row * n_cols + col

    regions = (Region("gap", ELECTRIC, gap_material),
               Region("beam", MECHANICAL, beam_material))
    tris, region_ids = [], []
    for row in range(n_rows - 1):
        for col in range(nx):
            n00, n10 = nid(col, row), nid(col + 1, row)
            n01, n11 = nid(col, row + 1), nid(col + 1, row + 1)
            if (row + col) % 2 == 0:
                cell = [(n00, n10, n11), (n00, n11, n01)]
            else:  # mirrored diagonal keeps the mesh left-right symmetric
                cell = [(n00, n10, n01), (n10, n11, n01)]
            tris.extend(cell)
            region_ids.extend([0 if row < ny_gap else 1] * 2)

    conn = np.full((len(tris), 6), -1, dtype=np.int64)
    conn[:, :3] = np.array(tris, dtype=np.int64)
    kinds = np.full(len(tris), 3, dtype=np.int64)

    cols = np.arange(n_cols)
    interface_row = ny_gap
    node_sets: dict[str, np.ndarray] = {
        "substrate": nid(cols, 0),
        "beam_bottom": nid(cols, interface_row),
        "clamp_left": nid(0, np.arange(interface_row, n_rows)),
        "clamp_right": nid(nx, np.arange(interface_row, n_rows)),
        "beam": np.concatenate(
            [nid(cols, r) for r in range(interface_row, n_rows)]),
    }
    snap = 1e-6 * (length / nx)
    for k, (lo, hi) in enumerate(sorted((c - half, c + half) for c in centers), 1):
        sel = cols[(xs >= lo - snap) & (xs <= hi + snap)]
        if len(sel) < 2:
            raise GeometryError(
                f"electrode_{k} spans fewer than two grid columns; refine nx")
        node_sets[f"electrode_{k}"] = nid(sel, 0)

    mesh = Mesh(nodes, conn, kinds, np.array(region_ids), regions, node_sets)
    if order == 2:
        mesh = elevate_order(mesh)
    return mesh


# ---------------------------------------------------------------------------
# order elevation
# ---------------------------------------------------------------------------

def elevate_order(mesh: Mesh) -> Mesh:
    """TRI3 -> TRI6 by inserting one shared mid-side node per edge.

    Node sets are extended with every mid-side node whose two edge endpoints
    both belong to the set, which keeps sets defined by geometric loci
    (clamp columns, electrode segments) tight.

    Raises:
        ValueError: if the mesh already contains TRI6 elements.
    """
    if (mesh.kinds != 3).any():
        raise ValueError("elevate_order expects a pure TRI3 mesh")

    edge_mid: dict[tuple[int, int], int] = {}
    new_coords: list[np.ndarray] = []
    next_id = mesh.n_nodes

    def midside(a: int, b: int) -> int:
        nonlocal next_id
        key = (a, b) if a < b else (b, a)
        hit = edge_mid.get(key)
        if hit is None:
            hit = edge_mid[key] = next_id
            new_coords.append(0.5 * (mesh.nodes[a] + mesh.nodes[b]))
            next_id += 1
        return hit

    conn = np.full((mesh.n_elements, 6), -1, dtype=np.int64)
    for e in range(mesh.n_elements):
        a, b, c = mesh.conn[e, :3]
        conn[e] = (a, b, c, midside(a, b), midside(b, c), midside(c, a))

    nodes = np.vstack([mesh.nodes, np.array(new_coords)]) if new_coords \
        else mesh.nodes.copy()

    node_sets = {}
    for name, ids in mesh.node_sets.items():
        members = set(int(i) for i in ids)
        extra = [mid for (a, b), mid in edge_mid.items()
                 if a in members and b in members]
        node_sets[name] = np.concatenate([ids, np.array(extra, dtype=np.int64)]) \
            if extra else ids

    return Mesh(nodes, conn, np.full(mesh.n_elements, 6, dtype=np.int64),
                mesh.region_ids, mesh.regions, node_sets)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate(mesh: Mesh) -> list[Diagnostic]:
    """Structural checks; returns an empty list for a healthy mesh.

    Covered: finite coordinates, connectivity in range, positive element
    areas/Jacobians, TRI6 mid-sides at edge midpoints, orphan nodes,
    duplicate-coordinate nodes on element edges (non-conformity), empty or
    out-of-range node sets.
    """
    diags: list[Diagnostic] = []

    if not np.isfinite(mesh.nodes).all():
        bad = np.nonzero(~np.isfinite(mesh.nodes).all(axis=1))[0]
        diags.append(Diagnostic("nonfinite-coords",
                                f"{len(bad)} node(s) with non-finite coordinates",
                                tuple(bad.tolist())))

    used = np.zeros(mesh.n_nodes, dtype=bool)
    scale = mesh.char_length() if mesh.n_elements else 1.0
    for e in range(mesh.n_elements):
        nn = mesh.element_nodes(e)
        if (nn < 0).any() or (nn >= mesh.n_nodes).any():
            diags.append(Diagnostic("bad-connectivity",
                                    f"element {e} references missing nodes", (e,)))
            continue
        used[nn] = True
        coords = mesh.nodes[nn]
        area = _corner_area(coords[:3])
        if area <= 0.0:
            diags.append(Diagnostic(
                "nonpositive-area",
                f"element {e} has non-positive corner area {area:.3e}", (e,)))
            continue
        if mesh.kinds[e] == 6:
            for loc, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
                mid = coords[3 + loc]
                gap = np.linalg.norm(mid - 0.5 * (coords[a] + coords[b]))
                edge = np.linalg.norm(coords[b] - coords[a])
                if gap > 1e-6 * max(edge, 1e-300):
                    diags.append(Diagnostic(
                        "midside-off-midpoint",
                        f"element {e} edge {loc}: mid-side off by {gap:.3e}", (e,)))
            rule = triangle_rule(2)
            for q in range(rule.n_points):
                if _shape_tri6_detj(coords, rule.points[q]) <= 0.0:
                    diags.append(Diagnostic(
                        "nonpositive-jacobian",
                        f"element {e} has a non-positive Jacobian", (e,)))
                    break

    orphans = np.nonzero(~used)[0]
    if len(orphans) and mesh.n_elements:
        diags.append(Diagnostic("orphan-nodes",
                                f"{len(orphans)} node(s) not used by any element",
                                tuple(orphans.tolist())))

    # Distinct node ids on identical coordinates, both used by elements: the
    # classic symptom of a non-conforming interface.
    if mesh.n_nodes:
        key = np.round(mesh.nodes / max(scale, 1e-300) * 1e9).astype(np.int64)
        seen: dict[tuple[int, int], int] = {}
        for n in range(mesh.n_nodes):
            k = (int(key[n, 0]), int(key[n, 1]))
            other = seen.get(k)
            if other is not None and used[n] and used[other]:
                diags.append(Diagnostic(
                    "duplicate-coordinates",
                    f"nodes {other} and {n} coincide but have distinct ids "
                    "(non-conforming interface?)", (other, n)))
            else:
                seen.setdefault(k, n)

    for name, ids in mesh.node_sets.items():
        if len(ids) == 0:
            diags.append(Diagnostic("empty-node-set",
                                    f"node set {name!r} is empty"))
        elif (ids < 0).any() or (ids >= mesh.n_nodes).any():
            diags.append(Diagnostic("node-set-out-of-range",
                                    f"node set {name!r} references missing nodes"))

    return diags


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

_KIND_NAMES = {3: "TRI3", 6: "TRI6"}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}


def write_mesh(mesh: Mesh, path: str) -> None:
    """Plain-text dump; full float precision so a round trip is bit-exact."""
    lines = ["# memfem mesh", "NODES"]
    for i, (x, y) in enumerate(mesh.nodes):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append("ELEMENTS")
    for e in range(mesh.n_elements):
        nn = " ".join(str(n) for n in mesh.element_nodes(e))
        lines.append(f"{e} {_KIND_NAMES[int(mesh.kinds[e])]} "
                     f"{mesh.region_of(e).name} {nn}")
    for region in mesh.regions:
        lines.append(f"REGION {region.name} {region.physics} {region.material}")
    for name in sorted(mesh.node_sets):
        lines.append(f"NODESET {name}")
        ids = mesh.node_sets[name]
        for start in range(0, len(ids), 16):
            lines.append(" ".join(str(i) for i in ids[start:start + 16]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path: str) -> Mesh:
    """Parse the text format written by :func:`write_mesh`.

    Node and element ids must be dense (0..n-1, any order). Clockwise
    elements are reordered counter-clockwise with a logged warning. Format
    violations raise :class:`MeshFormatError` with the line number.
    """
    nodes: dict[int, tuple[float, float]] = {}
    elements: dict[int, tuple[str, str, list[int]]] = {}
    regions: dict[str, Region] = {}
    node_sets: dict[str, list[int]] = {}
    section: str | None = None
    current_set: str | None = None

    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            head = tokens[0].upper()
            if head == "NODES" and len(tokens) == 1:
                section = "nodes"
                continue
            if head == "ELEMENTS" and len(tokens) == 1:
                section = "elements"
                continue
            if head == "NODESET":
                if len(tokens) != 2:
                    raise MeshFormatError("NODESET requires exactly one name", lineno)
                section, current_set = "nodeset", tokens[1]
                node_sets.setdefault(current_set, [])
                continue
            if head == "REGION":
                if len(tokens) != 4:
                    raise MeshFormatError(
                        "REGION requires: name physics material", lineno)
                _, name, physics, material = tokens
                try:
                    regions[name] = Region(name, physics.upper(), material)
                except ValueError as exc:
                    raise MeshFormatError(str(exc), lineno) from None
                section = None
                continue

            if section == "nodes":
                if len(tokens) != 3:
                    raise MeshFormatError("node line must be: id x y", lineno)
                try:
                    nid, x, y = int(tokens[0]), float(tokens[1]), float(tokens[2])
                except ValueError:
                    raise MeshFormatError(f"bad node line {line!r}", lineno) from None
                if nid in nodes:
                    raise MeshFormatError(f"duplicate node id {nid}", lineno)
                nodes[nid] = (x, y)
            elif section == "elements":
                if len(tokens) < 6:
                    raise MeshFormatError(
                        "element line must be: id kind region nodes...", lineno)
                try:
                    eid = int(tokens[0])
                except ValueError:
                    raise MeshFormatError(f"bad element id {tokens[0]!r}", lineno) from None
                kind = tokens[1].upper()
                if kind not in _KIND_CODES:
                    raise MeshFormatError(f"unknown element kind {tokens[1]!r}", lineno)
                nen = _KIND_CODES[kind]
                if len(tokens) != 3 + nen:
                    raise MeshFormatError(
                        f"{kind} element needs {nen} nodes, got {len(tokens) - 3}",
                        lineno)
                try:
                    conn = [int(t) for t in tokens[3:]]
                except ValueError:
                    raise MeshFormatError(f"bad connectivity on element {eid}",
                                          lineno) from None
                if eid in elements:
                    raise MeshFormatError(f"duplicate element id {eid}", lineno)
                elements[eid] = (kind, tokens[2], conn)
            elif section == "nodeset":
                try:
                    node_sets[current_set].extend(int(t) for t in tokens)
                except ValueError:
                    raise MeshFormatError(
                        f"bad node id in set {current_set!r}", lineno) from None
            else:
                raise MeshFormatError(f"unexpected content {line!r} "
                                      "outside any section", lineno)

    if not nodes:
        raise MeshFormatError("mesh has no NODES section or it is empty")
    if sorted(nodes) != list(range(len(nodes))):
        raise MeshFormatError("node ids are not dense 0..n-1")
    if sorted(elements) != list(range(len(elements))):
        raise MeshFormatError("element ids are not dense 0..n-1")

    coords = np.array([nodes[i] for i in range(len(nodes))])
    region_list = list(regions.values())  # declaration order, for round trips
    region_index = {r.name: i for i, r in enumerate(region_list)}

    conn = np.full((len(elements), 6), -1, dtype=np.int64)
    kinds = np.empty(len(elements), dtype=np.int64)
    region_ids = np.empty(len(elements), dtype=np.int64)
    flipped = 0
    for eid in range(len(elements)):
        kind, region_name, nn = elements[eid]
        if region_name not in region_index:
            raise MeshFormatError(
                f"element {eid} references undeclared region {region_name!r}")
        for n in nn:
            if not 0 <= n < len(nodes):
                raise MeshFormatError(
                    f"element {eid} references missing node {n}")
        nen = _KIND_CODES[kind]
        if _corner_area(coords[nn[:3]]) < 0.0:
            order = _TRI3_CCW_FIX if nen == 3 else _TRI6_CCW_FIX
            nn = [nn[i] for i in order]
            flipped += 1
        kinds[eid] = nen
        conn[eid, :nen] = nn
        region_ids[eid] = region_index[region_name]

    if flipped:
        logger.warning("load_mesh: reordered %d clockwise element(s) "
                       "counter-clockwise", flipped)

    for name, ids in node_sets.items():
        for n in ids:
            if not 0 <= n < len(nodes):
                raise MeshFormatError(f"node set {name!r} references missing node {n}")

    return Mesh(coords, conn, kinds, region_ids, tuple(region_list),
                {k: np.array(v, dtype=np.int64) for k, v in node_sets.items()})
