"""Cartesian background mesh, half-plane clipping and cut-cell mesh construction.

The physical domain is a box intersected with a list of affine half-planes
``{a*x + b*y >= c}``.  Every cut cell is therefore convex with straight faces,
so each face carries a single constant unit normal.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    MeshValidationError,
    UnsupportedConfigurationError,
)

# Tolerances relative to the mesh size h.
SNAP_FRAC = 1e-12    # vertex snap tolerance used during clipping
DROP_FRAC = 1e-10    # edges shorter than this are dropped
AREA_FRAC = 1e-12    # cells with area below AREA_FRAC*h^2 are omitted


@dataclass(frozen=True)
class BackgroundMesh:
    """Structured Cartesian mesh of the bounding box with square cells."""

    x0: float
    y0: float
    x1: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError("nx and ny must be >= 1")
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ConfigurationError("box corners must satisfy x1 > x0 and y1 > y0")
        h = (self.x1 - self.x0) / self.nx
        hy = (self.y1 - self.y0) / self.ny
        if abs(hy - h) > 1e-14 * h:
            raise ConfigurationError(
                f"cells must be square: (x1-x0)/nx = {h!r} but (y1-y0)/ny = {hy!r}"
            )

    @property
    def h(self):
        return (self.x1 - self.x0) / self.nx

    def cell_center(self, i, j):
        h = self.h
        return np.array([self.x0 + (i + 0.5) * h, self.y0 + (j + 0.5) * h])

    def cell_box(self, i, j):
        h = self.h
        x = self.x0 + i * h
        y = self.y0 + j * h
        return np.array([[x, y], [x + h, y], [x + h, y + h], [x, y + h]])


@dataclass(frozen=True)
class HalfPlane:
    """Kept region {a*x + b*y >= c} with (a, b) of unit length."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        norm = self.a * self.a + self.b * self.b
        if abs(norm - 1.0) > 1e-14:
            raise ConfigurationError(
                f"half-plane normal ({self.a}, {self.b}) must have unit length"
            )

    def signed_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        return pts[..., 0] * self.a + pts[..., 1] * self.b - self.c


def halfplane_from_line(slope, offset, keep_above=True):
    """Half-plane for the region above (or below) the line y = offset + slope*x."""
    norm = np.hypot(slope, 1.0)
    a, b, c = -slope / norm, 1.0 / norm, offset / norm
    if not keep_above:
        a, b, c = -a, -b, -c
    return HalfPlane(a, b, c)


@dataclass(frozen=True)
class Geometry:
    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))


def polygon_area(poly):
    """Signed shoelace area (positive for counterclockwise order)."""
    if len(poly) < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def clip_polygon(poly, halfplane, snap=0.0):
    """Clip a convex counterclockwise polygon against a half-plane.

    Sutherland-Hodgman against the kept region {a*x + b*y >= c}.  Vertices on
    the line (within ``snap``) are retained once; an empty intersection
    returns an empty array.
    """
    poly = np.asarray(poly, dtype=float)
    if len(poly) == 0:
        return poly.reshape(0, 2)
    if isinstance(halfplane, tuple):
        halfplane = HalfPlane(*halfplane)
    d = halfplane.signed_distance(poly)
    out = []
    n = len(poly)
    for k in range(n):
        v, dv = poly[k], d[k]
        w, dw = poly[(k + 1) % n], d[(k + 1) % n]
        if dv >= -snap:
            out.append(v)
            if dw < -snap and dv > snap:
                t = dv / (dv - dw)
                out.append(v + t * (w - v))
        elif dw > snap:
            t = dv / (dv - dw)
            out.append(v + t * (w - v))
    if not out:
        return np.zeros((0, 2))
    return _dedupe(np.array(out), max(snap, 0.0))


def _dedupe(poly, tol):
    """Merge consecutive vertices closer than tol (also first vs last)."""
    if len(poly) == 0:
        return poly
    keep = [poly[0]]
    for v in poly[1:]:
        if max(abs(v[0] - keep[-1][0]), abs(v[1] - keep[-1][1])) > tol:
            keep.append(v)
    while len(keep) > 1 and max(abs(keep[0][0] - keep[-1][0]), abs(keep[0][1] - keep[-1][1])) <= tol:
        keep.pop()
    return np.array(keep)


@dataclass
class Face:
    """Mesh face with the global left/right orientation convention.

    For internal faces the unit normal points from ``left_cell`` into
    ``right_cell``; for boundary faces it is outward from ``left_cell``.
    """

    id: int
    kind: str                    # "internal" | "boundary"
    p: np.ndarray
    q: np.ndarray
    normal: np.ndarray
    left_cell: int
    right_cell: int = None

    @property
    def length(self):
        return float(np.hypot(*(self.q - self.p)))

    @property
    def line_offset(self):
        """Offset d of the carrying line {x . normal = d}."""
        return float(self.normal @ self.p)

    def midpoint(self):
        return 0.5 * (self.p + self.q)


@dataclass
class CutCell:
    id: int
    ij: tuple
    polygon: np.ndarray          # counterclockwise, one vertex per face
    area: float
    volume_fraction: float
    face_ids: list = field(default_factory=list)

    @property
    def num_faces(self):
        return len(self.face_ids)


class CutCellMesh:
    """Background mesh clipped against the geometry, with face topology."""

    def __init__(self, bg, geometry, cells, faces, cell_of_ij):
        self.bg = bg
        self.geometry = geometry
        self.cells = cells
        self.faces = faces
        self._cell_of_ij = cell_of_ij
        # orientation sign per (cell, face): +1 if the cell is the left cell
        self._signs = {}
        for face in faces:
            self._signs[(face.left_cell, face.id)] = 1.0
            if face.right_cell is not None:
                self._signs[(face.right_cell, face.id)] = -1.0

    @property
    def num_cells(self):
        return len(self.cells)

    def cell_at(self, i, j):
        return self._cell_of_ij.get((i, j))

    def outward_normal(self, cell_id, face_id):
        return self._signs[(cell_id, face_id)] * self.faces[face_id].normal

    def orientation(self, cell_id, face_id):
        return self._signs[(cell_id, face_id)]

    def neighbor(self, cell_id, face_id):
        face = self.faces[face_id]
        if face.kind == "boundary":
            return None
        return face.right_cell if face.left_cell == cell_id else face.left_cell

    def cell_center(self, cell_id):
        return self.bg.cell_center(*self.cells[cell_id].ij)

    def total_area(self):
        return sum(c.area for c in self.cells)

    def dump(self):
        """Plain-text mesh dump: cell header, vertex lines, face lines."""
        lines = []
        for cell in self.cells:
            i, j = cell.ij
            lines.append(f"cell {cell.id} {i} {j} {cell.area:.17g}")
            for v in cell.polygon:
                lines.append(f"v {v[0]:.17g} {v[1]:.17g}")
            for fid in cell.face_ids:
                face = self.faces[fid]
                lines.append(
                    f"f {face.id} {face.kind} {face.normal[0]:.17g} {face.normal[1]:.17g}"
                )
        return "\n".join(lines) + "\n"


def _classify_grid_line(value, origin, h, count, tol):
    """Index k if value sits on grid line origin + k*h (0 <= k <= count), else None."""
    k = int(round((value - origin) / h))
    if 0 <= k <= count and abs(value - (origin + k * h)) <= tol:
        return k
    return None


def build_mesh(bg, geometry):
    """Clip every background cell against the geometry and extract faces.

    Cells with (numerically) zero intersection area are omitted.  Raises
    :class:`ConfigurationError` when the kept region has no area at all.
    """
    h = bg.h
    snap = SNAP_FRAC * h
    drop = DROP_FRAC * h

    cells = []
    cell_of_ij = {}
    for j in range(bg.ny):
        for i in range(bg.nx):
            poly = bg.cell_box(i, j)
            for hp in geometry.constraints:
                poly = clip_polygon(poly, hp, snap)
                if len(poly) < 3:
                    break
            if len(poly) < 3:
                continue
            poly = _dedupe(poly, drop)
            if len(poly) < 3:
                continue
            area = float(polygon_area(poly))
            if area <= AREA_FRAC * h * h:
                continue
            cid = len(cells)
            cells.append(CutCell(cid, (i, j), poly, area, area / (h * h)))
            cell_of_ij[(i, j)] = cid

    if not cells:
        raise ConfigurationError("geometry leaves no domain: kept region has zero area")

    faces = []
    pair_face = {}   # (axis, line_k, cell_lo, cell_hi) -> face id
    line_tol = 1e-11 * h

    for cell in cells:
        i, j = cell.ij
        poly = cell.polygon
        n_vert = len(poly)
        for e in range(n_vert):
            v = poly[e]
            w = poly[(e + 1) % n_vert]
            edge = w - v
            length = float(np.hypot(*edge))
            outward = np.array([edge[1], -edge[0]]) / length

            kv = kh = None
            if abs(v[0] - w[0]) <= line_tol:
                kv = _classify_grid_line(v[0], bg.x0, h, bg.nx, line_tol)
            elif abs(v[1] - w[1]) <= line_tol:
                kh = _classify_grid_line(v[1], bg.y0, h, bg.ny, line_tol)

            neighbor = None
            axis = None
            if kv is not None and 0 < kv < bg.nx:
                axis, line_k = 0, kv
                ni = i - 1 if i == kv else i + 1
                neighbor = cell_of_ij.get((ni, j))
            elif kh is not None and 0 < kh < bg.ny:
                axis, line_k = 1, kh
                nj = j - 1 if j == kh else j + 1
                neighbor = cell_of_ij.get((i, nj))

            if neighbor is None:
                # Boundary: outer box edge or a cut line (or a grid line whose
                # neighbor was clipped away entirely).
                fid = len(faces)
                faces.append(Face(fid, "boundary", v.copy(), w.copy(), outward, cell.id))
                cell.face_ids.append(fid)
                continue

            lo, hi = min(cell.id, neighbor), max(cell.id, neighbor)
            key = (axis, line_k, lo, hi)
            if key in pair_face:
                fid = pair_face[key]
                face = faces[fid]
                # Reconcile the two cells' edges: keep the overlap segment.
                t = 1 - axis   # varying coordinate: y for vertical, x for horizontal
                seg_lo = max(min(face.p[t], face.q[t]), min(v[t], w[t]))
                seg_hi = min(max(face.p[t], face.q[t]), max(v[t], w[t]))
                if seg_hi - seg_lo <= drop:
                    raise MeshValidationError(
                        f"cells {lo} and {hi} share grid line but no face overlap"
                    )
                p = face.p.copy()
                q = face.q.copy()
                p[t], q[t] = seg_lo, seg_hi
                face.p, face.q = p, q
            else:
                normal = np.array([1.0, 0.0]) if axis == 0 else np.array([0.0, 1.0])
                # Left cell sits on the negative side of the normal.
                if axis == 0:
                    left = cell.id if i == line_k - 1 else neighbor
                else:
                    left = cell.id if j == line_k - 1 else neighbor
                right = neighbor if left == cell.id else cell.id
                t = 1 - axis
                p, q = (v.copy(), w.copy()) if v[t] <= w[t] else (w.copy(), v.copy())
                fid = len(faces)
                faces.append(Face(fid, "internal", p, q, normal, left, right))
                pair_face[key] = fid
            cell.face_ids.append(fid)

    mesh = CutCellMesh(bg, geometry, cells, faces, cell_of_ij)
    for face in faces:
        if face.length <= drop:
            raise MeshValidationError(f"face {face.id} shorter than drop tolerance")
    return mesh


@dataclass(frozen=True)
class SmallCellSet:
    """Cells selected for stabilization: volume fraction below the threshold."""

    cell_ids: tuple
    threshold: float

    def __contains__(self, cell_id):
        return cell_id in set(self.cell_ids)

    def __iter__(self):
        return iter(self.cell_ids)

    def __len__(self):
        return len(self.cell_ids)


def inflow_faces(mesh, cell_id, beta):
    """Face ids of ``cell_id`` whose outward flux direction is strictly inflow."""
    beta = np.asarray(beta, dtype=float)
    tol = 1e-12 * float(np.hypot(*beta))
    result = []
    for fid in mesh.cells[cell_id].face_ids:
        n = mesh.outward_normal(cell_id, fid)
        if float(beta @ n) < -tol:
            result.append(fid)
    return result


def classify_small_cells(mesh, alpha0, beta=None):
    """Select cells with volume fraction below ``alpha0`` and validate them.

    No two selected cells may share a face.  When ``beta`` is given
    (advection), every selected cell must additionally have exactly one
    inflow face and that face must be internal.
    """
    if not 0.0 < alpha0 < 1.0:
        raise ConfigurationError(f"alpha0 must lie in (0, 1), got {alpha0}")
    small = sorted(c.id for c in mesh.cells if c.volume_fraction < alpha0)
    small_set = set(small)
    for cid in small:
        for fid in mesh.cells[cid].face_ids:
            nb = mesh.neighbor(cid, fid)
            if nb is not None and nb in small_set:
                raise MeshValidationError(
                    f"stabilized cells {min(cid, nb)} and {max(cid, nb)} share face {fid}; "
                    "adjacent small cells are not supported"
                )
    if beta is not None:
        for cid in small:
            inflow = inflow_faces(mesh, cid, beta)
            if len(inflow) != 1:
                raise MeshValidationError(
                    f"stabilized cell {cid} has {len(inflow)} inflow faces; exactly one required"
                )
            if mesh.faces[inflow[0]].kind != "internal":
                raise UnsupportedConfigurationError(
                    f"stabilized cell {cid}: inflow face {inflow[0]} lies on the "
                    "physical boundary"
                )
    return SmallCellSet(tuple(small), alpha0)


def orthogonal_projection(x, face):
    """Project a point onto the infinite line carrying the face."""
    x = np.asarray(x, dtype=float)
    n = face.normal
    d = face.line_offset
    return x - (x @ n - d)[..., None] * n if x.ndim > 1 else x - (float(x @ n) - d) * n
