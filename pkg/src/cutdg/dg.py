"""Assembly of the unstabilized semi-discrete form for both systems.

The residual array holds the bilinear form paired against every test mode,
shape (num_cells, n_modes, m).  Time stepping uses du/dt = -M^{-1} residual.

Faces between two full background cells share identical trace tables in
scaled coordinates, so they are assembled in vectorized groups; every face
touching a cut cell goes through the scalar kernel :func:`face_terms`, which
the small-cell stabilization reuses verbatim for its cancellation terms.
"""

import numpy as np

from scipy.linalg import cho_solve

from .errors import ConfigurationError
from .operators import mirror_state


class AssemblyPlan:
    """Precomputed grouping of cells and faces for one (space, system) pair."""

    def __init__(self, space, spec, diss):
        if spec.kind == "advection" and diss.kind != "upwind":
            raise ConfigurationError("advection uses the upwind dissipative flux")
        self.space = space
        self.spec = spec
        self.diss = diss
        mesh = space.mesh
        uncut = space.uncut

        self.uncut_ids = np.where(uncut)[0]
        self.cut_ids = np.where(~uncut)[0]

        group_v = []
        group_h = []
        box = {}
        loose = []
        for face in mesh.faces:
            if (
                face.kind == "internal"
                and uncut[face.left_cell]
                and uncut[face.right_cell]
            ):
                if face.normal[0] == 1.0:
                    group_v.append((face.id, face.left_cell, face.right_cell))
                else:
                    group_h.append((face.id, face.left_cell, face.right_cell))
            elif face.kind == "boundary" and uncut[face.left_cell]:
                key = (int(round(face.normal[0])), int(round(face.normal[1])))
                if abs(face.normal[0] - key[0]) < 1e-14 and abs(face.normal[1] - key[1]) < 1e-14:
                    box.setdefault(key, []).append((face.id, face.left_cell))
                else:
                    loose.append(face.id)
            else:
                loose.append(face.id)

        def _pack_internal(group):
            if not group:
                return None
            fid0 = group[0][0]
            return {
                "left": np.array([g[1] for g in group]),
                "right": np.array([g[2] for g in group]),
                "phiL": space.face_phi_left[fid0],
                "phiR": space.face_phi_right[fid0],
                "w": space.face_w[fid0],
                "normal": mesh.faces[fid0].normal,
            }

        self.group_v = _pack_internal(group_v)
        self.group_h = _pack_internal(group_h)
        self.box_groups = []
        for key in sorted(box):
            group = box[key]
            fid0 = group[0][0]
            self.box_groups.append({
                "owner": np.array([g[1] for g in group]),
                "phi": space.face_phi_left[fid0],
                "w": space.face_w[fid0],
                "normal": mesh.faces[fid0].normal,
            })
        self.loose_faces = sorted(loose)

    # ------------------------------------------------------------------
    def base_residual(self, u):
        space = self.space
        spec = self.spec
        expected = (space.mesh.num_cells, space.n_modes, spec.m)
        if u.coeffs.shape != expected:
            raise ConfigurationError(
                f"function blocks {u.coeffs.shape} do not match the space {expected}"
            )
        res = np.zeros_like(u.coeffs)
        A1T = spec.A1.T
        A2T = spec.A2.T

        # volume terms: -int f(u) . grad w
        ids = self.uncut_ids
        if len(ids):
            vals = np.einsum("qk,ckm->cqm", space._ref_phi, u.coeffs[ids])
            f1 = vals @ A1T
            f2 = vals @ A2T
            gx = space._ref_w[:, None] * space._ref_grad[:, :, 0]
            gy = space._ref_w[:, None] * space._ref_grad[:, :, 1]
            res[ids] -= np.einsum("qk,cqm->ckm", gx, f1) + np.einsum("qk,cqm->ckm", gy, f2)
        for cid in self.cut_ids:
            phi = space.cell_phi[cid]
            grad = space.cell_grad[cid]
            w = space.cell_w[cid]
            vals = phi @ u.coeffs[cid]
            f1 = vals @ A1T
            f2 = vals @ A2T
            res[cid] -= grad[:, :, 0].T @ (w[:, None] * f1) + grad[:, :, 1].T @ (w[:, None] * f2)

        # internal faces between full cells, vectorized per direction
        for group in (self.group_v, self.group_h):
            if group is None:
                continue
            n = group["normal"]
            AnT = spec.A_n(n).T
            s = self.diss.coefficient(spec, n)
            uL = np.einsum("qk,ckm->cqm", group["phiL"], u.coeffs[group["left"]])
            uR = np.einsum("qk,ckm->cqm", group["phiR"], u.coeffs[group["right"]])
            F = (0.5 * (uL + uR)) @ AnT + s * (uL - uR)
            wF = group["w"][None, :, None] * F
            res[group["left"]] += np.einsum("qk,cqm->ckm", group["phiL"], wF)
            res[group["right"]] -= np.einsum("qk,cqm->ckm", group["phiR"], wF)

        # outer-box boundary faces of full cells, vectorized per side
        for group in self.box_groups:
            n = group["normal"]
            uB = np.einsum("qk,ckm->cqm", group["phi"], u.coeffs[group["owner"]])
            if spec.kind == "advection":
                F = max(float(spec.beta @ n), 0.0) * uB
            else:
                uM = mirror_state(uB, n)
                s = self.diss.coefficient(spec, n)
                F = (0.5 * (uB + uM)) @ spec.A_n(n).T + s * (uB - uM)
            wF = group["w"][None, :, None] * F
            res[group["owner"]] += np.einsum("qk,cqm->ckm", group["phi"], wF)

        # everything touching a cut cell: scalar kernel, ascending face id
        for fid in self.loose_faces:
            for cid, block in face_terms(self, fid, u):
                res[cid] += block
        return res

    # ------------------------------------------------------------------
    def apply_mass_inverse(self, res):
        space = self.space
        out = np.empty_like(res)
        ids = self.uncut_ids
        if len(ids):
            k = res.shape[1]
            stacked = res[ids].transpose(1, 0, 2).reshape(k, -1)
            solved = cho_solve(space._ref_cho, stacked, check_finite=False)
            out[ids] = solved.reshape(k, len(ids), res.shape[2]).transpose(1, 0, 2)
        for cid in self.cut_ids:
            out[cid] = space.solve_mass(cid, res[cid])
        return out


def face_terms(plan, fid, u, central=True, dissipative=True):
    """Residual contributions of one face: list of (cell_id, block).

    This is the shared face kernel: the small-cell stabilization evaluates the
    same function (with one of the flags cleared) for its cancellation terms,
    so those terms match the base contributions bit for bit.
    """
    space = plan.space
    spec = plan.spec
    face = space.mesh.faces[fid]
    w = space.face_w[fid]
    phiL = space.face_phi_left[fid]
    uL = phiL @ u.coeffs[face.left_cell]
    n = face.normal

    if face.kind == "internal":
        phiR = space.face_phi_right[fid]
        uR = phiR @ u.coeffs[face.right_cell]
        blockL = np.zeros_like(u.coeffs[face.left_cell])
        blockR = np.zeros_like(blockL)
        if central:
            Fc = (0.5 * (uL + uR)) @ spec.A_n(n).T
            wF = w[:, None] * Fc
            blockL = blockL + phiL.T @ wF
            blockR = blockR + phiR.T @ wF
        if dissipative:
            s = plan.diss.coefficient(spec, n)
            Fs = s * (uL - uR)
            wF = w[:, None] * Fs
            blockL = blockL + phiL.T @ wF
            blockR = blockR + phiR.T @ wF
        return [(face.left_cell, blockL), (face.right_cell, -blockR)]

    if spec.kind == "advection":
        # upwind outflow flux; the zero-inflow data has no contribution
        F = max(float(spec.beta @ n), 0.0) * uL
        return [(face.left_cell, phiL.T @ (w[:, None] * F))]

    uM = mirror_state(uL, n)
    block = np.zeros_like(u.coeffs[face.left_cell])
    if central:
        Fc = (0.5 * (uL + uM)) @ spec.A_n(n).T
        block = block + phiL.T @ (w[:, None] * Fc)
    if dissipative:
        s = plan.diss.coefficient(spec, n)
        Fs = s * (uL - uM)
        block = block + phiL.T @ (w[:, None] * Fs)
    return [(face.left_cell, block)]


def assemble_base(plan, u):
    """Residual of the unstabilized form against every test mode."""
    return plan.base_residual(u)


def apply_mass_inverse(plan, res):
    return plan.apply_mass_inverse(res)


def boundary_outflow_rate(space, spec, u):
    """Advection outflow through the physical boundary, integral of (beta.n)^+ u."""
    total = 0.0
    for face in space.mesh.faces:
        if face.kind != "boundary":
            continue
        bn = max(float(spec.beta @ face.normal), 0.0)
        if bn == 0.0:
            continue
        uB = space.face_phi_left[face.id] @ u.coeffs[face.left_cell]
        total += bn * float(space.face_w[face.id] @ uB[:, 0])
    return total
