"""Experiment drivers: consistency checks, form axioms, convergence, stability.

Each driver takes a validated :class:`~cutdg.config.RunConfig` and returns a
small report object; the CLI is a thin formatter around these functions.
"""

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .dg import AssemblyPlan, boundary_outflow_rate
from .errors import ConfigurationError, IntegrationFailureError
from .geometry import SmallCellSet, build_mesh, classify_small_cells, halfplane_from_line
from .operators import CellPolyField, CombinedField
from .quadrature import DGFunction, Space, face_quadrature, monomial_values, polygon_quadrature
from .solutions import PolynomialField, lookup_field, random_polynomial
from .stabilization import (
    AdvectionStabilization,
    CellForms,
    StabilizationOperator,
    WaveStabilization,
    eta_values,
)
from .stepping import TimeControls, evolve

CONSISTENCY_TOL = 1e-10
AXIOM_TOL = 1e-12

RAMP_SLOPE = 0.75


def ramp_offset_for_min_alpha(min_alpha, h, row=1):
    """Line offset placing a corner triangle of volume fraction ``min_alpha``.

    With slope 3/4 and the offset fraction psi0 = 1/4 - sqrt(1.5 * alpha),
    every fourth column is cut into a triangle of exactly the requested
    fraction, and no stabilized cell ever shares a face with another one or
    touches the outer box.
    """
    psi0 = 0.25 - np.sqrt(2.0 * RAMP_SLOPE * min_alpha)
    if psi0 <= 0.0:
        raise ConfigurationError(f"min_alpha {min_alpha} too large for the ramp family")
    return (row + psi0) * h


def ramp_config(equation, degree, min_alpha, nx=16, **overrides):
    """Unit-box configuration with the engineered sliver ramp geometry."""
    h = 1.0 / nx
    hp = halfplane_from_line(RAMP_SLOPE, ramp_offset_for_min_alpha(min_alpha, h))
    cfg = RunConfig(
        equation=equation,
        degree=degree,
        nx=nx,
        ny=nx,
        constraints=[(hp.a, hp.b, hp.c)],
        alpha0=0.25,
        beta=(1.0, 0.2),
        sound_speed=1.0,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg.validate()


# ---------------------------------------------------------------------------


@dataclass
class RunContext:
    cfg: RunConfig
    spec: object
    diss: object
    mesh: object
    space: Space
    plan: AssemblyPlan
    small: SmallCellSet
    eta: np.ndarray
    stab: object


def build_context(cfg, nx=None, ny=None, stabilized=None):
    """Mesh, discrete space, assembly plan and stabilization for one run."""
    spec = cfg.system()
    diss = cfg.dissipation_spec()
    mesh = build_mesh(cfg.background(nx, ny), cfg.geometry())
    use_stab = cfg.dod if stabilized is None else stabilized
    if use_stab:
        beta = spec.beta if spec.kind == "advection" else None
        small = classify_small_cells(mesh, cfg.alpha0, beta=beta)
    else:
        small = SmallCellSet((), cfg.alpha0)
    space = Space(mesh, cfg.degree)
    plan = AssemblyPlan(space, spec, diss)
    eta = eta_values(mesh, small, cfg.alpha0, cfg.eta_scale)
    stab = None
    if len(small):
        if spec.kind == "advection":
            stab = AdvectionStabilization(plan, small, eta)
        else:
            stab = WaveStabilization(plan, small, eta)
    return RunContext(cfg, spec, diss, mesh, space, plan, small, eta, stab)


def project_field(space, fld, t=0.0):
    """Discrete representation of a field: exact for fitting polynomials."""
    if isinstance(fld, PolynomialField) and fld.degree <= space.degree:
        return fld.to_dg(space)
    return space.l2_project(lambda pts: fld(pts, t), fld.m)


def make_rhs(ctx, track_outflow=False):
    plan = ctx.plan
    op = None
    if ctx.stab is not None:
        op = StabilizationOperator(ctx.stab, ctx.space, ctx.spec.m)
    degree = ctx.space.degree

    def rhs(coeffs):
        u = DGFunction(coeffs, degree)
        res = plan.base_residual(u)
        if op is not None:
            op.add_residual(u, res)
        rate = 0.0
        if track_outflow:
            rate = boundary_outflow_rate(ctx.space, ctx.spec, u)
            if ctx.stab is not None and ctx.spec.kind == "advection":
                rate += ctx.stab.boundary_outflow(u)
        return plan.apply_mass_inverse(-res), rate

    return rhs


# ---------------------------------------------------------------------------
# consistency of the penalty at global polynomials
# ---------------------------------------------------------------------------


def _mode_scales(ctx):
    """Max |mode| over each stabilized cell's quadrature points, per block."""
    space = ctx.space
    basis = space.basis
    scales = {}
    for cid in ctx.stab.cell_ids:
        cell = space.mesh.cells[cid]
        pts = np.vstack([space.cell_pts[cid]] + [space.face_pts[f] for f in cell.face_ids])
        for C in ctx.stab.neighborhood(cid):
            vals = np.abs(monomial_values(basis.exps, basis.center(C), basis.h, pts))
            scales[(cid, C)] = np.maximum(vals.max(axis=0), 1e-300)
    return scales


@dataclass
class ConsistencyReport:
    equation: str
    degree: int
    seed: int
    n_fields: int
    n_stabilized: int
    min_alpha: float
    max_residual: float
    tolerance: float = CONSISTENCY_TOL

    @property
    def passed(self):
        return self.max_residual <= self.tolerance

    def lines(self):
        return [
            f"# consistency equation={self.equation} degree={self.degree} seed={self.seed}",
            f"stabilized_cells = {self.n_stabilized}",
            f"min_alpha = {self.min_alpha:.3e}",
            f"fields = {self.n_fields}",
            f"max_normalized_residual = {self.max_residual:.6e}",
            f"tolerance = {self.tolerance:.1e}",
            f"status = {'pass' if self.passed else 'FAIL'}",
        ]


def run_consistency(cfg):
    """Assemble the penalty at projections of random global polynomials.

    The penalty must annihilate them; reports the worst residual normalized
    by field size, mesh size and test-mode size.
    """
    ctx = build_context(cfg, stabilized=True)
    if ctx.stab is None:
        raise ConfigurationError("consistency run requires at least one stabilized cell")
    rng = np.random.default_rng(cfg.seed)
    scales = _mode_scales(ctx)
    h = ctx.space.basis.h
    all_pts = np.vstack(
        [ctx.space.cell_pts[cid] for cid in range(ctx.mesh.num_cells)]
    )
    worst = 0.0
    pressure_only = ctx.spec.kind == "acoustics"
    for _ in range(cfg.n_polynomials):
        fld = random_polynomial(rng, cfg.degree, ctx.spec.m, pressure_only=pressure_only)
        u = fld.to_dg(ctx.space)
        umax = max(fld.max_abs(all_pts), 1e-300)
        for cid in ctx.stab.cell_ids:
            for C, block in ctx.stab.cell_residual(cid, u).items():
                normalized = np.abs(block) / (umax * h * scales[(cid, C)][:, None])
                worst = max(worst, float(normalized.max()))
    min_alpha = min(ctx.mesh.cells[c].volume_fraction for c in ctx.stab.cell_ids)
    return ConsistencyReport(
        cfg.equation, cfg.degree, cfg.seed, cfg.n_polynomials,
        len(ctx.stab.cell_ids), min_alpha, worst,
    )


# ---------------------------------------------------------------------------
# propagation-form axioms
# ---------------------------------------------------------------------------

AXIOM_NAMES = ("symmetry", "linearity", "balance", "face_consistency", "volume_consistency")


@dataclass
class AxiomReport:
    seed: int
    n_cells: int
    n_triples: int
    worst: dict
    tolerance: float = AXIOM_TOL

    @property
    def passed(self):
        return all(v <= self.tolerance for v in self.worst.values())

    def lines(self):
        out = [f"# form-axioms seed={self.seed} cells={self.n_cells} triples={self.n_triples}"]
        for name in AXIOM_NAMES:
            out.append(f"{name} = {self.worst[name]:.6e}")
        out.append(f"tolerance = {self.tolerance:.1e}")
        out.append(f"status = {'pass' if self.passed else 'FAIL'}")
        return out


def _random_cell_field(rng, space, cell_id, m):
    coeffs = rng.uniform(-1.0, 1.0, size=(space.n_modes, m))
    return CellPolyField(coeffs, space.basis.center(cell_id), space.basis.h, space.basis.exps)


def check_axioms_on_cell(space, spec, cell_id, rng, n_triples):
    """Worst relative residual of each form identity on one cell."""
    forms = CellForms(space, spec, cell_id)
    K = forms.K
    cell = space.mesh.cells[cell_id]
    probe_pts = np.vstack([space.cell_pts[cell_id]] + [space.face_pts[f] for f in cell.face_ids])
    h = space.basis.h
    worst = {name: 0.0 for name in AXIOM_NAMES}
    m = spec.m
    for _ in range(n_triples):
        U = _random_cell_field(rng, space, cell_id, m)
        V = _random_cell_field(rng, space, cell_id, m)
        W = _random_cell_field(rng, space, cell_id, m)
        W2 = _random_cell_field(rng, space, cell_id, m)
        denom = (
            spec.lambda_max * h
            * max(float(np.max(np.abs(U.values(probe_pts)))),
                  float(np.max(np.abs(V.values(probe_pts)))), 1e-300)
            * max(float(np.max(np.abs(W.values(probe_pts)))), 1e-300)
        )

        i, j = rng.choice(K, size=2, replace=False)
        p_uv = forms.surface(i, j, U, V, W)
        p_vu = forms.surface(i, j, V, U, W)
        worst["symmetry"] = max(worst["symmetry"], abs(p_uv - p_vu) / denom)

        a, b = rng.uniform(-1.0, 1.0, size=2)
        combo = CombinedField([(a, W), (b, W2)])
        lin = forms.surface(i, j, U, V, combo) - a * forms.surface(i, j, U, V, W) - b * forms.surface(i, j, U, V, W2)
        worst["linearity"] = max(worst["linearity"], abs(lin) / denom)

        p_v, p_vs = forms.volume(U, V, W)
        for ii in range(K):
            for jj in range(ii + 1, K):
                bal = forms.surface(ii, jj, U, V, W) + forms.surface(jj, ii, U, V, W) - p_v - p_vs
                worst["balance"] = max(worst["balance"], abs(bal) / denom)

        # face sum against an independent, finer quadrature of the flux
        for jj in range(K):
            total = sum(forms.surface(ii, jj, U, V, W) for ii in range(K) if ii != jj)
            fid = cell.face_ids[jj]
            face = space.mesh.faces[fid]
            pts, w = face_quadrature(face.p, face.q, space.face_npts + 3)
            n_out = space.mesh.outward_normal(cell_id, fid)
            flux = 0.5 * (U.values(pts) + V.values(pts)) @ spec.A_n(n_out).T
            rhs = float(np.einsum("q,qm->", w, flux * W.values(pts)))
            worst["face_consistency"] = max(worst["face_consistency"], abs(total - rhs) / denom)

        # volume identity at equal arguments against a finer cell rule
        p_v_uu, _ = forms.volume(U, U, W)
        pts, w = polygon_quadrature(cell.polygon, 2 * space.degree + 4)
        gw = W.gradients(pts)
        uv = U.values(pts)
        rhs = forms.kappa * float(
            np.einsum("q,qm->", w, (uv @ spec.A1.T) * gw[:, :, 0])
            + np.einsum("q,qm->", w, (uv @ spec.A2.T) * gw[:, :, 1])
        )
        worst["volume_consistency"] = max(worst["volume_consistency"], abs(p_v_uu - rhs) / denom)
    return worst


def run_axioms(cfg):
    ctx = build_context(cfg, stabilized=True)
    if len(ctx.small) == 0:
        raise ConfigurationError("axiom run requires at least one stabilized cell")
    rng = np.random.default_rng(cfg.seed)
    worst = {name: 0.0 for name in AXIOM_NAMES}
    for cid in ctx.small:
        cell_worst = check_axioms_on_cell(ctx.space, ctx.spec, cid, rng, cfg.n_triples)
        for name in AXIOM_NAMES:
            worst[name] = max(worst[name], cell_worst[name])
    return AxiomReport(cfg.seed, len(ctx.small), cfg.n_triples, worst)


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    run_id: str
    nx: int
    h: float
    dofs: int
    l2_error: float
    observed_order: float = None
    diverged: bool = False


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    seed: int = 0

    def csv(self):
        lines = ["run_id,nx,h,dofs,l2_error,observed_order"]
        for r in self.rows:
            err = "diverged" if r.diverged else f"{r.l2_error:.17g}"
            order = "" if r.observed_order is None else f"{r.observed_order:.17g}"
            lines.append(f"{r.run_id},{r.nx},{r.h:.17g},{r.dofs},{err},{order}")
        return "\n".join(lines) + "\n"

    def final_order(self):
        orders = [r.observed_order for r in self.rows if r.observed_order is not None]
        return orders[-1] if orders else None

    @property
    def diverged(self):
        return any(r.diverged for r in self.rows)


def run_convergence(cfg):
    """Refinement study of the advected field named in the configuration."""
    if cfg.equation != "advection":
        raise ConfigurationError("the convergence driver runs the advection system")
    rows = []
    prev = None
    for n in cfg.refinements:
        ny = n * cfg.ny // cfg.nx
        ctx = build_context(cfg, nx=n, ny=ny)
        fld = lookup_field(cfg.initial or "windowed-sine-advect", ctx.spec)
        u0 = project_field(ctx.space, fld, t=0.0)
        h = ctx.mesh.bg.h
        row_id = f"{cfg.equation}-r{cfg.degree}-nx{n}"
        diverged = False
        if cfg.projection_only:
            u = u0
            t_end = 0.0
        else:
            controls = TimeControls(cfg.t_final, cfg.cfl, cfg.rk_order)
            try:
                result = evolve(ctx.space, u0, make_rhs(ctx), controls, ctx.spec.lambda_max)
                u = result.final
                t_end = result.steps * result.dt
            except IntegrationFailureError:
                diverged = True
        if diverged:
            rows.append(ConvergenceRow(row_id, n, h, ctx.space.dofs(ctx.spec.m),
                                       np.nan, None, diverged=True))
            prev = None
            continue
        err = ctx.space.l2_error(u, lambda pts: fld(pts, t_end))
        order = None
        if prev is not None and err > 0 and prev[1] > 0:
            order = float(np.log(prev[1] / err) / np.log(prev[0] / h))
        rows.append(ConvergenceRow(row_id, n, h, ctx.space.dofs(ctx.spec.m), err, order))
        prev = (h, err)
    return ConvergenceReport(rows, cfg.seed)


# ---------------------------------------------------------------------------
# small-cell stability experiment
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    seed: int
    steps: int
    dt: float
    growth: float
    unstable: bool
    failed_at: int = None
    contrast_growth: float = None
    contrast_unstable: bool = False
    tolerance: float = 1e-3

    @property
    def passed(self):
        return (not self.unstable) and self.growth <= 1.0 + self.tolerance

    def lines(self):
        out = [
            f"# stability seed={self.seed} steps={self.steps} dt={self.dt:.6e}",
            f"growth = {'unstable' if self.unstable else f'{self.growth:.12f}'}",
        ]
        if self.failed_at is not None:
            out.append(f"failed_at_step = {self.failed_at}")
        if self.contrast_growth is not None or self.contrast_unstable:
            val = "unstable" if self.contrast_unstable else f"{self.contrast_growth:.6e}"
            out.append(f"growth_without_stabilization = {val}")
        out.append(f"status = {'pass' if self.passed else 'FAIL'}")
        return out


def _stability_single(cfg, stabilized):
    ctx = build_context(cfg, stabilized=stabilized)
    fld = lookup_field(cfg.initial or "poly:0.4,1,-0.7,0.5,-1,0.25;0;0", ctx.spec)
    u0 = project_field(ctx.space, fld)
    dt = TimeControls(1.0, cfg.cfl, cfg.rk_order).dt(
        ctx.mesh.bg.h, ctx.spec.lambda_max, cfg.degree
    )
    controls = TimeControls(cfg.steps * dt, cfg.cfl, cfg.rk_order)
    try:
        result = evolve(ctx.space, u0, make_rhs(ctx), controls, ctx.spec.lambda_max)
        return result.max_growth, False, None, dt
    except IntegrationFailureError as exc:
        return np.inf, True, exc.step, dt


def run_stability(cfg, contrast=False):
    """Long acoustic run on the sliver mesh with the background time step."""
    if cfg.equation != "acoustics":
        raise ConfigurationError("the stability driver runs the acoustics system")
    growth, unstable, failed_at, dt = _stability_single(cfg, stabilized=cfg.dod)
    report = StabilityReport(
        cfg.seed, cfg.steps, dt, growth, unstable, failed_at, tolerance=cfg.growth_tol
    )
    if contrast:
        c_growth, c_unstable, _, _ = _stability_single(cfg, stabilized=False)
        report.contrast_growth = None if c_unstable else c_growth
        report.contrast_unstable = c_unstable
    return report


# ---------------------------------------------------------------------------
# plain evolution
# ---------------------------------------------------------------------------


@dataclass
class EvolveReport:
    seed: int
    steps: int
    dt: float
    final_l2: float
    mass_change: float
    outflow_integral: float
    times: np.ndarray
    l2_trace: np.ndarray
    mass_trace: np.ndarray

    def trace_csv(self):
        lines = ["step,t,l2,mass"]
        for k, (t, l2, mass) in enumerate(zip(self.times, self.l2_trace, self.mass_trace)):
            lines.append(f"{k},{t:.17g},{l2:.17g},{mass:.17g}")
        return "\n".join(lines) + "\n"

    def lines(self):
        return [
            f"# evolve seed={self.seed} steps={self.steps} dt={self.dt:.6e}",
            f"final_l2 = {self.final_l2:.17g}",
            f"mass_change = {self.mass_change:.17g}",
            f"outflow_integral = {self.outflow_integral:.17g}",
        ]


def run_evolve(cfg):
    ctx = build_context(cfg)
    default = "bump-advect" if cfg.equation == "advection" else "poly:1;0;0"
    fld = lookup_field(cfg.initial or default, ctx.spec)
    u0 = project_field(ctx.space, fld)
    track = cfg.equation == "advection"
    controls = TimeControls(cfg.t_final, cfg.cfl, cfg.rk_order)
    result = evolve(
        ctx.space, u0, make_rhs(ctx, track_outflow=track), controls,
        ctx.spec.lambda_max, track_mass=track,
    )
    return EvolveReport(
        cfg.seed, result.steps, result.dt,
        result.l2_trace[-1],
        result.mass_trace[-1] - result.mass_trace[0],
        result.outflow_integral,
        result.times, result.l2_trace, result.mass_trace,
    )


# ---------------------------------------------------------------------------


def mesh_info(cfg):
    ctx = build_context(cfg)
    alphas = [c.volume_fraction for c in ctx.mesh.cells]
    lines = [
        f"cells = {ctx.mesh.num_cells}",
        f"min_alpha = {min(alphas):.17g}",
        f"max_alpha = {max(alphas):.17g}",
        f"stabilized = {len(ctx.small)}",
    ]
    return "\n".join(lines) + "\n", ctx.mesh.dump()
