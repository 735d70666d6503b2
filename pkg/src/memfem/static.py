"""Equilibrium solvers and continuation through the pull-in fold.

Three routes to a static solution of the coupled system:

* :func:`newton_solve` — monolithic Newton at fixed voltage, the workhorse.
  Quadratic convergence near the solution because the tangent carries the
  full electro-mechanical coupling.
* :func:`riks_trace` — arc-length continuation in the extended unknowns
  (z, V) with Crisfield's spherical constraint. The voltage becomes part of
  the solution, which is what lets the path pass through the fold where the
  voltage-displacement curve turns back and fixed-voltage iteration loses
  its footing. The fold is the pull-in point: its voltage is the largest
  the structure can hold statically.
* :func:`staggered_solve` — the classical alternation (field solve on the
  current geometry, then a mechanical solve under frozen electrostatic
  loads). Kept as a cross-check and as a demonstration: its fixed-point
  iteration contracts ever more slowly as the fold approaches and finally
  diverges, while the monolithic tangent keeps Newton quadratic.

Displacement and potential live on incommensurate scales (metres around
1e-7, volts around 1e2), so all arc-length geometry runs in a diagonally
scaled metric: displacement slots are measured in units of a third of the
gap, potential slots and the voltage in units of a pull-in scale estimated
from a small probe solve. Fold detection is a sign change of dV/ds along
the branch, refined by quadratic interpolation; a singular-tangent stall is
accepted as corroborating evidence only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from memfem.assembly import (DIRICHLET, Inertia, Problem, SystemState,
                             factorize, linear_solve, matrix_inertia)
from memfem.errors import (ConfigError, ElementInversionError,
                           NonconvergenceError, SingularSystemError)
from memfem.mesh import ELECTRIC, MECHANICAL

logger = logging.getLogger(__name__)

FOLD_SIGN_CHANGE = "FOLD_SIGN_CHANGE"
SINGULAR_TANGENT = "SINGULAR_TANGENT"
NO_FOLD = "NO_FOLD"


@dataclass(frozen=True)
class SolverSettings:
    """Shared knobs for the static solvers.

    Attributes:
        tol_residual: relative residual drop declaring Newton converged.
        max_iter: Newton iterations per solve or continuation corrector.
        dv_initial: first voltage step of the continuation; None derives
            one from a probe solve (estimated pull-in scale / 20).
        target_iterations: corrector iteration count the radius adaptation
            steers towards.
        ds_min_factor / ds_max_factor: radius bounds relative to the
            initial radius.
        max_steps: hard cap on continuation points.
        post_fold_points: points traced beyond the detected fold.
        travel_fraction: stop once the probe node has crossed this share
            of the gap.
        probe: probe node choice: "auto" (bottom centre of the structure),
            a node-set name (its node nearest mid-span), or a node id.
        compute_stability: record the stability index at every accepted
            continuation point (one dense factorization each).
    """

    tol_residual: float = 1e-8
    max_iter: int = 25
    dv_initial: float | None = None
    target_iterations: int = 5
    ds_min_factor: float = 1e-4
    ds_max_factor: float = 8.0
    max_steps: int = 250
    post_fold_points: int = 12
    travel_fraction: float = 0.8
    probe: int | str = "auto"
    compute_stability: bool = True

    def __post_init__(self):
        if self.tol_residual <= 0.0:
            raise ConfigError("tol_residual must be positive")
        if self.max_iter < 1 or self.max_steps < 2:
            raise ConfigError("iteration limits must be positive")
        if self.dv_initial is not None and self.dv_initial <= 0.0:
            raise ConfigError("dv_initial must be positive")
        if not 0.0 < self.travel_fraction <= 1.0:
            raise ConfigError("travel_fraction must lie in (0, 1]")


@dataclass
class StaticResult:
    """Outcome of one fixed-voltage Newton solve."""

    z: np.ndarray
    voltage: float
    state: SystemState
    converged: bool
    iterations: int
    residual_norms: list[float]
    message: str = ""


@dataclass(frozen=True)
class ContinuationPoint:
    """One accepted point of the arc-length branch."""

    s: float
    voltage: float
    d_probe: float
    residual_norm: float
    schur_negatives: int
    z: np.ndarray = field(repr=False)


@dataclass
class PullInResult:
    """Branch and fold data produced by :func:`riks_trace`.

    ``v_pi``/``d_pi`` are NaN when ``detection == NO_FOLD`` (the trace
    stopped before the voltage turned back); the partial branch and the
    diagnostic then describe how far it got. ``d_pi`` is reported as the
    magnitude of the probe displacement at the fold.
    """

    v_pi: float
    d_pi: float
    detection: str
    branch: list[ContinuationPoint]
    diagnostic: str = ""

    @property
    def found_fold(self) -> bool:
        return self.detection in (FOLD_SIGN_CHANGE, SINGULAR_TANGENT)


@dataclass
class StaggeredResult:
    """Outcome of the alternating reference solver."""

    z: np.ndarray
    voltage: float
    converged: bool
    outer_iterations: int
    increments: list[float]
    message: str = ""


@dataclass(frozen=True)
class StabilityReport:
    """Inertia-based classification of an equilibrium point."""

    schur_negatives: int
    at_fold: bool
    inertia: Inertia

    @property
    def stable(self) -> bool:
        return self.schur_negatives == 0 and not self.at_fold


# -- probe and scales --------------------------------------------------------


def pick_probe(problem: Problem, probe: int | str = "auto") -> tuple[int, int]:
    """Resolve the probe selector to (node id, full displacement slot).

    The automatic choice is the structural node nearest the bottom centre
    of the mechanical regions: the midpoint of the span, on the face that
    moves towards the electrode.
    """
    mesh = problem.mesh
    if isinstance(probe, (int, np.integer)):
        node = int(probe)
        if not 0 <= node < len(mesh.nodes):
            raise ConfigError(f"probe node {node} out of range")
    else:
        if probe == "auto":
            within = mesh.nodes_in_physics(MECHANICAL)
        else:
            try:
                within = mesh.node_sets[probe]
            except KeyError:
                raise ConfigError(f"unknown probe node set {probe!r}") from None
        xs = mesh.nodes[within, 0]
        x_mid = 0.5 * (float(xs.min()) + float(xs.max()))
        y_low = float(mesh.nodes[within, 1].min())
        node = mesh.find_node(x_mid, y_low, within=within)
    slot = int(problem.dof.slot_of_u[node, 1])
    if slot < 0 or problem.dof.kind[slot] == DIRICHLET:
        raise ConfigError(f"probe node {node} has no active vertical dof")
    return node, slot


def gap_height(problem: Problem) -> float:
    """Vertical extent of the electric regions: the rest gap."""
    ids = problem.mesh.nodes_in_physics(ELECTRIC)
    if len(ids) == 0:
        raise ConfigError("problem has no electric region")
    ys = problem.mesh.nodes[ids, 1]
    return float(ys.max() - ys.min())


@dataclass(frozen=True)
class _Scales:
    """Arc-length metric: weights for z slots and the voltage."""

    u_scale: float
    v_scale: float
    wz: np.ndarray
    probe_slot: int

    def norm(self, dz: np.ndarray, dv: float) -> float:
        return math.sqrt(float(np.dot(self.wz * dz, self.wz * dz))
                         + (dv / self.v_scale) ** 2)


def _build_scales(problem: Problem, settings: SolverSettings) -> _Scales:
    _, pslot = pick_probe(problem, settings.probe)
    u_scale = gap_height(problem) / 3.0

    # Probe solve: a voltage small enough to stay in the linear regime sets
    # the pull-in scale. Deflection grows like V^2 there, so the voltage
    # that would move the probe through a third of the gap is
    # v_t * sqrt(u_scale / d_t). Start at 1 V and back off whenever the
    # probe does not converge (already past pull-in) or deflects too far.
    probe_settings = SolverSettings(tol_residual=1e-10,
                                    compute_stability=False)
    v_t = 1.0
    d_t = 0.0
    for _ in range(60):
        res = newton_solve(problem, v_t, settings=probe_settings)
        if not res.converged:
            v_t *= 0.25
            continue
        d_t = abs(float(problem.full_state(res.z, v_t)[pslot]))
        if d_t > 0.1 * u_scale:
            v_t *= 0.25
        elif d_t < 1e-9 * u_scale:
            v_t *= 4.0
        else:
            break
    else:
        raise NonconvergenceError(
            "could not find a probe voltage with a clean linear response")
    if d_t <= 0.0:
        raise ConfigError("probe node does not respond to voltage; "
                          "check electrode and ground sets")
    v_scale = v_t * math.sqrt(u_scale / d_t)
    wz = np.where(problem.dof.z_is_u, 1.0 / u_scale, 1.0 / v_scale)
    return _Scales(u_scale, v_scale, wz, pslot)


# -- fixed-voltage Newton ----------------------------------------------------


def newton_solve(problem: Problem, voltage: float,
                 z0: np.ndarray | None = None,
                 settings: SolverSettings | None = None) -> StaticResult:
    """Monolithic Newton iteration at fixed voltage.

    Cold starts (``z0`` omitted) first solve the linear potential problem on
    the rest geometry: electrostatic forces are quadratic in the potential,
    so a Newton direction taken before the interior field is consistent
    points into the wall (the raw boundary data concentrates the field at
    the electrode edge and the force extrapolated from it is garbage).

    Convergence requires the residual to drop by ``tol_residual`` relative
    to its entry value (an already-balanced entry state returns at once).
    Step lengths are chosen by the natural monotonicity test: a candidate
    is accepted when the simplified Newton step it induces (current
    factorization, candidate residual) contracts. The raw force norm
    cannot judge steps here, because stiff membrane rows spike transiently
    on steps that are nearly exact in solution units. A singular tangent
    (the fold) is reported, not raised.
    """
    settings = settings or SolverSettings()
    z = np.zeros(problem.dof.n_z) if z0 is None else np.asarray(z0, float).copy()
    state = problem.assemble(z, voltage)
    if z0 is None and problem.dof.n_free_phi > 0:
        ip = np.flatnonzero(problem.dof.z_is_phi)
        rp = state.residual[ip]
        if float(np.linalg.norm(rp)) > 0.0:
            z[ip] -= linear_solve(state.tangent[np.ix_(ip, ip)].tocsr(), rp)
            state = problem.assemble(z, voltage)
    norms = [float(np.linalg.norm(state.residual))]
    if norms[0] == 0.0:
        return StaticResult(z, voltage, state, True, 0, norms)

    for it in range(1, settings.max_iter + 1):
        try:
            solve = factorize(state.tangent)
        except SingularSystemError as exc:
            return StaticResult(z, voltage, state, False, it, norms,
                                f"singular tangent: {exc}")
        dz = solve(state.residual)
        dz_norm = float(np.linalg.norm(dz))
        # Stationarity escape: a Newton increment at roundoff relative to
        # the iterate means the float64 solution is reached even when the
        # relative residual target sits below the assembly noise floor.
        # The floor is absolute (set by the stiffness scale), so at small
        # loads it can exceed tol_residual times the entry residual.
        if dz_norm <= 1e-13 * max(float(np.linalg.norm(z)), 1.0):
            return StaticResult(z, voltage, state, True, it, norms,
                                "converged to roundoff floor")

        step, trial_state, trial_z = 1.0, None, None
        for _ in range(6):
            try:
                cand = z - step * dz
                cand_state = problem.assemble(cand, voltage)
            except ElementInversionError:
                step *= 0.5
                continue
            if step <= 1.0 / 32.0:
                trial_z, trial_state = cand, cand_state
                break
            try:
                induced = float(np.linalg.norm(solve(cand_state.residual)))
            except SingularSystemError:
                step *= 0.5
                continue
            if induced <= (1.0 - 0.5 * step) * dz_norm:
                trial_z, trial_state = cand, cand_state
                break
            step *= 0.5
        if trial_z is None:
            return StaticResult(z, voltage, state, False, it, norms,
                                "element inversion at every step length")

        z, state = trial_z, trial_state
        norms.append(float(np.linalg.norm(state.residual)))
        if norms[-1] <= settings.tol_residual * norms[0]:
            logger.debug("newton converged at V=%g in %d iterations; "
                         "last ratios %s", voltage, it,
                         [f"{b / max(a, 1e-300):.2e}"
                          for a, b in zip(norms[-3:], norms[-2:])])
            return StaticResult(z, voltage, state, True, it, norms)

    return StaticResult(z, voltage, state, False, settings.max_iter, norms,
                        f"no convergence in {settings.max_iter} iterations; "
                        f"residual {norms[-1]:.3e} of {norms[0]:.3e}")


# -- arc-length continuation -------------------------------------------------


def _corrector(problem, scales, settings, z_prev, v_prev, dir_z, dir_v, ds,
               r_scale):
    """One Crisfield corrector from the secant predictor.

    Returns (z, V, iterations, residual_norm, r_first) or raises
    NonconvergenceError (the driver halves the radius and retries).
    Convergence is a residual drop against the branch-level force scale
    ``r_scale`` or a stationary iterate (update below 1e-10 of the radius:
    stiff problems floor out in absolute residual well above any fixed
    relative drop from a nearby predictor).
    """
    wz, wv = scales.wz, 1.0 / scales.v_scale
    z = z_prev + ds * dir_z
    v = v_prev + ds * dir_v
    r_first = None
    last_step = math.inf

    for it in range(1, settings.max_iter + 1):
        state = problem.assemble(z, v)
        rn = float(np.linalg.norm(state.residual))
        if r_first is None:
            r_first = rn
        if rn <= settings.tol_residual * r_scale \
                or last_step <= 1e-10 * ds:
            return z, v, it, rn, r_first
        a = linear_solve(state.tangent, state.residual)
        b = linear_solve(state.tangent, state.dr_dv)

        # delta_z = -a - b*dv; choose dv so the new increment stays on the
        # sphere |D (x - x_prev)|^2 = ds^2.
        e = (z - z_prev) - a
        de = wz * e
        db = wz * b
        dv_now = v - v_prev
        qa = float(np.dot(db, db)) + wv * wv
        qb = 2.0 * (wv * wv * dv_now - float(np.dot(de, db)))
        qc = float(np.dot(de, de)) + (wv * dv_now) ** 2 - ds * ds
        disc = qb * qb - 4.0 * qa * qc
        if disc >= 0.0:
            root = math.sqrt(disc)
            cands = [(-qb - root) / (2.0 * qa), (-qb + root) / (2.0 * qa)]
            # keep the root whose new increment points along the predictor
            best, best_cos = None, -math.inf
            for dv in cands:
                nz = e - b * dv
                nv = dv_now + dv
                cos = (float(np.dot(wz * nz, wz * dir_z))
                       + wv * wv * nv * dir_v)
                if cos > best_cos:
                    best, best_cos = dv, cos
            dv = best
        else:
            # sphere unreachable from here: fall back to the normal plane
            # through the predictor direction.
            dd = wz * dir_z
            denom = wv * wv * dir_v - float(np.dot(dd, db))
            if denom == 0.0:
                raise NonconvergenceError("degenerate arc-length constraint")
            dv = float(np.dot(dd, wz * a)) / denom
        z = z - a - b * dv
        v = v + dv
        upd = wz * (a + b * dv)
        last_step = math.sqrt(float(np.dot(upd, upd)) + (wv * dv) ** 2)

    raise NonconvergenceError(
        f"corrector stalled at {settings.max_iter} iterations (ds={ds:.3e})")


def riks_trace(problem: Problem,
               settings: SolverSettings | None = None) -> PullInResult:
    """Trace the voltage-displacement branch through the pull-in fold.

    Starts from the voltage-free equilibrium, takes one plain voltage step
    (the extended tangent is degenerate at V = 0 because the loading is
    quadratic in V), then continues with secant predictors and spherical
    correctors. The fold is flagged at the first sign change of the voltage
    increment and refined by fitting quadratics in arc length through the
    three surrounding points.
    """
    settings = settings or SolverSettings()
    scales = _build_scales(problem, settings)
    gap = 3.0 * scales.u_scale
    travel_limit = settings.travel_fraction * gap

    def probe_of(z, v):
        return float(problem.full_state(z, v)[scales.probe_slot])

    def stability_of(state):
        if not settings.compute_stability:
            return -1
        return matrix_inertia(state.tangent).schur_negatives(
            problem.dof.n_free_phi)

    # point 0: rest
    z0 = np.zeros(problem.dof.n_z)
    st0 = problem.assemble(z0, 0.0)
    branch = [ContinuationPoint(0.0, 0.0, probe_of(z0, 0.0),
                                float(np.linalg.norm(st0.residual)),
                                stability_of(st0), z0)]

    # point 1: plain Newton at the initial voltage step
    dv0 = settings.dv_initial if settings.dv_initial is not None \
        else scales.v_scale / 20.0
    res1 = newton_solve(problem, dv0, settings=settings)
    if not res1.converged:
        raise NonconvergenceError(
            f"continuation could not take the first step to V={dv0:g}",
            report=res1)
    branch.append(ContinuationPoint(
        scales.norm(res1.z - z0, dv0), dv0, probe_of(res1.z, dv0),
        res1.residual_norms[-1], stability_of(res1.state), res1.z))

    ds = branch[1].s
    ds_min = settings.ds_min_factor * ds
    ds_max = settings.ds_max_factor * ds
    r_scale = res1.residual_norms[0]
    fold_index = None
    ds_post_cap = math.inf
    diagnostic = ""
    detection = NO_FOLD
    singular_stall = False

    while len(branch) < settings.max_steps:
        prev, last = branch[-2], branch[-1]
        span = scales.norm(last.z - prev.z, last.voltage - prev.voltage)
        dir_z = (last.z - prev.z) / span
        dir_v = (last.voltage - prev.voltage) / span

        accepted = None
        while True:
            try:
                z, v, its, rn, r_first = _corrector(problem, scales,
                                                    settings,
                                                    last.z, last.voltage,
                                                    dir_z, dir_v, ds,
                                                    r_scale)
                r_scale = max(r_scale, r_first)
                accepted = (z, v, its, rn)
                break
            except (NonconvergenceError, ElementInversionError,
                    SingularSystemError) as exc:
                singular_stall = isinstance(exc, SingularSystemError)
                ds *= 0.5
                if ds < ds_min:
                    diagnostic = (f"radius collapsed below {ds_min:.3e} "
                                  f"after {len(branch)} points: {exc}")
                    break
        if accepted is None:
            break

        z, v, its, rn = accepted
        state = problem.assemble(z, v)
        point = ContinuationPoint(last.s + ds, v, probe_of(z, v), rn,
                                  stability_of(state), z)
        branch.append(point)
        ds = float(np.clip(ds * math.sqrt(settings.target_iterations
                                          / max(its, 1)),
                           ds_min, min(ds_max, 2.0 * ds, ds_post_cap)))

        if fold_index is None and len(branch) >= 3 \
                and (branch[-1].voltage - branch[-2].voltage) \
                * (branch[-2].voltage - branch[-3].voltage) < 0.0:
            fold_index = len(branch) - 2
            detection = FOLD_SIGN_CHANGE
            # resolve the remaining travel with the requested post-fold
            # points instead of galloping into the travel limit
            s_rem = (travel_limit - abs(point.d_probe)) / scales.u_scale
            ds_post_cap = max(s_rem / (settings.post_fold_points + 2),
                              2.0 * ds_min)
            ds = min(ds, ds_post_cap)
        if fold_index is not None \
                and len(branch) - 1 - fold_index >= settings.post_fold_points:
            break
        if abs(point.d_probe) >= travel_limit:
            if fold_index is None:
                diagnostic = ("probe crossed the travel limit before any "
                              "fold; raise travel_fraction or check setup")
            break

    if fold_index is not None:
        s3 = np.array([p.s for p in branch[fold_index - 1:fold_index + 2]])
        v3 = np.array([p.voltage
                       for p in branch[fold_index - 1:fold_index + 2]])
        d3 = np.array([p.d_probe
                       for p in branch[fold_index - 1:fold_index + 2]])
        cv = np.polyfit(s3 - s3[0], v3, 2)
        if cv[0] == 0.0:
            s_star = s3[1] - s3[0]
        else:
            s_star = float(np.clip(-cv[1] / (2.0 * cv[0]),
                                   0.0, s3[2] - s3[0]))
        v_pi = float(np.polyval(cv, s_star))
        d_pi = abs(float(np.polyval(np.polyfit(s3 - s3[0], d3, 2), s_star)))
        return PullInResult(v_pi, d_pi, detection, branch, diagnostic)

    if singular_stall and len(branch) >= 2:
        # the tangent went singular and the radius collapsed right there:
        # corroborating fold evidence, voltage bounded by the last point.
        return PullInResult(branch[-1].voltage, abs(branch[-1].d_probe),
                            SINGULAR_TANGENT, branch,
                            diagnostic or "stalled on a singular tangent")

    return PullInResult(math.nan, math.nan, NO_FOLD, branch,
                        diagnostic or "no fold within the step budget")


# -- staggered reference solver ----------------------------------------------


def staggered_solve(problem: Problem, voltage: float,
                    z0: np.ndarray | None = None,
                    settings: SolverSettings | None = None,
                    max_outer: int = 100) -> StaggeredResult:
    """Alternating field/structure iteration at fixed voltage.

    Each outer pass solves the electric problem exactly on the current
    geometry (it is linear in the potentials), freezes the resulting
    electrostatic nodal forces as dead loads, and re-equilibrates the
    structure alone under them. The displacement increment per pass is the
    convergence monitor; its growth is the divergence signal that appears
    as the voltage nears pull-in, where this map stops contracting.
    """
    settings = settings or SolverSettings()
    dof = problem.dof
    idx_u = np.flatnonzero(dof.z_is_u)
    idx_p = np.flatnonzero(dof.z_is_phi)
    z = np.zeros(dof.n_z) if z0 is None else np.asarray(z0, float).copy()
    gap = gap_height(problem)
    tol_u = 1e-9 * gap
    increments: list[float] = []

    for outer in range(1, max_outer + 1):
        try:
            # exact electric solve at frozen geometry
            st = problem.assemble(z, voltage, parts=("elec",),
                                  keep_elec_force=False)
            kpp = st.tangent[np.ix_(idx_p, idx_p)]
            z[idx_p] -= linear_solve(kpp, st.residual[idx_p])

            # electrostatic loads at the solved field, frozen
            st = problem.assemble(z, voltage, parts=("elec",),
                                  want_tangent=False, keep_elec_force=True)
            f_dead = (problem.dof.P.T @ st.elec_force_full)[idx_u]

            # structure alone under the dead loads
            u_before = z[idx_u].copy()
            for _ in range(settings.max_iter):
                stm = problem.assemble(z, voltage, parts=("mech",))
                r_u = stm.residual[idx_u] - f_dead
                kuu = stm.tangent[np.ix_(idx_u, idx_u)]
                du = linear_solve(kuu, r_u)
                z[idx_u] -= du
                if float(np.linalg.norm(du)) <= 1e-3 * tol_u:
                    break
        except (ElementInversionError, SingularSystemError) as exc:
            return StaggeredResult(z, voltage, False, outer, increments,
                                   f"diverged: {exc} (expected near pull-in)")

        inc = float(np.max(np.abs(z[idx_u] - u_before)))
        increments.append(inc)
        if inc <= tol_u:
            return StaggeredResult(z, voltage, True, outer, increments)
        if outer >= 3 and increments[-1] > increments[-2] > increments[-3]:
            return StaggeredResult(
                z, voltage, False, outer, increments,
                "increments growing: staggered map no longer contracts "
                "(expected near pull-in)")

    return StaggeredResult(z, voltage, False, max_outer, increments,
                           f"no convergence in {max_outer} outer passes; "
                           f"last increment {increments[-1]:.3e} m")


# -- stability ----------------------------------------------------------------


def detect_stability(problem: Problem, state: SystemState,
                     fold_rtol: float = 1e-10) -> StabilityReport:
    """Classify an equilibrium from the inertia of its reduced tangent.

    The displacement-block Schur complement of the saddle tangent has as
    many negative eigenvalues as the tangent has beyond the potential-block
    count; zero means a stable branch point. ``at_fold`` flags a tangent
    that is singular within tolerance: its smallest equilibrated eigenvalue
    sits within ``fold_rtol`` of zero at the matrix's own scale. The default
    keeps three decades of margin above the factorization's pivot-ratio
    breakdown (1e-13), so the flag means "the next solve is in danger", not
    "a soft mode exists" (healthy compliant designs carry scaled
    eigenvalues of 1e-8 or so at rest). Crossing the fold is detected
    robustly by the sign flip of the Schur count; pass a larger
    ``fold_rtol`` to flag mere proximity.
    """
    inertia = matrix_inertia(state.tangent)
    sn = inertia.schur_negatives(problem.dof.n_free_phi)
    at_fold = bool(inertia.min_abs <= fold_rtol * inertia.max_abs)
    return StabilityReport(sn, at_fold, inertia)
