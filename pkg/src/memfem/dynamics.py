"""Transient response, dynamic pull-in, and coupled modal analysis.

Time integration uses the implicit Newmark scheme (average acceleration by
default) on the same monolithic residual the static solvers assemble. The
potential slots carry no inertia: their rows of the mass matrix are zero,
so each time step solves the coupled nonlinear system with the field as a
quasi-static constraint riding on the moving geometry. Every step runs a
full Newton iteration with the tangent K + M / (beta dt^2).

A voltage step from rest overshoots the static equilibrium, so the system
escapes to contact below the static fold: the dynamic pull-in voltage.
:func:`dynamic_pullin_search` brackets it by bisection on trajectory
classifications, the same numerical experiment the phase diagrams report.

The energy ledger tracks kinetic energy, stored strain energy, field
energy, and the work delivered by the voltage source (trapezoid of V dQ
over the actual conductor charges). With the average-acceleration scheme
and no damping their combination E_kin + E_strain + E_elec - W_source is
conserved to second order in the step, which is the cheap global check on
a transient run. The ledger starts after the initial field snap: switching
an ideal source onto an uncharged electrode at fixed geometry does work
V dQ = 2 E_field outside the mechanical problem, half of it the classic
charging loss that has no sink in an undamped model.

Modal analysis condenses the potential block (static Schur complement onto
displacement slots) and solves the generalized symmetric eigenproblem with
the consistent mass. Negative eigenvalues flag an unstable equilibrium;
the first frequency falling toward zero is the fold seen from the small-
signal side.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from memfem.assembly import Problem, SystemState, factorize, linear_solve
from memfem.errors import (ConfigError, ElementInversionError,
                           NonconvergenceError)
from memfem.static import SolverSettings, gap_height, pick_probe

logger = logging.getLogger(__name__)

BOUNDED = "BOUNDED"
PULL_IN = "PULL_IN"
INDETERMINATE = "INDETERMINATE"

STEP = "step"
RAMP = "ramp"
TABLE = "table"


@dataclass(frozen=True)
class VoltageSchedule:
    """Drive voltage as a function of time.

    Attributes:
        kind: "step" (amplitude from t_on), "ramp" (linear rise over
            t_ramp, then the plateau), or "table" (linear interpolation
            of sample points, clamped at the ends).
        amplitude: plateau voltage of step and ramp.
        t_on: switch-on time of a step.
        t_ramp: rise time of a ramp, must be positive.
        table: (times, voltages) arrays for kind "table".
    """

    kind: str = STEP
    amplitude: float = 0.0
    t_on: float = 0.0
    t_ramp: float = 0.0
    table: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in (STEP, RAMP, TABLE):
            raise ConfigError(f"schedule kind must be 'step', 'ramp' or "
                              f"'table', got {self.kind!r}")
        if self.kind == RAMP and self.t_ramp <= 0.0:
            raise ConfigError("ramp schedule needs a positive t_ramp")
        if self.kind == TABLE:
            if self.table is None:
                raise ConfigError("table schedule needs sample points")
            tt, vv = self.table
            if len(tt) != len(vv) or len(tt) < 2:
                raise ConfigError("table needs matching time/voltage arrays "
                                  "of at least two points")
            if np.any(np.diff(tt) <= 0.0):
                raise ConfigError("table times must increase strictly")

    def __call__(self, t: float) -> float:
        if self.kind == STEP:
            return self.amplitude if t >= self.t_on else 0.0
        if self.kind == RAMP:
            return self.amplitude * min(max(t / self.t_ramp, 0.0), 1.0)
        tt, vv = self.table
        return float(np.interp(t, tt, vv))


@dataclass
class Trajectory:
    """Sampled transient run with its energy ledger.

    Arrays share one uniform time grid. ``voltage`` is the applied drive at
    each sample; the energies are per unit depth like every other assembled
    quantity. ``completed`` means the planned horizon was reached;
    ``contact`` that the probe crossed the integrator's stop threshold;
    ``inverted`` that an element turned inside out (crushed gap), which
    classification treats as contact as well.
    """

    t: np.ndarray
    d_probe: np.ndarray
    v_probe: np.ndarray
    voltage: np.ndarray
    e_kin: np.ndarray
    e_strain: np.ndarray
    e_elec: np.ndarray
    w_source: np.ndarray
    probe_node: int
    gap: float
    schedule: VoltageSchedule
    dt: float
    completed: bool
    contact: bool = False
    inverted: bool = False
    diagnostic: str = ""
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list)

    @property
    def total_energy(self) -> np.ndarray:
        """Conserved combination: mechanical + field energy minus source work."""
        return self.e_kin + self.e_strain + self.e_elec - self.w_source


@dataclass(frozen=True)
class Classification:
    outcome: str
    t_contact: float
    max_excursion: float


@dataclass(frozen=True)
class DynamicPullInResult:
    """Bisection bracket of the step-voltage escape threshold."""

    v_dpi: float
    v_stable: float
    v_unstable: float
    samples: tuple[tuple[float, str], ...]


# -- Newmark integration -----------------------------------------------------


def _probe_row(problem: Problem, slot: int):
    row = problem.dof.P.getrow(slot)
    const = float(problem.dof.x0_const[slot])
    if problem.dof.x0_slope[slot] != 0.0:
        raise ConfigError("probe slot rides on the voltage carrier; "
                          "pick a displacement slot")
    return row, const


def newmark_integrate(problem: Problem, schedule: VoltageSchedule,
                      dt: float | None = None, t_end: float | None = None,
                      beta: float = 0.25, gamma: float = 0.5,
                      z0: np.ndarray | None = None,
                      v0: np.ndarray | None = None,
                      settings: SolverSettings | None = None,
                      snapshot_stride: int = 0,
                      stop_fraction: float | None = None) -> Trajectory:
    """Implicit Newmark run under the given voltage schedule.

    The initial state must be an equilibrium of the pre-switch voltage
    (rest by default); the consistent initial acceleration comes from the
    residual right after the switch, with the interior field snapped to
    the instantaneous voltage first (the potential is algebraic, it has no
    state of its own to lag with).

    When ``dt`` or ``t_end`` is omitted they default to a two-hundredth
    and ten times the small-signal fundamental period at the initial
    state. ``stop_fraction`` ends the run early once the probe has crossed
    that share of the gap (the integrand stiffens brutally near contact
    and nothing after the crossing changes the classification).

    A step that fails its Newton iteration is retried on successively
    halved substeps; element inversion that persists at the smallest
    substep is recorded as contact, any other persistent failure truncates
    the trajectory with a diagnostic (classification then refuses to call
    it bounded).
    """
    settings = settings or SolverSettings()
    if not (gamma >= 0.5 and beta >= 0.5 * gamma):
        raise ConfigError("need gamma >= 1/2 and beta >= gamma/2 for the "
                          "unconditionally stable Newmark family")
    if dt is None or t_end is None:
        modal = modal_analysis(problem, z0, voltage=0.0, n_modes=1)
        if not modal.stable[0]:
            raise ConfigError("initial state is unstable; no fundamental "
                              "period to set the time step from")
        period = 1.0 / modal.frequency_hz[0]
        dt = period / 200.0 if dt is None else dt
        t_end = 10.0 * period if t_end is None else t_end
    if dt <= 0.0 or t_end <= dt:
        raise ConfigError("need 0 < dt < t_end")

    node, slot = pick_probe(problem, settings.probe)
    p_row, p_const = _probe_row(problem, slot)
    gap = gap_height(problem)
    mass = problem.assemble_mass()
    iu = np.flatnonzero(problem.dof.z_is_u)
    ip = np.flatnonzero(problem.dof.z_is_phi)
    drives = tuple(problem.bcs.electrodes)

    z = problem.zero_state() if z0 is None else np.asarray(z0, float).copy()
    v = np.zeros_like(z) if v0 is None else np.asarray(v0, float).copy()

    # Field snap and consistent initial acceleration at V(0).
    volt0 = schedule(0.0)
    state = problem.assemble(z, volt0)
    if len(ip) and float(np.linalg.norm(state.residual[ip])) > 0.0:
        z[ip] -= linear_solve(state.tangent[np.ix_(ip, ip)].tocsr(),
                              state.residual[ip])
        state = problem.assemble(z, volt0)
    a = np.zeros_like(z)
    if len(iu):
        m_uu = mass[np.ix_(iu, iu)].tocsr()
        a[iu] = linear_solve(m_uu, -state.residual[iu])

    n = int(round(t_end / dt))
    times = dt * np.arange(n + 1)
    d_arr = np.empty(n + 1)
    v_arr = np.empty(n + 1)
    volt_arr = np.empty(n + 1)
    e_kin = np.empty(n + 1)
    e_strain = np.empty(n + 1)
    e_elec = np.empty(n + 1)
    w_src = np.empty(n + 1)

    def record(k, state_k, w_cum):
        d_arr[k] = p_const + (p_row @ z)[0]
        v_arr[k] = (p_row @ v)[0]
        volt_arr[k] = schedule(times[k])
        e_kin[k] = 0.5 * float(v @ (mass @ v))
        e_strain[k] = state_k.w_strain
        e_elec[k] = state_k.w_elec
        w_src[k] = w_cum

    snapshots: list[tuple[float, np.ndarray]] = []
    w_cum = 0.0
    record(0, state, w_cum)
    if snapshot_stride > 0:
        snapshots.append((0.0, z.copy()))

    tol = settings.tol_residual
    stop_at = stop_fraction * gap if stop_fraction is not None else None
    # Largest displacement correction taken at face value. Membrane rows
    # are ten-plus orders stiffer than bending, so a residual spike there
    # maps to a correction that would fly through the whole gap; clamping
    # keeps Newton re-linearizing on the way instead.
    dz_cap = gap / 8.0

    def step_newton(z_in, v_in, a_in, t_new, h):
        """One Newmark step of size h; returns (z, v, a, state, dW)."""
        volt_new = schedule(t_new)
        z_pred = z_in + h * v_in + h * h * (0.5 - beta) * a_in
        v_pred = v_in + h * (1.0 - gamma) * a_in
        coef = 1.0 / (beta * h * h)
        m_coef = mass * coef
        tol_u = 1e-6 * gap
        tol_phi = 1e-6 * max(abs(volt_new), 1.0)

        # Iterate from the previous state, not the predictor. The stiff
        # membrane rows echo any geometric offset ten-orders amplified, so
        # a predictor start buries the physical force scale under elastic
        # noise and the relative test below then over-iterates; the
        # previous state enters with a residual at honest inertial scale
        # and the mass-dominated first solve lands the whole increment.
        zk = z_in.copy()
        st = problem.assemble(zk, volt_new)
        res = st.residual + m_coef @ (zk - z_pred)
        rn = float(np.linalg.norm(res))
        # Force-residual reference: entry imbalance or the inertial force
        # the step develops, whichever is larger. The entry residual alone
        # can be tiny (rest state, voltage still off) and the target would
        # chase the assembly noise floor.
        r_ref = rn
        saw_inversion = False
        for _ in range(settings.max_iter):
            if rn <= tol * r_ref:
                break
            solve = factorize((st.tangent + m_coef).tocsr())
            dz = solve(res)
            # Converged in the state variables themselves: the pending
            # correction is below resolution in both metres and volts.
            # The force norm may still sit orders above its target, that
            # is the stiff membrane rows echoing those same increments.
            du_max = float(np.abs(dz[iu]).max()) if len(iu) else 0.0
            dphi_max = float(np.abs(dz[ip]).max()) if len(ip) else 0.0
            if du_max <= tol_u and dphi_max <= tol_phi:
                break
            if du_max > dz_cap:
                dz *= dz_cap / du_max
            step, accepted = 1.0, None
            for _ in range(6):
                try:
                    cand = zk - step * dz
                    accepted = (cand, problem.assemble(cand, volt_new))
                    break
                except ElementInversionError:
                    saw_inversion = True
                    step *= 0.5
            if accepted is None:
                raise ElementInversionError(-1, "mechanical",
                                            f"t={t_new:g}")
            zk, st = accepted
            res = st.residual + m_coef @ (zk - z_pred)
            rn = float(np.linalg.norm(res))
            inertial = float(np.linalg.norm(m_coef @ (zk - z_pred)))
            r_ref = max(r_ref, inertial)
        else:
            if saw_inversion:
                # Newton kept walking into inverted configurations: the
                # step straddles contact, there is no valid state to
                # converge to at this time level.
                raise ElementInversionError(-1, "mechanical",
                                            f"t={t_new:g} (straddles contact)")
            raise NonconvergenceError(
                f"Newmark step to t={t_new:g} did not converge: residual "
                f"{rn:.3e} against scale {r_ref:.3e}")
        a_new = coef * (zk - z_pred)
        v_new = v_pred + gamma * h * a_new
        # Source work over the substep: trapezoid of sum_k c_k V dQ_k.
        dw = 0.0
        volt_old = schedule(t_new - h)
        for name, c in drives:
            dq = st.charges[name] - prev_charges[name]
            dw += 0.5 * c * (volt_old + volt_new) * dq
        return zk, v_new, a_new, st, dw

    def advance(z_in, v_in, a_in, t_start, h, depth):
        """Integrate one interval, splitting on failure. Returns
        (z, v, a, state, dW) or raises the final failure.

        Depth 8 means substeps of dt/256: the mass term M/(beta h^2)
        dominates the tangent as h shrinks, so even the violently
        nonlinear final plunge onto the electrode becomes solvable in a
        few Newton iterations per substep."""
        try:
            return step_newton(z_in, v_in, a_in, t_start + h, h)
        except (ElementInversionError, NonconvergenceError):
            if depth >= 8:
                raise
        z1, v1, a1, st1, dw1 = advance(z_in, v_in, a_in, t_start,
                                       0.5 * h, depth + 1)
        prev_charges.update(st1.charges)
        z2, v2, a2, st2, dw2 = advance(z1, v1, a1, t_start + 0.5 * h,
                                       0.5 * h, depth + 1)
        return z2, v2, a2, st2, dw1 + dw2

    completed, contact, inverted, diagnostic = True, False, False, ""
    prev_charges = dict(state.charges)
    k_done = n
    for k in range(1, n + 1):
        try:
            z, v, a, state, dw = advance(z, v, a, times[k - 1], dt, 0)
        except ElementInversionError as exc:
            completed, inverted = False, True
            diagnostic = f"element inversion treated as contact: {exc}"
            k_done = k - 1
            break
        except NonconvergenceError as exc:
            completed = False
            diagnostic = str(exc)
            k_done = k - 1
            break
        prev_charges = dict(state.charges)
        w_cum += dw
        record(k, state, w_cum)
        if snapshot_stride > 0 and k % snapshot_stride == 0:
            snapshots.append((times[k], z.copy()))
        if stop_at is not None and abs(d_arr[k]) >= stop_at:
            contact = True
            k_done = k
            break
    else:
        k_done = n

    if contact and k_done < n:
        completed = True  # ended by design, not by failure
    sl = slice(0, k_done + 1)
    return Trajectory(times[sl], d_arr[sl], v_arr[sl], volt_arr[sl],
                      e_kin[sl], e_strain[sl], e_elec[sl], w_src[sl],
                      node, gap, schedule, dt, completed, contact,
                      inverted, diagnostic, snapshots)


# -- classification and dynamic pull-in ---------------------------------------


def classify_trajectory(traj: Trajectory, contact_fraction: float = 0.95,
                        horizon_periods: float = 10.0,
                        period: float | None = None) -> Classification:
    """BOUNDED / PULL_IN / INDETERMINATE verdict for one trajectory.

    Pull-in means the probe crossed ``contact_fraction`` of the gap or an
    element inverted; the contact time interpolates the threshold crossing
    linearly between samples. Bounded requires the full horizon to have
    been integrated: ``horizon_periods`` of ``period`` when a period is
    given, otherwise the trajectory's own planned length. A truncated run
    without contact stays INDETERMINATE, never silently bounded.
    """
    if not 0.0 < contact_fraction < 1.0:
        raise ConfigError("contact_fraction must lie in (0, 1)")
    limit = contact_fraction * traj.gap
    d = np.abs(traj.d_probe)
    excursion = float(d.max()) if len(d) else 0.0
    hit = np.flatnonzero(d >= limit)
    if len(hit):
        k = int(hit[0])
        if k == 0:
            t_c = float(traj.t[0])
        else:
            f = (limit - d[k - 1]) / (d[k] - d[k - 1])
            t_c = float(traj.t[k - 1] + f * (traj.t[k] - traj.t[k - 1]))
        return Classification(PULL_IN, t_c, excursion)
    if traj.inverted:
        return Classification(PULL_IN, float(traj.t[-1]), excursion)
    needed = horizon_periods * period if period is not None else None
    covered = traj.completed if needed is None \
        else traj.t[-1] >= needed * (1.0 - 1e-9)
    if covered:
        return Classification(BOUNDED, math.nan, excursion)
    return Classification(INDETERMINATE, math.nan, excursion)


def dynamic_pullin_search(problem: Problem, v_low: float, v_high: float,
                          tol_v: float,
                          settings: SolverSettings | None = None,
                          dt: float | None = None,
                          contact_fraction: float = 0.95,
                          horizon_periods: float = 10.0) -> DynamicPullInResult:
    """Bisect the step-voltage amplitude between bounded and pull-in runs.

    Every probe integrates a fresh step response from rest over the same
    horizon (ten fundamental periods by default, step dt = T1/200).
    The bracket ends must classify BOUNDED below and PULL_IN above, and
    every sample ever taken must sort consistently with the final bracket;
    an INDETERMINATE run (truncated without contact) aborts the search
    rather than guessing a side.
    """
    if not (0.0 <= v_low < v_high):
        raise ConfigError("need 0 <= v_low < v_high")
    if tol_v <= 0.0:
        raise ConfigError("tol_v must be positive")
    settings = settings or SolverSettings()
    modal = modal_analysis(problem, None, voltage=0.0, n_modes=1)
    if not modal.stable[0]:
        raise ConfigError("rest state is unstable; dynamic pull-in is "
                          "undefined")
    period = 1.0 / modal.frequency_hz[0]
    dt = period / 200.0 if dt is None else dt
    t_end = horizon_periods * period

    samples: list[tuple[float, str]] = []

    def classify_at(volts: float) -> str:
        traj = newmark_integrate(
            problem, VoltageSchedule(STEP, volts), dt=dt, t_end=t_end,
            settings=settings, stop_fraction=contact_fraction)
        c = classify_trajectory(traj, contact_fraction, horizon_periods,
                                period)
        if c.outcome == INDETERMINATE:
            raise NonconvergenceError(
                f"trajectory at V={volts:g} truncated without contact: "
                f"{traj.diagnostic}")
        samples.append((volts, c.outcome))
        logger.info("dynamic pull-in probe V=%.6g -> %s", volts, c.outcome)
        return c.outcome

    if classify_at(v_low) != BOUNDED:
        raise ConfigError(f"v_low={v_low:g} already pulls in; "
                          f"lower the bracket")
    if classify_at(v_high) != PULL_IN:
        raise ConfigError(f"v_high={v_high:g} stays bounded; "
                          f"raise the bracket")
    lo, hi = v_low, v_high
    while hi - lo > tol_v:
        mid = 0.5 * (lo + hi)
        if classify_at(mid) == PULL_IN:
            hi = mid
        else:
            lo = mid
    bounded = [vv for vv, c in samples if c == BOUNDED]
    pulled = [vv for vv, c in samples if c == PULL_IN]
    if max(bounded) >= min(pulled):
        table = ", ".join(f"{vv:.6g}:{c}" for vv, c in sorted(samples))
        raise NonconvergenceError(
            f"classifications are not monotone in voltage: {table}")
    return DynamicPullInResult(0.5 * (lo + hi), lo, hi, tuple(samples))


# -- modal analysis ------------------------------------------------------------


@dataclass(frozen=True)
class ModalResult:
    """Smallest generalized eigenpairs of (K, M) after condensation.

    ``lam`` are eigenvalues of the displacement-block Schur pencil in
    ascending order; ``frequency_hz`` is sqrt(lam)/2pi where lam >= 0 and
    NaN on unstable modes (lam < 0), which ``stable`` flags. ``shapes``
    holds mass-normalized columns in reduced coordinates, the potential
    slots carrying the quasi-static field response along the mode.
    """

    lam: np.ndarray
    frequency_hz: np.ndarray
    stable: np.ndarray
    shapes: np.ndarray

    def report(self) -> str:
        lines = ["# mode  frequency_hz  stable"]
        for i, (f_hz, ok) in enumerate(zip(self.frequency_hz, self.stable),
                                       start=1):
            shown = f"{f_hz:.6e}" if math.isfinite(f_hz) else "unstable"
            lines.append(f"{i:6d}  {shown:>13s}  {'yes' if ok else 'no'}")
        return "\n".join(lines)


def modal_analysis(problem: Problem, z: np.ndarray | None = None,
                   voltage: float = 0.0, n_modes: int = 6,
                   state: SystemState | None = None) -> ModalResult:
    """Coupled small-signal modes around an equilibrium.

    The potential block is statically condensed (the field follows the
    structure with no inertia of its own), then the dense symmetric pencil
    (S, M_uu) is solved; slots without mass are condensed the same way, so
    a semidefinite consistent mass never reaches the eigensolver. At
    V = 0 the coupling blocks vanish and the result is exactly the dry
    mechanical eigenproblem.
    """
    if z is None:
        z = problem.zero_state()
    if state is None:
        state = problem.assemble(z, voltage)
    k = state.tangent.toarray()
    k = 0.5 * (k + k.T)
    iu = np.flatnonzero(problem.dof.z_is_u)
    ip = np.flatnonzero(problem.dof.z_is_phi)
    if len(iu) == 0:
        raise ConfigError("no displacement unknowns to analyse")
    s = k[np.ix_(iu, iu)]
    if len(ip):
        kpp = k[np.ix_(ip, ip)]
        kpu = k[np.ix_(ip, iu)]
        x = scipy.linalg.solve(kpp, kpu, assume_a="sym")
        s = s - kpu.T @ x
        s = 0.5 * (s + s.T)
    m = problem.assemble_mass()[np.ix_(iu, iu)].toarray()

    # Condense massless displacement slots (for instance density-zero
    # fixtures): split on the mass diagonal and fold the stiffness of the
    # massless block into the massive one.
    diag = m.diagonal()
    live = diag > 1e-300 * max(float(diag.max()), 1.0)
    if not live.all():
        if not live.any():
            raise ConfigError("mass matrix is identically zero")
        a_idx = np.flatnonzero(live)
        b_idx = np.flatnonzero(~live)
        saa = s[np.ix_(a_idx, a_idx)]
        sab = s[np.ix_(a_idx, b_idx)]
        sbb = s[np.ix_(b_idx, b_idx)]
        y = scipy.linalg.solve(sbb, sab.T, assume_a="sym")
        s = saa - sab @ y
        s = 0.5 * (s + s.T)
        m = m[np.ix_(a_idx, a_idx)]
    else:
        a_idx = np.arange(len(iu))
        b_idx = np.empty(0, dtype=int)
        y = np.empty((0, len(iu)))

    n_modes = max(1, min(n_modes, s.shape[0]))
    lam, vec = scipy.linalg.eigh(s, m,
                                 subset_by_index=[0, n_modes - 1])
    stable = lam >= 0.0
    freq = np.where(stable, np.sqrt(np.maximum(lam, 0.0)) / (2.0 * math.pi),
                    math.nan)

    shapes = np.zeros((problem.dof.n_z, n_modes))
    shapes[iu[a_idx]] = vec
    if len(b_idx):
        shapes[iu[b_idx]] = -y @ vec
    if len(ip):
        shapes[ip] = -x @ shapes[iu]
    return ModalResult(lam, freq, stable, shapes)


# -- exports -------------------------------------------------------------------


def export_trajectory(traj: Trajectory, path) -> None:
    """Write the sampled run as CSV with a '#'-prefixed unit header."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("# t [s], d [m], v [m/s], E_kin [J/m], E_strain [J/m], "
                "E_elec [J/m], W_source [J/m]\n")
        for k in range(len(traj.t)):
            f.write(f"{traj.t[k]:.12e},{traj.d_probe[k]:.12e},"
                    f"{traj.v_probe[k]:.12e},{traj.e_kin[k]:.12e},"
                    f"{traj.e_strain[k]:.12e},{traj.e_elec[k]:.12e},"
                    f"{traj.w_source[k]:.12e}\n")


def export_phase_diagram(trajs, path) -> None:
    """Phase-diagram CSV: one blank-line-separated block per voltage.

    Columns V, t, d, v with the drive amplitude repeated per row, blocks
    sorted by amplitude so gnuplot's ``index`` addresses them directly.
    Pull-in trajectories simply end at their last integrated sample (the
    contact time when the run stopped there).
    """
    ordered = sorted(trajs, key=lambda tr: tr.schedule.amplitude)
    with open(path, "w", encoding="utf-8") as f:
        f.write("# V [V], t [s], d [m], v [m/s]\n")
        for i, tr in enumerate(ordered):
            if i:
                f.write("\n")
            amp = tr.schedule.amplitude
            for k in range(len(tr.t)):
                f.write(f"{amp:.12e},{tr.t[k]:.12e},"
                        f"{tr.d_probe[k]:.12e},{tr.v_probe[k]:.12e}\n")
