"""Static solver tests: Newton, arc-length continuation, staggered reference.

Two fixtures carry the load. A stiff uniform-gap plate on discrete springs
reproduces the closed-form parallel-plate model, so every branch point and
the fold itself have an independent oracle. A slender clamped-clamped beam
exercises the same machinery on a structure with real bending and stress
stiffening, where only regression values, orderings, and invariants apply.
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from memfem.assembly import BoundaryConditions, Problem, Spring
from memfem.errors import ConfigError
from memfem.lumped import ParallelPlate
from memfem.materials import ElectricMaterial, MechanicalMaterial
from memfem.mesh import generate_beam_mesh
from memfem.static import (FOLD_SIGN_CHANGE, NO_FOLD, SolverSettings,
                           detect_stability, gap_height, newton_solve,
                           pick_probe, riks_trace, staggered_solve)

LENGTH = 300e-6
GAP = 6e-6
K_SUSPENSION = 2.0


@pytest.fixture(scope="module")
def plate():
    """Rigid plate on end springs over a full-length electrode.

    Thick low-modulus plate (sag under electrostatic load is nanometres
    against micrometres of spring travel) with the vertical compliance
    supplied entirely by two end springs of k/2 each. The gap field stays
    uniform, so the lumped parallel-plate formulas are exact up to
    interpolation error.
    """
    mesh = generate_beam_mesh(length=LENGTH, thickness=5e-6, gap=GAP,
                              nx=12, ny_beam=1, ny_gap=3,
                              electrode_length=LENGTH,
                              electrode_centers=(LENGTH / 2,), order=1)
    materials = {"structure": MechanicalMaterial(1e8, 0.0, rho=2330.0),
                 "vacuum": ElectricMaterial()}
    bcs = BoundaryConditions(
        clamps=[("substrate", "xy"), ("beam", "x")],
        grounds=["beam_bottom"],
        electrodes=[("electrode_1", 1.0)],
        springs=[Spring("clamp_left", 1, K_SUSPENSION / 2),
                 Spring("clamp_right", 1, K_SUSPENSION / 2)])
    return Problem(mesh, materials, bcs)


@pytest.fixture(scope="module")
def lumped():
    return ParallelPlate(stiffness=K_SUSPENSION, gap=GAP, area=LENGTH * 1.0)


@pytest.fixture(scope="module")
def plate_riks(plate):
    return riks_trace(plate)


def beam_problem(centers, live_electrodes):
    mesh = generate_beam_mesh(length=LENGTH, thickness=0.5e-6, gap=GAP,
                              nx=12, ny_beam=1, ny_gap=3,
                              electrode_length=60e-6,
                              electrode_centers=centers, order=2)
    materials = {"structure": MechanicalMaterial(169e9, 0.3, rho=2330.0),
                 "vacuum": ElectricMaterial()}
    bcs = BoundaryConditions(
        clamps=[("clamp_left", "xy"), ("clamp_right", "xy"),
                ("substrate", "xy")],
        grounds=["beam_bottom"],
        electrodes=[(name, 1.0) for name in live_electrodes])
    return Problem(mesh, materials, bcs)


@pytest.fixture(scope="module")
def beam():
    return beam_problem((150e-6,), ["electrode_1"])


@pytest.fixture(scope="module")
def beam_riks(beam):
    return riks_trace(beam)


def probe_displacement(problem, z, voltage):
    _, slot = pick_probe(problem)
    return float(problem.full_state(z, voltage)[slot])


# -- probe and geometry helpers ------------------------------------------------


class TestProbe:
    def test_auto_probe_is_structure_bottom_center(self, plate):
        from memfem.mesh import MECHANICAL
        node, slot = pick_probe(plate)
        x, y = plate.mesh.nodes[node]
        structural = plate.mesh.nodes_in_physics(MECHANICAL)
        assert abs(x - LENGTH / 2) <= LENGTH / 12
        assert y == plate.mesh.nodes[structural, 1].min()
        assert slot >= 0

    def test_probe_by_node_set(self, plate):
        node, slot = pick_probe(plate, "clamp_left")
        assert node in plate.mesh.node_sets["clamp_left"]
        assert slot >= 0

    def test_probe_on_clamped_set_rejected(self, beam):
        with pytest.raises(ConfigError):
            pick_probe(beam, "substrate")

    def test_probe_by_node_id_round_trip(self, plate):
        node, slot = pick_probe(plate)
        again = pick_probe(plate, node)
        assert again == (node, slot)

    def test_gap_height_matches_geometry(self, plate):
        assert gap_height(plate) == pytest.approx(GAP, rel=1e-12)


class TestSettings:
    def test_rejects_nonpositive_tolerance(self):
        with pytest.raises(ConfigError):
            SolverSettings(tol_residual=0.0)

    def test_rejects_bad_iteration_limits(self):
        with pytest.raises(ConfigError):
            SolverSettings(max_iter=0)
        with pytest.raises(ConfigError):
            SolverSettings(max_steps=1)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ConfigError):
            SolverSettings(dv_initial=-1.0)

    def test_rejects_travel_fraction_outside_unit_interval(self):
        with pytest.raises(ConfigError):
            SolverSettings(travel_fraction=0.0)
        with pytest.raises(ConfigError):
            SolverSettings(travel_fraction=1.5)


# -- fixed-voltage Newton ------------------------------------------------------


class TestNewton:
    def test_rest_state_returns_immediately(self, plate):
        res = newton_solve(plate, 0.0)
        assert res.converged
        assert res.iterations == 0
        assert np.all(res.z == 0.0)
        assert res.residual_norms == [0.0]

    def test_plate_tracks_lumped_equilibrium(self, plate, lumped):
        v_half = 0.5 * lumped.pull_in()[0]
        x_ref = brentq(lambda x: lumped.equilibrium_voltage(x) - v_half,
                       1e-12, GAP / 3 * (1 - 1e-9))
        res = newton_solve(plate, v_half)
        assert res.converged
        d = probe_displacement(plate, res.z, v_half)
        assert d < 0.0  # pulled toward the substrate
        assert abs(d) == pytest.approx(x_ref, rel=2e-2)

    def test_quadratic_convergence_tail(self, plate, lumped):
        # 0.9 V_pi leaves a long enough residual history; smaller loads
        # reach the assembly noise floor in two steps
        res = newton_solve(plate, 0.9 * lumped.pull_in()[0])
        assert res.converged
        r = np.asarray(res.residual_norms)
        rho = r / r[0]
        floor = r.min()
        # normalized residuals above the assembly noise floor must obey the
        # quadratic bound rho_{k+1} <= C * rho_k^2 with a modest constant
        pairs = [(rho[k], rho[k + 1]) for k in range(1, len(r) - 1)
                 if r[k] > 5 * floor and r[k + 1] > 5 * floor
                 and rho[k + 1] < rho[k]]
        assert pairs, "no usable contraction pairs above the noise floor"
        for a, b in pairs[-2:]:
            assert b <= 10.0 * a * a

    def test_voltage_sign_symmetry(self, plate, lumped):
        v_half = 0.5 * lumped.pull_in()[0]
        plus = newton_solve(plate, v_half)
        minus = newton_solve(plate, -v_half)
        assert plus.converged and minus.converged
        is_u = plate.dof.z_is_u
        scale = float(np.max(np.abs(plus.z)))
        assert np.max(np.abs(plus.z[is_u] - minus.z[is_u])) <= 1e-12 * scale
        assert np.max(np.abs(plus.z[~is_u] + minus.z[~is_u])) <= 1e-12 * scale

    def test_beam_reference_point(self, beam):
        # frozen response of the coarse clamped-clamped beam at 100 V
        res = newton_solve(beam, 100.0)
        assert res.converged
        d = probe_displacement(beam, res.z, 100.0)
        assert d == pytest.approx(-1.326666941e-06, rel=1e-6)
        report = detect_stability(beam, res.state)
        assert report.schur_negatives == 0

    def test_above_pull_in_reports_failure(self, beam):
        res = newton_solve(beam, 300.0)
        assert not res.converged
        assert res.message

    def test_warm_start_reuses_solution(self, plate, lumped):
        v_half = 0.5 * lumped.pull_in()[0]
        first = newton_solve(plate, v_half)
        again = newton_solve(plate, v_half, z0=first.z)
        assert again.converged
        assert again.iterations <= 2


# -- arc-length continuation ---------------------------------------------------


class TestContinuation:
    def test_branch_starts_at_rest(self, plate_riks):
        p0 = plate_riks.branch[0]
        assert p0.s == 0.0
        assert p0.voltage == 0.0
        assert p0.d_probe == 0.0
        assert p0.schur_negatives == 0

    def test_plate_fold_matches_lumped_pull_in(self, plate_riks, lumped):
        v_ref, x_ref = lumped.pull_in()
        assert plate_riks.found_fold
        assert plate_riks.detection == FOLD_SIGN_CHANGE
        assert plate_riks.v_pi == pytest.approx(v_ref, rel=1e-2)
        assert plate_riks.d_pi == pytest.approx(x_ref, rel=2e-2)

    def test_prefold_branch_lies_on_lumped_curve(self, plate_riks, lumped):
        v_ref = lumped.pull_in()[0]
        checked = 0
        for point in plate_riks.branch[1:]:
            d = abs(point.d_probe)
            if d < 0.25 * GAP:
                v_lump = lumped.equilibrium_voltage(d)
                assert abs(point.voltage - v_lump) <= 1e-3 * v_ref
                checked += 1
        assert checked >= 10

    def test_branch_monotone_in_probe_displacement(self, plate_riks, beam_riks):
        for result in (plate_riks, beam_riks):
            d = np.array([abs(p.d_probe) for p in result.branch])
            assert np.all(np.diff(d) >= -1e-15)

    def test_voltage_has_single_interior_maximum(self, plate_riks, beam_riks):
        for result in (plate_riks, beam_riks):
            v = np.array([p.voltage for p in result.branch])
            signs = np.sign(np.diff(v))
            signs = signs[signs != 0.0]
            flips = np.flatnonzero(np.diff(signs) != 0.0)
            assert len(flips) == 1
            assert signs[0] > 0 and signs[-1] < 0

    def test_branch_continues_past_fold(self, plate_riks, beam_riks):
        for result in (plate_riks, beam_riks):
            v = [p.voltage for p in result.branch]
            post = len(v) - 1 - int(np.argmax(v))
            assert post >= 10

    def test_stability_flips_across_fold(self, plate_riks, beam_riks):
        for result in (plate_riks, beam_riks):
            v = [p.voltage for p in result.branch]
            peak = int(np.argmax(v))
            assert result.branch[max(peak - 1, 0)].schur_negatives == 0
            assert result.branch[-1].schur_negatives >= 1

    def test_initial_radius_insensitive(self, plate, plate_riks):
        for dv0 in (0.02, 0.01):
            alt = riks_trace(plate, SolverSettings(dv_initial=dv0))
            assert alt.found_fold
            assert alt.v_pi == pytest.approx(plate_riks.v_pi, rel=1e-3)

    def test_beam_reference_fold(self, beam_riks):
        assert beam_riks.detection == FOLD_SIGN_CHANGE
        # frozen regression values for the coarse center-electrode beam
        assert beam_riks.v_pi == pytest.approx(212.306, rel=1e-3)
        assert beam_riks.d_pi == pytest.approx(3.669e-6, rel=1e-2)

    def test_stress_stiffening_deepens_fold(self, beam_riks):
        # membrane tension carries the beam well past the g/3 plate fold
        assert beam_riks.d_pi > 1.2 * GAP / 3

    def test_split_electrodes_raise_pull_in(self, beam_riks):
        two = riks_trace(beam_problem((60e-6, 240e-6),
                                      ["electrode_1", "electrode_2"]))
        assert two.found_fold
        assert two.v_pi > beam_riks.v_pi
        assert two.d_pi > beam_riks.d_pi

    def test_step_budget_reports_no_fold(self, plate):
        res = riks_trace(plate, SolverSettings(max_steps=5))
        assert res.detection == NO_FOLD
        assert not res.found_fold
        assert math.isnan(res.v_pi) and math.isnan(res.d_pi)
        assert res.diagnostic
        assert res.branch

    def test_travel_limit_reports_no_fold(self, plate):
        res = riks_trace(plate, SolverSettings(travel_fraction=0.15))
        assert res.detection == NO_FOLD
        assert "travel" in res.diagnostic
        # the branch stops at the first point past the limit, so only the
        # terminal point may overshoot, by at most one arc step
        assert all(abs(p.d_probe) < 0.15 * GAP for p in res.branch[:-1])
        assert abs(res.branch[-1].d_probe) <= 1.5 * 0.15 * GAP


# -- staggered reference solver --------------------------------------------------


class TestStaggered:
    def test_rest_state_one_pass(self, plate):
        res = staggered_solve(plate, 0.0)
        assert res.converged
        assert res.outer_iterations == 1
        assert np.max(np.abs(res.z)) <= 1e-18

    def test_agrees_with_newton_below_fold(self, plate, lumped):
        v_half = 0.5 * lumped.pull_in()[0]
        mono = newton_solve(plate, v_half)
        stag = staggered_solve(plate, v_half)
        assert stag.converged
        is_u = plate.dof.z_is_u
        scale = float(np.max(np.abs(mono.z[is_u])))
        assert np.max(np.abs(mono.z[is_u] - stag.z[is_u])) <= 1e-6 * scale

    def test_iterations_grow_toward_fold(self, plate, plate_riks):
        counts = []
        for fraction in (0.5, 0.9, 0.98):
            res = staggered_solve(plate, fraction * plate_riks.v_pi)
            assert res.converged
            counts.append(res.outer_iterations)
        assert counts[0] < counts[1] < counts[2]

    def test_diverges_past_fold(self, plate, plate_riks):
        res = staggered_solve(plate, 1.05 * plate_riks.v_pi)
        assert not res.converged
        assert res.message

    def test_sweep_stops_at_or_below_fold(self, plate, plate_riks):
        z0, last_converged = None, 0.0
        for v in np.arange(0.05, 1.25, 0.05) * plate_riks.v_pi:
            res = staggered_solve(plate, float(v), z0=z0)
            if not res.converged:
                break
            last_converged, z0 = float(v), res.z
        else:
            pytest.fail("staggered solver never diverged above the fold")
        assert last_converged <= plate_riks.v_pi * 1.001


# -- stability classification ----------------------------------------------------


class TestStability:
    def test_rest_is_stable(self, plate):
        res = newton_solve(plate, 0.0)
        report = detect_stability(plate, res.state)
        assert report.schur_negatives == 0
        assert not report.at_fold
        assert report.stable

    def test_index_rises_past_fold(self, plate_riks):
        assert plate_riks.branch[-1].schur_negatives >= 1

    def test_alarm_fires_approaching_fold(self, plate, plate_riks):
        # restart from the last stable branch point and push to within
        # 1e-5 of the interpolated fold voltage
        v = [p.voltage for p in plate_riks.branch]
        peak = int(np.argmax(v))
        pre = plate_riks.branch[peak - 1]
        assert pre.schur_negatives == 0
        near = newton_solve(plate, plate_riks.v_pi * (1 - 1e-5), z0=pre.z)
        assert near.converged

        rest = newton_solve(plate, 0.0)
        report_rest = detect_stability(plate, rest.state, fold_rtol=2e-9)
        report_near = detect_stability(plate, near.state, fold_rtol=2e-9)
        assert not report_rest.at_fold
        assert report_near.at_fold
        assert not report_near.stable
        # the smallest scaled eigenvalue collapses by well over a decade
        shrink = report_near.inertia.min_abs / report_rest.inertia.min_abs
        assert shrink < 0.1

    def test_default_threshold_quiet_on_healthy_states(self, plate, beam):
        for problem, voltage in ((plate, 0.0), (beam, 100.0)):
            res = newton_solve(problem, voltage)
            report = detect_stability(problem, res.state)
            assert not report.at_fold
            assert report.stable
