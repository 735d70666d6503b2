"""Element kernels against independent oracles.

Every force/stiffness is certified against central finite differences of the
discrete element energy, plus hand-derived closed forms for uniaxial stretch,
the parallel-plate field, and rigid-motion objectivity.
"""

import numpy as np
import pytest

from conftest import fd_gradient, fd_jacobian, random_triangle, rel_err
from memfem.elements import (
    coupled_tangent,
    default_degree,
    elec_element,
    elec_force,
    mass_element,
    mech_element,
    shape_eval,
)
from memfem.errors import ElementInversionError
from memfem.materials import EPSILON_0, ElectricMaterial, MechanicalMaterial

STEEL = MechanicalMaterial(E=200e9, nu=0.3, rho=7800.0)
SOFT = MechanicalMaterial(E=10.0, nu=0.25, rho=1.0)  # O(1) numbers for FD


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

class TestShapeFunctions:
    @pytest.mark.parametrize("nen", [3, 6])
    def test_partition_of_unity(self, nen, rng):
        for _ in range(20):
            xi = rng.uniform(0.0, 0.5, 2)
            n, dn = shape_eval(nen, xi)
            assert n.sum() == pytest.approx(1.0, abs=1e-14)
            assert np.abs(dn.sum(axis=0)).max() < 1e-13

    @pytest.mark.parametrize("nen", [3, 6])
    def test_kronecker_property(self, nen):
        ref = {
            3: [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
            6: [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0),
                (0.5, 0.0), (0.5, 0.5), (0.0, 0.5)],
        }[nen]
        for a, xi in enumerate(ref):
            n, _ = shape_eval(nen, np.array(xi))
            expect = np.zeros(nen)
            expect[a] = 1.0
            np.testing.assert_allclose(n, expect, atol=1e-14)

    def test_gradients_match_fd(self, rng):
        for nen in (3, 6):
            xi = rng.uniform(0.05, 0.4, 2)
            _, dn = shape_eval(nen, xi)
            fd = fd_jacobian(lambda z: shape_eval(nen, z)[0], xi, 1e-7)
            assert rel_err(dn, fd) < 1e-8

    def test_bad_node_count_rejected(self):
        with pytest.raises(ValueError):
            shape_eval(4, np.zeros(2))


# ---------------------------------------------------------------------------
# mechanics
# ---------------------------------------------------------------------------

class TestMechElement:
    @pytest.mark.parametrize("nen", [3, 6])
    def test_zero_displacement(self, nen, rng):
        coords = random_triangle(rng, nen)
        res = mech_element(coords, STEEL, np.zeros((nen, 2)))
        assert res.energy == 0.0
        assert np.abs(res.f).max() == 0.0
        # The tangent at zero displacement is the linear stiffness: symmetric,
        # PSD with three rigid-body modes (two translations, one rotation).
        w = np.linalg.eigvalsh(res.K)
        assert np.abs(res.K - res.K.T).max() <= 1e-12 * np.abs(res.K).max()
        assert w[0] > -1e-9 * w[-1]
        assert (np.abs(w) < 1e-9 * w[-1]).sum() == 3

    def test_uniaxial_stretch_closed_form(self):
        # Unit right triangle, u_x = (lam - 1) X: F = diag(lam, 1),
        # E11 = (lam^2 - 1)/2, W = area * C11 * E11^2 / 2.
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        lam = 1.2
        u = np.column_stack([(lam - 1.0) * coords[:, 0], np.zeros(3)])
        res = mech_element(coords, SOFT, u)
        c11 = SOFT.stiffness_voigt()[0, 0]
        e11 = 0.5 * (lam ** 2 - 1.0)
        assert res.energy == pytest.approx(0.5 * 0.5 * c11 * e11 ** 2, rel=1e-13)

    @pytest.mark.parametrize("nen", [3, 6])
    def test_rigid_motion_objectivity(self, nen, rng):
        coords = random_triangle(rng, nen)
        theta = 0.37
        rot = np.array([[np.cos(theta), -np.sin(theta)],
                        [np.sin(theta), np.cos(theta)]])
        u = coords @ rot.T + np.array([0.3, -0.7]) - coords
        res = mech_element(coords, STEEL, u)
        scale = STEEL.E * 1.0  # energy scale for a unit-size element
        assert abs(res.energy) < 1e-12 * scale
        assert np.abs(res.f).max() < 1e-12 * scale

    @pytest.mark.parametrize("nen", [3, 6])
    @pytest.mark.parametrize("plane", ["strain", "stress"])
    def test_force_is_energy_gradient(self, nen, plane, rng):
        mat = MechanicalMaterial(E=7.0, nu=0.31, rho=1.0, plane=plane)
        for _ in range(6):
            coords = random_triangle(rng, nen)
            u = 0.05 * rng.standard_normal((nen, 2))
            res = mech_element(coords, mat, u)
            fd = fd_gradient(
                lambda z: mech_element(coords, mat, z.reshape(nen, 2),
                                       want_tangent=False).energy,
                u.ravel(), 2e-6)
            assert rel_err(res.f, fd) < 1e-6

    @pytest.mark.parametrize("nen", [3, 6])
    def test_tangent_is_force_jacobian(self, nen, rng):
        for _ in range(4):
            coords = random_triangle(rng, nen)
            u = 0.1 * rng.standard_normal((nen, 2))
            res = mech_element(coords, SOFT, u)
            fd = fd_jacobian(
                lambda z: mech_element(coords, SOFT, z.reshape(nen, 2),
                                       want_tangent=False).f,
                u.ravel(), 2e-6)
            assert rel_err(res.K, fd) < 1e-5
            assert np.abs(res.K - res.K.T).max() <= 1e-12 * np.abs(res.K).max()

    def test_inverted_element_detected(self):
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        u = np.array([[0.0, 0.0], [-1.5, 0.0], [0.0, 0.0]])  # folds node 1 over
        with pytest.raises(ElementInversionError):
            mech_element(coords, SOFT, u)


class TestMassElement:
    @pytest.mark.parametrize("nen", [3, 6])
    def test_total_mass_and_symmetry(self, nen, rng):
        coords = random_triangle(rng, nen)
        rho = 2330.0
        m = mass_element(coords, rho)
        if nen == 3:
            (x0, y0), (x1, y1), (x2, y2) = coords
            area = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
        else:
            area = mass_element(coords, 1.0)[0::2, 0::2].sum()
        # Row sums of each component block reproduce rho * area.
        assert m[0::2, 0::2].sum() == pytest.approx(rho * abs(area), rel=1e-12)
        assert np.abs(m - m.T).max() <= 1e-12 * np.abs(m).max()
        assert np.linalg.eigvalsh(m)[0] > 0.0

    def test_zero_density(self, rng):
        coords = random_triangle(rng, 3)
        assert np.abs(mass_element(coords, 0.0)).max() == 0.0


# ---------------------------------------------------------------------------
# electrostatics
# ---------------------------------------------------------------------------

class TestElecElement:
    @pytest.mark.parametrize("nen", [3, 6])
    def test_constant_potential_nullspace(self, nen, rng):
        coords = random_triangle(rng, nen)
        phi = np.full(nen, 3.3)
        res = elec_element(coords, EPSILON_0, phi)
        assert res.energy == pytest.approx(0.0, abs=1e-30)
        assert np.abs(res.q).max() < 1e-25
        assert np.abs(res.K_phiphi @ np.ones(nen)).max() \
            <= 1e-12 * np.abs(res.K_phiphi).max()
        w = np.linalg.eigvalsh(res.K_phiphi)
        assert w[0] > -1e-12 * w[-1]

    def test_parallel_plate_energy_closed_form(self):
        # Unit-square gap of height h and width w, phi linear in y:
        # W = eps * V^2 * w / (2 h), exact for linear triangles.
        h, w, v = 2.0, 3.0, 10.0
        quad = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
        tri_a, tri_b = quad[[0, 1, 2]], quad[[0, 2, 3]]
        phi = lambda c: v * c[:, 1] / h
        total = elec_element(tri_a, EPSILON_0, phi(tri_a)).energy \
            + elec_element(tri_b, EPSILON_0, phi(tri_b)).energy
        assert total == pytest.approx(0.5 * EPSILON_0 * v ** 2 * w / h, rel=1e-13)

    @pytest.mark.parametrize("nen", [3, 6])
    def test_charge_is_energy_gradient(self, nen, rng):
        for _ in range(6):
            coords = random_triangle(rng, nen)
            phi = rng.standard_normal(nen)
            res = elec_element(coords, 1.0, phi)  # eps=1 keeps FD well scaled
            fd = fd_gradient(lambda z: elec_element(coords, 1.0, z,
                                                    want_tangent=False).energy,
                             phi, 2e-6)
            assert rel_err(res.q, fd) < 1e-6
            assert rel_err(res.K_phiphi @ phi, res.q) < 1e-12

    @pytest.mark.parametrize("nen", [3, 6])
    def test_force_is_coordinate_gradient(self, nen, rng):
        for _ in range(6):
            coords = random_triangle(rng, nen)
            phi = rng.standard_normal(nen)
            f = elec_force(coords, 1.0, phi)
            fd = fd_gradient(
                lambda z: elec_element(z.reshape(nen, 2), 1.0, phi,
                                       want_tangent=False).energy,
                coords.ravel(), 3e-6)
            assert rel_err(f, fd) < 1e-6

    @pytest.mark.parametrize("nen", [3, 6])
    def test_quadratic_voltage_scaling_exact(self, nen, rng):
        coords = random_triangle(rng, nen)
        phi = rng.standard_normal(nen)
        f1 = elec_force(coords, EPSILON_0, phi)
        f2 = elec_force(coords, EPSILON_0, 4.0 * phi)
        np.testing.assert_allclose(f2, 16.0 * f1, rtol=1e-14)

    @pytest.mark.parametrize("nen", [3, 6])
    def test_translation_invariance_exact(self, nen, rng):
        coords = random_triangle(rng, nen)
        phi = rng.standard_normal(nen)
        shift = np.array([123.4, -56.7])
        a = elec_element(coords, EPSILON_0, phi)
        b = elec_element(coords + shift, EPSILON_0, phi)
        assert b.energy == pytest.approx(a.energy, rel=1e-12)
        np.testing.assert_allclose(elec_force(coords + shift, EPSILON_0, phi),
                                   elec_force(coords, EPSILON_0, phi), rtol=1e-9)

    @pytest.mark.parametrize("nen", [3, 6])
    def test_coupled_tangent_vs_fd(self, nen, rng):
        for _ in range(4):
            coords = random_triangle(rng, nen)
            phi = rng.standard_normal(nen)
            kuu, kup = coupled_tangent(coords, 1.0, phi)
            fd_uu = fd_jacobian(
                lambda z: elec_force(z.reshape(nen, 2), 1.0, phi),
                coords.ravel(), 3e-6)
            fd_up = fd_jacobian(
                lambda z: elec_force(coords, 1.0, z), phi, 3e-6)
            assert rel_err(kuu, fd_uu) < 1e-5
            assert rel_err(kup, fd_up) < 1e-5
            assert np.abs(kuu - kuu.T).max() <= 1e-12 * max(np.abs(kuu).max(), 1e-30)
            # Mixed-partial symmetry: d(q)/dx must be the transpose of kup.
            fd_qx = fd_jacobian(
                lambda z: elec_element(z.reshape(nen, 2), 1.0, phi,
                                       want_tangent=False).q,
                coords.ravel(), 3e-6)
            assert rel_err(kup, fd_qx.T) < 1e-5

    def test_crushed_element_detected(self):
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, -0.1]])  # clockwise
        with pytest.raises(ElementInversionError):
            elec_element(coords, EPSILON_0, np.zeros(3))


def test_default_degree_table():
    assert default_degree(3, "mech") == 1
    assert default_degree(6, "mech") == 4
    assert default_degree(3, "elec") == 2
    assert default_degree(6, "elec") == 4
    with pytest.raises(ValueError):
        default_degree(4, "mech")


def test_electric_material_from_relative():
    assert ElectricMaterial.from_relative(2.0).eps == pytest.approx(2.0 * EPSILON_0)
