"""Timing comparison of the numpy and compiled element kernels.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Times raw batch kernel calls and a full coupled assembly at the production
mesh resolution, for every backend that imports.
"""

import time

import numpy as np

from memfem.assembly import BoundaryConditions, Problem
from memfem.elements import default_degree, shape_table
from memfem.kernels import get_backend
from memfem.materials import EPSILON_0, ElectricMaterial, MechanicalMaterial
from memfem.mesh import generate_beam_mesh
from memfem.quadrature import triangle_rule


def backends():
    out = [("python", get_backend("python"))]
    try:
        out.append(("cython", get_backend("cython")))
    except ImportError:
        pass
    return out


def timeit(fn, min_time=0.5):
    fn()                                     # warm up
    n, t0 = 0, time.perf_counter()
    while True:
        fn()
        n += 1
        dt = time.perf_counter() - t0
        if dt >= min_time:
            return dt / n


def bench_kernels(n_el=2000, nen=6):
    rng = np.random.default_rng(0)
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
                    [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])[:nen]
    coords = np.tile(ref, (n_el, 1, 1)) + rng.normal(0, 0.01, (n_el, nen, 2))
    eu = rng.normal(0, 0.01, (n_el, nen, 2))
    ephi = rng.normal(0, 10.0, (n_el, nen))
    cmat = MechanicalMaterial(169e9, 0.3).stiffness_voigt()

    rule_m = triangle_rule(default_degree(nen, "mech"))
    dn_m = shape_table(nen, rule_m)[1]
    rule_e = triangle_rule(default_degree(nen, "elec"))
    dn_e = shape_table(nen, rule_e)[1]

    print(f"\nraw kernels, {n_el} TRI{nen} elements, tangents on")
    for name, mod in backends():
        fout = np.empty((n_el, nen, 2))
        kout = np.empty((n_el, 2 * nen, 2 * nen))
        t_mech = timeit(lambda: mod.mech_batch(coords, eu, dn_m,
                                               rule_m.weights, cmat,
                                               fout, kout))
        qout = np.empty((n_el, nen))
        felc = np.empty((n_el, nen, 2))
        kpp = np.empty((n_el, nen, nen))
        kup = np.empty((n_el, 2 * nen, nen))
        kuu = np.empty((n_el, 2 * nen, 2 * nen))
        t_elec = timeit(lambda: mod.elec_batch(coords, ephi, dn_e,
                                               rule_e.weights, EPSILON_0,
                                               qout, felc, kpp, kup, kuu))
        print(f"  {name:<8} mech {1e3 * t_mech:8.3f} ms   "
              f"elec {1e3 * t_elec:8.3f} ms")


def bench_assembly():
    mesh = generate_beam_mesh(length=300e-6, thickness=0.5e-6, gap=6e-6,
                              nx=30, ny_beam=1, ny_gap=3,
                              electrode_length=60e-6,
                              electrode_centers=(150e-6,), order=2)
    mats = {"structure": MechanicalMaterial(169e9, 0.3, rho=2330.0),
            "vacuum": ElectricMaterial()}
    bcs = BoundaryConditions(
        clamps=[("clamp_left", "xy"), ("clamp_right", "xy"),
                ("substrate", "xy")],
        grounds=["beam_bottom"],
        electrodes=[("electrode_1", 1.0)])

    print("\nfull coupled assembly, production beam mesh "
          f"({mesh.n_elements} elements)")
    for name, _ in backends():
        prob = Problem(mesh, mats, bcs, backend=name)
        z = np.zeros(prob.dof.n_z)
        t = timeit(lambda: prob.assemble(z, voltage=20.0))
        print(f"  {name:<8} assemble+tangent {1e3 * t:8.3f} ms")


if __name__ == "__main__":
    bench_kernels()
    bench_assembly()
