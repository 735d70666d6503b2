"""memfem: 2D coupled electro-mechanical finite elements for MEMS actuators.

Simulates electrostatically actuated micro-structures (beams, mirrors, plates)
with a monolithic displacement/potential formulation: static pull-in via
arc-length continuation, transient and dynamic pull-in via implicit Newmark
integration, and coupled modal analysis. A closed-form lumped parallel-plate
model ships alongside as an independent reference.
"""

from memfem.materials import EPSILON_0, ElectricMaterial, MechanicalMaterial
from memfem.mesh import Mesh, elevate_order, generate_beam_mesh, load_mesh, write_mesh

__version__ = "0.1.0"

__all__ = [
    "EPSILON_0",
    "ElectricMaterial",
    "MechanicalMaterial",
    "Mesh",
    "elevate_order",
    "generate_beam_mesh",
    "load_mesh",
    "write_mesh",
    "__version__",
]
