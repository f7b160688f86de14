"""Small channel setups shared by the test modules."""
from pathlib import Path

from tidalfarm.farm.density import FarmRegion, build_upper_bound
from tidalfarm.farm.functionals import ProfitFunctional
from tidalfarm.farm.models import EconomicParams, TurbineSpec
from tidalfarm.mesh.generate import generate_rectangle
from tidalfarm.optimization.design import ReducedFunctional
from tidalfarm.shallow_water.models import BoundaryCondition, PhysicalParams
from tidalfarm.shallow_water.solver import ShallowWaterSolver

FARM_BOX = (250.0, 50.0, 350.0, 150.0)

CHANNEL_BCS = {
    'west': BoundaryCondition.velocity((2.0, 0.0)),
    'east': BoundaryCondition.elevation(0.0),
    'north': BoundaryCondition.free_slip(),
    'south': BoundaryCondition.free_slip(),
}

SMALL_SCENARIO = """\
format = "tidalfarm-scenario"
version = 1
name = "small_channel"

[mesh]
width = 600.0
height = 200.0
coarse_size = 50.0
fine_box = [250.0, 50.0, 350.0, 150.0]
fine_size = 25.0

[physics]
viscosity = 2.0

[boundaries.west]
kind = "velocity_dirichlet"
value = [2.0, 0.0]

[boundaries.east]
kind = "eta_dirichlet"
value = [0.0]

[boundaries.north]
kind = "free_slip"

[boundaries.south]
kind = "free_slip"

[[farms]]
name = "farm"
label = 1
box = [250.0, 50.0, 350.0, 150.0]

[optimizer]
max_iter = 3

[layout]
evaluation_fine_size = 5.0
"""


def small_problem(simulation=None, physical=None, econ=None, size=25.0):
    """Reduced profit functional of a 600 m x 200 m channel with one 100 m farm."""
    mesh = generate_rectangle(600.0, 200.0, size, regions=[(1, FARM_BOX)])
    physical = physical or PhysicalParams(viscosity=2.0, depth=50.0)
    spec = TurbineSpec()
    upper = build_upper_bound(mesh, [FarmRegion('farm', 1)], spec).values
    solver = ShallowWaterSolver(mesh, physical, CHANNEL_BCS, warm_start=True)
    functional = ProfitFunctional(mesh, spec, econ or EconomicParams(), physical)
    return ReducedFunctional(solver, functional, upper, simulation), upper


def write_scenario(directory, text: str = SMALL_SCENARIO, name: str = 'scenario.toml') -> Path:
    path = Path(directory) / name
    path.write_text(text)
    return path
