import tempfile
import unittest
from pathlib import Path

import numpy as np

from tidalfarm.farm.density import (
    DensityError, DensityField, FarmRegion, InstallationConstraints, build_upper_bound, density_to_friction,
    export_density, import_density, rounded_count, turbine_count,
)
from tidalfarm.farm.functionals import ProfitFunctional, farm_force, farm_power, profit_objective, summary_block
from tidalfarm.farm.models import (
    EconomicParams, FarmError, TurbineSpec, cost_coefficient, effective_cost_coefficient,
)
from tidalfarm.mesh.generate import generate_rectangle
from tidalfarm.shallow_water.models import FlowState, PhysicalParams, Trajectory
from tidalfarm.shallow_water.spaces import function_spaces

FARM_BOX = (40.0, 20.0, 80.0, 60.0)


class TestEconomics(unittest.TestCase):

    def test_break_even_power(self):
        value = cost_coefficient(TurbineSpec(), EconomicParams(), 1000.0)
        self.assertAlmostEqual(value, 452388.96, delta=1e-12 * 452388.96)

    def test_sinusoidal_tide(self):
        econ = EconomicParams(profit_margin=0.73, peak_speed=3.5, tidal_factor=0.42)
        self.assertAlmostEqual(cost_coefficient(TurbineSpec(), econ, 1000.0) / 1e3, 458.2, delta=0.1)

    def test_given_and_power_mode(self):
        spec = TurbineSpec()
        self.assertEqual(effective_cost_coefficient(spec, EconomicParams(cost_coefficient=1e5), 1000.0), 1e5)
        self.assertEqual(effective_cost_coefficient(spec, EconomicParams(mode='power'), 1000.0), 0.0)

    def test_invalid_turbine(self):
        problems = TurbineSpec(min_distance=0.0).errors()
        self.assertIn("min_distance must be positive", problems)
        self.assertIn("thrust_coefficient must lie in (0, 1)", TurbineSpec(thrust_coefficient=1.2).errors())

    def test_max_density(self):
        self.assertAlmostEqual(TurbineSpec(min_distance=40.0).max_density, 1.0 / 1600.0)


class TestUpperBound(unittest.TestCase):

    def setUp(self):
        self.mesh = generate_rectangle(120.0, 80.0, 10.0, regions=[(1, FARM_BOX)])
        self.spec = TurbineSpec()
        x, y = self.mesh.vertices.T
        self.in_box = (x >= FARM_BOX[0]) & (x <= FARM_BOX[2]) & (y >= FARM_BOX[1]) & (y <= FARM_BOX[3])

    def test_farm_nodes(self):
        upper = build_upper_bound(self.mesh, [FarmRegion('farm', 1)], self.spec)
        np.testing.assert_allclose(upper.values[self.in_box], self.spec.max_density)
        np.testing.assert_array_equal(upper.values[~self.in_box], 0.0)
        self.assertEqual(upper.farm_names, ['farm'])
        np.testing.assert_array_equal(upper.farm_vertices['farm'], np.flatnonzero(self.in_box))

    def test_farm_cap(self):
        upper = build_upper_bound(self.mesh, [FarmRegion('farm', 1, max_density=1e-4)], self.spec)
        self.assertAlmostEqual(upper.values.max(), 1e-4)

    def test_exclusion_interface_rules(self):
        exclusion = (40.0, 20.0, 60.0, 60.0)
        excluded = build_upper_bound(self.mesh, [FarmRegion('farm', 1)], self.spec,
                                     InstallationConstraints(exclusions=(exclusion,)))
        included = build_upper_bound(self.mesh, [FarmRegion('farm', 1)], self.spec,
                                     InstallationConstraints(exclusions=(exclusion,), interface='include'))
        x = self.mesh.vertices[:, 0]
        seam = self.in_box & (x == 60.0)
        self.assertTrue(np.all(excluded.values[seam] == 0.0))
        self.assertTrue(np.all(included.values[seam] > 0.0))
        self.assertTrue(np.all(excluded.values[self.in_box & (x < 60.0)] == 0.0))
        self.assertTrue(np.all(excluded.values[self.in_box & (x > 60.0)] > 0.0))

    def test_missing_label(self):
        with self.assertRaises(FarmError):
            build_upper_bound(self.mesh, [FarmRegion('farm', 2)], self.spec)

    def test_shared_nodes_belong_to_first_farm(self):
        mesh = generate_rectangle(120.0, 80.0, 10.0, regions=[(1, (20.0, 20.0, 60.0, 60.0)),
                                                              (2, (60.0, 20.0, 100.0, 60.0))])
        upper = build_upper_bound(mesh, [FarmRegion('a', 1), FarmRegion('b', 2)], self.spec)
        a, b = upper.farm_vertices['a'], upper.farm_vertices['b']
        self.assertEqual(np.intersect1d(a, b).size, 0)
        self.assertTrue(np.all(mesh.vertices[a, 0] <= 60.0))
        self.assertTrue(np.all(mesh.vertices[b, 0] > 60.0))


class TestDensityField(unittest.TestCase):

    def setUp(self):
        self.mesh = generate_rectangle(200.0, 40.0, 10.0)
        self.upper = np.full(self.mesh.num_vertices, 1.0 / 1600.0)

    def test_turbine_count(self):
        density = DensityField(self.mesh, self.upper, self.upper)
        self.assertAlmostEqual(turbine_count(density), 5.0)
        self.assertEqual(rounded_count(4.5), 5)
        self.assertEqual(rounded_count(4.49), 4)

    def test_bounds_enforced(self):
        with self.assertRaises(DensityError):
            DensityField(self.mesh, 2.0 * self.upper, self.upper)
        with self.assertRaises(DensityError):
            DensityField(self.mesh, -self.upper, self.upper)
        clipped = DensityField.projected(self.mesh, 2.0 * self.upper, self.upper)
        np.testing.assert_array_equal(clipped.values, self.upper)

    def test_friction(self):
        density = DensityField.fraction_of_upper(self.mesh, self.upper, 0.5)
        friction = density_to_friction(density, TurbineSpec())
        np.testing.assert_allclose(friction, 0.5 * 0.6 * 314.159 * 0.5 / 1600.0)

    def test_table(self):
        density = DensityField.fraction_of_upper(self.mesh, self.upper, 0.25)
        with tempfile.TemporaryDirectory() as tmp:
            path = export_density(density, Path(tmp) / 'density.txt')
            again = import_density(self.mesh, path)
            other = generate_rectangle(200.0, 40.0, 20.0)
            with self.assertRaises(DensityError):
                import_density(other, path)
        np.testing.assert_array_equal(again.values, density.values)
        np.testing.assert_array_equal(again.upper, density.upper)


class TestProfitFunctional(unittest.TestCase):

    def setUp(self):
        self.mesh = generate_rectangle(200.0, 40.0, 10.0)
        spaces = function_spaces(self.mesh)
        self.state = FlowState(np.full(spaces.n2, 2.0), np.zeros(spaces.n2), np.zeros(spaces.n1))
        self.upper = np.full(self.mesh.num_vertices, 1.0 / 1600.0)
        self.spec = TurbineSpec()
        self.physical = PhysicalParams(depth=50.0)

    def test_power_and_force_of_uniform_flow(self):
        friction = np.full(self.mesh.num_vertices, 0.01)
        area = 200.0 * 40.0
        self.assertAlmostEqual(farm_power(self.mesh, self.state, friction) / (1000.0 * 0.01 * 8.0 * area), 1.0,
                               places=9)
        force = farm_force(self.mesh, self.state, friction)
        self.assertAlmostEqual(force[0] / (1000.0 * 0.01 * 4.0 * area), 1.0, places=9)
        self.assertAlmostEqual(force[1], 0.0)

    def test_breakdown(self):
        functional = ProfitFunctional(self.mesh, self.spec, EconomicParams(), self.physical)
        density = DensityField(self.mesh, self.upper, self.upper)
        breakdown = functional.evaluate(Trajectory((self.state,)), density)
        self.assertAlmostEqual(breakdown.turbines, 5.0)
        self.assertEqual(breakdown.rounded_turbines, 5)
        self.assertAlmostEqual(breakdown.cost, 5.0 * functional.cost_coefficient, places=6)
        self.assertAlmostEqual(breakdown.objective, breakdown.power - breakdown.cost, places=6)
        self.assertIn('turbines_rounded = 5', summary_block(breakdown))
        self.assertEqual(profit_objective(self.mesh, Trajectory((self.state,)), density, self.spec, EconomicParams(),
                                          self.physical), breakdown.objective)

    def test_density_derivative_is_linear_part(self):
        functional = ProfitFunctional(self.mesh, self.spec, EconomicParams(), self.physical)
        trajectory = Trajectory((self.state,))
        base = DensityField.fraction_of_upper(self.mesh, self.upper, 0.5)
        direction = np.linspace(0.0, 1.0, self.mesh.num_vertices) * 1e-4
        shifted = base.with_values(base.values + direction)
        change = functional.evaluate(trajectory, shifted).objective - functional.evaluate(trajectory, base).objective
        self.assertAlmostEqual(change / (functional.density_derivative(trajectory) @ direction), 1.0, places=8)


if __name__ == '__main__':
    unittest.main()
