import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
from scipy.stats import chisquare

from tidalfarm.config.scenario import load_scenario, scenario_directory
from tidalfarm.farm.density import DensityField
from tidalfarm.farm.models import TurbineSpec
from tidalfarm.layout.bumps import (
    BumpFarm, ResolutionError, bump_profile, check_resolution, evaluate_discrete_layout, evaluation_mesh,
)
from tidalfarm.layout.conversion import (
    LayoutError, PackingError, TurbineLayout, convert_density, read_layout, write_layout,
)
from tidalfarm.mesh.generate import generate_rectangle
from tidalfarm.optimization.design import run_design_optimization
from tests.helpers import write_scenario

SLOW = os.environ.get('TIDALFARM_SLOW_TESTS')


class TestConvertDensity(unittest.TestCase):

    def setUp(self):
        self.mesh = generate_rectangle(200.0, 40.0, 10.0)
        self.spec = TurbineSpec(min_distance=40.0)
        self.upper = np.full(self.mesh.num_vertices, self.spec.max_density)
        self.density = DensityField(self.mesh, self.upper, self.upper)

    def test_strip_packing(self):
        layout = convert_density(self.density, self.spec, seed=0)
        self.assertEqual(len(layout), 5)
        self.assertGreaterEqual(layout.min_spacing(), 40.0)
        self.assertTrue(np.all(layout.positions >= 0.0))
        self.assertTrue(np.all(layout.positions <= [200.0, 40.0]))

    def test_seeded(self):
        first = convert_density(self.density, self.spec, seed=7, count=3)
        again = convert_density(self.density, self.spec, seed=7, count=3)
        other = convert_density(self.density, self.spec, seed=8, count=3)
        np.testing.assert_array_equal(first.positions, again.positions)
        self.assertFalse(np.array_equal(first.positions, other.positions))
        self.assertEqual(first.seed, 7)

    def test_zero_density(self):
        density = DensityField(self.mesh, np.zeros(self.mesh.num_vertices), self.upper)
        layout = convert_density(density, self.spec)
        self.assertEqual(len(layout), 0)
        self.assertEqual(layout.min_spacing(), float('inf'))

    def test_vanishing_density_with_count(self):
        density = DensityField(self.mesh, np.zeros(self.mesh.num_vertices), self.upper)
        with self.assertRaises(PackingError):
            convert_density(density, self.spec, count=2)

    def test_budget_exhausted(self):
        with self.assertRaises(PackingError) as ctx:
            convert_density(self.density, self.spec, count=5, max_attempts=1)
        self.assertEqual(ctx.exception.requested, 5)
        self.assertLessEqual(ctx.exception.placed, 1)

    def test_overfull_request(self):
        with self.assertRaises(PackingError):
            convert_density(self.density, self.spec, count=40, max_attempts=20000)

    def test_negative_count(self):
        with self.assertRaises(LayoutError):
            convert_density(self.density, self.spec, count=-1)

    def test_equal_patches_share_turbines_equally(self):
        mesh = generate_rectangle(300.0, 40.0, 10.0)
        spec = TurbineSpec(min_distance=1.0)
        x = mesh.vertices[:, 0]
        values = np.where((x < 100.5) | (x > 199.5), 1.0, 0.0)
        density = DensityField(mesh, values, np.ones(mesh.num_vertices))
        left = []
        for seed in range(1000):
            layout = convert_density(density, spec, seed=seed, count=20)
            self.assertGreaterEqual(layout.min_spacing(), 1.0)
            self.assertFalse(np.any((layout.positions[:, 0] > 110.0) & (layout.positions[:, 0] < 190.0)))
            left.append(int(np.sum(layout.positions[:, 0] < 150.0)))
        self.assertAlmostEqual(np.mean(left) / 10.0, 1.0, delta=0.05)

    def test_positions_follow_the_density(self):
        mesh = generate_rectangle(300.0, 40.0, 10.0)
        spec = TurbineSpec(min_distance=0.5)
        x = mesh.vertices[:, 0]
        values = 0.2 + 0.8 * x / 300.0
        density = DensityField(mesh, values, np.ones(mesh.num_vertices))
        edges = np.linspace(0.0, 300.0, 5)
        observed = np.zeros(4)
        for seed in range(1000):
            layout = convert_density(density, spec, seed=seed, count=20)
            observed += np.histogram(layout.positions[:, 0], edges)[0]
        # Integral of the density over each 75 m bin, 180 in total.
        expected = observed.sum() * np.array([22.5, 37.5, 52.5, 67.5]) / 180.0
        self.assertGreater(chisquare(observed, expected).pvalue, 0.01)

    def test_layout_file(self):
        layout = convert_density(self.density, self.spec, seed=3, count=4)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_layout(layout, Path(tmp) / 'layout.txt')
            text = path.read_text()
            again = read_layout(path, self.spec)
        self.assertIn('seed=3 N=4', text)
        self.assertEqual(again.seed, 3)
        np.testing.assert_array_equal(again.positions, layout.positions)


class TestBumps(unittest.TestCase):

    def setUp(self):
        self.spec = TurbineSpec(diameter=20.0)
        self.layout = TurbineLayout([[50.0, 20.0], [150.0, 20.0]], self.spec)

    def test_profile(self):
        np.testing.assert_allclose(bump_profile(np.array([0.0, 1.0, 1.5])), [1.0, 0.0, 0.0])
        self.assertTrue(0.0 < bump_profile(np.array([0.5]))[0] < 1.0)

    def test_matching_amplitude(self):
        mesh = generate_rectangle(200.0, 40.0, 2.5)
        total = 2.0 * self.spec.friction_per_density
        bumps = BumpFarm.matching(mesh, self.layout, total)
        self.assertAlmostEqual(bumps.integrated_friction() / total, 1.0, places=12)
        far = np.abs(mesh.vertices[:, 0] - 100.0) < 30.0
        self.assertTrue(np.all(bumps.friction()[far] == 0.0))

    def test_resolution(self):
        check_resolution(generate_rectangle(200.0, 40.0, 5.0), self.layout)
        with self.assertRaises(ResolutionError):
            check_resolution(generate_rectangle(200.0, 40.0, 10.0), self.layout)


class TestDiscreteEvaluation(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.scenario = load_scenario(write_scenario(self.tmp.name))

    def tearDown(self):
        self.tmp.cleanup()

    def test_evaluation_mesh_resolves_turbines(self):
        layout = TurbineLayout([[280.0, 80.0], [320.0, 120.0]], self.scenario.turbine)
        mesh = evaluation_mesh(self.scenario, layout)
        check_resolution(mesh, layout)
        self.assertTrue(np.any(mesh.region_id == 1))

    def test_bump_farm_power(self):
        layout = TurbineLayout([[280.0, 80.0], [320.0, 120.0]], self.scenario.turbine)
        evaluation = evaluate_discrete_layout(layout, self.scenario, continuous_power=1.0)
        self.assertGreater(evaluation.power, 0.0)
        self.assertTrue(evaluation.state.is_finite())
        self.assertAlmostEqual(evaluation.bumps.integrated_friction() / (2 * self.scenario.turbine.friction_per_density),
                               1.0, places=10)
        self.assertEqual(evaluation.ratio, evaluation.power)


@unittest.skipUnless(SLOW, "set TIDALFARM_SLOW_TESTS=1 to run")
class TestIdealizedFarm(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.scenario = load_scenario(scenario_directory() / 'idealized_channel.toml')
        cls.result = run_design_optimization(cls.scenario)

    def test_optimal_farm(self):
        breakdown = self.result.breakdown
        self.assertAlmostEqual(breakdown.objective / 20.39e6, 1.0, delta=0.2)
        self.assertAlmostEqual(breakdown.power / 89.21e6, 1.0, delta=0.15)
        self.assertAlmostEqual(breakdown.turbines / 152.0, 1.0, delta=0.2)

    def test_converted_layout_keeps_the_power(self):
        density = self.result.density
        layout = convert_density(density, self.scenario.turbine, seed=self.scenario.layout.seed)
        self.assertEqual(len(layout), self.result.breakdown.rounded_turbines)
        self.assertGreaterEqual(layout.min_spacing(), self.scenario.turbine.min_distance)
        evaluation = evaluate_discrete_layout(layout, self.scenario, density=density,
                                              continuous_power=self.result.breakdown.power)
        self.assertAlmostEqual(evaluation.ratio, 1.0, delta=0.15)


if __name__ == '__main__':
    unittest.main()
