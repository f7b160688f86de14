import tempfile
import unittest
from pathlib import Path

import toml

from tidalfarm.config.manager import ConfigError, ConfigManager, deep_merge
from tidalfarm.config.scenario import ScenarioError, load_scenario, scenario_directory, validate_scenario
from tests.helpers import SMALL_SCENARIO, write_scenario


class TestConfigManager(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = write_scenario(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_defaults_only(self):
        config = ConfigManager()
        self.assertEqual(config.get('physics.gravity'), 9.81)
        self.assertEqual(config.get('simulation.mode'), 'steady')
        self.assertIsNone(config.get('physics.missing'))
        self.assertEqual(config.get('physics.missing', 3), 3)

    def test_scenario_over_defaults(self):
        config = ConfigManager(self.path)
        self.assertEqual(config.get('mesh.width'), 600.0)
        self.assertEqual(config.get('mesh.grading'), 1.2)
        self.assertEqual(config.get('physics.viscosity'), 2.0)

    def test_set_and_update(self):
        config = ConfigManager(self.path)
        config.set('simulation.mode', 'transient')
        config.update({'optimizer': {'max_iter': 7}})
        self.assertEqual(config.get('simulation.mode'), 'transient')
        self.assertEqual(config.get('optimizer.max_iter'), 7)
        self.assertEqual(config.get('optimizer.memory'), 10)

    def test_entries_merge_templates(self):
        config = ConfigManager(self.path)
        farms = config.entries('farms')
        self.assertEqual(list(farms), ['farms[0]'])
        self.assertEqual(farms['farms[0]']['max_density'], -1.0)
        self.assertEqual(config.entries('boundaries')['north']['kind'], 'free_slip')

    def test_unknown_keys(self):
        text = SMALL_SCENARIO.replace('coarse_size = 50.0', 'coarse_size = 50.0\ncoarse = 3')
        text += '\n[extra]\nflag = true\n'
        text = text.replace('label = 1\n', 'label = 1\ncolour = "red"\n')
        config = ConfigManager(write_scenario(self.tmp.name, text, 'unknown.toml'))
        self.assertEqual(sorted(config.unknown_keys()), ['extra', 'farms[0].colour', 'mesh.coarse'])

    def test_parse_error_has_line(self):
        path = write_scenario(self.tmp.name, 'name = "x"\n[mesh\nwidth = 1\n', 'broken.toml')
        with self.assertRaises(ConfigError) as ctx:
            ConfigManager(path)
        self.assertIn('line', str(ctx.exception))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            ConfigManager(Path(self.tmp.name) / 'absent.toml')

    def test_deep_merge(self):
        base = {'a': {'b': 1, 'c': 2}, 'd': [1]}
        merged = deep_merge(base, {'a': {'b': 5}, 'd': [2, 3]})
        self.assertEqual(merged, {'a': {'b': 5, 'c': 2}, 'd': [2, 3]})
        self.assertEqual(base['a']['b'], 1)


class TestScenario(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def problems(self, text):
        return validate_scenario(write_scenario(self.tmp.name, text, 'case.toml'))

    def test_shipped_scenarios_are_valid(self):
        paths = sorted(scenario_directory().glob('*.toml'))
        self.assertGreaterEqual(len(paths), 4)
        for path in paths:
            self.assertEqual(validate_scenario(path), [], path.name)

    def test_small_scenario(self):
        scenario = load_scenario(write_scenario(self.tmp.name))
        self.assertEqual(scenario.name, 'small_channel')
        self.assertTrue(scenario.simulation.is_steady)
        self.assertIsNone(scenario.economics.cost_coefficient)
        self.assertIsNone(scenario.layout.count)
        self.assertEqual(set(scenario.mesh.tag_names), {'west', 'east', 'north', 'south'})
        self.assertEqual([farm.name for farm in scenario.farms], ['farm'])
        upper = scenario.upper_bound()
        self.assertAlmostEqual(upper.values.max(), scenario.turbine.max_density)

    def test_overrides(self):
        scenario = load_scenario(write_scenario(self.tmp.name), {'simulation.mode': 'transient',
                                                                 'layout.seed': 4})
        self.assertFalse(scenario.simulation.is_steady)
        self.assertEqual(scenario.simulation.stepping.num_steps, 6)
        self.assertEqual(scenario.layout.seed, 4)

    def test_min_distance(self):
        problems = self.problems(SMALL_SCENARIO + '\n[turbine]\nmin_distance = 0.0\n')
        self.assertIn('turbine.min_distance: min_distance must be positive', problems)

    def test_newton_globalization_settings(self):
        problems = self.problems(SMALL_SCENARIO + '\n[solver]\nmin_step = 2.0\ncontinuation_levels = -1\n')
        self.assertIn('solver.min_step: min_step must lie in (0, damping]', problems)
        self.assertIn('solver.continuation_levels: continuation_levels must be non-negative', problems)
        scenario = load_scenario(write_scenario(self.tmp.name))
        self.assertEqual(scenario.solver.min_step, 1.0 / 1024)
        self.assertEqual(scenario.solver.continuation_levels, 4)

    def test_fine_box_outside_domain(self):
        problems = self.problems(SMALL_SCENARIO.replace('fine_box = [250.0, 50.0, 350.0, 150.0]',
                                                        'fine_box = [250.0, 50.0, 350.0, 450.0]'))
        self.assertEqual(len(problems), 1)
        self.assertTrue(problems[0].startswith('mesh.fine_box:'), problems[0])

    def test_unknown_key_reported(self):
        problems = self.problems(SMALL_SCENARIO.replace('viscosity = 2.0', 'viscosity = 2.0\nviscocity = 1.0'))
        self.assertEqual(problems, ['physics.viscocity: unknown key'])

    def test_wrong_types(self):
        problems = self.problems(SMALL_SCENARIO.replace('width = 600.0', 'width = "wide"'))
        self.assertTrue(any(p.startswith('mesh.width: expected a number') for p in problems), problems)

    def test_missing_boundary(self):
        text = SMALL_SCENARIO.replace('[boundaries.north]\nkind = "free_slip"\n', '')
        self.assertIn('boundary.north: mesh tag has no prescription', self.problems(text))

    def test_farm_label_without_triangles(self):
        text = SMALL_SCENARIO.replace('label = 1\nbox = [250.0, 50.0, 350.0, 150.0]\n', 'label = 2\n')
        self.assertIn('farms.farm: no triangle carries region label 2', self.problems(text))

    def test_format_header(self):
        problems = self.problems(SMALL_SCENARIO.replace('version = 1', 'version = 2'))
        self.assertTrue(problems[0].startswith('version:'))

    def test_load_raises(self):
        with self.assertRaises(ScenarioError) as ctx:
            load_scenario(write_scenario(self.tmp.name, SMALL_SCENARIO + '\n[economics]\nprofit_margin = 1.5\n'))
        self.assertEqual(ctx.exception.code, 'config.validation')
        self.assertIn('economics.profit_margin: profit_margin must lie in [0, 1)', ctx.exception.problems)

    def test_resolved_copy(self):
        scenario = load_scenario(write_scenario(self.tmp.name))
        path = scenario.save(Path(self.tmp.name) / 'out' / 'scenario.resolved.toml')
        resolved = toml.load(path)
        self.assertEqual(resolved['name'], 'small_channel')
        self.assertEqual(resolved['farms'][0]['max_density'], -1.0)
        self.assertEqual(resolved['boundaries']['west']['kind'], 'velocity_dirichlet')
        self.assertEqual(validate_scenario(path), [])


if __name__ == '__main__':
    unittest.main()
