import os
import unittest

import numpy as np

from tidalfarm.config.scenario import load_scenario, scenario_directory
from tidalfarm.farm.density import density_to_friction
from tidalfarm.farm.functionals import farm_power
from tidalfarm.mesh.generate import generate_rectangle
from tidalfarm.shallow_water.assembly import assemble_residual_and_jacobian
from tidalfarm.shallow_water.models import (
    BoundaryCondition, FlowState, ParameterError, PhysicalParams, SolverSettings, TimeSteppingParams,
    Trajectory, time_weights,
)
from tidalfarm.shallow_water.solver import (
    DivergenceError, ShallowWaterSolver, TrajectoryStorageError, channel_oracle, continuation_viscosities,
    kinetic_energy, newton, solve_steady, solve_transient, speed_at,
)
from tidalfarm.shallow_water.spaces import function_spaces

SLOW = os.environ.get('TIDALFARM_SLOW_TESTS')

LENGTH, WIDTH, DEPTH = 1000.0, 200.0, 50.0


def channel(inflow=(1.0, 0.0), amplitude=(0.0, 0.0), period=0.0):
    return {
        'west': BoundaryCondition.velocity(inflow, amplitude, period),
        'east': BoundaryCondition.elevation(0.0),
        'north': BoundaryCondition.free_slip(),
        'south': BoundaryCondition.free_slip(),
    }


class TestSteadyChannel(unittest.TestCase):

    def setUp(self):
        self.mesh = generate_rectangle(LENGTH, WIDTH, 50.0)
        self.physical = PhysicalParams(viscosity=1.0, depth=DEPTH)
        self.solver = ShallowWaterSolver(self.mesh, self.physical, channel())

    def test_uniform_speed(self):
        state = self.solver.steady()
        nv = self.mesh.num_vertices
        speed = np.hypot(state.ux[:nv], state.uy[:nv])
        np.testing.assert_allclose(speed, 1.0, rtol=0.02)
        np.testing.assert_allclose(speed_at(self.mesh, state, [[500.0, 100.0], [730.0, 35.0]]), 1.0, rtol=0.02)
        self.assertTrue(state.is_finite())

    def test_uniform_speed_on_p2_nodes(self):
        state = self.solver.steady()
        coordinates = function_spaces(self.mesh).p2_coordinates
        self.assertEqual(coordinates.shape, (state.ux.size, 2))
        i, j = self.mesh.edges[0]
        np.testing.assert_allclose(coordinates[self.mesh.num_vertices],
                                   0.5 * (self.mesh.vertices[i] + self.mesh.vertices[j]))
        np.testing.assert_allclose(np.hypot(state.ux, state.uy), 1.0, rtol=0.02)

    def test_fluxes_balance(self):
        state = self.solver.steady()
        fluxes = self.solver.boundary_fluxes(None, state)
        self.assertEqual(fluxes['north'], 0.0)
        self.assertEqual(fluxes['south'], 0.0)
        self.assertAlmostEqual(fluxes['west'] / (-DEPTH * WIDTH), 1.0, delta=0.01)
        self.assertLess(abs(fluxes['west'] + fluxes['east']), 1e-6 * abs(fluxes['west']))

    def test_head_loss_matches_channel_profile(self):
        state = self.solver.steady()
        inlet = self.mesh.vertices_with_tag('west')
        profile = channel_oracle(LENGTH, DEPTH, 1.0, self.physical.background_friction,
                                 self.physical.gravity)
        self.assertGreater(state.eta[inlet].mean(), 0.0)
        self.assertAlmostEqual(state.eta[inlet].mean() / profile.eta_at(0.0), 1.0, delta=0.1)

    def test_turbine_friction_raises_head_loss(self):
        inlet = self.mesh.vertices_with_tag('west')
        free = self.solver.steady()
        friction = np.where(np.abs(self.mesh.vertices[:, 0] - 500.0) <= 100.0, 0.05, 0.0)
        loaded = self.solver.steady(friction)
        self.assertGreater(loaded.eta[inlet].mean(), free.eta[inlet].mean())

    def test_still_water(self):
        solver = ShallowWaterSolver(self.mesh, self.physical, channel(inflow=(0.0, 0.0)))
        state = solver.steady()
        self.assertEqual(np.abs(state.vector).max(), 0.0)

    def test_module_functions(self):
        state = solve_steady(self.mesh, self.physical, channel())
        np.testing.assert_allclose(state.vector, self.solver.steady().vector, rtol=0.0, atol=1e-12)
        form = self.solver.form()
        residual, jacobian = assemble_residual_and_jacobian(form, state)
        rest_residual, _ = assemble_residual_and_jacobian(form, self.solver.rest_state())
        self.assertLess(np.linalg.norm(residual), 1e-6 * np.linalg.norm(rest_residual))
        self.assertEqual(jacobian.shape, (state.vector.size, state.vector.size))

    def test_centreline_speed_matches_channel_profile(self):
        state = self.solver.steady()
        profile = channel_oracle(LENGTH, DEPTH, 1.0, self.physical.background_friction, self.physical.gravity)
        x = np.linspace(50.0, 950.0, 19)
        points = np.column_stack([x, np.full_like(x, 0.5 * WIDTH)])
        np.testing.assert_allclose(speed_at(self.mesh, state, points), profile.speed_at(x), rtol=0.05)

    def test_nested_friction_lowers_kinetic_energy(self):
        bump = np.exp(-((self.mesh.vertices[:, 0] - 500.0) / 100.0) ** 2)
        energies = [kinetic_energy(self.mesh, self.physical, self.solver.steady(c * bump))
                    for c in (0.0, 0.02, 0.05)]
        self.assertLess(energies[1], energies[0])
        self.assertLess(energies[2], energies[1])

    def test_mirror_symmetry(self):
        x, y = self.mesh.vertices[:, 0], self.mesh.vertices[:, 1]
        friction = 0.05 * np.exp(-((x - 500.0) / 100.0) ** 2 - ((y - 0.5 * WIDTH) / 50.0) ** 2)
        state = self.solver.steady(friction)
        index = {(round(a, 6), round(b, 6)): i for i, (a, b) in enumerate(self.mesh.vertices.tolist())}
        mirror = np.array([index[(round(a, 6), round(WIDTH - b, 6))] for a, b in self.mesh.vertices.tolist()])
        nv = self.mesh.num_vertices
        speed = np.hypot(state.ux[:nv], state.uy[:nv])
        self.assertLessEqual(np.abs(speed - speed[mirror]).max(), 1e-8 * speed.max())
        self.assertLessEqual(np.abs(state.uy[:nv] + state.uy[:nv][mirror]).max(), 1e-8 * speed.max())

    def test_plain_newton_fails_from_rest(self):
        settings = SolverSettings(min_step=1.0, continuation_levels=0)
        form = ShallowWaterSolver(self.mesh, self.physical, channel(), settings).form()
        with self.assertRaises(DivergenceError) as ctx:
            newton(form, np.zeros(form.spaces.size), 0.0)
        self.assertTrue(np.isfinite(ctx.exception.residual_norm))

    def test_continuation_recovers_plain_newton(self):
        settings = SolverSettings(min_step=1.0, continuation_viscosity=5.0)
        state = ShallowWaterSolver(self.mesh, self.physical, channel(), settings).steady()
        np.testing.assert_allclose(state.vector, self.solver.steady().vector, rtol=0.0, atol=1e-6)

    def test_continuation_levels(self):
        np.testing.assert_allclose(continuation_viscosities(1.0, SolverSettings(continuation_viscosity=16.0)),
                                   [16.0, 8.0, 4.0, 2.0])
        np.testing.assert_allclose(continuation_viscosities(0.0, SolverSettings()), [10.0, 7.5, 5.0, 2.5])
        self.assertEqual(continuation_viscosities(20.0, SolverSettings()).size, 0)
        self.assertEqual(continuation_viscosities(1.0, SolverSettings(continuation_levels=0)).size, 0)

    def test_kinetic_energy_of_uniform_flow(self):
        state = self.solver.steady()
        expected = 0.5 * self.physical.density * DEPTH * LENGTH * WIDTH
        self.assertAlmostEqual(kinetic_energy(self.mesh, self.physical, state) / expected, 1.0, delta=0.05)

    def test_negative_friction_rejected(self):
        friction = np.full(self.mesh.num_vertices, -1.0)
        with self.assertRaises(ParameterError):
            self.solver.steady(friction)

    def test_missing_boundary_prescription(self):
        bcs = channel()
        del bcs['north']
        with self.assertRaises(ParameterError):
            ShallowWaterSolver(self.mesh, self.physical, bcs)


class TestTransientChannel(unittest.TestCase):

    def setUp(self):
        self.mesh = generate_rectangle(LENGTH, WIDTH, 100.0)
        self.physical = PhysicalParams(viscosity=1.0, depth=DEPTH)
        self.stepping = TimeSteppingParams(600.0, 0.0, 1800.0)

    def test_trajectory_from_rest(self):
        solver = ShallowWaterSolver(self.mesh, self.physical, channel((1.0, 0.0), (0.5, 0.0), 44712.0))
        trajectory = solver.transient(None, self.stepping, 'rest')
        self.assertEqual(len(trajectory), 4)
        self.assertFalse(trajectory.initial_is_steady)
        self.assertEqual(trajectory.dt, 600.0)
        np.testing.assert_allclose(trajectory.times, [0.0, 600.0, 1200.0, 1800.0])
        self.assertEqual(np.abs(trajectory[0].vector).max(), 0.0)
        for state in trajectory:
            self.assertTrue(state.is_finite())
        self.assertGreater(np.abs(trajectory.final.ux).max(), 0.5)

    def test_module_function(self):
        trajectory = solve_transient(self.mesh, self.physical, channel(), None, self.stepping, 'rest')
        self.assertEqual(len(trajectory), 4)
        self.assertTrue(trajectory.final.is_finite())

    def test_steady_start(self):
        solver = ShallowWaterSolver(self.mesh, self.physical, channel())
        trajectory = solver.transient(None, self.stepping, 'steady')
        self.assertTrue(trajectory.initial_is_steady)
        np.testing.assert_allclose(trajectory.final.vector, trajectory[0].vector, atol=1e-6)

    def test_storage_cap(self):
        solver = ShallowWaterSolver(self.mesh, self.physical, channel(), SolverSettings(max_states=3))
        with self.assertRaises(TrajectoryStorageError):
            solver.transient(None, self.stepping, 'rest')

    def test_uneven_stepping_rejected(self):
        solver = ShallowWaterSolver(self.mesh, self.physical, channel())
        with self.assertRaises(ParameterError):
            solver.transient(None, TimeSteppingParams(700.0, 0.0, 1800.0))

    @unittest.skipUnless(SLOW, "set TIDALFARM_SLOW_TESTS=1 to run")
    def test_tidal_cycle(self):
        solver = ShallowWaterSolver(self.mesh, self.physical, channel((1.5, 0.0), (0.5, 0.0), 44712.0))
        trajectory = solver.transient(None, TimeSteppingParams(600.0, 0.0, 44400.0), 'steady')
        self.assertEqual(len(trajectory), 75)
        self.assertTrue(all(state.is_finite() for state in trajectory))


class TestJacobian(unittest.TestCase):

    def setUp(self):
        self.mesh = generate_rectangle(600.0, 200.0, 50.0)
        self.solver = ShallowWaterSolver(self.mesh, PhysicalParams(viscosity=2.0, depth=DEPTH), channel())
        x, y = self.mesh.vertices[:, 0], self.mesh.vertices[:, 1]
        self.friction = 0.05 * np.exp(-((x - 300.0) / 80.0) ** 2 - ((y - 100.0) / 60.0) ** 2)
        rng = np.random.default_rng(5)
        state = self.solver.steady(self.friction)
        self.vector = state.vector + 1e-2 * rng.standard_normal(state.vector.size)
        self.direction = rng.standard_normal(state.vector.size)

    def check(self, form, previous=None):
        def residual(v):
            return form.assemble(v, previous, 0.0, want_jacobian=False)[0]

        _, jacobian = form.assemble(self.vector, previous, 0.0)
        h = 1e-6
        difference = (residual(self.vector + h * self.direction)
                      - residual(self.vector - h * self.direction)) / (2 * h)
        product = jacobian @ self.direction
        self.assertLessEqual(np.linalg.norm(product - difference), 1e-6 * np.linalg.norm(product))

    def test_steady(self):
        self.check(self.solver.form(self.friction))

    def test_backward_euler_step(self):
        self.check(self.solver.form(self.friction, 60.0), previous=self.vector - 0.05 * self.direction)

    def test_finite_at_rest(self):
        residual, jacobian = self.solver.form(self.friction).assemble(np.zeros(self.vector.size))
        self.assertTrue(np.all(np.isfinite(residual)))
        self.assertTrue(np.all(np.isfinite(jacobian.data)))


class TestSeiche(unittest.TestCase):

    def test_period(self):
        basin, depth, amplitude = 1000.0, 50.0, 0.01
        mesh = generate_rectangle(basin, 100.0, 50.0)
        closed = {tag: BoundaryCondition.free_slip() for tag in ('west', 'east', 'north', 'south')}
        physical = PhysicalParams(viscosity=0.0, background_friction=0.0, depth=depth)
        solver = ShallowWaterSolver(mesh, physical, closed)
        rest = solver.rest_state()
        initial = FlowState(rest.ux, rest.uy, amplitude * np.cos(np.pi * mesh.vertices[:, 0] / basin), 0.0)
        trajectory = solver.transient(None, TimeSteppingParams(2.0, 0.0, 200.0), initial)
        gauge = int(np.argmin(mesh.vertices[:, 0] + np.abs(mesh.vertices[:, 1] - 50.0)))
        eta = np.array([state.eta[gauge] for state in trajectory])
        times = trajectory.times
        crossings = [times[k] + (times[k + 1] - times[k]) * eta[k] / (eta[k] - eta[k + 1])
                     for k in range(len(eta) - 1) if eta[k] * eta[k + 1] < 0]
        self.assertGreaterEqual(len(crossings), 3)
        period = 2.0 * np.mean(np.diff(crossings))
        self.assertAlmostEqual(period / (2.0 * basin / np.sqrt(physical.gravity * depth)), 1.0, delta=0.05)


@unittest.skipUnless(SLOW, "set TIDALFARM_SLOW_TESTS=1 to run")
class TestIdealizedBasin(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.scenario = load_scenario(scenario_directory() / 'coarse_channel.toml')
        cls.mesh = cls.scenario.mesh
        cls.solver = ShallowWaterSolver(cls.mesh, cls.scenario.physical, cls.scenario.boundaries,
                                        cls.scenario.solver)
        cls.free = cls.solver.steady()

    def test_centreline_speed_matches_channel_profile(self):
        physical = self.scenario.physical
        profile = channel_oracle(4000.0, 50.0, 2.0, physical.background_friction, physical.gravity)
        x = np.linspace(100.0, 3900.0, 39)
        points = np.column_stack([x, np.full_like(x, 2000.0)])
        np.testing.assert_allclose(speed_at(self.mesh, self.free, points), profile.speed_at(x), rtol=0.05)

    def test_farm_slows_the_flow(self):
        upper = self.scenario.upper_bound().values
        loaded = self.solver.steady(density_to_friction(upper, self.scenario.turbine))
        farm = np.flatnonzero(upper > 0)
        nv = self.mesh.num_vertices
        free = np.hypot(self.free.ux[:nv], self.free.uy[:nv])[farm]
        slowed = np.hypot(loaded.ux[:nv], loaded.uy[:nv])[farm]
        self.assertTrue(np.all(slowed < free))


@unittest.skipUnless(SLOW, "set TIDALFARM_SLOW_TESTS=1 to run")
class TestGridRefinement(unittest.TestCase):

    def test_farm_power_converges(self):
        physical = PhysicalParams(viscosity=2.0, depth=DEPTH)
        powers = []
        for size in (50.0, 25.0, 12.5):
            mesh = generate_rectangle(600.0, 200.0, size)
            x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
            friction = 0.05 * np.exp(-((x - 300.0) / 80.0) ** 2 - ((y - 100.0) / 60.0) ** 2)
            state = ShallowWaterSolver(mesh, physical, channel()).steady(friction)
            powers.append(farm_power(mesh, state, friction, physical.density))
        first, second = abs(powers[1] - powers[0]), abs(powers[2] - powers[1])
        self.assertLess(second, first)


class TestTimeWeights(unittest.TestCase):

    def setUp(self):
        self.mesh = generate_rectangle(10.0, 10.0, 10.0)
        solver = ShallowWaterSolver(self.mesh, PhysicalParams(depth=10.0), channel((0.0, 0.0)))
        self.rest = solver.rest_state()

    def test_steady(self):
        np.testing.assert_array_equal(time_weights(Trajectory((self.rest,))), [1.0])

    def test_left_and_right(self):
        trajectory = Trajectory((self.rest,) * 4, dt=1.0)
        np.testing.assert_allclose(time_weights(trajectory, 'left'), [1 / 3, 1 / 3, 1 / 3, 0.0])
        np.testing.assert_allclose(time_weights(trajectory, 'right'), [0.0, 1 / 3, 1 / 3, 1 / 3])

    def test_unknown_rule(self):
        with self.assertRaises(ParameterError):
            time_weights(Trajectory((self.rest,) * 2, dt=1.0), 'midpoint')


if __name__ == '__main__':
    unittest.main()
