# -*- coding: utf-8 -*-

"""Tests for the vessel model."""

import os
import tempfile
import unittest

import numpy as np
import yaml

from asv_guard.exceptions import IntegrationDivergedError, ScenarioParseError, VesselParamsError
from asv_guard.vessel import (
    ControlInput, Disturbance, VesselParams, VesselState, coriolis_matrix, damping_matrix, derivative, kinetic_energy,
    linearize, load_vessel_params, max_stable_time_step, rk4_arrays, step_rk4,
)
from tests.constants import ACCEPTANCE, DEFAULT_PARAMS, random_states

N_POINTS = 1000 if ACCEPTANCE else 100


class TestParams(unittest.TestCase):
    """Tests the vessel parameter file and its validation."""

    def test_default(self):
        """Test the packaged vessel is loaded with its documented values."""
        params = DEFAULT_PARAMS
        np.testing.assert_allclose(np.diag(params.mass), [25.8, 33.8, 20.0])
        np.testing.assert_allclose(params.damping_linear, 0.1 * params.mass)
        np.testing.assert_allclose(params.input_max, [10.0, 5.0, 3.0])
        self.assertEqual(3.0, params.collision_radius)
        self.assertTrue(np.isinf(params.state_ub[0]))

    def test_round_trip(self):
        """Test a serialized vessel reads back to the same parameters."""
        params = VesselParams.from_dict(DEFAULT_PARAMS.to_dict())
        np.testing.assert_array_equal(DEFAULT_PARAMS.mass, params.mass)
        np.testing.assert_array_equal(DEFAULT_PARAMS.state_lb, params.state_lb)
        self.assertEqual(DEFAULT_PARAMS.name, params.name)

    def test_load_file(self):
        """Test loading a vessel file written to disk."""
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'vessel.yml')
            with open(path, 'w') as file:
                yaml.safe_dump(DEFAULT_PARAMS.to_dict(), file)
            params = load_vessel_params(path)
        np.testing.assert_array_equal(DEFAULT_PARAMS.damping_quadratic, params.damping_quadratic)

    def test_mass_not_positive_definite(self):
        """Test a mass matrix with a negative eigenvalue is rejected."""
        data = DEFAULT_PARAMS.to_dict()
        data['mass'][2][2] = -1.0
        with self.assertRaises(VesselParamsError):
            VesselParams.from_dict(data)

    def test_mass_not_symmetric(self):
        """Test an asymmetric mass matrix is rejected."""
        data = DEFAULT_PARAMS.to_dict()
        data['mass'][0][1] = 1.0
        with self.assertRaises(VesselParamsError):
            VesselParams.from_dict(data)

    def test_negative_damping(self):
        """Test negative quadratic damping is rejected."""
        data = DEFAULT_PARAMS.to_dict()
        data['damping']['quadratic'] = [1.0, -1.0, 1.0]
        with self.assertRaises(VesselParamsError):
            VesselParams.from_dict(data)

    def test_inverted_bounds(self):
        """Test lower input bounds above the upper ones are rejected."""
        data = DEFAULT_PARAMS.to_dict()
        data['bounds']['input']['lower'] = [20.0, -5.0, -3.0]
        with self.assertRaises(VesselParamsError):
            VesselParams.from_dict(data)

    def test_unknown_key(self):
        """Test unknown keys name the offending field."""
        data = DEFAULT_PARAMS.to_dict()
        data['draft'] = 1.0
        with self.assertRaises(ScenarioParseError) as cm:
            VesselParams.from_dict(data)
        self.assertEqual('vessel.draft', cm.exception.field)

    def test_malformed_matrix(self):
        """Test a mass matrix of the wrong shape is a parse error."""
        data = DEFAULT_PARAMS.to_dict()
        data['mass'] = [[1.0, 0.0], [0.0, 1.0]]
        with self.assertRaises(ScenarioParseError) as cm:
            VesselParams.from_dict(data)
        self.assertEqual('vessel.mass', cm.exception.field)


class TestTypes(unittest.TestCase):
    """Tests the state and input types."""

    def test_heading_wrapped(self):
        """Test the heading is wrapped into (-pi, pi]."""
        state = VesselState(0.0, 0.0, 2.5 * np.pi)
        self.assertAlmostEqual(0.5 * np.pi, state.psi)

    def test_non_finite_state(self):
        """Test a non-finite state is rejected."""
        with self.assertRaises(ValueError):
            VesselState(0.0, float('nan'), 0.0)

    def test_clamp(self):
        """Test inputs are clamped into the input box."""
        control = ControlInput(50.0, -50.0, 1.0).clamp(DEFAULT_PARAMS)
        self.assertEqual(ControlInput(10.0, -5.0, 1.0), control)


class TestDynamics(unittest.TestCase):
    """Tests the equations of motion."""

    def setUp(self):
        """Draw the random test points."""
        self.rng = np.random.default_rng(7)
        self.states = random_states(self.rng, N_POINTS)

    def test_coriolis_skew_symmetric(self):
        """Test C(nu) is skew-symmetric for any velocity."""
        for state in self.states:
            c = coriolis_matrix(state.nu, DEFAULT_PARAMS)
            np.testing.assert_allclose(c, -c.T, atol=1e-12)

    def test_rates_match_matrix_form(self):
        """Test the vectorized rates equal M^-1 (tau - C nu - D nu)."""
        control = ControlInput(3.0, -1.0, 0.5)
        for state in self.states[:20]:
            nu = state.nu
            expected = DEFAULT_PARAMS.m_inv @ (
                control.to_array()
                - coriolis_matrix(nu, DEFAULT_PARAMS) @ nu
                - damping_matrix(nu, DEFAULT_PARAMS) @ nu
            )
            np.testing.assert_allclose(expected, derivative(state, control, None, DEFAULT_PARAMS)[3:], atol=1e-12)

    def test_kinematics(self):
        """Test the pose rates are the body velocity rotated into the world frame."""
        state = VesselState(0.0, 0.0, np.pi / 2, u=1.0, v=0.5, r=0.1)
        rates = derivative(state, ControlInput(), None, DEFAULT_PARAMS)
        np.testing.assert_allclose([-0.5, 1.0, 0.1], rates[:3], atol=1e-12)

    def test_disturbance_adds_to_input(self):
        """Test a disturbance acts like an equal input."""
        state = self.states[0]
        a = derivative(state, ControlInput(1.0, 2.0, 0.5), Disturbance(0.5, -1.0, 0.0), DEFAULT_PARAMS)
        b = derivative(state, ControlInput(1.5, 1.0, 0.5), None, DEFAULT_PARAMS)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_dissipation(self):
        """Test unforced kinetic energy never grows."""
        for state in self.states:
            rates = derivative(state, ControlInput(), None, DEFAULT_PARAMS)
            power = float(state.nu @ DEFAULT_PARAMS.mass @ rates[3:])
            self.assertLessEqual(power, 1e-9)

    def test_energy_decays_over_steps(self):
        """Test kinetic energy decreases along an unforced trajectory."""
        state = VesselState(0.0, 0.0, 0.0, u=2.0, v=-1.0, r=0.5)
        energy = kinetic_energy(state, DEFAULT_PARAMS)
        for _ in range(50):
            state = step_rk4(state, ControlInput(), None, DEFAULT_PARAMS, 0.1)
            new_energy = kinetic_energy(state, DEFAULT_PARAMS)
            self.assertLess(new_energy, energy)
            energy = new_energy

    def test_continuous_jacobians(self):
        """Test analytic Jacobians match central finite differences."""
        control = ControlInput(4.0, 1.0, -0.5)
        for state in self.states:
            analytic = linearize(state, control, DEFAULT_PARAMS)
            numeric = linearize(state, control, DEFAULT_PARAMS, method='finite_difference')
            np.testing.assert_allclose(analytic.a, numeric.a, rtol=1e-5, atol=1e-6)
            np.testing.assert_allclose(analytic.b, numeric.b, rtol=1e-5, atol=1e-8)

    def test_discrete_jacobians(self):
        """Test the Jacobians of one integration step match finite differences."""
        control = ControlInput(-2.0, 0.5, 1.0)
        for state in self.states[:50]:
            analytic = linearize(state, control, DEFAULT_PARAMS, dt=0.5)
            numeric = linearize(state, control, DEFAULT_PARAMS, dt=0.5, method='finite_difference')
            self.assertTrue(analytic.discrete)
            np.testing.assert_allclose(analytic.a, numeric.a, rtol=1e-5, atol=1e-6)
            np.testing.assert_allclose(analytic.b, numeric.b, rtol=1e-5, atol=1e-8)

    def test_unknown_method(self):
        """Test an unknown linearization method is rejected."""
        with self.assertRaises(ValueError):
            linearize(self.states[0], ControlInput(), DEFAULT_PARAMS, method='symbolic')

    def test_rk4_order(self):
        """Test halving the step divides the global error by about 16."""
        x0 = np.array([0.0, 0.0, 0.3, 1.5, -0.5, 0.4])
        force = np.array([5.0, 2.0, -1.0])
        horizon = 4.0

        def integrate(dt):
            x = x0.copy()
            for _ in range(int(round(horizon / dt))):
                x = rk4_arrays(x, force, dt, DEFAULT_PARAMS)
            return x

        reference = integrate(0.001)
        coarse = np.linalg.norm(integrate(0.1) - reference)
        fine = np.linalg.norm(integrate(0.05) - reference)
        self.assertAlmostEqual(16.0, coarse / fine, delta=16.0 * 0.3)

    def test_step_rejects_bad_dt(self):
        """Test a non-positive step is rejected."""
        with self.assertRaises(ValueError):
            step_rk4(self.states[0], ControlInput(), None, DEFAULT_PARAMS, 0.0)

    def test_divergence(self):
        """Test an absurd step size is reported as divergence."""
        state = VesselState(0.0, 0.0, 0.0, u=3.0, v=2.0, r=1.5)
        with self.assertRaises(IntegrationDivergedError):
            for _ in range(200):
                state = step_rk4(state, ControlInput(), None, DEFAULT_PARAMS, 1e3)

    def test_stable_time_step(self):
        """Test the dynamics tick and the safety filter step are both below the stability bound."""
        self.assertGreater(max_stable_time_step(DEFAULT_PARAMS), 0.5)
