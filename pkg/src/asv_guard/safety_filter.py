# -*- coding: utf-8 -*-

"""Predictive safety filter.

Given a proposed input ``u_L`` the filter solves

    min   sum_k ||u_k - u_L||_W^2
    s.t.  x_{k+1} = f_RK4(x_k, u_k, d_k)            k = 0..N-1
          x_0 = x(t)
          x_lb <= x_k <= x_ub                       k = 1..N
          u_lb <= u_k <= u_ub                       k = 0..N-1
          d(p_k, O_ik) >= d_safe                    k = 0..N-1
          d(p_N, O_iN) >= d_safe + d_f
          nu_N^T P_f nu_N <= 1

and applies ``u_0``. Distances are written as ``|p - O|^2 / rho^2 - 1 >= 0`` with ``rho`` the obstacle radius plus
the required clearance, which is smooth everywhere. When the hard problem has no solution the obstacle rows get
one non-negative slack per step, penalized linearly in the cost.

The terminal set is an ellipsoid on the body-fixed velocity built from an LQR controller of the velocity
subsystem at rest, scaled so the controller respects the input and velocity bounds inside it, and certified by
simulating its boundary under the nonlinear model.
"""

from __future__ import annotations

import abc
import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import minimize

from .constants import (
    CONSTRAINT_BACKOFF, D_FINAL, D_SAFE, MAX_SQP_ITERATIONS, MERIT_BACKTRACKS, PSF_DT, PSF_HORIZON, SIGMA_LEVEL,
    SLACK_PENALTY, SOLVER_TOLERANCE, TERMINAL_INPUT_WEIGHT, TERMINAL_SAMPLES,
)
from .exceptions import TerminalSetError
from .tracking import NoiseModel, TrackBelief, predict_horizon
from .vessel import (
    ControlInput, Disturbance, VesselParams, VesselState, linearize, rk4_arrays, rk4_with_jacobians,
)

__all__ = [
    'PsfStatus',
    'DisturbanceMode',
    'PsfConfig',
    'ObstacleForecast',
    'TerminalSet',
    'OcpSolution',
    'MarginReport',
    'PredictiveSafetyFilter',
    'build_terminal_set',
    'certify_terminal_set',
    'filter_control',
    'rollout',
    'distance_to_obstacle',
    'safety_margin_report',
]

logger = logging.getLogger(__name__)

TRANSCRIPTIONS = ('multiple_shooting', 'single_shooting')


class PsfStatus(enum.Enum):
    """Outcome of one filter call."""

    SAFE_PASSTHROUGH = 'SAFE_PASSTHROUGH'
    MODIFIED = 'MODIFIED'
    RELAXED = 'RELAXED'
    INFEASIBLE = 'INFEASIBLE'


class DisturbanceMode(enum.Enum):
    """How the filter predicts the environmental disturbance."""

    KNOWN = 'known'
    ZERO = 'zero'


@dataclass(frozen=True)
class PsfConfig:
    """Horizon, clearances, weights and solver settings of the safety filter."""

    horizon: int = PSF_HORIZON
    dt: float = PSF_DT
    d_safe: float = D_SAFE
    d_f: float = D_FINAL
    gamma_u: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    slack_penalty: float = SLACK_PENALTY
    tolerance: float = SOLVER_TOLERANCE
    max_iterations: int = MAX_SQP_ITERATIONS
    terminal_input_weight: float = TERMINAL_INPUT_WEIGHT
    terminal_samples: int = TERMINAL_SAMPLES
    inflate: bool = True
    sigma_level: float = SIGMA_LEVEL
    backoff: float = CONSTRAINT_BACKOFF
    disturbance_mode: str = DisturbanceMode.KNOWN.value
    transcription: str = 'multiple_shooting'

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError('horizon must be at least 1')
        if not self.dt > 0:
            raise ValueError('dt must be positive')
        if not self.d_safe > 0 or self.d_f < 0:
            raise ValueError('d_safe must be positive and d_f non-negative')
        if len(self.gamma_u) != 3 or min(self.gamma_u) <= 0:
            raise ValueError('gamma_u needs three positive weights')
        if not self.slack_penalty > 0:
            raise ValueError('slack_penalty must be positive')
        if self.transcription not in TRANSCRIPTIONS:
            raise ValueError(f'transcription must be one of {TRANSCRIPTIONS}')
        DisturbanceMode(self.disturbance_mode)

    def weights(self, params: VesselParams) -> np.ndarray:
        """Return the diagonal of W, normalizing each input by the width of its box."""
        return np.asarray(self.gamma_u, dtype=float) / (params.input_ub - params.input_lb) ** 2


@dataclass(frozen=True, eq=False)
class ObstacleForecast:
    """Predicted obstacle centers and radii over the horizon.

    ``positions`` has shape ``(n_obstacles, N + 1, 2)`` and ``radii`` has shape ``(n_obstacles, N + 1)`` so that
    uncertainty inflation may grow along the horizon.
    """

    positions: np.ndarray
    radii: np.ndarray
    #: Positional standard deviation per step, when the forecast comes from tracked beliefs
    sigmas: Optional[np.ndarray] = None

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float)
        radii = np.asarray(self.radii, dtype=float)
        if positions.ndim != 3 or positions.shape[2] != 2:
            raise ValueError('positions must have shape (n_obstacles, N + 1, 2)')
        if radii.shape != positions.shape[:2]:
            raise ValueError('radii must have shape (n_obstacles, N + 1)')
        if np.any(radii < 0):
            raise ValueError('radii must be non-negative')
        object.__setattr__(self, 'positions', positions)
        object.__setattr__(self, 'radii', radii)
        if self.sigmas is not None:
            object.__setattr__(self, 'sigmas', np.asarray(self.sigmas, dtype=float).reshape(radii.shape))

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def steps(self) -> int:
        """Return the number of predicted steps, N + 1."""
        return self.positions.shape[1]

    @classmethod
    def empty(cls, horizon: int) -> ObstacleForecast:
        """Build a forecast without obstacles."""
        return cls(positions=np.zeros((0, horizon + 1, 2)), radii=np.zeros((0, horizon + 1)))

    @classmethod
    def constant_velocity(
        cls,
        positions: Sequence[Sequence[float]],
        velocities: Sequence[Sequence[float]],
        radii: Sequence[float],
        horizon: int,
        dt: float,
    ) -> ObstacleForecast:
        """Extrapolate obstacles along straight lines."""
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        velocities = np.asarray(velocities, dtype=float).reshape(-1, 2)
        times = dt * np.arange(horizon + 1)
        predicted = positions[:, None, :] + velocities[:, None, :] * times[None, :, None]
        radii = np.repeat(np.asarray(radii, dtype=float).reshape(-1, 1), horizon + 1, axis=1)
        return cls(positions=predicted, radii=radii)

    @classmethod
    def from_beliefs(
        cls,
        beliefs: Sequence[TrackBelief],
        extents: Sequence[float],
        horizon: int,
        dt: float,
        noise: Optional[NoiseModel] = None,
        sigma_level: float = SIGMA_LEVEL,
        inflate: bool = True,
    ) -> ObstacleForecast:
        """Predict tracked obstacles with their growing uncertainty.

        With ``inflate`` each radius grows by ``sigma_level`` standard deviations along the worst direction of
        the predicted position covariance.
        """
        if not beliefs:
            return cls.empty(horizon)
        positions = np.zeros((len(beliefs), horizon + 1, 2))
        radii = np.zeros((len(beliefs), horizon + 1))
        sigmas = np.zeros((len(beliefs), horizon + 1))
        for i, (belief, extent) in enumerate(zip(beliefs, extents)):
            tube = [(belief.mean, belief.cov)] + predict_horizon(belief, horizon, dt, noise)
            for k, (mean, cov) in enumerate(tube):
                positions[i, k] = mean[:2]
                sigmas[i, k] = math.sqrt(max(np.linalg.eigvalsh(cov[:2, :2]).max(), 0.0))
                radii[i, k] = extent + (sigma_level * sigmas[i, k] if inflate else 0.0)
        return cls(positions=positions, radii=radii, sigmas=sigmas)


@dataclass(frozen=True, eq=False)
class TerminalSet:
    """The velocity ellipsoid ``nu^T P_f nu <= 1`` with its LQR controller ``tau = -K nu``."""

    p_f_nu: np.ndarray
    gain: np.ndarray
    alpha: float
    p_raw: np.ndarray
    certified: bool = False

    def level(self, nu: np.ndarray) -> np.ndarray:
        """Return ``nu^T P_f nu`` for one or many velocities."""
        nu = np.asarray(nu, dtype=float)
        return np.einsum('...i,ij,...j->...', nu, self.p_f_nu, nu)

    def contains(self, nu: np.ndarray, tolerance: float = 0.0) -> bool:
        """Return if a velocity lies inside the ellipsoid."""
        return bool(self.level(nu) <= 1.0 + tolerance)

    def scaled(self, factor: float) -> TerminalSet:
        """Multiply the shape matrix by ``factor``, shrinking every semi-axis by ``sqrt(factor)``."""
        return replace(self, p_f_nu=self.p_f_nu * factor, alpha=self.alpha / factor, certified=False)

    def semi_axes(self) -> np.ndarray:
        """Return the semi-axes of the ellipsoid in ascending order."""
        return np.sort(1.0 / np.sqrt(np.linalg.eigvalsh(self.p_f_nu)))


def _velocity_model(params: VesselParams, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    lin = linearize(VesselState(0.0, 0.0, 0.0), ControlInput(), params, dt=dt)
    return lin.a[3:, 3:], lin.b[3:, :]


def certify_terminal_set(
    terminal: TerminalSet,
    params: VesselParams,
    dt: float,
    samples: int = TERMINAL_SAMPLES,
    steps: int = 1,
    seed: int = 0,
) -> bool:
    """Check invariance of the terminal set by simulating samples of its boundary.

    Every sample must keep its level non-increasing and its LQR input inside the bounds for ``steps`` steps of
    the nonlinear model.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    directions = rng.normal(size=(samples, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    cholesky = np.linalg.cholesky(terminal.p_f_nu)
    nu = linalg.solve_triangular(cholesky.T, directions.T, lower=False).T

    x = np.zeros((samples, 6))
    x[:, 3:] = nu
    level = terminal.level(nu)
    for _ in range(steps):
        tau = -x[:, 3:] @ terminal.gain.T
        if np.any(tau < params.input_lb - 1e-9) or np.any(tau > params.input_ub + 1e-9):
            return False
        x = rk4_arrays(x, tau, dt, params)
        next_level = terminal.level(x[:, 3:])
        if np.any(next_level > level + 1e-12 * np.maximum(1.0, level)):
            return False
        level = next_level
    return True


def build_terminal_set(params: VesselParams, cfg: Optional[PsfConfig] = None, seed: int = 0) -> TerminalSet:
    """Build and certify the terminal velocity ellipsoid.

    :raises TerminalSetError: if the Riccati or Lyapunov equation fails or certification never succeeds
    """
    cfg = cfg or PsfConfig()
    a, b = _velocity_model(params, cfg.dt)
    q = params.mass
    r = cfg.terminal_input_weight * params.m_inv
    try:
        s = linalg.solve_discrete_are(a, b, q, r)
        gain = np.linalg.solve(r + b.T @ s @ b, b.T @ s @ a)
        closed_loop = a - b @ gain
        p_raw = linalg.solve_discrete_lyapunov(closed_loop.T, q + gain.T @ r @ gain)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise TerminalSetError(f'LQR construction failed: {e}') from None

    p_raw = 0.5 * (p_raw + p_raw.T)
    if not np.all(np.isfinite(p_raw)) or np.linalg.eigvalsh(p_raw).min() <= 0:
        raise TerminalSetError('Lyapunov solution is not positive definite')

    p_inv = np.linalg.inv(p_raw)
    velocity_bound = np.minimum(np.abs(params.velocity_lb), np.abs(params.velocity_ub))
    input_bound = np.minimum(np.abs(params.input_lb), np.abs(params.input_ub))
    alpha_velocity = np.min(velocity_bound ** 2 / np.diag(p_inv))
    alpha_input = np.min(input_bound ** 2 / np.einsum('ji,ik,jk->j', gain, p_inv, gain))
    alpha = float(min(alpha_velocity, alpha_input))
    if not alpha > 0:
        raise TerminalSetError('bounds leave no room for a terminal set')

    for attempt in range(40):
        terminal = TerminalSet(p_f_nu=p_raw / alpha, gain=gain, alpha=alpha, p_raw=p_raw)
        if certify_terminal_set(terminal, params, cfg.dt, samples=cfg.terminal_samples, steps=cfg.horizon, seed=seed):
            logger.info('terminal set certified after %d shrink steps, alpha=%.4g', attempt, alpha)
            return replace(terminal, certified=True)
        alpha *= 0.8
    raise TerminalSetError('terminal set could not be certified')


@dataclass(frozen=True, eq=False)
class OcpSolution:
    """Result of one safety filter call.

    ``x_seq`` is re-simulated from ``u0_seq``, so it is consistent with the dynamics by construction.
    """

    u0_seq: List[ControlInput]
    x_seq: List[VesselState]
    delta_u: np.ndarray
    status: PsfStatus
    slack_total: float = 0.0
    iterations: int = 0
    cost: float = 0.0
    max_violation: float = 0.0
    solve_time: float = 0.0
    merit_history: List[float] = field(default_factory=list)
    violations: Dict[str, float] = field(default_factory=dict)

    @property
    def u0(self) -> ControlInput:
        """Return the input to apply now."""
        return self.u0_seq[0]

    @property
    def positions(self) -> np.ndarray:
        """Return the predicted positions with shape ``(N + 1, 2)``."""
        return np.array([state.position for state in self.x_seq])


@dataclass(frozen=True, eq=False)
class MarginReport:
    """Per-step clearance beyond ``d_safe`` and the first step where it is negative."""

    margins: np.ndarray
    violation_index: Optional[int]


def distance_to_obstacle(p: Sequence[float], center: Sequence[float], radius: float) -> float:
    """Return the distance from ``p`` to a disc, negative inside it."""
    if radius < 0:
        raise ValueError(f'radius must be non-negative, got {radius}')
    return float(np.hypot(p[0] - center[0], p[1] - center[1]) - radius)


def safety_margin_report(
    sol: OcpSolution,
    obstacles: ObstacleForecast,
    d_safe: float = D_SAFE,
) -> MarginReport:
    """Return ``m_k = min_i d(p_k, O_ik) - d_safe`` along a solution."""
    positions = sol.positions
    if len(obstacles) == 0:
        return MarginReport(margins=np.full(len(positions), np.inf), violation_index=None)
    steps = min(len(positions), obstacles.steps)
    distances = np.linalg.norm(
        positions[None, :steps, :] - obstacles.positions[:, :steps, :], axis=2,
    ) - obstacles.radii[:, :steps]
    margins = distances.min(axis=0) - d_safe
    violating = np.flatnonzero(margins < 0)
    return MarginReport(margins=margins, violation_index=int(violating[0]) if violating.size else None)


def _rollout_arrays(x0: np.ndarray, inputs: np.ndarray, force_d: np.ndarray, dt: float, params: VesselParams):
    states = np.empty((inputs.shape[0] + 1, 6))
    states[0] = x0
    for k, tau in enumerate(inputs):
        states[k + 1] = rk4_arrays(states[k], tau + force_d, dt, params)
    return states


def rollout(
    state: VesselState,
    inputs: Sequence[ControlInput],
    params: VesselParams,
    dt: float,
    disturbance: Optional[Disturbance] = None,
) -> List[VesselState]:
    """Simulate a sequence of inputs, returning ``len(inputs) + 1`` states."""
    force_d = disturbance.to_array() if disturbance is not None else np.zeros(3)
    u = np.array([control.to_array() for control in inputs]).reshape(-1, 3)
    return [VesselState.from_array(x) for x in _rollout_arrays(state.to_array(), u, force_d, dt, params)]


@dataclass(eq=False)
class _Problem:
    """The filter problem in coordinates centered on the current vessel position."""

    x0: np.ndarray
    u_l: np.ndarray
    force_d: np.ndarray
    centers: np.ndarray
    rho: np.ndarray
    clearance: np.ndarray
    radii: np.ndarray
    weights: np.ndarray
    p_f: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    params: VesselParams
    dt: float
    horizon: int
    relaxed: bool
    slack_penalty: float

    @property
    def box_mask(self) -> np.ndarray:
        return np.isfinite(self.x_lb) | np.isfinite(self.x_ub)

    def obstacle_steps(self) -> np.ndarray:
        return np.arange(0 if self.relaxed else 1, self.horizon + 1)

    def cost(self, inputs: np.ndarray, slack: Optional[np.ndarray]) -> float:
        delta = inputs - self.u_l
        value = float(np.sum(self.weights * delta ** 2))
        if slack is not None:
            value += self.slack_penalty * float(np.sum(slack))
        return value

    def inequalities(self, states: np.ndarray, slack: Optional[np.ndarray]):
        """Return inequality values with their derivatives by state ``(m, N+1, 6)`` and slack ``(m, N+1)``."""
        n = self.horizon
        values, d_states, d_slack = [], [], []

        steps = self.obstacle_steps()
        for i in range(self.centers.shape[0]):
            offset = states[steps, :2] - self.centers[i, steps]
            rho2 = self.rho[i, steps] ** 2
            g = np.sum(offset ** 2, axis=1) / rho2 - 1.0
            jac = np.zeros((len(steps), n + 1, 6))
            jac[np.arange(len(steps)), steps, :2] = 2.0 * offset / rho2[:, None]
            jac_z = np.zeros((len(steps), n + 1))
            if slack is not None:
                g = g + slack[steps]
                jac_z[np.arange(len(steps)), steps] = 1.0
            values.append(g)
            d_states.append(jac)
            d_slack.append(jac_z)

        nu_n = states[n, 3:]
        jac = np.zeros((1, n + 1, 6))
        jac[0, n, 3:] = -2.0 * self.p_f @ nu_n
        values.append(np.array([1.0 - nu_n @ self.p_f @ nu_n]))
        d_states.append(jac)
        d_slack.append(np.zeros((1, n + 1)))

        for j in np.flatnonzero(self.box_mask):
            for bound, sign in ((self.x_ub[j], -1.0), (self.x_lb[j], 1.0)):
                if not np.isfinite(bound):
                    continue
                values.append(sign * (states[1:, j] - bound))
                jac = np.zeros((n, n + 1, 6))
                jac[np.arange(n), np.arange(1, n + 1), j] = sign
                d_states.append(jac)
                d_slack.append(np.zeros((n, n + 1)))

        return np.concatenate(values), np.concatenate(d_states), np.concatenate(d_slack)

    def violations(self, states: np.ndarray, inputs: np.ndarray) -> Dict[str, float]:
        """Measure constraint violations of a rollout in physical units."""
        rv = {'obstacle': 0.0, 'terminal': 0.0, 'state_bounds': 0.0, 'input_bounds': 0.0}
        if self.centers.shape[0]:
            distances = np.linalg.norm(states[None, :, :2] - self.centers, axis=2) - self.radii
            rv['obstacle'] = float(max(0.0, np.max(self.clearance - distances)))
        rv['terminal'] = float(max(0.0, states[-1, 3:] @ self.p_f @ states[-1, 3:] - 1.0))
        mask = self.box_mask
        if mask.any():
            excess = np.maximum(self.x_lb[mask] - states[1:, mask], states[1:, mask] - self.x_ub[mask])
            rv['state_bounds'] = float(max(0.0, np.max(excess)))
        excess = np.maximum(self.params.input_lb - inputs, inputs - self.params.input_ub)
        rv['input_bounds'] = float(max(0.0, np.max(excess)))
        return rv


class _Transcription(abc.ABC):
    """Maps the filter problem to a nonlinear program for SLSQP."""

    def __init__(self, problem: _Problem):
        self.problem = problem
        self.n_slack = problem.horizon + 1 if problem.relaxed else 0
        self._key = None
        self._cache = None

    @abc.abstractmethod
    def split(self, z: np.ndarray):
        """Return the states, or None when they are not decision variables, the inputs and the slack."""

    @abc.abstractmethod
    def initial_guess(self, inputs: np.ndarray) -> np.ndarray:
        """Build the decision vector for an input sequence."""

    @abc.abstractmethod
    def states(self, z: np.ndarray) -> np.ndarray:
        """Return the predicted states of an iterate."""

    @abc.abstractmethod
    def objective_gradient(self, z: np.ndarray) -> np.ndarray:
        """Return the gradient of the objective."""

    def objective(self, z: np.ndarray) -> float:
        _, inputs, slack = self.split(z)
        return self.problem.cost(inputs, slack)

    @abc.abstractmethod
    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        """Return the box bounds of the decision vector."""

    @abc.abstractmethod
    def constraints(self) -> List[dict]:
        """Return the constraints in the form SLSQP takes."""

    def merit(self, z: np.ndarray) -> float:
        """Return the cost plus the penalized constraint violation of an iterate."""
        states, _, slack = self.split(z)
        if states is None:
            states = self.states(z)
        values, _, _ = self.problem.inequalities(states, slack)
        violation = float(np.sum(np.maximum(0.0, -values)))
        violation += float(np.sum(np.abs(self.equality_residual(z))))
        return self.objective(z) + self.problem.slack_penalty * violation

    def equality_residual(self, z: np.ndarray) -> np.ndarray:
        return np.zeros(0)

    def _slack_bounds(self):
        return [(0.0, None)] * self.n_slack

    def _initial_slack(self, states: np.ndarray) -> np.ndarray:
        p = self.problem
        slack = np.zeros(p.horizon + 1)
        for i in range(p.centers.shape[0]):
            g = np.sum((states[:, :2] - p.centers[i]) ** 2, axis=1) / p.rho[i] ** 2 - 1.0
            slack = np.maximum(slack, -g)
        return slack


class _MultipleShooting(_Transcription):
    """States and inputs are both decision variables, tied together by defect equalities."""

    def split(self, z):
        n = self.problem.horizon
        n_x = 6 * (n + 1)
        states = z[:n_x].reshape(n + 1, 6)
        inputs = z[n_x:n_x + 3 * n].reshape(n, 3)
        slack = z[n_x + 3 * n:] if self.n_slack else None
        return states, inputs, slack

    def initial_guess(self, inputs):
        p = self.problem
        states = _rollout_arrays(p.x0, inputs, p.force_d, p.dt, p.params)
        parts = [states.ravel(), inputs.ravel()]
        if self.n_slack:
            parts.append(self._initial_slack(states))
        return np.concatenate(parts)

    def states(self, z):
        return self.split(z)[0]

    def _dynamics(self, z):
        key = z.tobytes()
        if key != self._key:
            states, inputs, _ = self.split(z)
            p = self.problem
            self._cache = rk4_with_jacobians(states[:-1], inputs + p.force_d, p.dt, p.params)
            self._key = key
        return self._cache

    def equality_residual(self, z):
        states, _, _ = self.split(z)
        x_next, _, _ = self._dynamics(z)
        return np.concatenate([states[0] - self.problem.x0, (states[1:] - x_next).ravel()])

    def _equality_jacobian(self, z):
        n = self.problem.horizon
        _, a, b = self._dynamics(z)
        n_x = 6 * (n + 1)
        jac = np.zeros((6 * (n + 1), z.size))
        jac[:6, :6] = np.eye(6)
        for k in range(n):
            rows = slice(6 * (k + 1), 6 * (k + 2))
            jac[rows, 6 * (k + 1):6 * (k + 2)] = np.eye(6)
            jac[rows, 6 * k:6 * (k + 1)] = -a[k]
            jac[rows, n_x + 3 * k:n_x + 3 * (k + 1)] = -b[k]
        return jac

    def _inequality(self, z):
        states, _, slack = self.split(z)
        return self.problem.inequalities(states, slack)[0]

    def _inequality_jacobian(self, z):
        states, _, slack = self.split(z)
        _, d_states, d_slack = self.problem.inequalities(states, slack)
        m = d_states.shape[0]
        parts = [d_states.reshape(m, -1), np.zeros((m, 3 * self.problem.horizon))]
        if self.n_slack:
            parts.append(d_slack)
        return np.hstack(parts)

    def objective_gradient(self, z):
        _, inputs, slack = self.split(z)
        p = self.problem
        grad = np.zeros_like(z)
        n_x = 6 * (p.horizon + 1)
        grad[n_x:n_x + 3 * p.horizon] = (2.0 * p.weights * (inputs - p.u_l)).ravel()
        if self.n_slack:
            grad[n_x + 3 * p.horizon:] = p.slack_penalty
        return grad

    def bounds(self):
        p = self.problem
        bounds = [(None, None)] * (6 * (p.horizon + 1))
        bounds += list(zip(np.tile(p.params.input_lb, p.horizon), np.tile(p.params.input_ub, p.horizon)))
        return bounds + self._slack_bounds()

    def constraints(self):
        return [
            {'type': 'eq', 'fun': self.equality_residual, 'jac': self._equality_jacobian},
            {'type': 'ineq', 'fun': self._inequality, 'jac': self._inequality_jacobian},
        ]


class _SingleShooting(_Transcription):
    """Only inputs are decision variables; states follow from a forward simulation."""

    def split(self, z):
        n = self.problem.horizon
        inputs = z[:3 * n].reshape(n, 3)
        slack = z[3 * n:] if self.n_slack else None
        return None, inputs, slack

    def initial_guess(self, inputs):
        parts = [inputs.ravel()]
        if self.n_slack:
            parts.append(self._initial_slack(self._simulate(inputs.ravel())[0]))
        return np.concatenate(parts)

    def _simulate(self, z):
        key = z[:3 * self.problem.horizon].tobytes()
        if key != self._key:
            p = self.problem
            inputs = z[:3 * p.horizon].reshape(p.horizon, 3)
            states = _rollout_arrays(p.x0, inputs, p.force_d, p.dt, p.params)
            _, a, b = rk4_with_jacobians(states[:-1], inputs + p.force_d, p.dt, p.params)
            sensitivity = np.zeros((p.horizon + 1, 6, p.horizon, 3))
            for k in range(p.horizon):
                sensitivity[k + 1] = np.einsum('ij,jmc->imc', a[k], sensitivity[k])
                sensitivity[k + 1, :, k, :] += b[k]
            self._cache = (states, sensitivity)
            self._key = key
        return self._cache

    def states(self, z):
        return self._simulate(z)[0]

    def _inequality(self, z):
        _, _, slack = self.split(z)
        return self.problem.inequalities(self.states(z), slack)[0]

    def _inequality_jacobian(self, z):
        _, _, slack = self.split(z)
        states, sensitivity = self._simulate(z)
        _, d_states, d_slack = self.problem.inequalities(states, slack)
        m = d_states.shape[0]
        jac_u = np.einsum('mkd,kdjc->mjc', d_states, sensitivity).reshape(m, -1)
        return np.hstack([jac_u, d_slack]) if self.n_slack else jac_u

    def objective_gradient(self, z):
        _, inputs, _ = self.split(z)
        p = self.problem
        grad = np.zeros_like(z)
        grad[:3 * p.horizon] = (2.0 * p.weights * (inputs - p.u_l)).ravel()
        if self.n_slack:
            grad[3 * p.horizon:] = p.slack_penalty
        return grad

    def bounds(self):
        p = self.problem
        bounds = list(zip(np.tile(p.params.input_lb, p.horizon), np.tile(p.params.input_ub, p.horizon)))
        return bounds + self._slack_bounds()

    def constraints(self):
        return [{'type': 'ineq', 'fun': self._inequality, 'jac': self._inequality_jacobian}]


class _MeritGuard:
    """Accepts SLSQP iterates only when they do not increase the merit.

    A rejected iterate is backtracked toward the last accepted one by halving the step. When no fraction of the
    step helps, the last accepted iterate is kept, so the recorded merit never increases.
    """

    def __init__(self, transcription: _Transcription, z0: np.ndarray, backtracks: int = MERIT_BACKTRACKS):
        self.transcription = transcription
        self.backtracks = backtracks
        self.z = np.array(z0, dtype=float)
        self.history = [transcription.merit(self.z)]
        self.rejected = 0

    @property
    def merit(self) -> float:
        """Return the merit of the last accepted iterate."""
        return self.history[-1]

    def __call__(self, zk: np.ndarray) -> None:
        step = np.asarray(zk, dtype=float) - self.z
        fraction = 1.0
        for _ in range(self.backtracks + 1):
            candidate = self.z + fraction * step
            value = self.transcription.merit(candidate)
            if value <= self.merit:
                self.z = candidate
                self.history.append(value)
                return
            fraction *= 0.5
        self.rejected += 1


def _solve(transcription: _Transcription, inputs: np.ndarray, cfg: PsfConfig):
    z0 = transcription.initial_guess(inputs)
    guard = _MeritGuard(transcription, z0)
    result = minimize(
        transcription.objective,
        z0,
        jac=transcription.objective_gradient,
        method='SLSQP',
        bounds=transcription.bounds(),
        constraints=transcription.constraints(),
        callback=guard,
        options={'maxiter': cfg.max_iterations, 'ftol': cfg.tolerance * 1e-4},
    )
    logger.debug('SLSQP %s after %d iterations: %s', 'converged' if result.success else 'stopped', result.nit,
                 result.message)
    if guard.rejected:
        logger.debug('kept the last of %d accepted iterates, %d rejected', len(guard.history) - 1, guard.rejected)
    result.x = guard.z
    return result, guard.history


def _build_problem(
    state: VesselState,
    u_l: np.ndarray,
    obstacles: ObstacleForecast,
    force_d: np.ndarray,
    cfg: PsfConfig,
    terminal: TerminalSet,
    params: VesselParams,
) -> _Problem:
    n = cfg.horizon
    if len(obstacles) and obstacles.steps != n + 1:
        raise ValueError(f'obstacle forecast covers {obstacles.steps} steps, expected {n + 1}')
    origin = np.zeros(6)
    origin[:2] = state.position
    clearance = np.full(n + 1, cfg.d_safe)
    clearance[n] += cfg.d_f
    radii = obstacles.radii if len(obstacles) else np.zeros((0, n + 1))
    centers = obstacles.positions - state.position if len(obstacles) else np.zeros((0, n + 1, 2))
    return _Problem(
        x0=state.to_array() - origin,
        u_l=u_l,
        force_d=force_d,
        centers=centers,
        rho=radii + clearance + cfg.backoff,
        clearance=clearance,
        radii=radii,
        weights=cfg.weights(params),
        p_f=terminal.p_f_nu,
        x_lb=params.state_lb - origin,
        x_ub=params.state_ub - origin,
        params=params,
        dt=cfg.dt,
        horizon=n,
        relaxed=False,
        slack_penalty=cfg.slack_penalty,
    )


def _passes(violations: Dict[str, float], tolerance: float, keys=('obstacle', 'terminal', 'state_bounds')) -> bool:
    return all(violations[key] <= tolerance for key in keys)


def _strictly_safe(problem: _Problem, states: np.ndarray, tolerance: float) -> bool:
    """Return if a rollout satisfies the state, obstacle and terminal constraints with margin to spare."""
    if problem.centers.shape[0]:
        distances = np.linalg.norm(states[None, :, :2] - problem.centers, axis=2) - problem.radii
        if np.any(distances - problem.clearance <= tolerance):
            return False
    if states[-1, 3:] @ problem.p_f @ states[-1, 3:] >= 1.0 - tolerance:
        return False
    mask = problem.box_mask
    if mask.any():
        if np.any(states[1:, mask] <= problem.x_lb[mask] + tolerance):
            return False
        if np.any(states[1:, mask] >= problem.x_ub[mask] - tolerance):
            return False
    return True


def _initially_clear(problem: _Problem) -> bool:
    """Return if the current position already keeps ``d_safe`` from every obstacle."""
    if not problem.centers.shape[0]:
        return True
    distances = np.linalg.norm(problem.x0[:2] - problem.centers[:, 0], axis=1) - problem.radii[:, 0]
    return bool(np.all(distances >= problem.clearance[0]))


def filter_control(
    state: VesselState,
    u_l: ControlInput,
    obstacles: ObstacleForecast,
    dist_mode: DisturbanceMode,
    cfg: PsfConfig,
    terminal: TerminalSet,
    params: VesselParams,
    disturbance: Optional[Disturbance] = None,
    warm_start: Optional[np.ndarray] = None,
) -> OcpSolution:
    """Return the input closest to ``u_l`` that keeps the vessel safe over the horizon.

    :param state: The current vessel state
    :param u_l: The proposed input, clamped to the input box first and held over the horizon
    :param obstacles: Obstacle forecasts covering ``N + 1`` steps
    :param dist_mode: Whether the disturbance is predicted as given or as zero
    :param cfg: Filter settings
    :param terminal: The terminal velocity ellipsoid
    :param params: Vessel parameters
    :param disturbance: The current disturbance, used when ``dist_mode`` is known
    :param warm_start: An ``(N, 3)`` input sequence to start the solver from
    """
    start = time.perf_counter()
    n = cfg.horizon
    u_l_array = np.clip(u_l.to_array(), params.input_lb, params.input_ub)
    if dist_mode is DisturbanceMode.KNOWN and disturbance is not None:
        force_d = disturbance.to_array()
    else:
        force_d = np.zeros(3)
    problem = _build_problem(state, u_l_array, obstacles, force_d, cfg, terminal, params)
    origin = np.concatenate([state.position, np.zeros(4)])
    nominal_inputs = np.tile(u_l_array, (n, 1))

    def _finish(inputs, status, iterations=0, merit_history=None, slack_total=0.0, defect=0.0):
        inputs = np.clip(inputs, params.input_lb, params.input_ub)
        states = _rollout_arrays(problem.x0, inputs, force_d, cfg.dt, params)
        violations = problem.violations(states, inputs)
        violations['dynamics'] = float(defect)
        return OcpSolution(
            u0_seq=[ControlInput.from_array(u) for u in inputs],
            x_seq=[VesselState.from_array(x + origin) for x in states],
            delta_u=u_l_array - inputs[0],
            status=status,
            slack_total=float(slack_total),
            iterations=int(iterations),
            cost=problem.cost(inputs, None),
            max_violation=max(violations.values()),
            solve_time=time.perf_counter() - start,
            merit_history=list(merit_history or []),
            violations=violations,
        )

    nominal_states = _rollout_arrays(problem.x0, nominal_inputs, force_d, cfg.dt, params)
    if _strictly_safe(problem, nominal_states, cfg.tolerance):
        return _finish(nominal_inputs, PsfStatus.SAFE_PASSTHROUGH)

    guess = nominal_inputs if warm_start is None else np.asarray(warm_start, dtype=float).reshape(n, 3)
    transcription_cls = _MultipleShooting if cfg.transcription == 'multiple_shooting' else _SingleShooting
    weights = cfg.weights(params)

    if _initially_clear(problem):
        transcription = transcription_cls(problem)
        result, merit_history = _solve(transcription, guess, cfg)
        _, inputs, _ = transcription.split(result.x)
        defect = float(np.max(np.abs(transcription.equality_residual(result.x)), initial=0.0))
        solution = _finish(inputs, PsfStatus.MODIFIED, result.nit, merit_history, defect=defect)
        if _passes(solution.violations, cfg.tolerance):
            delta = solution.delta_u
            if math.sqrt(float(delta @ (weights * delta))) <= cfg.tolerance:
                return replace(solution, status=PsfStatus.SAFE_PASSTHROUGH)
            return solution
        logger.debug('hard problem unsolved (%s), relaxing obstacle constraints', result.message)
        guess = inputs

    relaxed = transcription_cls(replace(problem, relaxed=True))
    result, merit_history = _solve(relaxed, guess, cfg)
    _, inputs, slack = relaxed.split(result.x)
    defect = float(np.max(np.abs(relaxed.equality_residual(result.x)), initial=0.0))
    solution = _finish(
        inputs, PsfStatus.RELAXED, result.nit, merit_history, slack_total=float(np.sum(slack)), defect=defect,
    )
    if _passes(solution.violations, cfg.tolerance, keys=('terminal', 'state_bounds')):
        logger.warning('safety filter relaxed: obstacle violation %.3g m', solution.violations['obstacle'])
        return solution

    logger.warning('safety filter infeasible: %s', solution.violations)
    return replace(solution, status=PsfStatus.INFEASIBLE)


class PredictiveSafetyFilter:
    """A stateful safety filter for one vessel that warm-starts from its previous solution."""

    def __init__(
        self,
        params: VesselParams,
        config: Optional[PsfConfig] = None,
        terminal: Optional[TerminalSet] = None,
    ):
        self.params = params
        self.config = config or PsfConfig()
        self.terminal = terminal or build_terminal_set(params, self.config)
        self.dist_mode = DisturbanceMode(self.config.disturbance_mode)
        self._previous: Optional[Tuple[float, np.ndarray, np.ndarray]] = None

    def reset(self) -> None:
        """Forget the previous solution."""
        self._previous = None

    def _warm_start(self, t: float) -> Optional[np.ndarray]:
        """Shift the previous inputs by the elapsed steps and continue with the terminal controller."""
        if self._previous is None:
            return None
        t_previous, inputs, x_last = self._previous
        shift = int(round((t - t_previous) / self.config.dt))
        if shift < 0 or shift >= len(inputs):
            return None
        x = x_last.copy()
        tail = np.empty((shift, 3))
        for k in range(shift):
            tail[k] = np.clip(-self.terminal.gain @ x[3:], self.params.input_lb, self.params.input_ub)
            x = rk4_arrays(x, tail[k], self.config.dt, self.params)
        return np.concatenate([inputs[shift:], tail])

    def filter(
        self,
        state: VesselState,
        u_l: ControlInput,
        obstacles: ObstacleForecast,
        t: float = 0.0,
        disturbance: Optional[Disturbance] = None,
    ) -> OcpSolution:
        """Filter a proposed input at time ``t``."""
        solution = filter_control(
            state, u_l, obstacles, self.dist_mode, self.config, self.terminal, self.params,
            disturbance=disturbance, warm_start=self._warm_start(t),
        )
        if solution.status is PsfStatus.SAFE_PASSTHROUGH and solution.iterations == 0:
            self._previous = None
        else:
            self._previous = (
                t, np.array([u.to_array() for u in solution.u0_seq]), solution.x_seq[-1].to_array(),
            )
        return solution
