# -*- coding: utf-8 -*-

"""Three degree-of-freedom vessel model.

The state is the pose ``eta = (x_s, y_s, psi)`` in the world frame followed by the body-fixed velocity
``nu = (u, v, r)``. The kinetics are

    M nu_dot + C(nu) nu + D(nu) nu = tau + tau_d

with a constant mass matrix ``M``, a Coriolis-centripetal matrix ``C(nu)`` derived from ``M`` and a damping
matrix ``D(nu) = D_L + diag(d_q * |nu|)``. The kinematics are ``eta_dot = R(psi) nu``.

Array-level helpers (:func:`state_rates`, :func:`rk4_arrays`, :func:`rk4_with_jacobians`) broadcast over
leading dimensions so the safety filter can evaluate a whole horizon in one call.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Tuple

import numpy as np
import yaml

from .constants import DEFAULT_VESSEL_PATH, VESSEL_SCHEMA
from .exceptions import IntegrationDivergedError, ScenarioParseError, VesselParamsError
from .utils import wrap_to_pi

__all__ = [
    'VesselState',
    'ControlInput',
    'Disturbance',
    'VesselParams',
    'Linearization',
    'rotation_matrix',
    'coriolis_matrix',
    'damping_matrix',
    'derivative',
    'step_rk4',
    'linearize',
    'kinetic_energy',
    'max_stable_time_step',
    'state_rates',
    'rk4_arrays',
    'rk4_with_jacobians',
    'load_vessel_params',
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VesselState:
    """Pose and body-fixed velocity of the vessel."""

    x_s: float
    y_s: float
    psi: float
    u: float = 0.0
    v: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        values = (self.x_s, self.y_s, self.psi, self.u, self.v, self.r)
        if not all(math.isfinite(value) for value in values):
            raise ValueError(f'vessel state must be finite: {values}')
        object.__setattr__(self, 'psi', wrap_to_pi(float(self.psi)))

    @classmethod
    def from_array(cls, x: np.ndarray) -> VesselState:
        """Build a state from a 6-vector."""
        return cls(*(float(value) for value in x))

    def to_array(self) -> np.ndarray:
        """Return the extended state as a 6-vector."""
        return np.array([self.x_s, self.y_s, self.psi, self.u, self.v, self.r])

    @property
    def position(self) -> np.ndarray:
        """Return the position as a 2-vector."""
        return np.array([self.x_s, self.y_s])

    @property
    def nu(self) -> np.ndarray:
        """Return the body-fixed velocity."""
        return np.array([self.u, self.v, self.r])


@dataclass(frozen=True)
class ControlInput:
    """Generalized surge force, sway force and yaw moment."""

    tau_u: float = 0.0
    tau_v: float = 0.0
    tau_r: float = 0.0

    @classmethod
    def from_array(cls, tau: np.ndarray) -> ControlInput:
        """Build an input from a 3-vector."""
        return cls(*(float(value) for value in tau))

    def to_array(self) -> np.ndarray:
        """Return the input as a 3-vector."""
        return np.array([self.tau_u, self.tau_v, self.tau_r])

    def clamp(self, params: VesselParams) -> ControlInput:
        """Clamp every component into the input box of ``params``."""
        return ControlInput.from_array(np.clip(self.to_array(), params.input_lb, params.input_ub))


@dataclass(frozen=True)
class Disturbance:
    """Generalized environmental forces acting on the hull."""

    tau_d1: float = 0.0
    tau_d2: float = 0.0
    tau_d3: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(value) for value in (self.tau_d1, self.tau_d2, self.tau_d3)):
            raise ValueError('disturbance must be finite')

    @classmethod
    def from_array(cls, tau: np.ndarray) -> Disturbance:
        """Build a disturbance from a 3-vector."""
        return cls(*(float(value) for value in tau))

    def to_array(self) -> np.ndarray:
        """Return the disturbance as a 3-vector."""
        return np.array([self.tau_d1, self.tau_d2, self.tau_d3])


@dataclass(frozen=True, eq=False)
class VesselParams:
    """Mass, damping and bounds of a vessel.

    The inverse mass matrix is computed once at construction.
    """

    mass: np.ndarray
    damping_linear: np.ndarray
    damping_quadratic: np.ndarray
    input_lb: np.ndarray
    input_ub: np.ndarray
    state_lb: np.ndarray
    state_ub: np.ndarray
    collision_radius: float = 3.0
    name: str = 'vessel'
    m_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        arrays = {
            'mass': (self.mass, (3, 3)),
            'damping_linear': (self.damping_linear, (3, 3)),
            'damping_quadratic': (self.damping_quadratic, (3,)),
            'input_lb': (self.input_lb, (3,)),
            'input_ub': (self.input_ub, (3,)),
            'state_lb': (self.state_lb, (6,)),
            'state_ub': (self.state_ub, (6,)),
        }
        for name, (value, shape) in arrays.items():
            array = np.array(value, dtype=float)
            if array.shape != shape:
                raise VesselParamsError(f'{name} must have shape {shape}, got {array.shape}')
            array.setflags(write=False)
            object.__setattr__(self, name, array)

        if not np.allclose(self.mass, self.mass.T, atol=1e-12):
            raise VesselParamsError('mass matrix must be symmetric')
        try:
            np.linalg.cholesky(self.mass)
        except np.linalg.LinAlgError:
            raise VesselParamsError('mass matrix must be positive definite') from None

        symmetric_part = 0.5 * (self.damping_linear + self.damping_linear.T)
        if np.linalg.eigvalsh(symmetric_part).min() < -1e-12:
            raise VesselParamsError('linear damping must be positive semidefinite')
        if np.any(self.damping_quadratic < 0):
            raise VesselParamsError('quadratic damping coefficients must be non-negative')
        if not np.all(np.isfinite(self.input_lb)) or not np.all(np.isfinite(self.input_ub)):
            raise VesselParamsError('input bounds must be finite')
        if np.any(self.input_lb > self.input_ub) or np.any(self.state_lb > self.state_ub):
            raise VesselParamsError('lower bounds must not exceed upper bounds')
        if not np.all(np.isfinite(self.state_lb[3:])) or not np.all(np.isfinite(self.state_ub[3:])):
            raise VesselParamsError('velocity bounds must be finite')
        if self.collision_radius < 0:
            raise VesselParamsError('collision radius must be non-negative')

        m_inv = np.linalg.inv(self.mass)
        m_inv.setflags(write=False)
        object.__setattr__(self, 'm_inv', m_inv)

    @property
    def input_max(self) -> np.ndarray:
        """Return the per-axis largest input magnitude."""
        return np.maximum(np.abs(self.input_lb), np.abs(self.input_ub))

    @property
    def velocity_lb(self) -> np.ndarray:
        """Return the lower velocity bounds."""
        return self.state_lb[3:]

    @property
    def velocity_ub(self) -> np.ndarray:
        """Return the upper velocity bounds."""
        return self.state_ub[3:]

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], prefix: str = 'vessel') -> VesselParams:
        """Build parameters from a parsed vessel document.

        :param data: The parsed document
        :param prefix: The field path used in error messages
        :raises ScenarioParseError: if the document does not follow the vessel schema
        """
        if not isinstance(data, Mapping):
            raise ScenarioParseError(prefix, 'expected a mapping')

        known = {'schema', 'name', 'mass', 'damping', 'bounds', 'collision_radius'}
        unknown = set(data) - known
        if unknown:
            raise ScenarioParseError(f'{prefix}.{sorted(unknown)[0]}', 'unknown key')

        schema = data.get('schema', VESSEL_SCHEMA)
        if schema != VESSEL_SCHEMA:
            raise ScenarioParseError(f'{prefix}.schema', f'expected {VESSEL_SCHEMA!r}, got {schema!r}')

        damping = data.get('damping') or {}
        bounds = data.get('bounds') or {}
        input_bounds = bounds.get('input') or {}
        state_bounds = bounds.get('state') or {}

        return cls(
            mass=_matrix(data.get('mass'), f'{prefix}.mass'),
            damping_linear=_matrix(damping.get('linear'), f'{prefix}.damping.linear'),
            damping_quadratic=_vector(damping.get('quadratic'), 3, f'{prefix}.damping.quadratic'),
            input_lb=_vector(input_bounds.get('lower'), 3, f'{prefix}.bounds.input.lower'),
            input_ub=_vector(input_bounds.get('upper'), 3, f'{prefix}.bounds.input.upper'),
            state_lb=_vector(state_bounds.get('lower'), 6, f'{prefix}.bounds.state.lower'),
            state_ub=_vector(state_bounds.get('upper'), 6, f'{prefix}.bounds.state.upper'),
            collision_radius=float(data.get('collision_radius', 3.0)),
            name=str(data.get('name', 'vessel')),
        )

    def to_dict(self) -> dict:
        """Serialize to a document that :meth:`from_dict` reads back."""
        return {
            'schema': VESSEL_SCHEMA,
            'name': self.name,
            'mass': self.mass.tolist(),
            'damping': {
                'linear': self.damping_linear.tolist(),
                'quadratic': self.damping_quadratic.tolist(),
            },
            'bounds': {
                'input': {'lower': self.input_lb.tolist(), 'upper': self.input_ub.tolist()},
                'state': {'lower': self.state_lb.tolist(), 'upper': self.state_ub.tolist()},
            },
            'collision_radius': float(self.collision_radius),
        }

    @classmethod
    def default(cls) -> VesselParams:
        """Load the packaged default vessel."""
        return load_vessel_params(DEFAULT_VESSEL_PATH)


def _matrix(value: Any, path: str) -> np.ndarray:
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioParseError(path, 'expected a 3x3 matrix of numbers') from None
    if array.shape != (3, 3):
        raise ScenarioParseError(path, 'expected a 3x3 matrix of numbers')
    return array


def _vector(value: Any, size: int, path: str) -> np.ndarray:
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioParseError(path, f'expected a list of {size} numbers') from None
    if array.shape != (size,):
        raise ScenarioParseError(path, f'expected a list of {size} numbers')
    return array


def load_vessel_params(path: Optional[str] = None) -> VesselParams:
    """Load vessel parameters from a YAML file.

    :param path: The vessel parameter file. Defaults to the packaged vessel.
    """
    path = path or DEFAULT_VESSEL_PATH
    with open(path) as file:
        try:
            data = yaml.safe_load(file)
        except yaml.YAMLError as e:
            raise ScenarioParseError('vessel', f'invalid YAML: {e}') from None
    params = VesselParams.from_dict(data)
    logger.debug('loaded vessel %s from %s', params.name, path)
    return params


def rotation_matrix(psi: float) -> np.ndarray:
    """Return the rotation from the body frame to the world frame."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([
        [c, -s, 0.0],
        [s, c, 0.0],
        [0.0, 0.0, 1.0],
    ])


def coriolis_matrix(nu: np.ndarray, params: VesselParams) -> np.ndarray:
    """Return the skew-symmetric Coriolis-centripetal matrix C(nu) built from the mass matrix."""
    m = params.mass
    c13 = -(m[1] @ nu)
    c23 = m[0] @ nu
    return np.array([
        [0.0, 0.0, c13],
        [0.0, 0.0, c23],
        [-c13, -c23, 0.0],
    ])


def damping_matrix(nu: np.ndarray, params: VesselParams) -> np.ndarray:
    """Return D(nu) = D_L + diag(d_q * |nu|)."""
    return params.damping_linear + np.diag(params.damping_quadratic * np.abs(nu))


def _velocity_rates(nu: np.ndarray, force: np.ndarray, params: VesselParams) -> np.ndarray:
    m = params.mass
    a = nu @ m[1]
    b = nu @ m[0]
    u, v, r = nu[..., 0], nu[..., 1], nu[..., 2]
    coriolis = np.stack([-a * r, b * r, a * u - b * v], axis=-1)
    damping = nu @ params.damping_linear.T + params.damping_quadratic * np.abs(nu) * nu
    return (force - coriolis - damping) @ params.m_inv.T


def state_rates(x: np.ndarray, force: np.ndarray, params: VesselParams) -> np.ndarray:
    """Evaluate the extended-state derivative for arrays of states.

    :param x: States with shape ``(..., 6)``
    :param force: Total generalized force ``tau + tau_d`` with shape ``(..., 3)``
    :param params: Vessel parameters
    """
    psi, u, v, r = x[..., 2], x[..., 3], x[..., 4], x[..., 5]
    c, s = np.cos(psi), np.sin(psi)
    eta_dot = np.stack([c * u - s * v, s * u + c * v, r], axis=-1)
    return np.concatenate([eta_dot, _velocity_rates(x[..., 3:], force, params)], axis=-1)


def _state_jacobian(x: np.ndarray, params: VesselParams) -> np.ndarray:
    """Jacobian of :func:`state_rates` with respect to the state, shape ``(..., 6, 6)``."""
    m = params.mass
    psi, u, v, r = x[..., 2], x[..., 3], x[..., 4], x[..., 5]
    nu = x[..., 3:]
    c, s = np.cos(psi), np.sin(psi)
    a = nu @ m[1]
    b = nu @ m[0]

    jac = np.zeros(x.shape[:-1] + (6, 6))
    jac[..., 0, 2] = -s * u - c * v
    jac[..., 1, 2] = c * u - s * v
    jac[..., 0, 3] = c
    jac[..., 0, 4] = -s
    jac[..., 1, 3] = s
    jac[..., 1, 4] = c
    jac[..., 2, 5] = 1.0

    coriolis = np.zeros(x.shape[:-1] + (3, 3))
    coriolis[..., 0, :] = -r[..., None] * m[1]
    coriolis[..., 0, 2] -= a
    coriolis[..., 1, :] = r[..., None] * m[0]
    coriolis[..., 1, 2] += b
    coriolis[..., 2, :] = u[..., None] * m[1] - v[..., None] * m[0]
    coriolis[..., 2, 0] += a
    coriolis[..., 2, 1] -= b

    damping = np.broadcast_to(params.damping_linear, coriolis.shape).copy()
    idx = np.arange(3)
    damping[..., idx, idx] += 2.0 * params.damping_quadratic * np.abs(nu)

    jac[..., 3:, 3:] = -np.einsum('ij,...jk->...ik', params.m_inv, coriolis + damping)
    return jac


def _input_jacobian(params: VesselParams) -> np.ndarray:
    jac = np.zeros((6, 3))
    jac[3:, :] = params.m_inv
    return jac


def rk4_arrays(x: np.ndarray, force: np.ndarray, dt: float, params: VesselParams) -> np.ndarray:
    """Take one classical Runge-Kutta step for arrays of states, holding the force constant."""
    k1 = state_rates(x, force, params)
    k2 = state_rates(x + 0.5 * dt * k1, force, params)
    k3 = state_rates(x + 0.5 * dt * k2, force, params)
    k4 = state_rates(x + dt * k3, force, params)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_with_jacobians(
    x: np.ndarray,
    force: np.ndarray,
    dt: float,
    params: VesselParams,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Take one Runge-Kutta step and differentiate it through all four stages.

    :return: The next states ``(..., 6)``, the state Jacobians ``(..., 6, 6)`` and the input
        Jacobians ``(..., 6, 3)``
    """
    eye = np.broadcast_to(np.eye(6), x.shape[:-1] + (6, 6))
    b = np.broadcast_to(_input_jacobian(params), x.shape[:-1] + (6, 3))

    k1 = state_rates(x, force, params)
    a1 = _state_jacobian(x, params)
    dk1_dx, dk1_du = a1, b

    x2 = x + 0.5 * dt * k1
    a2 = _state_jacobian(x2, params)
    k2 = state_rates(x2, force, params)
    dk2_dx = a2 @ (eye + 0.5 * dt * dk1_dx)
    dk2_du = a2 @ (0.5 * dt * dk1_du) + b

    x3 = x + 0.5 * dt * k2
    a3 = _state_jacobian(x3, params)
    k3 = state_rates(x3, force, params)
    dk3_dx = a3 @ (eye + 0.5 * dt * dk2_dx)
    dk3_du = a3 @ (0.5 * dt * dk2_du) + b

    x4 = x + dt * k3
    a4 = _state_jacobian(x4, params)
    k4 = state_rates(x4, force, params)
    dk4_dx = a4 @ (eye + dt * dk3_dx)
    dk4_du = a4 @ (dt * dk3_du) + b

    x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    jac_x = eye + dt / 6.0 * (dk1_dx + 2.0 * dk2_dx + 2.0 * dk3_dx + dk4_dx)
    jac_u = dt / 6.0 * (dk1_du + 2.0 * dk2_du + 2.0 * dk3_du + dk4_du)
    return x_next, jac_x, jac_u


def _force(control: ControlInput, dist: Optional[Disturbance]) -> np.ndarray:
    force = control.to_array()
    if dist is not None:
        force = force + dist.to_array()
    return force


def derivative(
    state: VesselState,
    control: ControlInput,
    dist: Optional[Disturbance],
    params: VesselParams,
) -> np.ndarray:
    """Return the time derivative of the extended state.

    :param state: The current state
    :param control: The commanded generalized forces
    :param dist: The environmental disturbance, or None for calm water
    :param params: Vessel parameters
    """
    return state_rates(state.to_array(), _force(control, dist), params)


def step_rk4(
    state: VesselState,
    control: ControlInput,
    dist: Optional[Disturbance],
    params: VesselParams,
    dt: float,
) -> VesselState:
    """Advance the vessel by one fixed Runge-Kutta step.

    :raises ValueError: if ``dt`` is not positive
    :raises IntegrationDivergedError: if the step leaves the finite numbers
    """
    if not dt > 0:
        raise ValueError(f'time step must be positive, got {dt}')
    x_next = rk4_arrays(state.to_array(), _force(control, dist), dt, params)
    if not np.all(np.isfinite(x_next)):
        raise IntegrationDivergedError(f'non-finite state after step from {state}')
    return VesselState.from_array(x_next)


@dataclass(frozen=True, eq=False)
class Linearization:
    """Jacobians of the vessel model around an operating point."""

    a: np.ndarray
    b: np.ndarray
    method: str
    dt: Optional[float] = None

    @property
    def discrete(self) -> bool:
        """Return if the Jacobians belong to one integration step."""
        return self.dt is not None


def _finite_difference(fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    columns = []
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        forward, backward = x.copy(), x.copy()
        forward[i] += h
        backward[i] -= h
        columns.append((fn(forward) - fn(backward)) / (2.0 * h))
    return np.stack(columns, axis=-1)


def linearize(
    state: VesselState,
    control: ControlInput,
    params: VesselParams,
    dist: Optional[Disturbance] = None,
    dt: Optional[float] = None,
    method: str = 'analytic',
) -> Linearization:
    """Linearize the vessel model around ``(state, control)``.

    :param dt: If given, return the Jacobians of one Runge-Kutta step of this length instead of the
        continuous-time Jacobians
    :param method: Either ``analytic`` or ``finite_difference``
    """
    x = state.to_array()
    force = _force(control, dist)

    if method == 'analytic':
        if dt is None:
            a, b = _state_jacobian(x, params), _input_jacobian(params)
        else:
            _, a, b = rk4_with_jacobians(x, force, dt, params)
    elif method == 'finite_difference':
        if dt is None:
            a = _finite_difference(lambda xx: state_rates(xx, force, params), x)
            b = _finite_difference(lambda ff: state_rates(x, ff, params), force)
        else:
            a = _finite_difference(lambda xx: rk4_arrays(xx, force, dt, params), x)
            b = _finite_difference(lambda ff: rk4_arrays(x, ff, dt, params), force)
    else:
        raise ValueError(f'unknown linearization method: {method}')

    return Linearization(a=a, b=b, method=method, dt=dt)


def kinetic_energy(state: VesselState, params: VesselParams) -> float:
    """Return the kinetic energy 0.5 nu^T M nu."""
    nu = state.nu
    return 0.5 * float(nu @ params.mass @ nu)


def max_stable_time_step(params: VesselParams) -> float:
    """Return the largest Runge-Kutta step that stays on the stable real axis over the velocity box."""
    nu_max = np.maximum(np.abs(params.velocity_lb), np.abs(params.velocity_ub))
    damping = params.damping_linear + np.diag(params.damping_quadratic * nu_max)
    rho = np.abs(np.linalg.eigvals(params.m_inv @ damping)).max()
    return 2.78 / rho
