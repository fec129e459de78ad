"""Geodesic flow, parallel transport, and parallel normal frames.

Integration is classical one-step RK4 on a fixed arc-length grid.  Sphere
models integrate the ambient second-order equation with constraint
projection after every step; the Berger sphere integrates the reduced
first-order system on the frame coefficients and reconstructs the unit
quaternion alongside.  All integrators accept a leading batch axis, so a
bundle of geodesics advances in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError
from .geometry import (
    BergerSphere,
    ManifoldModel,
    Point,
    Tangent,
    make_point,
    make_tangent,
    quat_mul,
    unwrap,
)

DEFAULT_STEP = 1e-3
UNIT_SPEED_TOL = 1e-8


def time_grid(horizon, step):
    """Sample times: multiples of ``step`` plus the horizon endpoint."""
    if step <= 0 or horizon <= 0:
        raise ParameterError("step and horizon must be positive")
    if step > horizon:
        raise ParameterError("step must not exceed the horizon")
    n = int(np.floor(horizon / step + 1e-12))
    times = step * np.arange(n + 1)
    if horizon - times[-1] > 1e-12 * max(1.0, horizon):
        times = np.append(times, horizon)
    else:
        times[-1] = horizon
    return times


# ---------------------------------------------------------------------------
# right-hand sides


def _euler_rhs(weights, w):
    """Reduced geodesic equation on the frame coefficients."""
    return 2.0 * np.cross(weights * w, w) / weights


def _berger_state_rhs(weights, q, w):
    zeros = np.zeros(w.shape[:-1] + (1,), dtype=float)
    dq = quat_mul(q, np.concatenate([zeros, w], axis=-1))
    return dq, _euler_rhs(weights, w)


def _sphere_state_rhs(x, v):
    speed2 = np.einsum("...i,...i->...", v, v)[..., None]
    return v, -speed2 * x


def _project_state(core, x, v):
    x = x / np.linalg.norm(x, axis=-1, keepdims=True)
    v = core.project_tangent(x, v)
    return x, v


# ---------------------------------------------------------------------------
# batched flows


def flow_arrays(model, x0, v0, times):
    """Integrate the geodesic equation from (x0, v0) over ``times``.

    ``x0`` has shape (..., point_dim) and ``v0`` (..., tangent_dim); the
    returned arrays prepend the time axis.
    """
    core, _ = unwrap(model)
    T = len(times)
    X = np.empty((T,) + x0.shape)
    V = np.empty((T,) + v0.shape)
    X[0], V[0] = x0, v0
    x, v = np.array(x0, dtype=float), np.array(v0, dtype=float)
    if isinstance(core, BergerSphere):
        weights = core.metric_weights
        for i in range(T - 1):
            h = times[i + 1] - times[i]
            k1q, k1w = _berger_state_rhs(weights, x, v)
            k2q, k2w = _berger_state_rhs(weights, x + 0.5 * h * k1q, v + 0.5 * h * k1w)
            k3q, k3w = _berger_state_rhs(weights, x + 0.5 * h * k2q, v + 0.5 * h * k2w)
            k4q, k4w = _berger_state_rhs(weights, x + h * k3q, v + h * k3w)
            x = x + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
            v = v + h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
            x = x / np.linalg.norm(x, axis=-1, keepdims=True)
            X[i + 1], V[i + 1] = x, v
    else:
        for i in range(T - 1):
            h = times[i + 1] - times[i]
            k1x, k1v = _sphere_state_rhs(x, v)
            k2x, k2v = _sphere_state_rhs(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
            k3x, k3v = _sphere_state_rhs(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
            k4x, k4v = _sphere_state_rhs(x + h * k3x, v + h * k3v)
            x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            x, v = _project_state(core, x, v)
            X[i + 1], V[i + 1] = x, v
    return X, V


def _state_derivatives(model, X, V):
    core, _ = unwrap(model)
    if isinstance(core, BergerSphere):
        return _berger_state_rhs(core.metric_weights, X, V)
    return _sphere_state_rhs(X, V)


def hermite_midpoints(model, times, X, V):
    """4th-order-accurate states at interval midpoints from node data.

    Uses the cubic Hermite midpoint formulas with the exact state
    derivatives, then re-projects onto the constraint set.
    """
    core, _ = unwrap(model)
    h = np.diff(times)
    dX, dV = _state_derivatives(model, X, V)
    hx = h.reshape((-1,) + (1,) * (X.ndim - 1))
    hv = h.reshape((-1,) + (1,) * (V.ndim - 1))
    Xm = 0.5 * (X[:-1] + X[1:]) + hx / 8.0 * (dX[:-1] - dX[1:])
    Vm = 0.5 * (V[:-1] + V[1:]) + hv / 8.0 * (dV[:-1] - dV[1:])
    Xm = Xm / np.linalg.norm(Xm, axis=-1, keepdims=True)
    if not isinstance(core, BergerSphere):
        Vm = core.project_tangent(Xm, Vm)
    return Xm, Vm


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class GeodesicState:
    """A point together with the velocity attached to it."""

    point: Point
    velocity: Tangent


@dataclass(eq=False)
class Trajectory:
    """A sampled geodesic with cubic Hermite interpolation between samples.

    ``points`` has shape (T, point_dim) and ``velocities`` (T, tangent_dim);
    ``times`` is the arc-length grid.  Instances are treated as immutable
    after construction.
    """

    model: ManifoldModel
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    step: float

    def __post_init__(self):
        self._mid = None

    def __len__(self):
        return len(self.times)

    @property
    def horizon(self):
        return float(self.times[-1])

    def speeds(self):
        return np.sqrt(self.model.inner(self.velocities, self.velocities))

    @property
    def speed_drift(self):
        s = self.speeds()
        return float(np.max(np.abs(s - s[0])) / max(s[0], 1e-300))

    @property
    def unit_speed(self):
        return bool(np.max(np.abs(self.speeds() - 1.0)) < UNIT_SPEED_TOL)

    def midpoint_states(self):
        if self._mid is None:
            self._mid = hermite_midpoints(self.model, self.times, self.points, self.velocities)
        return self._mid

    def state(self, i):
        p = Point(self.points[i])
        return GeodesicState(p, Tangent(p, self.velocities[i]))

    @property
    def states(self):
        return [self.state(i) for i in range(len(self.times))]

    def _interval(self, t):
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ParameterError("time outside the trajectory domain")
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(i, 0), len(self.times) - 2)

    def state_at(self, t):
        """Hermite-interpolated state at time ``t``, projected to the model."""
        t = float(t)
        i = self._interval(t)
        t0, t1 = self.times[i], self.times[i + 1]
        h = t1 - t0
        s = (t - t0) / h
        x0, x1 = self.points[i], self.points[i + 1]
        v0, v1 = self.velocities[i], self.velocities[i + 1]
        (dx0, dv0) = tuple(a[0] for a in _state_derivatives(self.model, x0[None], v0[None]))
        (dx1, dv1) = tuple(a[0] for a in _state_derivatives(self.model, x1[None], v1[None]))
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s**2 * (3 - 2 * s)
        h11 = s**2 * (s - 1)
        x = h00 * x0 + h10 * h * dx0 + h01 * x1 + h11 * h * dx1
        v = h00 * v0 + h10 * h * dv0 + h01 * v1 + h11 * h * dv1
        core, _ = unwrap(self.model)
        x = x / np.linalg.norm(x)
        if not isinstance(core, BergerSphere):
            v = core.project_tangent(x, v)
        p = Point(x)
        return GeodesicState(p, Tangent(p, v))


def geodesic_flow(model, initial, horizon, step=DEFAULT_STEP):
    """Integrate the geodesic through ``initial`` for the given arc length."""
    times = time_grid(horizon, step)
    x0 = initial.point.coordinates
    v0 = initial.velocity.components
    if not np.allclose(initial.velocity.base.coordinates, x0, rtol=0.0, atol=1e-12):
        raise DomainError("initial velocity must be based at the initial point")
    model.validate_point(x0)
    model.validate_tangent(x0, v0)
    X, V = flow_arrays(model, x0, v0, times)
    return Trajectory(model, times, X, V, float(step))


def exp_map(model, p, v, step=DEFAULT_STEP):
    """Endpoint of the geodesic from ``p`` with initial vector ``v``.

    The geodesic runs for arc length ``|v|_g`` with unit initial velocity
    ``v / |v|_g``; a zero vector maps to ``p`` itself.
    """
    length = float(np.sqrt(model.inner(v.components, v.components)))
    if length < 1e-14:
        return p
    h = min(step, length / 8.0)
    unit = Tangent(p, v.components / length)
    traj = geodesic_flow(model, GeodesicState(p, unit), length, h)
    return make_point(model, traj.points[-1])


# ---------------------------------------------------------------------------
# parallel transport


def _transport_rhs(core, w, x, v):
    """Covariant-constancy equation for a field ``w`` along velocity ``v`` at ``x``."""
    if isinstance(core, BergerSphere):
        g = core.metric_weights
        return -np.cross(v, w) + (np.cross(g * w, v) + np.cross(g * v, w)) / g
    out = -np.einsum("...i,...i->...", w, v)[..., None] * x
    if core.kind == "cpn":
        from .geometry import jmul

        jx, jv = jmul(x), jmul(v)
        out = out - np.einsum("...i,...i->...", w, jv)[..., None] * jx
    return out


def transport_arrays(model, times, X, V, Xm, Vm, w0):
    """Parallel-transport ``w0`` (..., m, tangent_dim) along a sampled geodesic."""
    core, _ = unwrap(model)
    T = len(times)
    W = np.empty((T,) + w0.shape)
    W[0] = w0
    w = np.array(w0, dtype=float)
    sphere = not isinstance(core, BergerSphere)
    for i in range(T - 1):
        h = times[i + 1] - times[i]
        x0, v0 = X[i][..., None, :], V[i][..., None, :]
        xm, vm = Xm[i][..., None, :], Vm[i][..., None, :]
        x1, v1 = X[i + 1][..., None, :], V[i + 1][..., None, :]
        k1 = _transport_rhs(core, w, x0, v0)
        k2 = _transport_rhs(core, w + 0.5 * h * k1, xm, vm)
        k3 = _transport_rhs(core, w + 0.5 * h * k2, xm, vm)
        k4 = _transport_rhs(core, w + h * k3, x1, v1)
        w = w + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if sphere:
            w = core.project_tangent(x1, w)
        W[i + 1] = w
    return W


def _grid_index(times, t):
    i = int(np.searchsorted(times, t))
    for j in (i - 1, i, i + 1):
        if 0 <= j < len(times) and abs(times[j] - t) <= 1e-12 * max(1.0, times[-1]):
            return j
    return None


def parallel_transport(trajectory, v0, t_from, t_to):
    """Transport ``v0`` from gamma(t_from) to gamma(t_to) along the trajectory."""
    model = trajectory.model
    core, _ = unwrap(model)
    lo, hi = trajectory.times[0], trajectory.times[-1]
    for t in (t_from, t_to):
        if t < lo - 1e-12 or t > hi + 1e-12:
            raise ParameterError("transport endpoints must lie in the trajectory domain")
    start = trajectory.state_at(t_from)
    if model.point_distance(start.point.coordinates, v0.base.coordinates) > 1e-8:
        raise DomainError("vector is not based at gamma(t_from)")
    model.validate_tangent(start.point.coordinates, v0.components)

    if t_to == t_from:
        return Tangent(start.point, np.array(v0.components, dtype=float))

    i_from = _grid_index(trajectory.times, t_from)
    i_to = _grid_index(trajectory.times, t_to)
    if i_from is not None and i_to is not None:
        # fast path: both endpoints are sample times
        times, X, V = trajectory.times, trajectory.points, trajectory.velocities
        Xm, Vm = trajectory.midpoint_states()
        if i_to > i_from:
            ts_, X_, V_ = times[i_from : i_to + 1], X[i_from : i_to + 1], V[i_from : i_to + 1]
            Xm_, Vm_ = Xm[i_from:i_to], Vm[i_from:i_to]
        else:
            sel = slice(i_to, i_from + 1)
            ts_, X_, V_ = times[sel][::-1], X[sel][::-1], V[sel][::-1]
            Xm_, Vm_ = Xm[i_to:i_from][::-1], Vm[i_to:i_from][::-1]
        W = transport_arrays(model, ts_, X_, V_, Xm_, Vm_, v0.components[None, :])
        end = trajectory.state(i_to)
        return Tangent(end.point, W[-1, 0])

    # general path: fractional endpoints, states interpolated per step
    a, b = (t_from, t_to) if t_from < t_to else (t_to, t_from)
    inner = trajectory.times[(trajectory.times > a + 1e-12) & (trajectory.times < b - 1e-12)]
    nodes = np.concatenate([[a], inner, [b]])
    if t_to < t_from:
        nodes = nodes[::-1]

    sphere = not isinstance(core, BergerSphere)
    w = np.array(v0.components, dtype=float)
    for i in range(len(nodes) - 1):
        t0, t1 = nodes[i], nodes[i + 1]
        h = t1 - t0
        s0 = trajectory.state_at(t0)
        sm = trajectory.state_at(0.5 * (t0 + t1))
        s1 = trajectory.state_at(t1)
        x0, v0c = s0.point.coordinates, s0.velocity.components
        xm, vmc = sm.point.coordinates, sm.velocity.components
        x1, v1c = s1.point.coordinates, s1.velocity.components
        k1 = _transport_rhs(core, w, x0, v0c)
        k2 = _transport_rhs(core, w + 0.5 * h * k1, xm, vmc)
        k3 = _transport_rhs(core, w + 0.5 * h * k2, xm, vmc)
        k4 = _transport_rhs(core, w + h * k3, x1, v1c)
        w = w + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if sphere:
            w = core.project_tangent(x1, w)
    end = trajectory.state_at(t_to)
    return Tangent(end.point, w)


# ---------------------------------------------------------------------------
# parallel normal frames


@dataclass(eq=False)
class ParallelField:
    """A parallel vector field along a trajectory, one vector per sample."""

    trajectory: Trajectory
    components: np.ndarray

    @property
    def vectors(self):
        return [
            Tangent(Point(self.trajectory.points[i]), self.components[i])
            for i in range(len(self.trajectory.times))
        ]

    def at_index(self, i):
        return Tangent(Point(self.trajectory.points[i]), self.components[i])


def initial_normal_frame(model, x0, v0):
    """Index-ordered Gram-Schmidt of the coordinate basis against gamma'(0).

    Returns an array of shape (..., dim-1, tangent_dim) of g-orthonormal
    vectors orthogonal to ``v0``.
    """
    single = x0.ndim == 1
    xb = x0[None] if single else x0
    vb = v0[None] if single else v0
    B = xb.shape[0]
    k = model.dim - 1
    cands = model.tangent_basis(xb)
    out = np.empty((B, k, model.tangent_dim))
    for b in range(B):
        speed = np.sqrt(float(model.inner(vb[b], vb[b])))
        basis = [vb[b] / speed]
        for m in range(cands.shape[-2]):
            w = np.array(cands[b, m], dtype=float)
            for e in basis:
                w = w - float(model.inner(w, e)) * e
            nrm = np.sqrt(float(model.inner(w, w)))
            if nrm > 1e-8:
                basis.append(w / nrm)
            if len(basis) == k + 1:
                break
        if len(basis) != k + 1:
            raise DomainError("could not complete a normal frame at the base point")
        out[b] = np.stack(basis[1:])
    return out[0] if single else out


def frame_arrays(model, times, X, V, Xm, Vm):
    """Parallel g-orthonormal normal frame along a batched geodesic bundle."""
    E0 = initial_normal_frame(model, X[0], V[0])
    return transport_arrays(model, times, X, V, Xm, Vm, E0)


def normal_frame(trajectory):
    """The dim-1 parallel normal fields along a unit-speed trajectory."""
    if not trajectory.unit_speed:
        raise DomainError("normal_frame requires a unit-speed trajectory")
    Xm, Vm = trajectory.midpoint_states()
    E = frame_arrays(
        trajectory.model,
        trajectory.times,
        trajectory.points,
        trajectory.velocities,
        Xm,
        Vm,
    )
    return [ParallelField(trajectory, E[:, a, :]) for a in range(E.shape[1])]
