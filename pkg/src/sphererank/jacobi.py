"""The matrix Jacobi equation: propagation, conjugate points, comparison bounds.

Working in a parallel g-orthonormal normal frame reduces the Jacobi equation
along a unit-speed geodesic to the linear system ``y'' + K(t) y = 0`` where
``K_ab(t) = <R(E_a, v) v, E_b>``.  The fundamental matrix solution with
``M(0) = 0`` and ``M'(0) = I`` encodes every Jacobi field vanishing at 0;
conjugate times are the singularities of ``M`` and multiplicities are its
rank defects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousEndpointError, DomainError, ParameterError
from .geodesics import ParallelField, Trajectory
from .geometry import pair_inner

EVENT_TIME_RESOLUTION = 1e-8
EVENT_MERGE_TOL = 1e-5
DEFAULT_RANK_TOL = 1e-7
_BRACKET_FRACTION = 0.05


# ---------------------------------------------------------------------------
# curvature profile


@dataclass(eq=False)
class CurvatureProfile:
    """Sampled frame components of the Jacobi operator R(., v)v along a geodesic."""

    trajectory: Trajectory
    frame: list
    K: np.ndarray
    symmetry_defect: float

    def __post_init__(self):
        self._mid = None

    @property
    def times(self):
        return self.trajectory.times

    def midpoints(self):
        if self._mid is None:
            self._mid = interval_midpoints(self.times, self.K)
        return self._mid


def profile_arrays(model, V, E):
    """K_ab = g(R(E_a, v)v, E_b) for stacked samples.

    ``V`` has shape (..., tangent_dim) and ``E`` (..., k, tangent_dim); the
    result is (..., k, k), symmetrized, together with the symmetry defect.
    """
    vb = V[..., None, :]
    R = model.curvature(E, vb, vb)
    K = pair_inner(model, R, E)
    defect = float(np.max(np.abs(K - np.swapaxes(K, -1, -2)))) if K.size else 0.0
    K = 0.5 * (K + np.swapaxes(K, -1, -2))
    return K, defect


def curvature_profile(trajectory, frame):
    """Assemble the frame curvature matrix K(t) along a trajectory."""
    if not frame:
        raise DomainError("curvature_profile needs a non-empty frame")
    for f in frame:
        if f.trajectory is not trajectory:
            raise DomainError("frame fields must belong to the given trajectory")
    E = np.stack([f.components for f in frame], axis=1)  # (T, k, dt)
    gram = pair_inner(trajectory.model, E, E)
    vdot = pair_inner(trajectory.model, E, trajectory.velocities[:, None, :])
    if np.max(np.abs(gram - np.eye(E.shape[1]))) > 1e-6 or np.max(np.abs(vdot)) > 1e-6:
        raise DomainError("frame must be g-orthonormal and normal to the velocity")
    K, defect = profile_arrays(trajectory.model, trajectory.velocities, E)
    return CurvatureProfile(trajectory, list(frame), K, defect)


# ---------------------------------------------------------------------------
# midpoint interpolation on the sample grid


def _lagrange_value(ts, ys, t):
    out = np.zeros_like(ys[0])
    for j in range(len(ts)):
        w = 1.0
        for m in range(len(ts)):
            if m != j:
                w *= (t - ts[m]) / (ts[j] - ts[m])
        out = out + w * ys[j]
    return out


def interval_midpoints(times, Y):
    """Values of a sampled quantity at interval midpoints, to 4th order.

    Interior intervals of a uniform grid use the fast cubic stencil; edges
    and ragged tail intervals fall back to 4-point Lagrange interpolation on
    the nearest nodes.
    """
    T = len(times)
    if T < 2:
        raise ParameterError("need at least two samples")
    mids = np.empty((T - 1,) + Y.shape[1:])
    if T == 2:
        mids[0] = 0.5 * (Y[0] + Y[1])
        return mids
    dt = np.diff(times)
    base = np.median(dt)
    uniform = np.abs(dt - base) < 1e-9 * max(1.0, base)
    fast = np.zeros(T - 1, dtype=bool)
    fast[1 : T - 2] = uniform[1 : T - 2] & uniform[0 : T - 3] & uniform[2 : T - 1]
    if np.any(fast):
        idx = np.nonzero(fast)[0]
        mids[idx] = (-Y[idx - 1] + 9.0 * Y[idx] + 9.0 * Y[idx + 1] - Y[idx + 2]) / 16.0
    for i in np.nonzero(~fast)[0]:
        lo = min(max(0, i - 1), T - 4) if T >= 4 else 0
        hi = min(lo + 4, T)
        tm = 0.5 * (times[i] + times[i + 1])
        mids[i] = _lagrange_value(times[lo:hi], Y[lo:hi], tm)
    return mids


# ---------------------------------------------------------------------------
# propagation


def solve_jacobi_arrays(times, K, Kmid, Y0, Yp0):
    """RK4 for ``Y'' + K(t) Y = 0`` with per-interval midpoint curvature data.

    ``Y0``/``Yp0`` may be matrices (..., k, m) or vectors (..., k); returns
    arrays with the time axis prepended.
    """
    vector = Y0.ndim == K.ndim - 2
    if vector:
        Y0, Yp0 = Y0[..., None], Yp0[..., None]
    T = len(times)
    Ys = np.empty((T,) + Y0.shape)
    Yps = np.empty_like(Ys)
    Ys[0], Yps[0] = Y0, Yp0
    y, yp = np.array(Y0, dtype=float), np.array(Yp0, dtype=float)
    for i in range(T - 1):
        h = times[i + 1] - times[i]
        K0, Km, K1 = K[i], Kmid[i], K[i + 1]
        a1, b1 = yp, -K0 @ y
        y2 = y + 0.5 * h * a1
        a2, b2 = yp + 0.5 * h * b1, -Km @ y2
        y3 = y + 0.5 * h * a2
        a3, b3 = yp + 0.5 * h * b2, -Km @ y3
        y4 = y + h * a3
        a4, b4 = yp + h * b3, -K1 @ y4
        y = y + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        yp = yp + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        Ys[i + 1], Yps[i + 1] = y, yp
    if vector:
        return Ys[..., 0], Yps[..., 0]
    return Ys, Yps


@dataclass(eq=False)
class JacobiPropagator:
    """Fundamental solution M(t), M'(t) with M(0) = 0 and M'(0) = identity."""

    profile: CurvatureProfile
    times: np.ndarray
    M: np.ndarray
    Mp: np.ndarray

    def __post_init__(self):
        self._sigma = None

    @property
    def order(self):
        return self.M.shape[-1]

    def smallest_singular_values(self):
        if self._sigma is None:
            self._sigma = np.linalg.svd(self.M, compute_uv=False)[..., -1]
        return self._sigma

    def evaluate(self, t):
        """Cubic Hermite interpolation of (M, M') between samples."""
        t = float(t)
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ParameterError("time outside the propagator domain")
        i = int(np.searchsorted(times, t, side="right") - 1)
        i = min(max(i, 0), len(times) - 2)
        h = times[i + 1] - times[i]
        s = (t - times[i]) / h
        K = self.profile.K
        m0, m1 = self.M[i], self.M[i + 1]
        d0, d1 = self.Mp[i], self.Mp[i + 1]
        dd0, dd1 = -K[i] @ m0, -K[i + 1] @ m1
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s**2 * (3 - 2 * s)
        h11 = s**2 * (s - 1)
        M = h00 * m0 + h10 * h * d0 + h01 * m1 + h11 * h * d1
        Mp = h00 * d0 + h10 * h * dd0 + h01 * d1 + h11 * h * dd1
        return M, Mp

    def lagrangian_defect(self):
        """Max deviation of M^T M' - M'^T M from zero over all samples."""
        sym = np.swapaxes(self.M, -1, -2) @ self.Mp - np.swapaxes(self.Mp, -1, -2) @ self.M
        return float(np.max(np.abs(sym)))


def jacobi_propagate(profile):
    """Propagate the vanishing-at-zero fundamental solution of the Jacobi equation."""
    k = profile.K.shape[-1]
    M0 = np.zeros((k, k))
    Mp0 = np.eye(k)
    M, Mp = solve_jacobi_arrays(profile.times, profile.K, profile.midpoints(), M0, Mp0)
    return JacobiPropagator(profile, profile.times, M, Mp)


# ---------------------------------------------------------------------------
# conjugate points


@dataclass(frozen=True)
class ConjugateEvent:
    """A conjugate time along the geodesic with its multiplicity."""

    time: float
    multiplicity: int

    def __post_init__(self):
        if self.time <= 0 or self.multiplicity < 1:
            raise ParameterError("conjugate events need time > 0 and multiplicity >= 1")


def _golden_minimize(f, a, b, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def detect_events(propagator, window, rank_tol=DEFAULT_RANK_TOL, stride=1):
    """Locate singular times of M inside ``window`` and count their rank defects."""
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise ParameterError("conjugate-point window is empty")
    times = propagator.times
    if t0 < times[0] - 1e-9 or t1 > times[-1] + 1e-9:
        raise ParameterError("window must lie inside the propagator domain")
    idx = np.arange(0, len(times), max(1, int(stride)))
    if idx[-1] != len(times) - 1:
        idx = np.append(idx, len(times) - 1)
    sub = times[idx]
    lo = max(0, int(np.searchsorted(sub, t0)) - 1)
    hi = min(len(sub) - 1, int(np.searchsorted(sub, t1)) + 1)
    if hi <= lo:
        return []
    sigma = np.linalg.svd(propagator.M[idx[lo : hi + 1]], compute_uv=False)[..., -1]
    scale = max(1.0, float(np.max(np.abs(propagator.Mp))) )
    thresh = _BRACKET_FRACTION * scale

    candidates = []
    for j in range(len(sigma)):
        if idx[lo + j] == 0:
            continue  # M(0) = 0 is the initial condition, not a conjugate point
        if sigma[j] >= thresh:
            continue
        left = sigma[j - 1] if j > 0 else np.inf
        right = sigma[j + 1] if j + 1 < len(sigma) else np.inf
        if sigma[j] <= left and sigma[j] < right:
            candidates.append(j)
        elif j == len(sigma) - 1 and sigma[j] <= left:
            candidates.append(j)

    events = []
    for j in candidates:
        ia = idx[lo + max(0, j - 1)]
        ib = idx[min(hi, lo + j + 1)]
        a, b = times[ia], times[ib]

        def smin(t):
            M, _ = propagator.evaluate(t)
            return np.linalg.svd(M, compute_uv=False)[-1]

        t_star = _golden_minimize(smin, a, b, EVENT_TIME_RESOLUTION)
        M, Mp = propagator.evaluate(t_star)
        svals = np.linalg.svd(M, compute_uv=False)
        mp_norm = np.linalg.svd(Mp, compute_uv=False)[0]
        mult = int(np.sum(svals < rank_tol * max(mp_norm, 1e-300)))
        if mult < 1:
            continue
        if not (t0 + 1e-12 < t_star <= t1 + 1e-12):
            continue
        events.append((t_star, mult))

    events.sort()
    merged = []
    for t_star, mult in events:
        if merged and abs(t_star - merged[-1][0]) < 1e-7:
            # the same zero found from two brackets
            merged[-1][1] = max(merged[-1][1], mult)
        elif merged and abs(t_star - merged[-1][0]) < EVENT_MERGE_TOL:
            # a degenerate zero split by discretization
            merged[-1][1] += mult
        else:
            merged.append([t_star, mult])
    return [ConjugateEvent(float(t), int(m)) for t, m in merged]


def conjugate_points(propagator, window, rank_tol=DEFAULT_RANK_TOL):
    """Conjugate events (time, multiplicity) of the propagator inside ``window``."""
    return detect_events(propagator, window, rank_tol=rank_tol, stride=1)


def fixed_endpoint_index(propagator, L, rank_tol=DEFAULT_RANK_TOL):
    """Morse index of the fixed-endpoint problem on [0, L].

    Counts conjugate events in the open interval (0, L) with multiplicity.
    ``L`` may not itself be within 1e-6 of a conjugate time.
    """
    times = propagator.times
    if L <= times[0] or L > times[-1] + 1e-12:
        raise ParameterError("endpoint outside the propagator domain")
    upto = min(float(times[-1]), L + 1e-5)
    events = detect_events(propagator, (times[0], upto), rank_tol=rank_tol)
    for e in events:
        if abs(e.time - L) <= 1e-6:
            raise AmbiguousEndpointError("endpoint is itself a conjugate time")
    return int(sum(e.multiplicity for e in events if e.time < L))


# ---------------------------------------------------------------------------
# spherical Jacobi fields


@dataclass(eq=False)
class SphericalFieldCertificate:
    """A unit normal parallel field E with sec(E, gamma') = 1 up to ``deviation``.

    ``sin(t) E(t)`` is then a Jacobi field up to the same order.
    """

    field: ParallelField
    deviation: float
    coefficients: np.ndarray


def spherical_witness(K, tol):
    """Constant unit coefficient vector c with K(t) c = c within ``tol``, or None.

    Returns (c, deviation, eigenvector_residual) where deviation is
    max_t |c^T K(t) c - 1|.
    """
    k = K.shape[-1]
    A = np.mean((K - np.eye(k)) @ (K - np.eye(k)), axis=0)
    _, vecs = np.linalg.eigh(A)
    c = vecs[:, 0]
    resid = float(np.max(np.linalg.norm((K - np.eye(k)) @ c, axis=-1)))
    if resid > tol:
        return None
    deviation = float(np.max(np.abs(np.einsum("i,tij,j->t", c, K, c) - 1.0)))
    return c, deviation, resid


def spherical_field(profile, tol=1e-6):
    """Certificate for a parallel unit normal field spanning curvature-1 planes."""
    eigmax = float(np.max(np.linalg.eigvalsh(profile.K)))
    if eigmax > 1.0 + tol:
        raise DomainError("curvature along the geodesic exceeds 1 + tol")
    hit = spherical_witness(profile.K, tol)
    if hit is None:
        return None
    c, deviation, _ = hit
    E = np.einsum("a,tad->td", c, np.stack([f.components for f in profile.frame], axis=1))
    return SphericalFieldCertificate(
        field=ParallelField(profile.trajectory, E),
        deviation=deviation,
        coefficients=c,
    )


# ---------------------------------------------------------------------------
# comparison with the round sphere


@dataclass(frozen=True)
class SturmResult:
    """Outcome of the norm comparison against cos(s) on the unit sphere."""

    holds: bool
    margin: float
    times: np.ndarray
    norms: np.ndarray


def verify_sturm_bound(profile, x0, horizon, tol=1e-7, xp0=None):
    """Check |X(s)| >= cos(s) on [0, horizon] for the Jacobi field X.

    ``x0`` is the g-unit normal initial value X(0); the initial derivative
    has no radial part (<X'(0), X(0)> = 0) and its transverse part is the
    optional ``xp0`` (default zero).  Valid for horizons up to pi/2.
    """
    if horizon <= 0 or horizon > math.pi / 2 + 1e-12:
        raise ParameterError("comparison horizon must lie in (0, pi/2]")
    times = profile.times
    if horizon > times[-1] + 1e-12:
        raise ParameterError("horizon exceeds the profile domain")

    E = np.stack([f.components for f in profile.frame], axis=1)
    model = profile.trajectory.model
    y0 = model.inner(E[0], x0.components[None, :])
    norm0 = float(np.linalg.norm(y0))
    if abs(norm0 - 1.0) > 1e-8:
        raise DomainError("X(0) must be a g-unit vector")
    tang = model.inner(x0.components, profile.trajectory.velocities[0])
    if abs(float(tang)) > 1e-8:
        raise DomainError("X(0) must be normal to the geodesic")
    if xp0 is None:
        yp0 = np.zeros_like(y0)
    else:
        yp0 = model.inner(E[0], xp0.components[None, :])
        if abs(float(np.dot(yp0, y0))) > 1e-10:
            raise ParameterError("X'(0) must be orthogonal to X(0)")

    Y, _ = solve_jacobi_arrays(times, profile.K, profile.midpoints(), y0, yp0)
    mask = times <= horizon + 1e-12
    ts = times[mask]
    norms = np.linalg.norm(Y[mask], axis=-1)
    margin = float(np.min(norms - np.cos(ts)))
    return SturmResult(holds=bool(margin >= -tol), margin=margin, times=ts, norms=norms)
