"""Model manifolds with exact metric and curvature tensors.

Four built-in geometries are supported:

* ``RoundSphere(dim)`` -- the unit sphere in Euclidean space, curvature 1.
* ``BergerSphere(eta)`` -- the 3-sphere of unit quaternions with the
  left-invariant metric that gives the Hopf direction ``i`` length ``eta``.
* ``ComplexProjective(n)`` -- complex projective space in the normalization
  with sectional curvature range [1/4, 1].
* ``Scaled(base, lam)`` -- the same manifold with the metric multiplied by
  ``lam**2`` (so lengths scale by ``lam`` and curvature by ``1/lam**2``).

Points and tangent vectors are stored in explicit coordinates: ambient unit
vectors for the sphere models, coefficients in the left-invariant frame
``{i, j, k}`` for the Berger sphere.  Every kernel broadcasts over leading
axes so whole bundles of inputs evaluate in a single call, and everything is
a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.stats import qmc

from .errors import DegeneratePlaneError, DomainError, ParameterError

POINT_NORM_TOL = 1e-12
TANGENT_ORTHO_TOL = 1e-10
FRAME_ORTHO_TOL = 1e-10
PLANE_GRAM_TOL = 1e-14


# ---------------------------------------------------------------------------
# quaternion and complex helpers


def quat_mul(a, b):
    """Hamilton product, broadcasting over leading axes; layout (w, x, y, z)."""
    aw, av = a[..., :1], a[..., 1:]
    bw, bv = b[..., :1], b[..., 1:]
    w = aw * bw - np.sum(av * bv, axis=-1, keepdims=True)
    v = aw * bv + bw * av + np.cross(av, bv)
    return np.concatenate([w, v], axis=-1)


def quat_conj(a):
    out = np.array(a, dtype=float, copy=True)
    out[..., 1:] *= -1.0
    return out


def body_components(q, u):
    """Components of the ambient vector ``u`` at ``q`` in the frame {i, j, k}.

    Dropping the real part of ``conj(q) * u`` projects out the radial
    direction, so this doubles as the tangential projection.
    """
    return quat_mul(quat_conj(q), u)[..., 1:]


def ambient_from_body(q, w):
    zeros = np.zeros(w.shape[:-1] + (1,), dtype=float)
    return quat_mul(q, np.concatenate([zeros, w], axis=-1))


def jmul(v):
    """Multiplication by the imaginary unit on R^{2m} = C^m (real block, imaginary block)."""
    m = v.shape[-1] // 2
    return np.concatenate([-v[..., m:], v[..., :m]], axis=-1)


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True, eq=False)
class Point:
    """A manifold point in the model's coordinate representation."""

    coordinates: np.ndarray


@dataclass(frozen=True, eq=False)
class Tangent:
    """A tangent vector attached to ``base``."""

    base: Point
    components: np.ndarray


@dataclass(frozen=True, eq=False)
class Frame:
    """A g-orthonormal list of tangent vectors at a common base point."""

    base: Point
    vectors: tuple


# ---------------------------------------------------------------------------
# models


class ManifoldModel:
    """Common interface of the built-in geometries.

    Each concrete model provides ``dim`` / ``point_dim`` / ``tangent_dim``,
    the metric ``inner``, the curvature tensor ``curvature`` (sign convention
    ``sec(u, v) = <R(u,v)v, u> / gram``), coordinate projection and
    validation, and a deterministic ``tangent_basis``.  Array arguments
    follow the per-model coordinate conventions and may carry arbitrary
    leading (batch) axes.
    """

    kind = "abstract"

    def canonical_point(self, p):
        """Canonical coordinate representative (fixes the phase on CP^n)."""
        return p

    def point_distance(self, p, q):
        """Coordinate-space distance that is zero exactly on equal points."""
        return float(np.linalg.norm(p - q))


@dataclass(frozen=True)
class RoundSphere(ManifoldModel):
    """Unit sphere S^dim embedded in R^{dim+1}; constant curvature 1."""

    dim: int

    kind = "round"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ParameterError("RoundSphere dimension must be an integer >= 2")

    @property
    def point_dim(self):
        return self.dim + 1

    @property
    def tangent_dim(self):
        return self.dim + 1

    def inner(self, u, v):
        return _dot(u, v)

    def curvature(self, x, y, z):
        return _dot(y, z)[..., None] * x - _dot(x, z)[..., None] * y

    def project_point(self, p):
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def project_tangent(self, p, u):
        return u - _dot(u, p)[..., None] * p

    def tangent_basis(self, p):
        eye = np.eye(self.point_dim)
        basis = np.broadcast_to(eye, p.shape[:-1] + eye.shape)
        return self.project_tangent(p[..., None, :], basis)

    def validate_point(self, p):
        if p.shape[-1] != self.point_dim:
            raise DomainError("wrong ambient dimension for RoundSphere point")
        if abs(np.linalg.norm(p) - 1.0) > POINT_NORM_TOL:
            raise DomainError("RoundSphere point must have unit ambient norm")

    def validate_tangent(self, p, u):
        if u.shape[-1] != self.tangent_dim:
            raise DomainError("wrong ambient dimension for RoundSphere tangent")
        if abs(float(_dot(u, p))) > TANGENT_ORTHO_TOL * max(1.0, float(np.linalg.norm(u))):
            raise DomainError("RoundSphere tangent must be orthogonal to its base point")

    def describe(self):
        return {"kind": "round", "dim": self.dim}


@dataclass(frozen=True)
class BergerSphere(ManifoldModel):
    """Unit quaternions with the left-invariant metric diag(eta^2, 1, 1) on {i, j, k}.

    Tangent vectors are stored as coefficients in the left-invariant frame,
    so the metric and curvature tensors are constant matrices.  Sectional
    curvature is eta^2 on any plane containing the Hopf direction and
    4 - 3 eta^2 on the plane {j, k}.
    """

    eta: float

    kind = "berger"

    def __post_init__(self):
        if not (self.eta > 0):
            raise ParameterError("BergerSphere eta must be positive")

    @property
    def dim(self):
        return 3

    @property
    def point_dim(self):
        return 4

    @property
    def tangent_dim(self):
        return 3

    @property
    def metric_weights(self):
        return np.array([self.eta**2, 1.0, 1.0])

    def inner(self, u, v):
        return np.einsum("...i,...i,i->...", u, v, self.metric_weights)

    def curvature(self, x, y, z):
        eta = self.eta
        s = np.array([eta, 1.0, 1.0])  # {i,j,k} -> orthonormal frame
        xe, ye, ze = x * s, y * s, z * s
        k12 = k13 = eta**2
        k23 = 4.0 - 3.0 * eta**2
        w12 = xe[..., 0] * ye[..., 1] - xe[..., 1] * ye[..., 0]
        w13 = xe[..., 0] * ye[..., 2] - xe[..., 2] * ye[..., 0]
        w23 = xe[..., 1] * ye[..., 2] - xe[..., 2] * ye[..., 1]
        r1 = k12 * w12 * ze[..., 1] + k13 * w13 * ze[..., 2]
        r2 = -k12 * w12 * ze[..., 0] + k23 * w23 * ze[..., 2]
        r3 = -k13 * w13 * ze[..., 0] - k23 * w23 * ze[..., 1]
        return np.stack([r1, r2, r3], axis=-1) / s

    def project_point(self, p):
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def project_tangent(self, p, u):
        # frame coefficients carry no constraint
        return u

    def tangent_basis(self, p):
        eye = np.eye(4)
        basis = np.broadcast_to(eye, p.shape[:-1] + eye.shape)
        return body_components(p[..., None, :], basis)

    def validate_point(self, p):
        if p.shape[-1] != 4:
            raise DomainError("BergerSphere point must be a quaternion (4 reals)")
        if abs(np.linalg.norm(p) - 1.0) > POINT_NORM_TOL:
            raise DomainError("BergerSphere point must be a unit quaternion")

    def validate_tangent(self, p, u):
        if u.shape[-1] != 3:
            raise DomainError("BergerSphere tangent must have 3 frame coefficients")

    def describe(self):
        return {"kind": "berger", "eta": float(self.eta)}


@dataclass(frozen=True)
class ComplexProjective(ManifoldModel):
    """CP^n normalized so that sectional curvature lies in [1/4, 1].

    Points are unit vectors in C^{n+1}, stored as 2n+2 reals (real parts
    first), one fixed phase representative per projective class.  Tangents
    are horizontal ambient vectors: orthogonal to the base vector and to its
    imaginary-unit rotation.  The metric is 4 times the ambient one, which
    realizes the stated curvature normalization.
    """

    n: int

    kind = "cpn"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError("ComplexProjective complex dimension must be an integer >= 1")

    @property
    def dim(self):
        return 2 * int(self.n)

    @property
    def point_dim(self):
        return 2 * int(self.n) + 2

    @property
    def tangent_dim(self):
        return self.point_dim

    def inner(self, u, v):
        return 4.0 * _dot(u, v)

    def curvature(self, x, y, z):
        jx, jy, jz = jmul(x), jmul(y), jmul(z)
        out = _dot(y, z)[..., None] * x - _dot(x, z)[..., None] * y
        out += _dot(jy, z)[..., None] * jx - _dot(jx, z)[..., None] * jy
        out += 2.0 * _dot(x, jy)[..., None] * jz
        return out

    def project_point(self, p):
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def project_tangent(self, p, u):
        jp = jmul(p)
        return u - _dot(u, p)[..., None] * p - _dot(u, jp)[..., None] * jp

    def canonical_point(self, p):
        m = p.shape[-1] // 2
        zc = p[..., :m] + 1j * p[..., m:]
        idx = np.argmax(np.abs(zc), axis=-1)
        lead = np.take_along_axis(zc, idx[..., None], axis=-1)
        phase = lead / np.abs(lead)
        zc = zc / phase
        return np.concatenate([zc.real, zc.imag], axis=-1)

    def tangent_basis(self, p):
        eye = np.eye(self.point_dim)
        basis = np.broadcast_to(eye, p.shape[:-1] + eye.shape)
        return self.project_tangent(p[..., None, :], basis)

    def validate_point(self, p):
        if p.shape[-1] != self.point_dim:
            raise DomainError("wrong ambient dimension for ComplexProjective point")
        if abs(np.linalg.norm(p) - 1.0) > POINT_NORM_TOL:
            raise DomainError("ComplexProjective point must have unit ambient norm")

    def validate_tangent(self, p, u):
        if u.shape[-1] != self.tangent_dim:
            raise DomainError("wrong ambient dimension for ComplexProjective tangent")
        size = max(1.0, float(np.linalg.norm(u)))
        if abs(float(_dot(u, p))) > TANGENT_ORTHO_TOL * size:
            raise DomainError("ComplexProjective tangent must be orthogonal to its base")
        if abs(float(_dot(u, jmul(p)))) > TANGENT_ORTHO_TOL * size:
            raise DomainError("ComplexProjective tangent must be horizontal")

    def point_distance(self, p, q):
        # phase-invariant chordal distance: align the phase, then subtract
        m = p.shape[-1] // 2
        zp = p[..., :m] + 1j * p[..., m:]
        zq = q[..., :m] + 1j * q[..., m:]
        corr = np.sum(zp * np.conj(zq), axis=-1)
        mag = np.abs(corr)
        phase = np.where(mag > 1e-300, corr / np.where(mag > 1e-300, mag, 1.0), 1.0)
        return float(np.linalg.norm(zp - phase * zq))

    def describe(self):
        return {"kind": "cpn", "n": int(self.n)}


@dataclass(frozen=True)
class Scaled(ManifoldModel):
    """``base`` with its metric multiplied by ``lam**2``.

    Points and tangent components are shared with the base model; only the
    metric (and therefore sectional curvature, by 1/lam^2) changes.  The
    (1,3) curvature tensor is scale-invariant.
    """

    base: ManifoldModel
    lam: float

    kind = "scaled"

    def __post_init__(self):
        if not (self.lam > 0):
            raise ParameterError("Scaled factor must be positive")
        if not isinstance(self.base, ManifoldModel):
            raise ParameterError("Scaled base must be a manifold model")

    @property
    def dim(self):
        return self.base.dim

    @property
    def point_dim(self):
        return self.base.point_dim

    @property
    def tangent_dim(self):
        return self.base.tangent_dim

    def inner(self, u, v):
        return self.lam**2 * self.base.inner(u, v)

    def curvature(self, x, y, z):
        return self.base.curvature(x, y, z)

    def project_point(self, p):
        return self.base.project_point(p)

    def project_tangent(self, p, u):
        return self.base.project_tangent(p, u)

    def canonical_point(self, p):
        return self.base.canonical_point(p)

    def tangent_basis(self, p):
        return self.base.tangent_basis(p)

    def validate_point(self, p):
        self.base.validate_point(p)

    def validate_tangent(self, p, u):
        self.base.validate_tangent(p, u)

    def point_distance(self, p, q):
        return self.base.point_distance(p, q)

    def describe(self):
        return {"kind": "scaled", "lam": float(self.lam), "base": self.base.describe()}


def unwrap(model):
    """Strip ``Scaled`` wrappers; returns (core model, total scale factor)."""
    lam = 1.0
    while isinstance(model, Scaled):
        lam *= model.lam
        model = model.base
    return model, lam


# ---------------------------------------------------------------------------
# constructors


def make_point(model, coordinates):
    coords = np.asarray(coordinates, dtype=float)
    coords = model.canonical_point(coords)
    model.validate_point(coords)
    return Point(coords)


def make_tangent(model, base, components):
    comps = np.asarray(components, dtype=float)
    model.validate_point(base.coordinates)
    model.validate_tangent(base.coordinates, comps)
    return Tangent(base, comps)


def make_frame(model, base, vectors):
    vecs = tuple(vectors)
    for v in vecs:
        if not np.array_equal(v.base.coordinates, base.coordinates):
            raise DomainError("frame vectors must share the frame's base point")
    comps = np.stack([v.components for v in vecs])
    gram = _gram(model, comps)
    if np.max(np.abs(gram - np.eye(len(vecs)))) > FRAME_ORTHO_TOL:
        raise DomainError("frame vectors must be g-orthonormal")
    return Frame(base, vecs)


def _gram(model, vecs):
    return model.inner(vecs[..., :, None, :], vecs[..., None, :, :])


def _check_shared_base(u, v):
    if u.base.coordinates.shape != v.base.coordinates.shape or not np.allclose(
        u.base.coordinates, v.base.coordinates, rtol=0.0, atol=1e-12
    ):
        raise DomainError("tangent vectors must share a base point")


# ---------------------------------------------------------------------------
# metric / curvature operations


def metric_inner(model, u, v):
    """g(u, v) for two tangent vectors at the same point."""
    _check_shared_base(u, v)
    model.validate_point(u.base.coordinates)
    model.validate_tangent(u.base.coordinates, u.components)
    model.validate_tangent(v.base.coordinates, v.components)
    return float(model.inner(u.components, v.components))


def curvature_operator(model, x, y, z):
    """R(x, y) z as a tangent vector at the shared base point."""
    _check_shared_base(x, y)
    _check_shared_base(x, z)
    out = model.curvature(x.components, y.components, z.components)
    return Tangent(x.base, out)


def sec_from_components(model, u, v):
    """Sectional curvature from raw component arrays (batched)."""
    uu = model.inner(u, u)
    vv = model.inner(v, v)
    uv = model.inner(u, v)
    den = uu * vv - uv**2
    num = model.inner(model.curvature(u, v, v), u)
    return num, den, uu * vv


def sectional_curvature(model, u, v):
    """Curvature of the plane spanned by ``u`` and ``v``."""
    _check_shared_base(u, v)
    num, den, norm2 = sec_from_components(model, u.components, v.components)
    if norm2 <= 0 or den / norm2 <= PLANE_GRAM_TOL:
        raise DegeneratePlaneError("tangent vectors are (nearly) linearly dependent")
    return float(num / den)


def pair_inner(model, A, B):
    """Matrix of metric inner products between two stacks of vectors.

    ``A`` has shape (..., k, d) and ``B`` (..., m, d); the result (..., k, m)
    holds g(A_i, B_j).  Uses matmul, which is much faster than broadcast
    reductions for the profile-sized workloads.
    """
    core, lam = unwrap(model)
    Bt = np.swapaxes(B, -1, -2)
    if isinstance(core, BergerSphere):
        out = np.matmul(A * core.metric_weights, Bt)
    elif core.kind == "cpn":
        out = 4.0 * np.matmul(A, Bt)
    else:
        out = np.matmul(A, Bt)
    return out if lam == 1.0 else lam**2 * out


def curvature_bounds(model):
    """Exact (min, max) of sectional curvature over all 2-planes."""
    core, lam = unwrap(model)
    if isinstance(core, RoundSphere):
        lo = hi = 1.0
    elif isinstance(core, BergerSphere):
        a, b = core.eta**2, 4.0 - 3.0 * core.eta**2
        lo, hi = min(a, b), max(a, b)
    elif isinstance(core, ComplexProjective):
        lo, hi = (1.0, 1.0) if core.n == 1 else (0.25, 1.0)
    else:  # pragma: no cover - unreachable for the built-in kinds
        raise DomainError(f"no closed-form curvature bounds for {core!r}")
    return lo / lam**2, hi / lam**2


# ---------------------------------------------------------------------------
# low-discrepancy sampling helpers


def sobol_uniforms(dim, count, seed):
    """First ``count`` points of a scrambled Sobol sequence, clipped away from {0, 1}."""
    if count < 1:
        raise ParameterError("sample count must be >= 1")
    m = max(1, math.ceil(math.log2(count)))
    eng = qmc.Sobol(d=dim, scramble=True, seed=seed)
    u = eng.random(2**m)[:count]
    return np.clip(u, 1e-12, 1.0 - 1e-12)


def gaussians_from_uniforms(u):
    return stats.norm.ppf(u)


def uniform_dims(model):
    """(point, direction) uniform-sample dimensions for the model."""
    core, _ = unwrap(model)
    if isinstance(core, BergerSphere):
        return 4, 3
    return core.point_dim, core.tangent_dim


def points_from_uniforms(model, u):
    """Map uniform rows to model points (Gaussian radial map, then normalize)."""
    core, _ = unwrap(model)
    g = gaussians_from_uniforms(u)
    p = g / np.linalg.norm(g, axis=-1, keepdims=True)
    return core.canonical_point(p)


def tangents_from_uniforms(model, points, u):
    """Map uniform rows to g-unit tangent vectors at the given points."""
    g = gaussians_from_uniforms(u)
    w = model.project_tangent(points, g)
    norms = np.sqrt(model.inner(w, w))
    bad = norms < 1e-12
    if np.any(bad):
        # deterministic fallback: first usable basis candidate
        basis = model.tangent_basis(points)
        repl = basis[..., 0, :]
        w = np.where(bad[..., None], repl, w)
        norms = np.sqrt(model.inner(w, w))
    return w / norms[..., None]


# ---------------------------------------------------------------------------
# curvature scan


@dataclass(frozen=True, eq=False)
class CurvatureScan:
    """Extremes of sampled sectional curvature with the extremal planes."""

    minimum: float
    maximum: float
    argmin: tuple
    argmax: tuple
    samples: int


def _berger_plane_samples(core, points, u):
    """Planes on the Berger sphere, parameterized by their unit normal.

    The polar angle of the normal (measured from the Hopf axis in the
    orthonormal frame) is sampled linearly in angle, which concentrates
    samples near the extremal planes at both poles.
    """
    theta = math.pi * u[..., 0]
    phi = 2.0 * math.pi * u[..., 1]
    n = np.stack(
        [np.cos(theta), np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi)], axis=-1
    )
    # orthonormal completion of n in the frame where g is Euclidean
    ref = np.where(np.abs(n[..., :1]) < 0.9, np.eye(3)[0], np.eye(3)[1])
    v1 = np.cross(n, ref)
    v1 /= np.linalg.norm(v1, axis=-1, keepdims=True)
    v2 = np.cross(n, v1)
    scale = np.array([1.0 / core.eta, 1.0, 1.0])  # orthonormal frame -> {i,j,k} coefficients
    return v1 * scale, v2 * scale


def _generic_plane_samples(model, points, u):
    td = model.tangent_dim
    a = tangents_from_uniforms(model, points, u[..., :td])
    g = gaussians_from_uniforms(u[..., td:])
    w = model.project_tangent(points, g)
    w = w - model.inner(w, a)[..., None] * a
    norms = np.sqrt(model.inner(w, w))
    bad = norms < 1e-10
    if np.any(bad):
        basis = model.tangent_basis(points)
        for k in range(basis.shape[-2]):
            cand = basis[..., k, :]
            cand = cand - model.inner(cand, a)[..., None] * a
            cn = np.sqrt(model.inner(cand, cand))
            take = bad & (cn > 1e-8)
            w = np.where(take[..., None], cand, w)
            norms = np.where(take, cn, norms)
            bad = bad & ~take
    return a, w / norms[..., None]


def curvature_scan(model, sample_count, seed):
    """Deterministic min/max of sectional curvature over sampled 2-planes."""
    if sample_count < 1:
        raise ParameterError("curvature_scan needs sample_count >= 1")
    core, _ = unwrap(model)
    dp, dt = uniform_dims(model)
    plane_dims = 2 if isinstance(core, BergerSphere) else 2 * dt
    u = sobol_uniforms(dp + plane_dims, sample_count, seed)
    points = points_from_uniforms(model, u[:, :dp])
    if isinstance(core, BergerSphere):
        a, b = _berger_plane_samples(core, points, u[:, dp:])
    else:
        a, b = _generic_plane_samples(model, points, u[:, dp:])
    num, den, norm2 = sec_from_components(model, a, b)
    ok = den > PLANE_GRAM_TOL * norm2
    sec = np.where(ok, num / np.where(ok, den, 1.0), np.nan)
    if not np.any(ok):
        raise DegeneratePlaneError("all sampled planes were degenerate")
    imin = int(np.nanargmin(sec))
    imax = int(np.nanargmax(sec))

    def plane(i):
        p = Point(points[i])
        return (p, Tangent(p, a[i]), Tangent(p, b[i]))

    return CurvatureScan(
        minimum=float(sec[imin]),
        maximum=float(sec[imax]),
        argmin=plane(imin),
        argmax=plane(imax),
        samples=int(sample_count),
    )


def point_distance(model, p, q):
    """Distance between coordinate representatives (phase-invariant on CP^n)."""
    core, _ = unwrap(model)
    pa = p.coordinates if isinstance(p, Point) else np.asarray(p, dtype=float)
    qa = q.coordinates if isinstance(q, Point) else np.asarray(q, dtype=float)
    return core.point_distance(pa, qa)
