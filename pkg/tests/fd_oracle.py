"""Finite-difference curvature oracle: Riemann tensor from a chart metric.

Used only by the tests, as an implementation-independent cross-check of the
closed-form tensors.  Charts map R^d into each model; the metric components
are evaluated exactly and all derivatives use 4th-order central stencils.
"""

import numpy as np


def _partial(f, x, i, h):
    e = np.zeros_like(x)
    e[i] = 1.0
    return (f(x - 2 * h * e) - 8 * f(x - h * e) + 8 * f(x + h * e) - f(x + 2 * h * e)) / (
        12.0 * h
    )


def christoffel(gfun, x, h):
    d = len(x)
    g = gfun(x)
    ginv = np.linalg.inv(g)
    dg = np.stack([_partial(gfun, x, m, h) for m in range(d)])  # dg[m, i, j]
    gamma = np.empty((d, d, d))
    for k in range(d):
        for i in range(d):
            for j in range(d):
                s = 0.0
                for m in range(d):
                    s += ginv[k, m] * (dg[i, m, j] + dg[j, m, i] - dg[m, i, j])
                gamma[k, i, j] = 0.5 * s
    return gamma


def riemann(gfun, x, h):
    """R^l_{ijk} with R(e_i, e_j) e_k = R^l_{ijk} e_l."""
    d = len(x)
    gamma = christoffel(gfun, x, h)
    dgamma = np.stack(
        [_partial(lambda y: christoffel(gfun, y, h), x, i, h) for i in range(d)]
    )  # dgamma[i, l, j, k]
    R = np.empty((d, d, d, d))
    for l in range(d):
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    R[l, i, j, k] = (
                        dgamma[i, l, j, k]
                        - dgamma[j, l, i, k]
                        + gamma[l, i, :] @ gamma[:, j, k]
                        - gamma[l, j, :] @ gamma[:, i, k]
                    )
    return R


def sectional(gfun, x, u, v, h):
    """Sectional curvature of the chart plane span(u, v) at x."""
    g = gfun(x)
    R = riemann(gfun, x, h)
    num = np.einsum("lm,m,lijk,i,j,k->", g, u, R, u, v, v)
    den = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    return num / den


# ---------------------------------------------------------------------------
# charts


def round_chart(n):
    """x in R^n -> (ambient point, ambient chart-tangent columns, metric)."""

    def embed(x):
        s = np.sqrt(1.0 + x @ x)
        return np.concatenate([[1.0], x]) / s

    def frame(x):
        s = np.sqrt(1.0 + x @ x)
        p = np.concatenate([[1.0], x])
        cols = np.zeros((n + 1, n))
        for a in range(n):
            e = np.zeros(n + 1)
            e[a + 1] = 1.0
            cols[:, a] = e / s - p * x[a] / s**3
        return cols

    def metric(x):
        f = frame(x)
        return f.T @ f

    return embed, frame, metric


def berger_chart(eta):
    """x in R^3 -> (unit quaternion, body-frame chart tangents, metric)."""
    w = np.array([eta**2, 1.0, 1.0])

    def embed(x):
        s = np.sqrt(1.0 + x @ x)
        return np.concatenate([[1.0], x]) / s

    def _qconj(q):
        return np.array([q[0], -q[1], -q[2], -q[3]])

    def _qmul(a, b):
        return np.concatenate(
            [
                [a[0] * b[0] - a[1:] @ b[1:]],
                a[0] * b[1:] + b[0] * a[1:] + np.cross(a[1:], b[1:]),
            ]
        )

    def body_cols(x):
        s = np.sqrt(1.0 + x @ x)
        q = np.concatenate([[1.0], x]) / s
        cols = np.zeros((3, 3))
        for a in range(3):
            e = np.zeros(4)
            e[a + 1] = 1.0
            dq = e / s - np.concatenate([[1.0], x]) * x[a] / s**3
            cols[:, a] = _qmul(_qconj(q), dq)[1:]
        return cols

    def metric(x):
        c = body_cols(x)
        return c.T @ (w[:, None] * c)

    return embed, body_cols, metric


def cpn_chart(n):
    """x in R^{2n} -> (stacked point, stacked horizontal tangents, metric)."""

    def _z(x):
        wc = x[:n] + 1j * x[n:]
        u = np.concatenate([[1.0 + 0j], wc])
        return u / np.sqrt(np.real(u @ np.conj(u)))

    def _cols(x):
        wc = x[:n] + 1j * x[n:]
        u = np.concatenate([[1.0 + 0j], wc])
        s = np.sqrt(np.real(u @ np.conj(u)))
        z = u / s
        cols = []
        for a in range(2 * n):
            du = np.zeros(n + 1, dtype=complex)
            du[1 + (a % n)] = 1.0 if a < n else 1j
            ds = np.real(du @ np.conj(u)) / s
            dz = du / s - u * ds / s**2
            zeta = dz - (dz @ np.conj(z)) * z  # horizontal part
            cols.append(zeta)
        return np.stack(cols, axis=1)  # (n+1, 2n) complex

    def embed(x):
        z = _z(x)
        return np.concatenate([z.real, z.imag])

    def frame(x):
        c = _cols(x)
        return np.concatenate([c.real, c.imag], axis=0)  # (2n+2, 2n)

    def metric(x):
        f = frame(x)
        return 4.0 * f.T @ f

    return embed, frame, metric
