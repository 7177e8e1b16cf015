"""Numpy implementations of the cone and distance kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature. Second-order cone vectors are stored flat; ``starts`` and ``dims``
give the offset and length of each block (head first, then tail).
"""

import numpy as np


def _layout(starts, dims, n):
    """Block id per entry and a mask for the tail entries."""
    blk = np.repeat(np.arange(len(dims)), dims)
    tail = np.ones(n, dtype=bool)
    tail[starts] = False
    return blk, tail


def _bdot(u, v, starts):
    return np.add.reduceat(u * v, starts) if len(starts) else np.zeros(0)


def _jdot(u, v, starts):
    """Per-block u0*v0 - <u1, v1>."""
    if not len(starts):
        return np.zeros(0)
    return 2.0 * u[starts] * v[starts] - _bdot(u, v, starts)


def _jdet(u, starts, tail):
    """Per-block u0^2 - |u1|^2 in factored form, which keeps accuracy near the boundary."""
    if not len(starts):
        return np.zeros(0)
    t = np.sqrt(np.add.reduceat(np.where(tail, u * u, 0.0), starts))
    u0 = u[starts]
    return (u0 - t) * (u0 + t)


def soc_nt_scaling(s, z, starts, dims):
    """Nesterov-Todd scaling point of each SOC block.

    Returns ``(wbar, eta, lam)`` with ``W = eta * Wbar(wbar)`` and
    ``lam = W z = W^{-1} s``.
    """
    n = s.shape[0]
    if not len(starts):
        return np.zeros(n), np.zeros(0), np.zeros(n)
    blk, tail = _layout(starts, dims, n)
    snorm = np.sqrt(_jdet(s, starts, tail))
    znorm = np.sqrt(_jdet(z, starts, tail))
    sb = s / snorm[blk]
    zb = z / znorm[blk]
    gamma = np.sqrt(0.5 * (1.0 + _bdot(sb, zb, starts)))
    wbar = np.where(tail, sb - zb, sb + zb) / (2.0 * gamma[blk])
    eta = np.sqrt(snorm / znorm)
    lam = soc_apply_w(wbar, eta, z, starts, dims, False)
    return wbar, eta, lam


def soc_apply_w(wbar, eta, v, starts, dims, inverse):
    """Apply ``W`` (or ``W^{-1}``) blockwise to ``v``."""
    n = v.shape[0]
    if not len(starts):
        return np.zeros(n)
    blk, tail = _layout(starts, dims, n)
    w0 = wbar[starts]
    v0 = v[starts]
    w1v1 = _bdot(wbar, v, starts) - w0 * v0
    if inverse:
        head = w0 * v0 - w1v1
        coef = -v0 + w1v1 / (1.0 + w0)
        out = np.where(tail, v + coef[blk] * wbar, 0.0)
        out[starts] = head
        return out / eta[blk]
    head = w0 * v0 + w1v1
    coef = v0 + w1v1 / (1.0 + w0)
    out = np.where(tail, v + coef[blk] * wbar, 0.0)
    out[starts] = head
    return out * eta[blk]


def soc_jordan_prod(u, v, starts, dims):
    n = u.shape[0]
    if not len(starts):
        return np.zeros(n)
    blk, tail = _layout(starts, dims, n)
    out = np.where(tail, u[starts][blk] * v + v[starts][blk] * u, 0.0)
    out[starts] = _bdot(u, v, starts)
    return out


def soc_jordan_div(u, v, starts, dims):
    """Solve ``u o x = v`` for x, blockwise (u must be in the cone interior)."""
    n = u.shape[0]
    if not len(starts):
        return np.zeros(n)
    blk, tail = _layout(starts, dims, n)
    u0 = u[starts]
    v0 = v[starts]
    u1v1 = _bdot(u, v, starts) - u0 * v0
    det = _jdet(u, starts, tail)
    x0 = (u0 * v0 - u1v1) / det
    out = np.where(tail, (v - x0[blk] * u) / u0[blk], 0.0)
    out[starts] = x0
    return out


def soc_max_step(x, dx, starts, dims):
    """Largest alpha >= 0 keeping ``x + alpha*dx`` in every SOC block."""
    if not len(starts):
        return np.inf
    a = _jdot(dx, dx, starts)
    b = _jdot(x, dx, starts)
    _, tail = _layout(starts, dims, x.shape[0])
    c = np.maximum(_jdet(x, starts, tail), 0.0)
    alpha = np.full(len(starts), np.inf)
    disc = np.maximum(b * b - a * c, 0.0)
    sd = np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -(b + np.where(b >= 0.0, sd, -sd))
        r1 = np.where(a != 0.0, q / a, np.inf)
        r2 = np.where(q != 0.0, c / q, np.inf)
        lin = np.where(b < 0.0, -c / (2.0 * b), np.inf)
    r1 = np.where(r1 > 0.0, r1, np.inf)
    r2 = np.where(r2 > 0.0, r2, np.inf)
    quad = np.minimum(r1, r2)
    concave = a < 0.0
    convex = (a > 0.0) & (b < 0.0) & (b * b - a * c >= 0.0)
    flat = a == 0.0
    alpha = np.where(concave | convex, quad, alpha)
    alpha = np.where(flat, lin, alpha)
    return float(alpha.min())


def soc_inv_w_blocks(wbar, eta, starts, dims):
    """Dense ``W^{-1}`` for every block, concatenated row-major."""
    out = []
    for k in range(len(starts)):
        st, d = starts[k], dims[k]
        w0 = wbar[st]
        w1 = wbar[st + 1:st + d]
        blk = np.empty((d, d))
        blk[0, 0] = w0
        blk[0, 1:] = -w1
        blk[1:, 0] = -w1
        blk[1:, 1:] = np.eye(d - 1) + np.outer(w1, w1) / (1.0 + w0)
        out.append((blk / eta[k]).ravel())
    return np.concatenate(out) if out else np.zeros(0)


def gaussian_kernel(X, Y, gamma):
    """Matrix of exp(-gamma * ||x_i - y_j||^2)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d2 = np.empty((X.shape[0], Y.shape[0]))
    # row loop keeps d(x, x) exactly zero, unlike the |x|^2 + |y|^2 - 2xy trick
    for i in range(X.shape[0]):
        diff = Y - X[i]
        d2[i] = np.einsum("ij,ij->i", diff, diff)
    return np.exp(-gamma * d2)


def hamming_distances(catalog, query):
    catalog = np.asarray(catalog, dtype=np.uint8)
    query = np.asarray(query, dtype=np.uint8)
    return np.count_nonzero(catalog != query[None, :], axis=1).astype(np.int64)
