"""Pure-numpy versions of the hot loops.

Memory integrals become matrix-vector products on the dense lower
triangle, followed by trapezoid end corrections. Time marching stays a
Python loop since each step depends on the previous one.
"""
import numpy as np


def polyval(c, x):
    """Ascending-coefficient Horner evaluation, scalar or array."""
    out = np.zeros_like(np.asarray(x, dtype=np.float64)) + c[-1]
    for k in range(len(c) - 2, -1, -1):
        out = out * x + c[k]
    return out


def row_integrals(i, Rt, R, C, nu1, nu2, psi, dt, tr, t1, t2):
    """Memory integrals needed to advance row ``i`` of the two-time fields.

    Fills, for every column ``j <= i``,

    * ``tr[j]`` = int_j^i Rt(u, j) Rt(i, u) nu''(C(i, u)) du
    * ``t1[j]`` = int_0^i C(u, j) R(i, u) nu''(C(i, u)) du
    * ``t2[j]`` = int_0^j nu'(C(i, u)) R(j, u) du

    and returns int_0^i psi(C(i, u)) R(i, u) du. ``C`` must be stored
    symmetrically on the leading ``(i+1, i+1)`` block; ``Rt`` and ``R`` are
    lower triangular (zeros above the diagonal).
    """
    n1 = i + 1
    ci = C[i, :n1]
    d2 = polyval(nu2, ci)
    wt = Rt[i, :n1] * d2
    w = R[i, :n1] * d2
    v = polyval(nu1, ci)
    pr = polyval(psi, ci) * R[i, :n1]
    if i == 0:
        tr[0] = t1[0] = t2[0] = 0.0
        return 0.0
    m = dt * (pr.sum() - 0.5 * (pr[0] + pr[i]))

    Rtb = Rt[:n1, :n1]
    Rb = R[:n1, :n1]
    Cb = C[:n1, :n1]
    idx = np.arange(n1)
    diag_t = Rtb[idx, idx]
    diag_r = Rb[idx, idx]
    tr[:n1] = dt * (wt @ Rtb - 0.5 * diag_t * wt - 0.5 * Rtb[i] * wt[i])
    t1[:n1] = dt * (w @ Cb - 0.5 * Cb[0] * w[0] - 0.5 * Cb[i] * w[i])
    t2[:n1] = dt * (Rb @ v - 0.5 * Rb[:, 0] * v[0] - 0.5 * diag_r * v)
    return m


def kraichnan_row(i, H, C, nu2, dt, out):
    """out[j] = int_j^i H(i,u) H(u,j) nu''(C(i,u)) du for j <= i."""
    n1 = i + 1
    if i == 0:
        out[0] = 0.0
        return
    x = H[i, :n1] * polyval(nu2, C[i, :n1])
    Hb = H[:n1, :n1]
    idx = np.arange(n1)
    out[:n1] = dt * (x @ Hb - 0.5 * x * Hb[idx, idx] - 0.5 * x[i] * Hb[i])


def fdt_march(phic, b, dt, n):
    """March D' = -int_0^s phi(D(v)) D'(s-v) dv - b with D(0) = 1.

    The convolution uses trapezoid weights; the newest derivative value
    enters linearly and is solved for in closed form. ``D`` itself needs a
    predictor (second-order Adams-Bashforth) and two fixed-point passes.
    Returns ``(D, Dprime, last_update)`` where ``last_update`` is the largest
    change seen in the final inner pass.
    """
    D = np.empty(n + 1)
    y = np.empty(n + 1)
    ph = np.empty(n + 1)
    D[0] = 1.0
    y[0] = -b
    ph[0] = polyval(phic, 1.0)
    upd = 0.0
    h = 0.5 * dt
    for i in range(1, n + 1):
        s = np.dot(ph[1:i], y[i - 1:0:-1]) if i > 1 else 0.0
        if i > 1:
            Dp = D[i - 1] + dt * (1.5 * y[i - 1] - 0.5 * y[i - 2])
        else:
            Dp = D[0] + dt * y[0]
        yi = y[i - 1]
        for _ in range(2):
            prev = yi
            yi = (-b - dt * (s + 0.5 * polyval(phic, Dp) * y[0])) / (1.0 + h * ph[0])
            Dp = D[i - 1] + h * (y[i - 1] + yi)
        upd = max(upd, abs(yi - prev))
        y[i] = yi
        D[i] = Dp
        ph[i] = polyval(phic, Dp)
    return D, y, upd


def hform_solve(k, dt):
    """Heun march of H'(s) = int_0^s k(s-v) H(s-v) H(v) dv, H(0) = 1."""
    n = k.shape[0] - 1
    H = np.empty(n + 1)
    a = np.empty(n + 1)
    H[0] = 1.0
    a[0] = k[0]
    F_prev = 0.0
    for i in range(1, n + 1):
        interior = np.dot(a[i - 1:0:-1], H[1:i]) if i > 1 else 0.0
        hp = H[i - 1] + dt * F_prev
        Fp = dt * (interior + 0.5 * k[i] * hp * H[0] + 0.5 * a[0] * hp)
        hi = H[i - 1] + 0.5 * dt * (F_prev + Fp)
        H[i] = hi
        a[i] = k[i] * hi
        F_prev = dt * (interior + 0.5 * a[i] * H[0] + 0.5 * a[0] * hi)
    return H


def violation_row(i, C, G, nu1, nu2, dt, out):
    """Raw memory part of I(s_i, t_j) for all j <= i (without beta^2).

    out[j] = int_0^j [C(j,u) G(i,u) nu''(C(i,u)) + nu'(C(i,u)) G(j,u)] du.
    ``C`` symmetric dense, ``G`` lower triangular.
    """
    n1 = i + 1
    ci = C[i, :n1]
    a = G[i, :n1] * polyval(nu2, ci)
    v = polyval(nu1, ci)
    Cl = np.tril(C[:n1, :n1])
    Gb = G[:n1, :n1]
    idx = np.arange(n1)
    full = Cl @ a + Gb @ v
    ends = 0.5 * (C[:n1, 0] * a[0] + G[:n1, 0] * v[0]) + 0.5 * (
        C[idx, idx] * a + G[idx, idx] * v
    )
    out[:n1] = dt * (full - ends)


def _p3_index_arrays(N):
    i, j, l = [], [], []
    for a in range(N):
        for b in range(a, N):
            i.append(np.full(N - b, a))
            j.append(np.full(N - b, b))
            l.append(np.arange(b, N))
    return np.concatenate(i), np.concatenate(j), np.concatenate(l)


_P3_CACHE = {}


def grad_p3(J, N, X, a, G):
    """Add the gradient of a * sum_{i<=j<=l} J w x_i x_j x_l to ``G``.

    ``w`` is 1/(product of multiplicity factorials); ``J`` is the flat
    lexicographic coupling buffer and ``X`` has shape (N, replicas).
    """
    if N not in _P3_CACHE:
        ii, jj, ll = _p3_index_arrays(N)
        w = np.ones(ii.shape[0])
        w[(ii == jj) ^ (jj == ll)] = 0.5
        w[(ii == jj) & (jj == ll)] = 1.0 / 6.0
        _P3_CACHE.clear()
        _P3_CACHE[N] = (ii, jj, ll, w)
    ii, jj, ll, w = _P3_CACHE[N]
    c = (a * J * w)[:, None]
    xi, xj, xl = X[ii], X[jj], X[ll]
    for r in range(X.shape[1]):
        G[:, r] += np.bincount(ii, c[:, 0] * xj[:, r] * xl[:, r], minlength=N)
        G[:, r] += np.bincount(jj, c[:, 0] * xi[:, r] * xl[:, r], minlength=N)
        G[:, r] += np.bincount(ll, c[:, 0] * xi[:, r] * xj[:, r], minlength=N)


def grad_sparse(idx, coef, X, G):
    """Gradient of sum_m coef[m] prod_k x[idx[m, k]] added into ``G``."""
    M, p = idx.shape
    N = G.shape[0]
    for r in range(X.shape[1]):
        xs = X[idx, r]
        for k in range(p):
            others = np.prod(np.delete(xs, k, axis=1), axis=1)
            G[:, r] += np.bincount(idx[:, k], coef * others, minlength=N)
