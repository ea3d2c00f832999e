"""numba-compiled versions of the hot loops (same contracts as numpy_impl)."""
import numpy as np
from numba import njit


@njit(cache=True)
def _pv(c, x):
    acc = c[c.shape[0] - 1]
    for k in range(c.shape[0] - 2, -1, -1):
        acc = acc * x + c[k]
    return acc


def polyval(c, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        return _pv(c, float(x))
    return _pv_vec(c, x.ravel()).reshape(x.shape)


@njit(cache=True)
def _pv_vec(c, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = _pv(c, x[i])
    return out


@njit(cache=True)
def row_integrals(i, Rt, R, C, nu1, nu2, psi, dt, tr, t1, t2):
    n1 = i + 1
    wt = np.empty(n1)
    w = np.empty(n1)
    v = np.empty(n1)
    m = 0.0
    for u in range(n1):
        c = C[i, u]
        d2 = _pv(nu2, c)
        wt[u] = Rt[i, u] * d2
        w[u] = R[i, u] * d2
        v[u] = _pv(nu1, c)
        pr = _pv(psi, c) * R[i, u]
        if u == 0 or u == i:
            m += 0.5 * pr
        else:
            m += pr
    for j in range(n1):
        tr[j] = 0.0
        t1[j] = 0.0
    if i == 0:
        t2[0] = 0.0
        return 0.0
    for u in range(n1):
        wu = wt[u]
        ww = w[u]
        for j in range(u + 1):
            tr[j] += Rt[u, j] * wu
        for j in range(n1):
            t1[j] += C[u, j] * ww
    for j in range(n1):
        acc = 0.0
        for u in range(j + 1):
            acc += R[j, u] * v[u]
        t2[j] = dt * (acc - 0.5 * R[j, 0] * v[0] - 0.5 * R[j, j] * v[j])
        tr[j] = dt * (tr[j] - 0.5 * Rt[j, j] * wt[j] - 0.5 * Rt[i, j] * wt[i])
        t1[j] = dt * (t1[j] - 0.5 * C[0, j] * w[0] - 0.5 * C[i, j] * w[i])
    return dt * m


@njit(cache=True)
def kraichnan_row(i, H, C, nu2, dt, out):
    n1 = i + 1
    x = np.empty(n1)
    for u in range(n1):
        x[u] = H[i, u] * _pv(nu2, C[i, u])
        out[u] = 0.0
    if i == 0:
        return
    for u in range(n1):
        xu = x[u]
        for j in range(u + 1):
            out[j] += H[u, j] * xu
    for j in range(n1):
        out[j] = dt * (out[j] - 0.5 * x[j] * H[j, j] - 0.5 * x[i] * H[i, j])


@njit(cache=True)
def fdt_march(phic, b, dt, n):
    D = np.empty(n + 1)
    y = np.empty(n + 1)
    ph = np.empty(n + 1)
    D[0] = 1.0
    y[0] = -b
    ph[0] = _pv(phic, 1.0)
    upd = 0.0
    h = 0.5 * dt
    for i in range(1, n + 1):
        s = 0.0
        for k in range(1, i):
            s += ph[k] * y[i - k]
        if i > 1:
            Dp = D[i - 1] + dt * (1.5 * y[i - 1] - 0.5 * y[i - 2])
        else:
            Dp = D[0] + dt * y[0]
        yi = y[i - 1]
        prev = yi
        for _ in range(2):
            prev = yi
            yi = (-b - dt * (s + 0.5 * _pv(phic, Dp) * y[0])) / (1.0 + h * ph[0])
            Dp = D[i - 1] + h * (y[i - 1] + yi)
        d = abs(yi - prev)
        if d > upd:
            upd = d
        y[i] = yi
        D[i] = Dp
        ph[i] = _pv(phic, Dp)
    return D, y, upd


@njit(cache=True)
def hform_solve(k, dt):
    n = k.shape[0] - 1
    H = np.empty(n + 1)
    a = np.empty(n + 1)
    H[0] = 1.0
    a[0] = k[0]
    F_prev = 0.0
    for i in range(1, n + 1):
        interior = 0.0
        for v in range(1, i):
            interior += a[i - v] * H[v]
        hp = H[i - 1] + dt * F_prev
        Fp = dt * (interior + 0.5 * k[i] * hp * H[0] + 0.5 * a[0] * hp)
        hi = H[i - 1] + 0.5 * dt * (F_prev + Fp)
        H[i] = hi
        a[i] = k[i] * hi
        F_prev = dt * (interior + 0.5 * a[i] * H[0] + 0.5 * a[0] * hi)
    return H


@njit(cache=True)
def violation_row(i, C, G, nu1, nu2, dt, out):
    n1 = i + 1
    a = np.empty(n1)
    v = np.empty(n1)
    for u in range(n1):
        c = C[i, u]
        a[u] = G[i, u] * _pv(nu2, c)
        v[u] = _pv(nu1, c)
    for j in range(n1):
        acc = 0.0
        for u in range(j + 1):
            acc += C[j, u] * a[u] + G[j, u] * v[u]
        ends = 0.5 * (C[j, 0] * a[0] + G[j, 0] * v[0]) + 0.5 * (C[j, j] * a[j] + G[j, j] * v[j])
        out[j] = dt * (acc - ends)


@njit(cache=True, fastmath=True)
def _axpy_dot(Jb, xs, gs, bx):
    acc = 0.0
    for k in range(Jb.shape[0]):
        cj = Jb[k]
        gs[k] += cj * bx
        acc += cj * xs[k]
    return acc


@njit(cache=True, fastmath=True)
def _p3_column(J, N, x, a, g):
    pos = 0
    for i in range(N):
        xi = x[i]
        for j in range(i, N):
            xj = x[j]
            xij = xi * xj
            # first entry of the block has l == j
            c = J[pos] * (0.5 * a if i < j else a / 6.0)
            g[j] += c * xij
            base = a if i < j else 0.5 * a
            m = N - j - 1
            acc = _axpy_dot(J[pos + 1:pos + 1 + m], x[j + 1:], g[j + 1:], base * xij)
            pos += 1 + m
            sl = c * xj + base * acc
            g[i] += xj * sl
            g[j] += xi * sl


@njit(cache=True)
def grad_p3(J, N, X, a, G):
    R = X.shape[1]
    x = np.empty(N)
    g = np.empty(N)
    for r in range(R):
        for k in range(N):
            x[k] = X[k, r]
            g[k] = 0.0
        _p3_column(J, N, x, a, g)
        for k in range(N):
            G[k, r] += g[k]


@njit(cache=True)
def grad_sparse(idx, coef, X, G):
    M, p = idx.shape
    R = X.shape[1]
    for m in range(M):
        c = coef[m]
        for r in range(R):
            for k in range(p):
                prod = c
                for q in range(p):
                    if q != k:
                        prod *= X[idx[m, q], r]
                G[idx[m, k], r] += prod
