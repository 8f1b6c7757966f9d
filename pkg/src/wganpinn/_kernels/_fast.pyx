# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: same contracts as the numpy reference backend (_ref).

Matrix products go through BLAS (dgemm/dsyrk); elementwise work, groupsort,
the Adam update and the Björck iteration are fused single-pass loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh as ctanh, sqrt as csqrt, fabs, pow as cpow
from scipy.linalg.cython_blas cimport dgemm, dsyrk

cnp.import_array()


cdef inline void _gemm_nt(double[:, ::1] x, double[:, ::1] w, double[:, ::1] y) noexcept nogil:
    # y (B,m) = x (B,n) @ w (m,n)^T, all row-major
    cdef int B = x.shape[0], n = x.shape[1], m = w.shape[0]
    cdef double one = 1.0, zero = 0.0
    dgemm("T", "N", &m, &B, &n, &one, &w[0, 0], &n, &x[0, 0], &n, &zero, &y[0, 0], &m)


def affine_fwd(double[:, ::1] x, double[:, ::1] w, b):
    cdef int B = x.shape[0], m = w.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((B, m))
    cdef double[:, ::1] y = out
    cdef double[::1] bv
    cdef Py_ssize_t i, j
    _gemm_nt(x, w, y)
    if b is not None:
        bv = b
        for i in range(B):
            for j in range(m):
                y[i, j] += bv[j]
    return out


def matmul_nt(double[:, ::1] x, double[:, ::1] w):
    cdef cnp.ndarray[double, ndim=2] out = np.empty((x.shape[0], w.shape[0]))
    cdef double[:, ::1] y = out
    _gemm_nt(x, w, y)
    return out


def matmul_tn(double[:, ::1] dy, double[:, ::1] x):
    # dw (m,n) = dy (B,m)^T @ x (B,n)
    cdef int B = dy.shape[0], m = dy.shape[1], n = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((m, n))
    cdef double[:, ::1] c = out
    cdef double one = 1.0, zero = 0.0
    dgemm("N", "T", &n, &m, &B, &one, &x[0, 0], &n, &dy[0, 0], &m, &zero, &c[0, 0], &n)
    return out


def matmul_nn(double[:, ::1] dy, double[:, ::1] w):
    # dx (B,n) = dy (B,m) @ w (m,n)
    cdef int B = dy.shape[0], m = dy.shape[1], n = w.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((B, n))
    cdef double[:, ::1] c = out
    cdef double one = 1.0, zero = 0.0
    dgemm("N", "N", &n, &B, &m, &one, &w[0, 0], &n, &dy[0, 0], &m, &zero, &c[0, 0], &n)
    return out


def colsum(double[:, ::1] dy):
    cdef Py_ssize_t B = dy.shape[0], m = dy.shape[1], i, j
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(m)
    cdef double[::1] o = out
    for i in range(B):
        for j in range(m):
            o[j] += dy[i, j]
    return out


def tanh_fwd(cnp.ndarray x):
    # numpy's vectorized tanh beats a scalar libm loop by ~10x
    return np.tanh(x)


def tanh_bwd(cnp.ndarray t, cnp.ndarray dy):
    cdef cnp.ndarray out = np.empty_like(t)
    cdef double[::1] tv = t.ravel(), gv = dy.ravel(), ov = out.ravel()
    cdef Py_ssize_t i, n = tv.shape[0]
    for i in range(n):
        ov[i] = (1.0 - tv[i] * tv[i]) * gv[i]
    return out


def mul(cnp.ndarray a, cnp.ndarray b):
    cdef cnp.ndarray out = np.empty_like(a)
    cdef double[::1] av = a.ravel(), bv = b.ravel(), ov = out.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    for i in range(n):
        ov[i] = av[i] * bv[i]
    return out


def add(cnp.ndarray a, cnp.ndarray b):
    cdef cnp.ndarray out = np.empty_like(a)
    cdef double[::1] av = a.ravel(), bv = b.ravel(), ov = out.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    for i in range(n):
        ov[i] = av[i] + bv[i]
    return out


def sub(cnp.ndarray a, cnp.ndarray b):
    cdef cnp.ndarray out = np.empty_like(a)
    cdef double[::1] av = a.ravel(), bv = b.ravel(), ov = out.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    for i in range(n):
        ov[i] = av[i] - bv[i]
    return out


def square(cnp.ndarray a):
    cdef cnp.ndarray out = np.empty_like(a)
    cdef double[::1] av = a.ravel(), ov = out.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    for i in range(n):
        ov[i] = av[i] * av[i]
    return out


def scale(cnp.ndarray a, double c):
    cdef cnp.ndarray out = np.empty_like(a)
    cdef double[::1] av = a.ravel(), ov = out.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    for i in range(n):
        ov[i] = av[i] * c
    return out


def add_scaled(cnp.ndarray a, cnp.ndarray b, double c):
    cdef cnp.ndarray out = np.empty_like(a)
    cdef double[::1] av = a.ravel(), bv = b.ravel(), ov = out.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    for i in range(n):
        ov[i] = av[i] + c * bv[i]
    return out


def mean_all(cnp.ndarray a):
    cdef double[::1] av = a.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += av[i]
    return acc / n


def fill(shape, double value):
    return np.full(shape, value)


def iadd(cnp.ndarray acc, cnp.ndarray piece):
    cdef double[::1] av = acc.ravel(), pv = piece.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    for i in range(n):
        av[i] += pv[i]
    return acc


def groupsort_fwd(double[:, ::1] x):
    cdef Py_ssize_t B = x.shape[0], W = x.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2] out = np.empty((B, W))
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] mask = np.empty((B, W // 2), dtype=np.uint8)
    cdef double[:, ::1] y = out
    cdef cnp.uint8_t[:, ::1] mv = mask
    cdef double a, b
    for i in range(B):
        for j in range(0, W, 2):
            a = x[i, j]
            b = x[i, j + 1]
            if a > b:
                y[i, j] = b
                y[i, j + 1] = a
                mv[i, j // 2] = 1
            else:
                y[i, j] = a
                y[i, j + 1] = b
                mv[i, j // 2] = 0
    return out, mask


def groupsort_bwd(double[:, ::1] dy, cnp.uint8_t[:, ::1] mask):
    cdef Py_ssize_t B = dy.shape[0], W = dy.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2] out = np.empty((B, W))
    cdef double[:, ::1] dx = out
    for i in range(B):
        for j in range(0, W, 2):
            if mask[i, j // 2]:
                dx[i, j] = dy[i, j + 1]
                dx[i, j + 1] = dy[i, j]
            else:
                dx[i, j] = dy[i, j]
                dx[i, j + 1] = dy[i, j + 1]
    return out


def jet_affine_fwd(double[:, ::1] bundle, double[:, ::1] w, b, int n_batch):
    cdef int rows = bundle.shape[0], m = w.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((rows, m))
    cdef double[:, ::1] y = out
    cdef double[::1] bv
    cdef Py_ssize_t i, j
    _gemm_nt(bundle, w, y)
    if b is not None:
        bv = b
        for i in range(n_batch):
            for j in range(m):
                y[i, j] += bv[j]
    return out


def jet_tanh_fwd(double[:, ::1] bundle, int n_batch, int n_dirs2, int n_dirs1):
    cdef Py_ssize_t B = n_batch, W = bundle.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2] outa = np.empty((bundle.shape[0], W))
    cdef double[:, ::1] out = outa
    cdef Py_ssize_t off, d
    cdef double t, s, a1, a2
    outa[:B] = np.tanh(np.asarray(bundle)[:B])  # vectorized tanh on the value block
    for d in range(n_dirs2):
        off = B + 2 * d * B
        for i in range(B):
            for j in range(W):
                t = out[i, j]
                s = 1.0 - t * t
                a1 = bundle[off + i, j]
                a2 = bundle[off + B + i, j]
                out[off + i, j] = s * a1
                out[off + B + i, j] = s * a2 - 2.0 * t * s * a1 * a1
    for d in range(n_dirs1):
        off = B + 2 * n_dirs2 * B + d * B
        for i in range(B):
            for j in range(W):
                t = out[i, j]
                s = 1.0 - t * t
                out[off + i, j] = s * bundle[off + i, j]
    return outa


def jet_tanh_bwd(double[:, ::1] bundle, double[:, ::1] out, double[:, ::1] dy,
                 int n_batch, int n_dirs2, int n_dirs1):
    cdef Py_ssize_t B = n_batch, W = bundle.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2] dxa = np.empty((bundle.shape[0], W))
    cdef double[:, ::1] dx = dxa
    cdef Py_ssize_t off, d
    cdef double t, s, ts, a1, a2, g1, g2, dv
    for i in range(B):
        for j in range(W):
            t = out[i, j]
            s = 1.0 - t * t
            dx[i, j] = s * dy[i, j]
    for d in range(n_dirs2):
        off = B + 2 * d * B
        for i in range(B):
            for j in range(W):
                t = out[i, j]
                s = 1.0 - t * t
                ts = t * s
                a1 = bundle[off + i, j]
                a2 = bundle[off + B + i, j]
                g1 = dy[off + i, j]
                g2 = dy[off + B + i, j]
                dx[i, j] += (-2.0 * ts * a1) * g1 + (-2.0 * ts * a2 + (4.0 * t * t - 2.0 * s) * s * a1 * a1) * g2
                dx[off + i, j] = s * g1 + (-4.0 * ts * a1) * g2
                dx[off + B + i, j] = s * g2
    for d in range(n_dirs1):
        off = B + 2 * n_dirs2 * B + d * B
        for i in range(B):
            for j in range(W):
                t = out[i, j]
                s = 1.0 - t * t
                a1 = bundle[off + i, j]
                g1 = dy[off + i, j]
                dx[i, j] += (-2.0 * t * s * a1) * g1
                dx[off + i, j] = s * g1
    return dxa


def block_get(double[:, ::1] bundle, int n_batch, int idx):
    return np.array(np.asarray(bundle)[idx * n_batch : (idx + 1) * n_batch], copy=True)


def block_scatter(shape, int n_batch, int idx, double[:, ::1] dy):
    cdef cnp.ndarray[double, ndim=2] out = np.zeros(shape)
    out[idx * n_batch : (idx + 1) * n_batch] = dy
    return out


def adam_step(cnp.ndarray p, cnp.ndarray g, cnp.ndarray m, cnp.ndarray v,
              long t, double lr, double beta1, double beta2, double eps,
              double sign=1.0):
    cdef double[::1] pv = p.ravel(), gv = g.ravel(), mv = m.ravel(), vv = v.ravel()
    cdef Py_ssize_t i, n = pv.shape[0]
    cdef double bc1 = 1.0 - cpow(beta1, t), bc2 = 1.0 - cpow(beta2, t)
    cdef double gi, mh, vh
    for i in range(n):
        gi = sign * gv[i]
        mv[i] = beta1 * mv[i] + (1.0 - beta1) * gi
        vv[i] = beta2 * vv[i] + (1.0 - beta2) * gi * gi
        mh = mv[i] / bc1
        vh = vv[i] / bc2
        pv[i] -= lr * mh / (csqrt(vh) + eps)


def bjorck(cnp.ndarray a_in, int steps, int order):
    """Same iteration as the reference backend, smaller Gram side."""
    cdef bint transpose = a_in.shape[0] > a_in.shape[1]
    # always copy: the iteration ping-pongs between two owned buffers
    cdef cnp.ndarray a = np.array(a_in.T if transpose else a_in, order="C", copy=True)
    cdef int r = a.shape[0], c = a.shape[1]
    cdef cnp.ndarray[double, ndim=2] q = np.empty((r, r))
    cdef cnp.ndarray[double, ndim=2] poly = np.empty((r, r))
    cdef cnp.ndarray[double, ndim=2] q2 = np.empty((r, r))
    cdef cnp.ndarray nxt = np.empty((r, c))
    cdef double[:, ::1] av = a, qv = q, pv = poly, q2v = q2, nv = nxt
    cdef double one = 1.0, zero = 0.0
    cdef Py_ssize_t i, j, s
    cdef double tmp
    for s in range(steps):
        # gram = a @ a^T via dsyrk; BLAS lower triangle = row-major upper
        dsyrk("L", "T", &r, &c, &one, &av[0, 0], &c, &zero, &qv[0, 0], &r)
        for i in range(r):
            for j in range(i + 1, r):
                qv[j, i] = qv[i, j]
        # q <- I - gram ; poly = I + q/2 (+ 3 q^2 / 8)
        for i in range(r):
            for j in range(r):
                tmp = (1.0 if i == j else 0.0) - qv[i, j]
                qv[i, j] = tmp
                pv[i, j] = (1.0 if i == j else 0.0) + 0.5 * tmp
        if order >= 2:
            dsyrk("L", "N", &r, &r, &one, &qv[0, 0], &r, &zero, &q2v[0, 0], &r)
            for i in range(r):
                for j in range(i + 1, r):
                    q2v[j, i] = q2v[i, j]
            for i in range(r):
                for j in range(r):
                    pv[i, j] += 0.375 * q2v[i, j]
        # a <- poly @ a : col-major nxt-view (c,r) = a-view (c,r) @ poly-view (r,r)
        dgemm("N", "N", &c, &r, &r, &one, &av[0, 0], &c, &pv[0, 0], &r, &zero, &nv[0, 0], &c)
        a, nxt = nxt, a
        av = a
        nv = nxt
    return np.ascontiguousarray(a.T) if transpose else a


def project_rows_l2(double[:, ::1] a):
    cdef Py_ssize_t r = a.shape[0], c = a.shape[1], i, j
    cdef double norm
    for i in range(r):
        norm = 0.0
        for j in range(c):
            norm += a[i, j] * a[i, j]
        norm = csqrt(norm)
        if norm > 1.0:
            for j in range(c):
                a[i, j] /= norm


def project_rows_l1(double[:, ::1] a):
    cdef Py_ssize_t r = a.shape[0], c = a.shape[1], i, j
    cdef double norm
    for i in range(r):
        norm = 0.0
        for j in range(c):
            norm += fabs(a[i, j])
        if norm > 1.0:
            for j in range(c):
                a[i, j] /= norm


def clip_inplace(cnp.ndarray a, double bound):
    cdef double[::1] av = a.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    for i in range(n):
        if av[i] > bound:
            av[i] = bound
        elif av[i] < -bound:
            av[i] = -bound


def sum_all(cnp.ndarray a):
    cdef double[::1] av = a.ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += av[i]
    return acc
