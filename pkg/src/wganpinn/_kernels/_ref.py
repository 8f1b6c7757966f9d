"""Pure-numpy implementations of the hot array kernels.

This module is the reference backend: the compiled extension in ``_fast``
implements the same functions with the same semantics.  Everything operates
on C-contiguous float64 arrays.

Jet bundles: several kernels work on "bundles", arrays of shape
(n_blocks*B, width) whose B-row blocks stack the value of a network layer
followed by directional-derivative channels.  Block 0 is always the value;
``dirs2`` directions contribute a (first, second) derivative block pair,
then ``dirs1`` directions contribute a single first-derivative block.
"""

from __future__ import annotations

import numpy as np


def affine_fwd(x, w, b):
    """x (B,n) @ w (m,n)^T + b (m,) -> (B,m).  b may be None."""
    y = x @ w.T
    if b is not None:
        y += b
    return y


def matmul_nt(x, w):
    """x (B,n) @ w (m,n)^T -> (B,m)."""
    return x @ w.T


def matmul_tn(dy, x):
    """dy (B,m)^T @ x (B,n) -> (m,n); weight gradient of affine/matmul."""
    return dy.T @ x


def matmul_nn(dy, w):
    """dy (B,m) @ w (m,n) -> (B,n); input gradient of affine/matmul."""
    return dy @ w


def colsum(dy):
    return dy.sum(axis=0)


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(t, dy):
    """Gradient through tanh given the forward output t."""
    return (1.0 - t * t) * dy


def mul(a, b):
    return a * b


def add(a, b):
    return a + b


def sub(a, b):
    return a - b


def square(a):
    return a * a


def scale(a, c):
    return a * c


def add_scaled(a, b, c):
    """a + c*b, used by backward accumulation and residual assembly."""
    return a + c * b


def mean_all(a):
    return float(a.mean())


def fill(shape, value):
    return np.full(shape, value)


def iadd(acc, piece):
    """In-place acc += piece; acc must own its buffer."""
    acc += piece
    return acc


def groupsort_fwd(x):
    """Sort each consecutive pair of columns ascending.

    Returns (y, swapped) where swapped (B, W//2) marks pairs that were
    exchanged; ties count as not swapped.
    """
    B, W = x.shape
    a = x[:, 0::2]
    b = x[:, 1::2]
    swapped = a > b
    y = np.empty_like(x)
    y[:, 0::2] = np.where(swapped, b, a)
    y[:, 1::2] = np.where(swapped, a, b)
    return y, swapped


def groupsort_bwd(dy, swapped):
    dx = np.empty_like(dy)
    dlo = dy[:, 0::2]
    dhi = dy[:, 1::2]
    dx[:, 0::2] = np.where(swapped, dhi, dlo)
    dx[:, 1::2] = np.where(swapped, dlo, dhi)
    return dx


def jet_affine_fwd(bundle, w, b, n_batch):
    """Affine layer applied to a jet bundle; bias only touches the value block."""
    y = bundle @ w.T
    if b is not None:
        y[:n_batch] += b
    return y


def jet_tanh_fwd(bundle, n_batch, n_dirs2, n_dirs1):
    """tanh jet rule on a bundle.

    value block v -> t = tanh(v); per order-2 direction (a1, a2) ->
    (s*a1, s*a2 - 2*t*s*a1^2) with s = 1 - t^2; per order-1 direction
    a1 -> s*a1.
    """
    B = n_batch
    t = np.tanh(bundle[:B])
    s = 1.0 - t * t
    out = np.empty_like(bundle)
    out[:B] = t
    off = B
    for _ in range(n_dirs2):
        a1 = bundle[off : off + B]
        a2 = bundle[off + B : off + 2 * B]
        o1 = s * a1
        out[off : off + B] = o1
        out[off + B : off + 2 * B] = s * a2 - 2.0 * (t * o1) * a1
        off += 2 * B
    for _ in range(n_dirs1):
        out[off : off + B] = s * bundle[off : off + B]
        off += B
    return out


def jet_tanh_bwd(bundle, out, dy, n_batch, n_dirs2, n_dirs1):
    """Backward of jet_tanh_fwd; needs the input bundle and the output."""
    B = n_batch
    t = out[:B]
    s = 1.0 - t * t
    dx = np.empty_like(dy)
    dv = s * dy[:B]
    off = B
    for _ in range(n_dirs2):
        a1 = bundle[off : off + B]
        a2 = bundle[off + B : off + 2 * B]
        g1 = dy[off : off + B]
        g2 = dy[off + B : off + 2 * B]
        ts = t * s
        # o1 = s*a1, o2 = s*a2 - 2*t*s*a1^2
        dv += (-2.0 * ts * a1) * g1
        dv += (-2.0 * ts * a2 + (4.0 * t * t - 2.0 * s) * s * a1 * a1) * g2
        dx[off : off + B] = s * g1 + (-4.0 * ts * a1) * g2
        dx[off + B : off + 2 * B] = s * g2
        off += 2 * B
    for _ in range(n_dirs1):
        a1 = bundle[off : off + B]
        g1 = dy[off : off + B]
        dv += (-2.0 * t * s * a1) * g1
        dx[off : off + B] = s * g1
        off += B
    dx[:B] = dv
    return dx


def block_get(bundle, n_batch, idx):
    """Copy block idx out of a bundle."""
    return bundle[idx * n_batch : (idx + 1) * n_batch].copy()


def block_scatter(shape, n_batch, idx, dy):
    """Zeros of bundle shape with dy placed in block idx."""
    g = np.zeros(shape)
    g[idx * n_batch : (idx + 1) * n_batch] = dy
    return g


def adam_step(p, g, m, v, t, lr, beta1, beta2, eps, sign=1.0):
    """Bias-corrected Adam update, in place on p, m, v.

    sign scales the gradient (-1 turns the descent into an ascent).
    """
    g = sign * g
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def bjorck(a, steps, order):
    """Björck orthonormalization, iterating on the smaller Gram side.

    For rows <= cols uses Q = I - A A^T and A <- (I + Q/2 + 3Q^2/8) A,
    otherwise the transposed form.  The caller pre-scales A.
    """
    rows, cols = a.shape
    transpose = rows > cols
    if transpose:
        a = a.T
        rows, cols = cols, rows
    a = np.ascontiguousarray(a)
    eye = np.eye(rows)
    for _ in range(steps):
        q = eye - a @ a.T
        poly = eye + 0.5 * q
        if order >= 2:
            poly += 0.375 * (q @ q)
        a = poly @ a
    return np.ascontiguousarray(a.T) if transpose else a


def project_rows_l2(a):
    """Divide each row by max(1, its L2 norm); in place."""
    norms = np.sqrt((a * a).sum(axis=1))
    a /= np.maximum(norms, 1.0)[:, None]


def project_rows_l1(a):
    """Divide each row by max(1, its L1 norm); in place."""
    norms = np.abs(a).sum(axis=1)
    a /= np.maximum(norms, 1.0)[:, None]


def clip_inplace(a, bound):
    np.clip(a, -bound, bound, out=a)


def sum_all(a):
    return float(a.sum())
