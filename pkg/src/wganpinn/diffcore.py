"""Tape-based reverse-mode differentiation and directional jets.

A :class:`Tape` records primitive array operations in topological order;
:func:`backward` walks it once and returns gradients for every leaf.
Directional second-order derivatives are propagated layer-by-layer with
analytic rules (affine and tanh) as "jet bundles": stacked row blocks
holding the value channel plus first/second derivative channels along a
fixed input direction.  Every jet channel is itself a tape node, so PDE
residuals built from jets remain differentiable w.r.t. network parameters.

All values are float64; tensors are C-contiguous numpy arrays (shape plus
row-major data).  Scalars produced by reductions are python floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels as K

# Op codes.
_LEAF = 0
_CONST = 1
_AFFINE = 2  # parents (w, x, b|None)   value x @ w^T + b
_MATMUL = 3  # parents (w, x)           value x @ w^T
_TANH = 4
_GS = 5  # groupsort, pairs of adjacent columns
_MUL = 6
_ADD = 7
_SUB = 8
_SQUARE = 9
_SCALE = 10  # aux: scalar factor
_MEAN = 11
_CONCAT = 12  # aux: column count of first parent
_SUBC = 13  # aux: scalar subtrahend
_JAFF = 14  # parents (w, bundle, b|None); aux: n_batch
_JTANH = 15  # aux: (n_batch, n_dirs2, n_dirs1)
_BLOCK = 16  # aux: (n_batch, block_idx)


class Tape:
    """Ordered list of primitive ops; parents always precede children."""

    __slots__ = ("val", "op", "par", "aux", "ng")

    def __init__(self):
        self.val = []
        self.op = []
        self.par = []
        self.aux = []
        self.ng = []

    def __len__(self):
        return len(self.val)

    def _push(self, op, parents, value, aux=None, ng=None):
        if ng is None:
            ngl = self.ng
            ng = False
            for p in parents:
                if ngl[p]:
                    ng = True
                    break
        self.op.append(op)
        self.par.append(parents)
        self.val.append(value)
        self.aux.append(aux)
        self.ng.append(ng)
        return Var(self, len(self.val) - 1)

    def leaf(self, array):
        """Register a trainable parameter; gradients flow into it."""
        return self._push(_LEAF, (), _as_tensor(array), ng=True)

    def constant(self, array):
        """Register a non-differentiable input."""
        if isinstance(array, (float, int)):
            return self._push(_CONST, (), float(array), ng=False)
        return self._push(_CONST, (), _as_tensor(array), ng=False)

    def replay_values(self):
        """Recompute every node from the leaves; bit-exact by construction."""
        out = []
        for i in range(len(self.val)):
            op = self.op[i]
            if op in (_LEAF, _CONST):
                out.append(self.val[i])
            else:
                pv = [out[p] for p in self.par[i]]
                out.append(_forward(op, pv, self.aux[i]))
        return out


class Var:
    """Handle to one tape node."""

    __slots__ = ("tape", "i")

    def __init__(self, tape, i):
        self.tape = tape
        self.i = i

    @property
    def value(self):
        return self.tape.val[self.i]

    @property
    def shape(self):
        v = self.tape.val[self.i]
        return () if isinstance(v, float) else v.shape

    def __add__(self, other):
        if isinstance(other, (float, int)):
            return sub_const(self, -float(other))
        return add(self, other)

    def __sub__(self, other):
        if isinstance(other, (float, int)):
            return sub_const(self, float(other))
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Var(#{self.i}, shape={self.shape})"


@dataclass
class Jet:
    """Value plus first/second directional derivatives along one direction."""

    value: Union[Var, np.ndarray]
    d1: Union[Var, np.ndarray]
    d2: Optional[Union[Var, np.ndarray]]


def _as_tensor(array):
    a = np.ascontiguousarray(array, dtype=np.float64)
    return a


def _forward(op, pv, aux):
    if op == _AFFINE:
        w, x = pv[0], pv[1]
        b = pv[2] if len(pv) == 3 else None
        if x.ndim == 1:
            y = K.affine_fwd(x[None, :], w, b)
            return np.ascontiguousarray(y[0])
        return K.affine_fwd(x, w, b)
    if op == _MATMUL:
        w, x = pv
        if x.ndim == 1:
            return np.ascontiguousarray(K.matmul_nt(x[None, :], w)[0])
        return K.matmul_nt(x, w)
    if op == _TANH:
        return K.tanh_fwd(pv[0])
    if op == _GS:
        y, _ = K.groupsort_fwd(pv[0])
        return y
    if op == _MUL:
        return K.mul(pv[0], pv[1])
    if op == _ADD:
        a, b = pv
        if isinstance(a, float):
            return a + b
        return K.add(a, b)
    if op == _SUB:
        a, b = pv
        if isinstance(a, float):
            return a - b
        return K.sub(a, b)
    if op == _SQUARE:
        return K.square(pv[0])
    if op == _SCALE:
        a = pv[0]
        return a * aux if isinstance(a, float) else K.scale(a, aux)
    if op == _MEAN:
        return K.mean_all(pv[0])
    if op == _CONCAT:
        return np.ascontiguousarray(np.concatenate((pv[0], pv[1]), axis=1))
    if op == _SUBC:
        return pv[0] - aux
    if op == _JAFF:
        w, bundle = pv[0], pv[1]
        b = pv[2] if len(pv) == 3 else None
        return K.jet_affine_fwd(bundle, w, b, aux)
    if op == _JTANH:
        nb, nd2, nd1 = aux
        return K.jet_tanh_fwd(pv[0], nb, nd2, nd1)
    if op == _BLOCK:
        nb, idx = aux
        return K.block_get(pv[0], nb, idx)
    raise AssertionError(f"unknown op {op}")


def _check_var(x):
    if not isinstance(x, Var):
        raise TypeError(f"expected a tape Var, got {type(x).__name__}")
    return x


# ---------------------------------------------------------------------------
# Recorded operations.  Each computes its value inline and pushes one node;
# ``_forward`` mirrors the same rules for replay.


def matmul_affine(w, x, b=None):
    """w (m,n) applied to x (n,) or batched (B,n), plus bias b (m,).

    Gradients w.r.t. w, x and b are available on the backward pass.
    """
    _check_var(w), _check_var(x)
    wv, xv = w.value, x.value
    n = xv.shape[-1]
    if wv.ndim != 2 or wv.shape[1] != n:
        raise ValueError(
            f"matmul_affine: W has shape {wv.shape}, incompatible with input of width {n}"
        )
    tape = x.tape
    if b is not None:
        _check_var(b)
        if b.value.shape != (wv.shape[0],):
            raise ValueError(
                f"matmul_affine: bias shape {b.value.shape} does not match output width {wv.shape[0]}"
            )
        if xv.ndim == 1:
            value = np.ascontiguousarray(K.affine_fwd(xv[None, :], wv, b.value)[0])
        else:
            value = K.affine_fwd(xv, wv, b.value)
        return tape._push(_AFFINE, (w.i, x.i, b.i), value)
    if xv.ndim == 1:
        value = np.ascontiguousarray(K.matmul_nt(xv[None, :], wv)[0])
    else:
        value = K.matmul_nt(xv, wv)
    return tape._push(_MATMUL, (w.i, x.i), value)


def tanh_elementwise(x):
    """Elementwise tanh; backward uses 1 - tanh^2."""
    return x.tape._push(_TANH, (x.i,), K.tanh_fwd(x.value))


def groupsort2(x):
    """Sort adjacent column pairs ascending (group size 2)."""
    if x.value.shape[-1] % 2 != 0:
        raise ValueError(f"groupsort: width {x.value.shape[-1]} not divisible by 2")
    value, mask = K.groupsort_fwd(x.value)
    return x.tape._push(_GS, (x.i,), value, mask)


def mul(a, b):
    if isinstance(b, (float, int)):
        return scale(a, float(b))
    if a.value.shape != b.value.shape:
        raise ValueError(f"mul: shape mismatch {a.value.shape} vs {b.value.shape}")
    return a.tape._push(_MUL, (a.i, b.i), K.mul(a.value, b.value))


def add(a, b):
    av, bv = a.value, b.value
    value = av + bv if isinstance(av, float) else K.add(av, bv)
    return a.tape._push(_ADD, (a.i, b.i), value)


def sub(a, b):
    av, bv = a.value, b.value
    value = av - bv if isinstance(av, float) else K.sub(av, bv)
    return a.tape._push(_SUB, (a.i, b.i), value)


def square(a):
    return a.tape._push(_SQUARE, (a.i,), K.square(a.value))


def scale(a, c):
    c = float(c)
    av = a.value
    value = av * c if isinstance(av, float) else K.scale(av, c)
    return a.tape._push(_SCALE, (a.i,), value, c)


def sub_const(a, c):
    c = float(c)
    return a.tape._push(_SUBC, (a.i,), a.value - c, c)


def mean(a):
    """Mean of all entries; produces a scalar node."""
    return a.tape._push(_MEAN, (a.i,), K.mean_all(a.value))


def concat_cols(a, b):
    value = np.ascontiguousarray(np.concatenate((a.value, b.value), axis=1))
    return a.tape._push(_CONCAT, (a.i, b.i), value, a.value.shape[1])


# ---------------------------------------------------------------------------
# Backward pass.


class Grads:
    """Gradient lookup for the leaves of one backward pass."""

    def __init__(self, tape, table):
        self._tape = tape
        self._table = table

    def wrt(self, var):
        g = self._table[var.i]
        if g is None:
            v = self._tape.val[var.i]
            return 0.0 if isinstance(v, float) else np.zeros_like(v)
        return g


def backward(tape, output):
    """Gradients of a scalar output w.r.t. every leaf on ``tape``.

    Leaves not on a path to the output get zero.  Rejects non-scalar
    outputs and non-finite gradients surface as NaN/Inf in the result.
    """
    out_val = tape.val[output.i]
    if not isinstance(out_val, float):
        raise ValueError(f"backward: output must be scalar, got shape {out_val.shape}")
    n = output.i + 1
    grads = [None] * len(tape.val)
    owned = [False] * len(tape.val)
    grads[output.i] = 1.0
    val = tape.val
    ops = tape.op
    pars = tape.par
    auxs = tape.aux
    ngs = tape.ng

    def acc(j, piece, fresh):
        if not ngs[j]:
            return
        cur = grads[j]
        if cur is None:
            grads[j] = piece
            owned[j] = fresh
        elif isinstance(cur, float):
            grads[j] = cur + piece
        elif owned[j]:
            K.iadd(cur, piece)
        else:
            grads[j] = K.add(cur, piece)
            owned[j] = True

    for i in range(n - 1, -1, -1):
        g = grads[i]
        if g is None or not ngs[i]:
            continue
        op = ops[i]
        if op == _LEAF or op == _CONST:
            continue
        p = pars[i]
        if op == _AFFINE or op == _MATMUL:
            wi, xi = p[0], p[1]
            xval = val[xi]
            g2 = g[None, :] if g.ndim == 1 else g
            x2 = xval[None, :] if xval.ndim == 1 else xval
            if ngs[wi]:
                acc(wi, K.matmul_tn(g2, x2), True)
            if ngs[xi]:
                piece = K.matmul_nn(g2, val[wi])
                acc(xi, piece[0] if xval.ndim == 1 else piece, True)
            if op == _AFFINE and ngs[p[2]]:
                acc(p[2], K.colsum(g2), True)
        elif op == _TANH:
            acc(p[0], K.tanh_bwd(val[i], g), True)
        elif op == _GS:
            acc(p[0], K.groupsort_bwd(g, auxs[i]), True)
        elif op == _MUL:
            acc(p[0], K.mul(g, val[p[1]]), True)
            acc(p[1], K.mul(g, val[p[0]]), True)
        elif op == _ADD:
            acc(p[0], g, False)
            acc(p[1], g, False)
        elif op == _SUB:
            acc(p[0], g, False)
            if ngs[p[1]]:
                acc(p[1], -g if isinstance(g, float) else K.scale(g, -1.0), True)
        elif op == _SQUARE:
            acc(p[0], K.scale(K.mul(g, val[p[0]]), 2.0), True)
        elif op == _SCALE:
            acc(p[0], g * auxs[i] if isinstance(g, float) else K.scale(g, auxs[i]), True)
        elif op == _SUBC:
            acc(p[0], g, False)
        elif op == _MEAN:
            pv = val[p[0]]
            acc(p[0], K.fill(pv.shape, g / pv.size), True)
        elif op == _CONCAT:
            na = auxs[i]
            acc(p[0], np.ascontiguousarray(g[:, :na]), True)
            acc(p[1], np.ascontiguousarray(g[:, na:]), True)
        elif op == _JAFF:
            wi, bi = p[0], p[1]
            nb = auxs[i]
            if ngs[wi]:
                acc(wi, K.matmul_tn(g, val[bi]), True)
            if ngs[bi]:
                acc(bi, K.matmul_nn(g, val[wi]), True)
            if len(p) == 3 and ngs[p[2]]:
                acc(p[2], K.colsum(g[:nb]), True)
        elif op == _JTANH:
            nb, nd2, nd1 = auxs[i]
            acc(p[0], K.jet_tanh_bwd(val[p[0]], val[i], g, nb, nd2, nd1), True)
        elif op == _BLOCK:
            nb, idx = auxs[i]
            acc(p[0], K.block_scatter(val[p[0]].shape, nb, idx, g), True)
        else:  # pragma: no cover
            raise AssertionError(f"no backward rule for op {op}")
        if i != output.i:
            grads[i] = None  # release intermediate gradient memory
    return Grads(tape, grads)


# ---------------------------------------------------------------------------
# Jet propagation through tanh MLPs.


def _jet_input(x, z, directions, orders):
    """Stack the input bundle: value rows, then derivative channels.

    ``directions`` are vectors in x-space; z stays constant along them, so
    derivative channels are zero over the latent columns.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    blocks = [x if z is None else np.concatenate((x, np.atleast_2d(z)), axis=1)]
    B, width = blocks[0].shape
    d = x.shape[1]
    zero = np.zeros((B, width))
    for v, order in zip(directions, orders):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (d,):
            raise ValueError(f"direction has shape {v.shape}, expected ({d},)")
        row = np.zeros(width)
        row[:d] = v
        blocks.append(np.broadcast_to(row, (B, width)))
        if order >= 2:
            blocks.append(zero)
    return np.ascontiguousarray(np.concatenate(blocks, axis=0)), B


def jet_forward_tape(tape, wvars, bvars, x, z, directions, orders):
    """Record the full jet propagation; returns the output bundle Var."""
    nd2 = sum(1 for o in orders if o >= 2)
    nd1 = len(orders) - nd2
    if sorted(orders, reverse=True) != list(orders):
        raise ValueError("order-2 directions must precede order-1 directions")
    bundle_np, B = _jet_input(x, z, directions, orders)
    bundle = tape.constant(bundle_np)
    last = len(wvars) - 1
    for li, (w, b) in enumerate(zip(wvars, bvars)):
        value = K.jet_affine_fwd(bundle.value, w.value, b.value, B)
        bundle = tape._push(_JAFF, (w.i, bundle.i, b.i), value, B)
        if li != last:
            value = K.jet_tanh_fwd(bundle.value, B, nd2, nd1)
            bundle = tape._push(_JTANH, (bundle.i,), value, (B, nd2, nd1))
    return bundle, B


def jet_forward_np(weights, biases, x, z, directions, orders):
    """Plain-numpy jet propagation (no tape); returns the output bundle."""
    nd2 = sum(1 for o in orders if o >= 2)
    nd1 = len(orders) - nd2
    bundle, B = _jet_input(x, z, directions, orders)
    last = len(weights) - 1
    for li, (w, b) in enumerate(zip(weights, biases)):
        bundle = K.jet_affine_fwd(bundle, w, b, B)
        if li != last:
            bundle = K.jet_tanh_fwd(bundle, B, nd2, nd1)
    return bundle, B


def jet_channel(bundle, n_batch, idx):
    """Extract one B-row block of a bundle Var as its own node."""
    value = K.block_get(bundle.value, n_batch, idx)
    return bundle.tape._push(_BLOCK, (bundle.i,), value, (n_batch, idx))


def directional_jet(weights, biases, x, z, v, *, tape=None, order=2):
    """Jet of the tanh MLP defined by (weights, biases) along direction v.

    x may be a single point (d,) or a batch (B,d); z is held constant along
    the direction.  With a tape, the returned Jet components are tape nodes
    differentiable w.r.t. the weight/bias leaves; otherwise plain arrays.
    """
    squeeze = np.asarray(x).ndim == 1
    if tape is not None:
        bundle, B = jet_forward_tape(tape, weights, biases, x, z, [v], [order])
        value = jet_channel(bundle, B, 0)
        d1 = jet_channel(bundle, B, 1)
        d2 = jet_channel(bundle, B, 2) if order >= 2 else None
        return Jet(value, d1, d2)
    bundle, B = jet_forward_np(weights, biases, x, z, [v], [order])
    value = bundle[:B]
    d1 = bundle[B : 2 * B]
    d2 = bundle[2 * B : 3 * B] if order >= 2 else None
    if squeeze:
        value, d1 = value[0], d1[0]
        d2 = None if d2 is None else d2[0]
    return Jet(value, d1, d2)


# ---------------------------------------------------------------------------
# Seedable substreams.


def rng_streams(seed, count):
    """Independent deterministic substreams of a counter-based generator.

    Substream i is a pure function of (seed, i); streams are disjoint
    across indices and reproducible regardless of thread count.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    root = np.random.SeedSequence(int(seed))
    return [np.random.Generator(np.random.Philox(child)) for child in root.spawn(count)]
