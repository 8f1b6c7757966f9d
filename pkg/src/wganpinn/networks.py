"""Generator and discriminator network classes with norm constraints.

The generator is a tanh MLP mapping (x, z) to a solution sample, optionally
with all weight entries clamped to [-M, M].  The discriminator is a
groupsort network whose first-layer rows are constrained to unit L2 norm
and whose later rows are constrained to unit L1 norm; with the constraints
enforced the map is 1-Lipschitz from the Euclidean input norm.
Constraints are applied by Björck orthonormalization followed by an exact
row-wise projection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from . import diffcore as dc


@dataclass
class GeneratorNet:
    """tanh MLP with ``depth`` hidden layers of ``width`` neurons.

    weights[i] has shape (fan_out, fan_in); the output layer is linear.
    """

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    clip_bound: Optional[float] = None

    @classmethod
    def build(cls, input_dim, output_dim, depth, width, clip_bound=None):
        if depth < 0 or (depth > 0 and width < 1):
            raise ValueError("depth must be >= 0 and width >= 1")
        dims = [input_dim] + [width] * depth + [output_dim]
        weights = [np.zeros((dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
        biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
        return cls(weights, biases, clip_bound)

    @property
    def depth(self):
        return len(self.weights) - 1

    @property
    def width(self):
        return self.weights[0].shape[0] if self.depth > 0 else 0

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def output_dim(self):
        return self.weights[-1].shape[0]

    def params(self):
        return self.weights + self.biases

    def clone(self):
        return GeneratorNet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.clip_bound,
        )

    def forward_np(self, xz):
        """Plain forward pass, no tape."""
        h = np.ascontiguousarray(np.atleast_2d(xz))
        last = self.depth
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = K.affine_fwd(h, w, b)
            if i != last:
                h = K.tanh_fwd(h)
        return h

    def bind(self, tape, trainable=True):
        return _TapeNet(self, tape, activation="tanh", trainable=trainable)


@dataclass
class DiscriminatorNet:
    """Groupsort network with a scalar output and no output activation."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    group_size: int = 2

    @classmethod
    def build(cls, input_dim, depth, width, group_size=2):
        if depth > 0 and width % group_size != 0:
            raise ValueError(f"width {width} must be a multiple of group size {group_size}")
        dims = [input_dim] + [width] * depth + [1]
        weights = [np.zeros((dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
        biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
        return cls(weights, biases, group_size)

    @property
    def depth(self):
        return len(self.weights) - 1

    @property
    def width(self):
        return self.weights[0].shape[0] if self.depth > 0 else 0

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    def params(self):
        return self.weights + self.biases

    def clone(self):
        return DiscriminatorNet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.group_size,
        )

    def forward_np(self, points):
        h = np.ascontiguousarray(np.atleast_2d(points))
        last = self.depth
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = K.affine_fwd(h, w, b)
            if i != last:
                h, _ = K.groupsort_fwd(h)
        return h

    def bind(self, tape, trainable=True):
        return _TapeNet(self, tape, activation="groupsort", trainable=trainable)


class _TapeNet:
    """A network's parameters registered on one tape.

    ``trainable=False`` registers parameters as constants, which skips
    their gradient work (used for the discriminator inside generator steps).
    """

    def __init__(self, net, tape, activation, trainable=True):
        self.net = net
        self.tape = tape
        self.activation = activation
        reg = tape.leaf if trainable else tape.constant
        self.wvars = [reg(w) for w in net.weights]
        self.bvars = [reg(b) for b in net.biases]

    def leaves(self):
        return self.wvars + self.bvars

    def forward(self, x):
        h = x if isinstance(x, dc.Var) else self.tape.constant(np.atleast_2d(x))
        last = len(self.wvars) - 1
        for i, (w, b) in enumerate(zip(self.wvars, self.bvars)):
            h = dc.matmul_affine(w, h, b)
            if i != last:
                h = dc.tanh_elementwise(h) if self.activation == "tanh" else dc.groupsort2(h)
        return h

    def jets(self, x, z, directions, orders):
        """Jet bundle plus channel Vars; tanh nets only."""
        if self.activation != "tanh":
            raise ValueError("jets are defined for the tanh generator only")
        bundle, B = dc.jet_forward_tape(self.tape, self.wvars, self.bvars, x, z, directions, orders)
        return bundle, B


def generator_forward(g, x, z, tape=None):
    """Generator output on concatenated (x, z); records on tape when given."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if x.shape[0] != z.shape[0]:
        raise ValueError(f"batch mismatch: x has {x.shape[0]} rows, z has {z.shape[0]}")
    xz = np.concatenate((x, z), axis=1)
    if xz.shape[1] != g.input_dim:
        raise ValueError(
            f"generator expects input dim {g.input_dim}, got {xz.shape[1]} (x {x.shape[1]} + z {z.shape[1]})"
        )
    if tape is None:
        return g.forward_np(xz)
    return g.bind(tape).forward(xz)


def discriminator_forward(f, points, tape=None):
    """Scalar witness score; 1-Lipschitz after enforce_constraints."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != f.input_dim:
        raise ValueError(f"discriminator expects input dim {f.input_dim}, got {points.shape[1]}")
    if tape is None:
        return f.forward_np(points)
    return f.bind(tape).forward(points)


def groupsort(v, group_size=2):
    """Sort entries within consecutive groups ascending; norm preserving.

    Accepts a vector or a batch of rows.  Only group size 2 is supported.
    """
    if group_size != 2:
        raise ValueError("only group size 2 is supported")
    arr = np.asarray(v, dtype=np.float64)
    squeeze = arr.ndim == 1
    arr2 = np.atleast_2d(arr)
    if arr2.shape[1] % group_size != 0:
        raise ValueError(f"width {arr2.shape[1]} not divisible by group size {group_size}")
    out, _ = K.groupsort_fwd(np.ascontiguousarray(arr2))
    return out[0] if squeeze else out


@dataclass(frozen=True)
class ConstraintPolicy:
    """How discriminator norm constraints are enforced after an update."""

    mode: str = "bjorck-then-projection"  # or "hard-projection"
    bjorck_steps: int = 5
    bjorck_order: int = 2

    def __post_init__(self):
        if self.mode not in ("hard-projection", "bjorck-then-projection"):
            raise ValueError(f"unknown constraint mode {self.mode!r}")
        if self.bjorck_steps < 0:
            raise ValueError("bjorck_steps must be >= 0")
        if self.bjorck_order not in (1, 2):
            raise ValueError("bjorck_order must be 1 or 2")


def bjorck_orthonormalize(a, steps=5, order=2):
    """Iterate A <- A(I + Q/2 + 3Q^2/8 [order 2]) with Q = I - A^T A.

    The Gram product is formed on the smaller side.  The caller must
    pre-scale A so the iteration contracts (spectral norm below sqrt(3));
    see prescale_for_bjorck.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("bjorck_orthonormalize: non-finite entries")
    if steps == 0:
        return a.copy()
    return K.bjorck(a, steps, order)


def prescale_for_bjorck(a):
    """Divide by the upper spectral-norm estimate sqrt(|A|_1 |A|_inf) if > 1."""
    est = np.sqrt(np.abs(a).sum(axis=0).max() * np.abs(a).sum(axis=1).max())
    return a / est if est > 1.0 else a


def enforce_constraints(f, policy=ConstraintPolicy()):
    """Restore the discriminator's norm constraints, in place.

    With a Björck mode, each matrix is pre-scaled and orthonormalized
    first; the row-wise projection then makes the constraints exact:
    first-layer rows are divided by max(1, L2 norm), later rows by
    max(1, L1 norm).
    """
    for i, w in enumerate(f.weights):
        if policy.mode == "bjorck-then-projection" and policy.bjorck_steps > 0:
            w = bjorck_orthonormalize(prescale_for_bjorck(w), policy.bjorck_steps, policy.bjorck_order)
        else:
            w = np.ascontiguousarray(w)
        if i == 0:
            K.project_rows_l2(w)
        else:
            K.project_rows_l1(w)
        f.weights[i] = w
    return f


def max_row_norms(f):
    """(max first-layer row L2, max later-row L1); both <= 1 when feasible."""
    l2 = float(np.sqrt((f.weights[0] ** 2).sum(axis=1)).max())
    l1 = max(float(np.abs(w).sum(axis=1).max()) for w in f.weights[1:]) if len(f.weights) > 1 else 0.0
    return l2, l1


def clip_generator(g):
    """Clamp every generator weight and bias entry to [-M, M], in place."""
    if g.clip_bound is None:
        raise ValueError("clip_generator: clip_bound is disabled")
    for w in g.weights:
        K.clip_inplace(w, g.clip_bound)
    for b in g.biases:
        K.clip_inplace(b, g.clip_bound)
    return g


def init_parameters(net, rng):
    """Gaussian init with per-layer std 1/sqrt(fan_in); zero biases."""
    for i, w in enumerate(net.weights):
        fan_in = w.shape[1]
        net.weights[i] = rng.standard_normal(w.shape) / np.sqrt(fan_in)
        net.biases[i] = np.zeros(w.shape[0])
    return net


# ---------------------------------------------------------------------------
# Checkpoint format: flat JSON, row-major float arrays plus shape metadata.


def net_to_dict(net):
    kind = "generator" if isinstance(net, GeneratorNet) else "discriminator"
    layers = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        layers[f"W{i}"] = {"shape": list(w.shape), "data": w.ravel().tolist()}
        layers[f"b{i}"] = {"shape": list(b.shape), "data": b.ravel().tolist()}
    meta = {"kind": kind, "n_layers": len(net.weights)}
    if kind == "generator":
        meta["clip_bound"] = net.clip_bound
    else:
        meta["group_size"] = net.group_size
    return {"meta": meta, "layers": layers}


def net_from_dict(payload):
    meta = payload["meta"]
    weights, biases = [], []
    for i in range(meta["n_layers"]):
        w = payload["layers"][f"W{i}"]
        b = payload["layers"][f"b{i}"]
        weights.append(np.array(w["data"], dtype=np.float64).reshape(w["shape"]))
        biases.append(np.array(b["data"], dtype=np.float64).reshape(b["shape"]))
    if meta["kind"] == "generator":
        return GeneratorNet(weights, biases, meta.get("clip_bound"))
    return DiscriminatorNet(weights, biases, meta.get("group_size", 2))


def save_checkpoint(path, nets, meta=None):
    """Write named nets plus optional metadata to a JSON checkpoint.

    json round-trips python floats through repr, so reloading is bit-exact.
    """
    payload = {"nets": {name: net_to_dict(net) for name, net in nets.items()}}
    if meta:
        payload["meta"] = meta
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """Returns ({name: net}, meta)."""
    with open(path) as fh:
        payload = json.load(fh)
    nets = {name: net_from_dict(d) for name, d in payload["nets"].items()}
    return nets, payload.get("meta", {})
