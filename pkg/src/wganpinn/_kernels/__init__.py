"""Kernel backend selection.

The compiled extension (``_fast``, Cython) is preferred when importable;
the numpy reference backend (``_ref``) is the fallback.  Override with
WGANPINN_BACKEND=ref|fast|auto.
"""

import os

_requested = os.environ.get("WGANPINN_BACKEND", "auto")

if _requested not in ("auto", "fast", "ref"):
    raise RuntimeError(f"WGANPINN_BACKEND must be auto|fast|ref, got {_requested!r}")

if _requested == "ref":
    from . import _ref as impl

    BACKEND = "ref"
else:
    try:
        from . import _fast as impl  # type: ignore[attr-defined]

        BACKEND = "fast"
    except ImportError:
        if _requested == "fast":
            raise
        from . import _ref as impl

        BACKEND = "ref"

affine_fwd = impl.affine_fwd
matmul_nt = impl.matmul_nt
matmul_tn = impl.matmul_tn
matmul_nn = impl.matmul_nn
colsum = impl.colsum
tanh_fwd = impl.tanh_fwd
tanh_bwd = impl.tanh_bwd
mul = impl.mul
add = impl.add
sub = impl.sub
square = impl.square
scale = impl.scale
add_scaled = impl.add_scaled
mean_all = impl.mean_all
fill = impl.fill
iadd = impl.iadd
groupsort_fwd = impl.groupsort_fwd
groupsort_bwd = impl.groupsort_bwd
jet_affine_fwd = impl.jet_affine_fwd
jet_tanh_fwd = impl.jet_tanh_fwd
jet_tanh_bwd = impl.jet_tanh_bwd
block_get = impl.block_get
block_scatter = impl.block_scatter
adam_step = impl.adam_step
bjorck = impl.bjorck
project_rows_l2 = impl.project_rows_l2
project_rows_l1 = impl.project_rows_l1
clip_inplace = impl.clip_inplace
sum_all = impl.sum_all
