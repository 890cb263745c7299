"""Kernel selection: compiled extension when available, pure Python otherwise.

Set ``DATASEAL_PURE_KERNELS=1`` to force the fallback (useful for the kernel
benchmark and for debugging). ``ACTIVE`` names the implementation in use.
"""

from __future__ import annotations

import os
from array import array

if array("Q").itemsize != 8:  # pragma: no cover - LP64 assumption
    raise ImportError("dataseal requires 8-byte array('Q') elements")

if os.environ.get("DATASEAL_PURE_KERNELS"):
    from dataseal._kernels import pure as _impl
else:
    try:
        from dataseal._kernels import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        from dataseal._kernels import pure as _impl  # type: ignore[no-redef]

ACTIVE = _impl.IMPLEMENTATION

mat_mul_mod = _impl.mat_mul_mod
vec_mat_mod = _impl.vec_mat_mod
simd_matmul_mod = _impl.simd_matmul_mod
add_mod = _impl.add_mod
mul_mod = _impl.mul_mod
scale_mod = _impl.scale_mod
pow_elementwise_mod = _impl.pow_elementwise_mod
col_prod_mod = _impl.col_prod_mod
rotate_left = _impl.rotate_left
