"""Pure-Python kernel fallback.

Same signatures as the compiled core in ``_core.pyx``. All buffers are flat
row-major ``array('Q')`` values already reduced mod m; Python ints keep the
arithmetic exact for any modulus below 2**64.
"""

from __future__ import annotations

from array import array

IMPLEMENTATION = "pure"


def mat_mul_mod(a: array, b: array, ar: int, ac: int, bc: int, m: int) -> array:
    """Row-major (ar x ac) @ (ac x bc) mod m."""
    out = array("Q", bytes(8 * ar * bc))
    for i in range(ar):
        ai = i * ac
        for j in range(bc):
            acc = 0
            for k in range(ac):
                acc += a[ai + k] * b[k * bc + j]
            out[i * bc + j] = acc % m
    return out


def vec_mat_mod(v: array, a: array, ar: int, ac: int, m: int) -> array:
    """(1 x ar) @ (ar x ac) mod m."""
    out = array("Q", bytes(8 * ac))
    for j in range(ac):
        acc = 0
        for i in range(ar):
            acc += v[i] * a[i * ac + j]
        out[j] = acc % m
    return out


def add_mod(a: array, b: array, m: int) -> array:
    return array("Q", [(x + y) % m for x, y in zip(a, b)])


def mul_mod(a: array, b: array, m: int) -> array:
    return array("Q", [(x * y) % m for x, y in zip(a, b)])


def scale_mod(a: array, c: int, m: int) -> array:
    return array("Q", [(c * x) % m for x in a])


def pow_elementwise_mod(a: array, n: int, m: int) -> array:
    return array("Q", [pow(x, n, m) for x in a])


def col_prod_mod(a: array, rows: int, cols: int, m: int) -> array:
    """Per-column product of a row-major (rows x cols) buffer, mod m."""
    out = array("Q", [1]) * cols
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            out[j] = out[j] * a[base + j] % m
    return out


def rotate_left(a: array, k: int) -> array:
    k %= len(a)
    return a[k:] + a[:k]


def simd_matmul_mod(ea: array, rows: int, inner: int, b: array, slot_count: int, m: int) -> array:
    """Slot-packed matmul: out[i][j] = sum_k ea[i][k] * b[k][j] over full slot rows.

    ``ea`` is rows x slot_count (only the first ``inner`` slots of each row are
    read as coefficients), ``b`` is inner x slot_count.
    """
    out = array("Q", bytes(8 * rows * slot_count))
    for i in range(rows):
        base = i * slot_count
        for j in range(slot_count):
            acc = 0
            for k in range(inner):
                acc += ea[base + k] * b[k * slot_count + j]
            out[base + j] = acc % m
    return out
