# Compiled kernels: exact arithmetic over Z_m for any modulus below 2**64.
# Mirrors pure.py; 128-bit intermediates keep large-modulus products exact,
# a u64 accumulator fast path covers small moduli (default m = 65537).

from cpython cimport array
import array

IMPLEMENTATION = "compiled"

ctypedef unsigned long long u64
cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"

cdef u64 U64_MAX = <u64>0xFFFFFFFFFFFFFFFF

cdef array.array _TEMPLATE = array.array('Q', [])


cdef inline u64 _mulmod(u64 a, u64 b, u64 m) noexcept:
    return <u64>((<u128>a * b) % m)


cdef inline u64 _powmod(u64 base, u64 n, u64 m) noexcept:
    cdef u64 acc = 1 % m
    cdef u64 b = base % m
    while n:
        if n & 1:
            acc = _mulmod(acc, b, m)
        b = _mulmod(b, b, m)
        n >>= 1
    return acc


cdef void _accum_rows(const u64[::1] a, Py_ssize_t a_stride,
                      const u64[::1] b, Py_ssize_t b_stride,
                      u64[::1] out, Py_ssize_t rows, Py_ssize_t inner,
                      Py_ssize_t width, u64 m) noexcept:
    # out[i*width + j] = sum_k a[i*a_stride + k] * b[k*b_stride + j] mod m
    cdef Py_ssize_t i, j, k
    cdef u64 acc, prod_max, guard
    cdef u128 wide
    if m - 1 <= <u64>0xFFFFFFFF:
        prod_max = (m - 1) * (m - 1)
        guard = U64_MAX - prod_max
        for i in range(rows):
            for j in range(width):
                acc = 0
                for k in range(inner):
                    if acc > guard:
                        acc %= m
                    acc += a[i * a_stride + k] * b[k * b_stride + j]
                out[i * width + j] = acc % m
    else:
        for i in range(rows):
            for j in range(width):
                wide = 0
                for k in range(inner):
                    wide = (wide + <u128>a[i * a_stride + k] * b[k * b_stride + j]) % m
                out[i * width + j] = <u64>wide


def mat_mul_mod(object a, object b, Py_ssize_t ar, Py_ssize_t ac, Py_ssize_t bc, u64 m):
    cdef array.array out = array.clone(_TEMPLATE, ar * bc, zero=True)
    _accum_rows(a, ac, b, bc, out, ar, ac, bc, m)
    return out


def vec_mat_mod(object v, object a, Py_ssize_t ar, Py_ssize_t ac, u64 m):
    cdef array.array out = array.clone(_TEMPLATE, ac, zero=True)
    _accum_rows(v, ar, a, ac, out, 1, ar, ac, m)
    return out


def simd_matmul_mod(object ea, Py_ssize_t rows, Py_ssize_t inner, object b,
                    Py_ssize_t slot_count, u64 m):
    cdef array.array out = array.clone(_TEMPLATE, rows * slot_count, zero=True)
    _accum_rows(ea, slot_count, b, slot_count, out, rows, inner, slot_count, m)
    return out


def add_mod(object a, object b, u64 m):
    cdef const u64[::1] av = a
    cdef const u64[::1] bv = b
    cdef Py_ssize_t n = av.shape[0], i
    cdef array.array out = array.clone(_TEMPLATE, n, zero=True)
    cdef u64[::1] ov = out
    for i in range(n):
        ov[i] = (av[i] + bv[i]) % m
    return out


def mul_mod(object a, object b, u64 m):
    cdef const u64[::1] av = a
    cdef const u64[::1] bv = b
    cdef Py_ssize_t n = av.shape[0], i
    cdef array.array out = array.clone(_TEMPLATE, n, zero=True)
    cdef u64[::1] ov = out
    for i in range(n):
        ov[i] = _mulmod(av[i], bv[i], m)
    return out


def scale_mod(object a, u64 c, u64 m):
    cdef const u64[::1] av = a
    cdef Py_ssize_t n = av.shape[0], i
    cdef array.array out = array.clone(_TEMPLATE, n, zero=True)
    cdef u64[::1] ov = out
    for i in range(n):
        ov[i] = _mulmod(c, av[i], m)
    return out


def pow_elementwise_mod(object a, u64 n, u64 m):
    cdef const u64[::1] av = a
    cdef Py_ssize_t size = av.shape[0], i
    cdef array.array out = array.clone(_TEMPLATE, size, zero=True)
    cdef u64[::1] ov = out
    for i in range(size):
        ov[i] = _powmod(av[i], n, m)
    return out


def col_prod_mod(object a, Py_ssize_t rows, Py_ssize_t cols, u64 m):
    cdef const u64[::1] av = a
    cdef array.array out = array.clone(_TEMPLATE, cols, zero=True)
    cdef u64[::1] ov = out
    cdef Py_ssize_t i, j
    for j in range(cols):
        ov[j] = 1 % m
    for i in range(rows):
        for j in range(cols):
            ov[j] = _mulmod(ov[j], av[i * cols + j], m)
    return out


def rotate_left(object a, Py_ssize_t k):
    cdef const u64[::1] av = a
    cdef Py_ssize_t n = av.shape[0], i
    cdef array.array out = array.clone(_TEMPLATE, n, zero=True)
    cdef u64[::1] ov = out
    k %= n
    for i in range(n):
        ov[i] = av[(i + k) % n]
    return out
