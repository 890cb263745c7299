"""Exact arithmetic over Z_m: dense matrices, vector-matrix kernels, signed
encoding, and im2col lowering.

Everything downstream (checksum encoding, the simulated homomorphic backend,
the protocol) is defined in terms of these operations, and the test suite uses
them as the plaintext reference for the encrypted evaluators.
"""

from __future__ import annotations

import random
from array import array
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from dataseal import _kernels
from dataseal.errors import (
    DimensionMismatch,
    GeometryError,
    InvalidExponent,
    InvalidParams,
    ModulusMismatch,
    RangeError,
)

_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)

#: Smallest modulus accepted without the explicit small-modulus opt-in.
MIN_MODULUS = 257

#: Prime used throughout unless a caller configures otherwise.
DEFAULT_MODULUS = 65537


def is_prime_u64(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for all n < 2**64."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class ModulusConfig:
    """Prime modulus of the payload ring.

    The floor of 257 leaves room for signed payloads and nonzero key sampling;
    smaller primes (97 in worked examples, 2 in the toy forgery calibration)
    need ``allow_small=True``.
    """

    m: int
    allow_small: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.m, int) or self.m >= 1 << 64:
            raise InvalidParams(f"modulus must be an integer below 2**64, got {self.m!r}")
        if not is_prime_u64(self.m):
            raise InvalidParams(f"modulus {self.m} is not prime")
        if self.m < MIN_MODULUS and not self.allow_small:
            raise InvalidParams(f"modulus {self.m} below minimum {MIN_MODULUS}")

    @property
    def half_range(self) -> int:
        return (self.m - 1) // 2


def _require_same_modulus(a: "Matrix", b: "Matrix") -> None:
    if a.mod.m != b.mod.m:
        raise ModulusMismatch(f"modulus {a.mod.m} vs {b.mod.m}")


class Matrix:
    """Dense row-major matrix over Z_m. Treat instances as immutable."""

    __slots__ = ("rows", "cols", "mod", "data")

    def __init__(self, rows: int, cols: int, mod: ModulusConfig, data: array):
        if rows < 1 or cols < 1:
            raise DimensionMismatch(f"matrix dims must be positive, got {rows}x{cols}")
        if len(data) != rows * cols:
            raise DimensionMismatch(f"data length {len(data)} != {rows}x{cols}")
        self.rows = rows
        self.cols = cols
        self.mod = mod
        self.data = data

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], mod: ModulusConfig) -> "Matrix":
        r = len(rows)
        c = len(rows[0]) if r else 0
        flat = array("Q")
        for row in rows:
            if len(row) != c:
                raise DimensionMismatch("ragged row lengths")
            for x in row:
                if not 0 <= x < mod.m:
                    raise RangeError(f"entry {x} outside [0, {mod.m})")
                flat.append(x)
        return cls(r, c, mod, flat)

    @classmethod
    def from_signed_rows(cls, rows: Sequence[Sequence[int]], mod: ModulusConfig) -> "Matrix":
        return cls.from_rows([[encode_signed(x, mod) for x in row] for row in rows], mod)

    @classmethod
    def zeros(cls, rows: int, cols: int, mod: ModulusConfig) -> "Matrix":
        return cls(rows, cols, mod, array("Q", bytes(8 * rows * cols)))

    @classmethod
    def identity(cls, n: int, mod: ModulusConfig) -> "Matrix":
        out = array("Q", bytes(8 * n * n))
        for i in range(n):
            out[i * n + i] = 1
        return cls(n, n, mod, out)

    @classmethod
    def random(
        cls,
        rows: int,
        cols: int,
        mod: ModulusConfig,
        rng: random.Random,
        nonzero: bool = False,
    ) -> "Matrix":
        lo = 1 if nonzero else 0
        return cls(rows, cols, mod, array("Q", [rng.randrange(lo, mod.m) for _ in range(rows * cols)]))

    def at(self, i: int, j: int) -> int:
        return self.data[i * self.cols + j]

    def row(self, i: int) -> list[int]:
        return list(self.data[i * self.cols : (i + 1) * self.cols])

    def to_rows(self) -> list[list[int]]:
        return [self.row(i) for i in range(self.rows)]

    def row_slice(self, start: int, stop: int) -> "Matrix":
        """Submatrix of rows [start, stop)."""
        if not 0 <= start < stop <= self.rows:
            raise DimensionMismatch(f"row slice [{start}, {stop}) out of range")
        return Matrix(stop - start, self.cols, self.mod, self.data[start * self.cols : stop * self.cols])

    def stack(self, other: "Matrix") -> "Matrix":
        if self.cols != other.cols:
            raise DimensionMismatch("stack needs equal column counts")
        _require_same_modulus(self, other)
        return Matrix(self.rows + other.rows, self.cols, self.mod, self.data + other.data)

    def transpose(self) -> "Matrix":
        out = array("Q", bytes(8 * self.rows * self.cols))
        for i in range(self.rows):
            base = i * self.cols
            for j in range(self.cols):
                out[j * self.rows + i] = self.data[base + j]
        return Matrix(self.cols, self.rows, self.mod, out)

    def reshape(self, rows: int, cols: int) -> "Matrix":
        if rows * cols != self.rows * self.cols:
            raise DimensionMismatch("reshape must preserve element count")
        return Matrix(rows, cols, self.mod, array("Q", self.data))

    def copy(self) -> "Matrix":
        return Matrix(self.rows, self.cols, self.mod, array("Q", self.data))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and self.mod.m == other.mod.m
            and self.data == other.data
        )

    def __hash__(self) -> int:  # pragma: no cover - identity map keys only
        return hash((self.rows, self.cols, self.mod.m, bytes(self.data.tobytes())))

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols} mod {self.mod.m})"


def row_vector(values: Iterable[int], mod: ModulusConfig) -> Matrix:
    return Matrix.from_rows([list(values)], mod)


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise DimensionMismatch(f"{a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    _require_same_modulus(a, b)
    out = _kernels.mat_mul_mod(a.data, b.data, a.rows, a.cols, b.cols, a.mod.m)
    return Matrix(a.rows, b.cols, a.mod, out)


def mat_add(a: Matrix, b: Matrix) -> Matrix:
    if (a.rows, a.cols) != (b.rows, b.cols):
        raise DimensionMismatch(f"{a.rows}x{a.cols} + {b.rows}x{b.cols}")
    _require_same_modulus(a, b)
    return Matrix(a.rows, a.cols, a.mod, _kernels.add_mod(a.data, b.data, a.mod.m))


def mat_pow_elementwise(a: Matrix, n: int) -> Matrix:
    if n < 1:
        raise InvalidExponent(f"exponent must be >= 1, got {n}")
    return Matrix(a.rows, a.cols, a.mod, _kernels.pow_elementwise_mod(a.data, n, a.mod.m))


def vec_mat_mul(v: Matrix, a: Matrix) -> Matrix:
    if v.rows != 1:
        raise DimensionMismatch("left operand must be a row vector")
    if v.cols != a.rows:
        raise DimensionMismatch(f"1x{v.cols} @ {a.rows}x{a.cols}")
    _require_same_modulus(v, a)
    return Matrix(1, a.cols, a.mod, _kernels.vec_mat_mod(v.data, a.data, a.rows, a.cols, a.mod.m))


def scale_matrix(c: int, a: Matrix) -> Matrix:
    if not 0 <= c < a.mod.m:
        raise RangeError(f"scalar {c} outside [0, {a.mod.m})")
    return Matrix(a.rows, a.cols, a.mod, _kernels.scale_mod(a.data, c, a.mod.m))


def im2col(
    channels: Sequence[Matrix],
    kernel_h: int,
    kernel_w: int,
    stride: int = 1,
    padding: int = 0,
) -> Matrix:
    """Unroll sliding windows into a patch matrix.

    One column per output position (row-major position scan), one row per
    (channel, kernel row, kernel col) in lexicographic order, so a convolution
    is ``weights-as-rows @ patch-matrix``.
    """
    if not channels:
        raise GeometryError("need at least one input channel")
    if kernel_h < 1 or kernel_w < 1 or stride < 1 or padding < 0:
        raise GeometryError("bad kernel geometry")
    h, w = channels[0].rows, channels[0].cols
    mod = channels[0].mod
    for ch in channels[1:]:
        if (ch.rows, ch.cols) != (h, w):
            raise GeometryError("channels must share spatial dims")
        _require_same_modulus(channels[0], ch)
    out_h = (h + 2 * padding - kernel_h) // stride + 1
    out_w = (w + 2 * padding - kernel_w) // stride + 1
    if h + 2 * padding < kernel_h or w + 2 * padding < kernel_w or out_h < 1 or out_w < 1:
        raise GeometryError(f"non-positive output dims {out_h}x{out_w}")

    n_rows = len(channels) * kernel_h * kernel_w
    n_cols = out_h * out_w
    out = array("Q", bytes(8 * n_rows * n_cols))
    r = 0
    for ch in channels:
        for kr in range(kernel_h):
            for kc in range(kernel_w):
                base = r * n_cols
                col = 0
                for oy in range(out_h):
                    iy = oy * stride + kr - padding
                    in_y = 0 <= iy < h
                    for ox in range(out_w):
                        ix = ox * stride + kc - padding
                        if in_y and 0 <= ix < w:
                            out[base + col] = ch.data[iy * w + ix]
                        col += 1
                r += 1
    return Matrix(n_rows, n_cols, mod, out)


def encode_signed(x: int, mod: ModulusConfig) -> int:
    """Centered residue: map [-(m-1)/2, (m-1)/2] into [0, m)."""
    if abs(x) > mod.half_range:
        raise RangeError(f"|{x}| exceeds representable range {mod.half_range}")
    return x % mod.m


def decode_signed(s: int, mod: ModulusConfig) -> int:
    if not 0 <= s < mod.m:
        raise RangeError(f"residue {s} outside [0, {mod.m})")
    return s - mod.m if s > mod.half_range else s
