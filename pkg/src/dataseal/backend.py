"""Simulated SIMD-slot homomorphic backend.

Ciphertexts are fixed-width slot vectors over Z_m with a multiplicative-depth
counter; evaluation is exact, deterministic, and tracks the depth cost a
leveled scheme would pay (ciphertext-ciphertext multiplications cost one
level, plaintext multiplications are free, a matrix-multiply accumulation
chain is charged one whole level, two when both factors are encrypted).
A real lattice backend would slot in behind the same operation contract,
relaxing bit-identical ciphertexts to decrypt-equality.

Matrices pack one row per ciphertext, columns in slots, zero-padded to the
slot count, so checksum rows ride along as ordinary extra ciphertexts.
"""

from __future__ import annotations

import threading
from array import array
from dataclasses import dataclass, field
from typing import Sequence, Union

from dataseal import _kernels
from dataseal.errors import (
    DepthExceeded,
    DimensionMismatch,
    InvalidExponent,
    InvalidParams,
    ModulusMismatch,
    TooWide,
)
from dataseal.ring import Matrix, ModulusConfig

DEFAULT_SLOT_COUNT = 64
DEFAULT_MAX_DEPTH = 16


@dataclass(frozen=True)
class BackendParams:
    modulus: ModulusConfig
    slot_count: int = DEFAULT_SLOT_COUNT
    max_depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self) -> None:
        sc = self.slot_count
        if sc < 2 or sc & (sc - 1):
            raise InvalidParams(f"slot_count must be a power of two >= 2, got {sc}")
        if self.max_depth < 1:
            raise InvalidParams(f"max_depth must be >= 1, got {self.max_depth}")

    @property
    def log2_slots(self) -> int:
        return self.slot_count.bit_length() - 1


class OpCounter:
    """Thread-safe tally of backend operations (rotations, muls, adds)."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}

    def bump(self, name: str, by: int = 1) -> None:
        with self._lock:
            self._counts[name] = self._counts.get(name, 0) + by

    def get(self, name: str) -> int:
        with self._lock:
            return self._counts.get(name, 0)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)


@dataclass(frozen=True)
class BackendContext:
    """Holds the agreed parameters; a real scheme would keep keys here too."""

    params: BackendParams
    counter: OpCounter = field(default_factory=OpCounter, compare=False, repr=False)


def keygen(params: BackendParams) -> BackendContext:
    return BackendContext(params)


@dataclass
class Ciphertext:
    slots: array
    depth: int
    fresh: bool
    ctx: BackendContext

    def __post_init__(self) -> None:
        if len(self.slots) != self.ctx.params.slot_count:
            raise DimensionMismatch("slot vector length != slot_count")
        if self.depth > self.ctx.params.max_depth:
            raise DepthExceeded(f"depth {self.depth} > budget {self.ctx.params.max_depth}")


@dataclass
class EncryptedMatrix:
    row_cts: tuple[Ciphertext, ...]
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if len(self.row_cts) != self.rows:
            raise DimensionMismatch("one ciphertext per row required")

    @property
    def max_depth(self) -> int:
        return max(ct.depth for ct in self.row_cts)


@dataclass(frozen=True)
class PlainOperand:
    """Server-known public matrix, travels unencrypted."""

    matrix: Matrix


def _require_ctx(a: Ciphertext, b: Ciphertext) -> None:
    if a.ctx is not b.ctx:
        raise InvalidParams("ciphertexts belong to different contexts")


def _require_mod(ctx: BackendContext, mod: ModulusConfig) -> None:
    if ctx.params.modulus.m != mod.m:
        raise ModulusMismatch(f"context modulus {ctx.params.modulus.m} vs {mod.m}")


def _require_owned(ctx: BackendContext, e: EncryptedMatrix) -> None:
    for ct in e.row_cts:
        if ct.ctx is not ctx:
            raise InvalidParams("ciphertext belongs to a different context")


def encrypt_matrix(ctx: BackendContext, m: Matrix) -> EncryptedMatrix:
    _require_mod(ctx, m.mod)
    sc = ctx.params.slot_count
    if m.cols > sc:
        raise TooWide(f"{m.cols} columns > {sc} slots")
    pad = array("Q", bytes(8 * (sc - m.cols)))
    cts = tuple(
        Ciphertext(array("Q", m.data[i * m.cols : (i + 1) * m.cols]) + pad, 0, True, ctx)
        for i in range(m.rows)
    )
    ctx.counter.bump("encrypt", m.rows)
    return EncryptedMatrix(cts, m.rows, m.cols)


def decrypt_matrix(ctx: BackendContext, e: EncryptedMatrix) -> Matrix:
    out = array("Q")
    for ct in e.row_cts:
        if ct.ctx is not ctx:
            raise InvalidParams("ciphertext belongs to a different context")
        out += ct.slots[: e.cols]
    return Matrix(e.rows, e.cols, ctx.params.modulus, out)


def ct_add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _require_ctx(a, b)
    m = a.ctx.params.modulus.m
    a.ctx.counter.bump("ct_add")
    return Ciphertext(_kernels.add_mod(a.slots, b.slots, m), max(a.depth, b.depth), False, a.ctx)


def ct_mul(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _require_ctx(a, b)
    depth = max(a.depth, b.depth) + 1
    if depth > a.ctx.params.max_depth:
        raise DepthExceeded(f"depth {depth} > budget {a.ctx.params.max_depth}")
    m = a.ctx.params.modulus.m
    a.ctx.counter.bump("ct_mul")
    return Ciphertext(_kernels.mul_mod(a.slots, b.slots, m), depth, False, a.ctx)


def ct_mul_plain(a: Ciphertext, plain: Sequence[int]) -> Ciphertext:
    m = a.ctx.params.modulus.m
    if len(plain) != a.ctx.params.slot_count:
        raise DimensionMismatch("plain slot vector length != slot_count")
    if any(not 0 <= v < m for v in plain):
        raise InvalidParams("plain slot values must lie in [0, m)")
    a.ctx.counter.bump("ct_mul_plain")
    return Ciphertext(_kernels.mul_mod(a.slots, array("Q", plain), m), a.depth, False, a.ctx)


def rotate(a: Ciphertext, k: int) -> Ciphertext:
    a.ctx.counter.bump("rotate")
    return Ciphertext(_kernels.rotate_left(a.slots, k), a.depth, False, a.ctx)


def slot_broadcast(a: Ciphertext, i: int) -> Ciphertext:
    """Replicate slot i into every slot: mask, then log2(slot_count)
    rotate-and-add doubling steps. Depth-free (the mask is plain)."""
    sc = a.ctx.params.slot_count
    if not 0 <= i < sc:
        raise DimensionMismatch(f"slot index {i} outside [0, {sc})")
    mask = [0] * sc
    mask[i] = 1
    t = ct_mul_plain(a, mask)
    step = 1
    while step < sc:
        t = ct_add(t, rotate(t, step))
        step <<= 1
    return t


def _gather(e: EncryptedMatrix) -> array:
    flat = array("Q")
    for ct in e.row_cts:
        flat += ct.slots
    return flat


def _pad_rows(m: Matrix, slot_count: int) -> array:
    flat = array("Q")
    pad = array("Q", bytes(8 * (slot_count - m.cols)))
    for i in range(m.rows):
        flat += m.data[i * m.cols : (i + 1) * m.cols] + pad
    return flat


def eval_matmul(
    ctx: BackendContext, e_a: EncryptedMatrix, b: Union[PlainOperand, EncryptedMatrix]
) -> EncryptedMatrix:
    """Multiply an encrypted left factor by a public or encrypted right factor.

    Output row i accumulates slot_broadcast(row_i, k) times the k-th right
    row; the whole accumulation chain is charged one depth level on top of
    the per-operation accounting (two when the right factor is encrypted).
    """
    sc = ctx.params.slot_count
    _require_owned(ctx, e_a)
    if isinstance(b, PlainOperand):
        bm = b.matrix
        _require_mod(ctx, bm.mod)
        if e_a.cols != bm.rows:
            raise DimensionMismatch(f"{e_a.rows}x{e_a.cols} @ {bm.rows}x{bm.cols}")
        if bm.cols > sc:
            raise TooWide(f"{bm.cols} columns > {sc} slots")
        out_depth = {i: ct.depth + 1 for i, ct in enumerate(e_a.row_cts)}
        b_flat = _pad_rows(bm, sc)
        out_cols = bm.cols
        plain_side = True
    else:
        if e_a.cols != b.rows:
            raise DimensionMismatch(f"{e_a.rows}x{e_a.cols} @ {b.rows}x{b.cols}")
        _require_owned(ctx, b)
        b_max = b.max_depth
        out_depth = {i: max(ct.depth, b_max) + 2 for i, ct in enumerate(e_a.row_cts)}
        b_flat = _gather(b)
        out_cols = b.cols
        plain_side = False
    if max(out_depth.values()) > ctx.params.max_depth:
        raise DepthExceeded(f"matmul needs depth {max(out_depth.values())}")

    inner = e_a.cols
    out = _kernels.simd_matmul_mod(_gather(e_a), e_a.rows, inner, b_flat, sc, ctx.params.modulus.m)
    # op tallies for the broadcast/mul/add chain this computes in one shot
    n_terms = e_a.rows * inner
    ctx.counter.bump("rotate", n_terms * ctx.params.log2_slots)
    ctx.counter.bump("ct_add", n_terms * ctx.params.log2_slots + e_a.rows * (inner - 1))
    if plain_side:
        ctx.counter.bump("ct_mul_plain", n_terms * 2)
    else:
        ctx.counter.bump("ct_mul_plain", n_terms)
        ctx.counter.bump("ct_mul", n_terms)

    cts = tuple(
        Ciphertext(out[i * sc : (i + 1) * sc], out_depth[i], False, ctx)
        for i in range(e_a.rows)
    )
    return EncryptedMatrix(cts, e_a.rows, out_cols)


def eval_add(ctx: BackendContext, e_a: EncryptedMatrix, e_b: EncryptedMatrix) -> EncryptedMatrix:
    if (e_a.rows, e_a.cols) != (e_b.rows, e_b.cols):
        raise DimensionMismatch(f"{e_a.rows}x{e_a.cols} + {e_b.rows}x{e_b.cols}")
    m = ctx.params.modulus.m
    cts = []
    for ca, cb in zip(e_a.row_cts, e_b.row_cts):
        _require_ctx(ca, cb)
        cts.append(Ciphertext(_kernels.add_mod(ca.slots, cb.slots, m), max(ca.depth, cb.depth), False, ctx))
    ctx.counter.bump("ct_add", e_a.rows)
    return EncryptedMatrix(tuple(cts), e_a.rows, e_a.cols)


def pow_depth_cost(n: int) -> int:
    """Multiplicative depth of an n-th power via a balanced halving chain."""
    return (n - 1).bit_length()


def eval_pow_elementwise(ctx: BackendContext, e_a: EncryptedMatrix, n: int) -> EncryptedMatrix:
    if n < 1:
        raise InvalidExponent(f"exponent must be >= 1, got {n}")
    cost = pow_depth_cost(n)
    if e_a.max_depth + cost > ctx.params.max_depth:
        raise DepthExceeded(f"pow needs depth {e_a.max_depth + cost}")
    m = ctx.params.modulus.m
    cts = tuple(
        Ciphertext(_kernels.pow_elementwise_mod(ct.slots, n, m), ct.depth + cost, False, ctx)
        for ct in e_a.row_cts
    )
    ctx.counter.bump("ct_mul", e_a.rows * max(0, len(_pow_chain(n)) - 1))
    return EncryptedMatrix(cts, e_a.rows, e_a.cols)


def _pow_chain(n: int) -> set[int]:
    """Exponents a balanced square-and-multiply chain materializes for x**n."""
    need = {1}
    stack = [n]
    while stack:
        k = stack.pop()
        if k in need or k < 2:
            continue
        need.add(k)
        stack.append((k + 1) // 2)
        stack.append(k // 2)
    return need
