"""Secret-keyed checksum encoding and verification.

A client derives a per-session verification key (weight vector ``vk`` plus
scalar ``alpha``) from its secret and a fresh nonce, appends weighted-checksum
rows to the matrix it outsources, and precomputes a golden output. After the
server evaluates, two checks must both hold: the weighted checksum of the
returned data rows must match the evolved checksum row, and the evolved golden
row must match the precomputed golden output. The first check pins every data
element; the second defeats whole-result scaling.

A plain column-sum baseline (all-ones weights, no golden output) is included
to demonstrate the classic checksum bypass it permits.
"""

from __future__ import annotations

import hashlib
import os
import warnings
from dataclasses import dataclass, field
from enum import Enum

from dataseal import _kernels, ring
from dataseal.errors import (
    DimensionMismatch,
    InvalidExponent,
    InvalidParams,
    ModulusMismatch,
    ZeroEntryError,
)
from dataseal.ring import Matrix, ModulusConfig

_DOMAIN = b"DATASEAL-v1"

SECRET_LEN = 16
NONCE_LEN = 16


class OpTag(Enum):
    """Role of an encoded matrix in the operation it was encoded for."""

    MUL_LEFT = "mul_left"
    ADD_LEFT = "add_left"
    ADD_RIGHT = "add_right"
    POLY = "poly"
    ABFT_MUL = "abft_mul"
    ABFT_ADD = "abft_add"
    ABFT_POLY = "abft_poly"


class Check(Enum):
    WEIGHTED_CHECKSUM = "weighted_checksum"
    GOLDEN_OUTPUT = "golden_output"


class ZeroColumnWarning(UserWarning):
    """Weakened-guarantee mode hit a zero column product."""


@dataclass(frozen=True)
class ClientSecret:
    """128-bit client secret. Never serialized into any protocol message."""

    key: bytes

    def __post_init__(self) -> None:
        if len(self.key) != SECRET_LEN:
            raise InvalidParams(f"secret must be {SECRET_LEN} bytes, got {len(self.key)}")

    @classmethod
    def generate(cls) -> "ClientSecret":
        return cls(os.urandom(SECRET_LEN))

    @classmethod
    def from_hex(cls, text: str) -> "ClientSecret":
        if len(text) != 2 * SECRET_LEN:
            raise InvalidParams(f"secret hex must be {2 * SECRET_LEN} chars")
        return cls(bytes.fromhex(text))

    def __repr__(self) -> str:  # keep key material out of logs
        return "ClientSecret(...)"


@dataclass(frozen=True)
class SessionNonce:
    """128-bit nonce, fresh per encoding session."""

    nonce: bytes

    def __post_init__(self) -> None:
        if len(self.nonce) != NONCE_LEN:
            raise InvalidParams(f"nonce must be {NONCE_LEN} bytes, got {len(self.nonce)}")


@dataclass(frozen=True)
class VerificationKey:
    """Secret weight vector plus scalar, both in Z_m.

    Weights are nonzero so a single-element tamper always shifts the weighted
    checksum; alpha is at least 2 so the two appended rows stay distinct
    (m = 2 is the one toy modulus where [2, m) is empty and alpha = 1 is let
    through).
    """

    vk: tuple[int, ...]
    alpha: int
    mod: ModulusConfig

    def __post_init__(self) -> None:
        m = self.mod.m
        if not self.vk:
            raise InvalidParams("empty weight vector")
        if any(not 1 <= w < m for w in self.vk):
            raise InvalidParams("weights must lie in [1, m)")
        alpha_min = 1 if m == 2 else 2
        if not alpha_min <= self.alpha < m:
            raise InvalidParams(f"alpha must lie in [{alpha_min}, {m})")

    def vk_row(self) -> Matrix:
        return ring.row_vector(self.vk, self.mod)

    def __repr__(self) -> str:
        return f"VerificationKey(len={len(self.vk)}, mod={self.mod.m})"


@dataclass(frozen=True)
class GoldenOutput:
    """Precomputed image of the scaled checksum row; kept client-side only."""

    values: tuple[int, ...]
    mod: ModulusConfig

    @property
    def is_zero(self) -> bool:
        """Degenerate golden outputs cannot witness scaling attacks."""
        return all(v == 0 for v in self.values)


@dataclass(frozen=True)
class EncodedMatrix:
    """Payload matrix with checksum rows appended below the original rows."""

    payload: Matrix
    original_rows: int
    appended_rows: int
    op_tag: OpTag

    def __post_init__(self) -> None:
        if self.payload.rows != self.original_rows + self.appended_rows:
            raise DimensionMismatch("payload rows != original + appended")
        expected = 2 if self.op_tag is OpTag.MUL_LEFT else 1
        if self.appended_rows != expected:
            raise DimensionMismatch(f"{self.op_tag} carries {expected} checksum rows")

    def data_rows(self) -> Matrix:
        return self.payload.row_slice(0, self.original_rows)

    def checksum_rows(self) -> Matrix:
        return self.payload.row_slice(self.original_rows, self.payload.rows)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    failed_checks: tuple[Check, ...] = ()
    first_mismatch: dict[Check, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.accepted != (not self.failed_checks):
            raise InvalidParams("accepted iff no failed checks")

    @classmethod
    def from_failures(cls, failures: dict[Check, int]) -> "Verdict":
        order = (Check.WEIGHTED_CHECKSUM, Check.GOLDEN_OUTPUT)
        failed = tuple(c for c in order if c in failures)
        return cls(accepted=not failed, failed_checks=failed, first_mismatch=dict(failures))

    def __str__(self) -> str:
        if self.accepted:
            return "ACCEPT"
        return "REJECT: " + ", ".join(c.name for c in self.failed_checks)


class _PrfStream:
    """Deterministic keyed byte stream with domain separation.

    blake2b keyed hashing stands in for the PRF; any standard construction
    would do, determinism given (secret, nonce, label) is what matters.
    """

    def __init__(self, secret: ClientSecret, nonce: SessionNonce, label: bytes):
        self._seed = hashlib.blake2b(
            _DOMAIN + b"\x00" + label + b"\x00" + nonce.nonce,
            key=secret.key,
            digest_size=32,
        ).digest()
        self._counter = 0
        self._buf = b""

    def _take(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += hashlib.blake2b(
                self._counter.to_bytes(8, "little"), key=self._seed, digest_size=64
            ).digest()
            self._counter += 1
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def uniform(self, n: int) -> int:
        """Unbiased draw from [0, n) by rejection over 64-bit chunks."""
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = int.from_bytes(self._take(8), "little")
            if x < limit:
                return x % n


def derive_keys(
    secret: ClientSecret,
    nonce: SessionNonce,
    op_tag: str,
    length: int,
    mod: ModulusConfig,
) -> VerificationKey:
    """Derive the per-session (vk, alpha) for one operation.

    Deterministic in (secret, nonce, op_tag, length, modulus); weights are
    uniform over [1, m) and alpha uniform over [2, m).
    """
    if length < 1:
        raise InvalidParams(f"key length must be >= 1, got {length}")
    label = op_tag.encode() + b"\x00" + str(length).encode() + b"\x00" + str(mod.m).encode()
    stream = _PrfStream(secret, nonce, label)
    vk = tuple(1 + stream.uniform(mod.m - 1) for _ in range(length))
    alpha = 1 if mod.m == 2 else 2 + stream.uniform(mod.m - 2)
    return VerificationKey(vk=vk, alpha=alpha, mod=mod)


def _require_key_mod(key: VerificationKey, a: Matrix) -> None:
    if key.mod.m != a.mod.m:
        raise ModulusMismatch(f"key modulus {key.mod.m} vs matrix {a.mod.m}")


def _first_mismatch(got: list[int], want: list[int]) -> int | None:
    for i, (g, w) in enumerate(zip(got, want)):
        if g != w:
            return i
    return None


def encode_mul(a: Matrix, b: Matrix, key: VerificationKey) -> tuple[EncodedMatrix, GoldenOutput]:
    """Encode the private left factor of ``a @ b``.

    Appends ``vk @ a`` and ``alpha * (vk @ a)``; the golden output is the
    second row's image under multiplication by the (client-known) ``b``.
    """
    if len(key.vk) != a.rows:
        raise DimensionMismatch(f"key length {len(key.vk)} != rows {a.rows}")
    if a.cols != b.rows:
        raise DimensionMismatch(f"{a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    _require_key_mod(key, a)
    _require_key_mod(key, b)
    v_a = ring.vec_mat_mul(key.vk_row(), a)
    v_b = ring.scale_matrix(key.alpha, v_a)
    v_o = ring.vec_mat_mul(v_b, b)
    payload = a.stack(v_a).stack(v_b)
    encoded = EncodedMatrix(payload, a.rows, 2, OpTag.MUL_LEFT)
    return encoded, GoldenOutput(tuple(v_o.data), a.mod)


def encode_add(
    a: Matrix, b: Matrix, key: VerificationKey
) -> tuple[EncodedMatrix, EncodedMatrix, GoldenOutput]:
    """Encode both addends; golden output is the sum of their checksum rows."""
    if (a.rows, a.cols) != (b.rows, b.cols):
        raise DimensionMismatch(f"{a.rows}x{a.cols} + {b.rows}x{b.cols}")
    if len(key.vk) != a.rows:
        raise DimensionMismatch(f"key length {len(key.vk)} != rows {a.rows}")
    _require_key_mod(key, a)
    _require_key_mod(key, b)
    v_a = ring.vec_mat_mul(key.vk_row(), a)
    v_b = ring.vec_mat_mul(key.vk_row(), b)
    v_o = ring.mat_add(v_a, v_b)
    enc_a = EncodedMatrix(a.stack(v_a), a.rows, 1, OpTag.ADD_LEFT)
    enc_b = EncodedMatrix(b.stack(v_b), b.rows, 1, OpTag.ADD_RIGHT)
    return enc_a, enc_b, GoldenOutput(tuple(v_o.data), a.mod)


def _column_products(a: Matrix) -> list[int]:
    return list(_kernels.col_prod_mod(a.data, a.rows, a.cols, a.mod.m))


def encode_poly(
    a: Matrix, n: int, key: VerificationKey, allow_zero: bool = False
) -> tuple[EncodedMatrix, GoldenOutput]:
    """Encode for an element-wise n-th power.

    The checksum row holds per-column products weighted by vk; a zero entry
    zeroes its column product and voids detection there, so zeros are a hard
    error unless the caller opts into the weakened guarantee.
    """
    if n < 1:
        raise InvalidExponent(f"exponent must be >= 1, got {n}")
    if len(key.vk) != a.cols:
        raise DimensionMismatch(f"key length {len(key.vk)} != cols {a.cols}")
    _require_key_mod(key, a)
    prods = _column_products(a)
    zero_cols = [i for i, p in enumerate(prods) if p == 0]
    if zero_cols:
        if not allow_zero:
            raise ZeroEntryError(f"zero entries in columns {zero_cols}")
        warnings.warn(
            f"columns {zero_cols} contain zeros; tampering there is undetectable",
            ZeroColumnWarning,
            stacklevel=2,
        )
    m = a.mod.m
    v_a = ring.row_vector([w * p % m for w, p in zip(key.vk, prods)], a.mod)
    v_o = ring.mat_pow_elementwise(v_a, n)
    encoded = EncodedMatrix(a.stack(v_a), a.rows, 1, OpTag.POLY)
    return encoded, GoldenOutput(tuple(v_o.data), a.mod)


def verify_mul(c_star: Matrix, b: Matrix, key: VerificationKey, golden: GoldenOutput) -> Verdict:
    """Verify a returned multiplication result with its two checksum rows.

    Row ``original_rows`` is the image of the weighted checksum (compared to
    ``vk @ C``); the last row is the image of the scaled checksum (compared to
    the golden output).
    """
    orig = len(key.vk)
    if c_star.rows != orig + 2:
        raise DimensionMismatch(f"expected {orig + 2} rows, got {c_star.rows}")
    if c_star.cols != b.cols or len(golden.values) != c_star.cols:
        raise DimensionMismatch("result width disagrees with operand/golden width")
    _require_key_mod(key, c_star)
    c = c_star.row_slice(0, orig)
    r1 = c_star.row(orig)
    r2 = c_star.row(orig + 1)

    failures: dict[Check, int] = {}
    i = _first_mismatch(r2, list(golden.values))
    if i is not None:
        failures[Check.GOLDEN_OUTPUT] = i
    i = _first_mismatch(ring.vec_mat_mul(key.vk_row(), c).row(0), r1)
    if i is not None:
        failures[Check.WEIGHTED_CHECKSUM] = i
    return Verdict.from_failures(failures)


def verify_add(c_star: Matrix, key: VerificationKey, golden: GoldenOutput) -> Verdict:
    """Verify a returned addition result; its single checksum row must equal
    both the golden output and the weighted checksum of the data rows."""
    orig = len(key.vk)
    if c_star.rows != orig + 1:
        raise DimensionMismatch(f"expected {orig + 1} rows, got {c_star.rows}")
    if len(golden.values) != c_star.cols:
        raise DimensionMismatch("result width disagrees with golden width")
    _require_key_mod(key, c_star)
    c = c_star.row_slice(0, orig)
    v_1 = c_star.row(orig)

    failures: dict[Check, int] = {}
    i = _first_mismatch(v_1, list(golden.values))
    if i is not None:
        failures[Check.GOLDEN_OUTPUT] = i
    i = _first_mismatch(ring.vec_mat_mul(key.vk_row(), c).row(0), v_1)
    if i is not None:
        failures[Check.WEIGHTED_CHECKSUM] = i
    return Verdict.from_failures(failures)


def verify_poly(c_star: Matrix, n: int, key: VerificationKey, golden: GoldenOutput) -> Verdict:
    """Verify an element-wise power result: the evolved checksum row must equal
    the golden output and, per column, vk_i**n times the column product of the
    returned data rows."""
    if n < 1:
        raise InvalidExponent(f"exponent must be >= 1, got {n}")
    if c_star.rows < 2:
        raise DimensionMismatch("result must carry at least one data row")
    if len(key.vk) != c_star.cols or len(golden.values) != c_star.cols:
        raise DimensionMismatch("key/golden width disagrees with result width")
    _require_key_mod(key, c_star)
    orig = c_star.rows - 1
    c = c_star.row_slice(0, orig)
    v_c = c_star.row(orig)

    failures: dict[Check, int] = {}
    i = _first_mismatch(v_c, list(golden.values))
    if i is not None:
        failures[Check.GOLDEN_OUTPUT] = i
    m = c.mod.m
    expect = [pow(w, n, m) * p % m for w, p in zip(key.vk, _column_products(c))]
    i = _first_mismatch(expect, v_c)
    if i is not None:
        failures[Check.WEIGHTED_CHECKSUM] = i
    return Verdict.from_failures(failures)


_BASELINE_TAGS = {"mul": OpTag.ABFT_MUL, "add": OpTag.ABFT_ADD, "poly": OpTag.ABFT_POLY}


def encode_abft_baseline(a: Matrix, op: str, b: Matrix | None = None) -> tuple[EncodedMatrix, None]:
    """Insecure baseline: a public all-ones checksum row and no golden output.

    For mul/add the row is the plain column sum; for poly it is the column
    product. Kept only to demonstrate the consistent data+checksum bypass.
    """
    if op not in _BASELINE_TAGS:
        raise InvalidParams(f"unknown baseline op {op!r}")
    if op == "mul" and b is not None and a.cols != b.rows:
        raise DimensionMismatch(f"{a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    if op == "poly":
        row = ring.row_vector(_column_products(a), a.mod)
    else:
        ones = ring.row_vector([1] * a.rows, a.mod)
        row = ring.vec_mat_mul(ones, a)
    return EncodedMatrix(a.stack(row), a.rows, 1, _BASELINE_TAGS[op]), None


def verify_abft_baseline(c_star: Matrix, op: str, n: int = 1) -> Verdict:
    """Baseline verification: only the public column rule, no golden check."""
    if op not in _BASELINE_TAGS:
        raise InvalidParams(f"unknown baseline op {op!r}")
    if c_star.rows < 2:
        raise DimensionMismatch("result must carry at least one data row")
    c = c_star.row_slice(0, c_star.rows - 1)
    r1 = c_star.row(c_star.rows - 1)
    if op == "poly":
        expect = _column_products(c)
    else:
        ones = ring.row_vector([1] * c.rows, c.mod)
        expect = ring.vec_mat_mul(ones, c).row(0)
    failures: dict[Check, int] = {}
    i = _first_mismatch(expect, r1)
    if i is not None:
        failures[Check.WEIGHTED_CHECKSUM] = i
    return Verdict.from_failures(failures)
