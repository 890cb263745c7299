"""Overhead benchmark: client encode/verify cost against server evaluate cost.

Absolute times are machine-specific; what the harness checks is the trend:
the client-side overhead ratio r(n) = (encode + verify) / evaluate falls as
the matrix size grows, while the space overhead is exactly 2/n for
multiplication and 1/n for addition and powers.
"""

from __future__ import annotations

import csv
import random
import statistics
import time
from dataclasses import dataclass
from fractions import Fraction

from dataseal import backend as be
from dataseal import ring, sealcodec
from dataseal.errors import InvalidParams
from dataseal.ring import Matrix, ModulusConfig

PHASES = ("encode", "evaluate", "verify")

CSV_FIELDS = ("op", "n", "phase", "median_seconds", "space_overhead")

MIN_REPS = 5


@dataclass(frozen=True)
class BenchRecord:
    op: str
    n: int
    phase: str
    median_seconds: float
    space_overhead: Fraction

    def __post_init__(self) -> None:
        if self.median_seconds <= 0:
            raise InvalidParams("median time must be positive")
        if self.phase not in PHASES:
            raise InvalidParams(f"unknown phase {self.phase!r}")


def _bench_one(op: str, n: int, reps: int, mod: ModulusConfig, ctx: be.BackendContext,
               rng: random.Random) -> list[BenchRecord]:
    secret = sealcodec.ClientSecret(rng.randbytes(16))
    a = Matrix.random(n, n, mod, rng, nonzero=(op == "poly"))
    b = Matrix.random(n, n, mod, rng)
    exponent = 2
    times: dict[str, list[float]] = {p: [] for p in PHASES}

    for rep in range(reps):
        nonce = sealcodec.SessionNonce(rng.randbytes(16))

        t0 = time.perf_counter()
        if op == "mul":
            key = sealcodec.derive_keys(secret, nonce, "mul", a.rows, mod)
            encoded, golden = sealcodec.encode_mul(a, b, key)
        elif op == "add":
            key = sealcodec.derive_keys(secret, nonce, "add", a.rows, mod)
            encoded, enc_b, golden = sealcodec.encode_add(a, b, key)
        else:
            key = sealcodec.derive_keys(secret, nonce, "poly", a.cols, mod)
            encoded, golden = sealcodec.encode_poly(a, exponent, key)
        t1 = time.perf_counter()
        times["encode"].append(t1 - t0)

        e_a = be.encrypt_matrix(ctx, encoded.payload)
        if op == "add":
            e_b = be.encrypt_matrix(ctx, enc_b.payload)

        t2 = time.perf_counter()
        if op == "mul":
            e_c = be.eval_matmul(ctx, e_a, be.PlainOperand(b))
        elif op == "add":
            e_c = be.eval_add(ctx, e_a, e_b)
        else:
            e_c = be.eval_pow_elementwise(ctx, e_a, exponent)
        t3 = time.perf_counter()
        times["evaluate"].append(t3 - t2)

        c_star = be.decrypt_matrix(ctx, e_c)
        t4 = time.perf_counter()
        if op == "mul":
            verdict = sealcodec.verify_mul(c_star, b, key, golden)
        elif op == "add":
            verdict = sealcodec.verify_add(c_star, key, golden)
        else:
            verdict = sealcodec.verify_poly(c_star, exponent, key, golden)
        t5 = time.perf_counter()
        times["verify"].append(t5 - t4)
        if not verdict.accepted:  # honest run; anything else is a bug
            raise AssertionError(f"honest {op} n={n} rep={rep} rejected: {verdict}")

    space = Fraction(2 if op == "mul" else 1, n)
    return [
        BenchRecord(op, n, phase, statistics.median(times[phase]), space)
        for phase in PHASES
    ]


def run_bench(
    sizes: tuple[int, ...],
    reps: int = MIN_REPS,
    modulus: int = ring.DEFAULT_MODULUS,
    seed: int = 0,
    ops: tuple[str, ...] = ("mul", "add", "poly"),
) -> list[BenchRecord]:
    if len(sizes) < 2 or list(sizes) != sorted(set(sizes)):
        raise InvalidParams("sizes must be >= 2 strictly ascending entries")
    if reps < MIN_REPS:
        raise InvalidParams(f"reps must be >= {MIN_REPS}")
    mod = ModulusConfig(modulus)
    slot_count = 1 << (max(sizes) - 1).bit_length()
    ctx = be.keygen(be.BackendParams(modulus=mod, slot_count=max(slot_count, 2)))
    rng = random.Random(f"bench|{seed}")
    records: list[BenchRecord] = []
    for op in ops:
        for n in sizes:
            records.extend(_bench_one(op, n, reps, mod, ctx, rng))
    return records


def overhead_ratios(records: list[BenchRecord], op: str = "mul") -> dict[int, float]:
    """r(n) = (encode + verify) / evaluate, per size, for one operation."""
    by_n: dict[int, dict[str, float]] = {}
    for rec in records:
        if rec.op == op:
            by_n.setdefault(rec.n, {})[rec.phase] = rec.median_seconds
    return {
        n: (p["encode"] + p["verify"]) / p["evaluate"]
        for n, p in sorted(by_n.items())
        if set(p) == set(PHASES)
    }


@dataclass(frozen=True)
class TrendReport:
    ratios: dict[int, float]
    nonincreasing: bool
    space_exact: bool

    @property
    def passed(self) -> bool:
        return self.nonincreasing and self.space_exact

    def summary(self) -> str:
        lines = ["overhead ratio r(n) = (encode+verify)/evaluate for mul:"]
        for n, r in self.ratios.items():
            lines.append(f"  n={n:>4}  r={r:.4f}")
        lines.append(f"trend: {'PASS' if self.passed else 'FAIL'}"
                     f" (nonincreasing={self.nonincreasing}, space_exact={self.space_exact})")
        return "\n".join(lines)


def check_trend(records: list[BenchRecord], jitter: float = 0.10) -> TrendReport:
    """Nonincreasing r(n) within the jitter tolerance, exact space ratios."""
    ratios = overhead_ratios(records, "mul")
    ns = list(ratios)
    nonincreasing = all(
        ratios[ns[i + 1]] <= ratios[ns[i]] * (1.0 + jitter) for i in range(len(ns) - 1)
    )
    space_exact = all(
        rec.space_overhead == Fraction(2 if rec.op == "mul" else 1, rec.n) for rec in records
    )
    return TrendReport(ratios, nonincreasing, space_exact)


def write_bench_csv(records: list[BenchRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow(
                [rec.op, rec.n, rec.phase, f"{rec.median_seconds:.9f}", str(rec.space_overhead)]
            )
