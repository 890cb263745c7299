"""Attack strategies and campaign runner.

Strategies mutate the decrypted-slot image of results at the server boundary,
the strongest plaintext effect a ciphertext-mauling server could hope for.
The campaign drives the full client/server loop for each trial and tallies
detections, false accepts, and which check caught each tamper. A keyless
forgery game measures the acceptance rate of guessed checksum rows, and the
classic column-sum bypass is reproduced both against the insecure baseline
(accepted) and against the keyed scheme (rejected).
"""

from __future__ import annotations

import csv
import random
from array import array
from dataclasses import dataclass, field
from typing import Sequence, Union

from dataseal import backend as be
from dataseal import protocol as pr
from dataseal import ring, sealcodec
from dataseal.errors import InvalidParams, ShapeMismatch
from dataseal.ring import Matrix, ModulusConfig
from dataseal.sealcodec import Check, ClientSecret, Verdict, VerificationKey

SCHEME_DATASEAL = "dataseal"
SCHEME_ABFT = "abft"


# ---------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class Passthrough:
    """Honest server; completeness control."""

    name = "passthrough"
    stage = "result"


@dataclass(frozen=True)
class ElementEdit:
    """Add a nonzero delta to one data element (row/col/delta drawn per trial
    when left unset)."""

    row: int | None = None
    col: int | None = None
    delta: int | None = None
    name = "element"
    stage = "result"


@dataclass(frozen=True)
class MatrixScale:
    """Scale the whole result, checksum rows included, by some c not in {0, 1}."""

    c: int | None = None
    name = "scale"
    stage = "result"


@dataclass(frozen=True)
class ChecksumForge:
    """Replace data rows with fresh values and checksum rows with uniform guesses."""

    name = "forge"
    stage = "result"


@dataclass(frozen=True)
class JointForge:
    """Rewrite the data and recompute checksum rows by the public all-ones rule
    (column sums; column products for the power operation)."""

    name = "joint"
    stage = "result"


@dataclass(frozen=True)
class HonestThenOverwrite:
    """Compute honestly, then replace one data row, leaving checksums intact."""

    row: int | None = None
    name = "overwrite"
    stage = "result"


TamperStrategy = Union[
    Passthrough, ElementEdit, MatrixScale, ChecksumForge, JointForge, HonestThenOverwrite
]


def default_strategies() -> tuple[TamperStrategy, ...]:
    return (
        Passthrough(),
        ElementEdit(),
        MatrixScale(),
        ChecksumForge(),
        JointForge(),
        HonestThenOverwrite(),
    )


STRATEGY_NAMES = {s.name: type(s) for s in default_strategies()}


def _clone_slots(result: be.EncryptedMatrix) -> list[array]:
    return [array("Q", ct.slots) for ct in result.row_cts]


def _rebuild(result: be.EncryptedMatrix, slots: list[array]) -> be.EncryptedMatrix:
    cts = tuple(
        be.Ciphertext(s, ct.depth, False, ct.ctx) for s, ct in zip(slots, result.row_cts)
    )
    return be.EncryptedMatrix(cts, result.rows, result.cols)


def _random_row(rng: random.Random, cols: int, slot_count: int, m: int) -> array:
    row = array("Q", bytes(8 * slot_count))
    for j in range(cols):
        row[j] = rng.randrange(m)
    return row


def apply_tamper(
    result: be.EncryptedMatrix,
    strategy: TamperStrategy,
    rng: random.Random,
    *,
    data_rows: int,
    op: str,
    modulus: int,
) -> be.EncryptedMatrix:
    """Apply a strategy to a result's slot image.

    Every non-Passthrough strategy changes at least one data-row value
    (within the logical column range; padding slots are inert).
    """
    if not 1 <= data_rows < result.rows:
        raise ShapeMismatch(f"data_rows {data_rows} incompatible with {result.rows} total rows")
    if isinstance(strategy, Passthrough):
        return result
    m = modulus
    cols = result.cols
    slots = _clone_slots(result)

    if isinstance(strategy, ElementEdit):
        r = strategy.row if strategy.row is not None else rng.randrange(data_rows)
        c = strategy.col if strategy.col is not None else rng.randrange(cols)
        delta = strategy.delta if strategy.delta is not None else rng.randrange(1, m)
        if not 0 <= r < data_rows or not 0 <= c < cols:
            raise ShapeMismatch(f"edit position ({r}, {c}) outside data region")
        if delta % m == 0:
            raise InvalidParams("delta must be nonzero mod m")
        slots[r][c] = (slots[r][c] + delta) % m
    elif isinstance(strategy, MatrixScale):
        c = strategy.c if strategy.c is not None else rng.randrange(2, m)
        if c % m in (0, 1):
            raise InvalidParams("scale factor must avoid {0, 1} mod m")
        for i in range(result.rows):
            slots[i] = array("Q", [v * c % m for v in slots[i]])
    elif isinstance(strategy, HonestThenOverwrite):
        r = strategy.row if strategy.row is not None else rng.randrange(data_rows)
        while True:
            fresh = _random_row(rng, cols, len(slots[r]), m)
            if fresh != slots[r]:
                break
        slots[r] = fresh
    elif isinstance(strategy, (ChecksumForge, JointForge)):
        while True:
            fresh = [_random_row(rng, cols, len(s), m) for s in slots[:data_rows]]
            if any(f != s for f, s in zip(fresh, slots)):
                break
        slots[:data_rows] = fresh
        if isinstance(strategy, ChecksumForge):
            for i in range(data_rows, result.rows):
                slots[i] = _random_row(rng, cols, len(slots[i]), m)
        else:
            consistent = _public_rule_row(slots[:data_rows], op, m)
            for i in range(data_rows, result.rows):
                slots[i] = array("Q", consistent)
    else:
        raise InvalidParams(f"unknown strategy {strategy!r}")
    return _rebuild(result, slots)


def _public_rule_row(data_slots: Sequence[array], op: str, m: int) -> array:
    """The keyless checksum rule an all-ones forger would apply."""
    width = len(data_slots[0])
    if op == "poly":
        out = array("Q", [1]) * width
        for row in data_slots:
            out = array("Q", [a * b % m for a, b in zip(out, row)])
        return out
    out = array("Q", bytes(8 * width))
    for row in data_slots:
        out = array("Q", [(a + b) % m for a, b in zip(out, row)])
    return out


# ---------------------------------------------------------------------------
# campaign


@dataclass(frozen=True)
class CampaignConfig:
    trials: int = 100
    sizes: tuple[int, ...] = (2, 4, 8)
    ops: tuple[str, ...] = ("mul", "add", "poly")
    modulus: int = ring.DEFAULT_MODULUS
    scheme: str = SCHEME_DATASEAL
    seed: int = 0
    strategies: tuple[TamperStrategy, ...] = field(default_factory=default_strategies)
    poly_exponent: int = 2

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise InvalidParams("trials must be >= 1")
        if self.scheme not in (SCHEME_DATASEAL, SCHEME_ABFT):
            raise InvalidParams(f"unknown scheme {self.scheme!r}")
        if not self.sizes or not self.ops:
            raise InvalidParams("need at least one size and one op")


@dataclass
class CellStats:
    trials: int = 0
    detections: int = 0
    false_accepts: int = 0
    degenerate_golden: int = 0
    attribution: dict[str, int] = field(default_factory=dict)

    def record(self, verdict: Verdict, tampered: bool, degenerate: bool) -> None:
        self.trials += 1
        if degenerate:
            self.degenerate_golden += 1
        if not verdict.accepted:
            self.detections += 1
            for check in verdict.failed_checks:
                self.attribution[check.name] = self.attribution.get(check.name, 0) + 1
        elif tampered:
            self.false_accepts += 1


@dataclass
class DetectionStats:
    scheme: str
    cells: dict[tuple[str, str, int], CellStats] = field(default_factory=dict)

    def cell(self, strategy: str, op: str, size: int) -> CellStats:
        return self.cells.setdefault((strategy, op, size), CellStats())

    def totals(self, strategy: str | None = None) -> CellStats:
        agg = CellStats()
        for (name, _op, _size), cell in self.cells.items():
            if strategy is not None and name != strategy:
                continue
            agg.trials += cell.trials
            agg.detections += cell.detections
            agg.false_accepts += cell.false_accepts
            agg.degenerate_golden += cell.degenerate_golden
            for k, v in cell.attribution.items():
                agg.attribution[k] = agg.attribution.get(k, 0) + v
        return agg

    def rows(self) -> list[dict[str, object]]:
        out = []
        for (name, op, size), cell in sorted(self.cells.items()):
            out.append(
                {
                    "scheme": self.scheme,
                    "strategy": name,
                    "op": op,
                    "size": size,
                    "trials": cell.trials,
                    "detections": cell.detections,
                    "false_accepts": cell.false_accepts,
                }
            )
        return out


CSV_FIELDS = ("scheme", "strategy", "op", "size", "trials", "detections", "false_accepts")


def write_stats_csv(stats: DetectionStats, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        writer.writerows(stats.rows())


class _TamperBox:
    """Per-trial strategy holder wired into the server's result interceptor."""

    def __init__(self, scheme: str, modulus: int):
        self.scheme = scheme
        self.modulus = modulus
        self.strategy: TamperStrategy | None = None
        self.rng: random.Random | None = None

    def interceptor(self, job: pr.Job, result: be.EncryptedMatrix) -> be.EncryptedMatrix:
        if self.strategy is None or isinstance(self.strategy, Passthrough):
            return result
        appended = 2 if (self.scheme == SCHEME_DATASEAL and job.op == "mul") else 1
        assert self.rng is not None
        return apply_tamper(
            result,
            self.strategy,
            self.rng,
            data_rows=result.rows - appended,
            op=job.op,
            modulus=self.modulus,
        )


def _slot_count_for(sizes: Sequence[int]) -> int:
    need = max(max(sizes), 2)
    return 1 << (need - 1).bit_length()


def _baseline_trial(
    transport, ctx: be.BackendContext, op: str, a: Matrix, b: Matrix | None, exponent: int, job_id: int
) -> Verdict:
    encoded, _ = sealcodec.encode_abft_baseline(a, op, b)
    encrypted = [be.encrypt_matrix(ctx, encoded.payload)]
    public: tuple[Matrix, ...] = ()
    if op == "mul":
        assert b is not None
        public = (b,)
    elif op == "add":
        assert b is not None
        enc_b, _ = sealcodec.encode_abft_baseline(b, op)
        encrypted.append(be.encrypt_matrix(ctx, enc_b.payload))
    reply = transport.request(pr.Job(job_id, op, exponent, tuple(encrypted), public))
    if not isinstance(reply, pr.Result):
        raise InvalidParams(f"baseline trial failed: {reply}")
    c_star = be.decrypt_matrix(ctx, reply.encrypted)
    return sealcodec.verify_abft_baseline(c_star, op, exponent)


def run_campaign(config: CampaignConfig) -> DetectionStats:
    """Run trials for every (strategy, op, size) cell through the protocol loop.

    Deterministic given the seed: each cell gets its own derived generator, so
    cells could run in any order (or in parallel) with identical stats.
    """
    mod = ModulusConfig(config.modulus, allow_small=config.modulus < ring.MIN_MODULUS)
    params = be.BackendParams(modulus=mod, slot_count=_slot_count_for(config.sizes))
    ctx = be.keygen(params)
    box = _TamperBox(config.scheme, mod.m)
    transport = pr.InProcessTransport(pr.ServerCore(ctx, result_interceptor=box.interceptor))
    stats = DetectionStats(config.scheme)

    for strategy in config.strategies:
        for op in config.ops:
            for size in config.sizes:
                cell_rng = random.Random(
                    f"{config.seed}|{config.scheme}|{strategy.name}|{op}|{size}"
                )
                secret = ClientSecret(cell_rng.randbytes(16))
                session = pr.ClientSession(secret, ctx, session_id=cell_rng.randbytes(8))
                cell = stats.cell(strategy.name, op, size)
                for _ in range(config.trials):
                    a = Matrix.random(size, size, mod, cell_rng, nonzero=(op == "poly"))
                    b = Matrix.random(size, size, mod, cell_rng) if op != "poly" else None
                    exponent = config.poly_exponent if op == "poly" else 0
                    box.strategy = strategy
                    box.rng = cell_rng
                    try:
                        if config.scheme == SCHEME_DATASEAL:
                            jid = session.submit(transport, op, a, b, exponent=exponent)
                            golden = session.pending[jid].golden
                            degenerate = golden is not None and golden.is_zero
                            _, verdict = session.collect(jid)
                        else:
                            degenerate = False
                            verdict = _baseline_trial(
                                transport, ctx, op, a, b, exponent, job_id=len(stats.cells) * 1000 + cell.trials
                            )
                    finally:
                        box.strategy = None
                        box.rng = None
                    cell.record(verdict, tampered=not isinstance(strategy, Passthrough), degenerate=degenerate)
    return stats


# ---------------------------------------------------------------------------
# forgery game


@dataclass(frozen=True)
class ForgeryGameResult:
    trials: int
    wins: int
    identical_forgeries: int  # forged data that happened to equal the honest result

    @property
    def win_rate(self) -> float:
        return self.wins / self.trials


def forgery_game(
    trials: int,
    *,
    modulus: int,
    cols: int,
    rows: int = 4,
    seed: int = 0,
    adversary_knows_key: bool = False,
) -> ForgeryGameResult:
    """Play the keyless forgery game.

    Per play: an honest multiplication instance is encoded; the adversary
    returns forged data rows, keeps the honest golden row (passing that check
    for free), and guesses the weighted-checksum row. Without the key the
    guess is uniform, so the acceptance probability is exactly m**(-cols) per
    play; with the key (control) the adversary computes the row and always
    wins. The analytical bound on any keyless adversary is m**(-cols).
    """
    if trials < 1:
        raise InvalidParams("trials must be >= 1")
    mod = ModulusConfig(modulus, allow_small=modulus < ring.MIN_MODULUS)
    m = mod.m
    rng = random.Random(f"forgery|{seed}|{modulus}|{cols}|{rows}|{adversary_knows_key}")
    wins = 0
    identical = 0
    for _ in range(trials):
        a = Matrix.random(rows, rows, mod, rng)
        b = Matrix.random(rows, cols, mod, rng)
        vk = tuple(rng.randrange(1, m) for _ in range(rows))
        alpha = 1 if m == 2 else rng.randrange(2, m)
        key = VerificationKey(vk, alpha, mod)
        encoded, golden = sealcodec.encode_mul(a, b, key)
        honest = ring.mat_mul(encoded.payload, b)

        forged = Matrix.random(rows, cols, mod, rng)
        if forged == honest.row_slice(0, rows):
            identical += 1
        if adversary_knows_key:
            guess = ring.vec_mat_mul(key.vk_row(), forged)
        else:
            guess = Matrix.random(1, cols, mod, rng)
        golden_row = honest.row_slice(rows + 1, rows + 2)
        c_star = forged.stack(guess).stack(golden_row)
        if sealcodec.verify_mul(c_star, b, key, golden).accepted:
            wins += 1
    return ForgeryGameResult(trials, wins, identical)


# ---------------------------------------------------------------------------
# pinned column-sum bypass replay


@dataclass(frozen=True)
class BypassReplay:
    """Transcript of the consistent data+checksum edit that defeats plain
    column sums but not the keyed checksum."""

    honest_c: list[list[int]]
    honest_checksum: list[int]
    tampered_c: list[list[int]]
    tampered_checksum: list[int]
    baseline_verdict: Verdict
    keyed_verdict: Verdict
    keyed_weighted_col0: int
    keyed_guess_col0: int

    def transcript(self) -> str:
        lines = [
            "column-sum bypass replay (mod 97)",
            f"  honest C rows:        {self.honest_c}",
            f"  honest checksum row:  {self.honest_checksum}",
            "  tamper: +1 on input element (0,0) and +1 on its checksum entry",
            f"  tampered C rows:      {self.tampered_c}",
            f"  tampered checksum:    {self.tampered_checksum}",
            f"  column-sum baseline:  {self.baseline_verdict}",
            f"  keyed checksum:       {self.keyed_verdict} "
            f"(weighted col0 {self.keyed_weighted_col0} != forged {self.keyed_guess_col0})",
        ]
        return "\n".join(lines)


def column_sum_bypass_replay() -> BypassReplay:
    """Replay the textbook bypass through the encrypted evaluation path."""
    mod = ModulusConfig(97, allow_small=True)
    a = Matrix.from_rows([[3, 1], [1, 5]], mod)
    b = Matrix.from_rows([[8, 6], [7, 10]], mod)
    ctx = be.keygen(be.BackendParams(modulus=mod, slot_count=4, max_depth=4))

    def evaluate(payload: Matrix) -> Matrix:
        enc = be.encrypt_matrix(ctx, payload)
        return be.decrypt_matrix(ctx, be.eval_matmul(ctx, enc, be.PlainOperand(b)))

    def bump(payload: Matrix, flat_index: int) -> Matrix:
        data = array("Q", payload.data)
        data[flat_index] = (data[flat_index] + 1) % mod.m
        return Matrix(payload.rows, payload.cols, mod, data)

    # baseline: consistent +1 on A[0][0] and on its column-sum entry
    base_enc, _ = sealcodec.encode_abft_baseline(a, "mul", b)
    honest = evaluate(base_enc.payload)
    tampered = evaluate(bump(bump(base_enc.payload, 0), 2 * a.cols))
    baseline_verdict = sealcodec.verify_abft_baseline(tampered, "mul")

    # keyed: same input edit plus a +1 guess on the weighted checksum row
    key = VerificationKey((2, 3), 5, mod)
    keyed_enc, golden = sealcodec.encode_mul(a, b, key)
    keyed_tampered = evaluate(bump(bump(keyed_enc.payload, 0), 2 * a.cols))
    keyed_verdict = sealcodec.verify_mul(keyed_tampered, b, key, golden)
    weighted = ring.vec_mat_mul(key.vk_row(), keyed_tampered.row_slice(0, 2))

    return BypassReplay(
        honest_c=honest.row_slice(0, 2).to_rows(),
        honest_checksum=honest.row(2),
        tampered_c=tampered.row_slice(0, 2).to_rows(),
        tampered_checksum=tampered.row(2),
        baseline_verdict=baseline_verdict,
        keyed_verdict=keyed_verdict,
        keyed_weighted_col0=weighted.at(0, 0),
        keyed_guess_col0=keyed_tampered.at(2, 0),
    )
