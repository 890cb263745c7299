"""Per-layer verified demo CNN.

A desk-scale conv -> square -> dense network with seeded random signed
weights. Classification quality is meaningless by design (values wrap mod m);
what the demo shows is per-layer verification: an honest run accepts all
three layers and reproduces the plaintext forward pass exactly, and a tamper
injected at any single layer aborts the pipeline at exactly that layer.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from dataseal import adversary, backend as be, protocol as pr, ring
from dataseal.errors import InvalidParams, LayerRejected
from dataseal.ring import Matrix, ModulusConfig
from dataseal.sealcodec import ClientSecret, Verdict

DEMO_SLOT_COUNT = 256  # dense input width 144 needs more than the default 64


@dataclass(frozen=True)
class DemoCnnSpec:
    """Fixed architecture; the seed pins weights and input."""

    seed: int
    modulus: int = ring.DEFAULT_MODULUS
    input_h: int = 8
    input_w: int = 8
    conv_filters: int = 4
    kernel: int = 3
    activation_exponent: int = 2
    dense_out: int = 10
    weight_bound: int = 8

    @property
    def layer_count(self) -> int:
        return 3

    @property
    def conv_out(self) -> tuple[int, int]:
        return self.input_h - self.kernel + 1, self.input_w - self.kernel + 1

    @property
    def dense_in(self) -> int:
        out_h, out_w = self.conv_out
        return out_h * out_w * self.conv_filters


def _signed_matrix(rows: int, cols: int, bound: int, mod: ModulusConfig, rng: random.Random) -> Matrix:
    return Matrix.from_signed_rows(
        [[rng.randint(-bound, bound) for _ in range(cols)] for _ in range(rows)], mod
    )


def _poly_edit_target(result: be.EncryptedMatrix, data_rows: int, m: int) -> tuple[int, int] | None:
    """First column whose data-row product is nonzero, or None if all voided."""
    for col in range(result.cols):
        prod = 1
        for r in range(data_rows):
            prod = prod * result.row_cts[r].slots[col] % m
        if prod:
            return 0, col
    return None


def _bump_slot(result: be.EncryptedMatrix, row: int, col: int, m: int) -> be.EncryptedMatrix:
    cts = list(result.row_cts)
    slots = type(cts[row].slots)("Q", cts[row].slots)
    slots[col] = (slots[col] + 1) % m
    cts[row] = be.Ciphertext(slots, cts[row].depth, False, cts[row].ctx)
    return be.EncryptedMatrix(tuple(cts), result.rows, result.cols)


def build_demo(spec: DemoCnnSpec) -> tuple[pr.PipelineSpec, list[Matrix]]:
    mod = ModulusConfig(spec.modulus)
    rng = random.Random(f"demo-cnn|{spec.seed}")
    conv_w = _signed_matrix(spec.conv_filters, spec.kernel * spec.kernel, spec.weight_bound, mod, rng)
    dense_w = _signed_matrix(spec.dense_out, spec.dense_in, spec.weight_bound, mod, rng)
    pipeline = pr.PipelineSpec(
        (
            pr.ConvLayer(conv_w, spec.kernel, spec.kernel),
            pr.PolyLayer(spec.activation_exponent, allow_zero=True),
            pr.DenseLayer(dense_w),
        )
    )
    input_channel = _signed_matrix(spec.input_h, spec.input_w, spec.weight_bound, mod, rng)
    return pipeline, [input_channel]


@dataclass
class DemoReport:
    verdicts: list[Verdict]
    logits: list[int] | None  # decoded signed; None when a layer rejected
    rejected_layer: int | None
    matches_reference: bool | None

    def summary(self, total_layers: int = 3) -> str:
        lines = []
        for i, verdict in enumerate(self.verdicts, start=1):
            lines.append(f"layer {i}/{total_layers}: {verdict}")
        if self.rejected_layer is not None:
            lines.append(f"pipeline aborted at layer {self.rejected_layer}")
        else:
            lines.append(f"logits (decoded signed, wrap mod m): {self.logits}")
            lines.append(f"matches plaintext forward pass: {self.matches_reference}")
        return "\n".join(lines)


def run_demo(spec: DemoCnnSpec, tamper_layer: int | None = None, overlap: bool = False) -> DemoReport:
    """Run the pipeline against an in-process server, optionally tampering
    the result of one layer (1-based index)."""
    if tamper_layer is not None and not 1 <= tamper_layer <= spec.layer_count:
        raise InvalidParams(f"tamper layer must be in [1, {spec.layer_count}]")
    pipeline, input_channels = build_demo(spec)
    mod = input_channels[0].mod
    ctx = be.keygen(be.BackendParams(modulus=mod, slot_count=DEMO_SLOT_COUNT))

    job_counter = {"n": 0}
    tamper_rng = random.Random(f"demo-tamper|{spec.seed}")

    def interceptor(job: pr.Job, result: be.EncryptedMatrix) -> be.EncryptedMatrix:
        job_counter["n"] += 1
        if tamper_layer is None or job_counter["n"] != tamper_layer:
            return result
        appended = 2 if job.op == "mul" else 1
        data_rows = result.rows - appended
        row, col = 0, 0
        if job.op == "poly":
            # a zero column product voids that column's checksum; aim the edit
            # at a live column, or at the checksum row (golden check) if none
            target = _poly_edit_target(result, data_rows, mod.m)
            if target is None:
                return _bump_slot(result, data_rows, 0, mod.m)
            row, col = target
        return adversary.apply_tamper(
            result,
            adversary.ElementEdit(row=row, col=col, delta=1),
            tamper_rng,
            data_rows=data_rows,
            op=job.op,
            modulus=mod.m,
        )

    transport = pr.InProcessTransport(pr.ServerCore(ctx, result_interceptor=interceptor))
    rng = random.Random(f"demo-secret|{spec.seed}")
    session = pr.ClientSession(ClientSecret(rng.randbytes(16)), ctx, session_id=rng.randbytes(8))

    try:
        output, verdicts = pr.run_pipeline(session, pipeline, input_channels, transport, overlap=overlap)
    except LayerRejected as exc:
        partial = [Verdict(True)] * (exc.layer - 1) + [exc.verdict]
        return DemoReport(partial, None, exc.layer, None)

    reference = pr.plaintext_pipeline(pipeline, input_channels)
    logits = [ring.decode_signed(v, mod) for v in output.row(0)]
    return DemoReport(verdicts, logits, None, output == reference)
