"""Client/server session protocol.

Framing is length-prefixed little-endian with a crc32 over type and payload
(see docs/wire_format.md for the byte-exact layout and the error-code
registry). Two transports speak the same messages: an in-process transport
passing objects directly, and a TCP byte-stream transport using the frame
codec. Verification keys, nonces, and golden outputs never leave the client.
"""

from __future__ import annotations

import logging
import os
import socket
import socketserver
import struct
import sys
import threading
import time
import zlib
from array import array
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

from dataseal import backend as be
from dataseal import ring, sealcodec
from dataseal.errors import (
    BadMagic,
    CrcMismatch,
    DataSealError,
    DepthExceeded,
    DimensionMismatch,
    FrameError,
    InvalidExponent,
    InvalidParams,
    LayerRejected,
    LengthMismatch,
    ModulusMismatch,
    RemoteError,
    TooWide,
    TransportError,
    Truncated,
    UnknownJob,
    UnknownType,
    ValueOutOfRange,
)
from dataseal.ring import Matrix
from dataseal.sealcodec import ClientSecret, GoldenOutput, SessionNonce, Verdict, VerificationKey

logger = logging.getLogger("dataseal.protocol")

PROTOCOL_VERSION = 1

MAGIC = b"DSV1"
MAX_PAYLOAD = 1 << 26

_HEADER = struct.Struct("<4sBII")  # magic, msg_type, payload_len, crc32

MSG_HELLO = 1
MSG_JOB = 2
MSG_RESULT = 3
MSG_ERROR = 4

OP_CODES = {"mul": 1, "add": 2, "poly": 3}
OP_NAMES = {v: k for k, v in OP_CODES.items()}

# ERROR message code registry (u16); see docs/wire_format.md.
ERR_BAD_FRAME = 1
ERR_NO_HELLO = 2
ERR_UNSUPPORTED_OP = 3
ERR_DIMENSION_MISMATCH = 4
ERR_TOO_WIDE = 5
ERR_DEPTH_EXCEEDED = 6
ERR_MODULUS_MISMATCH = 7
ERR_VALUE_OUT_OF_RANGE = 8
ERR_INVALID_EXPONENT = 9
ERR_INTERNAL = 99

_EXC_TO_CODE = (
    (DimensionMismatch, ERR_DIMENSION_MISMATCH),
    (TooWide, ERR_TOO_WIDE),
    (DepthExceeded, ERR_DEPTH_EXCEEDED),
    (ModulusMismatch, ERR_MODULUS_MISMATCH),
    (ValueOutOfRange, ERR_VALUE_OUT_OF_RANGE),
    (InvalidExponent, ERR_INVALID_EXPONENT),
)


@dataclass(frozen=True)
class Hello:
    protocol_version: int
    slot_count: int
    modulus: int


@dataclass(frozen=True)
class Job:
    job_id: int
    op: str  # "mul" | "add" | "poly"
    exponent: int
    encrypted: tuple[be.EncryptedMatrix, ...]
    public: tuple[Matrix, ...]


@dataclass(frozen=True)
class Result:
    job_id: int
    encrypted: be.EncryptedMatrix


@dataclass(frozen=True)
class ErrorMsg:
    job_id: int
    code: int
    text: str


Message = Union[Hello, Job, Result, ErrorMsg]


# ---------------------------------------------------------------------------
# frame codec


class _Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def pack(self, fmt: str, *vals: int) -> None:
        self._parts.append(struct.pack(fmt, *vals))

    def u64_array(self, a: array) -> None:
        data = a if sys.byteorder == "little" else _byteswapped(a)
        self._parts.append(data.tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def unpack(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if self._pos + size > len(self._data):
            raise Truncated(f"payload ends inside a {fmt} field")
        vals = struct.unpack_from(fmt, self._data, self._pos)
        self._pos += size
        return vals

    def u64_array(self, count: int) -> array:
        size = 8 * count
        if self._pos + size > len(self._data):
            raise Truncated(f"payload ends inside a {count}-word array")
        out = array("Q")
        out.frombytes(self._data[self._pos : self._pos + size])
        self._pos += size
        return out if sys.byteorder == "little" else _byteswapped(out)

    def done(self) -> None:
        if self._pos != len(self._data):
            raise LengthMismatch(f"{len(self._data) - self._pos} trailing payload bytes")


def _byteswapped(a: array) -> array:  # pragma: no cover - big-endian hosts only
    out = array("Q", a)
    out.byteswap()
    return out


def _write_matrix(w: _Writer, m: Matrix) -> None:
    w.pack("<II", m.rows, m.cols)
    w.u64_array(m.data)


def _read_matrix(r: _Reader, mod: ring.ModulusConfig) -> Matrix:
    rows, cols = r.unpack("<II")
    if rows < 1 or cols < 1:
        raise ValueOutOfRange("matrix dims must be positive")
    data = r.u64_array(rows * cols)
    if any(v >= mod.m for v in data):
        raise ValueOutOfRange("matrix value >= modulus")
    return Matrix(rows, cols, mod, data)


def _write_encrypted(w: _Writer, cols: int, e: be.EncryptedMatrix) -> None:
    w.pack("<I", cols)
    w.pack("<I", e.rows)
    for ct in e.row_cts:
        w.pack("<IH", len(ct.slots), ct.depth)
        w.u64_array(ct.slots)


def _read_encrypted(r: _Reader, ctx: be.BackendContext) -> be.EncryptedMatrix:
    params = ctx.params
    (cols,) = r.unpack("<I")
    (ct_count,) = r.unpack("<I")
    if ct_count < 1:
        raise ValueOutOfRange("encrypted matrix needs at least one ciphertext")
    if cols < 1 or cols > params.slot_count:
        raise ValueOutOfRange(f"logical width {cols} outside [1, {params.slot_count}]")
    cts = []
    for _ in range(ct_count):
        slot_count, depth = r.unpack("<IH")
        if slot_count != params.slot_count:
            raise LengthMismatch(f"ciphertext has {slot_count} slots, context {params.slot_count}")
        if depth > params.max_depth:
            raise ValueOutOfRange(f"depth {depth} > budget {params.max_depth}")
        slots = r.u64_array(slot_count)
        if any(v >= params.modulus.m for v in slots):
            raise ValueOutOfRange("slot value >= modulus")
        cts.append(be.Ciphertext(slots, depth, depth == 0, ctx))
    return be.EncryptedMatrix(tuple(cts), ct_count, cols)


def _encode_payload(msg: Message) -> tuple[int, bytes]:
    w = _Writer()
    if isinstance(msg, Hello):
        w.pack("<HIQ", msg.protocol_version, msg.slot_count, msg.modulus)
        return MSG_HELLO, w.getvalue()
    if isinstance(msg, Job):
        if msg.op not in OP_CODES:
            raise InvalidParams(f"unknown op {msg.op!r}")
        w.pack("<QBQ", msg.job_id, OP_CODES[msg.op], msg.exponent)
        w.pack("<B", len(msg.encrypted))
        for e in msg.encrypted:
            _write_encrypted(w, e.cols, e)
        w.pack("<B", len(msg.public))
        for m in msg.public:
            _write_matrix(w, m)
        return MSG_JOB, w.getvalue()
    if isinstance(msg, Result):
        w.pack("<Q", msg.job_id)
        _write_encrypted(w, msg.encrypted.cols, msg.encrypted)
        return MSG_RESULT, w.getvalue()
    if isinstance(msg, ErrorMsg):
        text = msg.text.encode("utf-8")[:65535]
        w.pack("<QHH", msg.job_id, msg.code, len(text))
        w._parts.append(text)
        return MSG_ERROR, w.getvalue()
    raise InvalidParams(f"cannot encode {type(msg).__name__}")


def encode_frame(msg: Message) -> bytes:
    msg_type, payload = _encode_payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise LengthMismatch(f"payload {len(payload)} exceeds cap {MAX_PAYLOAD}")
    crc = zlib.crc32(bytes([msg_type]) + payload)
    return _HEADER.pack(MAGIC, msg_type, len(payload), crc) + payload


def _check_operand_counts(op: str, n_enc: int, n_plain: int, exponent: int) -> None:
    ok = {
        "mul": n_plain == 1 and n_enc == 1 or n_plain == 0 and n_enc == 2,
        "add": n_enc == 2 and n_plain == 0,
        "poly": n_enc == 1 and n_plain == 0 and exponent >= 1,
    }[op]
    if not ok:
        raise ValueOutOfRange(f"{op} job carries wrong operands ({n_enc} enc, {n_plain} plain)")


def _decode_payload(msg_type: int, payload: bytes, ctx: be.BackendContext | None) -> Message:
    r = _Reader(payload)
    if msg_type == MSG_HELLO:
        version, slot_count, modulus = r.unpack("<HIQ")
        r.done()
        return Hello(version, slot_count, modulus)
    if ctx is None:
        raise InvalidParams("decoding JOB/RESULT/ERROR needs a backend context")
    if msg_type == MSG_JOB:
        job_id, op_code, exponent = r.unpack("<QBQ")
        if op_code not in OP_NAMES:
            raise ValueOutOfRange(f"unknown op code {op_code}")
        (n_enc,) = r.unpack("<B")
        encrypted = tuple(_read_encrypted(r, ctx) for _ in range(n_enc))
        (n_plain,) = r.unpack("<B")
        public = tuple(_read_matrix(r, ctx.params.modulus) for _ in range(n_plain))
        r.done()
        op = OP_NAMES[op_code]
        _check_operand_counts(op, n_enc, n_plain, exponent)
        return Job(job_id, op, exponent, encrypted, public)
    if msg_type == MSG_RESULT:
        (job_id,) = r.unpack("<Q")
        encrypted = _read_encrypted(r, ctx)
        r.done()
        return Result(job_id, encrypted)
    if msg_type == MSG_ERROR:
        job_id, code, text_len = r.unpack("<QHH")
        if r._pos + text_len > len(payload):
            raise Truncated("error text truncated")
        text = payload[r._pos : r._pos + text_len].decode("utf-8", "replace")
        r._pos += text_len
        r.done()
        return ErrorMsg(job_id, code, text)
    raise UnknownType(f"message type {msg_type}")


def decode_frame(data: bytes, ctx: be.BackendContext | None = None) -> Message:
    """Decode exactly one frame. Any malformed input raises a FrameError."""
    if len(data) < _HEADER.size:
        raise Truncated(f"frame shorter than header ({len(data)} bytes)")
    magic, msg_type, payload_len, crc = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if msg_type not in (MSG_HELLO, MSG_JOB, MSG_RESULT, MSG_ERROR):
        raise UnknownType(f"message type {msg_type}")
    if payload_len > MAX_PAYLOAD:
        raise LengthMismatch(f"declared payload {payload_len} exceeds cap")
    body = data[_HEADER.size :]
    if len(body) < payload_len:
        raise Truncated(f"payload declares {payload_len} bytes, got {len(body)}")
    if len(body) > payload_len:
        raise LengthMismatch(f"{len(body) - payload_len} bytes after payload")
    if zlib.crc32(bytes([msg_type]) + body) != crc:
        raise CrcMismatch("frame checksum mismatch")
    return _decode_payload(msg_type, body, ctx)


def read_frame(stream, ctx: be.BackendContext | None = None) -> Message | None:
    """Read one frame from a blocking byte stream; None on clean EOF."""
    header = _read_exact(stream, _HEADER.size, allow_eof=True)
    if header is None:
        return None
    magic, msg_type, payload_len, _crc = _HEADER.unpack_from(header)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if payload_len > MAX_PAYLOAD:
        raise LengthMismatch(f"declared payload {payload_len} exceeds cap")
    payload = _read_exact(stream, payload_len, allow_eof=False)
    return decode_frame(header + payload, ctx)


def _read_exact(stream, n: int, allow_eof: bool) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            if allow_eof and not buf:
                return None
            raise Truncated(f"stream ended after {len(buf)} of {n} bytes")
        buf += chunk
    return buf


# ---------------------------------------------------------------------------
# server

ResultInterceptor = Callable[[Job, be.EncryptedMatrix], be.EncryptedMatrix]


class ServerCore:
    """Evaluates jobs against the backend; never sees keys or golden outputs.

    An optional result interceptor models a tampering server: it may rewrite
    the encrypted result before it is sent back.
    """

    def __init__(self, ctx: be.BackendContext, result_interceptor: ResultInterceptor | None = None):
        self.ctx = ctx
        self.result_interceptor = result_interceptor

    def hello(self) -> Hello:
        p = self.ctx.params
        return Hello(PROTOCOL_VERSION, p.slot_count, p.modulus.m)

    def handle(self, msg: Message) -> Message:
        if isinstance(msg, Hello):
            return self.hello()
        if not isinstance(msg, Job):
            return ErrorMsg(0, ERR_UNSUPPORTED_OP, f"cannot handle {type(msg).__name__}")
        start = time.perf_counter()
        try:
            result = self._evaluate(msg)
        except DataSealError as exc:
            code = ERR_INTERNAL
            for exc_type, exc_code in _EXC_TO_CODE:
                if isinstance(exc, exc_type):
                    code = exc_code
                    break
            logger.info("job %d op=%s -> error %d (%s)", msg.job_id, msg.op, code, exc)
            return ErrorMsg(msg.job_id, code, str(exc))
        if self.result_interceptor is not None:
            result = self.result_interceptor(msg, result)
        logger.info(
            "job %d op=%s dims=%dx%d duration=%.6fs",
            msg.job_id,
            msg.op,
            result.rows,
            result.cols,
            time.perf_counter() - start,
        )
        return Result(msg.job_id, result)

    def _evaluate(self, job: Job) -> be.EncryptedMatrix:
        _check_operand_counts(job.op, len(job.encrypted), len(job.public), job.exponent)
        if job.op == "mul":
            if job.public:
                return be.eval_matmul(self.ctx, job.encrypted[0], be.PlainOperand(job.public[0]))
            return be.eval_matmul(self.ctx, job.encrypted[0], job.encrypted[1])
        if job.op == "add":
            return be.eval_add(self.ctx, job.encrypted[0], job.encrypted[1])
        return be.eval_pow_elementwise(self.ctx, job.encrypted[0], job.exponent)


# ---------------------------------------------------------------------------
# transports


class InProcessTransport:
    """Same Message objects, no serialization; shares the server's context."""

    def __init__(self, core: ServerCore):
        self._core = core
        reply = core.handle(Hello(PROTOCOL_VERSION, core.ctx.params.slot_count, core.ctx.params.modulus.m))
        if not isinstance(reply, Hello):
            raise TransportError("handshake failed")
        self.ctx = core.ctx

    def request(self, msg: Message) -> Message:
        return self._core.handle(msg)

    def close(self) -> None:
        pass


class SocketTransport:
    """Byte-stream transport: one frame per request, one per reply."""

    def __init__(self, host: str, port: int, ctx: be.BackendContext, timeout: float = 30.0):
        self.ctx = ctx
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"connect {host}:{port}: {exc}") from exc
        self._file = self._sock.makefile("rb")
        p = ctx.params
        reply = self.request(Hello(PROTOCOL_VERSION, p.slot_count, p.modulus.m))
        if not isinstance(reply, Hello) or reply.slot_count != p.slot_count or reply.modulus != p.modulus.m:
            self.close()
            raise TransportError(f"server parameters disagree: {reply}")

    def request(self, msg: Message) -> Message:
        try:
            self._sock.sendall(encode_frame(msg))
            reply = read_frame(self._file, self.ctx)
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        if reply is None:
            raise TransportError("server closed the connection")
        return reply

    def close(self) -> None:
        try:
            self._file.close()
            self._sock.close()
        except OSError:
            pass


class _FrameHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:  # one session per connection
        core: ServerCore = self.server.core  # type: ignore[attr-defined]
        stream = self.request.makefile("rb")
        hello_done = False
        try:
            while True:
                try:
                    msg = read_frame(stream, core.ctx)
                except FrameError as exc:
                    self.request.sendall(encode_frame(ErrorMsg(0, ERR_BAD_FRAME, str(exc))))
                    return
                if msg is None:
                    return
                if isinstance(msg, Hello):
                    hello_done = True
                elif not hello_done:
                    self.request.sendall(encode_frame(ErrorMsg(0, ERR_NO_HELLO, "HELLO required first")))
                    continue
                self.request.sendall(encode_frame(core.handle(msg)))
        except OSError:
            return
        finally:
            stream.close()


class FrameServer(socketserver.ThreadingTCPServer):
    """TCP server speaking the frame protocol; one session per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str, port: int, core: ServerCore):
        super().__init__((host, port), _FrameHandler)
        self.core = core

    @property
    def port(self) -> int:
        return self.server_address[1]

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


# ---------------------------------------------------------------------------
# client session


@dataclass
class _PendingJob:
    op: str
    key: VerificationKey
    golden: GoldenOutput | None
    original_rows: int
    exponent: int
    b_public: Matrix | None


class ClientSession:
    """Client side of one session: derives fresh keys per job, encodes and
    encrypts, and verifies results one-shot (a job id verifies at most once).
    """

    def __init__(
        self,
        secret: ClientSecret,
        ctx: be.BackendContext,
        session_id: bytes | None = None,
    ):
        if session_id is not None and len(session_id) != 8:
            raise InvalidParams("session_id must be 8 bytes")
        self.secret = secret
        self.ctx = ctx
        self.session_id = session_id if session_id is not None else os_random_8()
        self._job_counter = 0
        self.pending: dict[int, _PendingJob] = {}
        self._inbox: dict[int, Message] = {}

    def _next_nonce(self, job_id: int) -> SessionNonce:
        return SessionNonce(self.session_id + job_id.to_bytes(8, "little"))

    def submit(
        self,
        transport,
        op: str,
        a: Matrix,
        b: Matrix | None = None,
        exponent: int = 0,
        private_b: bool = False,
        allow_zero: bool = False,
    ) -> int:
        """Encode, encrypt and transmit one job; the reply conveniently waits
        in the inbox for collect()/receive()."""
        job_id = self._job_counter
        self._job_counter += 1
        nonce = self._next_nonce(job_id)
        mod = self.ctx.params.modulus

        if op == "mul":
            if b is None:
                raise InvalidParams("mul needs the right factor")
            key = sealcodec.derive_keys(self.secret, nonce, "mul", a.rows, mod)
            encoded, golden = sealcodec.encode_mul(a, b, key)
            encrypted = [be.encrypt_matrix(self.ctx, encoded.payload)]
            public: list[Matrix] = []
            if private_b:
                encrypted.append(be.encrypt_matrix(self.ctx, b))
            else:
                public.append(b)
            pending = _PendingJob("mul", key, golden, a.rows, 0, b)
        elif op == "add":
            if b is None:
                raise InvalidParams("add needs the right addend")
            key = sealcodec.derive_keys(self.secret, nonce, "add", a.rows, mod)
            enc_a, enc_b, golden = sealcodec.encode_add(a, b, key)
            encrypted = [
                be.encrypt_matrix(self.ctx, enc_a.payload),
                be.encrypt_matrix(self.ctx, enc_b.payload),
            ]
            public = []
            pending = _PendingJob("add", key, golden, a.rows, 0, None)
        elif op == "poly":
            key = sealcodec.derive_keys(self.secret, nonce, "poly", a.cols, mod)
            encoded, golden = sealcodec.encode_poly(a, exponent, key, allow_zero=allow_zero)
            encrypted = [be.encrypt_matrix(self.ctx, encoded.payload)]
            public = []
            pending = _PendingJob("poly", key, golden, a.rows, exponent, None)
        else:
            raise InvalidParams(f"unknown op {op!r}")

        self.pending[job_id] = pending
        self._inbox[job_id] = transport.request(Job(job_id, op, exponent, tuple(encrypted), tuple(public)))
        return job_id

    def receive(self, result: Message) -> tuple[Matrix, Verdict]:
        """Decrypt, strip checksum rows, verify; consumes the pending entry."""
        meta, c_star = self._open(result)
        verdict = self._judge(meta, c_star)
        return c_star.row_slice(0, meta.original_rows), verdict

    def collect(self, job_id: int) -> tuple[Matrix, Verdict]:
        """receive() on the inbox reply for job_id."""
        if job_id not in self._inbox:
            raise UnknownJob(f"no reply waiting for job {job_id}")
        return self.receive(self._inbox.pop(job_id))

    def _open(self, result: Message) -> tuple[_PendingJob, Matrix]:
        if isinstance(result, ErrorMsg):
            self.pending.pop(result.job_id, None)
            raise RemoteError(result.job_id, result.code, result.text)
        if not isinstance(result, Result):
            raise TransportError(f"unexpected reply {type(result).__name__}")
        meta = self.pending.pop(result.job_id, None)
        if meta is None:
            raise UnknownJob(f"job {result.job_id} is not pending")
        return meta, be.decrypt_matrix(self.ctx, result.encrypted)

    def _judge(self, meta: _PendingJob, c_star: Matrix) -> Verdict:
        assert meta.golden is not None
        if meta.op == "mul":
            assert meta.b_public is not None
            return sealcodec.verify_mul(c_star, meta.b_public, meta.key, meta.golden)
        if meta.op == "add":
            return sealcodec.verify_add(c_star, meta.key, meta.golden)
        return sealcodec.verify_poly(c_star, meta.exponent, meta.key, meta.golden)


def os_random_8() -> bytes:
    return os.urandom(8)


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class ConvLayer:
    """Convolution lowered to a multiplication job via im2col.

    ``weights`` holds one filter per row (filters x C*kh*kw); the patch matrix
    is transposed so the client's private activations form the left factor.
    """

    weights: Matrix
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class PolyLayer:
    exponent: int
    allow_zero: bool = True  # zero activations are legitimate mid-pipeline


@dataclass(frozen=True)
class DenseLayer:
    """Fully connected layer; ``weights`` is out_features x in_features."""

    weights: Matrix


Layer = Union[ConvLayer, PolyLayer, DenseLayer]


@dataclass(frozen=True)
class PipelineSpec:
    layers: tuple[Layer, ...]


@dataclass
class _Value:
    """Intermediate pipeline value: a matrix plus optional channel geometry."""

    matrix: Matrix
    conv_geom: tuple[int, int, int] | None = None  # (out_h, out_w, filters)

    def as_channels(self) -> list[Matrix]:
        if self.conv_geom is None:
            raise DimensionMismatch("layer needs channel geometry")
        out_h, out_w, filters = self.conv_geom
        return [
            Matrix(out_h, out_w, self.matrix.mod,
                   array("Q", (self.matrix.at(p, f) for p in range(out_h * out_w))))
            for f in range(filters)
        ]

    def flatten(self) -> Matrix:
        return self.matrix.reshape(1, self.matrix.rows * self.matrix.cols)


def _stack_channels(channels: Sequence[Matrix]) -> Matrix:
    if len(channels) == 1:
        return channels[0]
    stacked = channels[0].reshape(1, channels[0].rows * channels[0].cols)
    for ch in channels[1:]:
        stacked = stacked.stack(ch.reshape(1, ch.rows * ch.cols))
    return stacked


def _lower_layer(value: _Value, channels: list[Matrix] | None, layer: Layer):
    """Return (op, a, b, exponent, allow_zero, new_geom) for one layer."""
    if isinstance(layer, ConvLayer):
        chans = channels if channels is not None else value.as_channels()
        patches = ring.im2col(chans, layer.kernel_h, layer.kernel_w, layer.stride, layer.padding)
        h, w = chans[0].rows, chans[0].cols
        out_h = (h + 2 * layer.padding - layer.kernel_h) // layer.stride + 1
        out_w = (w + 2 * layer.padding - layer.kernel_w) // layer.stride + 1
        if layer.weights.cols != patches.rows:
            raise DimensionMismatch(
                f"conv weights expect {layer.weights.cols} patch rows, got {patches.rows}"
            )
        geom = (out_h, out_w, layer.weights.rows)
        return "mul", patches.transpose(), layer.weights.transpose(), 0, False, geom
    if isinstance(layer, PolyLayer):
        a = _stack_channels(channels) if channels is not None else value.matrix
        geom = value.conv_geom if channels is None else None
        return "poly", a, None, layer.exponent, layer.allow_zero, geom
    if channels is not None:
        stacked = _stack_channels(channels)
        flat = stacked.reshape(1, stacked.rows * stacked.cols)
    else:
        flat = value.flatten()
    if layer.weights.cols != flat.cols:
        raise DimensionMismatch(f"dense weights expect {layer.weights.cols} inputs, got {flat.cols}")
    return "mul", flat, layer.weights.transpose(), 0, False, None


def plaintext_pipeline(spec: PipelineSpec, input_channels: Sequence[Matrix]) -> Matrix:
    """Reference forward pass with plain ring operations (no protocol)."""
    value = _Value(_stack_channels(list(input_channels)))
    channels: list[Matrix] | None = list(input_channels)
    for layer in spec.layers:
        op, a, b, exponent, _zeros, geom = _lower_layer(value, channels, layer)
        if op == "mul":
            out = ring.mat_mul(a, b)
        else:
            out = ring.mat_pow_elementwise(a, exponent)
        value = _Value(out, geom)
        channels = None
    return value.matrix


def run_pipeline(
    session: ClientSession,
    spec: PipelineSpec,
    input_channels: Sequence[Matrix],
    transport,
    overlap: bool = False,
) -> tuple[Matrix, list[Verdict]]:
    """Run each layer as one verified job, re-encoding between layers.

    Aborts with LayerRejected at the first rejecting layer (1-based index).
    With ``overlap`` the next layer is submitted before the previous layer's
    verdict is computed; a rejection still discards everything after it.
    """
    if not input_channels:
        raise DimensionMismatch("pipeline needs an input")
    verdicts: list[Verdict] = []
    value = _Value(_stack_channels(list(input_channels)))
    channels: list[Matrix] | None = list(input_channels)

    deferred: tuple[int, _PendingJob, Matrix] | None = None  # (layer_idx, meta, c_star)
    for idx, layer in enumerate(spec.layers, start=1):
        op, a, b, exponent, allow_zero, geom = _lower_layer(value, channels, layer)
        job_id = session.submit(transport, op, a, b, exponent=exponent, allow_zero=allow_zero)
        if deferred is not None:
            d_idx, meta, c_star = deferred
            verdict = session._judge(meta, c_star)
            verdicts.append(verdict)
            if not verdict.accepted:
                # abort-before-commit: drop the job submitted past the rejection
                session.pending.pop(job_id, None)
                session._inbox.pop(job_id, None)
                raise LayerRejected(d_idx, verdict)
            deferred = None

        meta, c_star = session._open(session._inbox.pop(job_id))
        if overlap and idx < len(spec.layers):
            deferred = (idx, meta, c_star)
        else:
            verdict = session._judge(meta, c_star)
            verdicts.append(verdict)
            if not verdict.accepted:
                raise LayerRejected(idx, verdict)
        value = _Value(c_star.row_slice(0, meta.original_rows), geom)
        channels = None
    return value.matrix, verdicts
