"""Shared fixtures and independent oracles.

The oracles here are deliberately naive (Python-int schoolbook loops over
lists) and never call into the package's kernels, so they stay independent
of the code paths they check.
"""

from __future__ import annotations

import random

import pytest

from dataseal import backend as be
from dataseal import protocol as pr
from dataseal.ring import Matrix, ModulusConfig
from dataseal.sealcodec import ClientSecret


@pytest.fixture
def mod97() -> ModulusConfig:
    return ModulusConfig(97, allow_small=True)


@pytest.fixture
def mod_default() -> ModulusConfig:
    return ModulusConfig(65537)


def schoolbook_matmul(a: list[list[int]], b: list[list[int]], m: int) -> list[list[int]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    assert len(a[0]) == inner
    return [
        [sum(a[i][k] * b[k][j] for k in range(inner)) % m for j in range(cols)]
        for i in range(rows)
    ]


def schoolbook_add(a: list[list[int]], b: list[list[int]], m: int) -> list[list[int]]:
    return [[(x + y) % m for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def schoolbook_pow(a: list[list[int]], n: int, m: int) -> list[list[int]]:
    return [[pow(x, n, m) for x in row] for row in a]


def schoolbook_vecmat(v: list[int], a: list[list[int]], m: int) -> list[int]:
    return [sum(v[i] * a[i][j] for i in range(len(a))) % m for j in range(len(a[0]))]


def direct_conv(
    channels: list[list[list[int]]],
    kernels: list[list[list[list[int]]]],  # [filter][channel][kh][kw]
    stride: int,
    padding: int,
    m: int,
) -> list[list[list[int]]]:
    """Sliding-window convolution, one output map per filter."""
    h, w = len(channels[0]), len(channels[0][0])
    kh, kw = len(kernels[0][0]), len(kernels[0][0][0])
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    out = []
    for filt in kernels:
        plane = []
        for oy in range(out_h):
            row = []
            for ox in range(out_w):
                acc = 0
                for c, chan in enumerate(channels):
                    for dy in range(kh):
                        for dx in range(kw):
                            iy = oy * stride + dy - padding
                            ix = ox * stride + dx - padding
                            if 0 <= iy < h and 0 <= ix < w:
                                acc += filt[c][dy][dx] * chan[iy][ix]
                row.append(acc % m)
            plane.append(row)
        out.append(plane)
    return out


def random_rows(rng: random.Random, rows: int, cols: int, m: int, lo: int = 0) -> list[list[int]]:
    return [[rng.randrange(lo, m) for _ in range(cols)] for _ in range(rows)]


def make_pair(mod: ModulusConfig, slot_count: int = 16, max_depth: int = 16,
              interceptor=None, secret: bytes = b"\x01" * 16, session_id: bytes = b"\x02" * 8):
    """In-process client session + transport sharing one backend context."""
    ctx = be.keygen(be.BackendParams(modulus=mod, slot_count=slot_count, max_depth=max_depth))
    transport = pr.InProcessTransport(pr.ServerCore(ctx, result_interceptor=interceptor))
    session = pr.ClientSession(ClientSecret(secret), ctx, session_id=session_id)
    return session, transport, ctx


def as_matrix(rows: list[list[int]], mod: ModulusConfig) -> Matrix:
    return Matrix.from_rows(rows, mod)
