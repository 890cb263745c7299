"""Checksum codec: key derivation, encode/verify for all three operations,
deterministic soundness, and the insecure column-sum baseline."""

from __future__ import annotations

import random

import pytest

from dataseal import ring, sealcodec as sc
from dataseal.errors import DimensionMismatch, InvalidExponent, InvalidParams, ZeroEntryError
from dataseal.ring import Matrix, ModulusConfig
from conftest import as_matrix

SECRET = sc.ClientSecret(bytes(range(16)))
NONCE = sc.SessionNonce(bytes(16))


def key97(vk, alpha=5):
    return sc.VerificationKey(tuple(vk), alpha, ModulusConfig(97, allow_small=True))


class TestTypes:
    def test_secret_length_enforced(self):
        with pytest.raises(InvalidParams):
            sc.ClientSecret(b"short")
        assert sc.ClientSecret.from_hex("00" * 16).key == bytes(16)
        assert "ClientSecret" in repr(SECRET) and "00" not in repr(SECRET)

    def test_nonce_length_enforced(self):
        with pytest.raises(InvalidParams):
            sc.SessionNonce(b"123")

    def test_verification_key_ranges(self, mod97):
        with pytest.raises(InvalidParams):
            sc.VerificationKey((0, 1), 2, mod97)  # zero weight blinds a row
        with pytest.raises(InvalidParams):
            sc.VerificationKey((1, 1), 1, mod97)  # alpha 1 collapses the two rows
        with pytest.raises(InvalidParams):
            sc.VerificationKey((1,), 97, mod97)
        toy = ModulusConfig(2, allow_small=True)
        assert sc.VerificationKey((1,), 1, toy).alpha == 1  # [2, 2) is empty

    def test_verdict_consistency(self):
        with pytest.raises(InvalidParams):
            sc.Verdict(accepted=True, failed_checks=(sc.Check.GOLDEN_OUTPUT,))
        verdict = sc.Verdict.from_failures({sc.Check.GOLDEN_OUTPUT: 3})
        assert not verdict.accepted and verdict.first_mismatch[sc.Check.GOLDEN_OUTPUT] == 3

    def test_encoded_matrix_row_budget(self, mod97):
        payload = as_matrix([[1, 2], [3, 4], [5, 6]], mod97)
        with pytest.raises(DimensionMismatch):
            sc.EncodedMatrix(payload, 2, 1, sc.OpTag.MUL_LEFT)  # mul carries 2 rows


class TestDeriveKeys:
    def test_deterministic(self, mod_default):
        k1 = sc.derive_keys(SECRET, NONCE, "mul", 5, mod_default)
        k2 = sc.derive_keys(SECRET, NONCE, "mul", 5, mod_default)
        assert k1 == k2

    def test_ranges(self, mod97):
        key = sc.derive_keys(SECRET, NONCE, "mul", 3, mod97)
        assert all(1 <= w < 97 for w in key.vk)
        assert 2 <= key.alpha < 97

    def test_distinct_nonces_differ(self, mod_default):
        seen = set()
        for i in range(100):
            nonce = sc.SessionNonce(i.to_bytes(16, "little"))
            key = sc.derive_keys(SECRET, nonce, "mul", 4, mod_default)
            assert key.vk not in seen
            seen.add(key.vk)

    def test_tag_and_length_separate_domains(self, mod_default):
        k_mul = sc.derive_keys(SECRET, NONCE, "mul", 4, mod_default)
        k_add = sc.derive_keys(SECRET, NONCE, "add", 4, mod_default)
        assert k_mul.vk != k_add.vk

    def test_two_secrets_give_different_keys(self, mod_default):
        rng = random.Random(0)
        differ = 0
        for _ in range(50):
            s1 = sc.ClientSecret(rng.randbytes(16))
            s2 = sc.ClientSecret(rng.randbytes(16))
            if (
                sc.derive_keys(s1, NONCE, "mul", 4, mod_default).vk
                != sc.derive_keys(s2, NONCE, "mul", 4, mod_default).vk
            ):
                differ += 1
        assert differ == 50

    def test_invalid_length(self, mod_default):
        with pytest.raises(InvalidParams):
            sc.derive_keys(SECRET, NONCE, "mul", 0, mod_default)


class TestEncodeMul:
    def test_worked_example(self, mod97):
        a = as_matrix([[3, 1], [1, 5]], mod97)
        b = as_matrix([[8, 6], [7, 10]], mod97)
        encoded, golden = sc.encode_mul(a, b, key97([2, 3]))
        assert encoded.payload.to_rows() == [[3, 1], [1, 5], [9, 17], [45, 85]]
        assert encoded.original_rows == 2 and encoded.appended_rows == 2
        assert golden.values == (82, 53)
        assert not golden.is_zero

    def test_all_ones_checksum_row_is_column_sum(self, mod97):
        a = as_matrix([[3, 1], [1, 5]], mod97)
        encoded, _ = sc.encode_mul(a, Matrix.identity(2, mod97), key97([1, 1]))
        assert encoded.payload.row(2) == [4, 6]

    def test_dimension_checks(self, mod97):
        a = as_matrix([[1, 2]], mod97)
        with pytest.raises(DimensionMismatch):
            sc.encode_mul(a, as_matrix([[1, 2]], mod97), key97([2]))
        with pytest.raises(DimensionMismatch):
            sc.encode_mul(a, as_matrix([[1], [2]], mod97), key97([2, 3]))


class TestVerifyMul:
    def _setup(self, mod97):
        a = as_matrix([[3, 1], [1, 5]], mod97)
        b = as_matrix([[8, 6], [7, 10]], mod97)
        key = key97([2, 3])
        encoded, golden = sc.encode_mul(a, b, key)
        return ring.mat_mul(encoded.payload, b), b, key, golden

    def test_honest_accepts(self, mod97):
        c_star, b, key, golden = self._setup(mod97)
        assert c_star.row(2) == [94, 30]  # vk @ C
        assert c_star.row(3) == [82, 53]  # golden image
        assert sc.verify_mul(c_star, b, key, golden).accepted

    def test_single_element_tamper_fails_weighted(self, mod97):
        c_star, b, key, golden = self._setup(mod97)
        tampered = c_star.copy()
        tampered.data[0] = (tampered.data[0] + 1) % 97  # vk @ C col 0: 94 -> 96
        verdict = sc.verify_mul(tampered, b, key, golden)
        assert verdict.failed_checks == (sc.Check.WEIGHTED_CHECKSUM,)
        assert verdict.first_mismatch[sc.Check.WEIGHTED_CHECKSUM] == 0

    def test_scaling_fails_golden(self, mod97):
        c_star, b, key, golden = self._setup(mod97)
        scaled = ring.scale_matrix(2, c_star)
        verdict = sc.verify_mul(scaled, b, key, golden)
        assert sc.Check.GOLDEN_OUTPUT in verdict.failed_checks
        assert sc.Check.WEIGHTED_CHECKSUM not in verdict.failed_checks


class TestEncodeVerifyAdd:
    def test_worked_example(self, mod97):
        a = as_matrix([[1, 2], [3, 4]], mod97)
        b = as_matrix([[5, 6], [7, 8]], mod97)
        enc_a, enc_b, golden = sc.encode_add(a, b, key97([2, 3]))
        assert enc_a.payload.row(2) == [11, 16]
        assert enc_b.payload.row(2) == [31, 36]
        assert golden.values == (42, 52)
        c_star = ring.mat_add(enc_a.payload, enc_b.payload)
        assert sc.verify_add(c_star, key97([2, 3]), golden).accepted

    def test_zero_addend_keeps_checksum(self, mod97):
        a = as_matrix([[1, 2], [3, 4]], mod97)
        enc_a, _, golden = sc.encode_add(a, Matrix.zeros(2, 2, mod97), key97([2, 3]))
        assert golden.values == tuple(enc_a.payload.row(2))

    def test_all_ones_reduces_to_column_sums(self, mod97):
        a = as_matrix([[1, 2], [3, 4]], mod97)
        b = as_matrix([[5, 6], [7, 8]], mod97)
        _, _, golden = sc.encode_add(a, b, key97([1, 1]))
        assert list(golden.values) == [6 + 10, 8 + 12]

    def test_tamper_and_scale(self, mod97):
        a = as_matrix([[1, 2], [3, 4]], mod97)
        b = as_matrix([[5, 6], [7, 8]], mod97)
        key = key97([2, 3])
        enc_a, enc_b, golden = sc.encode_add(a, b, key)
        c_star = ring.mat_add(enc_a.payload, enc_b.payload)

        tampered = c_star.copy()
        tampered.data[1 * 2 + 1] = (tampered.data[3] + 5) % 97
        assert sc.verify_add(tampered, key, golden).failed_checks == (sc.Check.WEIGHTED_CHECKSUM,)

        doubled = ring.scale_matrix(2, c_star)
        verdict = sc.verify_add(doubled, key, golden)
        assert sc.Check.GOLDEN_OUTPUT in verdict.failed_checks
        assert verdict.first_mismatch[sc.Check.GOLDEN_OUTPUT] == 0  # 84 != 42


class TestEncodeVerifyPoly:
    def test_worked_example(self, mod97):
        a = as_matrix([[2, 3], [4, 5]], mod97)
        key = key97([3, 7])
        encoded, golden = sc.encode_poly(a, 2, key)
        assert encoded.payload.row(2) == [24, 8]
        assert golden.values == (91, 64)
        c_star = ring.mat_pow_elementwise(encoded.payload, 2)
        assert sc.verify_poly(c_star, 2, key, golden).accepted

    def test_identity_exponent(self, mod97):
        a = as_matrix([[2, 3], [4, 5]], mod97)
        key = key97([3, 7])
        encoded, golden = sc.encode_poly(a, 1, key)
        assert golden.values == tuple(encoded.payload.row(2))
        assert sc.verify_poly(encoded.payload, 1, key, golden).accepted

    def test_tamper_detected(self, mod97):
        a = as_matrix([[2, 3], [4, 5]], mod97)
        key = key97([3, 7])
        encoded, golden = sc.encode_poly(a, 2, key)
        c_star = ring.mat_pow_elementwise(encoded.payload, 2)
        tampered = c_star.copy()
        tampered.data[0] = 5  # 4 -> 5; 9*(5*16) mod 97 = 41 != 91
        verdict = sc.verify_poly(tampered, 2, key, golden)
        assert verdict.failed_checks == (sc.Check.WEIGHTED_CHECKSUM,)

    def test_zero_entry_hard_error_and_waiver(self, mod97):
        a = as_matrix([[2, 0], [4, 5]], mod97)
        key = key97([3, 7])
        with pytest.raises(ZeroEntryError):
            sc.encode_poly(a, 2, key)
        with pytest.warns(sc.ZeroColumnWarning):
            encoded, golden = sc.encode_poly(a, 2, key, allow_zero=True)
        assert encoded.payload.row(2)[1] == 0 and golden.values[1] == 0

    def test_bad_exponent(self, mod97):
        with pytest.raises(InvalidExponent):
            sc.encode_poly(as_matrix([[1]], mod97), 0, key97([3]))


class TestDeterministicSoundness:
    """Single-element additive tampers are always rejected: the weighted
    checksum moves by vk_i * delta, nonzero for prime m."""

    def test_exhaustive_all_deltas_m97(self, mod97):
        rng = random.Random(12)
        a = Matrix.random(2, 2, mod97, rng)
        b = Matrix.random(2, 2, mod97, rng)
        key = sc.derive_keys(SECRET, NONCE, "mul", 2, mod97)
        encoded, golden = sc.encode_mul(a, b, key)
        honest = ring.mat_mul(encoded.payload, b)
        for pos in range(4):  # every data cell of the 2x2 result
            for delta in range(1, 97):
                tampered = honest.copy()
                tampered.data[pos] = (tampered.data[pos] + delta) % 97
                assert not sc.verify_mul(tampered, b, key, golden).accepted

    def test_exhaustive_add_and_poly_m97(self, mod97):
        rng = random.Random(13)
        a = Matrix.random(2, 2, mod97, rng, nonzero=True)
        b = Matrix.random(2, 2, mod97, rng)
        key = sc.derive_keys(SECRET, NONCE, "add", 2, mod97)
        enc_a, enc_b, golden = sc.encode_add(a, b, key)
        honest = ring.mat_add(enc_a.payload, enc_b.payload)
        for pos in range(4):
            for delta in range(1, 97):
                tampered = honest.copy()
                tampered.data[pos] = (tampered.data[pos] + delta) % 97
                assert not sc.verify_add(tampered, key, golden).accepted

        key_p = sc.derive_keys(SECRET, NONCE, "poly", 2, mod97)
        encoded, golden_p = sc.encode_poly(a, 2, key_p)
        honest_p = ring.mat_pow_elementwise(encoded.payload, 2)
        for pos in range(4):
            for delta in range(1, 97):
                tampered = honest_p.copy()
                tampered.data[pos] = (tampered.data[pos] + delta) % 97
                assert not sc.verify_poly(tampered, 2, key_p, golden_p).accepted


class TestCompleteness:
    def test_randomized_honest_never_rejects(self, mod_default):
        rng = random.Random(14)
        for trial in range(300):
            op = ("mul", "add", "poly")[trial % 3]
            n = rng.randint(1, 16)
            nonce = sc.SessionNonce(rng.randbytes(16))
            if op == "mul":
                a = Matrix.random(n, n, mod_default, rng)
                b = Matrix.random(n, n, mod_default, rng)
                key = sc.derive_keys(SECRET, nonce, "mul", n, mod_default)
                encoded, golden = sc.encode_mul(a, b, key)
                c_star = ring.mat_mul(encoded.payload, b)
                verdict = sc.verify_mul(c_star, b, key, golden)
                assert c_star.row_slice(0, n) == ring.mat_mul(a, b)
            elif op == "add":
                a = Matrix.random(n, n, mod_default, rng)
                b = Matrix.random(n, n, mod_default, rng)
                key = sc.derive_keys(SECRET, nonce, "add", n, mod_default)
                enc_a, enc_b, golden = sc.encode_add(a, b, key)
                c_star = ring.mat_add(enc_a.payload, enc_b.payload)
                verdict = sc.verify_add(c_star, key, golden)
                assert c_star.row_slice(0, n) == ring.mat_add(a, b)
            else:
                a = Matrix.random(n, n, mod_default, rng, nonzero=True)
                key = sc.derive_keys(SECRET, nonce, "poly", n, mod_default)
                encoded, golden = sc.encode_poly(a, 3, key)
                c_star = ring.mat_pow_elementwise(encoded.payload, 3)
                verdict = sc.verify_poly(c_star, 3, key, golden)
                assert c_star.row_slice(0, n) == ring.mat_pow_elementwise(a, 3)
            assert verdict.accepted

    def test_space_overhead_counts(self, mod_default):
        rng = random.Random(15)
        for n in range(2, 65):
            a = Matrix.random(n, n, mod_default, rng, nonzero=True)
            b = Matrix.random(n, n, mod_default, rng)
            key = sc.derive_keys(SECRET, NONCE, "mul", n, mod_default)
            enc_mul, _ = sc.encode_mul(a, b, key)
            assert enc_mul.appended_rows == 2 and enc_mul.payload.rows == n + 2
            key = sc.derive_keys(SECRET, NONCE, "add", n, mod_default)
            enc_a, enc_b, _ = sc.encode_add(a, b, key)
            assert enc_a.appended_rows == enc_b.appended_rows == 1
            key = sc.derive_keys(SECRET, NONCE, "poly", n, mod_default)
            enc_p, _ = sc.encode_poly(a, 2, key)
            assert enc_p.appended_rows == 1


class TestBaseline:
    def test_honest_column_sums(self, mod97):
        a = as_matrix([[3, 1], [1, 5]], mod97)
        b = as_matrix([[8, 6], [7, 10]], mod97)
        encoded, golden = sc.encode_abft_baseline(a, "mul", b)
        assert golden is None
        assert encoded.payload.row(2) == [4, 6]
        c_star = ring.mat_mul(encoded.payload, b)
        assert c_star.row(2) == [74, 84]  # 74 = 31 + 43
        assert sc.verify_abft_baseline(c_star, "mul").accepted

    def test_consistent_bypass_accepted(self, mod97):
        a = as_matrix([[3, 1], [1, 5]], mod97)
        b = as_matrix([[8, 6], [7, 10]], mod97)
        encoded, _ = sc.encode_abft_baseline(a, "mul", b)
        tampered = encoded.payload.copy()
        tampered.data[0] = 4  # data edit
        tampered.data[4] = 5  # matching checksum edit
        c_star = ring.mat_mul(Matrix(3, 2, mod97, tampered.data), b)
        assert c_star.at(0, 0) == 39 and c_star.at(2, 0) == 82
        assert sc.verify_abft_baseline(c_star, "mul").accepted  # the bypass

    def test_same_attack_rejected_with_keys(self, mod97):
        a = as_matrix([[3, 1], [1, 5]], mod97)
        b = as_matrix([[8, 6], [7, 10]], mod97)
        key = key97([2, 3])
        encoded, golden = sc.encode_mul(a, b, key)
        tampered = encoded.payload.copy()
        tampered.data[0] = (tampered.data[0] + 1) % 97
        tampered.data[4] = (tampered.data[4] + 1) % 97  # +1 guess on the checksum row
        c_star = ring.mat_mul(Matrix(4, 2, mod97, tampered.data), b)
        verdict = sc.verify_mul(c_star, b, key, golden)
        assert verdict.failed_checks == (sc.Check.WEIGHTED_CHECKSUM,)
        weighted = ring.vec_mat_mul(key.vk_row(), c_star.row_slice(0, 2))
        assert weighted.at(0, 0) == 13 and c_star.at(2, 0) == 5

    def test_baseline_add_and_poly(self, mod97):
        rng = random.Random(16)
        a = Matrix.random(3, 3, mod97, rng, nonzero=True)
        b = Matrix.random(3, 3, mod97, rng)
        enc_a, _ = sc.encode_abft_baseline(a, "add")
        enc_b, _ = sc.encode_abft_baseline(b, "add")
        assert sc.verify_abft_baseline(ring.mat_add(enc_a.payload, enc_b.payload), "add").accepted
        enc_p, _ = sc.encode_abft_baseline(a, "poly")
        assert sc.verify_abft_baseline(ring.mat_pow_elementwise(enc_p.payload, 2), "poly", 2).accepted
