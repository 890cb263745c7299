"""Tamper strategies, campaign bookkeeping, the forgery game, and the pinned
column-sum bypass replay."""

from __future__ import annotations

import random

import pytest

from dataseal import adversary as adv, backend as be, ring, sealcodec as sc
from dataseal.errors import InvalidParams, ShapeMismatch
from dataseal.ring import Matrix, ModulusConfig
from conftest import as_matrix


def encrypted_result(mod, rows_data, checksum_rows, slot_count=8):
    ctx = be.keygen(be.BackendParams(modulus=mod, slot_count=slot_count))
    payload = as_matrix(rows_data + checksum_rows, mod)
    return be.encrypt_matrix(ctx, payload), ctx


class TestApplyTamper:
    def test_passthrough_is_identity(self, mod97):
        result, _ = encrypted_result(mod97, [[1, 2], [3, 4]], [[4, 6]])
        out = adv.apply_tamper(result, adv.Passthrough(), random.Random(0),
                               data_rows=2, op="mul", modulus=97)
        assert out is result

    def test_element_edit_definition(self, mod97):
        result, ctx = encrypted_result(mod97, [[31, 28], [43, 56]], [[94, 30], [82, 53]])
        out = adv.apply_tamper(result, adv.ElementEdit(0, 0, 1), random.Random(0),
                               data_rows=2, op="mul", modulus=97)
        got = be.decrypt_matrix(ctx, out)
        assert got.at(0, 0) == 32
        assert got.row(1) == [43, 56] and got.row(2) == [94, 30]

    def test_element_edit_validates(self, mod97):
        result, _ = encrypted_result(mod97, [[1, 2]], [[1, 2]])
        with pytest.raises(ShapeMismatch):
            adv.apply_tamper(result, adv.ElementEdit(1, 0, 1), random.Random(0),
                             data_rows=1, op="add", modulus=97)
        with pytest.raises(InvalidParams):
            adv.apply_tamper(result, adv.ElementEdit(0, 0, 97), random.Random(0),
                             data_rows=1, op="add", modulus=97)

    def test_scale_doubles_everything(self, mod97):
        result, ctx = encrypted_result(mod97, [[1, 2], [3, 4]], [[4, 6]])
        out = adv.apply_tamper(result, adv.MatrixScale(2), random.Random(0),
                               data_rows=2, op="add", modulus=97)
        assert be.decrypt_matrix(ctx, out).to_rows() == [[2, 4], [6, 8], [8, 12]]

    def test_overwrite_touches_one_data_row_only(self, mod97):
        result, ctx = encrypted_result(mod97, [[1, 2], [3, 4]], [[4, 6]])
        out = adv.apply_tamper(result, adv.HonestThenOverwrite(row=1), random.Random(1),
                               data_rows=2, op="add", modulus=97)
        got = be.decrypt_matrix(ctx, out)
        assert got.row(0) == [1, 2] and got.row(2) == [4, 6]
        assert got.row(1) != [3, 4]

    def test_joint_forge_is_all_ones_consistent(self, mod97):
        result, ctx = encrypted_result(mod97, [[1, 2], [3, 4]], [[4, 6]])
        out = adv.apply_tamper(result, adv.JointForge(), random.Random(2),
                               data_rows=2, op="mul", modulus=97)
        got = be.decrypt_matrix(ctx, out)
        sums = [(got.at(0, j) + got.at(1, j)) % 97 for j in range(2)]
        assert got.row(2) == sums
        assert got.row_slice(0, 2).to_rows() != [[1, 2], [3, 4]]

    def test_forge_changes_data_and_checksums(self, mod97):
        result, ctx = encrypted_result(mod97, [[1, 2], [3, 4]], [[4, 6]])
        out = adv.apply_tamper(result, adv.ChecksumForge(), random.Random(3),
                               data_rows=2, op="add", modulus=97)
        got = be.decrypt_matrix(ctx, out)
        assert got.row_slice(0, 2).to_rows() != [[1, 2], [3, 4]]


class TestCampaign:
    def test_deterministic_given_seed(self):
        cfg = adv.CampaignConfig(trials=5, sizes=(2, 3), seed=42,
                                 strategies=(adv.Passthrough(), adv.ElementEdit()))
        assert adv.run_campaign(cfg).rows() == adv.run_campaign(cfg).rows()

    def test_passthrough_is_completeness_control(self):
        cfg = adv.CampaignConfig(trials=30, sizes=(2, 5), seed=1,
                                 strategies=(adv.Passthrough(),))
        stats = adv.run_campaign(cfg)
        total = stats.totals("passthrough")
        assert total.trials == 30 * 2 * 3
        assert total.detections == 0 and total.false_accepts == 0

    def test_element_edit_and_overwrite_always_detected(self):
        cfg = adv.CampaignConfig(trials=40, sizes=(2, 4, 8), seed=2,
                                 strategies=(adv.ElementEdit(), adv.HonestThenOverwrite()))
        stats = adv.run_campaign(cfg)
        for name in ("element", "overwrite"):
            totals = stats.totals(name)
            assert totals.detections == totals.trials
            assert totals.false_accepts == 0

    def test_scale_attributes_to_golden_output(self):
        cfg = adv.CampaignConfig(trials=40, sizes=(2, 4), seed=3,
                                 strategies=(adv.MatrixScale(),))
        stats = adv.run_campaign(cfg)
        totals = stats.totals("scale")
        assert totals.detections == totals.trials - totals.degenerate_golden
        assert totals.degenerate_golden == 0
        assert totals.attribution.get("GOLDEN_OUTPUT", 0) == totals.trials

    def test_element_edit_attributes_to_weighted_checksum(self):
        cfg = adv.CampaignConfig(trials=30, sizes=(3,), seed=4,
                                 strategies=(adv.ElementEdit(),))
        stats = adv.run_campaign(cfg)
        totals = stats.totals("element")
        assert totals.attribution.get("WEIGHTED_CHECKSUM", 0) == totals.trials

    def test_baseline_joint_forge_always_bypasses(self):
        cfg = adv.CampaignConfig(trials=30, sizes=(2, 4), seed=5, scheme="abft",
                                 strategies=(adv.JointForge(),))
        stats = adv.run_campaign(cfg)
        totals = stats.totals("joint")
        assert totals.false_accepts == totals.trials

    def test_dataseal_joint_forge_rejected(self):
        cfg = adv.CampaignConfig(trials=30, sizes=(2, 4), seed=6,
                                 strategies=(adv.JointForge(),))
        stats = adv.run_campaign(cfg)
        totals = stats.totals("joint")
        assert totals.false_accepts == 0 and totals.detections == totals.trials

    def test_stats_invariant_detections_plus_accepts(self):
        cfg = adv.CampaignConfig(trials=10, sizes=(2,), seed=7)
        stats = adv.run_campaign(cfg)
        for cell in stats.cells.values():
            accepted = cell.trials - cell.detections
            assert cell.detections + accepted == cell.trials

    def test_csv_header_pinned(self, tmp_path):
        cfg = adv.CampaignConfig(trials=2, sizes=(2, 3), seed=8,
                                 strategies=(adv.Passthrough(),))
        stats = adv.run_campaign(cfg)
        out = tmp_path / "stats.csv"
        adv.write_stats_csv(stats, str(out))
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "scheme,strategy,op,size,trials,detections,false_accepts"
        assert len(lines) == 1 + len(stats.cells)
        assert lines[1].startswith("dataseal,passthrough,add,2,2,0,0")

    def test_bad_config(self):
        with pytest.raises(InvalidParams):
            adv.CampaignConfig(trials=0)
        with pytest.raises(InvalidParams):
            adv.CampaignConfig(scheme="nope")


class TestForgeryGame:
    def test_zero_wins_at_production_modulus(self):
        res = adv.forgery_game(3000, modulus=65537, cols=4, seed=0)
        assert res.wins == 0
        assert res.identical_forgeries == 0

    def test_toy_calibration_half(self):
        res = adv.forgery_game(10_000, modulus=2, cols=1, rows=8, seed=1)
        assert abs(res.win_rate - 0.5) <= 0.05

    def test_key_holding_control_always_wins(self):
        res = adv.forgery_game(100, modulus=65537, cols=2, seed=2, adversary_knows_key=True)
        assert res.win_rate == 1.0

    def test_trials_validated(self):
        with pytest.raises(InvalidParams):
            adv.forgery_game(0, modulus=65537, cols=2)


class TestBypassReplay:
    def test_pinned_constants(self):
        replay = adv.column_sum_bypass_replay()
        assert replay.honest_c[0][0] == 31
        assert replay.honest_c[1][0] == 43
        assert replay.honest_checksum[0] == 74  # 31 + 43
        assert replay.tampered_c[0][0] == 39
        assert replay.tampered_checksum[0] == 82  # 39 + 43
        assert replay.baseline_verdict.accepted
        assert replay.keyed_verdict.failed_checks == (sc.Check.WEIGHTED_CHECKSUM,)
        assert replay.keyed_weighted_col0 == 13 and replay.keyed_guess_col0 == 5

    def test_transcript_mentions_both_outcomes(self):
        text = adv.column_sum_bypass_replay().transcript()
        assert "ACCEPT" in text and "REJECT" in text
