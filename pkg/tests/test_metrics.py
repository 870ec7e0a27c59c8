import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import decomcam.metrics as metrics_mod
from decomcam.errors import InvalidArgumentError
from decomcam.metrics import (
    IOU_THRESHOLDS,
    TAU_GRID,
    AnnotatedSample,
    AttributeVerdict,
    BBox,
    CausalSample,
    attribute_hit_frequency,
    attribute_hits,
    binarize_and_box,
    box_acc,
    causal_curves,
    hit_rate,
    iou,
    max_box_acc_v2,
    normalized_auc,
    pointing_game,
    stratified_causal_report,
)
from decomcam.sampledata import planted_image, planted_model

from oracles import oracle_box, oracle_iou


def _sample(saliency, boxes, sample_id="s"):
    return AnnotatedSample(sample_id=sample_id, saliency=np.asarray(saliency, np.float32), gt_boxes=boxes)


def _box_map(h, w, box, value=1.0):
    m = np.zeros((h, w), dtype=np.float32)
    m[int(box.y1) : int(box.y2), int(box.x1) : int(box.x2)] = value
    return m


class TestBinarizeAndBox:
    def test_single_block(self):
        m = np.zeros((5, 5), dtype=np.float32)
        m[1:3, 1:3] = 1.0
        box = binarize_and_box(m, 0.5)
        assert (box.x1, box.y1, box.x2, box.y2) == (1.0, 1.0, 3.0, 3.0)

    def test_larger_blob_wins(self):
        m = np.zeros((8, 8), dtype=np.float32)
        m[0:3, 0:3] = 1.0  # area 9
        m[5:7, 5:7] = 1.0  # area 4
        box = binarize_and_box(m, 0.5)
        assert (box.x1, box.y1, box.x2, box.y2) == oracle_box(m, 0.5)

    def test_none_when_below_threshold(self):
        assert binarize_and_box(np.full((4, 4), 0.2, dtype=np.float32), 0.5) is None

    def test_diagonal_pixels_connect(self):
        m = np.zeros((4, 4), dtype=np.float32)
        m[0, 0] = m[1, 1] = m[2, 2] = 1.0
        box = binarize_and_box(m, 0.5)
        assert (box.x1, box.y1, box.x2, box.y2) == (0.0, 0.0, 3.0, 3.0)

    def test_area_monotone_in_tau(self):
        rng = np.random.default_rng(0)
        m = rng.uniform(size=(10, 10)).astype(np.float32)
        last_area = None
        for tau in (0.1, 0.3, 0.5, 0.7, 0.9):
            box = binarize_and_box(m, tau)
            mask = m > tau
            if box is None:
                break
            from oracles import flood_components

            area = max(len(c) for c in flood_components(mask))
            if last_area is not None:
                assert area <= last_area
            last_area = area

    def test_matches_oracle_on_random_maps(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            m = rng.uniform(size=(9, 9)).astype(np.float32)
            for tau in (0.2, 0.5, 0.8):
                ours = binarize_and_box(m, tau)
                expected = oracle_box(m, tau)
                if expected is None:
                    assert ours is None
                else:
                    assert (ours.x1, ours.y1, ours.x2, ours.y2) == expected

    def test_bad_tau(self):
        with pytest.raises(InvalidArgumentError):
            binarize_and_box(np.zeros((3, 3), dtype=np.float32), 1.0)


class TestIou:
    def test_identical(self):
        b = BBox(0, 0, 4, 4)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 2, 2), BBox(3, 3, 5, 5)) == 0.0

    def test_closed_form(self):
        assert iou(BBox(0, 0, 4, 4), BBox(2, 2, 6, 6)) == pytest.approx(1 / 7)

    def test_matches_pixel_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            x1, y1 = rng.integers(0, 5, size=2)
            x2, y2 = x1 + rng.integers(1, 6), y1 + rng.integers(1, 6)
            u1, v1 = rng.integers(0, 5, size=2)
            u2, v2 = u1 + rng.integers(1, 6), v1 + rng.integers(1, 6)
            a, b = BBox(x1, y1, x2, y2), BBox(u1, v1, u2, v2)
            assert iou(a, b) == oracle_iou((x1, y1, x2, y2), (u1, v1, u2, v2))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 8), st.integers(0, 8), st.integers(1, 8), st.integers(1, 8),
           st.integers(0, 8), st.integers(0, 8), st.integers(1, 8), st.integers(1, 8))
    def test_symmetry(self, x1, y1, w1, h1, x2, y2, w2, h2):
        a = BBox(x1, y1, x1 + w1, y1 + h1)
        b = BBox(x2, y2, x2 + w2, y2 + h2)
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0

    def test_degenerate_box_rejected(self):
        with pytest.raises(InvalidArgumentError):
            BBox(2, 2, 2, 4)


class TestBoxAcc:
    def test_perfect(self):
        box = BBox(2, 2, 6, 6)
        samples = [_sample(_box_map(8, 8, box), [box], f"s{i}") for i in range(4)]
        assert box_acc(samples, 0.5, 0.5) == 1.0

    def test_three_of_ten(self):
        good = BBox(1, 1, 5, 5)
        bad = BBox(10, 10, 14, 14)
        samples = []
        for i in range(10):
            target = good if i < 3 else bad
            samples.append(_sample(_box_map(16, 16, good), [target], f"s{i}"))
        assert box_acc(samples, 0.5, 0.5) == pytest.approx(0.3)

    def test_none_prediction_is_miss(self):
        samples = [_sample(np.zeros((6, 6), np.float32), [BBox(0, 0, 2, 2)])]
        assert box_acc(samples, 0.5, 0.5) == 0.0

    def test_empty_set_rejected(self):
        with pytest.raises(InvalidArgumentError):
            box_acc([], 0.5, 0.5)

    def test_best_matching_gt_box(self):
        pred_box = BBox(0, 0, 4, 4)
        other = BBox(8, 8, 12, 12)
        samples = [_sample(_box_map(12, 12, pred_box), [other, pred_box])]
        assert box_acc(samples, 0.5, 0.5) == 1.0


class TestMaxBoxAccV2:
    def test_perfect_binary_map(self):
        box = BBox(3, 2, 9, 7)
        samples = [_sample(_box_map(12, 12, box), [box])]
        assert max_box_acc_v2(samples) == 1.0

    def test_grid_exactly_sixty_calls(self, monkeypatch):
        calls = []
        original = metrics_mod.box_acc

        def counting(samples, tau, delta):
            calls.append((tau, delta))
            return original(samples, tau, delta)

        monkeypatch.setattr(metrics_mod, "box_acc", counting)
        box = BBox(1, 1, 4, 4)
        metrics_mod.max_box_acc_v2([_sample(_box_map(6, 6, box), [box])])
        assert len(calls) == 60
        assert sorted({d for _, d in calls}) == [0.3, 0.5, 0.7]
        assert len({t for t, _ in calls}) == 20

    def test_only_loosest_threshold_succeeds(self):
        # saliency box with IoU ~0.4 against gt: passes delta=0.3 only
        gt = BBox(0, 0, 10, 4)
        pred_region = BBox(0, 0, 4, 4)  # IoU = 16/40 = 0.4
        samples = [_sample(_box_map(12, 12, pred_region), [gt])]
        assert max_box_acc_v2(samples) == pytest.approx(1 / 3)

    def test_bounded(self):
        rng = np.random.default_rng(3)
        samples = [
            _sample(rng.uniform(size=(8, 8)).astype(np.float32), [BBox(2, 2, 6, 6)], f"s{i}")
            for i in range(5)
        ]
        value = max_box_acc_v2(samples)
        best_single = max(box_acc(samples, t, d) for t in TAU_GRID for d in IOU_THRESHOLDS)
        assert best_single / 3 <= value <= 1.0


class TestPointingGame:
    def test_hit(self):
        m = np.zeros((6, 6), dtype=np.float32)
        m[3, 3] = 1.0
        assert pointing_game([_sample(m, [BBox(2, 2, 5, 5)])]) == 1.0

    def test_miss(self):
        m = np.zeros((6, 6), dtype=np.float32)
        m[0, 0] = 1.0
        assert pointing_game([_sample(m, [BBox(2, 2, 5, 5)])]) == 0.0

    def test_tie_breaks_row_major(self):
        m = np.zeros((6, 6), dtype=np.float32)
        m[1, 1] = 1.0  # first maximum in row-major order
        m[4, 4] = 1.0
        assert pointing_game([_sample(m, [BBox(0, 0, 3, 3)])]) == 1.0
        assert pointing_game([_sample(m, [BBox(3, 3, 6, 6)])]) == 0.0

    def test_mask_criterion(self):
        m = np.zeros((6, 6), dtype=np.float32)
        m[3, 3] = 1.0
        mask = np.zeros((6, 6), dtype=bool)
        mask[3, 3] = True
        sample = AnnotatedSample("s", m, [BBox(0, 0, 1, 1)], gt_mask=mask)
        assert pointing_game([sample], criterion="mask") == 1.0
        assert pointing_game([sample], criterion="box") == 0.0


class TestCausalCurves:
    def _scorer(self):
        class SumScorer:
            concurrency_safe = True

            def score(self, img, concept):
                return float(np.asarray(img, dtype=np.float64).sum())

        return SumScorer()

    def test_endpoint_identities(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(size=(3, 8, 8)).astype(np.float32)
        s = rng.uniform(size=(8, 8)).astype(np.float32)
        scorer = self._scorer()
        kam, ram = causal_curves(scorer, img, "c", s)
        original = scorer.score(img, "c")
        assert kam.scores[-1] == original
        assert ram.scores[0] == original
        assert kam.scores[-1] == ram.scores[0]

    def test_fractions_validated(self):
        img = np.zeros((3, 4, 4), dtype=np.float32)
        s = np.zeros((4, 4), dtype=np.float32)
        with pytest.raises(InvalidArgumentError):
            causal_curves(self._scorer(), img, "c", s, fractions=[0.0, 0.5])
        with pytest.raises(InvalidArgumentError):
            causal_curves(self._scorer(), img, "c", s, fractions=[0.1, 0.5, 1.0])

    def test_oracle_saliency_beats_random_on_planted_suite(self):
        model = planted_model()
        for seed in range(20):
            sample = planted_image(2000 + seed)
            oracle_saliency = np.zeros(sample.image.shape[1:], dtype=np.float32)
            oracle_saliency[
                int(sample.box.y1) : int(sample.box.y2), int(sample.box.x1) : int(sample.box.x2)
            ] = 1.0
            random_saliency = np.random.default_rng(seed).uniform(
                size=sample.image.shape[1:]
            ).astype(np.float32)
            kam_oracle, _ = causal_curves(model, sample.image, sample.concept, oracle_saliency)
            kam_random, _ = causal_curves(model, sample.image, sample.concept, random_saliency)
            assert kam_oracle.auc > kam_random.auc

    def test_trapezoid_auc(self):
        img = np.zeros((3, 4, 4), dtype=np.float32)
        s = np.zeros((4, 4), dtype=np.float32)

        class ConstScorer:
            concurrency_safe = True

            def score(self, img, concept):
                return 2.0

        kam, ram = causal_curves(ConstScorer(), img, "c", s, fractions=[0.0, 0.5, 1.0])
        assert kam.auc == pytest.approx(2.0)
        assert ram.auc == pytest.approx(2.0)


class TestStratifiedReport:
    def _scorer(self):
        class SumScorer:
            concurrency_safe = True

            def score(self, img, concept):
                return float(np.asarray(img, dtype=np.float64).sum())

        return SumScorer()

    def _causal_sample(self, seed, sid="x"):
        rng = np.random.default_rng(seed)
        return CausalSample(
            sample_id=sid,
            image=rng.uniform(0.1, 1.0, size=(3, 6, 6)).astype(np.float32),
            concept="c",
            saliency=rng.uniform(size=(6, 6)).astype(np.float32),
        )

    def test_single_stratum_matches_direct_curves(self):
        scorer = self._scorer()
        sample = self._causal_sample(1)
        rows = stratified_causal_report({"only": [sample]}, scorer)
        kam, ram = causal_curves(scorer, sample.image, sample.concept, sample.saliency)
        ref = kam.scores[-1]
        assert rows[0].stratum == "only"
        assert rows[0].kam == pytest.approx(normalized_auc(kam, ref))
        assert rows[0].ram == pytest.approx(normalized_auc(ram, ref))
        assert rows[0].overall == pytest.approx(rows[0].kam - rows[0].ram)
        assert rows[-1].stratum == "aggregate"

    def test_identical_strata_identical_rows(self):
        scorer = self._scorer()
        sample = self._causal_sample(2)
        rows = stratified_causal_report({"a": [sample], "b": [sample]}, scorer)
        by_name = {r.stratum: r for r in rows}
        assert by_name["a"].kam == by_name["b"].kam
        assert by_name["a"].ram == by_name["b"].ram

    def test_empty_stratum_skipped(self, caplog):
        import logging

        scorer = self._scorer()
        with caplog.at_level(logging.WARNING):
            rows = stratified_causal_report({"a": [self._causal_sample(3)], "empty": []}, scorer)
        assert {r.stratum for r in rows} == {"a", "aggregate"}
        assert any("empty" in r.message for r in caplog.records)


class TestHitRate:
    def test_exact_box_mask_hits_both_criteria(self):
        box = BBox(2, 2, 6, 6)
        stack = _box_map(10, 10, box)[None]
        rows = hit_rate([stack], [[box]])
        assert rows[0].strict == 1.0
        assert rows[0].pointing == 1.0

    def test_three_of_five(self):
        box = BBox(1, 1, 5, 5)
        far = BBox(8, 8, 12, 12)
        stacks, annotations = [], []
        for i in range(5):
            stacks.append(_box_map(14, 14, box)[None])
            annotations.append([box] if i < 3 else [far])
        rows = hit_rate(stacks, annotations)
        assert rows[0].pointing == pytest.approx(0.6)
        assert rows[0].strict == pytest.approx(0.6)

    def test_rank_specific(self):
        box = BBox(0, 0, 4, 4)
        hit_map = _box_map(8, 8, box)
        miss_map = _box_map(8, 8, BBox(5, 5, 8, 8))
        stack = np.stack([miss_map, hit_map])
        rows = hit_rate([stack], [[box]])
        assert rows[0].pointing == 0.0
        assert rows[1].pointing == 1.0

    def test_empty_annotations_rejected(self):
        with pytest.raises(InvalidArgumentError):
            hit_rate([np.zeros((1, 4, 4), np.float32)], [[]])


class TestAttributeAnalysis:
    def test_attribute_hits_pointing(self):
        box = BBox(1, 1, 4, 4)
        stack = _box_map(8, 8, box)[None]
        hits = attribute_hits(stack, [box], ["head"])
        assert hits == {"head"}

    def test_single_attribute_always_hit(self):
        verdicts = [AttributeVerdict(f"s{i}", "cat", "head", True) for i in range(5)]
        table = attribute_hit_frequency(verdicts)
        assert table["cat"][0] == ("head", 1.0)

    def test_uniform_hits_tie_break_alphabetical(self):
        verdicts = []
        for i in range(4):
            for attribute in ("delta", "alpha", "charlie", "bravo"):
                verdicts.append(AttributeVerdict(f"s{i}", "dog", attribute, True))
        table = attribute_hit_frequency(verdicts)
        names = [name for name, _ in table["dog"]]
        values = [v for _, v in table["dog"]]
        assert names == ["alpha", "bravo", "charlie", "delta"]
        assert values == [0.25, 0.25, 0.25, 0.25]

    def test_no_hits_reports_zero(self):
        verdicts = [AttributeVerdict("s0", "cat", "tail", False)]
        table = attribute_hit_frequency(verdicts)
        assert table["cat"] == [("tail", 0.0)]
