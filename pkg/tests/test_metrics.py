# ** Base Modules
import math

import numpy as np
import pytest

# ** App Modules
from app.exceptions.custom_exceptions import DimensionError, LabelError, UndefinedInputError
from app.exceptions.dataset_exceptions import AnnotationConsistencyError
from app.schemas.metrics import MetricReport
from app.services.metrics import scores
from app.services.metrics.confusion import ChangeTypeIndex, ConfusionMatrix, pair_map, pair_to_class
from app.services.metrics.report import build_report, category_grid, imbalance_warning, render_csv, render_text

WORKED = np.array([[50, 2, 3], [4, 10, 1], [6, 0, 24]])


def oracle(pred_types, true_types, size):
    """Per-pixel reference implementation, independent of the matrix code paths."""
    pred_types, true_types = list(pred_types.reshape(-1)), list(true_types.reshape(-1))
    total = len(pred_types)
    agree = sum(p == t for p, t in zip(pred_types, true_types))
    rho = agree / total
    eta = sum(pred_types.count(c) * true_types.count(c) for c in range(size)) / total ** 2
    kappa = (rho - eta) / (1 - eta) if 1 - eta > 1e-12 else (1.0 if rho >= 1 - 1e-12 else 0.0)
    both_unchanged = sum(p == 0 and t == 0 for p, t in zip(pred_types, true_types))
    either_unchanged = sum(p == 0 or t == 0 for p, t in zip(pred_types, true_types))
    either_changed = sum(p != 0 or t != 0 for p, t in zip(pred_types, true_types))
    both_changed = sum(p != 0 and t != 0 for p, t in zip(pred_types, true_types))
    iou1 = both_unchanged / either_unchanged if either_unchanged else 1.0
    iou2 = both_changed / either_changed if either_changed else 1.0

    kept = [(p, t) for p, t in zip(pred_types, true_types) if not (p == 0 and t == 0)]
    if not kept:
        sek = 1.0
    else:
        n = len(kept)
        rho_hat = sum(p == t and p != 0 for p, t in kept) / n
        eta_hat = sum(sum(p == c for p, _ in kept) * sum(t == c for _, t in kept) for c in range(size)) / n ** 2
        if 1 - eta_hat < 1e-12:
            kappa_hat = 1.0 if rho_hat >= 1 - 1e-12 else 0.0
        else:
            kappa_hat = (rho_hat - eta_hat) / (1 - eta_hat)
        sek = math.exp(iou2 - 1) * kappa_hat
    return {"oa": rho, "kappa": kappa, "iou1": iou1, "iou2": iou2, "miou": (iou1 + iou2) / 2, "sek": sek}


def random_pairs(rng, num_classes, shape, change_rate):
    changed = rng.random(shape) < change_rate
    l1 = np.where(changed, rng.integers(1, num_classes + 1, size=shape), 0)
    l2 = np.where(changed, rng.integers(1, num_classes + 1, size=shape), 0)
    return pair_map(l1, l2)


def test_worked_example():
    assert scores.oa(WORKED) == pytest.approx(0.84, abs=1e-12)
    assert scores.kappa(WORKED) == pytest.approx(0.7183, abs=1e-4)
    iou1, iou2 = scores.iou_pair(WORKED)
    assert iou1 == pytest.approx(50 / 65, abs=1e-12)
    assert iou2 == pytest.approx(0.7, abs=1e-12)
    assert scores.miou(WORKED) == pytest.approx(0.7346, abs=1e-4)
    expected = math.exp(-0.3) * (0.68 - 0.428) / (1 - 0.428)
    assert scores.sek(WORKED) == pytest.approx(expected, abs=1e-12)
    assert scores.sek(WORKED) == pytest.approx(0.3264, abs=1e-4)


def test_perfect_diagonal_scores_one():
    perfect = np.diag([50, 30, 20])
    assert scores.oa(perfect) == 1.0
    assert scores.miou(perfect) == 1.0
    assert scores.sek(perfect) == 1.0


def test_collapse_prediction_scores_zero():
    collapse = np.array([[45, 25, 30], [0, 0, 0], [0, 0, 0]])
    assert scores.oa(collapse) == 0.45
    assert scores.sek(collapse) == 0.0
    half = np.array([[50, 25, 25], [0, 0, 0], [0, 0, 0]])
    assert scores.oa(half) == 0.5
    assert scores.sek(half) == 0.0


def test_collapse_on_mostly_unchanged_scene_keeps_high_oa():
    rng = np.random.default_rng(0)
    truth = random_pairs(rng, 4, (64, 64), change_rate=0.08)
    index = ChangeTypeIndex(4)
    matrix = ConfusionMatrix.for_index(index).accumulate(np.zeros_like(truth), truth, index)
    assert scores.oa(matrix) > 0.8
    assert scores.sek(matrix) == 0.0
    report = build_report(matrix, index)
    assert imbalance_warning(report) is not None


def test_no_change_anywhere_scores_one():
    unchanged = np.array([[100, 0], [0, 0]])
    assert scores.sek(unchanged) == 1.0
    assert scores.iou_pair(unchanged) == (1.0, 1.0)


def test_empty_matrix_is_undefined():
    with pytest.raises(UndefinedInputError):
        scores.oa(np.zeros((3, 3), dtype=np.int64))
    with pytest.raises(UndefinedInputError):
        scores.sek(np.ones((2, 3), dtype=np.int64))


def test_metrics_match_per_pixel_oracle():
    rng = np.random.default_rng(7)
    for trial in range(100):
        num_classes = int(rng.integers(2, 7))
        index = ChangeTypeIndex(num_classes)
        shape = (int(rng.integers(8, 33)), int(rng.integers(8, 33)))
        truth = random_pairs(rng, num_classes, shape, rng.uniform(0.0, 0.7))
        pred = random_pairs(rng, num_classes, shape, rng.uniform(0.0, 0.7))
        matrix = ConfusionMatrix.for_index(index).accumulate(pred, truth, index)
        expected = oracle(index.encode(pred), index.encode(truth), index.size)
        iou1, iou2 = scores.iou_pair(matrix)
        assert scores.oa(matrix) == pytest.approx(expected["oa"], abs=1e-12), trial
        assert scores.kappa(matrix) == pytest.approx(expected["kappa"], abs=1e-12), trial
        assert iou1 == pytest.approx(expected["iou1"], abs=1e-12), trial
        assert iou2 == pytest.approx(expected["iou2"], abs=1e-12), trial
        assert scores.miou(matrix) == pytest.approx(expected["miou"], abs=1e-12), trial
        assert scores.sek(matrix) == pytest.approx(expected["sek"], abs=1e-12), trial


def test_delete_mode_drops_row_and_column_zero():
    reduced = WORKED[1:, 1:]
    rho = np.trace(reduced) / reduced.sum()
    eta = (reduced.sum(axis=1) * reduced.sum(axis=0)).sum() / reduced.sum() ** 2
    expected = math.exp(0.7 - 1) * (rho - eta) / (1 - eta)
    assert scores.sek(WORKED, exclude="delete") == pytest.approx(expected, abs=1e-12)


def test_change_type_index_bijection():
    index = ChangeTypeIndex(3)
    assert index.size == 10
    assert pair_to_class(0, 0, 3) == 0
    assert pair_to_class(1, 1, 3) == 1
    assert pair_to_class(2, 3, 3) == 6
    assert [index.decode(i) for i in range(1, 10)] == index.change_types()
    with pytest.raises(LabelError):
        index.encode(np.array([[4, 1]]))
    with pytest.raises(AnnotationConsistencyError) as error:
        index.encode(np.array([[0, 2], [1, 0], [1, 1]]))
    assert error.value.pixel_count == 2


def test_merge_equals_joint_accumulation():
    rng = np.random.default_rng(1)
    index = ChangeTypeIndex(3)
    pred_a, truth_a = random_pairs(rng, 3, (6, 6), 0.4), random_pairs(rng, 3, (6, 6), 0.4)
    pred_b, truth_b = random_pairs(rng, 3, (5, 7), 0.4), random_pairs(rng, 3, (5, 7), 0.4)
    first = ConfusionMatrix.for_index(index).accumulate(pred_a, truth_a, index)
    second = ConfusionMatrix.for_index(index).accumulate(pred_b, truth_b, index)
    joint = ConfusionMatrix.for_index(index).accumulate(pred_a, truth_a, index).accumulate(pred_b, truth_b, index)
    assert first + second == joint
    assert first.merge(second) == second.merge(first)


def test_extent_mismatch_is_rejected():
    index = ChangeTypeIndex(2)
    with pytest.raises(DimensionError):
        ConfusionMatrix.for_index(index).accumulate(np.zeros((3, 3, 2)), np.zeros((3, 4, 2)), index)


def test_categorical_sek_collapses_to_two_types():
    collapsed = scores.collapse_to_type(WORKED, 2)
    assert collapsed.tolist() == [[66, 4], [6, 24]]
    assert collapsed.sum() == WORKED.sum()
    assert scores.categorical_sek(WORKED, 2) == pytest.approx(scores.sek(collapsed), abs=1e-15)
    with pytest.raises(LabelError):
        scores.categorical_sek(WORKED, 0)


def test_absent_type_is_null_in_report():
    index = ChangeTypeIndex(2)
    truth = pair_map(np.array([[0, 1], [1, 0]]), np.array([[0, 2], [2, 0]]))
    matrix = ConfusionMatrix.for_index(index).accumulate(truth, truth, index)
    report = build_report(matrix, index, ["soil", "water"])
    assert report.per_type_sek["(1,2)"] == 1.0
    assert report.per_type_sek["(2,1)"] is None
    assert category_grid(report) == [[None, 1.0], [None, None]]
    assert "--" in render_text(report)
    assert render_csv(report).splitlines()[1] == "soil,,1.0"


def test_report_survives_json_round_trip():
    index = ChangeTypeIndex(2)
    rng = np.random.default_rng(3)
    pred, truth = random_pairs(rng, 2, (8, 8), 0.5), random_pairs(rng, 2, (8, 8), 0.5)
    matrix = ConfusionMatrix.for_index(index).accumulate(pred, truth, index)
    report = build_report(matrix, index)
    assert MetricReport.from_json(report.to_json()) == report
    assert "IOU1" in render_text(report) and "SeK" in render_text(report)


def test_relabelling_change_types_keeps_the_scores():
    rng = np.random.default_rng(11)
    counts = rng.integers(0, 40, size=(6, 6))
    order = np.concatenate([[0], 1 + rng.permutation(5)])
    permuted = counts[np.ix_(order, order)]
    for metric in (scores.oa, scores.kappa, scores.miou, scores.sek):
        assert metric(permuted) == pytest.approx(metric(counts), abs=1e-12)


def test_sek_ignores_the_unchanged_mass():
    inflated = WORKED.copy()
    inflated[0, 0] *= 10
    assert scores.oa(inflated) > scores.oa(WORKED)
    assert scores.sek(inflated) == pytest.approx(scores.sek(WORKED), abs=1e-15)


def test_flipping_both_maps_keeps_the_matrix():
    rng = np.random.default_rng(12)
    index = ChangeTypeIndex(3)
    pred, truth = random_pairs(rng, 3, (9, 7), 0.4), random_pairs(rng, 3, (9, 7), 0.4)
    plain = ConfusionMatrix.for_index(index).accumulate(pred, truth, index)
    flipped = ConfusionMatrix.for_index(index).accumulate(pred[:, ::-1], truth[:, ::-1], index)
    assert plain == flipped
