# services/metrics/scoring.py
"""Scoring prediction directories against ground truth and writing the reports."""
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Optional, Sequence, Tuple

from logzero import logger

from app.exceptions.dataset_exceptions import DatasetIOError, FormatError
from app.helpers.decorator import logged
from app.schemas.metrics import MetricReport
from app.services.dataset.records import label_paths, list_ids, load_label_pair
from app.services.metrics.confusion import ChangeTypeIndex, ConfusionMatrix, pair_map
from app.services.metrics.report import build_report, render_csv, render_text
from app.services.metrics.scores import ExcludeMode


def score_sample(pred_dir: str, gt_dir: str, sample_id: str, index: ChangeTypeIndex) -> ConfusionMatrix:
    pred1, pred2 = load_label_pair(pred_dir, sample_id)
    truth1, truth2 = load_label_pair(gt_dir, sample_id)
    if pred1.shape != truth1.shape:
        raise FormatError(
            f"{label_paths(pred_dir, sample_id)[0]} has extent {pred1.shape}, ground truth has {truth1.shape}"
        )
    return ConfusionMatrix.for_index(index).accumulate(pair_map(pred1, pred2), pair_map(truth1, truth2), index)


def score_directories(pred_dir: str, gt_dir: str, num_classes: int, ids: Optional[Sequence[str]] = None,
                      workers: int = 1) -> ConfusionMatrix:
    """Confusion matrix over every id of `gt_dir` (or `ids`); per-sample shards merge."""
    ids = list(ids) if ids is not None else list_ids(gt_dir)
    if not ids:
        raise DatasetIOError(f"no samples to score under {gt_dir}")
    index = ChangeTypeIndex(num_classes)

    def shard(sample_id: str) -> ConfusionMatrix:
        return score_sample(pred_dir, gt_dir, sample_id, index)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shards = list(pool.map(shard, ids))
    else:
        shards = [shard(sample_id) for sample_id in ids]
    matrix = ConfusionMatrix.for_index(index)
    for part in shards:
        matrix = matrix.merge(part)
    logger.info(f"Scored {len(ids)} samples from {pred_dir} against {gt_dir}")
    return matrix


def write_reports(report: MetricReport, out_dir: str, name: str = "report") -> Dict[str, str]:
    """<name>.json, <name>.csv (categorical SeK grid) and <name>.txt."""
    os.makedirs(out_dir, exist_ok=True)
    outputs = {
        "json": (os.path.join(out_dir, f"{name}.json"), report.to_json()),
        "csv": (os.path.join(out_dir, f"{name}.csv"), render_csv(report)),
        "text": (os.path.join(out_dir, f"{name}.txt"), render_text(report)),
    }
    try:
        for path, content in outputs.values():
            with open(path, "w") as handle:
                handle.write(content)
    except OSError as e:
        logger.error(f"Writing reports under {out_dir} failed: {str(e)}")
        raise DatasetIOError(f"cannot write reports under {out_dir}: {e}")
    return {kind: path for kind, (path, _) in outputs.items()}


@logged("scoring")
def score_and_report(pred_dir: str, gt_dir: str, num_classes: int, ids: Optional[Sequence[str]] = None,
                     class_names: Optional[Sequence[str]] = None, exclude: ExcludeMode = "entry",
                     workers: int = 1) -> Tuple[ConfusionMatrix, MetricReport]:
    matrix = score_directories(pred_dir, gt_dir, num_classes, ids, workers)
    return matrix, build_report(matrix, ChangeTypeIndex(num_classes), class_names, exclude)
