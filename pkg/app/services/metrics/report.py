# services/metrics/report.py
import csv
import io
from typing import List, Optional, Sequence

from logzero import logger

from app.schemas.metrics import MetricReport
from app.services.metrics import scores
from app.services.metrics.confusion import ChangeTypeIndex, ConfusionMatrix

NULL_MARK = "--"
# OA at or above this while SeK stays at or below IMBALANCE_SEK is the collapse pattern
IMBALANCE_OA = 0.8
IMBALANCE_SEK = 0.05


def build_report(matrix: ConfusionMatrix, index: ChangeTypeIndex,
                 class_names: Optional[Sequence[str]] = None,
                 exclude: scores.ExcludeMode = "entry") -> MetricReport:
    iou1, iou2 = scores.iou_pair(matrix)
    per_type = {}
    for type_id, pair in enumerate(index.change_types(), start=1):
        value = None
        if scores.type_present(matrix, type_id):
            value = scores.categorical_sek(matrix, type_id, exclude=exclude)
        per_type[ChangeTypeIndex.key(pair)] = value
    report = MetricReport(
        oa=scores.oa(matrix),
        kappa=scores.kappa(matrix),
        iou1=iou1,
        iou2=iou2,
        miou=0.5 * (iou1 + iou2),
        sek=scores.sek(matrix, exclude=exclude),
        per_type_sek=per_type,
        counts=matrix.counts.tolist(),
        num_classes=index.num_classes,
        class_names=list(class_names or [str(label) for label in range(1, index.num_classes + 1)]),
    )
    logger.info(f"Scored {matrix.total} pixels: oa={report.oa:.4f} miou={report.miou:.4f} sek={report.sek:.4f}")
    return report


def category_grid(report: MetricReport) -> List[List[Optional[float]]]:
    """N x N categorical SeK, rows = class at t1, columns = class at t2."""
    n = report.num_classes
    return [[report.per_type_sek.get(ChangeTypeIndex.key((l1, l2))) for l2 in range(1, n + 1)]
            for l1 in range(1, n + 1)]


def _cell(value: Optional[float]) -> str:
    return NULL_MARK if value is None else f"{value:.4f}"


def render_csv(report: MetricReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t1 \\ t2"] + report.class_names)
    for name, row in zip(report.class_names, category_grid(report)):
        writer.writerow([name] + ["" if value is None else repr(value) for value in row])
    return buffer.getvalue()


def render_text(report: MetricReport) -> str:
    """Aligned table of categorical SeK with the scalar metrics and IOU footer."""
    names = report.class_names
    label_width = max(len("t1 \\ t2"), *(len(name) for name in names))
    cell_width = max(8, *(len(name) for name in names))
    lines = ["t1 \\ t2".ljust(label_width) + " " + " ".join(name.rjust(cell_width) for name in names)]
    for name, row in zip(names, category_grid(report)):
        lines.append(name.ljust(label_width) + " " + " ".join(_cell(value).rjust(cell_width) for value in row))
    lines.append("")
    lines.append(f"IOU1 {report.iou1:.4f}   IOU2 {report.iou2:.4f}")
    lines.append(f"OA {report.oa:.4f}   Kappa {report.kappa:.4f}   mIOU {report.miou:.4f}   SeK {report.sek:.4f}")
    return "\n".join(lines) + "\n"


def imbalance_warning(report: MetricReport) -> Optional[str]:
    """Message when accuracy looks high only because non-change dominates."""
    if report.oa >= IMBALANCE_OA and report.sek <= IMBALANCE_SEK:
        return (f"label imbalance: OA {report.oa:.4f} is high while SeK is {report.sek:.4f}; "
                f"the prediction is close to the all-non-change collapse")
    return None
