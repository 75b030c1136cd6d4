"overlap and boundary metrics for binary segmentation masks"

from medsamca.metrics.hausdorff import boundary
from medsamca.metrics.hausdorff import hd95
from medsamca.metrics.hausdorff import hd95_fast
from medsamca.metrics.overlap import BinaryMask
from medsamca.metrics.overlap import MetricsReport
from medsamca.metrics.overlap import MetricsSummary
from medsamca.metrics.overlap import acc
from medsamca.metrics.overlap import binarize
from medsamca.metrics.overlap import dice
from medsamca.metrics.overlap import iou
from medsamca.metrics.overlap import summarize


def evaluate_pair(pred, ref) -> MetricsReport:
    "All four metrics for one prediction against its reference"
    return MetricsReport(dice(pred, ref), iou(pred, ref), acc(pred, ref),
                         hd95_fast(pred, ref))
