"""Ground-truth labeling, rejection metrics, threshold search, perfect-OOD simulation.

Both evaluation settings label the concatenated (test_id ++ ood) samples:

    OOD  positive = the sample belongs to the ood split
    OMS  positive = the stored prediction differs from the label
         (the -1 novelty sentinel never equals a prediction, so novel
         samples are always OMS-positive)

Metrics with an empty denominator are reported as NaN and excluded from
aggregation; the F1 threshold search treats NaN F1 as 0.
"""

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import UsageError
from .monitors import ScoreVector
from .tensor_io import ScenarioBundle

BINARY_THRESHOLD = 0.5  # fixed cutoff for monitors whose scores are already {0, 1}


class EvalSetting(enum.Enum):
    OOD = "OOD"
    OMS = "OMS"


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Rejection ground truth over concatenated (test_id ++ ood) samples."""

    positives: np.ndarray  # bool, True = should be rejected
    n_test_id: int
    n_ood: int

    def __len__(self) -> int:
        return self.positives.shape[0]

    @property
    def num_positives(self) -> int:
        return int(self.positives.sum())


@dataclass(frozen=True)
class EvalReport:
    threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    scenario: str = ""
    monitor: str = ""
    setting: EvalSetting | None = None

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else math.nan

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else math.nan

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else math.nan

    def metric(self, name: str) -> float:
        if name not in ("precision", "recall", "f1"):
            raise UsageError(f"unknown metric {name!r}")
        return getattr(self, name)

    def tagged(self, **meta) -> "EvalReport":
        return replace(self, **meta)


def label_ground_truth(bundle: ScenarioBundle, setting: EvalSetting) -> GroundTruth:
    n_id = len(bundle.test_id)
    n_ood = len(bundle.ood)
    if setting is EvalSetting.OOD:
        positives = np.concatenate([np.zeros(n_id, dtype=bool), np.ones(n_ood, dtype=bool)])
    else:
        preds = np.concatenate([bundle.test_id.predictions, bundle.ood.predictions])
        labels = np.concatenate([bundle.test_id.labels, bundle.ood.labels])
        positives = preds != labels
    return GroundTruth(positives=positives, n_test_id=n_id, n_ood=n_ood)


def metrics(rejections: np.ndarray, truth: GroundTruth, threshold: float = math.nan) -> EvalReport:
    """Exact confusion counts of a rejection vector against the ground truth."""
    rejections = np.asarray(rejections, dtype=bool)
    if rejections.shape != truth.positives.shape:
        raise UsageError(
            f"rejections length {rejections.shape} does not match ground truth {truth.positives.shape}"
        )
    pos = truth.positives
    tp = int(np.count_nonzero(rejections & pos))
    fp = int(np.count_nonzero(rejections & ~pos))
    fn = int(np.count_nonzero(~rejections & pos))
    tn = int(np.count_nonzero(~rejections & ~pos))
    return EvalReport(threshold=threshold, tp=tp, fp=fp, fn=fn, tn=tn)


def apply_threshold(scores: ScoreVector, threshold: float, truth: GroundTruth) -> EvalReport:
    """Evaluate the strict rule "reject iff score > threshold"."""
    return metrics(scores.scores > threshold, truth, threshold=threshold)


def evaluate_binary(scores: ScoreVector, truth: GroundTruth) -> EvalReport:
    """Evaluate a binary (threshold-free) monitor at the fixed 0.5 cutoff."""
    return apply_threshold(scores, BINARY_THRESHOLD, truth)


def optimal_f1_threshold(scores: ScoreVector, truth: GroundTruth) -> tuple[float, EvalReport]:
    """Search the rejection threshold maximizing F1.

    Candidates are -inf, the midpoints of consecutive distinct scores, and
    +inf; the rejection rule is strictly "score > tau", so the extremes
    mean reject-all and reject-none. Ties in F1 resolve to the largest
    threshold, i.e. the fewest rejections.
    """
    if scores.binary:
        raise UsageError("binary score vectors are threshold-free; no F1 search applies")
    values = scores.scores
    if values.shape != truth.positives.shape:
        raise UsageError("score vector and ground truth lengths differ")

    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    sorted_pos = truth.positives[order].astype(np.int64)
    uniq, first_idx = np.unique(sorted_vals, return_index=True)

    total_pos = int(sorted_pos.sum())
    n = values.shape[0]
    prefix_pos = np.concatenate([[0], np.cumsum(sorted_pos)])

    # candidate j rejects every sample with score >= uniq[j]; j == len(uniq)
    # rejects nothing
    candidates = np.empty(len(uniq) + 1)
    candidates[0] = -np.inf
    candidates[1:-1] = uniq[:-1] + 0.5 * (uniq[1:] - uniq[:-1])
    candidates[-1] = np.inf

    best_tau = None
    best_f1 = -1.0
    best_counts = None
    for j, tau in enumerate(candidates):
        cut = 0 if j == 0 else int(first_idx[j]) if j < len(uniq) else n
        tp = total_pos - int(prefix_pos[cut])
        rejected = n - cut
        fp = rejected - tp
        fn = total_pos - tp
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if denom else 0.0
        if f1 >= best_f1:  # >= so equal F1 keeps the larger threshold
            best_f1 = f1
            best_tau = float(tau)
            best_counts = (tp, fp, fn, n - rejected - fn)
    tp, fp, fn, tn = best_counts
    return best_tau, EvalReport(threshold=best_tau, tp=tp, fp=fp, fn=fn, tn=tn)


def simulate_perfect_ood(bundle: ScenarioBundle) -> EvalReport:
    """OMS-setting report of the oracle that rejects exactly the ood split."""
    ood_truth = label_ground_truth(bundle, EvalSetting.OOD)
    oms_truth = label_ground_truth(bundle, EvalSetting.OMS)
    report = metrics(ood_truth.positives, oms_truth, threshold=BINARY_THRESHOLD)
    return report.tagged(scenario=bundle.name, monitor="perfect_ood", setting=EvalSetting.OMS)
