"""The six runtime monitors behind one fit/score interface.

Every monitor is fitted on the train split (optionally dropping
misclassified train samples first) and emits one f64 anomaly score per
sample with a single orientation: higher means more suspicious.

    msp           1 - max_k softmax(logits)_k
    energy        -T * logsumexp(logits / T)
    react_msp     msp on logits recomputed from features clipped at c
    react_energy  energy on clipped-feature logits
    mahalanobis   min_k (x - mu_k)^T  Sigma^-1  (x - mu_k), tied covariance
    otb           0 if x falls in any box of its predicted class, else 1

Storage is f32; every score is computed in f64.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import FitError, UsageError
from .tensor_io import ClassifierHead, ScenarioBundle, Split

MONITOR_KINDS = ("msp", "energy", "react_msp", "react_energy", "mahalanobis", "otb")
_LOGIT_KINDS = ("msp", "energy", "react_msp", "react_energy")


@dataclass(frozen=True)
class MonitorConfig:
    kind: str
    filter_misclassified: bool = False
    react_percentile: float = 90.0
    energy_temperature: float = 1.0
    otb_clusters_per_class: int = 1
    otb_enlargement: float = 0.0
    covariance_ridge: float = 1e-6

    def validate(self) -> None:
        if self.kind not in MONITOR_KINDS:
            raise UsageError(f"unknown monitor kind {self.kind!r}")
        if not 0.0 < self.react_percentile <= 100.0:
            raise UsageError("react_percentile must lie in (0, 100]")
        if self.energy_temperature <= 0:
            raise UsageError("energy_temperature must be positive")
        if self.otb_clusters_per_class < 1:
            raise UsageError("otb_clusters_per_class must be at least 1")
        if self.otb_enlargement < 0:
            raise UsageError("otb_enlargement must be non-negative")
        if self.covariance_ridge < 0:
            raise UsageError("covariance_ridge must be non-negative")


@dataclass(frozen=True, eq=False)
class MonitorModel:
    """Fitted monitor state; immutable, safe to score from concurrently."""

    kind: str
    config: MonitorConfig
    used_train_count: int
    head: ClassifierHead | None = None
    class_means: np.ndarray | None = None  # (K, d) f64
    inv_covariance: np.ndarray | None = None  # (d, d) f64
    box_lowers: np.ndarray | None = None  # (B, d) f64
    box_uppers: np.ndarray | None = None  # (B, d) f64
    box_classes: np.ndarray | None = None  # (B,) i64
    clip_threshold: float | None = None


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Per-sample anomaly scores, higher = more suspicious.

    binary is True only for otb, whose scores are exactly 0.0 or 1.0 and
    need no threshold search.
    """

    scores: np.ndarray
    binary: bool = False

    def __len__(self) -> int:
        return self.scores.shape[0]


# ------------------------------------------------------------------------ fit


def _used_mask(train: Split, filter_misclassified: bool) -> np.ndarray:
    if filter_misclassified:
        return train.predictions == train.labels
    return np.ones(len(train), dtype=bool)


def _fit_mahalanobis(x, labels, num_classes, ridge):
    d = x.shape[1]
    means = np.empty((num_classes, d))
    scatter = np.zeros((d, d))
    for k in range(num_classes):
        xk = x[labels == k]
        if xk.shape[0] == 0:
            raise FitError(f"class {k} has no usable train samples")
        means[k] = xk.mean(axis=0)
        centered = xk - means[k]
        scatter += centered.T @ centered
    cov = scatter / x.shape[0]
    if ridge > 0:
        trace = np.trace(cov)
        # all-points-at-their-means degenerates to a zero matrix; fall back
        # to an absolute ridge so the fit still succeeds
        scale = trace / d if trace > 0 else 1.0
        cov = cov + ridge * scale * np.eye(d)
    try:
        np.linalg.cholesky(cov)
        inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"tied covariance is not positive-definite: {exc}") from exc
    inv = 0.5 * (inv + inv.T)
    return means, inv


def _fit_boxes(x, labels, num_classes, clusters_per_class, enlargement):
    lowers, uppers, classes = [], [], []
    for k in range(num_classes):
        xk = x[labels == k]
        if xk.shape[0] == 0:
            raise FitError(f"class {k} has no usable train samples")
        k_eff = min(clusters_per_class, xk.shape[0])
        if k_eff == 1:
            assignments = np.zeros(xk.shape[0], dtype=np.int64)
        else:
            centers = _kernels.farthest_point_init(xk, k_eff)
            assignments = _kernels.lloyd(xk, centers)
        for c in range(k_eff):
            members = xk[assignments == c]
            if members.shape[0] == 0:
                continue
            lo = members.min(axis=0)
            hi = members.max(axis=0)
            pad = 0.5 * enlargement * (hi - lo)
            lowers.append(lo - pad)
            uppers.append(hi + pad)
            classes.append(k)
    return (
        np.asarray(lowers, dtype=np.float64),
        np.asarray(uppers, dtype=np.float64),
        np.asarray(classes, dtype=np.int64),
    )


def fit(bundle: ScenarioBundle, config: MonitorConfig) -> MonitorModel:
    """Fit one monitor on the bundle's train split."""
    config.validate()
    mask = _used_mask(bundle.train, config.filter_misclassified)
    used = int(mask.sum())
    x = bundle.train.features[mask].astype(np.float64)
    labels = bundle.train.labels[mask]

    common = dict(kind=config.kind, config=config, used_train_count=used)
    if config.kind == "mahalanobis":
        means, inv = _fit_mahalanobis(x, labels, bundle.num_classes, config.covariance_ridge)
        return MonitorModel(**common, class_means=means, inv_covariance=inv)
    if config.kind == "otb":
        lowers, uppers, classes = _fit_boxes(
            x, labels, bundle.num_classes, config.otb_clusters_per_class, config.otb_enlargement
        )
        return MonitorModel(**common, box_lowers=lowers, box_uppers=uppers, box_classes=classes)
    if config.kind in ("react_msp", "react_energy"):
        if used == 0:
            raise FitError("no usable train samples to take the activation percentile from")
        clip = float(np.percentile(x.ravel(), config.react_percentile))
        return MonitorModel(**common, head=bundle.head, clip_threshold=clip)
    # msp / energy carry no fitted state beyond the head reference
    return MonitorModel(**common, head=bundle.head)


# ---------------------------------------------------------------------- score


def _softmax_max(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd.max(axis=1) / expd.sum(axis=1)


def _logsumexp(a):
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def _logits_f64(x, head: ClassifierHead):
    return x @ head.weights.T.astype(np.float64) + head.bias.astype(np.float64)


def score(model: MonitorModel, split: Split, head: ClassifierHead) -> ScoreVector:
    """Score every sample of a split; pure, deterministic, f64 throughout."""
    x = split.features.astype(np.float64)
    kind = model.kind
    if kind in _LOGIT_KINDS:
        if kind.startswith("react_"):
            x = np.minimum(x, model.clip_threshold)
        logits = _logits_f64(x, head)
        if kind.endswith("msp"):
            return ScoreVector(scores=1.0 - _softmax_max(logits))
        t = model.config.energy_temperature
        return ScoreVector(scores=-t * _logsumexp(logits / t))
    if kind == "mahalanobis":
        return ScoreVector(scores=_kernels.mahalanobis_min_sq(x, model.class_means, model.inv_covariance))
    if kind == "otb":
        scores = _kernels.outside_boxes(
            x, model.box_lowers, model.box_uppers, model.box_classes, split.predictions
        )
        return ScoreVector(scores=scores, binary=True)
    raise UsageError(f"unknown monitor kind {kind!r}")
