"""Deterministic synthetic scenario generator.

Class means sit on the first K vertices of the coordinate basis scaled by
class_sep, samples are isotropic Gaussians around them, and the classifier
head is the nearest-mean rule written as a linear layer (weights row k =
mean_k, bias_k = -|mean_k|^2 / 2). Randomness comes from numpy's Philox
counter-based generator keyed on the config seed, so a config maps to one
bundle, byte for byte.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError
from .tensor_io import (
    ClassifierHead,
    ScenarioBundle,
    Split,
    NOVEL_LABEL,
    OOD_KINDS,
    predict_f32,
)

_RELOCATION_FACTOR = 10.0  # outliers land this many class_sep away from their mean
_MAX_DIRECTION_TRIES = 1000


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    num_classes: int
    dim: int
    n_train: int  # per class
    n_test: int  # per class
    class_sep: float
    sigma: float
    ood_kind: str
    ood_shift: float
    outlier_fraction: float = 0.0
    name: str | None = None

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if self.dim < self.num_classes:
            raise ConfigError("dim must be >= num_classes (means sit on basis vertices)")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("per-class sample counts must be at least 1")
        if self.ood_kind not in OOD_KINDS:
            raise ConfigError(f"ood_kind must be one of {OOD_KINDS}")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ConfigError("outlier_fraction must lie in [0, 1)")
        if self.class_sep <= 0:
            raise ConfigError("class_sep must be positive")

    def resolved_name(self) -> str:
        return self.name or f"synth_{self.ood_kind}_s{self.seed}"

    def to_json_dict(self) -> dict:
        d = asdict(self)
        if d["name"] is None:
            del d["name"]
        return d

    @classmethod
    def from_json_dict(cls, raw: dict) -> "SynthConfig":
        if not isinstance(raw, dict):
            raise ConfigError("synth config must be a JSON object")
        allowed = set(cls.__dataclass_fields__)
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown synth config fields: {sorted(unknown)}")
        missing = {f for f in allowed if f not in raw and f not in ("outlier_fraction", "name")}
        if missing:
            raise ConfigError(f"missing synth config fields: {sorted(missing)}")
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg


def _class_means(config: SynthConfig) -> np.ndarray:
    means = np.zeros((config.num_classes, config.dim))
    for k in range(config.num_classes):
        means[k, k] = config.class_sep
    return means


def _nearest_mean_head(means: np.ndarray) -> ClassifierHead:
    weights = means.astype(np.float32)
    bias = (-0.5 * (means**2).sum(axis=1)).astype(np.float32)
    return ClassifierHead(weights=weights, bias=bias)


def _sample_classes(rng, means, sigma, per_class):
    parts = [rng.normal(means[k], sigma, size=(per_class, means.shape[1])) for k in range(means.shape[0])]
    features = np.concatenate(parts, axis=0)
    labels = np.repeat(np.arange(means.shape[0], dtype=np.int32), per_class)
    return features, labels


def _relocate_outliers(rng, features, labels, means, config, head):
    """Move a fraction of train samples far from their class mean, keeping labels.

    The relocation direction is redrawn until the landing point is
    misclassified by the head, which is what the relocated samples are
    there to emulate.
    """
    n = features.shape[0]
    n_out = int(config.outlier_fraction * n)
    if n_out == 0:
        return features
    picked = rng.choice(n, size=n_out, replace=False)
    for i in picked:
        mean = means[labels[i]]
        for _ in range(_MAX_DIRECTION_TRIES):
            u = rng.normal(size=config.dim)
            u /= np.linalg.norm(u)
            candidate = mean + _RELOCATION_FACTOR * config.class_sep * u
            pred = predict_f32(candidate[None, :].astype(np.float32), head)[0]
            if pred != labels[i]:
                features[i] = candidate
                break
        else:  # pragma: no cover - probability vanishes long before the cap
            raise RuntimeError("could not find a misclassifying relocation direction")
    return features


def _unit_vector(rng, dim):
    u = rng.normal(size=dim)
    return u / np.linalg.norm(u)


def _flip_toward_rival(x, means, head, start_pred):
    """Minimal interpolation of x toward its nearest other-class mean until
    the stored-precision argmax changes class."""
    d2 = ((means - x) ** 2).sum(axis=1)
    d2[start_pred] = np.inf
    rival = means[int(np.argmin(d2))]

    def flipped(t):
        point = (x + t * (rival - x)).astype(np.float32)
        return predict_f32(point[None, :], head)[0] != start_pred

    lo, hi = 0.0, 1.0  # argmax regions are convex, so one crossing on the segment
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if flipped(mid):
            hi = mid
        else:
            lo = mid
    assert flipped(hi)
    return x + hi * (rival - x)


def _make_ood(rng, config, means, head):
    n_ood = config.num_classes * config.n_test
    if config.ood_kind == "novelty":
        if config.dim > config.num_classes:
            direction = np.zeros(config.dim)
            direction[config.num_classes] = 1.0
        else:
            direction = np.ones(config.dim) / np.sqrt(config.dim)
        novel_mean = config.ood_shift * direction
        features = rng.normal(novel_mean, config.sigma, size=(n_ood, config.dim))
        labels = np.full(n_ood, NOVEL_LABEL, dtype=np.int32)
        return features, labels
    features, labels = _sample_classes(rng, means, config.sigma, config.n_test)
    if config.ood_kind == "covariate":
        features = features + config.ood_shift * _unit_vector(rng, config.dim)
        return features, labels
    # adversarial / other: nudge each sample over the decision boundary
    start_preds = predict_f32(features.astype(np.float32), head)
    for i in range(features.shape[0]):
        features[i] = _flip_toward_rival(features[i], means, head, start_preds[i])
    return features, labels


def _finish_split(features, labels, head) -> Split:
    stored = features.astype(np.float32)
    return Split(features=stored, labels=labels, predictions=predict_f32(stored, head))


def generate(config: SynthConfig) -> ScenarioBundle:
    """Generate one scenario bundle; identical configs give identical bundles."""
    config.validate()
    rng = np.random.Generator(np.random.Philox(config.seed))
    means = _class_means(config)
    head = _nearest_mean_head(means)

    train_x, train_y = _sample_classes(rng, means, config.sigma, config.n_train)
    train_x = _relocate_outliers(rng, train_x, train_y, means, config, head)
    test_x, test_y = _sample_classes(rng, means, config.sigma, config.n_test)
    ood_x, ood_y = _make_ood(rng, config, means, head)

    return ScenarioBundle(
        name=config.resolved_name(),
        ood_kind=config.ood_kind,
        num_classes=config.num_classes,
        train=_finish_split(train_x, train_y, head),
        test_id=_finish_split(test_x, test_y, head),
        ood=_finish_split(ood_x, ood_y, head),
        head=head,
    )
