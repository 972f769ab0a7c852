import numpy as np
import pytest

from oms_bench import ClassifierHead, ScenarioBundle, Split, SynthConfig, generate


def make_split(features, labels, predictions) -> Split:
    return Split(
        features=np.asarray(features, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int32),
        predictions=np.asarray(predictions, dtype=np.int32),
    )


def make_head(weights, bias) -> ClassifierHead:
    return ClassifierHead(
        weights=np.asarray(weights, dtype=np.float32),
        bias=np.asarray(bias, dtype=np.float32),
    )


def make_bundle(train, test_id, ood, head, *, name="fixture", ood_kind="other", num_classes=None):
    return ScenarioBundle(
        name=name,
        ood_kind=ood_kind,
        num_classes=num_classes if num_classes is not None else head.num_classes,
        train=train,
        test_id=test_id,
        ood=ood,
        head=head,
    )


@pytest.fixture
def novelty_config():
    return SynthConfig(
        seed=7,
        num_classes=3,
        dim=4,
        n_train=40,
        n_test=20,
        class_sep=2.0,
        sigma=0.3,
        ood_kind="novelty",
        ood_shift=8.0,
        outlier_fraction=0.0,
    )


@pytest.fixture
def novelty_bundle(novelty_config):
    return generate(novelty_config)
