import io

import numpy as np
import pytest

from oms_bench import (
    ConfigError,
    SynthConfig,
    bundle_to_container,
    generate,
    validate_bundle,
    write_container,
)


def bundle_bytes(bundle) -> bytes:
    buf = io.BytesIO()
    write_container(bundle_to_container(bundle), buf)
    return buf.getvalue()


def config(**overrides) -> SynthConfig:
    base = dict(
        seed=11,
        num_classes=3,
        dim=5,
        n_train=30,
        n_test=15,
        class_sep=2.0,
        sigma=0.25,
        ood_kind="novelty",
        ood_shift=7.0,
        outlier_fraction=0.0,
    )
    base.update(overrides)
    return SynthConfig(**base)


def test_zero_noise_predictions_match_labels():
    bundle = generate(config(sigma=1e-9))
    assert np.array_equal(bundle.train.predictions, bundle.train.labels)
    assert np.array_equal(bundle.test_id.predictions, bundle.test_id.labels)


def test_novelty_labels_all_sentinel():
    bundle = generate(config())
    assert (bundle.ood.labels == -1).all()
    validate_bundle(bundle)


def test_fixed_seed_bytes_identical():
    assert bundle_bytes(generate(config())) == bundle_bytes(generate(config()))


def test_different_seed_differs():
    assert bundle_bytes(generate(config(seed=1))) != bundle_bytes(generate(config(seed=2)))


@pytest.mark.parametrize("kind", ["novelty", "covariate", "adversarial", "other"])
def test_every_kind_validates(kind):
    validate_bundle(generate(config(ood_kind=kind, ood_shift=3.0)))


def test_outliers_misclassified_exactly():
    cfg = config(sigma=0.05, outlier_fraction=0.1, n_train=40)
    bundle = generate(cfg)
    n_train = cfg.num_classes * cfg.n_train
    expected = int(cfg.outlier_fraction * n_train)
    wrong = int((bundle.train.predictions != bundle.train.labels).sum())
    # class_sep >> sigma: the only train errors are the relocated samples
    assert wrong == expected > 0


def test_outlier_fraction_zero_leaves_train_clean():
    bundle = generate(config(sigma=0.05))
    assert (bundle.train.predictions == bundle.train.labels).all()


def test_adversarial_flips_every_prediction():
    cfg = config(ood_kind="adversarial", sigma=0.05, ood_shift=0.0)
    bundle = generate(cfg)
    assert (bundle.ood.predictions != bundle.ood.labels).all()
    assert (bundle.ood.labels >= 0).all()


def test_covariate_keeps_labels():
    cfg = config(ood_kind="covariate", ood_shift=4.0)
    bundle = generate(cfg)
    assert (bundle.ood.labels >= 0).all()
    assert len(bundle.ood) == cfg.num_classes * cfg.n_test


def test_head_is_nearest_mean_in_linear_form():
    cfg = config()
    bundle = generate(cfg)
    w = bundle.head.weights
    assert w.shape == (cfg.num_classes, cfg.dim)
    for k in range(cfg.num_classes):
        expected = np.zeros(cfg.dim, dtype=np.float32)
        expected[k] = cfg.class_sep
        assert np.array_equal(w[k], expected)
        assert bundle.head.bias[k] == np.float32(-0.5 * cfg.class_sep**2)


def test_dim_must_cover_classes():
    with pytest.raises(ConfigError, match="dim"):
        config(num_classes=4, dim=3).validate()


@pytest.mark.parametrize(
    "overrides",
    [
        {"num_classes": 1},
        {"sigma": 0.0},
        {"n_train": 0},
        {"outlier_fraction": 1.0},
        {"ood_kind": "weird"},
        {"class_sep": 0.0},
    ],
)
def test_invalid_configs_rejected(overrides):
    with pytest.raises(ConfigError):
        config(**overrides).validate()


def test_json_round_trip():
    cfg = config(name="demo")
    assert SynthConfig.from_json_dict(cfg.to_json_dict()) == cfg


def test_json_unknown_field_rejected():
    raw = config().to_json_dict()
    raw["bogus"] = 1
    with pytest.raises(ConfigError, match="bogus"):
        SynthConfig.from_json_dict(raw)
