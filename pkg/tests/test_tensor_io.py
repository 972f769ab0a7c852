import io
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oms_bench import (
    FormatError,
    SchemaError,
    TensorContainer,
    ValidationError,
    bundle_to_container,
    generate,
    load_bundle,
    read_container,
    write_container,
)
from oms_bench.tensor_io import MAGIC, FORMAT_VERSION

from conftest import make_bundle, make_head, make_split


def roundtrip(container: TensorContainer) -> TensorContainer:
    buf = io.BytesIO()
    write_container(container, buf)
    return read_container(buf.getvalue())


def raw_file(entries, payload: bytes, meta=None) -> bytes:
    header = json.dumps({"entries": entries, "meta": meta or {}}).encode()
    return MAGIC + struct.pack("<B", FORMAT_VERSION) + struct.pack("<I", len(header)) + header + payload


def containers_equal(a: TensorContainer, b: TensorContainer) -> bool:
    if a.meta != b.meta or set(a.entries) != set(b.entries):
        return False
    return all(
        a.entries[k].dtype == b.entries[k].dtype
        and a.entries[k].shape == b.entries[k].shape
        and np.array_equal(a.entries[k], b.entries[k])
        for k in a.entries
    )


def test_round_trip_empty():
    back = roundtrip(TensorContainer())
    assert back.entries == {} and back.meta == {}


def test_round_trip_single_entry():
    arr = np.array([[1, 2], [3, 4]], dtype=np.float32)
    back = roundtrip(TensorContainer(entries={"x": arr}, meta={"note": "hi"}))
    assert np.array_equal(back.entries["x"], arr)
    assert back.entries["x"].shape == (2, 2) and back.entries["x"].dtype == np.float32
    assert back.meta == {"note": "hi"}


def test_write_is_byte_stable():
    arr = np.arange(6, dtype=np.int32)
    bufs = []
    for _ in range(2):
        buf = io.BytesIO()
        write_container(TensorContainer(entries={"a": arr}), buf)
        bufs.append(buf.getvalue())
    assert bufs[0] == bufs[1]


def test_declared_shape_payload_mismatch():
    entries = [{"name": "x", "dtype": "f32", "shape": [3], "byte_offset": 0, "byte_length": 8}]
    with pytest.raises(FormatError):
        read_container(raw_file(entries, b"\x00" * 8))


def test_bad_magic():
    data = b"XXXX" + b"\x01" + struct.pack("<I", 2) + b"{}"
    with pytest.raises(FormatError):
        read_container(data)


def test_bad_version():
    data = MAGIC + b"\x09" + struct.pack("<I", 2) + b"{}"
    with pytest.raises(FormatError):
        read_container(data)


def test_entry_past_payload():
    entries = [{"name": "x", "dtype": "f32", "shape": [4], "byte_offset": 0, "byte_length": 16}]
    with pytest.raises(FormatError):
        read_container(raw_file(entries, b"\x00" * 8))


def test_truncated_header():
    data = MAGIC + b"\x01" + struct.pack("<I", 100) + b"{}"
    with pytest.raises(FormatError):
        read_container(data)


def test_overlapping_entries():
    entries = [
        {"name": "a", "dtype": "f32", "shape": [2], "byte_offset": 0, "byte_length": 8},
        {"name": "b", "dtype": "f32", "shape": [2], "byte_offset": 4, "byte_length": 8},
    ]
    with pytest.raises(FormatError, match="overlap"):
        read_container(raw_file(entries, b"\x00" * 12))


def test_duplicate_entry_names():
    entries = [
        {"name": "a", "dtype": "f32", "shape": [1], "byte_offset": 0, "byte_length": 4},
        {"name": "a", "dtype": "f32", "shape": [1], "byte_offset": 4, "byte_length": 4},
    ]
    with pytest.raises(FormatError, match="duplicate"):
        read_container(raw_file(entries, b"\x00" * 8))


def test_nan_payload_rejected_on_write():
    arr = np.array([np.nan], dtype=np.float32)
    with pytest.raises(FormatError, match="non-finite"):
        write_container(TensorContainer(entries={"x": arr}), io.BytesIO())


def test_inf_payload_rejected_on_read():
    payload = struct.pack("<f", float("inf"))
    entries = [{"name": "x", "dtype": "f32", "shape": [1], "byte_offset": 0, "byte_length": 4}]
    with pytest.raises(FormatError, match="non-finite"):
        read_container(raw_file(entries, payload))


def test_unsupported_dtype_on_write():
    arr = np.zeros(2, dtype=np.float64)
    with pytest.raises(FormatError, match="dtype"):
        write_container(TensorContainer(entries={"x": arr}), io.BytesIO())


# ------------------------------------------------------------------- bundles


def small_valid_bundle():
    head = make_head([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    train = make_split([[2.0, 0.0], [0.0, 2.0]], [0, 1], [0, 1])
    test = make_split([[1.5, 0.1], [0.1, 1.5]], [0, 1], [0, 1])
    ood = make_split([[9.0, 0.0]], [-1], [0])
    return make_bundle(train, test, ood, head, ood_kind="novelty")


def test_load_bundle_from_synth(novelty_bundle):
    back = load_bundle(bundle_to_container(novelty_bundle))
    assert back.name == novelty_bundle.name
    assert np.array_equal(back.train.features, novelty_bundle.train.features)
    assert np.array_equal(back.ood.labels, novelty_bundle.ood.labels)


def test_missing_entry_is_schema_error(novelty_bundle):
    container = bundle_to_container(novelty_bundle)
    del container.entries["head.bias"]
    with pytest.raises(SchemaError, match="head.bias"):
        load_bundle(container)


def test_missing_meta_is_schema_error(novelty_bundle):
    container = bundle_to_container(novelty_bundle)
    container.meta = {"name": "x", "ood_kind": "novelty"}
    with pytest.raises(SchemaError, match="num_classes"):
        load_bundle(container)


def test_novelty_sentinel_violation():
    bundle = small_valid_bundle()
    container = bundle_to_container(bundle)
    labels = container.entries["ood.labels"].copy()
    labels[0] = 1
    container.entries["ood.labels"] = labels
    with pytest.raises(ValidationError, match="novelty"):
        load_bundle(container)


def test_prediction_mismatch_cites_index(novelty_bundle):
    container = bundle_to_container(novelty_bundle)
    preds = container.entries["train.predictions"].copy()
    preds[7] = (preds[7] + 1) % novelty_bundle.num_classes
    container.entries["train.predictions"] = preds
    with pytest.raises(ValidationError, match="sample 7"):
        load_bundle(container)


def test_train_sentinel_rejected():
    bundle = small_valid_bundle()
    container = bundle_to_container(bundle)
    labels = container.entries["train.labels"].copy()
    labels[1] = -1
    container.entries["train.labels"] = labels
    with pytest.raises(ValidationError, match="train"):
        load_bundle(container)


def test_prediction_out_of_range():
    bundle = small_valid_bundle()
    container = bundle_to_container(bundle)
    preds = container.entries["test_id.predictions"].copy()
    preds[1] = 5
    container.entries["test_id.predictions"] = preds
    with pytest.raises(ValidationError, match="sample 1"):
        load_bundle(container)


# ---------------------------------------------------------------- properties


@settings(max_examples=150, deadline=None)
@given(data=st.binary(max_size=400))
def test_random_bytes_never_crash(data):
    try:
        read_container(data)
    except FormatError:
        pass


def _valid_blob() -> bytes:
    from oms_bench import SynthConfig

    cfg = SynthConfig(
        seed=3, num_classes=2, dim=2, n_train=6, n_test=4, class_sep=2.0,
        sigma=0.2, ood_kind="novelty", ood_shift=6.0,
    )
    buf = io.BytesIO()
    write_container(bundle_to_container(generate(cfg)), buf)
    return buf.getvalue()


_BLOB = _valid_blob()


@settings(max_examples=60, deadline=None)
@given(
    position=st.integers(min_value=0, max_value=3000),
    value=st.integers(min_value=0, max_value=255),
)
def test_corrupted_valid_file_never_crashes(position, value):
    blob = bytearray(_BLOB)
    blob[position % len(blob)] = value
    try:
        container = read_container(bytes(blob))
        load_bundle(container)  # either a full bundle or a typed error
    except (FormatError, SchemaError, ValidationError):
        pass


_names = st.lists(st.text(min_size=1, max_size=8), min_size=0, max_size=4, unique=True)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_round_trip_property(data):
    names = data.draw(_names)
    entries = {}
    for name in names:
        if data.draw(st.booleans()):
            shape = data.draw(st.lists(st.integers(0, 4), min_size=0, max_size=3))
            count = int(np.prod(shape)) if shape else 1
            vals = data.draw(
                st.lists(
                    st.floats(-1e6, 1e6, allow_nan=False, width=32),
                    min_size=count,
                    max_size=count,
                )
            )
            entries[name] = np.array(vals, dtype=np.float32).reshape(shape)
        else:
            shape = data.draw(st.lists(st.integers(0, 4), min_size=0, max_size=3))
            count = int(np.prod(shape)) if shape else 1
            vals = data.draw(
                st.lists(st.integers(-(2**31), 2**31 - 1), min_size=count, max_size=count)
            )
            entries[name] = np.array(vals, dtype=np.int32).reshape(shape)
    container = TensorContainer(entries=entries, meta={"k": 1})
    assert containers_equal(roundtrip(container), container)
