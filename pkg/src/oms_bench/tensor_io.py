"""OMSB v1 container format and scenario bundle assembly/validation.

File layout, in order:

    magic   4 bytes         b"OMSB"
    version u8              1
    hlen    u32 little-endian, byte length of the JSON header
    header  hlen bytes      UTF-8 JSON (see below)
    payload raw little-endian tensor bytes, row-major

Header JSON::

    {
      "entries": [
        {"name": "train.features", "dtype": "f32", "shape": [100, 8],
         "byte_offset": 0, "byte_length": 3200},
        ...
      ],
      "meta": {"name": "...", "ood_kind": "novelty", "num_classes": 4}
    }

Entry dtypes are "f32" or "i32". Entries must not overlap, must lie
inside the payload, and every f32 value must be finite. A full worked
hex example lives in docs/omsb_format.md.
"""

import json
import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .errors import FormatError, SchemaError, ValidationError

MAGIC = b"OMSB"
FORMAT_VERSION = 1

OOD_KINDS = ("novelty", "covariate", "adversarial", "other")
NOVEL_LABEL = -1

_DTYPES = {"f32": np.dtype("<f4"), "i32": np.dtype("<i4")}


@dataclass
class TensorContainer:
    """Named f32/i32 tensors plus free-form JSON metadata."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Split:
    """One data split: features (N, d) f32, labels and predictions (N,) i32.

    labels use -1 as the "no valid ground truth among the K classes"
    sentinel; predictions are always a valid class index.
    """

    features: np.ndarray
    labels: np.ndarray
    predictions: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True, eq=False)
class ClassifierHead:
    """Final linear layer: weights (K, d) f32, bias (K,) f32."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class ScenarioBundle:
    name: str
    ood_kind: str
    num_classes: int
    train: Split
    test_id: Split
    ood: Split
    head: ClassifierHead


def compute_logits_f32(features: np.ndarray, head: ClassifierHead) -> np.ndarray:
    """Logits W x + b carried out entirely in f32.

    This is the reference path used both when generating predictions and
    when validating stored ones, so the two can be compared exactly.
    """
    return features.astype(np.float32, copy=False) @ head.weights.T + head.bias


def predict_f32(features: np.ndarray, head: ClassifierHead) -> np.ndarray:
    """Argmax of the f32 logits; np.argmax takes the lowest index on ties."""
    return np.argmax(compute_logits_f32(features, head), axis=1).astype(np.int32)


# ------------------------------------------------------------------ container


def _dtype_name(arr: np.ndarray) -> str:
    if arr.dtype == np.float32:
        return "f32"
    if arr.dtype == np.int32:
        return "i32"
    raise FormatError(f"unsupported dtype {arr.dtype}; only f32 and i32 tensors are storable")


def write_container(container: TensorContainer, destination: BinaryIO) -> int:
    """Serialize a container; returns the number of bytes written."""
    table = []
    chunks = []
    offset = 0
    for name, arr in container.entries.items():
        if not isinstance(name, str):
            raise FormatError("entry names must be strings")
        dtype_name = _dtype_name(arr)
        if dtype_name == "f32" and not np.isfinite(arr).all():
            raise FormatError(f"entry {name!r} contains non-finite values")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype_name]).tobytes()
        table.append(
            {
                "name": name,
                "dtype": dtype_name,
                "shape": [int(s) for s in arr.shape],
                "byte_offset": offset,
                "byte_length": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)

    header = json.dumps(
        {"entries": table, "meta": container.meta},
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    written = 0
    for part in (MAGIC, struct.pack("<B", FORMAT_VERSION), struct.pack("<I", len(header)), header, *chunks):
        destination.write(part)
        written += len(part)
    return written


def _header_int(record: dict, key: str) -> int:
    value = record.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise FormatError(f"header field {key!r} must be a non-negative integer")
    return value


def read_container(source: BinaryIO | bytes) -> TensorContainer:
    """Parse OMSB bytes; raises FormatError on any malformation, never partially succeeds."""
    data = source if isinstance(source, bytes) else source.read()
    if len(data) < 9:
        raise FormatError("file too short for OMSB header")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = data[4]
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    (hlen,) = struct.unpack_from("<I", data, 5)
    if 9 + hlen > len(data):
        raise FormatError("declared header length exceeds file size")
    try:
        header = json.loads(data[9 : 9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header is not valid UTF-8 JSON: {exc}") from exc
    payload = data[9 + hlen :]

    if not isinstance(header, dict) or not isinstance(header.get("entries"), list):
        raise FormatError("header must be an object with an 'entries' list")
    meta = header.get("meta", {})
    if not isinstance(meta, dict):
        raise FormatError("header 'meta' must be an object")

    entries: dict[str, np.ndarray] = {}
    spans = []
    for record in header["entries"]:
        if not isinstance(record, dict):
            raise FormatError("entry records must be objects")
        name = record.get("name")
        if not isinstance(name, str):
            raise FormatError("entry name must be a string")
        if name in entries:
            raise FormatError(f"duplicate entry name {name!r}")
        dtype_name = record.get("dtype")
        if dtype_name not in _DTYPES:
            raise FormatError(f"entry {name!r} has unknown dtype {dtype_name!r}")
        shape = record.get("shape")
        if not isinstance(shape, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in shape
        ):
            raise FormatError(f"entry {name!r} shape must be a list of non-negative integers")
        offset = _header_int(record, "byte_offset")
        length = _header_int(record, "byte_length")
        expected = int(math.prod(shape)) * 4
        if length != expected:
            raise FormatError(
                f"entry {name!r}: byte_length {length} does not match shape {shape} ({expected} expected)"
            )
        if offset + length > len(payload):
            raise FormatError(f"entry {name!r} extends past the end of the payload")
        spans.append((offset, offset + length, name))
        arr = np.frombuffer(payload, dtype=_DTYPES[dtype_name], count=int(math.prod(shape)), offset=offset)
        arr = arr.reshape(shape)
        if dtype_name == "f32" and not np.isfinite(arr).all():
            raise FormatError(f"entry {name!r} contains non-finite values")
        entries[name] = arr

    spans.sort()
    for (_, prev_end, prev_name), (start, _, name) in zip(spans, spans[1:]):
        if start < prev_end:
            raise FormatError(f"entries {prev_name!r} and {name!r} overlap in the payload")

    return TensorContainer(entries=entries, meta=meta)


def write_container_file(container: TensorContainer, path) -> int:
    with open(path, "wb") as fh:
        return write_container(container, fh)


def read_container_file(path) -> TensorContainer:
    with open(path, "rb") as fh:
        return read_container(fh)


# --------------------------------------------------------------------- bundle

_SPLIT_NAMES = ("train", "test_id", "ood")


def _require(container: TensorContainer, name: str, dtype: np.dtype, ndim: int) -> np.ndarray:
    arr = container.entries.get(name)
    if arr is None:
        raise SchemaError(f"missing entry {name!r}")
    if arr.dtype != dtype:
        raise SchemaError(f"entry {name!r} has dtype {arr.dtype}, expected {dtype}")
    if arr.ndim != ndim:
        raise SchemaError(f"entry {name!r} has rank {arr.ndim}, expected {ndim}")
    return arr


def load_bundle(container: TensorContainer) -> ScenarioBundle:
    """Assemble a ScenarioBundle from the fixed entry-name schema and validate it."""
    meta = container.meta
    name = meta.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError("meta.name must be a non-empty string")
    ood_kind = meta.get("ood_kind")
    if ood_kind not in OOD_KINDS:
        raise SchemaError(f"meta.ood_kind must be one of {OOD_KINDS}, got {ood_kind!r}")
    num_classes = meta.get("num_classes")
    if not isinstance(num_classes, int) or isinstance(num_classes, bool):
        raise SchemaError("meta.num_classes must be an integer")

    splits = {}
    for split_name in _SPLIT_NAMES:
        splits[split_name] = Split(
            features=_require(container, f"{split_name}.features", np.dtype("float32"), 2),
            labels=_require(container, f"{split_name}.labels", np.dtype("int32"), 1),
            predictions=_require(container, f"{split_name}.predictions", np.dtype("int32"), 1),
        )
    head = ClassifierHead(
        weights=_require(container, "head.weights", np.dtype("float32"), 2),
        bias=_require(container, "head.bias", np.dtype("float32"), 1),
    )

    bundle = ScenarioBundle(
        name=name,
        ood_kind=ood_kind,
        num_classes=num_classes,
        train=splits["train"],
        test_id=splits["test_id"],
        ood=splits["ood"],
        head=head,
    )
    validate_bundle(bundle)
    return bundle


def validate_bundle(bundle: ScenarioBundle) -> None:
    """Check every bundle invariant; raises ValidationError naming the first offender."""
    head = bundle.head
    k = head.num_classes
    d = head.dim
    if k < 2:
        raise ValidationError(f"head must have at least 2 classes, got {k}")
    if d < 1:
        raise ValidationError(f"head feature dimension must be at least 1, got {d}")
    if bundle.num_classes != k:
        raise ValidationError(
            f"meta num_classes {bundle.num_classes} does not match head rows {k}"
        )
    if head.bias.shape != (k,):
        raise ValidationError(f"head.bias shape {head.bias.shape} does not match ({k},)")
    if bundle.ood_kind not in OOD_KINDS:
        raise ValidationError(f"unknown ood_kind {bundle.ood_kind!r}")

    for split_name in _SPLIT_NAMES:
        split: Split = getattr(bundle, split_name)
        n = split.features.shape[0]
        if n < 1:
            raise ValidationError(f"{split_name}: splits must contain at least one sample")
        if split.features.shape[1] != d:
            raise ValidationError(
                f"{split_name}: feature dimension {split.features.shape[1]} does not match head ({d})"
            )
        if split.labels.shape != (n,) or split.predictions.shape != (n,):
            raise ValidationError(f"{split_name}: features/labels/predictions lengths disagree")

        preds = split.predictions
        bad = np.flatnonzero((preds < 0) | (preds >= k))
        if bad.size:
            raise ValidationError(
                f"{split_name}: prediction out of range [0, {k}) at sample {bad[0]}"
            )
        labels = split.labels
        bad = np.flatnonzero((labels != NOVEL_LABEL) & ((labels < 0) | (labels >= k)))
        if bad.size:
            raise ValidationError(f"{split_name}: invalid label at sample {bad[0]}")
        if split_name == "train":
            bad = np.flatnonzero(labels == NOVEL_LABEL)
            if bad.size:
                raise ValidationError(f"train: sentinel label -1 not allowed at sample {bad[0]}")

        recomputed = predict_f32(split.features, head)
        bad = np.flatnonzero(recomputed != preds)
        if bad.size:
            raise ValidationError(
                f"{split_name}: stored prediction differs from recomputed argmax at sample {bad[0]}"
            )

    if bundle.ood_kind == "novelty":
        bad = np.flatnonzero(bundle.ood.labels != NOVEL_LABEL)
        if bad.size:
            raise ValidationError(
                f"ood: novelty bundles require label -1 everywhere, violated at sample {bad[0]}"
            )


def bundle_to_container(bundle: ScenarioBundle) -> TensorContainer:
    """Inverse of load_bundle for valid bundles."""
    entries: dict[str, np.ndarray] = {}
    for split_name in _SPLIT_NAMES:
        split: Split = getattr(bundle, split_name)
        entries[f"{split_name}.features"] = split.features
        entries[f"{split_name}.labels"] = split.labels
        entries[f"{split_name}.predictions"] = split.predictions
    entries["head.weights"] = bundle.head.weights
    entries["head.bias"] = bundle.head.bias
    meta = {"name": bundle.name, "ood_kind": bundle.ood_kind, "num_classes": bundle.num_classes}
    return TensorContainer(entries=entries, meta=meta)
