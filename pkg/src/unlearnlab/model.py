"""Encoder-plus-head classifier and its checkpoint container.

The model is a multilayer perceptron encoder whose final embedding is
scaled to unit Euclidean norm, followed by a linear classification head.
Normalized embeddings make dot products equal cosine similarities, which
is what the contrastive losses operate on.

Checkpoints are a self-describing binary container: magic bytes, format
version, a JSON header with the architecture and tensor manifest, then
little-endian float64 payloads and a CRC of the payload bytes. Saving
and loading round-trips bit-exactly.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import (
    CheckpointFormatError,
    CheckpointIntegrityError,
    DimensionError,
    ValidationError,
)
from .tensor import Tensor

_MAGIC = b"ULCK"
_FORMAT_VERSION = 1

ACTIVATIONS = {"relu": T.relu, "tanh": T.tanh}


@dataclass(frozen=True)
class ModelArchitecture:
    """Static shape description of the classifier.

    input_dim: feature count per sample.
    hidden: widths of the hidden layers, at least one.
    embedding_dim: dimension of the normalized embedding.
    num_classes: number of output classes.
    activation: nonlinearity applied after each hidden layer.
    """

    input_dim: int
    hidden: tuple[int, ...]
    embedding_dim: int
    num_classes: int
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        problems = []
        if self.input_dim < 1:
            problems.append("input_dim must be >= 1")
        if len(self.hidden) < 1:
            problems.append("at least one hidden layer is required")
        if any(h < 1 for h in self.hidden):
            problems.append("hidden widths must be >= 1")
        if self.embedding_dim < 1:
            problems.append("embedding_dim must be >= 1")
        if self.num_classes < 2:
            problems.append("num_classes must be >= 2")
        if self.activation not in ACTIVATIONS:
            problems.append(f"unknown activation {self.activation!r}")
        if problems:
            raise ValidationError("invalid architecture: " + "; ".join(problems), problems)

    def layer_dims(self) -> list[tuple[str, int, int]]:
        """(name, fan_in, fan_out) for every linear layer, in order."""
        dims = []
        fan_in = self.input_dim
        for i, width in enumerate(self.hidden):
            dims.append((f"enc{i}", fan_in, width))
            fan_in = width
        dims.append(("emb", fan_in, self.embedding_dim))
        dims.append(("head", self.embedding_dim, self.num_classes))
        return dims

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "embedding_dim": self.embedding_dim,
            "num_classes": self.num_classes,
            "activation": self.activation,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelArchitecture":
        return ModelArchitecture(
            input_dim=int(d["input_dim"]),
            hidden=tuple(int(h) for h in d["hidden"]),
            embedding_dim=int(d["embedding_dim"]),
            num_classes=int(d["num_classes"]),
            activation=str(d.get("activation", "relu")),
        )


class ModelParameters:
    """Named parameter tensors for one architecture.

    Tensors are keyed "<layer>.w" / "<layer>.b" and kept in a fixed
    order so gradient lists and SGD updates line up positionally.
    """

    def __init__(self, arch: ModelArchitecture, tensors: dict[str, Tensor]):
        expected = {}
        for name, fan_in, fan_out in arch.layer_dims():
            expected[f"{name}.w"] = (fan_in, fan_out)
            expected[f"{name}.b"] = (fan_out,)
        if set(tensors) != set(expected):
            raise DimensionError(
                f"parameter names {sorted(tensors)} do not match architecture "
                f"layers {sorted(expected)}"
            )
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise DimensionError(
                    f"parameter {name}: shape {tensors[name].shape}, expected {shape}"
                )
        self.arch = arch
        self.tensors = {name: tensors[name] for name in expected}

    def names(self) -> list[str]:
        return list(self.tensors)

    def as_list(self) -> list[Tensor]:
        return list(self.tensors.values())

    def replace(self, new_values: list[np.ndarray]) -> "ModelParameters":
        """New parameters with the same names, in positional order."""
        names = self.names()
        if len(new_values) != len(names):
            raise DimensionError(
                f"replace: got {len(new_values)} arrays for {len(names)} parameters"
            )
        return ModelParameters(
            self.arch, {n: Tensor(v) for n, v in zip(names, new_values)}
        )

    def equals(self, other: "ModelParameters") -> bool:
        """Bit-exact equality of architecture and every tensor."""
        if self.arch != other.arch or self.names() != other.names():
            return False
        return all(
            np.array_equal(self.tensors[n].data, other.tensors[n].data)
            for n in self.names()
        )


def init_parameters(arch: ModelArchitecture, seed: int) -> ModelParameters:
    """Deterministic initialization.

    Weights are uniform on (-s, s) with s = sqrt(6 / (fan_in + fan_out));
    biases start at zero. The draw order is fixed by layer order, so one
    seed always yields the same parameters.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, fan_in, fan_out in arch.layer_dims():
        s = np.sqrt(6.0 / (fan_in + fan_out))
        tensors[f"{name}.w"] = Tensor(rng.uniform(-s, s, size=(fan_in, fan_out)))
        tensors[f"{name}.b"] = Tensor(np.zeros(fan_out))
    return ModelParameters(arch, tensors)


def _check_batch(params: ModelParameters, x: Tensor) -> None:
    if x.ndim != 2:
        raise DimensionError(f"expected a batch of rank 2, got shape {x.shape}")
    if x.shape[1] != params.arch.input_dim:
        raise DimensionError(
            f"batch width {x.shape[1]} does not match input_dim {params.arch.input_dim}"
        )


def encode(params: ModelParameters, x) -> Tensor:
    """Unit-norm embeddings for a batch, shape (B, embedding_dim)."""
    x = T.as_tensor(x)
    _check_batch(params, x)
    act = ACTIVATIONS[params.arch.activation]
    h = x
    for i in range(len(params.arch.hidden)):
        h = act(T.add(T.matmul(h, params.tensors[f"enc{i}.w"]), params.tensors[f"enc{i}.b"]))
    e = T.add(T.matmul(h, params.tensors["emb.w"]), params.tensors["emb.b"])
    return T.l2_normalize(e)


def head_logits(params: ModelParameters, z) -> Tensor:
    """Class logits from embeddings, shape (B, num_classes)."""
    z = T.as_tensor(z)
    if z.ndim != 2 or z.shape[1] != params.arch.embedding_dim:
        raise DimensionError(
            f"embedding batch shape {z.shape} does not match embedding_dim "
            f"{params.arch.embedding_dim}"
        )
    return T.add(T.matmul(z, params.tensors["head.w"]), params.tensors["head.b"])


def forward(params: ModelParameters, x) -> Tensor:
    """Logits for a batch of raw features."""
    return head_logits(params, encode(params, x))


def predict_labels(params: ModelParameters, x) -> np.ndarray:
    """Predicted class per row; ties break to the lowest class index."""
    logits = forward(params, x).data
    return np.argmax(logits, axis=1)


def save_checkpoint(params: ModelParameters, path: str | Path) -> None:
    """Write the container described in the module docstring."""
    names = params.names()
    header = {
        "format_version": _FORMAT_VERSION,
        "architecture": params.arch.to_dict(),
        "tensors": [
            {"name": n, "shape": list(params.tensors[n].shape)} for n in names
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(
        params.tensors[n].data.astype("<f8").tobytes(order="C") for n in names
    )
    blob = (
        _MAGIC
        + struct.pack("<II", _FORMAT_VERSION, len(header_bytes))
        + header_bytes
        + payload
        + struct.pack("<I", zlib.crc32(payload))
    )
    Path(path).write_bytes(blob)


def load_checkpoint(path: str | Path) -> ModelParameters:
    """Read a checkpoint; the inverse of save_checkpoint, bit-exact."""
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != _MAGIC:
        raise CheckpointFormatError(f"{path}: not a model checkpoint")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != _FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported format version {version}")
    if len(blob) < 12 + header_len:
        raise CheckpointIntegrityError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
        arch = ModelArchitecture.from_dict(header["architecture"])
        manifest = header["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointIntegrityError(f"{path}: malformed header ({exc})") from exc

    payload_len = sum(
        int(np.prod(entry["shape"])) * 8 for entry in manifest
    )
    expected_len = 12 + header_len + payload_len + 4
    if len(blob) != expected_len:
        raise CheckpointIntegrityError(
            f"{path}: expected {expected_len} bytes, found {len(blob)}"
        )
    payload = blob[12 + header_len : 12 + header_len + payload_len]
    (crc_stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != crc_stored:
        raise CheckpointIntegrityError(f"{path}: payload checksum mismatch")

    tensors: dict[str, Tensor] = {}
    offset = 0
    for entry in manifest:
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        arr = np.frombuffer(payload[offset : offset + nbytes], dtype="<f8").reshape(shape)
        tensors[str(entry["name"])] = Tensor(arr)
        offset += nbytes
    try:
        return ModelParameters(arch, tensors)
    except DimensionError as exc:
        raise CheckpointIntegrityError(f"{path}: {exc}") from exc
