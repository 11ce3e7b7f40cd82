"""Binary and CSV persistence formats.

State files ("QSD1") and checkpoints ("QCK1") are little-endian binary with
a magic prefix; writes go through a temp file plus atomic rename, and a
fixed byte layout makes rerun outputs byte-identical for identical inputs.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .cae import ArchitectureSpec, CaeModel, encode_batch
from .errors import StorageError
from .linalg import DensityMatrix
from .nn.tensor import Tensor
from .pipeline import ThresholdRecord, TrainConfig
from .states import LabeledStateSet, StateFamily

STATE_MAGIC = b"QSD1"
CHECKPOINT_MAGIC = b"QCK1"
_STATE_HEADER = struct.Struct("<4sIIIQIQ")  # magic, version, d_a, d_b, count, family, seed
CSV_SCHEMA = "qent.errors.v1"


def _atomic_write(path, payload):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qent-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- state files ---------------------------------------------------------------


def write_states(path, state_set):
    """Write a LabeledStateSet as a QSD1 file (interleaved re/im float64)."""
    states = state_set.states
    if not states:
        raise StorageError("refusing to write an empty state file")
    n = states[0].dim
    d_a, d_b = states[0].dim_a, states[0].dim_b
    header = _STATE_HEADER.pack(
        STATE_MAGIC, 1, d_a, d_b, len(states), int(state_set.family), state_set.seed or 0
    )
    body = np.empty((len(states), n, n, 2), dtype="<f8")
    for i, state in enumerate(states):
        if state.mat.shape != (n, n):
            raise StorageError("mixed state dimensions in one file")
        body[i, :, :, 0] = state.mat.real
        body[i, :, :, 1] = state.mat.imag
    _atomic_write(path, header + body.tobytes())


def read_states(path):
    """Read a QSD1 file back into a LabeledStateSet."""
    try:
        with open(path, "rb") as fh:
            raw_header = fh.read(_STATE_HEADER.size)
            if len(raw_header) < _STATE_HEADER.size:
                raise StorageError(f"{path}: truncated header")
            magic, version, d_a, d_b, count, family, seed = _STATE_HEADER.unpack(raw_header)
            if magic != STATE_MAGIC:
                raise StorageError(f"{path}: bad magic {magic!r}")
            if version != 1:
                raise StorageError(f"{path}: unsupported version {version}")
            n = d_a * d_b
            body = np.fromfile(fh, dtype="<f8", count=count * n * n * 2)
    except OSError as exc:
        raise StorageError(str(exc)) from exc
    if body.size != count * n * n * 2:
        raise StorageError(f"{path}: payload length does not match count {count}")
    body = body.reshape(count, n, n, 2)
    mats = body[..., 0] + 1j * body[..., 1]
    states = [DensityMatrix(d_a, d_b, mats[i]) for i in range(count)]
    return LabeledStateSet(
        family=StateFamily(family), states=states, d=d_a, seed=seed or None
    )


# -- checkpoints -----------------------------------------------------------------


def _blob_entries(model):
    entries = [(name, model.params[name].data) for name in sorted(model.params)]
    for name in sorted(model.bn_states):
        state = model.bn_states[name]
        entries.append((f"{name}.running_mean", state.running_mean))
        entries.append((f"{name}.running_var", state.running_var))
    return entries


def write_checkpoint(path, model, threshold, train_config, init_recipe="kaiming_uniform_fanin_v1"):
    """Serialize a model with its threshold record and config echo."""
    side = model.spec.side
    reference_input = encode_batch(
        np.eye(side, dtype=np.complex128)[np.newaxis] / side, model.dtype
    )
    reference_output = model.predict(reference_input)
    entries = _blob_entries(model)
    entries.append(("reference.input", reference_input))
    entries.append(("reference.output", reference_output))

    blobs = []
    payload = bytearray()
    for name, arr in entries:
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        data = arr.astype(dtype, copy=False).tobytes()
        blobs.append(
            {"name": name, "dtype": dtype.str, "shape": list(arr.shape), "nbytes": len(data)}
        )
        payload.extend(data)

    header = {
        "format_version": 1,
        "arch": model.spec.to_dict(),
        "decoder_fixes": model.decoder_fixes,
        "dtype": np.dtype(model.dtype).str,
        "init_recipe": init_recipe,
        "train_config": train_config.to_dict() if train_config is not None else None,
        "threshold": threshold.to_dict() if threshold is not None else None,
        "blobs": blobs,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    prefix = CHECKPOINT_MAGIC + struct.pack("<IQ", 1, len(header_bytes))
    _atomic_write(path, prefix + header_bytes + bytes(payload))


def read_checkpoint(path, verify=False):
    """Load (model, threshold, train_config) from a checkpoint file.

    With verify=True the stored reference forward pass is recomputed and
    must match bit-for-bit.
    """
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise StorageError(f"{path}: bad magic {magic!r}")
            version, header_len = struct.unpack("<IQ", fh.read(12))
            if version != 1:
                raise StorageError(f"{path}: unsupported version {version}")
            header = json.loads(fh.read(header_len).decode("utf-8"))
            payload = fh.read()
    except OSError as exc:
        raise StorageError(str(exc)) from exc

    arrays = {}
    offset = 0
    for blob in header["blobs"]:
        nbytes = blob["nbytes"]
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise StorageError(f"{path}: truncated blob {blob['name']}")
        arrays[blob["name"]] = np.frombuffer(chunk, dtype=blob["dtype"]).reshape(blob["shape"]).copy()
        offset += nbytes

    spec = ArchitectureSpec.from_dict(header["arch"])
    model = CaeModel(spec, dtype=np.dtype(header["dtype"]))
    for name, layer in model._iter_layers():
        if layer.kind in ("Conv2D", "ConvTranspose2D"):
            model.params[f"{name}.weight"] = Tensor(arrays[f"{name}.weight"], requires_grad=True)
            model.params[f"{name}.bias"] = Tensor(arrays[f"{name}.bias"], requires_grad=True)
        elif layer.kind == "BatchNorm2D":
            model.params[f"{name}.gamma"] = Tensor(arrays[f"{name}.gamma"], requires_grad=True)
            model.params[f"{name}.beta"] = Tensor(arrays[f"{name}.beta"], requires_grad=True)
            from .nn.layers import BatchNormState

            state = BatchNormState(arrays[f"{name}.running_mean"].shape[0], dtype=model.dtype)
            state.running_mean = arrays[f"{name}.running_mean"]
            state.running_var = arrays[f"{name}.running_var"]
            model.bn_states[name] = state
    model._initialized = True

    if verify:
        recomputed = model.predict(arrays["reference.input"])
        if not np.array_equal(recomputed, arrays["reference.output"]):
            raise StorageError(f"{path}: reference forward pass mismatch after reload")

    threshold = ThresholdRecord.from_dict(header["threshold"]) if header["threshold"] else None
    config = TrainConfig.from_dict(header["train_config"]) if header["train_config"] else None
    return model, threshold, config


# -- CSV error traces --------------------------------------------------------------


def write_error_csv(path, report):
    """Write a ClassificationReport as a versioned CSV error trace."""
    lines = [f"# schema: {CSV_SCHEMA}", "sample_index,family,error,label"]
    for index, family, error, label in report.rows():
        lines.append(f"{index},{family},{error!r},{label}")
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_error_csv(path):
    """Read an error-trace CSV back as a list of row dicts."""
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh]
    except OSError as exc:
        raise StorageError(str(exc)) from exc
    if not lines or not lines[0].startswith("# schema:"):
        raise StorageError(f"{path}: missing schema header")
    schema = lines[0].split(":", 1)[1].strip()
    if schema != CSV_SCHEMA:
        raise StorageError(f"{path}: unsupported schema {schema}")
    for line in lines[2:]:
        if not line:
            continue
        index, family, error, label = line.split(",")
        rows.append(
            {"sample_index": int(index), "family": family, "error": float(error), "label": label}
        )
    return rows


def write_jsonl(path, records):
    """JSON-lines report (one object per line)."""
    lines = [json.dumps(record, sort_keys=True) for record in records]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))
