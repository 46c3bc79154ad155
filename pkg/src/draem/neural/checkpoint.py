"""Self-describing checkpoint container.

Layout::

    b"DRAEMCKP"  magic (8 bytes)
    uint32 LE    format version
    uint64 LE    header length in bytes
    header       UTF-8 JSON: architecture, variant, run config, step/epoch
                 counters, payload CRC32 and the tensor table
                 [{name, dims, dtype, offset, nbytes}, ...]
    payload      concatenated little-endian tensor data ("<f4" or "<i8")
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .networks import ArchitectureSpec, DraemModel
from .optim import Adam

MAGIC = b"DRAEMCKP"
FORMAT_VERSION = 1
_DTYPES = {torch.float32: "<f4", torch.int64: "<i8"}


class CheckpointError(ValueError):
    pass


class ArchitectureMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model: DraemModel
    optimizer: Adam | None
    config: dict
    step: int
    epoch: int


def _tensor_table(model: DraemModel, optimizer: Adam | None) -> dict[str, torch.Tensor]:
    table = {f"model.{k}": v for k, v in model.state_dict().items()}
    if optimizer is not None:
        table.update(optimizer.state_tensors())
    return table


def checkpoint_save(path, model: DraemModel, optimizer: Adam | None = None, config: dict | None = None,
                    step: int = 0, epoch: int = 0) -> None:
    entries, chunks, offset = [], [], 0
    for name, tensor in _tensor_table(model, optimizer).items():
        t = tensor.detach().cpu()
        if t.dtype not in _DTYPES:
            t = t.float()
        data = t.contiguous().numpy().astype(_DTYPES[t.dtype], copy=False).tobytes()
        entries.append({"name": name, "dims": list(t.shape), "dtype": _DTYPES[t.dtype],
                        "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": model.arch.to_dict(),
        "variant": model.variant,
        "config": config or {},
        "step": int(step),
        "epoch": int(epoch),
        "optimizer": None if optimizer is None else {
            "beta1": optimizer.beta1, "beta2": optimizer.beta2, "eps": optimizer.eps,
            "step_count": optimizer.step_count,
        },
        "payload_crc32": zlib.crc32(payload),
        "tensors": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(blob)) + blob + payload)
    tmp.replace(path)


def read_header(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    try:
        header = json.loads(raw[20:20 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    payload = raw[20 + hlen:]
    if zlib.crc32(payload) != header.get("payload_crc32"):
        raise CheckpointError(f"{path}: payload checksum mismatch")
    return header, payload


def checkpoint_load(path, expected_arch: ArchitectureSpec | None = None,
                    expected_variant: str | None = None) -> Checkpoint:
    header, payload = read_header(path)
    arch = ArchitectureSpec(**header["architecture"])
    if expected_arch is not None and arch != expected_arch:
        raise ArchitectureMismatchError(
            f"checkpoint architecture {arch} does not match expected {expected_arch}")
    if expected_variant is not None and header["variant"] != expected_variant:
        raise ArchitectureMismatchError(
            f"checkpoint variant {header['variant']!r} does not match {expected_variant!r}")

    tensors = {}
    for e in header["tensors"]:
        chunk = payload[e["offset"]:e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated tensor {e['name']}")
        arr = np.frombuffer(chunk, dtype=e["dtype"]).reshape(e["dims"])
        tensors[e["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True))

    model = DraemModel(arch, header["variant"])
    state = {k[len("model."):]: v for k, v in tensors.items() if k.startswith("model.")}
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise ArchitectureMismatchError(f"{path}: tensor table does not fit the model ({exc})") from exc

    optimizer = None
    opt = header.get("optimizer")
    if opt is not None:
        optimizer = Adam(dict(model.named_parameters()), opt["beta1"], opt["beta2"], opt["eps"])
        try:
            optimizer.load_state_tensors(tensors, opt["step_count"])
        except KeyError as exc:
            raise CheckpointError(f"{path}: missing optimizer tensor {exc}") from exc
    return Checkpoint(model, optimizer, header["config"], header["step"], header["epoch"])
