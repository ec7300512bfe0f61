"""
Checkpoint Format
=================

A checkpoint is a pair of files:

* ``<stem>.bin``: little-endian row-major tensor bytes, concatenated in
  manifest order. Each tensor keeps its own dtype: ``<f4`` for float32
  models (the shipped training configs) and ``<f8`` for the float64 default;
* ``<stem>.manifest.json``: ordered ``{name, shape, dtype, byte_offset}``
  entries plus free-form metadata (configs, optimizer step, counters).

Round-trips are bit-exact.
"""

import logging
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from ..core.errors import CheckpointError, DataError
from ..core.schemas import CheckpointManifest, TensorEntry
from ..utils.io import read_json, write_json

logger = logging.getLogger(__name__)

_LE_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}


def manifest_path_for(bin_path: Union[str, Path]) -> Path:
    bin_path = Path(bin_path)
    return bin_path.with_name(bin_path.stem + ".manifest.json")


def save_checkpoint(
    bin_path: Union[str, Path],
    tensors: Mapping[str, np.ndarray],
    metadata: Dict[str, Any],
) -> Path:
    """
    Write ``tensors`` (in mapping order) and ``metadata``.

    Returns:
        Path of the manifest file.
    """
    bin_path = Path(bin_path)
    entries = []
    offset = 0
    chunks = []
    for name, array in tensors.items():
        array = np.asarray(array)
        dtype_name = np.dtype(array.dtype).name
        if dtype_name not in _LE_DTYPES:
            raise CheckpointError(f"Tensor '{name}' has unsupported dtype {dtype_name}")
        raw = np.ascontiguousarray(array, dtype=_LE_DTYPES[dtype_name]).tobytes(order="C")
        entries.append(
            TensorEntry(name=name, shape=list(array.shape), dtype=dtype_name, byte_offset=offset)
        )
        chunks.append(raw)
        offset += len(raw)

    manifest = CheckpointManifest(tensors=entries, metadata=metadata)
    try:
        bin_path.parent.mkdir(parents=True, exist_ok=True)
        with bin_path.open("wb") as fh:
            for raw in chunks:
                fh.write(raw)
    except OSError as e:
        raise CheckpointError(f"Failed to write checkpoint {bin_path}: {e}") from e
    manifest_path = write_json(manifest_path_for(bin_path), manifest)
    logger.info(f"💾 Saved checkpoint {bin_path.name} ({len(entries)} tensors, {offset} bytes)")
    return manifest_path


def load_checkpoint(
    bin_path: Union[str, Path],
) -> Tuple["OrderedDict[str, np.ndarray]", Dict[str, Any]]:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: on missing files, truncated data or malformed entries,
            naming the offending tensor.
    """
    bin_path = Path(bin_path)
    try:
        manifest = read_json(manifest_path_for(bin_path), CheckpointManifest)
    except DataError as e:
        raise CheckpointError(str(e)) from e
    if manifest.format != "dmtf-ckpt" or manifest.version != 1:
        raise CheckpointError(
            f"Unsupported checkpoint format {manifest.format!r} v{manifest.version}"
        )
    try:
        blob = bin_path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Failed to read checkpoint {bin_path}: {e}") from e

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    expected = 0
    for entry in manifest.tensors:
        dtype = _LE_DTYPES[entry.dtype]
        count = int(np.prod(entry.shape)) if entry.shape else 1
        nbytes = count * dtype.itemsize
        if entry.byte_offset != expected:
            raise CheckpointError(
                f"Tensor '{entry.name}' starts at byte {entry.byte_offset}, expected {expected}"
            )
        if entry.byte_offset + nbytes > len(blob):
            raise CheckpointError(
                f"Tensor '{entry.name}' runs past the end of {bin_path.name}"
            )
        if entry.name in tensors:
            raise CheckpointError(f"Duplicate tensor name '{entry.name}'")
        flat = np.frombuffer(blob, dtype=dtype, count=count, offset=entry.byte_offset)
        tensors[entry.name] = flat.reshape(entry.shape).astype(dtype.newbyteorder("="), copy=True)
        expected += nbytes
    if expected != len(blob):
        raise CheckpointError(
            f"{bin_path.name} has {len(blob) - expected} trailing bytes not described by the manifest"
        )
    return tensors, manifest.metadata
