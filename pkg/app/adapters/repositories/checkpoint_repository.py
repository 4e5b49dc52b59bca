import base64
import json
from typing import Any, Dict

import numpy as np

from app.domain.entities.checkpoint import Checkpoint, CheckpointMetadata
from app.domain.entities.model_spec import HybridArch, ModelSpec
from app.domain.entities.parameters import Parameters
from app.domain.ports.out_port.ICheckpointRepository import ICheckpointRepository
from app.utils.constants import CHECKPOINT_FORMAT_VERSION
from app.utils.errors import CheckpointError, ErrorType, handle_checkpoint_error
from app.utils.logger import log

STORAGE_DTYPE = np.dtype("<f4")


def encode_tensor(value: np.ndarray) -> Dict[str, Any]:
    data = np.ascontiguousarray(value, dtype=STORAGE_DTYPE).tobytes()
    return {"shape": list(value.shape), "data": base64.b64encode(data).decode("ascii")}


def decode_tensor(entry: Dict[str, Any]) -> np.ndarray:
    shape = tuple(int(d) for d in entry["shape"])
    raw = base64.b64decode(entry["data"], validate=True)
    expected = int(np.prod(shape, dtype=np.int64)) * STORAGE_DTYPE.itemsize
    if len(raw) != expected:
        raise ValueError(f"tensor payload has {len(raw)} bytes, shape {list(shape)} needs {expected}")
    return np.frombuffer(raw, dtype=STORAGE_DTYPE).reshape(shape).astype(np.float64)


def checkpoint_to_dict(checkpoint: Checkpoint) -> Dict[str, Any]:
    return {
        "format_version": checkpoint.format_version,
        "model_spec": checkpoint.model_spec.model_dump(),
        "metadata": checkpoint.metadata.model_dump(),
        "arch": checkpoint.arch.mnemonics() if checkpoint.arch is not None else None,
        "alpha": {str(layer): [float(x) for x in logits] for layer, logits in sorted(checkpoint.alpha.items())},
        "tensors": {name: encode_tensor(value) for name, value in checkpoint.parameters.items()},
    }


def checkpoint_from_dict(payload: Dict[str, Any]) -> Checkpoint:
    version = payload["format_version"]
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            ErrorType.CHECKPOINT_VERSION,
            f"checkpoint format version {version} is not supported (expected {CHECKPOINT_FORMAT_VERSION})",
        )
    arch = payload.get("arch")
    return Checkpoint(
        model_spec=ModelSpec.model_validate(payload["model_spec"]),
        parameters=Parameters({name: decode_tensor(entry) for name, entry in payload["tensors"].items()}),
        metadata=CheckpointMetadata.model_validate(payload["metadata"]),
        arch=HybridArch.from_mnemonics(arch) if arch else None,
        alpha={int(layer): np.asarray(logits, dtype=np.float64) for layer, logits in payload.get("alpha", {}).items()},
        format_version=version,
    )


class CheckpointRepository(ICheckpointRepository):
    """JSON checkpoints with base-64 little-endian float32 tensors."""

    @handle_checkpoint_error
    def save_checkpoint(self, checkpoint: Checkpoint, path: str) -> str:
        target = self.ensure_parent(self.resolve(path))
        with open(target, "w", encoding="utf-8") as handle:
            json.dump(checkpoint_to_dict(checkpoint), handle, sort_keys=True)
        log(f"Checkpoint ({checkpoint.metadata.stage}) written to {target}")
        return target

    @handle_checkpoint_error
    def load_checkpoint(self, path: str) -> Checkpoint:
        source = self.resolve(path)
        with open(source, encoding="utf-8") as handle:
            payload = json.load(handle)
        if not isinstance(payload, dict):
            raise ValueError("checkpoint root is not an object")
        checkpoint = checkpoint_from_dict(payload)
        log(f"Checkpoint ({checkpoint.metadata.stage}) loaded from {source}")
        return checkpoint
