"""Checkpoint archives, readers and pretrained-weight loading.

The native archive is safetensors: a JSON index (name -> dtype, shape, byte offsets) followed
by the raw tensor bytes, with the provenance tag and any extra strings in the archive metadata.
PyTorch ``state_dict`` pickles (``.pt``/``.pth``) are read through a second reader so public
2D checkpoints can be inflated onto the 3D network.
"""

from __future__ import annotations

import logging
import os
import pickle
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import torch
from pydantic import BaseModel
from safetensors import SafetensorError, safe_open
from safetensors.torch import save_file

from corads_grader.errors import CheckpointError
from corads_grader.models.base import HEAD_PREFIX, GradingNetwork
from corads_grader.models.inflation import adapt_input_channels, inflate_kernel

logger = logging.getLogger(__name__)

PROVENANCE_KEY = "provenance"


@dataclass
class Checkpoint:
    """Named weight tensors plus a provenance tag such as ``imagenet-2d`` or ``kinetics-3d``."""

    tensors: dict[str, torch.Tensor]
    provenance: str
    metadata: dict[str, str] = field(default_factory=dict)


class CheckpointReader(ABC):
    @abstractmethod
    def suffixes(self) -> tuple[str, ...]:
        """File suffixes this reader handles."""

    @abstractmethod
    def read(self, path: Path) -> Checkpoint:
        """Load every tensor in ``path`` onto the CPU."""


class SafetensorsReader(CheckpointReader):
    def suffixes(self) -> tuple[str, ...]:
        return (".safetensors",)

    def read(self, path: Path) -> Checkpoint:
        try:
            with safe_open(str(path), framework="pt", device="cpu") as archive:
                metadata = dict(archive.metadata() or {})
                tensors = {name: archive.get_tensor(name) for name in archive.keys()}
        except (SafetensorError, OSError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
        provenance = metadata.pop(PROVENANCE_KEY, path.stem)
        return Checkpoint(tensors=tensors, provenance=provenance, metadata=metadata)


class TorchStateDictReader(CheckpointReader):
    """Plain or wrapped (``{"state_dict": ...}``) PyTorch state dicts."""

    def suffixes(self) -> tuple[str, ...]:
        return (".pt", ".pth")

    def read(self, path: Path) -> Checkpoint:
        try:
            payload = torch.load(path, map_location="cpu", weights_only=True)
        except (RuntimeError, OSError, EOFError, pickle.UnpicklingError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
        for key in ("state_dict", "model"):
            if isinstance(payload, dict) and isinstance(payload.get(key), dict):
                payload = payload[key]
        if not isinstance(payload, dict):
            raise CheckpointError(f"{path} does not hold a state dict")
        tensors = {
            name.removeprefix("module."): value
            for name, value in payload.items()
            if isinstance(value, torch.Tensor)
        }
        return Checkpoint(tensors=tensors, provenance=path.stem)


class CheckpointReaderRegistry:
    def __init__(self) -> None:
        self._readers: dict[str, CheckpointReader] = {}

    def register(self, reader: CheckpointReader) -> None:
        for suffix in reader.suffixes():
            if suffix in self._readers:
                raise ValueError(f"Suffix '{suffix}' already has a checkpoint reader")
            self._readers[suffix] = reader

    def get(self, path: Path) -> CheckpointReader:
        reader = self._readers.get(path.suffix.lower())
        if reader is None:
            raise CheckpointError(f"no checkpoint reader for '{path.name}'")
        return reader


checkpoint_readers = CheckpointReaderRegistry()
checkpoint_readers.register(SafetensorsReader())
checkpoint_readers.register(TorchStateDictReader())


def read_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    checkpoint = checkpoint_readers.get(path).read(path)
    logger.info(
        "Read checkpoint %s (%d tensors, provenance %s)",
        path,
        len(checkpoint.tensors),
        checkpoint.provenance,
    )
    return checkpoint


def write_checkpoint(
    tensors: dict[str, torch.Tensor],
    path: str | Path,
    provenance: str,
    metadata: dict[str, str] | None = None,
) -> None:
    """Write a safetensors archive atomically (temp file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {name: t.detach().cpu().contiguous().clone() for name, t in tensors.items()}
    tmp = path.with_name(path.name + ".tmp")
    save_file(payload, str(tmp), metadata={**(metadata or {}), PROVENANCE_KEY: provenance})
    os.replace(tmp, path)


def save_model(
    model: GradingNetwork,
    path: str | Path,
    provenance: str,
    metadata: dict[str, str] | None = None,
) -> None:
    write_checkpoint(model.state_dict(), path, provenance, metadata)


def load_model_weights(model: GradingNetwork, path: str | Path) -> Checkpoint:
    """Load a checkpoint written for exactly this architecture."""
    checkpoint = read_checkpoint(path)
    try:
        model.load_state_dict(checkpoint.tensors, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path} does not fit the model: {exc}") from None
    return checkpoint


class TensorStatus(str, Enum):
    MATCHED = "matched"
    INFLATED = "inflated"
    ADAPTED = "adapted"
    INITIALIZED = "initialized"


class TensorLoad(BaseModel):
    name: str
    status: TensorStatus
    source_shape: list[int] | None = None
    target_shape: list[int]
    channel_adapted: bool = False


class LoadReport(BaseModel):
    """Per-tensor outcome of :func:`load_pretrained`."""

    provenance: str
    entries: list[TensorLoad]
    unused: list[str] = []

    def counts(self) -> dict[str, int]:
        counter = Counter(e.status.value for e in self.entries)
        return {s.value: counter.get(s.value, 0) for s in TensorStatus}

    def names_with(self, status: TensorStatus) -> list[str]:
        return [e.name for e in self.entries if e.status is status]

    @property
    def fraction_matched(self) -> float:
        return len(self.names_with(TensorStatus.MATCHED)) / max(len(self.entries), 1)


def _fit_tensor(
    name: str, source: torch.Tensor, target: torch.Tensor, is_input_layer: bool
) -> tuple[torch.Tensor, bool, bool]:
    value, inflated, adapted = source, False, False
    if source.ndim == 4 and target.ndim == 5:
        value, inflated = inflate_kernel(source, target.shape[2]), True
    if (
        is_input_layer
        and value.ndim == target.ndim
        and value.shape[1] != target.shape[1]
        and value.shape[0] == target.shape[0]
        and value.shape[2:] == target.shape[2:]
    ):
        value, adapted = adapt_input_channels(value, target.shape[1]), True
    if value.shape != target.shape:
        raise CheckpointError(
            f"'{name}': checkpoint shape {tuple(source.shape)} cannot be mapped onto "
            f"{tuple(target.shape)}"
        )
    return value, inflated, adapted


def load_pretrained(model: GradingNetwork, checkpoint: Checkpoint) -> LoadReport:
    """Copy ``checkpoint`` into ``model``, inflating 2D kernels and adapting input channels.

    Head tensors (``fc.*``) that are missing or shaped differently are freshly initialized.
    Any other missing tensor or unresolvable shape raises CheckpointError.
    """
    target_state = model.state_dict()
    source = checkpoint.tensors
    input_weight = model.input_weight_name

    head_names = [n for n in target_state if n.startswith(HEAD_PREFIX)]
    head_fits = all(n in source and source[n].shape == target_state[n].shape for n in head_names)

    new_state: dict[str, torch.Tensor] = {}
    entries: list[TensorLoad] = []
    missing: list[str] = []
    for name, target in target_state.items():
        if name.endswith("num_batches_tracked"):
            new_state[name] = target
            continue
        src = source.get(name)
        source_shape = list(src.shape) if src is not None else None
        if name in head_names and not head_fits:
            new_state[name] = target
            entries.append(
                TensorLoad(
                    name=name,
                    status=TensorStatus.INITIALIZED,
                    source_shape=source_shape,
                    target_shape=list(target.shape),
                )
            )
            continue
        if src is None:
            missing.append(name)
            continue
        value, inflated, adapted = _fit_tensor(name, src, target, name == input_weight)
        if inflated:
            status = TensorStatus.INFLATED
        elif adapted:
            status = TensorStatus.ADAPTED
        else:
            status = TensorStatus.MATCHED
        new_state[name] = value.to(dtype=target.dtype)
        entries.append(
            TensorLoad(
                name=name,
                status=status,
                source_shape=source_shape,
                target_shape=list(target.shape),
                channel_adapted=adapted,
            )
        )

    if missing:
        shown = ", ".join(missing[:5])
        raise CheckpointError(
            f"checkpoint '{checkpoint.provenance}' lacks {len(missing)} tensors ({shown}"
            f"{', ...' if len(missing) > 5 else ''})"
        )

    model.load_state_dict(new_state, strict=True)
    if not head_fits:
        model.reset_head()

    report = LoadReport(
        provenance=checkpoint.provenance,
        entries=entries,
        unused=sorted(set(source) - set(target_state)),
    )
    logger.info("Loaded pretrained weights from %s: %s", checkpoint.provenance, report.counts())
    return report
