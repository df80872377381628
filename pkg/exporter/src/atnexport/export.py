"""Run a vision model over images and export named-layer activations.

Forward hooks capture the requested modules' outputs; each (image, layer)
pair becomes one .atn file plus one manifest line carrying the file name,
dims, and the globally pooled per-filter means. Layers that do not exist
in the model, or exist but never fire during the forward pass, are
reported as missing rather than failing the whole run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torchvision import models
from torchvision.io import ImageReadMode, decode_image
from torchvision.transforms.functional import resize

from .container import write_tensor

# Channel statistics the torchvision pretrained zoo expects.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

MANIFEST_NAME = "manifest.jsonl"

__all__ = [
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "MANIFEST_NAME",
    "ExportSpec",
    "ExportReport",
    "export",
    "load_image",
    "resolve_model",
]


@dataclass(frozen=True)
class ExportSpec:
    """What to run, where to tap it, and what to feed it."""

    model: str | nn.Module
    layers: tuple[str, ...]
    images: tuple[str, ...]
    out_dir: str | Path
    input_size: int = 224
    weights: str | None = None  # torchvision weights id, e.g. "IMAGENET1K_V1"
    seed: int = 0  # init seed when weights is None
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("no layers requested")
        if not self.images:
            raise ValueError("no images to export")
        if self.input_size < 1:
            raise ValueError(f"input size must be positive, got {self.input_size}")


@dataclass(frozen=True)
class ExportReport:
    manifest: Path
    entries: tuple[dict, ...]
    missing_layers: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.missing_layers


def resolve_model(spec: ExportSpec) -> nn.Module:
    if isinstance(spec.model, nn.Module):
        return spec.model.eval()
    if spec.weights is None:
        # A fresh init must be reproducible or re-exports silently drift.
        torch.manual_seed(spec.seed)
    return models.get_model(spec.model, weights=spec.weights).eval()


def load_image(path, size: int, mean=IMAGENET_MEAN, std=IMAGENET_STD) -> torch.Tensor:
    """Decode, resize, and normalize one image into a (1, 3, size, size) batch."""
    img = decode_image(str(path), mode=ImageReadMode.RGB)
    x = resize(img.to(torch.float32) / 255.0, [size, size], antialias=True)
    m = torch.tensor(mean, dtype=torch.float32).view(3, 1, 1)
    s = torch.tensor(std, dtype=torch.float32).view(3, 1, 1)
    return ((x - m) / s).unsqueeze(0)


def _keep(store: dict, name: str):
    def hook(module, args, output):
        store[name] = output

    return hook


def _as_stack(output: torch.Tensor, layer: str) -> np.ndarray:
    if not isinstance(output, torch.Tensor) or output.ndim != 4 or output.shape[0] != 1:
        got = tuple(output.shape) if isinstance(output, torch.Tensor) else type(output).__name__
        raise ValueError(f"layer {layer!r} produced {got}, expected a (1, c, h, w) tensor")
    return np.ascontiguousarray(output[0].detach().cpu().numpy(), dtype=np.float32)


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def export(spec: ExportSpec) -> ExportReport:
    model = resolve_model(spec)
    modules = dict(model.named_modules())
    requested = list(dict.fromkeys(spec.layers))
    present = [layer for layer in requested if layer in modules]

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    captured: dict[str, torch.Tensor] = {}
    handles = [modules[name].register_forward_hook(_keep(captured, name)) for name in present]
    fired: set[str] = set()
    entries: list[dict] = []
    try:
        with torch.no_grad():
            for idx, image in enumerate(spec.images):
                x = load_image(image, spec.input_size, spec.mean, spec.std)
                captured.clear()
                model(x)
                for layer in present:
                    if layer not in captured:
                        continue  # module exists but the forward pass never ran it
                    fired.add(layer)
                    stack = _as_stack(captured[layer], layer)
                    fname = f"{idx:04d}_{_safe(Path(image).stem)}__{_safe(layer)}.atn"
                    write_tensor(stack, out_dir / fname)
                    entries.append(
                        {
                            "image": str(image),
                            "layer": layer,
                            "file": fname,
                            "dims": list(stack.shape),
                            "pooled": [float(v) for v in stack.mean(axis=(1, 2), dtype=np.float64)],
                        }
                    )
    finally:
        for handle in handles:
            handle.remove()

    manifest = out_dir / MANIFEST_NAME
    with manifest.open("w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    missing = tuple(layer for layer in requested if layer not in fired)
    return ExportReport(manifest=manifest, entries=tuple(entries), missing_layers=missing)
