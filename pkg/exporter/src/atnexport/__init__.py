"""Export named torchvision layer activations as .atn files + JSONL manifest."""

from .container import tensor_bytes, write_tensor
from .export import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    MANIFEST_NAME,
    ExportReport,
    ExportSpec,
    export,
    load_image,
    resolve_model,
)

__all__ = [
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "MANIFEST_NAME",
    "ExportReport",
    "ExportSpec",
    "export",
    "load_image",
    "resolve_model",
    "tensor_bytes",
    "write_tensor",
]
