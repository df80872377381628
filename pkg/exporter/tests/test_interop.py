"""Conformance against the consuming engine, which must be installed.

The engine's own loader is the authority on the container format: files
written here have to load bit-exactly over there, and the two independent
pooled-feature implementations have to agree.
"""

import numpy as np
import torch

from atnexport.export import ExportSpec, export, load_image

from gesturekit.atn import load_tensor
from gesturekit.backbone import ActivationStack, global_average_pool


def test_exported_stacks_load_bit_exactly(make_pngs, tiny_net, tmp_path):
    images = tuple(make_pngs(2))
    out = tmp_path / "out"
    report = export(ExportSpec(tiny_net, ("stem", "mid"), images, out, input_size=32))

    # Recompute the activations independently of the export path.
    expected: dict[tuple[str, str], np.ndarray] = {}
    grabbed: dict[str, torch.Tensor] = {}
    handles = [
        getattr(tiny_net, name).register_forward_hook(
            lambda mod, args, output, name=name: grabbed.__setitem__(name, output)
        )
        for name in ("stem", "mid")
    ]
    try:
        with torch.no_grad():
            for image in images:
                tiny_net(load_image(image, 32))
                for name in ("stem", "mid"):
                    expected[(image, name)] = grabbed[name][0].numpy().astype(np.float32)
    finally:
        for handle in handles:
            handle.remove()

    assert len(report.entries) == 4
    for entry in report.entries:
        loaded = load_tensor(out / entry["file"])
        assert loaded.array.dtype == np.float32
        assert list(loaded.dims) == entry["dims"]
        assert np.array_equal(loaded.array, expected[(entry["image"], entry["layer"])])


def test_pooled_vectors_match_engine_gap_on_five_plus_images(make_pngs, tmp_path):
    images = tuple(make_pngs(6, seed=2))
    out = tmp_path / "out"
    report = export(
        ExportSpec("squeezenet1_1", ("features.12",), images, out, input_size=224, seed=0)
    )
    assert report.ok
    assert len(report.entries) == 6
    for entry in report.entries:
        stack = ActivationStack(
            layer_name=entry["layer"],
            maps=load_tensor(out / entry["file"]),
            source_extent=(224, 224),
        )
        gap = global_average_pool(stack).values.array
        assert np.max(np.abs(gap - np.asarray(entry["pooled"]))) <= 1e-5
