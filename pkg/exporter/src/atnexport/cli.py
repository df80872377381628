"""Command line for the activation exporter.

Exit codes: 0 success, 1 usage error, 2 data error (including layers that
were requested but missing from the model). Errors print one JSON line on
stderr so pipelines can parse failures.
"""

from __future__ import annotations

import argparse
import json
import sys

from .export import ExportSpec, export


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message: str):
        print(json.dumps({"error": message, "kind": "usage"}), file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="atn-export",
        description="Run a torchvision model over images and write named-layer "
        "activation stacks as .atn files plus a JSONL manifest.",
    )
    p.add_argument("--model", required=True, help="torchvision model id, e.g. resnet18")
    p.add_argument(
        "--weights",
        default=None,
        help="torchvision weights id, e.g. IMAGENET1K_V1 (default: fresh seeded init)",
    )
    p.add_argument("--layers", nargs="+", required=True, metavar="NAME",
                   help="module names from model.named_modules()")
    p.add_argument("--images", nargs="+", required=True, metavar="PATH")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=224, help="square input edge (default 224)")
    p.add_argument("--seed", type=int, default=0, help="init seed when --weights is absent")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        spec = ExportSpec(
            model=args.model,
            layers=tuple(args.layers),
            images=tuple(args.images),
            out_dir=args.out,
            input_size=args.size,
            weights=args.weights,
            seed=args.seed,
        )
        report = export(spec)
    except (FileNotFoundError, NotADirectoryError, IsADirectoryError, KeyError,
            RuntimeError, TypeError, ValueError, OSError) as exc:
        message = str(exc) or exc.__class__.__name__
        print(json.dumps({"error": message, "kind": "data"}), file=sys.stderr)
        return 2
    print(report.manifest)
    if report.missing_layers:
        print(
            json.dumps(
                {
                    "error": f"missing layers: {', '.join(report.missing_layers)}",
                    "kind": "data",
                    "missing_layers": list(report.missing_layers),
                }
            ),
            file=sys.stderr,
        )
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
