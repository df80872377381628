"""Command-line surface: one subcommand per workflow, composable in scripts.

Exit codes: 0 success, 1 usage error, 2 data error. Errors print one JSON
line on stderr so pipelines can parse failures. A global --config JSON file
supplies flag defaults; explicit flags always win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import reference
from .atn import AtnFormatError
from .backbone import SyntheticBackbone
from .caption import (
    END,
    START,
    Vocabulary,
    init_caption_weights,
    save_caption_weights,
    tokenize,
)
from .classifier import DenseSoftmaxHead, default_registry, save_classifier
from .dataset import (
    SampleRecord,
    load_frame,
    load_manifest,
    make_scene_specs,
    write_dataset,
)
from .engine import EngineError, load_session, predictions_to_jsonl, process_stream
from .filter_selection import (
    FSParams,
    grid_params,
    load_filter_set,
    localize,
    save_filter_set,
    select_filters,
    sweep,
)
from .metrics import (
    DetectionRecord,
    ModelPoint,
    average_precision,
    avg_iou,
    corpus_bleu,
    detection_prf,
    pareto_front,
    prf1,
    tally_from_labels,
)
from .pinch import ZoomAction, init_pinch_weights, save_pinch_weights
from .tensors import BBox
from .training import (
    CaptionModel,
    ClassifierModel,
    PinchModel,
    TrainConfig,
    TrainData,
    TrainReport,
    train,
    two_phase,
)

# Keys the global defaults file may set; anything else is a typo we refuse.
CONFIG_KEYS = {
    "seed", "extent", "scenes", "format", "layer", "top_n", "alpha", "beta",
    "kernel", "min_area", "lam", "k", "d", "epochs", "batch_size", "patience",
    "lr", "val_frac", "dim", "max_caption_len",
}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message: str):
        print(json.dumps({"error": message, "kind": "usage"}), file=sys.stderr)
        raise SystemExit(1)


def _data_error(message: str) -> SystemExit:
    print(json.dumps({"error": message, "kind": "data"}), file=sys.stderr)
    return SystemExit(2)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(out).write_text(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _backbone(args) -> SyntheticBackbone:
    return SyntheticBackbone(seed=args.seed, extent=(args.extent, args.extent))


def _records_with_frames(manifest_path: str) -> list[tuple[SampleRecord, Path]]:
    base = Path(manifest_path).parent
    out = []
    for record in load_manifest(manifest_path):
        if record.frame_path is None:
            raise ValueError(f"manifest {manifest_path} has a record without a frame path")
        out.append((record, base / record.frame_path))
    if not out:
        raise ValueError(f"manifest {manifest_path} is empty")
    return out


def _fs_params(args) -> FSParams:
    kwargs = dict(
        layer_name=args.layer, beta=args.beta, kernel=args.kernel, min_area=args.min_area
    )
    if args.alpha is not None:
        return FSParams(alpha=args.alpha, top_n=None, **kwargs)
    return FSParams(alpha=None, top_n=args.top_n, **kwargs)


# --- subcommands --------------------------------------------------------------


def _cmd_gen_data(args) -> int:
    specs = make_scene_specs(args.scenes, seed=args.seed, extent=(args.extent, args.extent))
    manifest = write_dataset(
        specs, args.out, seed=args.seed, fmt=args.format, extent=(args.extent, args.extent)
    )
    print(manifest)
    return 0


def _cmd_select_filters(args) -> int:
    backbone = _backbone(args)
    params = _fs_params(args)
    images = []
    for record, frame_path in _records_with_frames(args.manifest):
        if record.gesture != args.cls:
            continue
        if not record.fingertip_boxes:
            raise ValueError(f"record for {frame_path} has no ground-truth boxes")
        images.append((load_frame(frame_path), list(record.fingertip_boxes)))
    if not images:
        raise ValueError(f"no {args.cls!r} samples in {args.manifest}")
    fset = select_filters(backbone, args.layer, images, params, args.cls)
    save_filter_set(fset, args.out)
    print(args.out)
    return 0


def _cmd_localize(args) -> int:
    backbone = _backbone(args)
    fset = load_filter_set(args.fset)
    params = FSParams(
        layer_name=fset.layer_name, alpha=None, top_n=max(len(fset), 1),
        beta=args.beta, kernel=args.kernel, min_area=args.min_area,
    )
    result = localize(backbone, load_frame(args.frame), fset, params)
    doc = {"frame": args.frame, "class": fset.class_label,
           "boxes": [list(b.as_tuple()) for b in result.boxes]}
    _emit(json.dumps(doc, sort_keys=True) + "\n", args.out)
    return 0


def _features_and_labels(manifest_path, backbone, registry):
    samples = []
    for record, frame_path in _records_with_frames(manifest_path):
        if record.gesture not in registry:
            raise ValueError(f"unregistered gesture {record.gesture!r} in {manifest_path}")
        _, features = backbone.forward(load_frame(frame_path))
        samples.append((features.values.array.astype(np.float64), registry.by_name(record.gesture).index))
    return samples


def _pinch_pairs_from_manifest(manifest_path, backbone, layer, d):
    sequences: dict[str, list[tuple[int, np.ndarray, str]]] = {}
    for record, frame_path in _records_with_frames(manifest_path):
        if record.gesture != "Pinch":
            continue
        if record.sequence_id is None or record.zoom is None:
            raise ValueError(f"pinch record for {frame_path} lacks sequence_id or zoom")
        stacks, _ = backbone.forward(load_frame(frame_path), [layer])
        sequences.setdefault(record.sequence_id, []).append(
            (record.frame_index, stacks[layer].maps.array.astype(np.float64), record.zoom)
        )
    samples = []
    for seq_id in sorted(sequences):
        frames = sorted(sequences[seq_id], key=lambda e: e[0])
        arrays = [a for _, a, _ in frames]
        labels = [z for _, _, z in frames]
        for t in range(d, len(arrays)):
            samples.append(((arrays[t], arrays[t - d]), int(ZoomAction.from_label(labels[t]))))
    if not samples:
        raise ValueError(f"no usable pinch sequences in {manifest_path} (need > {d} frames each)")
    return samples


def _caption_samples(manifest_path, backbone, vocab):
    samples = []
    for record, frame_path in _records_with_frames(manifest_path):
        if not record.captions:
            continue
        _, features = backbone.forward(load_frame(frame_path))
        feats = features.values.array.astype(np.float64)
        for text in record.captions:
            samples.append((feats, [START] + vocab.encode(text) + [END]))
    if not samples:
        raise ValueError(f"no captioned samples in {manifest_path}")
    return samples


def _split_samples(samples, val_frac, seed):
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to split off a validation set")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_val = max(1, int(round(len(samples) * val_frac)))
    n_val = min(n_val, len(samples) - 1)
    val_idx = set(order[:n_val].tolist())
    train_s = [samples[i] for i in range(len(samples)) if i not in val_idx]
    val_s = [samples[i] for i in sorted(val_idx)]
    return TrainData(train_s, val_s)


def _report_rows(report: TrainReport, phase: str):
    for e in range(report.stopped_epoch):
        yield (
            phase, e + 1, f"{report.train_loss[e]:.6f}", f"{report.train_acc[e]:.6f}",
            f"{report.val_loss[e]:.6f}", f"{report.val_acc[e]:.6f}",
            1 if e + 1 == report.best_epoch else 0,
        )


def _cmd_train_head(args) -> int:
    backbone = _backbone(args)
    registry = default_registry()
    config = TrainConfig(
        max_epochs=args.epochs, batch_size=args.batch_size, patience=args.patience,
        lr=args.lr, seed=args.seed,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.head == "classify":
        build = lambda manifest: _split_samples(
            _features_and_labels(manifest, backbone, registry), args.val_frac, args.seed
        )
        real = build(args.manifest)
        feature_dim = len(real.train[0][0])
        model = ClassifierModel.init(len(registry), feature_dim, seed=args.seed)
        save = lambda: save_classifier(model.weights, out_dir)
    elif args.head == "pinch":
        build = lambda manifest: _split_samples(
            _pinch_pairs_from_manifest(manifest, backbone, args.layer, args.d),
            args.val_frac, args.seed,
        )
        real = build(args.manifest)
        (cur, _), _ = real.train[0]
        model = PinchModel(
            init_pinch_weights(cur.shape[0], (cur.shape[1], cur.shape[2]), seed=args.seed)
        )
        save = lambda: save_pinch_weights(model.weights, out_dir)
    elif args.head == "caption":
        texts = []
        for record, _ in _records_with_frames(args.manifest):
            texts.extend(record.captions)
        vocab = Vocabulary.from_corpus(texts)
        vocab.save(out_dir / "vocab.txt")
        build = lambda manifest: _split_samples(
            _caption_samples(manifest, backbone, vocab), args.val_frac, args.seed
        )
        real = build(args.manifest)
        feature_dim = len(real.train[0][0])
        model = CaptionModel(
            init_caption_weights(len(vocab), feature_dim, dim=args.dim, seed=args.seed)
        )
        save = lambda: save_caption_weights(model.weights, out_dir)
    else:
        raise ValueError(f"unknown head {args.head!r}")

    rows = []
    if args.synthetic is not None:
        first, second = two_phase(model, build(args.synthetic), real, config)
        rows.extend(_report_rows(first, "synthetic"))
        rows.extend(_report_rows(second, "real"))
    else:
        rows.extend(_report_rows(train(model, real, config), "real"))
    save()
    header = ("phase", "epoch", "train_loss", "train_acc", "val_loss", "val_acc", "best")
    (out_dir / "report.csv").write_text(_csv_text(header, rows))
    print(out_dir)
    return 0


def _frame_files(directory: str) -> list[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise NotADirectoryError(f"{directory} is not a directory")
    files = sorted(p for p in root.iterdir() if p.suffix in (".atn", ".ppm"))
    if not files:
        raise ValueError(f"no .atn or .ppm frames in {directory}")
    return files


def _cmd_simulate(args) -> int:
    session = load_session(args.session)
    frames = (load_frame(p) for p in _frame_files(args.frames))
    preds, timing = process_stream(session, frames)
    _emit(predictions_to_jsonl(preds), args.out)
    print(
        json.dumps(
            {
                "frames": timing.frames,
                "total_s": round(timing.total_s, 6),
                "stage_s": {k: round(v, 6) for k, v in timing.stage_s.items()},
                "backbone_calls": timing.backbone_calls,
                "head_calls": timing.head_calls,
            },
            sort_keys=True,
        ),
        file=sys.stderr,
    )
    return 0


def _read_jsonl(path: str) -> list[dict]:
    docs = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path} line {i + 1}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValueError(f"{path} line {i + 1}: expected a JSON object")
        docs.append(doc)
    if not docs:
        raise ValueError(f"{path} is empty")
    return docs


def _paired(pred_path: str, truth_path: str) -> list[tuple[dict, SampleRecord]]:
    preds = _read_jsonl(pred_path)
    truths = load_manifest(truth_path)
    if len(preds) != len(truths):
        raise ValueError(f"{len(preds)} predictions vs {len(truths)} truth records")
    return list(zip(preds, truths))


def _pred_label(doc: dict) -> str:
    if "label" in doc:
        return str(doc["label"])
    if "validated" in doc:
        # Engine output; an unset gate counts as the negative class.
        return doc["validated"] if doc["validated"] is not None else "None"
    raise ValueError(f"prediction line lacks a label: {doc}")


def _pred_payload(doc: dict, kind: str, field: str):
    if field in doc:
        return doc[field]
    response = doc.get("response")
    if isinstance(response, dict) and response.get("type") == kind:
        return response[field]
    raise ValueError(f"prediction line lacks {field!r}: {doc}")


def _prf1_csv(preds: list[str], truths: list[str]) -> str:
    report = prf1(tally_from_labels(preds, truths))
    rows = [
        (name, f"{p:.6f}", f"{r:.6f}", f"{f1:.6f}")
        for name, (p, r, f1) in sorted(report.per_class.items())
    ]
    rows.append(
        ("macro", f"{report.macro_precision:.6f}", f"{report.macro_recall:.6f}", f"{report.macro_f1:.6f}")
    )
    return _csv_text(("class", "precision", "recall", "f1"), rows)


def _cmd_evaluate(args) -> int:
    pairs = _paired(args.pred, args.truth)
    if args.task == "classify":
        text = _prf1_csv([_pred_label(d) for d, _ in pairs], [r.gesture for _, r in pairs])
    elif args.task == "detect":
        records = []
        for doc, record in pairs:
            boxes = _pred_payload(doc, "boxes", "boxes")
            scores = doc.get("scores", [1.0] * len(boxes))
            if len(scores) != len(boxes):
                raise ValueError(f"{len(scores)} scores for {len(boxes)} boxes")
            preds = [(BBox(*b), float(s)) for b, s in zip(boxes, scores)]
            records.append(DetectionRecord(preds, list(record.fingertip_boxes)))
        p, r, f1 = detection_prf(records, args.lam)
        rows = [
            ("precision", f"{p:.6f}"), ("recall", f"{r:.6f}"), ("f1", f"{f1:.6f}"),
            ("ap", f"{average_precision(records, args.lam):.6f}"),
            ("avg_iou", f"{avg_iou(records, args.lam):.6f}"),
        ]
        text = _csv_text(("metric", "value"), rows)
    elif args.task == "caption":
        candidates = []
        references = []
        for doc, record in pairs:
            if not record.captions:
                raise ValueError("caption evaluation needs reference captions in the manifest")
            candidates.append(tokenize(str(_pred_payload(doc, "caption", "text"))))
            references.append([tokenize(c) for c in record.captions])
        rows = [
            (f"bleu-{n}", f"{corpus_bleu(candidates, references, n):.6f}") for n in (1, 2, 3, 4)
        ]
        text = _csv_text(("metric", "value"), rows)
    elif args.task == "pinch":
        preds, truths = [], []
        for doc, record in pairs:
            if record.zoom is None:
                raise ValueError("pinch evaluation needs zoom labels in the manifest")
            preds.append(str(_pred_payload(doc, "zoom", "action")))
            truths.append(record.zoom)
        text = _prf1_csv(preds, truths)
    else:
        raise ValueError(f"unknown task {args.task!r}")
    _emit(text, args.out)
    return 0


def _cmd_sweep(args) -> int:
    doc = json.loads(Path(args.grid).read_text())
    allowed = {"layers", "top_ns", "betas", "kernels", "min_area", "lam", "class"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    grid = grid_params(
        layers=doc.get("layers", ["conv3"]),
        top_ns=doc.get("top_ns", [4]),
        betas=doc.get("betas", [0.92]),
        kernels=doc.get("kernels", [7]),
        min_area=int(doc.get("min_area", 1)),
    )
    cls = doc.get("class", args.cls)
    backbone = _backbone(args)
    images = []
    for record, frame_path in _records_with_frames(args.manifest):
        if record.gesture == cls and record.fingertip_boxes:
            images.append((load_frame(frame_path), list(record.fingertip_boxes)))
    if len(images) < 2:
        raise ValueError(f"need at least 2 {cls!r} samples to sweep, found {len(images)}")
    # Alternate frames between selection and evaluation so both sets see
    # every stimulus size.
    select_images = images[0::2]
    eval_images = images[1::2]
    rows = sweep(backbone, select_images, eval_images, grid, cls, lam=float(doc.get("lam", args.lam)))
    out_rows = [
        (
            r.params.layer_name, r.params.top_n, f"{r.params.beta:g}", r.params.kernel,
            r.params.min_area, r.n_selected, f"{r.f1:.6f}", 1 if r.best else 0,
        )
        for r in rows
    ]
    header = ("layer", "top_n", "beta", "kernel", "min_area", "n_selected", "f1", "best")
    _emit(_csv_text(header, out_rows), args.out)
    return 0


def _cmd_pareto(args) -> int:
    if args.points is None:
        points = reference.model_points()
    else:
        points = []
        with open(args.points, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"name", "f1", "params"} <= set(reader.fieldnames):
                raise ValueError(f"{args.points} must have name,f1,params columns")
            for line in reader:
                points.append(ModelPoint(line["name"], float(line["f1"]), float(line["params"])))
        if not points:
            raise ValueError(f"{args.points} holds no points")
    front = {p.name for p in pareto_front(points)}
    rows = [
        (p.name, f"{p.f1:g}", f"{p.params:g}", 1 if p.name in front else 0) for p in points
    ]
    _emit(_csv_text(("name", "f1", "params", "non_dominated"), rows), args.out)
    return 0


# --- parser -------------------------------------------------------------------


def _add_backbone_flags(p) -> None:
    p.add_argument("--seed", type=int, default=0, help="backbone and data seed")
    p.add_argument("--extent", type=int, default=224, help="square frame size in pixels")


def _add_fs_flags(p) -> None:
    p.add_argument("--layer", default="conv3", help="activation layer to use")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--top-n", dest="top_n", type=int, default=4, help="keep the n best filters")
    group.add_argument("--alpha", type=float, default=None, help="keep filters scoring above this")
    p.add_argument("--beta", type=float, default=0.92, help="activation threshold in [0,1)")
    p.add_argument("--kernel", type=int, default=7, help="odd dilation size")
    p.add_argument("--min-area", dest="min_area", type=int, default=1, help="drop blobs smaller than this")


def _build_parser() -> _Parser:
    parser = _Parser(prog="gesturekit", description=__doc__)
    parser.add_argument("--config", default=None, help="JSON file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="render synthetic scenes plus a manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=60)
    p.add_argument("--format", choices=("atn", "ppm"), default="atn")
    _add_backbone_flags(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("select-filters", help="pick the filters that localize a class")
    p.add_argument("--manifest", required=True)
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--out", required=True)
    _add_fs_flags(p)
    _add_backbone_flags(p)
    p.set_defaults(func=_cmd_select_filters)

    p = sub.add_parser("localize", help="boxes for one frame from a saved filter set")
    p.add_argument("--fset", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--beta", type=float, default=0.92)
    p.add_argument("--kernel", type=int, default=7)
    p.add_argument("--min-area", dest="min_area", type=int, default=1)
    _add_backbone_flags(p)
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("train-head", help="train one specialized head")
    p.add_argument("--head", choices=("classify", "pinch", "caption"), required=True)
    p.add_argument("--manifest", required=True, help="real training manifest")
    p.add_argument("--synthetic", default=None, help="optional first-phase manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--val-frac", dest="val_frac", type=float, default=0.2)
    p.add_argument("--layer", default="conv3", help="stack layer for the pinch head")
    p.add_argument("--d", type=int, default=5, help="pinch lookback in frames")
    p.add_argument("--dim", type=int, default=256, help="caption embedding width")
    _add_backbone_flags(p)
    p.set_defaults(func=_cmd_train_head)

    p = sub.add_parser("simulate", help="run the engine over a directory of frames")
    p.add_argument("--session", required=True, help="session config JSON")
    p.add_argument("--frames", required=True, help="directory of .atn/.ppm frames")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="score predictions against a truth manifest")
    p.add_argument("--task", choices=("classify", "detect", "caption", "pinch"), required=True)
    p.add_argument("--pred", required=True, help="JSON-lines predictions")
    p.add_argument("--truth", required=True, help="truth manifest")
    p.add_argument("--lam", type=float, default=0.5, help="IoU threshold for detect")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="detection F1 over a parameter grid")
    p.add_argument("--grid", required=True, help="JSON grid file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--class", dest="cls", default="Point")
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--out", default=None)
    _add_backbone_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("pareto", help="flag non-dominated (f1, params) points")
    p.add_argument("--points", default=None, help="CSV with name,f1,params; bundled table if omitted")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_pareto)

    return parser


def _apply_config_defaults(parser: _Parser, argv) -> None:
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if known.config is None:
        return
    try:
        doc = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise _data_error(f"cannot read config {known.config}: {exc}")
    if not isinstance(doc, dict):
        raise _data_error(f"config {known.config} must be a JSON object")
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise _data_error(f"unknown config keys: {sorted(unknown)}")
    # top_n and alpha are mutually exclusive; an explicit flag silences the
    # config's value for its rival so the flag decides the mode.
    if "--top-n" in argv:
        doc.pop("alpha", None)
    if "--alpha" in argv:
        doc.pop("top_n", None)
    # Subparsers parse into a fresh namespace and re-apply their own defaults,
    # so the defaults must be planted on every subparser, not just the root.
    parser.set_defaults(**doc)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                dests = {a.dest for a in sub._actions}
                sub.set_defaults(**{k: v for k, v in doc.items() if k in dests})


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except BrokenPipeError:
        return 0
    except (AtnFormatError, EngineError, FileNotFoundError, NotADirectoryError,
            IsADirectoryError, KeyError, TypeError, ValueError, OSError) as exc:
        message = str(exc) or exc.__class__.__name__
        print(json.dumps({"error": message, "kind": "data"}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
