"""Command-line entry point.

Subcommands: synth, train-seg, segment, train-attr, classify, importance,
kfold, serve. Every run writes a reproducibility record (full config,
seeds, input digests) into its output directory.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from facekit import __version__
from facekit.attrclass import (
    AttributeScheme,
    build_feature_vector,
    classify,
    load_attribute_model,
    save_attribute_model,
    train_attribute_model,
)
from facekit.checkpoint import load_network_params, save_checkpoint
from facekit.dataio import load_image, load_manifest, load_mask, normalize_illumination
from facekit.errors import DataError, FacekitError, FormatError, TrainingDiverged
from facekit.evalkit import emit_report, run_kfold
from facekit.faceseg import (
    ProbabilityMaps,
    export_pms,
    sample_training_patches,
    segment,
)
from facekit.hashing import file_digest
from facekit.importance import ForestConfig, extract_summary, importance_report, train_forest
from facekit.netspec import canonical_json
from facekit.network import Network, init_parameters
from facekit.palette import CLASS_COUNT
from facekit.profiles import load_profile
from facekit.rng import derive
from facekit.train import TrainConfig, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage problems, not argparse's 2
        raise _UsageError(message)


def _write_record(out_dir: Path, command: str, args: dict, inputs: dict, outputs: list):
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "tool": f"facekit {__version__}",
        "command": command,
        "arguments": args,
        "input_digests": inputs,
        "outputs": sorted(str(o) for o in outputs),
    }
    (out_dir / "run_record.json").write_text(canonical_json(record), "utf-8")


def _common(parser: argparse.ArgumentParser, out_required=True):
    parser.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    parser.add_argument("--profile", default="toy",
                        help="shipped profile name (paper, toy) or a profile JSON path")
    parser.add_argument("--out", required=out_required, help="output directory")


def _load_labeled(manifest, profile):
    images, masks = {}, {}
    for entry in manifest.entries:
        image = load_image(manifest.image_path(entry))
        if profile.normalize_illumination:
            image = normalize_illumination(image)
        images[entry.id] = image
        mask_path = manifest.mask_path(entry)
        if mask_path is not None:
            masks[entry.id] = load_mask(mask_path, expect_size=image.shape[1:])
    return images, masks


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    from facekit.synth import default_config, generate_synthetic

    out = Path(args.out)
    config = default_config(size=args.size, seed=args.seed)
    manifest = generate_synthetic(config, args.n, out)
    _write_record(
        out, "synth",
        {"n": args.n, "size": args.size, "seed": args.seed},
        {}, [out / "manifest.json"],
    )
    print(f"generated {args.n} faces under {out}")
    return 0


def _cmd_train_seg(args) -> int:
    profile = load_profile(args.profile)
    manifest = load_manifest(args.data)
    images, masks = _load_labeled(manifest, profile)
    masked_ids = sorted(masks)
    if not masked_ids:
        raise DataError("no masked entries in the manifest; nothing to train on")

    spec = profile.resolved_seg_network()
    patches = []
    reports = {}
    for eid in masked_ids:
        sampled, report = sample_training_patches(
            images[eid], masks[eid], profile.patch,
            seed=derive(args.seed, "sample", eid), per_class_quota=profile.patch_quota,
        )
        patches.extend(sampled)
        reports[eid] = report
    config = TrainConfig(
        epochs=args.epochs or profile.seg_train.epochs,
        learning_rate=profile.seg_train.learning_rate,
        momentum=profile.seg_train.momentum,
        batch_size=profile.seg_train.batch_size,
        seed=derive(args.seed, "seg-train"),
    )
    params = init_parameters(spec, derive(args.seed, "seg-init"))
    trained, history = train(spec, params, patches, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "seg_model.fpkt"
    save_checkpoint(
        model_path, spec, trained,
        {"kind": "segmentation-model", "train_config": config.to_dict(),
         "epochs_run": len(history), "profile": profile.name, "seed": args.seed},
    )
    for stats in history:
        print(f"epoch {stats.epoch}: loss {stats.loss:.4f} acc {stats.accuracy:.3f}")
    _write_record(
        out, "train-seg",
        {"data": str(args.data), "profile": args.profile, "seed": args.seed,
         "epochs": config.epochs, "patch_quota": profile.patch_quota},
        {e.id: e.digests for e in manifest.entries},
        [model_path],
    )
    print(f"saved {model_path}")
    return 0


def _load_seg_network(path, profile) -> Network:
    spec, params, meta = load_network_params(path)
    if meta.get("kind") not in (None, "segmentation-model"):
        raise DataError(f"{path}: checkpoint is a {meta.get('kind')}, not a segmentation model")
    return Network(spec, params)


def _cmd_segment(args) -> int:
    profile = load_profile(args.profile)
    net = _load_seg_network(args.model, profile)
    image = load_image(args.image)
    if profile.normalize_illumination:
        image = normalize_illumination(image)
    pms = segment(net, image, profile.patch, image_id=Path(args.image).stem)
    pms.validate()
    out = Path(args.out)
    written = export_pms(pms, out)
    _write_record(
        out, "segment",
        {"model": str(args.model), "image": str(args.image), "profile": args.profile,
         "seed": args.seed},
        {"model": file_digest(args.model), "image": file_digest(args.image)},
        written,
    )
    print(f"wrote {len(written)} files under {out}")
    return 0


def _cmd_train_attr(args) -> int:
    profile = load_profile(args.profile)
    manifest = load_manifest(args.data)
    scheme_doc = manifest.scheme or profile.attribute_scheme
    if scheme_doc is None:
        raise DataError(
            "no attribute scheme: neither the manifest nor the profile defines one"
        )
    scheme = AttributeScheme.from_dict(scheme_doc)
    net = _load_seg_network(args.seg_model, profile)
    images, _ = _load_labeled(manifest, profile)

    examples = []
    for entry in manifest.entries:
        if entry.label is None:
            continue
        pms = segment(net, images[entry.id], profile.patch, image_id=entry.id)
        examples.append((build_feature_vector(pms, profile.feature_size), entry.label))
    spec = profile.attribute_network(scheme.class_count)
    config = TrainConfig(
        epochs=args.epochs or profile.attr_train.epochs,
        learning_rate=profile.attr_train.learning_rate,
        momentum=profile.attr_train.momentum,
        batch_size=profile.attr_train.batch_size,
        seed=derive(args.seed, "attr-train"),
    )
    model, history = train_attribute_model(examples, spec, scheme, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "attr_model.fpkt"
    save_attribute_model(model_path, model, {"profile": profile.name, "seed": args.seed})
    for stats in history:
        print(f"epoch {stats.epoch}: loss {stats.loss:.4f} acc {stats.accuracy:.3f}")
    _write_record(
        out, "train-attr",
        {"data": str(args.data), "seg_model": str(args.seg_model),
         "profile": args.profile, "seed": args.seed, "epochs": config.epochs},
        {"seg_model": file_digest(args.seg_model)},
        [model_path],
    )
    print(f"saved {model_path}")
    return 0


def _cmd_classify(args) -> int:
    profile = load_profile(args.profile)
    model = load_attribute_model(args.model)
    seg_net = _load_seg_network(args.seg_model, profile)
    image = load_image(args.image)
    if profile.normalize_illumination:
        image = normalize_illumination(image)
    pms = segment(seg_net, image, profile.patch, image_id=Path(args.image).stem)
    fv = build_feature_vector(pms, profile.feature_size)
    label, probs = classify(model, fv)
    for name, p in zip(model.scheme.labels, probs):
        print(f"{name}: {p:.4f}")
    print(f"label: {label}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "classification.json").write_text(
            canonical_json({
                "image": str(args.image),
                "label": label,
                "probabilities": {n: float(p) for n, p in zip(model.scheme.labels, probs)},
            }), "utf-8")
        _write_record(
            out, "classify",
            {"model": str(args.model), "seg_model": str(args.seg_model),
             "image": str(args.image), "profile": args.profile, "seed": args.seed},
            {"model": file_digest(args.model), "image": file_digest(args.image)},
            [out / "classification.json"],
        )
    return 0


def _ground_truth_pms(mask: np.ndarray) -> ProbabilityMaps:
    """One-hot probability planes straight from a label mask."""
    planes = np.zeros((CLASS_COUNT, *mask.shape), dtype=np.float64)
    for cls in range(CLASS_COUNT):
        planes[cls][mask == cls] = 1.0
    return ProbabilityMaps(planes=planes)


def _cmd_importance(args) -> int:
    profile = load_profile(args.profile)
    manifest = load_manifest(args.data)
    images, masks = _load_labeled(manifest, profile)
    net = _load_seg_network(args.seg_model, profile) if args.seg_model else None

    rows, labels = [], []
    for entry in manifest.entries:
        if entry.label is None:
            continue
        if net is not None:
            pms = segment(net, images[entry.id], profile.patch, image_id=entry.id)
        elif entry.id in masks:
            pms = _ground_truth_pms(masks[entry.id])
        else:
            raise DataError(
                f"entry {entry.id!r} has no mask and no --seg-model was given"
            )
        rows.append(extract_summary(pms))
        labels.append(entry.label)
    if not rows:
        raise DataError("no labeled entries; nothing to analyze")

    config = ForestConfig(n_trees=args.trees, seed=derive(args.seed, "forest"))
    forest = train_forest((np.stack(rows), labels), config)
    report = importance_report(forest)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "importance.json"
    doc = report.to_dict()
    doc["oob_accuracy"] = forest.oob_accuracy_
    report_path.write_text(canonical_json(doc), "utf-8")
    written = [report_path]
    if not report.uninformative:
        from facekit.charts import bar_chart_png
        from facekit.palette import CLASS_COLORS, CLASS_NAMES

        chart_path = out / "importance.png"
        chart_path.write_bytes(
            bar_chart_png(report.per_class, CLASS_NAMES, colors=CLASS_COLORS,
                          title="per-class feature importance (mean decrease in impurity)")
        )
        written.append(chart_path)
    for cls_name in doc["ranking"]:
        print(f"{cls_name}: {doc['per_class'][cls_name]:.4f}")
    if report.uninformative:
        print("note: forest never split; importances are uninformative")
    _write_record(
        out, "importance",
        {"data": str(args.data), "seg_model": args.seg_model, "profile": args.profile,
         "seed": args.seed, "trees": args.trees},
        {e.id: e.digests for e in manifest.entries},
        written,
    )
    return 0


def _cmd_kfold(args) -> int:
    profile = load_profile(args.profile)
    manifest = load_manifest(args.data)
    result = run_kfold(
        manifest, profile, k=args.k, seed=args.seed,
        shared_seg_model=args.shared_seg_model,
        progress=(lambda msg: print(msg, flush=True)) if args.verbose else None,
    )

    report = None
    if not args.no_importance:
        rows, labels = [], []
        for entry in manifest.entries:
            mask = load_mask(manifest.mask_path(entry))
            rows.append(extract_summary(_ground_truth_pms(mask)))
            labels.append(entry.label)
        forest = train_forest(
            (np.stack(rows), labels), ForestConfig(seed=derive(args.seed, "forest"))
        )
        report = importance_report(forest)

    out = Path(args.out)
    written = emit_report(result, report, out)
    _write_record(
        out, "kfold",
        {"data": str(args.data), "profile": args.profile, "seed": args.seed,
         "k": args.k, "shared_seg_model": args.shared_seg_model},
        {e.id: e.digests for e in manifest.entries},
        written,
    )
    print(
        f"attribute accuracy: mean {result.cls.mean_accuracy:.4f} "
        f"(std {result.cls.std_accuracy:.4f})"
    )
    if result.seg_mean_accuracy is not None:
        print(
            f"segmentation accuracy: mean {result.seg_mean_accuracy:.4f} "
            f"(std {result.seg_std_accuracy:.4f})"
        )
    print(f"report under {out}")
    return 0


def _cmd_serve(args) -> int:
    from facekit.serve import serve_forever

    serve_forever(args.data, host=args.host, port=args.port, ui_dir=args.ui_dir)
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="facekit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"facekit {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("synth",
                       help="generate a synthetic labeled face dataset")
    _common(p)
    p.add_argument("--n", type=int, required=True, help="number of faces")
    p.add_argument("--size", type=int, default=32, help="image size (default 32)")
    p.set_defaults(run=_cmd_synth)

    p = sub.add_parser("train-seg",
                       help="train the face-parsing patch classifier")
    _common(p)
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--epochs", type=int, default=None, help="override profile epochs")
    p.set_defaults(run=_cmd_train_seg)

    p = sub.add_parser("segment",
                       help="emit probability maps for one image")
    _common(p)
    p.add_argument("--model", required=True, help="segmentation checkpoint (.fpkt)")
    p.add_argument("--image", required=True, help="input image (PNG)")
    p.set_defaults(run=_cmd_segment)

    p = sub.add_parser("train-attr",
                       help="train the attribute classifier on PM stacks")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--seg-model", required=True, help="segmentation checkpoint")
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(run=_cmd_train_attr)

    p = sub.add_parser("classify",
                       help="classify one image with both stages")
    _common(p, out_required=False)
    p.add_argument("--model", required=True, help="attribute checkpoint")
    p.add_argument("--seg-model", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(run=_cmd_classify)

    p = sub.add_parser("importance",
                       help="random-forest class importance analysis")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--seg-model", default=None,
                   help="optional checkpoint; defaults to ground-truth masks")
    p.add_argument("--trees", type=int, default=50)
    p.set_defaults(run=_cmd_importance)

    p = sub.add_parser("kfold",
                       help="k-fold evaluation of the whole pipeline")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--shared-seg-model", action="store_true",
                   help="train one segmentation model on all images (leaky protocol)")
    p.add_argument("--no-importance", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(run=_cmd_kfold)

    p = sub.add_parser("serve",
                       help="run the annotation service")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8377)
    p.add_argument("--ui-dir", default=None, help="built annotation UI bundle")
    p.set_defaults(run=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return 1
        return args.run(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (DataError, FormatError, FileNotFoundError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FacekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
