"""Command line entry point wiring the pipeline together.

Every run writes a config echo (the parsed arguments as JSON) into its
output directory for provenance. Seeds are mandatory wherever randomness
is involved; there is no wall-clock fallback. Exit codes: 0 success,
2 argument/validation error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _default_out() -> str | None:
    return os.environ.get("SLAPSEG_DATA_DIR")


def _echo_config(args: argparse.Namespace, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    (out_dir / f"run_config_{args.command}.json").write_text(json.dumps(doc, indent=1, sort_keys=True))


def _load_manifest(path: str):
    from .synthgen import read_manifest

    return read_manifest(path)


def _load_fold(splits_path: str, fold: int):
    from .synthgen import read_splits

    assignments = read_splits(splits_path)
    for a in assignments:
        if a.fold == fold:
            return a
    raise SystemExit(f"fold {fold} not present in {splits_path}")


# -- subcommand implementations ----------------------------------------------


def cmd_gen(args) -> int:
    from .synthgen import generate_dataset

    out = Path(args.out)
    _echo_config(args, out)
    manifest = generate_dataset(
        n_adult_subjects=args.adults,
        n_juvenile_subjects=args.juveniles,
        slaps_per_subject=args.per_subject,
        master_seed=args.seed,
        out_dir=out,
        joint_blob_prob=args.joint_blob_prob,
        rotation_range=args.rotation_range,
    )
    print(f"wrote {len(manifest.slaps)} slaps for {len(manifest.subjects)} subjects under {out}")
    return 0


def cmd_split(args) -> int:
    from .synthgen import make_splits, write_splits

    manifest = _load_manifest(args.manifest)
    assignments = make_splits(manifest, folds=args.folds, seed=args.seed)
    out = Path(args.out) if args.out else Path(args.manifest).parent / "splits.json"
    write_splits(assignments, out, seed=args.seed)
    print(f"wrote {len(assignments)} folds to {out}")
    return 0


def cmd_train(args) -> int:
    from .detnet import ArchConfig, TrainConfig, save_model, train, write_loss_curve

    manifest = _load_manifest(args.manifest)
    split = _load_fold(args.splits, args.fold)
    out = Path(args.out)
    _echo_config(args, out)
    cfg = TrainConfig(epochs=args.epochs, rng_seed=args.seed,
                      rois_per_image=512 if args.pyramid else 64)
    arch = ArchConfig(pyramid=args.pyramid)
    params, history = train(
        manifest, split, cfg, arch=arch,
        progress=lambda e: print(
            f"epoch {e.epoch}: cls {e.l_cls:.4f} box {e.l_box:.4f} mask {e.l_mask:.4f} total {e.total:.4f}",
            flush=True,
        ),
    )
    ckpt = out / "model.ckpt"
    save_model(params, ckpt)
    write_loss_curve(history, out / "loss_curve.csv")
    print(f"saved {ckpt}")
    return 0


def cmd_segment(args) -> int:
    from .baseline import estimate_rotation
    from .detnet import infer, load_model
    from .imgcore import load_image

    params = load_model(args.model)
    results = {}
    for image_path in args.images:
        img = load_image(image_path)
        angle, _ = estimate_rotation(img)
        detections = infer(params, img, angle, score_threshold=args.score_threshold)
        results[str(image_path)] = {
            "upright_angle": angle,
            "detections": [
                {
                    "box": dict(zip(("left", "top", "right", "bottom"), d.box.as_tuple())),
                    "score": d.score,
                }
                for d in detections
            ],
        }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(results, indent=1, sort_keys=True))
    print(f"wrote {out}")
    return 0


def cmd_baseline(args) -> int:
    from .baseline import baseline_segment
    from .imgcore import load_image

    results = {}
    for image_path in args.images:
        res = baseline_segment(load_image(image_path))
        results[str(image_path)] = {
            "angle": res.angle,
            "boxes": [
                {
                    "box": dict(zip(("left", "top", "right", "bottom"), b.as_tuple())),
                    "confidence": c,
                }
                for b, c in zip(res.boxes, res.confidences)
            ],
        }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(results, indent=1, sort_keys=True))
    print(f"wrote {out}")
    return 0


def _build_segmenters(spec: str):
    from .detnet import load_model
    from .evalkit import BaselineSegmenter, DetectorSegmenter

    segmenters = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if item == "baseline":
            segmenters.append(BaselineSegmenter())
        else:
            params = load_model(item)
            segmenters.append(DetectorSegmenter(params, name=Path(item).stem))
    return segmenters


def cmd_eval_mae(args) -> int:
    from .evalkit import compare_models

    manifest = _load_manifest(args.manifest)
    split = _load_fold(args.splits, args.fold)
    out = Path(args.out)
    _echo_config(args, out)
    report = compare_models(
        manifest, split, _build_segmenters(args.models), out_dir=out, seed=0
    )
    for (model, cohort), mae_report in sorted(report.mae_reports.items()):
        cells = " ".join(f"{s}={mae_report.mean[s]:.2f}" for s in ("left", "top", "right", "bottom"))
        print(f"{model}/{cohort}: {cells} (n={mae_report.count})")
    return 0


def cmd_eval_match(args) -> int:
    from .evalkit import compare_models

    manifest = _load_manifest(args.manifest)
    split = _load_fold(args.splits, args.fold)
    out = Path(args.out)
    _echo_config(args, out)
    report = compare_models(
        manifest, split, _build_segmenters(args.models), out_dir=out,
        impostors_per_print=args.impostors, seed=args.seed, fpr_target=args.fpr,
    )
    for (model, cohort), tpr in sorted(report.tpr_at.items()):
        print(f"{model}/{cohort}: TPR@FPR={args.fpr} -> {tpr:.4f}")
    return 0


def cmd_compare(args) -> int:
    from .evalkit import compare_models

    manifest = _load_manifest(args.manifest)
    split = _load_fold(args.splits, args.fold)
    out = Path(args.out)
    _echo_config(args, out)
    report = compare_models(
        manifest, split, _build_segmenters(args.models), out_dir=out,
        impostors_per_print=args.impostors, seed=args.seed, fpr_target=args.fpr,
    )
    print(f"report bundle written under {out}")
    for (model, cohort) in sorted(report.counts):
        mae_txt = "-"
        if (model, cohort) in report.mae_reports:
            r = report.mae_reports[(model, cohort)]
            mae_txt = f"bottom {r.mean['bottom']:.2f}"
        tpr = report.tpr_at.get((model, cohort))
        print(f"  {model}/{cohort}: MAE[{mae_txt}] TPR={'-' if tpr is None else f'{tpr:.4f}'}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .annosvc import AnnotationStore, create_app

    store = AnnotationStore(args.data_dir)
    if args.manifest:
        manifest = _load_manifest(args.manifest)
        model_params = None
        source = args.proposals
        if source.startswith("model:"):
            from .detnet import load_model

            model_params = load_model(source.split(":", 1)[1])
            source = "model"
        added = store.ingest_manifest(manifest, proposal_source=source, model_params=model_params)
        print(f"ingested {added} new slaps")
    app = create_app(store, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_export(args) -> int:
    from .annosvc import AnnotationStore

    store = AnnotationStore(args.data_dir)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest = store.export_manifest(out)
    if not manifest.slaps:
        print(f"warning: export is empty (no slap done yet); wrote {out}", file=sys.stderr)
    else:
        print(f"exported {len(manifest.slaps)} slaps to {out}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slapseg",
        description="Slap fingerprint segmentation toolkit: synthetic data, "
        "detector training, classical baseline, evaluation, annotation service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    p.add_argument("--adults", type=int, required=True, help="adult subject count")
    p.add_argument("--juveniles", type=int, required=True, help="juvenile subject count")
    p.add_argument("--per-subject", type=int, default=4, help="captures per subject")
    p.add_argument("--seed", type=int, required=True, help="master generator seed")
    p.add_argument("--joint-blob-prob", type=float, default=0.0,
                   help="probability a finger renders a medial-phalanx blob")
    p.add_argument("--rotation-range", type=float, default=12.0,
                   help="slap rotation drawn uniformly from +/- this many degrees")
    p.add_argument("-o", "--out", default=_default_out(), required=_default_out() is None,
                   help="output dataset directory (default: $SLAPSEG_DATA_DIR)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("split", help="build identity-disjoint cross-validation folds")
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--folds", type=int, default=10, help="number of folds")
    p.add_argument("--seed", type=int, default=0, help="fold membership shuffle seed")
    p.add_argument("-o", "--out", default=None, help="splits JSON path (default: next to manifest)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the detector on one fold")
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--splits", required=True, help="splits JSON path")
    p.add_argument("--fold", type=int, default=0, help="fold index to train")
    p.add_argument("--epochs", type=int, default=15, help="training epochs")
    p.add_argument("--seed", type=int, required=True, help="training seed")
    p.add_argument("--pyramid", action="store_true",
                   help="use the 2-level feature pyramid stage (512 rois, 1000 proposals)")
    p.add_argument("-o", "--out", default=_default_out(), required=_default_out() is None,
                   help="output directory (default: $SLAPSEG_DATA_DIR)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="run a trained model on images")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--score-threshold", type=float, default=0.5, help="detection score cutoff")
    p.add_argument("-o", "--out", required=True, help="detections JSON path")
    p.add_argument("images", nargs="+", help="image files (PNG/PGM)")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("baseline", help="run the classical segmenter on images")
    p.add_argument("-o", "--out", required=True, help="boxes JSON path")
    p.add_argument("images", nargs="+", help="image files (PNG/PGM)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval-mae", help="per-side error tables on a test fold")
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--splits", required=True, help="splits JSON path")
    p.add_argument("--fold", type=int, default=0, help="fold index to evaluate")
    p.add_argument("--models", required=True,
                   help="comma list: 'baseline' and/or checkpoint paths")
    p.add_argument("-o", "--out", default=_default_out(), required=_default_out() is None,
                   help="report output directory (default: $SLAPSEG_DATA_DIR)")
    p.set_defaults(func=cmd_eval_mae)

    p = sub.add_parser("eval-match", help="genuine/impostor matching evaluation")
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--splits", required=True, help="splits JSON path")
    p.add_argument("--fold", type=int, default=0, help="fold index to evaluate")
    p.add_argument("--models", required=True, help="comma list: 'baseline' and/or checkpoints")
    p.add_argument("--impostors", type=int, default=20, help="non-mated samples per probe")
    p.add_argument("--fpr", type=float, default=0.001, help="FPR operating point")
    p.add_argument("--seed", type=int, required=True, help="impostor sampling seed")
    p.add_argument("-o", "--out", default=_default_out(), required=_default_out() is None,
                   help="report output directory (default: $SLAPSEG_DATA_DIR)")
    p.set_defaults(func=cmd_eval_match)

    p = sub.add_parser("compare", help="full table bundle: MAE + tolerance + matching")
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--splits", required=True, help="splits JSON path")
    p.add_argument("--fold", type=int, default=0, help="fold index to evaluate")
    p.add_argument("--models", required=True, help="comma list: 'baseline' and/or checkpoints")
    p.add_argument("--impostors", type=int, default=20, help="non-mated samples per probe")
    p.add_argument("--fpr", type=float, default=0.001, help="FPR operating point")
    p.add_argument("--seed", type=int, default=0, help="impostor sampling seed")
    p.add_argument("-o", "--out", default=_default_out(), required=_default_out() is None,
                   help="report output directory (default: $SLAPSEG_DATA_DIR)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--data-dir", default=os.environ.get("SLAPSEG_ANNO_DIR"),
                   required="SLAPSEG_ANNO_DIR" not in os.environ,
                   help="store directory (log + snapshots; default: $SLAPSEG_ANNO_DIR)")
    p.add_argument("--manifest", default=None, help="dataset manifest to ingest on startup")
    p.add_argument("--proposals", default=os.environ.get("SLAPSEG_PROPOSALS", "baseline"),
                   help="proposal source: 'baseline' or 'model:<ckpt path>' "
                        "(default: $SLAPSEG_PROPOSALS or baseline)")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=int(os.environ.get("SLAPSEG_PORT", "8080")),
                   help="bind port (default: $SLAPSEG_PORT or 8080)")
    p.add_argument("--ui-dir", default=None, help="built UI directory to serve at /ui")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="export human-confirmed annotations as a manifest")
    p.add_argument("--data-dir", required=True, help="store directory (log + snapshots)")
    p.add_argument("-o", "--out", required=True, help="manifest JSON path")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except KeyboardInterrupt:
        return RUNTIME_ERROR
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"runtime failure: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
