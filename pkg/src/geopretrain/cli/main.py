"""Command-line entry point tying the pipeline together.

Commands: pretrain, finetune, evaluate, report, profile, export-backbone.
Exit codes: 0 success, 1 config validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .. import data as D
from .. import pretrain as P
from .. import seg as S
from ..det import (
    DetTrainConfig,
    create_detector_backend,
    export_detection_backbone,
    finetune_detection,
    predict_and_score,
)
from ..encoder import (
    backbone_from_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from ..encoder.checkpoint import load_arrays_into_module
from ..errors import ConfigError, GeopretrainError, TrainingDiverged
from ..metrics import (
    ConfusionMatrix,
    ap_table,
    f1_score,
    mean_iou,
    oracle_average_precision,
    pixel_accuracy,
    pixel_metrics_from_tally,
    tally_confusion,
)
from ..seeding import derive_seed
from . import config as C
from .manifest import RunManifest, completed_manifest
from .report import append_results_row, generate_report

SEG_COLUMNS = ["model", "pa_overall", "pa_macro", "f1", "miou"]
DET_COLUMNS = ["model", "AP", "AP50", "AP75", "APs", "APm", "APl"]
MODE_SHORT = {"supervised": "sup", "simsiam": "sim"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    except GeopretrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geopretrain",
        description="In-domain pre-training and dense-prediction transfer "
                    "for remote-sensing imagery.")
    sub = parser.add_subparsers(dest="command")

    def common(p, out_required=True):
        p.add_argument("--config", required=True, help="run config TOML")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. train.epochs=1")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--print-config", action="store_true",
                       help="print the resolved config and exit")
        p.add_argument("--resume", action="store_true",
                       help="skip if this output directory holds a finished run")

    p = sub.add_parser("pretrain", help="supervised or contrastive pre-training")
    common(p)
    p.add_argument("--mode", choices=["supervised", "simsiam"], default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune a backbone on a downstream task")
    common(p)
    p.add_argument("--task", choices=["seg", "det"], required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint or predictions")
    common(p)
    p.add_argument("--task", choices=["seg", "det"], required=True)
    p.add_argument("--checkpoint", default=None, help="segmentation model checkpoint")
    p.add_argument("--oracle", action="store_true",
                   help="re-run the evaluation through the brute-force path and diff")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate results tables")
    p.add_argument("results_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("profile", help="dataset statistics and balance flags")
    common(p, out_required=False)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("export-backbone", help="convert a checkpoint for detection")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_backbone)

    return parser


def _overrides(args) -> dict:
    overrides: dict = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
        key, raw_value = item.split("=", 1)
        try:
            value = _parse_toml_value(raw_value)
        except Exception as exc:
            raise ConfigError(f"--set {key}: unparseable value {raw_value!r}") from exc
        node = overrides
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    return overrides


def _parse_toml_value(raw: str):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(f"v = {raw}")["v"]


def _setup(args, command: str):
    cfg = C.resolve_config(C.load_config(args.config), _overrides(args))
    if args.print_config:
        print(C.dump_toml(cfg), end="")
        return cfg, None, True
    out = Path(args.out)
    if args.resume and completed_manifest(out) is not None:
        print(f"{command}: {out} already holds a finished run; skipping")
        return cfg, None, True
    manifest = RunManifest(out, command, cfg)
    manifest.write()
    return cfg, manifest, False


def cmd_pretrain(args) -> int:
    cfg, manifest, done = _setup(args, "pretrain")
    if done:
        return 0
    mode = args.mode or cfg["train"]["mode"]
    if mode not in MODE_SHORT:
        raise ConfigError("train.mode: must be 'supervised' or 'simsiam'")
    C.require(cfg, "dataset.root", "train.generalist")
    seed = cfg["seed"]
    out = Path(args.out)

    dataset = D.load_classification_folder(cfg["dataset"]["root"])
    generalist = load_checkpoint(cfg["train"]["generalist"])
    manifest.add_provenance("generalist", cfg["train"]["generalist"],
                            generalist.source_checksum)
    t = cfg["train"]
    augment = C.augment_from_config(cfg, seed)

    try:
        if mode == "supervised":
            train_cfg = P.SupTrainConfig(
                batch_size=t["batch_size"], epochs=t["epochs"],
                peak_lr=t["peak_lr"], pct_warmup=t["pct_warmup"],
                weight_decay=t["weight_decay"],
                eval_fraction=cfg["eval"]["fraction"], seed=seed, augment=augment)
            ckpt, history = P.train_supervised(dataset, generalist, train_cfg)
            if augment is not None:
                manifest.doc["resolved_augment"] = augment.to_dict()
        else:
            train_cfg = P.SimSiamConfig(
                batch_size=t["batch_size"], base_lr=t["base_lr"],
                weight_decay=t["weight_decay"], momentum=t["momentum"],
                epochs=t["epochs"],
                milestones=tuple(t["milestones"]) if t["milestones"] else None,
                gamma=t["gamma"], lr_scaling=t["lr_scaling"],
                proj_hidden=cfg["model"]["proj_hidden"],
                proj_dim=cfg["model"]["proj_dim"],
                pred_hidden=cfg["model"]["pred_hidden"],
                view_size=t["view_size"], seed=seed, augment=augment)
            ckpt, history = P.train_simsiam(dataset, generalist, train_cfg)
            from ..augment import ssl_default_spec
            spec = augment or ssl_default_spec(t["view_size"], seed)
            manifest.doc["resolved_augment"] = spec.to_dict()
            manifest.doc["resolved_milestones"] = train_cfg.resolved_milestones()
            manifest.doc["effective_lr"] = train_cfg.effective_lr
    except TrainingDiverged as exc:
        _save_diverged(exc, out, manifest)
        raise

    name = f"{MODE_SHORT[mode]}-{C.dataset_name(cfg).lower()}.ckpt"
    save_checkpoint(ckpt, out / name)
    history.to_csv(out / "history.csv")
    manifest.doc["warnings"] = history.warnings
    manifest.add_artifact("checkpoint", out / name)
    manifest.add_artifact("history", out / "history.csv")
    manifest.add_history(out / "history.csv")
    manifest.finalize()
    print(f"pretrain[{mode}] wrote {out / name}")
    return 0


def _save_diverged(exc: TrainingDiverged, out: Path, manifest: RunManifest) -> None:
    if exc.checkpoint is not None:
        save_checkpoint(exc.checkpoint, out / "diverged.ckpt")
        manifest.add_artifact("diverged_checkpoint", out / "diverged.ckpt")
    if exc.history is not None:
        exc.history.to_csv(out / "history.csv")
        manifest.add_history(out / "history.csv")
    manifest.doc["warnings"].append(str(exc))
    manifest.finalize(status="diverged")


def _seg_table(cfg: dict) -> D.ColorCodeTable:
    if cfg["dataset"]["color_table"]:
        return D.load_color_table(cfg["dataset"]["color_table"])
    return D.DEEPGLOBE_TABLE


def _build_seg_model(cfg: dict, ckpt) -> S.SegmentationModel:
    backbone = backbone_from_checkpoint(ckpt)
    m = cfg["model"]
    head_spec = S.SegHeadSpec(
        num_classes=m["num_classes"], aspp_rates=tuple(m["aspp_rates"]),
        aspp_channels=m["aspp_channels"],
        classifier_channels=m["classifier_channels"], slim=m["slim"])
    model = S.build_segmentation_model(backbone, head_spec,
                                       seed=derive_seed(cfg["seed"], "seg-model"))
    model.normalization = ckpt.meta.normalization
    return model


def cmd_finetune(args) -> int:
    cfg, manifest, done = _setup(args, f"finetune-{args.task}")
    if done:
        return 0
    if args.task == "seg":
        return _finetune_seg(args, cfg, manifest)
    return _finetune_det(args, cfg, manifest)


def _finetune_seg(args, cfg, manifest) -> int:
    C.require(cfg, "dataset.root", "train.backbone_checkpoint")
    out = Path(args.out)
    table = _seg_table(cfg)
    if cfg["model"]["num_classes"] != len(table):
        raise ConfigError(
            f"model.num_classes: {cfg['model']['num_classes']} does not match "
            f"the {len(table)}-class color table")
    dataset = D.load_segmentation_folder(cfg["dataset"]["root"], table,
                                         cfg["dataset"]["lenient_colors"])
    ckpt_path = cfg["train"]["backbone_checkpoint"]
    ckpt = load_checkpoint(ckpt_path)
    manifest.add_provenance("backbone", ckpt_path, ckpt.source_checksum)

    model = _build_seg_model(cfg, ckpt)
    t = cfg["train"]
    crop = t["crop"] if t["crop"] > 0 else None
    train_cfg = S.SegTrainConfig(
        batch_size=t["batch_size"], epochs=t["epochs"], lr=t["lr"],
        weight_decay=t["weight_decay"], crop=crop,
        eval_fraction=1.0 - cfg["dataset"]["train_fraction"],
        seed=cfg["seed"], class_weighting=t["class_weighting"],
        augment=C.augment_from_config(cfg, cfg["seed"]))
    manifest.doc["resolved_augment"] = train_cfg.resolved_augment().to_dict()

    try:
        model_ckpt, history = S.finetune_segmentation(model, dataset, train_cfg)
    except TrainingDiverged as exc:
        _save_diverged(exc, out, manifest)
        raise
    model_name = Path(ckpt_path).stem
    cm = S.evaluate_segmentation(model, dataset, history.extras["eval_indices"])
    row = _seg_row(model_name, cm)

    model_ckpt = model_ckpt.with_meta(dataset=C.dataset_name(cfg),
                                      parent_checksum=ckpt.source_checksum)
    ckpt_out = out / f"seg-{model_name}.ckpt"
    save_checkpoint(model_ckpt, ckpt_out)
    history.to_csv(out / "history.csv")
    append_results_row(out / "results.csv", SEG_COLUMNS, row)
    manifest.add_artifact("checkpoint", ckpt_out)
    manifest.add_artifact("results", out / "results.csv")
    manifest.add_history(out / "history.csv")
    manifest.finalize()
    print("seg metrics: " + ", ".join(f"{k}={row[k]}" for k in SEG_COLUMNS[1:]))
    return 0


def _seg_row(model_name: str, cm: ConfusionMatrix) -> dict:
    pa_overall, pa_macro = pixel_accuracy(cm)
    _, f1 = f1_score(cm)
    _, miou = mean_iou(cm)
    return {"model": model_name, "pa_overall": repr(pa_overall),
            "pa_macro": repr(pa_macro), "f1": repr(f1), "miou": repr(miou)}


def _image_provider(image_root: str):
    from PIL import Image

    root = Path(image_root)

    def provider(record):
        path = root / (record.file_name or f"{record.image_id}.png")
        if not path.is_file():
            raise GeopretrainError(f"detection image {path} does not exist")
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))

    return provider


def _finetune_det(args, cfg, manifest) -> int:
    C.require(cfg, "dataset.train_annotations", "dataset.eval_annotations",
              "dataset.image_root", "train.backbone_checkpoint")
    out = Path(args.out)
    train_set = D.load_detection_annotations(cfg["dataset"]["train_annotations"])
    eval_set = D.load_detection_annotations(cfg["dataset"]["eval_annotations"])
    if train_set.class_names != eval_set.class_names:
        raise ConfigError("dataset.eval_annotations: class vocabulary differs "
                          "from the training annotations")
    ckpt_path = cfg["train"]["backbone_checkpoint"]
    ckpt = load_checkpoint(ckpt_path)
    manifest.add_provenance("backbone", ckpt_path, ckpt.source_checksum)

    t = cfg["train"]
    det_cfg = DetTrainConfig(
        iterations=t["iterations"], batch_size=t["batch_size"],
        base_lr=t["base_lr"], warmup_iterations=t["warmup_iterations"],
        image_size=t["image_size"], momentum=t["momentum"],
        weight_decay=t["weight_decay"], seed=cfg["seed"])
    converted, extractor, report = export_detection_backbone(
        ckpt, cfg["model"]["lateral_channels"],
        seed=derive_seed(cfg["seed"], "det-fpn"))
    manifest.doc["conversion_report"] = report.summary()
    backend = create_detector_backend(
        t["backend"], extractor, train_set.num_classes,
        image_size=det_cfg.image_size, momentum=det_cfg.momentum,
        weight_decay=det_cfg.weight_decay, normalization=ckpt.meta.normalization)

    provider = _image_provider(cfg["dataset"]["image_root"])
    try:
        det_ckpt, history = finetune_detection(backend, train_set.records,
                                               det_cfg, provider)
    except TrainingDiverged as exc:
        _save_diverged(exc, out, manifest)
        raise
    predictions, table = predict_and_score(backend, eval_set.records, provider,
                                           eval_set.num_classes)

    model_name = Path(ckpt_path).stem
    det_ckpt = det_ckpt.with_meta(dataset=C.dataset_name(cfg),
                                  parent_checksum=ckpt.source_checksum)
    ckpt_out = out / f"det-{model_name}.ckpt"
    save_checkpoint(det_ckpt, ckpt_out)
    history.to_csv(out / "history.csv")
    D.save_detection_predictions(predictions, eval_set.class_names,
                                 out / "predictions.json")
    _write_det_rows(out, model_name, table, eval_set.class_names)
    manifest.add_artifact("checkpoint", ckpt_out)
    manifest.add_artifact("results", out / "results.csv")
    manifest.add_artifact("predictions", out / "predictions.json")
    manifest.add_history(out / "history.csv")
    manifest.finalize()
    print("det metrics: " + ", ".join(
        f"{k}={table[k]:.4f}" for k in DET_COLUMNS[1:]))
    return 0


def _write_det_rows(out: Path, model_name: str, table: dict, class_names) -> None:
    row = {"model": model_name}
    row.update({k: repr(float(table[k])) for k in DET_COLUMNS[1:]})
    append_results_row(out / "results.csv", DET_COLUMNS, row)
    per_class = {"model": model_name}
    per_class.update({name: repr(float(v))
                      for name, v in zip(class_names, table["per_class"])})
    append_results_row(out / "per_class_results.csv",
                       ["model"] + list(class_names), per_class)


def cmd_evaluate(args) -> int:
    cfg, manifest, done = _setup(args, f"evaluate-{args.task}")
    if done:
        return 0
    if args.task == "seg":
        return _evaluate_seg(args, cfg, manifest)
    return _evaluate_det(args, cfg, manifest)


def _eval_indices(cfg: dict, n: int) -> list[int]:
    if cfg["eval"]["split"] == "all":
        return list(range(n))
    _, eval_idx = D.deterministic_split(
        n, D.SplitSpec(cfg["dataset"]["train_fraction"], seed=cfg["seed"]))
    return eval_idx


def _evaluate_seg(args, cfg, manifest) -> int:
    ckpt_path = args.checkpoint or cfg["train"]["backbone_checkpoint"]
    if not ckpt_path:
        raise ConfigError("train.backbone_checkpoint: required for evaluate --task seg")
    C.require(cfg, "dataset.root")
    out = Path(args.out)
    table = _seg_table(cfg)
    dataset = D.load_segmentation_folder(cfg["dataset"]["root"], table,
                                         cfg["dataset"]["lenient_colors"])
    ckpt = load_checkpoint(ckpt_path)
    if not ckpt.namespace("head."):
        raise ConfigError("checkpoint has no head arrays; expected a "
                          "segmentation model checkpoint")
    manifest.add_provenance("model", ckpt_path, ckpt.source_checksum)
    model = _build_seg_model(cfg, ckpt)
    load_arrays_into_module(model.head, ckpt.arrays, "head.")

    indices = _eval_indices(cfg, len(dataset))
    cm = S.evaluate_segmentation(model, dataset, indices)
    row = _seg_row(Path(ckpt_path).stem, cm)
    append_results_row(out / "results.csv", SEG_COLUMNS, row)
    manifest.add_artifact("results", out / "results.csv")

    if args.oracle:
        mismatch = _seg_oracle_diff(model, dataset, indices, cm)
        if mismatch:
            print(f"oracle mismatch: {mismatch}", file=sys.stderr)
            manifest.finalize(status="oracle-mismatch")
            return 2
        print("oracle check passed: streaming metrics equal brute-force tallies")
    manifest.finalize()
    print("seg metrics: " + ", ".join(f"{k}={row[k]}" for k in SEG_COLUMNS[1:]))
    return 0


def _seg_oracle_diff(model, dataset, indices, cm: ConfusionMatrix) -> str | None:
    total = [[0] * model.num_classes for _ in range(model.num_classes)]
    for i in indices:
        pair = dataset.load_pair(i)
        pred, _ = S.predict_mask(model, pair.image)
        tally = tally_confusion(pair.mask, pred, model.num_classes)
        for r in range(model.num_classes):
            for c in range(model.num_classes):
                total[r][c] += tally[r][c]
    if not np.array_equal(np.asarray(total), cm.counts):
        return "confusion counts differ from brute-force tally"
    ref = pixel_metrics_from_tally(total)
    pa_overall, pa_macro = pixel_accuracy(cm)
    _, f1 = f1_score(cm)
    _, miou = mean_iou(cm)
    for name, ours, theirs in (("pa_overall", pa_overall, ref["pa_overall"]),
                               ("pa_macro", pa_macro, ref["pa_macro"]),
                               ("f1", f1, ref["f1_macro"]),
                               ("miou", miou, ref["miou"])):
        if abs(ours - theirs) > 1e-12:
            return f"{name}: streaming {ours} vs oracle {theirs}"
    return None


def _evaluate_det(args, cfg, manifest) -> int:
    C.require(cfg, "dataset.eval_annotations", "dataset.predictions")
    out = Path(args.out)
    gts = D.load_detection_annotations(cfg["dataset"]["eval_annotations"])
    preds = D.load_detection_annotations(cfg["dataset"]["predictions"])
    if preds.class_names != gts.class_names:
        raise ConfigError("dataset.predictions: class vocabulary differs from "
                          "the ground-truth annotations")
    table = ap_table(preds.records, gts.records, gts.num_classes)
    model_name = Path(cfg["dataset"]["predictions"]).stem
    _write_det_rows(out, model_name, table, gts.class_names)
    manifest.add_artifact("results", out / "results.csv")

    if args.oracle:
        from ..metrics.ap import COCO_THRESHOLDS, average_precision
        diffs = []
        for thr in COCO_THRESHOLDS:
            ours = average_precision(preds.records, gts.records,
                                     gts.num_classes, thr).aggregate
            ref = oracle_average_precision(preds.records, gts.records,
                                           gts.num_classes, thr)["aggregate"]
            diffs.append(abs(ours - ref))
        if max(diffs) > 1e-9:
            print(f"oracle mismatch: max AP diff {max(diffs)}", file=sys.stderr)
            manifest.finalize(status="oracle-mismatch")
            return 2
        print("oracle check passed: greedy AP equals exhaustive matching")
    manifest.finalize()
    print("det metrics: " + ", ".join(f"{k}={table[k]:.4f}" for k in DET_COLUMNS[1:]))
    return 0


def cmd_report(args) -> int:
    report = generate_report(args.results_dir, args.out)
    if report is None:
        print("no results found")
        return 0
    print(f"report written to {report}")
    return 0


def cmd_profile(args) -> int:
    cfg = C.resolve_config(C.load_config(args.config), _overrides(args))
    if args.print_config:
        print(C.dump_toml(cfg), end="")
        return 0
    kind = cfg["dataset"]["kind"]
    if kind not in ("classification", "segmentation", "detection"):
        raise ConfigError("dataset.kind: must be classification, segmentation "
                          "or detection")
    lines = [f"dataset kind: {kind}"]
    names: list[str] = []
    proportions: list[float] = []

    if kind == "classification":
        C.require(cfg, "dataset.root")
        ds = D.load_classification_folder(cfg["dataset"]["root"])
        counts = ds.class_counts()
        names = ds.class_names
        proportions = [c / len(ds) for c in counts]
        lines.append(f"{len(ds)} samples, {ds.num_classes} classes, "
                     f"{len(ds.rejects)} rejected files")
        for name, count, prop in zip(names, counts, proportions):
            lines.append(f"  {name}: {count} ({100 * prop:.2f}%)")
    elif kind == "segmentation":
        C.require(cfg, "dataset.root")
        table = _seg_table(cfg)
        ds = D.load_segmentation_folder(cfg["dataset"]["root"], table,
                                        cfg["dataset"]["lenient_colors"])
        counts, props = D.class_pixel_stats(ds, len(table))
        names = list(table.names)
        proportions = props.tolist()
        lines.append(f"{len(ds)} image/mask pairs, {len(table)} classes")
        for name, count, prop in zip(names, counts, props):
            lines.append(f"  {name}: {int(count)} px ({100 * prop:.2f}%)")
    else:
        C.require(cfg, "dataset.train_annotations")
        ds = D.load_detection_annotations(cfg["dataset"]["train_annotations"])
        counts, percentages = D.annotation_class_stats(ds.records, ds.num_classes)
        names = ds.class_names
        proportions = (percentages / 100.0).tolist()
        lines.append(f"{len(ds)} images, {int(counts.sum())} boxes")
        for name, count, pct in zip(names, counts, percentages):
            lines.append(f"  {name}: {int(count)} ({pct:.1f}%)")

    rng = cfg["dataset"]["resolution_range"]
    mean_res = None
    if rng:
        if len(rng) != 2:
            raise ConfigError("dataset.resolution_range: expected [min, max]")
        mean_res = D.resolution_profile(float(rng[0]), float(rng[1]))
        lines.append(f"mean resolution (uniform assumption): {mean_res} m")
    imbalanced = D.imbalance_flag(proportions) if proportions else False
    if imbalanced:
        worst = names[int(np.argmax(proportions))]
        lines.append(f"IMBALANCED: {worst} holds {100 * max(proportions):.2f}% of the mass")

    text = "\n".join(lines)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        import json
        profile = {
            "kind": kind,
            "class_names": list(names),
            "proportions": proportions,
            "mean_resolution": mean_res,
            "imbalanced": bool(imbalanced),
        }
        (out / "profile.json").write_text(json.dumps(profile, indent=1, sort_keys=True))
    return 0


def cmd_export_backbone(args) -> int:
    out = Path(args.out)
    ckpt = load_checkpoint(args.checkpoint)
    converted, _, report = export_detection_backbone(ckpt)
    name = f"det-{Path(args.checkpoint).stem}.ckpt"
    manifest = RunManifest(out, "export-backbone",
                           {"seed": 0, "checkpoint": str(args.checkpoint)})
    manifest.write()
    manifest.add_provenance("source", args.checkpoint, ckpt.source_checksum)
    save_checkpoint(converted, out / name)
    manifest.add_artifact("checkpoint", out / name)
    manifest.doc["conversion_report"] = {
        "matched": report.matched,
        "newly_initialized": report.newly_initialized,
        "skipped_source": report.skipped_source,
    }
    manifest.finalize()
    print(f"exported {out / name} ({report.summary()})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
