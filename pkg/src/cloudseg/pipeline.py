"""End-to-end drivers: dataset bootstrap, training, inference, evaluation,
cross-validation, and stage timing. The CLI in cli.py is a thin wrapper
around these functions; tests call them directly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import estimate_rigid_transform
from .augment import AugmentConfig, RngState, augment_sample, derive_seed
from .cloud import PointCloud, RigidTransform, apply_transform, crop
from .errors import CloudsegError, EmptyAfterCrop, EmptyCloud, NoClusters
from .labeler import LabelerParams, SeedAnnotation, annotation_from_dict, bootstrap_report
from .metrics import MetricRecord, aggregate, evaluate_pointwise, write_metrics_csv, write_metrics_json
from .net3d import UNet3D, UNetConfig, adam_step, bce_with_logits, load_checkpoint, save_checkpoint
from .net3d.checkpoint import checkpoint_extra
from .ply import load_ply, save_ply
from .voxelizer import (
    grid_to_tensor,
    label_to_tensor,
    prediction_to_label_grid,
    save_grid_sample,
    upsample_labels,
    voxelize,
)


@dataclass(frozen=True)
class TrainConfig:
    seed: int  # mandatory: no implicit randomness anywhere
    manifests: tuple[str, ...]
    out_dir: str
    net: UNetConfig = field(default_factory=UNetConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    labeler: LabelerParams = field(default_factory=LabelerParams)
    dims: tuple[int, int, int] = (80, 80, 80)
    lr: float = 1e-3
    epochs: int = 10
    accumulate_steps: int = 1
    resume_from: str | None = None


def load_train_config(path, **overrides) -> TrainConfig:
    """Build a TrainConfig from the sectioned JSON config file."""
    with open(path) as f:
        doc = json.load(f)
    train = doc.get("train", {})
    if "seed" not in train and "seed" not in overrides:
        raise CloudsegError("train config requires an explicit seed")
    kwargs = dict(
        seed=train.get("seed"),
        manifests=tuple(train["manifests"]),
        out_dir=train.get("out_dir", "train_out"),
        lr=train.get("lr", 1e-3),
        epochs=train.get("epochs", 10),
        accumulate_steps=train.get("accumulate_steps", 1),
        resume_from=train.get("resume_from"),
        net=UNetConfig.from_dict(doc["net"]) if "net" in doc else UNetConfig(),
        augment=AugmentConfig.from_dict(doc["augment"]) if "augment" in doc else AugmentConfig(),
        labeler=LabelerParams.from_dict(doc["labeler"]) if "labeler" in doc else LabelerParams(),
        dims=tuple(doc.get("voxelizer", {}).get("dims", (80, 80, 80))),
    )
    kwargs.update(overrides)
    return TrainConfig(**kwargs)


# ---------------------------------------------------------------------------
# bootstrap


@dataclass(frozen=True)
class BootstrapSummary:
    manifest_path: Path
    processed: int
    skipped: list[tuple[str, str]]  # (raw path, reason)


def load_annotation_file(path) -> tuple[str, SeedAnnotation]:
    with open(path) as f:
        doc = json.load(f)
    return doc.get("dataset", Path(path).parent.name), annotation_from_dict(doc)


def run_bootstrap(dataset_dir, annotation_path, out_dir, dims=(80, 80, 80),
                  encoding: str = "binary-le", camera: str = "") -> BootstrapSummary:
    """Label every raw cloud of a dataset from its single annotation.

    The alignment transform is estimated once from the annotation's
    correspondences and reused for every scene. Scenes where no cluster
    matches the seed colors are skipped and listed in the manifest.
    """
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    (out_dir / "labeled").mkdir(parents=True, exist_ok=True)
    (out_dir / "grids").mkdir(parents=True, exist_ok=True)

    name, ann = load_annotation_file(annotation_path)
    t_align = estimate_rigid_transform(ann.correspondences)

    raw_files = sorted((dataset_dir / "raw").glob("*.ply"))
    if not raw_files:
        raise FileNotFoundError(f"no raw clouds under {dataset_dir / 'raw'}")

    entries = []
    skipped: list[tuple[str, str]] = []
    for raw_path in raw_files:
        raw = load_ply(raw_path)
        try:
            result = bootstrap_report(raw, ann, t_align)
        except (NoClusters, EmptyAfterCrop, EmptyCloud) as exc:
            skipped.append((str(raw_path), f"{type(exc).__name__}: {exc}"))
            continue
        labeled_path = out_dir / "labeled" / raw_path.name
        save_ply(result.cloud, labeled_path, encoding=encoding)
        grid, label_grid, _ = voxelize(result.cloud, dims)
        grid_path = out_dir / "grids" / (raw_path.stem + ".grid")
        save_grid_sample(grid_path, grid, label_grid)
        entries.append({
            "raw": str(raw_path),
            "labeled": str(labeled_path),
            "grid": str(grid_path),
            "cluster_count": result.cluster_count,
            "matched_cluster_count": result.matched_cluster_count,
            "positive_fraction": result.positive_fraction,
        })

    manifest = {
        "name": name,
        "camera": camera,
        "annotation": str(annotation_path),
        "align_transform": {
            "rotation": [[float(v) for v in row] for row in t_align.rotation],
            "translation": [float(v) for v in t_align.translation],
        },
        "scenes": entries,
        "skipped": [{"raw": r, "reason": why} for r, why in skipped],
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return BootstrapSummary(manifest_path, len(entries), skipped)


def load_manifest(path) -> dict:
    with open(path) as f:
        manifest = json.load(f)
    for entry in manifest["scenes"]:
        for key in ("raw", "labeled", "grid"):
            if key in entry and not Path(entry[key]).exists():
                raise FileNotFoundError(f"manifest references missing file {entry[key]}")
    return manifest


# ---------------------------------------------------------------------------
# training


def _training_samples(manifest_paths) -> list[tuple[str, Path]]:
    samples = []
    for mpath in manifest_paths:
        manifest = load_manifest(mpath)
        for entry in manifest["scenes"]:
            samples.append((f"{manifest['name']}/{Path(entry['labeled']).stem}", Path(entry["labeled"])))
    return samples


def run_train(cfg: TrainConfig) -> dict:
    """Train the network over bootstrapped manifests; returns paths and stats.

    Per epoch every sample is augmented with a seed derived from
    (global seed, epoch, sample index), voxelized, and stepped with Adam.
    With a fixed seed the entire run is deterministic, including the order
    samples are visited in.
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = _training_samples(cfg.manifests)
    if not samples:
        raise CloudsegError("no training samples found in manifests")
    clouds = [(name, load_ply(path)) for name, path in samples]
    for name, cloud in clouds:
        if cloud.labels is None:
            raise CloudsegError(f"training sample {name} has no labels")

    start_epoch = 0
    if cfg.resume_from:
        model = load_checkpoint(cfg.resume_from)
        start_epoch = int(checkpoint_extra(cfg.resume_from).get("completed_epochs", 0))
    else:
        model = UNet3D(cfg.net, in_channels=3, seed=cfg.seed)

    log_path = out_dir / "loss_log.jsonl"
    best_path = out_dir / "best.ckpt"
    final_path = out_dir / "final.ckpt"
    best_loss = np.inf
    step = model.adam.t
    dataset_names = sorted({Path(m).resolve().parent.name for m in cfg.manifests})

    with open(log_path, "a" if cfg.resume_from else "w") as log:
        for epoch in range(start_epoch, cfg.epochs):
            order = np.random.Generator(np.random.PCG64(derive_seed(cfg.seed, epoch, 0xFFFF))).permutation(len(clouds))
            epoch_losses = []
            pending: dict[str, np.ndarray] = {}
            pending_count = 0
            for position, sample_idx in enumerate(order):
                name, cloud = clouds[sample_idx]
                rng = RngState(derive_seed(cfg.seed, epoch, int(sample_idx)))
                augmented = augment_sample(cloud, cfg.augment, rng)
                grid, label_grid, _ = voxelize(augmented, cfg.dims)
                x = grid_to_tensor(grid)
                y = label_to_tensor(label_grid)
                logits = model.forward_logits(x, want_cache=True)
                loss, dlogits = bce_with_logits(y, logits)
                grads = model.backward(dlogits)

                if cfg.accumulate_steps > 1:
                    for key, g in grads.items():
                        pending[key] = pending.get(key, 0.0) + g / cfg.accumulate_steps
                    pending_count += 1
                    if pending_count == cfg.accumulate_steps or position == len(order) - 1:
                        adam_step(model, pending, lr=cfg.lr)
                        pending, pending_count = {}, 0
                else:
                    adam_step(model, grads, lr=cfg.lr)
                step += 1
                epoch_losses.append(loss)
                log.write(json.dumps({"step": step, "epoch": epoch, "sample": name, "loss": loss}) + "\n")
            mean_loss = float(np.mean(epoch_losses))
            if mean_loss < best_loss:
                best_loss = mean_loss
                save_checkpoint(model, best_path, extra={
                    "completed_epochs": epoch + 1, "step": step,
                    "mean_loss": mean_loss, "datasets": dataset_names,
                })
        save_checkpoint(model, final_path, extra={
            "completed_epochs": cfg.epochs, "step": step,
            "mean_loss": float(np.mean(epoch_losses)) if cfg.epochs > start_epoch else None,
            "datasets": dataset_names,
        })
    return {
        "final_checkpoint": str(final_path),
        "best_checkpoint": str(best_path),
        "loss_log": str(log_path),
        "final_mean_loss": float(np.mean(epoch_losses)) if cfg.epochs > start_epoch else None,
        "steps": step,
    }


# ---------------------------------------------------------------------------
# inference


def _load_transform(annotation_or_transform) -> tuple[RigidTransform, SeedAnnotation | None]:
    """An annotation file yields (T_align, annotation); a transform file yields (T, None)."""
    if annotation_or_transform is None:
        return RigidTransform.identity(), None
    with open(annotation_or_transform) as f:
        doc = json.load(f)
    if "correspondences" in doc:
        _, ann = load_annotation_file(annotation_or_transform)
        return estimate_rigid_transform(ann.correspondences), ann
    return RigidTransform(np.asarray(doc["rotation"]), np.asarray(doc["translation"])), None


@dataclass(frozen=True)
class StageTiming:
    name: str
    mean_ms: float
    std_ms: float

    def format(self) -> str:
        return f"{self.name}: {self.mean_ms:.2f} ms (σ={self.std_ms:.2f} ms)"


def _predict_labels(model: UNet3D, cloud: PointCloud, dims) -> PointCloud:
    grid, _, mapping = voxelize(cloud, dims)
    probs = model.forward(grid_to_tensor(grid))
    pred_grid = prediction_to_label_grid(probs, mapping, grid.occupancy, model.config.output_threshold)
    return upsample_labels(pred_grid, cloud)


def run_infer(checkpoint_path, cloud_path, annotation_or_transform=None, out_path=None,
              dims=(80, 80, 80), timing_reps: int = 30, encoding: str = "binary-le") -> dict:
    """Segment one raw cloud; reports per-stage wall-clock mean and sigma.

    Stages mirror the deployment path: align, crop, voxelize, network
    forward, threshold, upsample, save. Timings are informational.
    """
    model = load_checkpoint(checkpoint_path)
    raw = load_ply(cloud_path)
    transform, ann = _load_transform(annotation_or_transform)

    def stage_align():
        return apply_transform(raw, transform)

    aligned = stage_align()

    def stage_crop():
        return crop(aligned, ann.crop_box) if ann is not None else aligned

    cropped = stage_crop()
    if len(cropped) == 0:
        raise EmptyAfterCrop("inference crop retained no points")

    def stage_voxelize():
        return voxelize(cropped, dims)

    grid, _, mapping = stage_voxelize()
    x = grid_to_tensor(grid)

    def stage_forward():
        return model.forward(x)

    probs = stage_forward()

    def stage_threshold():
        return prediction_to_label_grid(probs, mapping, grid.occupancy, model.config.output_threshold)

    pred_grid = stage_threshold()

    def stage_upsample():
        return upsample_labels(pred_grid, cropped)

    labeled = stage_upsample()

    out_path = Path(out_path) if out_path else Path(cloud_path).with_suffix(".labeled.ply")

    def stage_save():
        save_ply(labeled, out_path, encoding=encoding)

    stage_save()

    timings = []
    stages = [("align", stage_align), ("crop", stage_crop), ("voxelize", stage_voxelize),
              ("forward", stage_forward), ("threshold", stage_threshold),
              ("upsample", stage_upsample), ("save", stage_save)]
    reps = max(int(timing_reps), 1)
    for stage_name, fn in stages:
        elapsed = np.empty(reps)
        for i in range(reps):
            t0 = time.perf_counter()
            fn()
            elapsed[i] = (time.perf_counter() - t0) * 1e3
        timings.append(StageTiming(stage_name, float(elapsed.mean()), float(elapsed.std())))
    total = StageTiming("total", sum(t.mean_ms for t in timings),
                        float(np.sqrt(sum(t.std_ms ** 2 for t in timings))))
    timings.append(total)

    return {
        "labeled_path": str(out_path),
        "labeled_cloud": labeled,
        "timing_reps": reps,
        "timings": timings,
        "timing_report": [t.format() for t in timings],
    }


# ---------------------------------------------------------------------------
# evaluation


def run_eval(checkpoint_path, manifest_paths, out_dir, dims=(80, 80, 80),
             oracle: bool = False, model_tag: str | None = None) -> dict:
    """Evaluate a checkpoint on held-out labeled scenes; writes CSV and JSON tables.

    With oracle=True the truth labels are passed through as predictions,
    which must score 1.0 everywhere and validates the harness itself.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = None if oracle else load_checkpoint(checkpoint_path)
    d_train = "oracle"
    if model is not None:
        d_train = "+".join(checkpoint_extra(checkpoint_path).get("datasets", [])) or "unknown"
    tag = model_tag or (Path(checkpoint_path).stem if checkpoint_path else "oracle")

    rows: list[tuple[str, MetricRecord]] = []
    test_names = []
    for mpath in manifest_paths:
        manifest = load_manifest(mpath)
        test_names.append(manifest["name"])
        for entry in manifest["scenes"]:
            truth = load_ply(entry["labeled"])
            scene_id = f"{manifest['name']}/{Path(entry['labeled']).stem}"
            pred = truth if oracle else _predict_labels(model, truth, dims)
            rows.append((scene_id, evaluate_pointwise(pred, truth)))

    write_metrics_csv(out_dir / "per_scene.csv", rows)
    write_metrics_json(out_dir / "metrics.json", rows)
    agg = aggregate([rec for _, rec in rows])
    table_path = out_dir / "summary.csv"
    with open(table_path, "w") as f:
        f.write("model,d_train,d_test,P,R,F1,IoU\n")
        pooled = agg["pooled"]
        f.write(f"{tag},{d_train},{'+'.join(test_names)},"
                f"{pooled['P']:.4f},{pooled['R']:.4f},{pooled['F1']:.4f},{pooled['IoU']:.4f}\n")
    return {"rows": rows, "aggregate": agg, "per_scene_csv": str(out_dir / "per_scene.csv"),
            "summary_csv": str(table_path), "metrics_json": str(out_dir / "metrics.json")}


# ---------------------------------------------------------------------------
# cross-validation


def make_folds(manifest_paths: list[str], k: int) -> list[dict]:
    """Round-robin partition: every dataset lands in exactly one test fold."""
    if len(manifest_paths) < k:
        raise CloudsegError(f"need at least {k} datasets for {k}-fold cross-validation")
    folds = []
    for i in range(k):
        test = [m for j, m in enumerate(manifest_paths) if j % k == i]
        train = [m for j, m in enumerate(manifest_paths) if j % k != i]
        folds.append({"test": test, "train": train})
    return folds


def run_crossval(manifest_paths: list[str], k: int, base_cfg: TrainConfig, out_dir) -> dict:
    """Train k models, each tested on the datasets its training never saw."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_paths = list(manifest_paths)
    folds = make_folds(manifest_paths, k)

    fold_rows = []
    for i, fold in enumerate(folds):
        if set(fold["train"]) & set(fold["test"]):
            raise CloudsegError(f"fold {i} leaks test data into training")
        fold_dir = out_dir / f"fold_{i}"
        train_cfg = TrainConfig(
            seed=base_cfg.seed + i, manifests=tuple(fold["train"]), out_dir=str(fold_dir / "train"),
            net=base_cfg.net, augment=base_cfg.augment, labeler=base_cfg.labeler,
            dims=base_cfg.dims, lr=base_cfg.lr, epochs=base_cfg.epochs,
            accumulate_steps=base_cfg.accumulate_steps,
        )
        train_out = run_train(train_cfg)
        eval_out = run_eval(train_out["final_checkpoint"], fold["test"], fold_dir / "eval",
                            dims=base_cfg.dims, model_tag=f"fold{i}")
        pooled = eval_out["aggregate"]["pooled"]
        fold_rows.append({
            "fold": i,
            "train": [load_manifest(m)["name"] for m in fold["train"]],
            "test": [load_manifest(m)["name"] for m in fold["test"]],
            "P": pooled["P"], "R": pooled["R"], "F1": pooled["F1"], "IoU": pooled["IoU"],
        })

    mean_row = {key: float(np.mean([r[key] for r in fold_rows])) for key in ("P", "R", "F1", "IoU")}
    table_path = out_dir / "crossval.csv"
    with open(table_path, "w") as f:
        f.write("model,d_train,d_test,P,R,F1,IoU\n")
        for r in fold_rows:
            f.write(f"fold{r['fold']},{'+'.join(r['train'])},{'+'.join(r['test'])},"
                    f"{r['P']:.4f},{r['R']:.4f},{r['F1']:.4f},{r['IoU']:.4f}\n")
        f.write(f"mean,,,{mean_row['P']:.4f},{mean_row['R']:.4f},{mean_row['F1']:.4f},{mean_row['IoU']:.4f}\n")
    return {"folds": fold_rows, "mean": mean_row, "table": str(table_path)}
