"""HTTP service for the browser annotation workflow.

Exposes datasets and their frames, accepts annotation documents, and runs
region-growing previews of the label bootstrap on a dataset's first frame.
The service is stateless between requests apart from the annotation JSON it
persists next to each dataset; every persisted document re-validates on load.

Frame wire format (application/octet-stream):
  16-byte header: magic "CSFR" (4), u32 version, u64 point count, little-endian
  per point: 3 x f32 position, 3 x u8 color (15 bytes)
"""

from __future__ import annotations

import base64
import json
import struct
import threading
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from .align import estimate_rigid_transform
from .errors import EmptyAfterCrop, NoClusters
from .labeler import annotation_from_dict, bootstrap_report
from .ply import load_ply

FRAME_MAGIC = b"CSFR"
FRAME_VERSION = 1
FRAME_HEADER = struct.Struct("<4sIQ")  # magic, version, point count


class CorrespondencePairModel(BaseModel):
    source: list[float] = Field(min_length=3, max_length=3)
    reference: list[float] = Field(min_length=3, max_length=3)


class CropBoxModel(BaseModel):
    min: list[float] = Field(min_length=3, max_length=3)
    max: list[float] = Field(min_length=3, max_length=3)

    @field_validator("max")
    @classmethod
    def _ordered(cls, v, info):
        lo = info.data.get("min")
        if lo is not None and any(a > b for a, b in zip(lo, v)):
            raise ValueError("crop box min must not exceed max componentwise")
        return v


class LabelerParamsModel(BaseModel):
    neighbor_radius: float = Field(default=0.005, gt=0)
    color_threshold: float = Field(default=0.12, gt=0)
    seed_color_tolerance: float = Field(default=0.20, gt=0)
    adjacency_distance: float = Field(default=0.005, gt=0)
    min_cluster_size: int = Field(default=50, ge=1)


class AnnotationDocument(BaseModel):
    schema_version: int = 1
    dataset: str | None = None
    created_at: str | None = None
    version: int | None = None
    correspondences: list[CorrespondencePairModel]
    crop_box: CropBoxModel
    seed_colors: list[list[float]]
    params: LabelerParamsModel = Field(default_factory=LabelerParamsModel)

    @field_validator("correspondences")
    @classmethod
    def _at_least_four(cls, v):
        if len(v) < 4:
            raise ValueError("at least four point correspondences are required")
        return v

    @field_validator("seed_colors")
    @classmethod
    def _seed_colors_valid(cls, v):
        if len(v) < 1:
            raise ValueError("at least one seed color is required")
        for color in v:
            if len(color) != 3 or min(color) < 0.0 or max(color) > 1.0:
                raise ValueError("seed colors must be RGB triples in [0, 1]")
        return v

    def core_dict(self) -> dict:
        return {
            "correspondences": [{"source": p.source, "reference": p.reference}
                                for p in self.correspondences],
            "crop_box": {"min": self.crop_box.min, "max": self.crop_box.max},
            "seed_colors": self.seed_colors,
            "params": self.params.model_dump(),
        }


class _DatasetStore:
    """Filesystem layout: <root>/<id>/raw/*.ply plus <root>/<id>/annotation.json."""

    def __init__(self, root: Path):
        self.root = root
        self._write_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def dataset_ids(self) -> list[str]:
        ids = [p.name for p in self.root.iterdir()
               if p.is_dir() and (p / "raw").is_dir() and sorted((p / "raw").glob("*.ply"))]
        return sorted(ids)

    def frame_paths(self, dataset_id: str) -> list[Path]:
        return sorted((self.root / dataset_id / "raw").glob("*.ply"))

    def annotation_path(self, dataset_id: str) -> Path:
        return self.root / dataset_id / "annotation.json"

    def write_lock(self, dataset_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._write_locks.setdefault(dataset_id, threading.Lock())


def encode_frame(positions: np.ndarray, colors: np.ndarray) -> bytes:
    n = positions.shape[0]
    header = FRAME_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, n)
    record = np.zeros(n, dtype=np.dtype([("pos", "<f4", 3), ("col", "u1", 3)]))
    record["pos"] = positions.astype(np.float32)
    record["col"] = np.clip(np.rint(colors * 255.0), 0, 255).astype(np.uint8)
    return header + record.tobytes()


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(data_root, preview_workers: int = 2, ui_dir=None) -> FastAPI:
    store = _DatasetStore(Path(data_root))
    preview_pool = threading.Semaphore(preview_workers)
    app = FastAPI(title="cloudseg annotation service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        errors = exc.errors()
        for err in errors:
            err.pop("input", None)
            err.pop("url", None)
            ctx = err.get("ctx")
            if ctx and "error" in ctx:
                ctx["error"] = str(ctx["error"])
        if any(e.get("type") == "json_invalid" for e in errors):
            return JSONResponse(status_code=400, content={"error": "malformed JSON body"})
        return JSONResponse(status_code=422, content={"detail": errors})

    @app.get("/datasets")
    def list_datasets():
        try:
            ids = store.dataset_ids()
        except OSError as exc:
            return _error(500, f"data root unreadable: {exc}")
        out = []
        for dataset_id in ids:
            frames = store.frame_paths(dataset_id)
            first = load_ply(frames[0])
            out.append({
                "id": dataset_id,
                "frames": len(frames),
                "first_frame_points": len(first),
                "has_annotation": store.annotation_path(dataset_id).exists(),
            })
        return out

    @app.get("/datasets/{dataset_id}/frames/{n}")
    def get_frame(dataset_id: str, n: int, max_points: int | None = None):
        frames = store.frame_paths(dataset_id)
        if not frames or n < 0 or n >= len(frames):
            return _error(404, f"unknown dataset or frame: {dataset_id}/{n}")
        cloud = load_ply(frames[n])
        positions, colors = cloud.positions, cloud.colors
        if max_points is not None and max_points > 0 and len(cloud) > max_points:
            stride = -(-len(cloud) // max_points)  # ceil division -> uniform stride
            positions, colors = positions[::stride], colors[::stride]
        return Response(content=encode_frame(positions, colors),
                        media_type="application/octet-stream")

    @app.get("/datasets/{dataset_id}/annotation")
    def get_annotation(dataset_id: str):
        path = store.annotation_path(dataset_id)
        if not path.exists():
            return _error(404, f"dataset {dataset_id} has no annotation")
        with open(path) as f:
            return json.load(f)

    @app.post("/datasets/{dataset_id}/annotation", status_code=201)
    def put_annotation(dataset_id: str, doc: AnnotationDocument):
        if dataset_id not in store.dataset_ids():
            return _error(404, f"unknown dataset {dataset_id}")
        path = store.annotation_path(dataset_id)
        with store.write_lock(dataset_id):
            version = 1
            if path.exists():
                with open(path) as f:
                    version = int(json.load(f).get("version", 0)) + 1
            stored = {
                "schema_version": doc.schema_version,
                "dataset": dataset_id,
                "created_at": datetime.now(timezone.utc).isoformat(),
                "version": version,
                **doc.core_dict(),
            }
            with open(path, "w") as f:
                json.dump(stored, f, indent=2, sort_keys=True)
            annotation_from_dict(stored)  # written documents must re-validate
        return {"path": str(path), "version": version}

    @app.post("/datasets/{dataset_id}/preview")
    def preview(dataset_id: str, doc: AnnotationDocument):
        frames = store.frame_paths(dataset_id)
        if not frames:
            return _error(404, f"unknown dataset {dataset_id}")
        if not preview_pool.acquire(blocking=False):
            return _error(429, "preview worker pool exhausted; retry shortly")
        try:
            ann = annotation_from_dict(doc.core_dict())
            t_align = estimate_rigid_transform(ann.correspondences)
            raw = load_ply(frames[0])
            try:
                result = bootstrap_report(raw, ann, t_align)
            except (NoClusters, EmptyAfterCrop) as exc:
                return _error(409, f"no matching cluster: {exc}")
            labels = result.cloud.labels
            packed = np.packbits(labels)  # MSB-first within each byte
            return {
                "n_points": int(len(result.cloud)),
                "positive_count": int(labels.sum()),
                "positive_fraction": result.positive_fraction,
                "cluster_count": result.cluster_count,
                "matched_cluster_count": result.matched_cluster_count,
                "labels_bitset": base64.b64encode(packed.tobytes()).decode("ascii"),
                "bit_order": "msb_first",
            }
        finally:
            preview_pool.release()

    if ui_dir:
        from fastapi.staticfiles import StaticFiles
        ui_path = Path(ui_dir)
        if ui_path.is_dir():
            app.mount("/ui", StaticFiles(directory=str(ui_path), html=True), name="ui")

    return app
