"""Validated ingest and persistence for every artifact in the pipeline.

File formats (all little-endian binary or UTF-8 text):

  point cloud   ``.bin``    flat binary, 4 x float32 per return (x, y, z, r),
                            no header; identical to the common velodyne dump
                            layout so real captures drop in unchanged.
  detections    ``.jsonl``  one self-describing JSON object per line, floats
                            rounded to 9 significant digits.
  ground truth  ``.jsonl``  same encoding.
  manifest      ``.json``   dataset name, class names, frame/split table and
                            relative file paths.
  feature table ``.tsv``    tab-separated, single header row, floats at 17
                            significant digits (lossless round-trip).

Readers reject anything their paired writer could not have produced; the
default is strict (raise), with a lenient mode that reports and skips.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .geometry import OrientedBox3D, PointCloud

log = logging.getLogger(__name__)

POINT_RECORD_SIZE = 16  # 4 float32
PROB_SUM_TOL = 1e-6

TRAIN_SPLIT = "train-meta"
TEST_SPLIT = "test-meta"


class IngestError(Exception):
    """Base for everything this module raises on bad input."""


class FormatError(IngestError):
    """Structurally malformed file: wrong framing, header, or field set."""


class ValidationError(IngestError):
    """Well-formed file whose content violates an invariant."""


def fmt9(x: float) -> float:
    """Round to 9 significant digits (the record-file serialization grain)."""
    return float(format(float(x), ".9g"))


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# domain records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawDetection:
    """One pre-NMS detector proposal."""

    frame_id: str
    box_id: int
    box: OrientedBox3D
    score: float
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"score must be in [0, 1], got {self.score}")
        if len(self.probs) < 1:
            raise ValidationError("class distribution must have at least one entry")
        if any(p < 0.0 for p in self.probs):
            raise ValidationError("class probabilities must be non-negative")
        if abs(sum(self.probs) - 1.0) > PROB_SUM_TOL:
            raise ValidationError(
                f"class probabilities must sum to 1 within {PROB_SUM_TOL}, "
                f"got {sum(self.probs)!r}"
            )

    @property
    def pred_class(self) -> int:
        """Argmax class index; ties break toward the lowest index."""
        return int(np.argmax(self.probs))


@dataclass(frozen=True)
class GroundTruthBox:
    frame_id: str
    ann_id: int
    box: OrientedBox3D
    cls: int

    def __post_init__(self) -> None:
        if self.cls < 0:
            raise ValidationError(f"class index must be >= 0, got {self.cls}")


@dataclass
class FrameBundle:
    """One frame: cloud, annotations, and the full pre-NMS detection set."""

    frame_id: str
    cloud: PointCloud
    ground_truth: list[GroundTruthBox]
    detections: list[RawDetection]

    def __post_init__(self) -> None:
        for member in (self.cloud,):
            if member.frame_id != self.frame_id:
                raise ValidationError(
                    f"cloud frame id {member.frame_id!r} != bundle {self.frame_id!r}"
                )
        for rec in self.ground_truth:
            if rec.frame_id != self.frame_id:
                raise ValidationError(
                    f"ground truth {rec.ann_id} belongs to frame {rec.frame_id!r}, "
                    f"not {self.frame_id!r}"
                )
        for rec in self.detections:
            if rec.frame_id != self.frame_id:
                raise ValidationError(
                    f"detection {rec.box_id} belongs to frame {rec.frame_id!r}, "
                    f"not {self.frame_id!r}"
                )


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------


@dataclass
class CloudReadReport:
    clamped: int = 0
    dropped_nonfinite: int = 0


def read_point_cloud(path, frame_id: str | None = None) -> tuple[PointCloud, CloudReadReport]:
    """Parse a flat binary cloud; clamp reflectance, drop non-finite returns.

    Raises FormatError when the file length is not a multiple of the
    16-byte record size, naming the offending byte offset.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % POINT_RECORD_SIZE != 0:
        offset = len(raw) - (len(raw) % POINT_RECORD_SIZE)
        raise FormatError(
            f"{path}: truncated point record at byte {offset} "
            f"(file length {len(raw)} is not a multiple of {POINT_RECORD_SIZE})"
        )
    pts = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(np.float64)
    report = CloudReadReport()
    finite = np.all(np.isfinite(pts), axis=1)
    report.dropped_nonfinite = int(np.count_nonzero(~finite))
    pts = pts[finite]
    out_of_range = (pts[:, 3] < 0.0) | (pts[:, 3] > 1.0)
    report.clamped = int(np.count_nonzero(out_of_range))
    pts[:, 3] = np.clip(pts[:, 3], 0.0, 1.0)
    cloud = PointCloud(frame_id if frame_id is not None else path.stem, pts)
    return cloud, report


def write_point_cloud(cloud: PointCloud, path) -> None:
    Path(path).write_bytes(cloud.points.astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# detection / ground-truth record files
# ---------------------------------------------------------------------------

_BOX_KEYS = ("cx", "cy", "cz", "l", "w", "h", "yaw")


def _box_fields(box: OrientedBox3D) -> dict:
    return {k: fmt9(getattr(box, k)) for k in _BOX_KEYS}


def _parse_box(obj: dict, where: str) -> OrientedBox3D:
    try:
        return OrientedBox3D(*(float(obj[k]) for k in _BOX_KEYS))
    except KeyError as exc:
        raise FormatError(f"{where}: missing field {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def write_detections(detections: Iterable[RawDetection], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for det in detections:
            rec = {"frame_id": det.frame_id, "box_id": det.box_id}
            rec.update(_box_fields(det.box))
            rec["score"] = fmt9(det.score)
            rec["probs"] = [fmt9(p) for p in det.probs]
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_detections(path, class_count: int | None = None) -> list[RawDetection]:
    out = []
    for lineno, obj in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            probs = tuple(float(p) for p in obj["probs"])
            det = RawDetection(
                frame_id=str(obj["frame_id"]),
                box_id=int(obj["box_id"]),
                box=_parse_box(obj, where),
                score=float(obj["score"]),
                probs=probs,
            )
        except KeyError as exc:
            raise FormatError(f"{where}: missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{where}: {exc}") from exc
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        if class_count is not None and len(det.probs) != class_count:
            raise ValidationError(
                f"{where}: class distribution has {len(det.probs)} entries, "
                f"dataset declares {class_count} classes"
            )
        out.append(det)
    return out


def write_ground_truth(records: Iterable[GroundTruthBox], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {"frame_id": rec.frame_id, "ann_id": rec.ann_id}
            obj.update(_box_fields(rec.box))
            obj["cls"] = rec.cls
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_ground_truth(path, class_count: int | None = None) -> list[GroundTruthBox]:
    out = []
    for lineno, obj in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            rec = GroundTruthBox(
                frame_id=str(obj["frame_id"]),
                ann_id=int(obj["ann_id"]),
                box=_parse_box(obj, where),
                cls=int(obj["cls"]),
            )
        except KeyError as exc:
            raise FormatError(f"{where}: missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{where}: {exc}") from exc
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        if class_count is not None and not rec.cls < class_count:
            raise ValidationError(
                f"{where}: class index {rec.cls} out of range for "
                f"{class_count} classes"
            )
        out.append(rec)
    return out


def _iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        lineno = 0
        while True:
            lineno += 1
            try:
                line = fh.readline()
            except UnicodeDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: not valid UTF-8 ({exc.reason})") from exc
            if not line:
                return
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


# ---------------------------------------------------------------------------
# dataset manifest
# ---------------------------------------------------------------------------

MANIFEST_FORMAT = "lidarqc-manifest-v1"


@dataclass
class FrameEntry:
    frame_id: str
    split: str
    cloud: str  # path relative to the manifest directory


@dataclass
class DatasetManifest:
    name: str
    class_names: tuple[str, ...]
    frames: list[FrameEntry]
    detections: str
    ground_truth: str
    sidecars: dict = field(default_factory=dict)
    root: Path = field(default_factory=Path)

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def frame_ids(self, split: str | None = None) -> list[str]:
        return [f.frame_id for f in self.frames if split is None or f.split == split]

    def splits(self) -> list[str]:
        seen = []
        for f in self.frames:
            if f.split not in seen:
                seen.append(f.split)
        return seen

    def path(self, rel: str) -> Path:
        return self.root / rel


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    doc = {
        "format": MANIFEST_FORMAT,
        "name": manifest.name,
        "class_names": list(manifest.class_names),
        "frames": [
            {"frame_id": f.frame_id, "split": f.split, "cloud": f.cloud}
            for f in manifest.frames
        ],
        "detections": manifest.detections,
        "ground_truth": manifest.ground_truth,
        "sidecars": dict(manifest.sidecars),
    }
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc.msg})") from exc
    if doc.get("format") != MANIFEST_FORMAT:
        raise FormatError(
            f"{path}: unknown manifest format {doc.get('format')!r}, "
            f"expected {MANIFEST_FORMAT!r}"
        )
    try:
        manifest = DatasetManifest(
            name=str(doc["name"]),
            class_names=tuple(str(c) for c in doc["class_names"]),
            frames=[
                FrameEntry(str(f["frame_id"]), str(f["split"]), str(f["cloud"]))
                for f in doc["frames"]
            ],
            detections=str(doc["detections"]),
            ground_truth=str(doc["ground_truth"]),
            sidecars={str(k): str(v) for k, v in doc.get("sidecars", {}).items()},
            root=path.parent,
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed manifest ({exc!r})") from exc
    if manifest.class_count < 1:
        raise ValidationError(f"{path}: manifest declares no classes")
    seen: set[str] = set()
    for f in manifest.frames:
        if f.frame_id in seen:
            raise ValidationError(
                f"{path}: frame {f.frame_id!r} appears in more than one split entry"
            )
        seen.add(f.frame_id)
        if not manifest.path(f.cloud).is_file():
            raise ValidationError(f"{path}: missing cloud file {f.cloud!r}")
    for rel in (manifest.detections, manifest.ground_truth, *manifest.sidecars.values()):
        if not manifest.path(rel).is_file():
            raise ValidationError(f"{path}: missing referenced file {rel!r}")
    return manifest


def read_frames(
    manifest: DatasetManifest, split: str | None = None, strict: bool = True
) -> Iterator[FrameBundle]:
    """Yield validated frame bundles in manifest order.

    In lenient mode (strict=False) frames or records that fail validation
    are reported via logging and skipped; strict mode raises.
    """
    known = set(manifest.frame_ids())
    det_by_frame: dict[str, list[RawDetection]] = {}
    for det in read_detections(manifest.path(manifest.detections), manifest.class_count):
        if det.frame_id not in known:
            msg = f"detection {det.box_id} references unknown frame {det.frame_id!r}"
            if strict:
                raise ValidationError(msg)
            log.warning("skipping: %s", msg)
            continue
        det_by_frame.setdefault(det.frame_id, []).append(det)
    gt_by_frame: dict[str, list[GroundTruthBox]] = {}
    for rec in read_ground_truth(manifest.path(manifest.ground_truth), manifest.class_count):
        if rec.frame_id not in known:
            msg = f"annotation {rec.ann_id} references unknown frame {rec.frame_id!r}"
            if strict:
                raise ValidationError(msg)
            log.warning("skipping: %s", msg)
            continue
        gt_by_frame.setdefault(rec.frame_id, []).append(rec)

    for entry in manifest.frames:
        if split is not None and entry.split != split:
            continue
        try:
            cloud, report = read_point_cloud(manifest.path(entry.cloud), entry.frame_id)
            if report.dropped_nonfinite:
                log.warning(
                    "%s: dropped %d non-finite returns", entry.frame_id,
                    report.dropped_nonfinite,
                )
            yield FrameBundle(
                frame_id=entry.frame_id,
                cloud=cloud,
                ground_truth=gt_by_frame.get(entry.frame_id, []),
                detections=det_by_frame.get(entry.frame_id, []),
            )
        except IngestError as exc:
            if strict:
                raise
            log.warning("skipping frame %s: %s", entry.frame_id, exc)


# ---------------------------------------------------------------------------
# feature rows and the columnar feature table
# ---------------------------------------------------------------------------


@dataclass
class FeatureRow:
    """Feature vector for one NMS survivor plus its targets."""

    frame_id: str
    box_id: int
    values: dict[str, float]
    iou: float = math.nan
    tp: int = -1


@dataclass
class FeatureTable:
    """Columnar feature matrix with identity and target columns."""

    feature_names: tuple[str, ...]
    frame_ids: list[str]
    box_ids: np.ndarray
    values: np.ndarray
    iou: np.ndarray
    tp: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size == 0:
            self.values = self.values.reshape(0, len(self.feature_names))
        self.box_ids = np.asarray(self.box_ids, dtype=int)
        self.iou = np.asarray(self.iou, dtype=float)
        self.tp = np.asarray(self.tp, dtype=int)
        n = len(self.frame_ids)
        if not (
            self.values.shape == (n, len(self.feature_names))
            and self.box_ids.shape == (n,)
            and self.iou.shape == (n,)
            and self.tp.shape == (n,)
        ):
            raise ValidationError("feature table columns have inconsistent lengths")

    def __len__(self) -> int:
        return len(self.frame_ids)

    @classmethod
    def from_rows(cls, rows: Sequence[FeatureRow], feature_names: Sequence[str]) -> "FeatureTable":
        names = tuple(feature_names)
        values = np.empty((len(rows), len(names)))
        for i, row in enumerate(rows):
            try:
                values[i] = [row.values[name] for name in names]
            except KeyError as exc:
                raise ValidationError(
                    f"row {row.frame_id}/{row.box_id} lacks feature {exc.args[0]!r}"
                ) from exc
        return cls(
            feature_names=names,
            frame_ids=[r.frame_id for r in rows],
            box_ids=np.array([r.box_id for r in rows], dtype=int),
            values=values,
            iou=np.array([r.iou for r in rows]),
            tp=np.array([r.tp for r in rows], dtype=int),
        )

    def to_rows(self) -> list[FeatureRow]:
        return [
            FeatureRow(
                frame_id=self.frame_ids[i],
                box_id=int(self.box_ids[i]),
                values={n: float(v) for n, v in zip(self.feature_names, self.values[i])},
                iou=float(self.iou[i]),
                tp=int(self.tp[i]),
            )
            for i in range(len(self))
        ]

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.feature_names.index(name)
        except ValueError as exc:
            raise KeyError(f"unknown feature {name!r}") from exc
        return self.values[:, idx]

    def select(self, names: Sequence[str]) -> "FeatureTable":
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise KeyError(f"unknown feature {missing[0]!r}")
        cols = [self.feature_names.index(n) for n in names]
        return FeatureTable(
            feature_names=tuple(names),
            frame_ids=list(self.frame_ids),
            box_ids=self.box_ids.copy(),
            values=self.values[:, cols].copy(),
            iou=self.iou.copy(),
            tp=self.tp.copy(),
        )

    def subset(self, mask: np.ndarray) -> "FeatureTable":
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return FeatureTable(
            feature_names=self.feature_names,
            frame_ids=[self.frame_ids[i] for i in idx],
            box_ids=self.box_ids[idx],
            values=self.values[idx],
            iou=self.iou[idx],
            tp=self.tp[idx],
        )


_TABLE_ID_COLS = ("frame_id", "box_id")
_TABLE_TARGET_COLS = ("iou", "tp")


def write_feature_table(table: FeatureTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = (*_TABLE_ID_COLS, *table.feature_names, *_TABLE_TARGET_COLS)
        fh.write("\t".join(header) + "\n")
        for i in range(len(table)):
            cells = [table.frame_ids[i], str(int(table.box_ids[i]))]
            cells.extend(fmt17(v) for v in table.values[i])
            cells.append(fmt17(table.iou[i]))
            cells.append(str(int(table.tp[i])))
            fh.write("\t".join(cells) + "\n")


def read_feature_table(path, expected_features: Sequence[str] | None = None) -> FeatureTable:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise FormatError(f"{path}: empty file, expected a header row")
        header = header_line.rstrip("\n").split("\t")
        if tuple(header[:2]) != _TABLE_ID_COLS or tuple(header[-2:]) != _TABLE_TARGET_COLS:
            raise FormatError(
                f"{path}: header must start with {_TABLE_ID_COLS} and end "
                f"with {_TABLE_TARGET_COLS}"
            )
        names = tuple(header[2:-2])
        if expected_features is not None:
            expected = tuple(expected_features)
            if names != expected:
                missing = [n for n in expected if n not in names]
                extra = [n for n in names if n not in expected]
                raise FormatError(
                    f"{path}: feature columns do not match the expected set "
                    f"(missing {missing!r}, unexpected {extra!r})"
                )
        frame_ids: list[str] = []
        box_ids: list[int] = []
        values: list[list[float]] = []
        iou: list[float] = []
        tp: list[int] = []
        width = len(header)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) != width:
                raise FormatError(
                    f"{path}:{lineno}: expected {width} columns, got {len(cells)}"
                )
            try:
                frame_ids.append(cells[0])
                box_ids.append(int(cells[1]))
                values.append([float(c) for c in cells[2:-2]])
                iou.append(float(cells[-2]))
                tp.append(int(cells[-1]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return FeatureTable(
        feature_names=names,
        frame_ids=frame_ids,
        box_ids=np.array(box_ids, dtype=int),
        values=np.array(values) if values else np.empty((0, len(names))),
        iou=np.array(iou),
        tp=np.array(tp, dtype=int),
    )
