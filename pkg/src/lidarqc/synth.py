"""Seeded synthetic dataset generator.

Builds a desk-scale stand-in for a real capture: ground-truth objects,
surface-sampled returns plus uniform clutter, and a simulated detector
that emits jittered proposal clusters around every true object along
with low-scoring clutter detections.  A configurable fraction of the
annotations is deleted from the emitted ground truth and recorded in a
sidecar file, planting recoverable annotation errors for the audit
pipeline.

Everything is a deterministic function of (config, seed): generating
twice yields byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import (
    DatasetManifest,
    FrameEntry,
    GroundTruthBox,
    RawDetection,
    TEST_SPLIT,
    TRAIN_SPLIT,
    ValidationError,
    load_manifest,
    save_manifest,
    write_detections,
    write_ground_truth,
    write_point_cloud,
)
from .geometry import OrientedBox3D, PointCloud, iou_bev

# Rough l, w, h archetypes cycled over the class list.
SIZE_ARCHETYPES = (
    (4.4, 1.8, 1.6),
    (7.5, 2.5, 3.0),
    (0.7, 0.7, 1.75),
    (1.8, 0.7, 1.6),
)

DEFAULT_CLASSES = ("car", "truck", "pedestrian", "cyclist")


@dataclass(frozen=True)
class SynthConfig:
    n_frames: int = 100
    classes: tuple[str, ...] = DEFAULT_CLASSES
    objects_per_frame: float = 5.0
    points_per_object: float = 60.0
    clutter_points: float = 400.0
    proposals_per_object: float = 6.0
    translation_jitter: float = 0.0
    extent_jitter: float = 0.0
    yaw_jitter: float = 0.0
    score_noise: float = 0.0
    fp_rate: float = 0.0
    deletion_rate: float = 0.0
    train_fraction: float = 0.5
    scene_half_extent: float = 40.0

    def validate(self) -> None:
        if self.n_frames < 0:
            raise ValidationError(f"n_frames must be >= 0, got {self.n_frames}")
        if not self.classes:
            raise ValidationError("at least one class is required")
        for name in (
            "objects_per_frame",
            "points_per_object",
            "clutter_points",
            "proposals_per_object",
            "translation_jitter",
            "extent_jitter",
            "yaw_jitter",
            "score_noise",
            "fp_rate",
            "deletion_rate",
        ):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0.0 <= self.train_fraction <= 1.0:
            raise ValidationError(f"train_fraction must be in [0, 1], got {self.train_fraction}")
        if self.deletion_rate >= 1.0:
            raise ValidationError("deletion_rate must be < 1")


NOISE_PROFILES = {
    "none": {},
    "low": {
        "translation_jitter": 0.15,
        "extent_jitter": 0.04,
        "yaw_jitter": 0.05,
        "score_noise": 0.06,
        "fp_rate": 0.8,
    },
    "medium": {
        "translation_jitter": 0.32,
        "extent_jitter": 0.08,
        "yaw_jitter": 0.10,
        "score_noise": 0.24,
        "fp_rate": 2.0,
    },
}


def profile_config(name: str, **overrides) -> SynthConfig:
    try:
        knobs = dict(NOISE_PROFILES[name])
    except KeyError:
        raise ValidationError(
            f"unknown noise profile {name!r}, choose from {sorted(NOISE_PROFILES)}"
        ) from None
    knobs.update(overrides)
    return SynthConfig(**knobs)


def _sample_object(rng: np.random.Generator, cfg: SynthConfig, existing) -> tuple[OrientedBox3D, int]:
    cls = int(rng.integers(len(cfg.classes)))
    base_l, base_w, base_h = SIZE_ARCHETYPES[cls % len(SIZE_ARCHETYPES)]
    scale = 1.0 + rng.normal(0.0, 0.08, 3)
    l = max(0.3, base_l * scale[0])
    w = max(0.3, base_w * scale[1])
    h = max(0.3, base_h * scale[2])
    e = cfg.scene_half_extent
    for _ in range(25):
        cx = float(rng.uniform(-e, e))
        cy = float(rng.uniform(-e, e))
        if all((cx - b.cx) ** 2 + (cy - b.cy) ** 2 > 36.0 for b in existing):
            break
    cz = h / 2.0 + float(rng.normal(0.0, 0.03))
    yaw = float(rng.uniform(-np.pi, np.pi))
    return OrientedBox3D(cx, cy, cz, l, w, h, yaw), cls


def _surface_points(rng: np.random.Generator, box: OrientedBox3D, n: int) -> np.ndarray:
    """Uniform samples on the box surface, area-weighted over the 6 faces."""
    if n == 0:
        return np.empty((0, 3))
    areas = np.array(
        [
            box.w * box.h, box.w * box.h,  # +-x faces
            box.l * box.h, box.l * box.h,  # +-y faces
            box.l * box.w, box.l * box.w,  # +-z faces
        ]
    )
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, n)
    v = rng.uniform(-0.5, 0.5, n)
    local = np.empty((n, 3))
    for f in range(6):
        m = faces == f
        if not np.any(m):
            continue
        axis, sign = divmod(f, 2)
        fixed = (0.5 if sign == 0 else -0.5) * (box.l, box.w, box.h)[axis]
        if axis == 0:
            local[m] = np.column_stack([np.full(m.sum(), fixed), u[m] * box.w, v[m] * box.h])
        elif axis == 1:
            local[m] = np.column_stack([u[m] * box.l, np.full(m.sum(), fixed), v[m] * box.h])
        else:
            local[m] = np.column_stack([u[m] * box.l, v[m] * box.w, np.full(m.sum(), fixed)])
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    world = np.empty_like(local)
    world[:, 0] = box.cx + c * local[:, 0] - s * local[:, 1]
    world[:, 1] = box.cy + s * local[:, 0] + c * local[:, 1]
    world[:, 2] = box.cz + local[:, 2]
    return world


def _jittered_box(rng: np.random.Generator, box: OrientedBox3D, cfg: SynthConfig) -> OrientedBox3D:
    # Localization error scales with object footprint, relative to a car.
    size_scale = float(np.hypot(box.l, box.w)) / 4.75
    sigma_t = cfg.translation_jitter * size_scale
    dx, dy = rng.normal(0.0, sigma_t, 2)
    dz = rng.normal(0.0, 0.3 * sigma_t)
    scale = np.clip(1.0 + rng.normal(0.0, cfg.extent_jitter, 3), 0.55, 1.7)
    dyaw = rng.normal(0.0, cfg.yaw_jitter)
    return OrientedBox3D(
        box.cx + dx,
        box.cy + dy,
        box.cz + dz,
        box.l * scale[0],
        box.w * scale[1],
        box.h * scale[2],
        box.yaw + dyaw,
    )


def _class_probs(rng: np.random.Generator, cfg: SynthConfig, true_cls: int, quality: float) -> tuple:
    c = len(cfg.classes)
    if c == 1:
        return (1.0,)
    p_true = float(np.clip(0.42 + 0.5 * quality + rng.normal(0.0, 0.08), 0.05, 0.98))
    rest = rng.random(c - 1) + 0.25
    rest = (1.0 - p_true) * rest / rest.sum()
    probs = np.insert(rest, true_cls, p_true)
    probs = probs / probs.sum()
    return tuple(float(p) for p in probs)


def _detector_score(rng: np.random.Generator, cfg: SynthConfig, quality: float) -> float:
    # Deliberately miscalibrated as a TP probability: compressed and noisy.
    value = 0.12 + 0.78 * quality**1.6 + rng.normal(0.0, cfg.score_noise)
    return float(np.clip(value, 0.01, 0.995))


def generate_synthetic_dataset(config: SynthConfig, seed: int, out_dir) -> DatasetManifest:
    """Write a full dataset under out_dir and return its loaded manifest."""
    config.validate()
    out = Path(out_dir)
    (out / "clouds").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    detections: list[RawDetection] = []
    annotations: list[GroundTruthBox] = []
    deletions: list[GroundTruthBox] = []
    frames: list[FrameEntry] = []

    n_train = int(round(config.n_frames * config.train_fraction))
    for fi in range(config.n_frames):
        frame_id = f"{fi:06d}"
        objects: list[OrientedBox3D] = []
        classes: list[int] = []
        n_obj = max(1, int(rng.poisson(config.objects_per_frame)))
        for _ in range(n_obj):
            box, cls = _sample_object(rng, config, objects)
            objects.append(box)
            classes.append(cls)

        chunks = []
        for box in objects:
            n_pts = int(rng.poisson(config.points_per_object))
            xyz = _surface_points(rng, box, n_pts)
            base = rng.uniform(0.25, 0.9)
            refl = np.clip(base + rng.normal(0.0, 0.06, n_pts), 0.0, 1.0)
            chunks.append(np.column_stack([xyz, refl]))
        n_clutter = int(rng.poisson(config.clutter_points))
        e = config.scene_half_extent + 5.0
        clutter = np.column_stack(
            [
                rng.uniform(-e, e, n_clutter),
                rng.uniform(-e, e, n_clutter),
                rng.uniform(0.0, 3.5, n_clutter),
                np.clip(np.abs(rng.normal(0.0, 0.15, n_clutter)), 0.0, 1.0),
            ]
        )
        chunks.append(clutter)
        points = np.concatenate(chunks, axis=0)
        points = points[rng.permutation(len(points))]
        write_point_cloud(PointCloud(frame_id, points), out / "clouds" / f"{frame_id}.bin")
        frames.append(
            FrameEntry(frame_id, TRAIN_SPLIT if fi < n_train else TEST_SPLIT, f"clouds/{frame_id}.bin")
        )

        box_id = 0
        for obj_idx, (box, cls) in enumerate(zip(objects, classes)):
            n_prop = max(1, int(rng.poisson(config.proposals_per_object)))
            for _ in range(n_prop):
                proposal = _jittered_box(rng, box, config)
                quality = iou_bev(proposal, box)
                detections.append(
                    RawDetection(
                        frame_id,
                        box_id,
                        proposal,
                        _detector_score(rng, config, quality),
                        _class_probs(rng, config, cls, quality),
                    )
                )
                box_id += 1
            deleted = rng.random() < config.deletion_rate
            record = GroundTruthBox(frame_id, obj_idx, box, cls)
            (deletions if deleted else annotations).append(record)

        n_fp = int(rng.poisson(config.fp_rate))
        for _ in range(n_fp):
            ghost, cls = _sample_object(rng, config, objects)
            # Clutter detections have nothing to snap to: off-ground centers
            # and less typical extents than real objects.
            ghost = OrientedBox3D(
                ghost.cx,
                ghost.cy,
                ghost.cz + float(rng.normal(0.0, 0.35)),
                ghost.l * float(rng.uniform(0.6, 1.5)),
                ghost.w * float(rng.uniform(0.6, 1.5)),
                ghost.h * float(rng.uniform(0.7, 1.4)),
                ghost.yaw,
            )
            cluster = max(1, int(rng.poisson(1.6)))
            for _ in range(cluster):
                proposal = _jittered_box(rng, ghost, config)
                score = float(np.clip(rng.normal(0.24, 0.11), 0.01, 0.7))
                probs = _class_probs(rng, config, cls, float(rng.uniform(0.0, 0.35)))
                detections.append(RawDetection(frame_id, box_id, proposal, score, probs))
                box_id += 1

    write_detections(detections, out / "detections.jsonl")
    write_ground_truth(annotations, out / "ground_truth.jsonl")
    write_ground_truth(deletions, out / "deletions.jsonl")
    manifest = DatasetManifest(
        name="synthetic",
        class_names=config.classes,
        frames=frames,
        detections="detections.jsonl",
        ground_truth="ground_truth.jsonl",
        sidecars={"deletions": "deletions.jsonl"},
        root=out,
    )
    save_manifest(manifest, out / "manifest.json")
    return load_manifest(out / "manifest.json")


def read_deletion_sidecar(manifest: DatasetManifest) -> list[GroundTruthBox]:
    from .dataio import read_ground_truth

    rel = manifest.sidecars.get("deletions")
    if rel is None:
        return []
    return read_ground_truth(manifest.path(rel), manifest.class_count)
