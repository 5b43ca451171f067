"""Seeded synthetic datasets, controlled misalignment, and a brute-force oracle.

Everything here is a pure function of (inputs, seed).  Randomness comes from
random.Random seeded with strings like "7:gt"; string seeding is hashed with
SHA-512 by the interpreter, so the streams reproduce across platforms and
interpreter versions.

Misalignment is injected by shifting a box along one axis.  For two
equal-size boxes of width w offset by d on that axis, IoU = (w - d)/(w + d),
so d = w * (1 - t)/(1 + t) hits a target IoU of t in closed form.  No
search, no tolerance juggling: recovery tests can demand exact box equality.

oracle_calibrate is a deliberately naive re-implementation of the
calibration scan.  It enumerates every (detection, annotation) pair with a
quadratic loop and its own scalar IoU arithmetic, sharing no matrix,
sorting, or early-exit code with the calibrate module.  Agreement between
the two is the point; keep them independent.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from time import perf_counter
from typing import TextIO

from .adc import AdcResult
from .calibrate import CalibrationConfig, CalibrationCounters, CalibrationResult, MbpRecord
from .formats import (AnnotationSet, Detection, DetectionSet, FaceAnnotation,
                      ImageAnnotations, ImageDetections)
from .geometry import BBox, iou

_PLACEMENT_TRIES = 1000


@dataclass(frozen=True, slots=True)
class SynthSpec:
    """Shape of a generated dataset.  Ranges are inclusive (min, max) pairs."""

    seed: int
    n_images: int
    faces_per_image: tuple[int, int] = (1, 5)
    image_size: tuple[int, int] = (1024, 1024)
    box_size: tuple[int, int] = (16, 64)
    aligned_score_range: tuple[float, float] = (0.9, 1.0)
    distractor_score_range: tuple[float, float] = (0.0, 0.2)
    distractors_per_image: tuple[int, int] = (0, 0)
    min_gap: float = 0.0  # 0 disables the separation constraint; faces may overlap

    def __post_init__(self) -> None:
        if self.n_images < 0:
            raise ValueError(f"n_images must be >= 0, got {self.n_images}")
        for name in ("faces_per_image", "box_size", "distractors_per_image"):
            lo, hi = getattr(self, name)
            if lo < 0 or lo > hi:
                raise ValueError(f"{name} needs 0 <= min <= max, got ({lo}, {hi})")
        for name in ("aligned_score_range", "distractor_score_range"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"{name} needs 0 <= min <= max <= 1, got ({lo}, {hi})")
        w, h = self.image_size
        if w < 1 or h < 1:
            raise ValueError(f"image_size must be positive, got {self.image_size}")
        if self.box_size[0] < 1:
            raise ValueError(f"box_size minimum must be >= 1, got {self.box_size[0]}")
        if self.box_size[1] > min(w, h):
            raise ValueError(
                f"infeasible: boxes up to {self.box_size[1]} px cannot fit a "
                f"{w}x{h} image")
        if self.min_gap < 0:
            raise ValueError(f"min_gap must be >= 0, got {self.min_gap}")


@dataclass(frozen=True, slots=True)
class PerturbEntry:
    path: str
    ann_index: int
    true_box: BBox
    perturbed_box: BBox
    achieved_iou: float


@dataclass(frozen=True)
class PerturbLedger:
    entries: list[PerturbEntry] = field(default_factory=list)


def _separated(a: BBox, b: BBox, gap: float) -> bool:
    return (a.x + a.w + gap <= b.x or b.x + b.w + gap <= a.x
            or a.y + a.h + gap <= b.y or b.y + b.h + gap <= a.y)


def _random_box(rng: random.Random, spec: SynthSpec) -> BBox:
    bw = rng.randint(spec.box_size[0], spec.box_size[1])
    bh = rng.randint(spec.box_size[0], spec.box_size[1])
    x = rng.randint(0, spec.image_size[0] - bw)
    y = rng.randint(0, spec.image_size[1] - bh)
    return BBox(float(x), float(y), float(bw), float(bh))


def _place_box(rng: random.Random, spec: SynthSpec, placed: list[BBox]) -> BBox:
    if spec.min_gap == 0:
        return _random_box(rng, spec)
    for _ in range(_PLACEMENT_TRIES):
        box = _random_box(rng, spec)
        if all(_separated(box, other, spec.min_gap) for other in placed):
            return box
    raise ValueError(
        f"could not place a face with min_gap={spec.min_gap} after "
        f"{_PLACEMENT_TRIES} tries; enlarge the image or reduce faces/gap")


def generate_dataset(spec: SynthSpec) -> AnnotationSet:
    """Deterministic annotation set: integer-coordinate boxes, seeded flags.

    With min_gap = 0 faces may overlap freely; a positive min_gap keeps every
    pair of faces separated by at least that many pixels on some axis
    (rejection-sampled, raising ValueError for infeasible specs).
    """
    rng = random.Random(f"{spec.seed}:gt")
    images: list[ImageAnnotations] = []
    for i in range(spec.n_images):
        path = f"d{i // 1000:03d}/img{i:06d}.jpg"
        n_faces = rng.randint(spec.faces_per_image[0], spec.faces_per_image[1])
        placed: list[BBox] = []
        faces: list[FaceAnnotation] = []
        for _ in range(n_faces):
            box = _place_box(rng, spec, placed)
            placed.append(box)
            faces.append(FaceAnnotation(
                box=box,
                blur=rng.randint(0, 2),
                expression=rng.randint(0, 1),
                illumination=rng.randint(0, 1),
                invalid=0,
                occlusion=rng.randint(0, 2),
                pose=rng.randint(0, 1),
            ))
        images.append(ImageAnnotations(path=path, faces=faces))
    return AnnotationSet(images=images)


def perturb(annset: AnnotationSet, seed: int, fraction: float,
            iou_range: tuple[float, float], *,
            image_size: tuple[int, int] | None = None) -> tuple[AnnotationSet, PerturbLedger]:
    """Shift a seeded floor(fraction * K) of the boxes to an exact target IoU.

    Each selected box of width w moves along +x by d = w * (1 - t)/(1 + t)
    for a seeded target t drawn uniformly from iou_range; the shift flips to
    -x when image_size is given and +x would push the box past the right
    edge (no further fallback).  Flags are untouched.  Zero-area boxes are
    not eligible: they have no IoU to target.
    """
    lo, hi = iou_range
    if not (0.0 < lo <= hi < 1.0):
        raise ValueError(f"iou_range needs 0 < lo <= hi < 1, got ({lo}, {hi})")
    if not (0.0 <= fraction <= 1.0):
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")

    eligible = [(i, k)
                for i, img in enumerate(annset.images)
                for k, f in enumerate(img.faces)
                if f.box.w > 0 and f.box.h > 0]
    count = math.floor(fraction * len(eligible))
    if count == 0:
        return annset, PerturbLedger([])

    rng = random.Random(f"{seed}:perturb")
    chosen = sorted(rng.sample(range(len(eligible)), count))

    entries: list[PerturbEntry] = []
    new_faces_by_image: dict[int, list[FaceAnnotation]] = {}
    for pos in chosen:
        i, k = eligible[pos]
        img = annset.images[i]
        true_box = img.faces[k].box
        t = rng.uniform(lo, hi)
        d = true_box.w * (1.0 - t) / (1.0 + t)
        new_x = true_box.x + d
        if image_size is not None and new_x + true_box.w > image_size[0]:
            new_x = true_box.x - d
        moved = BBox(new_x, true_box.y, true_box.w, true_box.h)
        faces = new_faces_by_image.setdefault(i, list(img.faces))
        faces[k] = replace(img.faces[k], box=moved)
        entries.append(PerturbEntry(
            path=img.path, ann_index=k, true_box=true_box,
            perturbed_box=moved, achieved_iou=iou(moved, true_box)))

    images = [ImageAnnotations(path=img.path, faces=new_faces_by_image[i])
              if i in new_faces_by_image else img
              for i, img in enumerate(annset.images)]
    return AnnotationSet(images=images), PerturbLedger(entries)


def emit_detections(truth: AnnotationSet, spec: SynthSpec) -> DetectionSet:
    """One true-box detection per face plus seeded distractors, sorted per image.

    Aligned detections carry the TRUE (pre-perturbation) boxes, so feed this
    the unperturbed set.  Scores come from ``spec.aligned_score_range``;
    distractors get random boxes and scores from the distractor range.
    """
    rng = random.Random(f"{spec.seed}:detections")
    images: list[ImageDetections] = []
    for img in truth.images:
        dets = [Detection(box=f.box,
                          score=rng.uniform(spec.aligned_score_range[0],
                                            spec.aligned_score_range[1]))
                for f in img.faces]
        n_extra = rng.randint(spec.distractors_per_image[0], spec.distractors_per_image[1])
        for _ in range(n_extra):
            dets.append(Detection(box=_random_box(rng, spec),
                                  score=rng.uniform(spec.distractor_score_range[0],
                                                    spec.distractor_score_range[1])))
        dets.sort(key=lambda d: d.score, reverse=True)
        images.append(ImageDetections(path=img.path, dets=dets))
    return DetectionSet(images=images)


def write_perturb_ledger(ledger: PerturbLedger, stream: TextIO) -> None:
    stream.write("path\tann_index\ttrue_x\ttrue_y\ttrue_w\ttrue_h"
                 "\tpert_x\tpert_y\tpert_w\tpert_h\tachieved_iou\n")
    for e in ledger.entries:
        t, p = e.true_box, e.perturbed_box
        cells = (e.path, e.ann_index, t.x, t.y, t.w, t.h, p.x, p.y, p.w, p.h, e.achieved_iou)
        stream.write("\t".join(repr(c) if isinstance(c, float) else str(c)
                               for c in cells) + "\n")


def _plain_iou(a: BBox, b: BBox) -> float:
    # Same operation order as the geometry module so results agree bit for
    # bit, but written out independently on purpose.
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    if ix <= 0:
        return 0.0
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iy <= 0:
        return 0.0
    overlap = ix * iy
    combined = a.w * a.h + b.w * b.h - overlap
    if combined <= 0:
        return 0.0
    ratio = overlap / combined
    return ratio if ratio < 1.0 else 1.0


def oracle_calibrate(anns: AnnotationSet, dets: DetectionSet,
                     cfg: CalibrationConfig | None = None) -> CalibrationResult:
    """Reference calibration by exhaustive enumeration.

    Joins annotations to detections itself, recomputes the confidence
    average with its own accumulator, filters high-confidence detections by
    plain comparison instead of a prefix scan, and finds each detection's
    best annotation with a quadratic loop over all pairs.  Claims resolve in
    descending-score order against an explicit taken-set.  Intended for
    equivalence testing against calibrate_dataset, not for large datasets.
    """
    if cfg is None:
        cfg = CalibrationConfig()
    t0 = perf_counter()

    by_path: dict[str, list[Detection]] = {}
    for det_img in dets.images:
        by_path[det_img.path] = det_img.dets
    joined = [(img, by_path.get(img.path, [])) for img in anns.images]

    adc_result: AdcResult | None
    if cfg.adc_override is not None:
        adc_result = None
        threshold = cfg.adc_override
    else:
        total = 0.0
        used_total = 0
        images_used = 0
        shortfall = 0
        for img, dlist in joined:
            if len(dlist) < len(img.faces):
                shortfall += 1
            used = min(len(img.faces), len(dlist))
            if used == 0:
                continue
            for det in dlist[:used]:  # loaders keep detections score-sorted
                total += det.score
            used_total += used
            images_used += 1
        if used_total == 0:
            adc_result = AdcResult(0.0, 0.0, 0, 0, shortfall)
        else:
            adc_result = AdcResult(total / used_total, total, used_total,
                                   images_used, shortfall)
        threshold = adc_result.value

    counters = CalibrationCounters(images_processed=len(joined))
    out_images: list[ImageAnnotations] = []
    mbps: list[MbpRecord] = []
    for img, dlist in joined:
        if not img.faces:
            out_images.append(img)
            continue
        strong = [d for d in dlist if d.score > threshold]
        if cfg.include_invalid:
            candidates = list(range(len(img.faces)))
        else:
            candidates = [k for k, f in enumerate(img.faces) if not f.invalid]
        if not strong or not candidates:
            out_images.append(img)
            continue
        counters.hcdrs_considered += len(strong)

        taken: set[int] = set()
        img_records: list[MbpRecord] = []
        for j, det in enumerate(strong):
            best = -1.0
            best_k = -1
            for k in candidates:
                v = _plain_iou(det.box, img.faces[k].box)
                if v > best:  # strict: ties keep the lowest annotation index
                    best = v
                    best_k = k
            if cfg.t_m <= best <= cfg.t_c:
                if best_k in taken:
                    counters.skipped_already_claimed += 1
                else:
                    taken.add(best_k)
                    img_records.append(MbpRecord(
                        path=img.path, det_index=j, ann_index=best_k, iou=best,
                        score=det.score, old_box=img.faces[best_k].box,
                        new_box=det.box))
            else:
                counters.skipped_out_of_interval += 1

        if img_records:
            new_faces = list(img.faces)
            for r in img_records:
                new_faces[r.ann_index] = replace(new_faces[r.ann_index], box=r.new_box)
            out_images.append(ImageAnnotations(path=img.path, faces=new_faces))
            mbps.extend(img_records)
        else:
            out_images.append(img)

    return CalibrationResult(
        calibrated=AnnotationSet(images=out_images),
        mbps=mbps,
        counters=counters,
        wall_time=perf_counter() - t0,
        effective_adc=threshold,
        adc=adc_result,
        config=cfg,
    )
