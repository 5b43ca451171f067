"""Parsing and writing of WIDER-style annotation and detection files.

Ground-truth grammar (repeated records):

    <image path>
    <face count K>
    K lines of: x y w h blur expression illumination invalid occlusion pose

A record with K == 0 may be followed by a single all-zero dummy line
("0 0 0 0 0 0 0 0 0 0"); real files contain it, so the parser consumes and
discards it, and the writer emits it back for byte-compatibility.

Detection files (one per image, mirroring the image directory tree):

    <image name>
    <detection count>
    count lines of: x y w h score

The image key of a per-image file is its path relative to the root with the
".txt" suffix swapped for the image extension.  A consolidated single-file
variant concatenates the same records; there the name line is the image key
verbatim.

Input accepts LF and CRLF; output is always LF.  Parsers keep face order
exactly as found in the file, so the in-memory index k of a face is
meaningful.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

from .geometry import BBox

log = logging.getLogger(__name__)

# Documented WIDER attribute ranges; out-of-range values are warned about,
# never rejected, because real files contain noise.
_FLAG_RANGES = (
    ("blur", 0, 2),
    ("expression", 0, 1),
    ("illumination", 0, 1),
    ("invalid", 0, 1),
    ("occlusion", 0, 2),
    ("pose", 0, 1),
)


class ParseError(ValueError):
    """Malformed input file, with the source name and 1-based line number."""

    def __init__(self, source: str, line: int, message: str):
        self.source = source
        self.line = line
        self.message = message
        super().__init__(f"{source}:{line}: {message}")


@dataclass(frozen=True, slots=True)
class FaceAnnotation:
    box: BBox
    blur: int = 0
    expression: int = 0
    illumination: int = 0
    invalid: int = 0
    occlusion: int = 0
    pose: int = 0


@dataclass(frozen=True)
class ImageAnnotations:
    path: str
    faces: list[FaceAnnotation] = field(default_factory=list)


@dataclass(frozen=True)
class AnnotationSet:
    images: list[ImageAnnotations] = field(default_factory=list)

    def total_faces(self) -> int:
        return sum(len(img.faces) for img in self.images)


@dataclass(frozen=True, slots=True)
class Detection:
    box: BBox
    score: float


@dataclass(frozen=True)
class ImageDetections:
    path: str
    dets: list[Detection] = field(default_factory=list)  # sorted descending by score


@dataclass(frozen=True)
class DetectionSet:
    images: list[ImageDetections] = field(default_factory=list)

    def total_detections(self) -> int:
        return sum(len(img.dets) for img in self.images)


def _read_text(source: str | TextIO) -> str:
    return source if isinstance(source, str) else source.read()


def _parse_floats(tokens: list[str], source: str, lineno: int) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(source, lineno, f"non-numeric field in {tokens!r}") from None


def parse_wider_gt(source: str | TextIO, name: str = "<gt>") -> AnnotationSet:
    """Parse a WIDER ground-truth annotation file.

    Raises ParseError (with line number) on a non-numeric or negative face
    count, a truncated record, a malformed attribute line, a duplicate image
    path, or non-finite / negative-size box values.  Out-of-range attribute
    flags only produce a warning.
    """
    lines = _read_text(source).splitlines()
    images: list[ImageAnnotations] = []
    seen: set[str] = set()
    i = 0
    n = len(lines)
    while i < n:
        path = lines[i].strip()
        if not path:
            # blank lines are tolerated only between records / at EOF
            i += 1
            continue
        path_line = i + 1
        i += 1
        if i >= n:
            raise ParseError(name, path_line, f"record {path!r} has no face count line")
        count_tok = lines[i].strip()
        try:
            count = int(count_tok)
        except ValueError:
            raise ParseError(name, i + 1, f"invalid face count {count_tok!r}") from None
        if count < 0:
            raise ParseError(name, i + 1, f"negative face count {count}")
        i += 1
        if path in seen:
            raise ParseError(name, path_line, f"duplicate image path {path!r}")
        seen.add(path)

        faces: list[FaceAnnotation] = []
        for _ in range(count):
            if i >= n:
                raise ParseError(name, n + 1, f"record {path!r} ends before its {count} faces")
            faces.append(_parse_face_line(lines[i], name, i + 1))
            i += 1
        if count == 0 and i < n and _is_zero_dummy_line(lines[i]):
            i += 1  # the WIDER zero-face placeholder row
        images.append(ImageAnnotations(path=path, faces=faces))
    return AnnotationSet(images=images)


def _parse_face_line(line: str, source: str, lineno: int) -> FaceAnnotation:
    tokens = line.split()
    if len(tokens) != 10:
        raise ParseError(source, lineno,
                         f"expected 10 fields on attribute line, got {len(tokens)}")
    vals = _parse_floats(tokens, source, lineno)
    try:
        box = BBox(vals[0], vals[1], vals[2], vals[3])
    except ValueError as exc:
        raise ParseError(source, lineno, str(exc)) from None
    flags = []
    for (flag_name, lo, hi), v in zip(_FLAG_RANGES, vals[4:]):
        f = int(v)
        if f != v or not lo <= f <= hi:
            log.warning("%s:%d: %s flag %r outside documented range [%d, %d]",
                        source, lineno, flag_name, v, lo, hi)
        flags.append(f)
    return FaceAnnotation(box, *flags)


def _is_zero_dummy_line(line: str) -> bool:
    tokens = line.split()
    if len(tokens) != 10:
        return False
    try:
        return all(float(t) == 0.0 for t in tokens)
    except ValueError:
        return False


def format_coord(v: float, policy: str = "decimal") -> str:
    """Canonical coordinate text: integral values bare, others per policy.

    "decimal" writes non-integral values with exactly 2 decimal places;
    "integer" rounds to the nearest integer, halves away from zero.
    """
    fv = float(v)
    if policy == "integer":
        r = math.floor(fv + 0.5) if fv >= 0 else math.ceil(fv - 0.5)
        return str(int(r))
    if policy != "decimal":
        raise ValueError(f"unknown rounding policy {policy!r}")
    if fv.is_integer():
        return str(int(fv))
    return f"{fv:.2f}"


def write_wider_gt(annset: AnnotationSet, stream: TextIO, policy: str = "decimal") -> None:
    """Write records in input order; see format_coord for the number policy.

    Zero-face images emit the all-zero dummy line so that parse -> write is
    byte-identical on canonical files.
    """
    out: list[str] = []
    for img in annset.images:
        out.append(img.path)
        out.append(str(len(img.faces)))
        if not img.faces:
            out.append("0 0 0 0 0 0 0 0 0 0")
        for f in img.faces:
            b = f.box
            out.append(" ".join((
                format_coord(b.x, policy), format_coord(b.y, policy),
                format_coord(b.w, policy), format_coord(b.h, policy),
                str(f.blur), str(f.expression), str(f.illumination),
                str(f.invalid), str(f.occlusion), str(f.pose),
            )))
    out.append("")  # trailing newline
    stream.write("\n".join(out))


def load_wider_gt(path: str | Path) -> AnnotationSet:
    p = Path(path)
    with open(p, encoding="utf-8") as fh:
        return parse_wider_gt(fh, name=str(p))


def save_wider_gt(annset: AnnotationSet, path: str | Path, policy: str = "decimal") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_wider_gt(annset, fh, policy)


def _parse_detection_records(lines: list[str], source: str,
                             key_from_name: bool) -> Iterable[tuple[str, int, list[Detection]]]:
    """Yield (name, name_lineno, detections) records; shared by both layouts."""
    i = 0
    n = len(lines)
    while i < n:
        name = lines[i].strip()
        if not name:
            i += 1
            continue
        name_line = i + 1
        i += 1
        if i >= n:
            raise ParseError(source, name_line, f"record {name!r} has no count line")
        count_tok = lines[i].strip()
        try:
            count = int(count_tok)
        except ValueError:
            raise ParseError(source, i + 1, f"invalid detection count {count_tok!r}") from None
        if count < 0:
            raise ParseError(source, i + 1, f"negative detection count {count}")
        i += 1
        dets: list[Detection] = []
        for _ in range(count):
            if i >= n:
                raise ParseError(source, n,
                                 f"record {name!r} declares {count} detections but the file ends early")
            tokens = lines[i].split()
            if len(tokens) != 5:
                raise ParseError(source, i + 1,
                                 f"expected 5 fields on detection line, got {len(tokens)}")
            x, y, w, h, score = _parse_floats(tokens, source, i + 1)
            if not math.isfinite(score):
                raise ParseError(source, i + 1, f"non-finite score {score!r}")
            if not 0.0 <= score <= 1.0:
                log.warning("%s:%d: score %r outside [0, 1]", source, i + 1, score)
            try:
                dets.append(Detection(BBox(x, y, w, h), score))
            except ValueError as exc:
                raise ParseError(source, i + 1, str(exc)) from None
            i += 1
        if not key_from_name and i < n and lines[i].strip():
            # per-image file: anything after the declared detections is a count mismatch
            raise ParseError(source, i + 1,
                             f"file lists more than the declared {count} detections")
        yield name, name_line, dets


def _sorted_by_score(dets: list[Detection]) -> list[Detection]:
    # stable, so equal scores keep file order
    return sorted(dets, key=lambda d: d.score, reverse=True)


def parse_detections_dir(root: str | Path, image_ext: str = ".jpg") -> DetectionSet:
    """Load a mirrored directory tree of per-image detection files.

    Image key = file path relative to root, ".txt" replaced by image_ext.
    Detections are sorted descending by score after loading.
    """
    rootp = Path(root)
    if not rootp.is_dir():
        raise NotADirectoryError(f"detection root {rootp} is not a directory")
    images: list[ImageDetections] = []
    for file in sorted(rootp.rglob("*.txt")):
        rel = file.relative_to(rootp).as_posix()
        key = rel[:-4] + image_ext
        lines = file.read_text(encoding="utf-8").splitlines()
        records = list(_parse_detection_records(lines, str(file), key_from_name=False))
        if len(records) != 1:
            raise ParseError(str(file), 1,
                             f"per-image detection file holds {len(records)} records, expected 1")
        _, _, dets = records[0]
        images.append(ImageDetections(path=key, dets=_sorted_by_score(dets)))
    return DetectionSet(images=images)


def parse_detections_file(source: str | TextIO, name: str = "<dets>") -> DetectionSet:
    """Load the consolidated single-file detection format.

    Records use the same layout as per-image files concatenated; the name
    line is the image key verbatim (e.g. "0--Parade/x.jpg").
    """
    lines = _read_text(source).splitlines()
    images: list[ImageDetections] = []
    seen: set[str] = set()
    for key, name_line, dets in _parse_detection_records(lines, name, key_from_name=True):
        if key in seen:
            raise ParseError(name, name_line, f"duplicate image key {key!r}")
        seen.add(key)
        images.append(ImageDetections(path=key, dets=_sorted_by_score(dets)))
    return DetectionSet(images=images)


def load_detections(path: str | Path, layout: str = "auto", image_ext: str = ".jpg") -> DetectionSet:
    """Dispatch between the directory tree and single-file layouts."""
    p = Path(path)
    if layout == "auto":
        layout = "dir" if p.is_dir() else "file"
    if layout == "dir":
        return parse_detections_dir(p, image_ext=image_ext)
    if layout == "file":
        with open(p, encoding="utf-8") as fh:
            return parse_detections_file(fh, name=str(p))
    raise ValueError(f"unknown detection layout {layout!r}")


def _detection_record_lines(name: str, dets: list[Detection]) -> list[str]:
    out = [name, str(len(dets))]
    for d in dets:
        b = d.box
        out.append(f"{format_coord(b.x)} {format_coord(b.y)} "
                   f"{format_coord(b.w)} {format_coord(b.h)} {d.score!r}")
    return out


def write_detections_dir(detset: DetectionSet, root: str | Path, image_ext: str = ".jpg") -> None:
    """Write one detection file per image under root, mirroring the key paths."""
    rootp = Path(root)
    for img in detset.images:
        key = img.path
        rel = key[:-len(image_ext)] + ".txt" if key.endswith(image_ext) else key + ".txt"
        target = rootp / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        stem = Path(key).stem
        lines = _detection_record_lines(stem, img.dets)
        lines.append("")
        target.write_text("\n".join(lines), encoding="utf-8")


def write_detections_file(detset: DetectionSet, stream: TextIO) -> None:
    """Write the consolidated single-file layout; name lines are the keys."""
    out: list[str] = []
    for img in detset.images:
        out.extend(_detection_record_lines(img.path, img.dets))
    out.append("")
    stream.write("\n".join(out))


def align(anns: AnnotationSet, dets: DetectionSet) -> list[tuple[ImageAnnotations, ImageDetections]]:
    """Pair annotation and detection images by exact path key.

    Annotation images with no detection file get an empty detection list;
    detection images absent from the annotations are dropped.  Both cases are
    only warned about, so partial prediction runs stay usable.  Output order
    follows the annotation set.
    """
    by_path = {d.path: d for d in dets.images}
    pairs: list[tuple[ImageAnnotations, ImageDetections]] = []
    missing = 0
    for img in anns.images:
        d = by_path.pop(img.path, None)
        if d is None:
            d = ImageDetections(path=img.path, dets=[])
            missing += 1
        pairs.append((img, d))
    if missing:
        log.warning("%d annotation image(s) have no detections", missing)
    if by_path:
        log.warning("%d detection image(s) missing from the annotations were ignored", len(by_path))
    return pairs
