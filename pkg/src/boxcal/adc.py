"""Dataset-level average detection confidence and per-image high-confidence prefixes.

The average is the global ratio of summed scores to the number of scores
used, where each image contributes its top min(K_a, K_p) detection scores
(K_a annotations, K_p detections).  The clamp matters: an image can have
fewer detections than annotations, and padding with zeros would drag the
average down by an arbitrary amount, so only real scores are averaged and
the shortfall is reported.

Summation runs in input order with a plain accumulator, so the reported
numerator is bit-for-bit reproducible regardless of how callers parallelise
the surrounding pipeline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .formats import Detection, ImageAnnotations, ImageDetections

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class AdcResult:
    value: float            # numerator / denominator, or 0.0 when nothing was usable
    numerator: float        # sum of the scores used
    denominator: int        # number of scores used
    images_used: int        # images contributing at least one score
    shortfall_images: int   # images with fewer detections than annotations


def compute_adc(pairs: list[tuple[ImageAnnotations, ImageDetections]]) -> AdcResult:
    """Average the top min(K_a, K_p) detection scores over the whole dataset.

    Detections must already be sorted descending by score (the loaders
    guarantee this).  A dataset with no usable score yields value 0.0 and a
    warning, since every detection would then count as high-confidence.
    """
    numerator = 0.0
    denominator = 0
    images_used = 0
    shortfall = 0
    for img, det_img in pairs:
        k_a = len(img.faces)
        k_p = len(det_img.dets)
        if k_p < k_a:
            shortfall += 1
        used = min(k_a, k_p)
        if used == 0:
            continue
        for det in det_img.dets[:used]:
            numerator += det.score
        denominator += used
        images_used += 1
    if denominator == 0:
        log.warning("no detection scores usable for the confidence average; value defaults to 0")
        return AdcResult(0.0, 0.0, 0, 0, shortfall)
    return AdcResult(numerator / denominator, numerator, denominator, images_used, shortfall)


def select_hcdrs(dets: ImageDetections, adc: float) -> list[Detection]:
    """Longest prefix of the score-sorted detections with every score > adc.

    Scanning stops at the first score <= adc, mirroring the calibration
    procedure's early exit; with a descending list that is exactly the set
    of strictly-greater scores.
    """
    out: list[Detection] = []
    for det in dets.dets:
        if det.score <= adc:
            break
        out.append(det)
    return out
