"""Prediction correction: candidate-box replacement and fold fusion.

Grounding models place boxes roughly right but with coordinates less
precise than a dedicated detector. Replacement therefore snaps a predicted
box to the first confidence-ordered detector candidate that overlaps it
strongly enough (IoU strictly above the threshold). Fusion combines the
per-fold predictions for a sample into one box: the medoid (the box with
the highest mean IoU to the whole ensemble) anchors a cluster of
well-overlapping boxes whose coordinate-wise mean is the output, which
keeps single outlier folds from dragging the result.

Per-sample work is independent; processing order never affects output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

from groundbox import geometry
from groundbox.corpus import Detection, Prediction, Sample
from groundbox.errors import PipelineError
from groundbox.geometry import BBox, area, clamp_to_image, iou

REPLACE_THRESHOLD_DEFAULT = 0.6
FUSE_THRESHOLD_DEFAULT = 0.5

REPLACE_THEN_FUSE = "replace_then_fuse"
FUSE_THEN_REPLACE = "fuse_then_replace"


@dataclass(frozen=True)
class CandidateSet:
    """Detector candidates for one image, confidence-sorted.

    Sorted order is strictly enforced: confidence descending, ties broken
    by detector name, class name, then larger area.
    """

    image_ref: str
    candidates: tuple[Detection, ...]

    def __post_init__(self):
        keys = [_candidate_key(d) for d in self.candidates]
        if keys != sorted(keys):
            raise ValueError("candidates are not in canonical sorted order")
        for d in self.candidates:
            if d.image_ref != self.image_ref:
                raise ValueError(
                    f"candidate for {d.image_ref!r} in set for {self.image_ref!r}"
                )

    def boxes(self) -> list[BBox]:
        return [d.box for d in self.candidates]


def _candidate_key(d: Detection):
    return (-d.confidence, d.detector, d.class_name, -area(d.box))


EMPTY_CANDIDATES = CandidateSet(image_ref="", candidates=())


def build_candidate_sets(detections: Sequence[Detection]) -> dict[str, CandidateSet]:
    """Group detections by image and sort each group into a CandidateSet.

    All detectors' outputs are pooled into one jointly sorted list.
    """
    grouped: dict[str, list[Detection]] = {}
    for d in detections:
        grouped.setdefault(d.image_ref, []).append(d)
    return {
        ref: CandidateSet(
            image_ref=ref, candidates=tuple(sorted(group, key=_candidate_key))
        )
        for ref, group in grouped.items()
    }


class Replacement(NamedTuple):
    box: BBox
    replaced: bool


def replace(
    predicted: BBox,
    candidates: CandidateSet,
    threshold: float = REPLACE_THRESHOLD_DEFAULT,
) -> Replacement:
    """Snap a prediction to the first well-overlapping candidate.

    Scans candidates in sorted order and returns the first whose IoU with
    the prediction is strictly above the threshold, flagged replaced; when
    none qualifies the prediction is returned unchanged, flagged kept.
    """
    if not 0.0 < threshold:
        raise PipelineError(f"replace threshold must be positive, got {threshold}")
    index = geometry.first_match(predicted, candidates.boxes(), threshold)
    if index < 0:
        return Replacement(box=predicted, replaced=False)
    return Replacement(box=candidates.candidates[index].box, replaced=True)


@dataclass(frozen=True)
class EnsembleInput:
    """The per-fold boxes to fuse for one sample; sources must be unique."""

    sample_id: str
    boxes: tuple[tuple[BBox, str], ...]

    def __post_init__(self):
        if not self.boxes:
            raise ValueError(f"sample {self.sample_id!r}: no boxes to fuse")
        sources = [source for _, source in self.boxes]
        if len(set(sources)) != len(sources):
            raise ValueError(
                f"sample {self.sample_id!r}: duplicate ensemble sources"
            )


def _round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


def fuse(
    ensemble: EnsembleInput, cluster_threshold: float = FUSE_THRESHOLD_DEFAULT
) -> BBox:
    """Medoid fusion of an ensemble of boxes.

    The medoid is the box maximizing mean IoU to all boxes in the input
    (ties go to the lowest input index). Boxes whose IoU with the medoid
    is at least ``cluster_threshold`` form the cluster; the output is the
    coordinate-wise arithmetic mean over the cluster, rounded half-up.
    Reduces to the identity for a single box or an all-equal ensemble.
    """
    boxes = [box for box, _ in ensemble.boxes]
    if len(boxes) == 1:
        return boxes[0]
    profile = geometry.mean_iou_profile(boxes)
    medoid = boxes[profile.index(max(profile))]
    cluster = [b for b in boxes if iou(medoid, b) >= cluster_threshold]
    k = len(cluster)
    return BBox(
        _round_half_up(sum(b.left for b in cluster) / k),
        _round_half_up(sum(b.top for b in cluster) / k),
        _round_half_up(sum(b.right for b in cluster) / k),
        _round_half_up(sum(b.bottom for b in cluster) / k),
    )


@dataclass(frozen=True)
class PostprocessConfig:
    """Thresholds and stage order for the correction pipeline."""

    replace_threshold: float = REPLACE_THRESHOLD_DEFAULT
    fuse_threshold: float = FUSE_THRESHOLD_DEFAULT
    order: str = REPLACE_THEN_FUSE

    def __post_init__(self):
        for name in ("replace_threshold", "fuse_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {value}")
        if self.order not in (REPLACE_THEN_FUSE, FUSE_THEN_REPLACE):
            raise ValueError(f"unknown stage order {self.order!r}")


@dataclass
class PipelineStats:
    """Counters emitted alongside the final predictions."""

    n_samples: int = 0
    n_folds: int = 0
    order: str = REPLACE_THEN_FUSE
    replace_threshold: float = REPLACE_THRESHOLD_DEFAULT
    fuse_threshold: float = FUSE_THRESHOLD_DEFAULT
    replacements: int = 0
    replace_opportunities: int = 0
    samples_without_candidates: int = 0
    unclamped_outputs: int = 0
    mean_fold_disagreement_iou: float = 0.0

    @property
    def replacement_rate(self) -> float:
        if not self.replace_opportunities:
            return 0.0
        return self.replacements / self.replace_opportunities

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_folds": self.n_folds,
            "order": self.order,
            "replace_threshold": self.replace_threshold,
            "fuse_threshold": self.fuse_threshold,
            "replacements": self.replacements,
            "replace_opportunities": self.replace_opportunities,
            "replacement_rate": self.replacement_rate,
            "samples_without_candidates": self.samples_without_candidates,
            "unclamped_outputs": self.unclamped_outputs,
            "mean_fold_disagreement_iou": self.mean_fold_disagreement_iou,
        }


@dataclass(frozen=True)
class PipelineResult:
    predictions: list[Prediction]
    stats: PipelineStats


def _mean_pairwise_iou(boxes: Sequence[BBox]) -> float:
    k = len(boxes)
    if k < 2:
        return 1.0
    total = 0.0
    pairs = 0
    for i in range(k):
        for j in range(i + 1, k):
            total += iou(boxes[i], boxes[j])
            pairs += 1
    return total / pairs


def run_pipeline(
    samples: Sequence[Sample],
    fold_predictions: Sequence[Sequence[Prediction]],
    candidates: Mapping[str, CandidateSet],
    config: PostprocessConfig = PostprocessConfig(),
) -> PipelineResult:
    """Correct and fuse per-fold predictions into final ones.

    Every sample_id appearing in any fold must appear in all folds and in
    ``samples`` (which supplies image references and dimensions). Images
    missing from ``candidates`` degrade to an empty candidate set with a
    warning counter. Output is ordered by sample_id.
    """
    if not fold_predictions:
        raise PipelineError("no fold predictions given")
    by_fold: list[dict[str, Prediction]] = []
    universe: set[str] = set()
    for fold in fold_predictions:
        indexed: dict[str, Prediction] = {}
        for p in fold:
            if p.sample_id in indexed:
                raise PipelineError(
                    f"duplicate prediction for sample {p.sample_id!r} in one fold"
                )
            indexed[p.sample_id] = p
        by_fold.append(indexed)
        universe.update(indexed)
    missing: list[str] = []
    for i, indexed in enumerate(by_fold):
        for sample_id in universe - set(indexed):
            missing.append(f"{sample_id} (fold {i})")
    if missing:
        raise PipelineError(
            f"sample(s) missing from fold prediction files: {sorted(missing)}"
        )
    sample_index = {s.sample_id: s for s in samples}
    unknown = universe - set(sample_index)
    if unknown:
        raise PipelineError(
            f"prediction(s) for unknown sample id(s): {sorted(unknown)}"
        )

    stats = PipelineStats(
        n_samples=len(universe),
        n_folds=len(by_fold),
        order=config.order,
        replace_threshold=config.replace_threshold,
        fuse_threshold=config.fuse_threshold,
    )
    disagreement_total = 0.0
    final: list[Prediction] = []
    for sample_id in sorted(universe):
        sample = sample_index[sample_id]
        cands = candidates.get(sample.image_url)
        if cands is None:
            cands = EMPTY_CANDIDATES
            stats.samples_without_candidates += 1
        fold_boxes = [indexed[sample_id].box for indexed in by_fold]
        sources: list[str] = []
        for i, indexed in enumerate(by_fold):
            src = indexed[sample_id].source or f"fold{i}"
            while src in sources:  # fold index keeps sources unique
                src = f"{src}#{i}"
            sources.append(src)
        disagreement_total += 1.0 - _mean_pairwise_iou(fold_boxes)

        if config.order == REPLACE_THEN_FUSE:
            snapped: list[BBox] = []
            for box in fold_boxes:
                outcome = replace(box, cands, config.replace_threshold)
                stats.replacements += outcome.replaced
                stats.replace_opportunities += 1
                snapped.append(outcome.box)
            fused = fuse(
                EnsembleInput(
                    sample_id=sample_id,
                    boxes=tuple(zip(snapped, sources)),
                ),
                config.fuse_threshold,
            )
        else:
            fused = fuse(
                EnsembleInput(
                    sample_id=sample_id,
                    boxes=tuple(zip(fold_boxes, sources)),
                ),
                config.fuse_threshold,
            )
            outcome = replace(fused, cands, config.replace_threshold)
            stats.replacements += outcome.replaced
            stats.replace_opportunities += 1
            fused = outcome.box

        clamped = clamp_to_image(fused.quad(), sample.dims)
        if clamped is None:
            # A fused box entirely outside its image: keep it rather than
            # invent coordinates; scoring clamps again and counts it as 0.
            clamped = fused
            stats.unclamped_outputs += 1
        final.append(Prediction(sample_id=sample_id, box=clamped, source="ensemble"))
    if universe:
        stats.mean_fold_disagreement_iou = disagreement_total / len(universe)
    return PipelineResult(predictions=final, stats=stats)
