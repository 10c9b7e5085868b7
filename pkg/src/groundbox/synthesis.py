"""Synthetic training data construction from detector outputs.

The forger pairs externally detected objects with questions drawn from a
pseudo-answer mapping table: an object qualifies as a training target when
it is the highest-confidence detection whose class occurs exactly once in
its image and is a key of the table. The matched question becomes the
sample's text, the detection's box its target.

All sampling is uniform and seeded. Each image's random stream is derived
from (seed, image_ref) rather than call order, so forging the same pool
with the same seed is reproducible even if images are processed in
parallel or in a different order.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from groundbox import corpus
from groundbox.corpus import Detection, PoolImage, Sample, Source, normalize_text
from groundbox.errors import SynthesisError
from groundbox.geometry import BBox, ImageDims, area


@dataclass(frozen=True)
class PseudoAnswerTable:
    """Mapping from normalized pseudo-answer to the questions that produced it.

    Every list is non-empty and free of exact-duplicate questions; keys are
    lowercased with whitespace collapsed so detector class names can be
    matched against them verbatim.
    """

    entries: Mapping[str, list[str]]

    def __post_init__(self):
        for answer, questions in self.entries.items():
            if normalize_text(answer) != answer:
                raise ValueError(f"table key not normalized: {answer!r}")
            if not questions:
                raise ValueError(f"table entry {answer!r} has no questions")
            if len(set(questions)) != len(questions):
                raise ValueError(f"table entry {answer!r} has duplicate questions")

    def __contains__(self, answer: str) -> bool:
        return normalize_text(answer) in self.entries

    def questions(self, answer: str) -> list[str]:
        return self.entries[normalize_text(answer)]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True, slots=True)
class Provenance:
    """Where a synthetic sample's box and question draw came from."""

    detector: str
    confidence: float
    seed_path: str


@dataclass(frozen=True, slots=True)
class SyntheticSample:
    """One forged training sample: a detector box paired with a question."""

    image_ref: str
    question: str
    pseudo_answer: str
    target_box: BBox
    dims: ImageDims
    provenance: Provenance


@dataclass(frozen=True)
class ForgeResult:
    """Forged samples plus a shortfall report when the pool ran dry."""

    samples: list[SyntheticSample]
    requested: int
    images_scanned: int

    @property
    def shortfall(self) -> int:
        return max(0, self.requested - len(self.samples))

    def report(self) -> str:
        if not self.shortfall:
            return (
                f"forged {len(self.samples)} sample(s) from "
                f"{self.images_scanned} image(s)"
            )
        return (
            f"shortfall: requested {self.requested} but pool yielded only "
            f"{len(self.samples)} sample(s) after scanning all "
            f"{self.images_scanned} eligible image(s)"
        )


def build_table(samples: Sequence[Sample]) -> PseudoAnswerTable:
    """Group questions by pseudo-answer, first-seen order, exact dedupe.

    Every input sample must carry a pseudo-answer.
    """
    entries: dict[str, list[str]] = {}
    for sample in samples:
        if sample.pseudo_answer is None:
            raise SynthesisError(
                f"sample {sample.sample_id!r} has no pseudo_answer"
            )
        questions = entries.setdefault(sample.pseudo_answer, [])
        if sample.question not in questions:
            questions.append(sample.question)
    return PseudoAnswerTable(entries=entries)


def _selection_order(detections: Sequence[Detection]) -> list[Detection]:
    # Confidence descending; ties broken by class name, then larger area,
    # so selection is a total order and therefore deterministic.
    return sorted(
        detections,
        key=lambda d: (-d.confidence, d.class_name, -area(d.box)),
    )


def select_object(
    detections: Sequence[Detection], table: PseudoAnswerTable
) -> Optional[Detection]:
    """Pick the training target among one image's detections.

    Returns the highest-confidence detection whose class count within the
    image is exactly one and whose class is a key of the table; None when
    no detection qualifies.
    """
    if not detections:
        return None
    counts = corpus.class_counts(detections)
    for detection in _selection_order(detections):
        if counts[detection.class_name] == 1 and detection.class_name in table:
            return detection
    return None


def _image_rng(seed: int, image_ref: str) -> random.Random:
    return random.Random(f"{seed}:{image_ref}")


def synthesize(
    image: PoolImage,
    detections: Sequence[Detection],
    table: PseudoAnswerTable,
    rng: random.Random,
    seed_path: str = "",
) -> Optional[SyntheticSample]:
    """Forge one sample from one image, or None when nothing qualifies.

    The question is drawn uniformly at random from the table entry of the
    selected object's class; all randomness flows through ``rng``.
    """
    selected = select_object(detections, table)
    if selected is None:
        return None
    questions = table.questions(selected.class_name)
    question = questions[rng.randrange(len(questions))]
    return SyntheticSample(
        image_ref=image.image_ref,
        question=question,
        pseudo_answer=selected.class_name,
        target_box=selected.box,
        dims=image.dims,
        provenance=Provenance(
            detector=selected.detector,
            confidence=selected.confidence,
            seed_path=seed_path,
        ),
    )


def forge_dataset(
    pool: Sequence[PoolImage],
    detections_by_image: Mapping[str, Sequence[Detection]],
    table: PseudoAnswerTable,
    n_target: int,
    seed: int,
    exclusion: frozenset[str] | set[str] = frozenset(),
) -> ForgeResult:
    """Forge up to ``n_target`` samples from the image pool.

    Images are drawn uniformly at random without replacement from the pool
    minus the exclusion set (the test-set firewall), each either yielding
    one sample or being skipped. Stops at ``n_target`` or pool exhaustion;
    exhaustion is reported, not raised. Output order is generation order
    and is fully determined by the seed.
    """
    if n_target < 0:
        raise SynthesisError(f"n_target must be >= 0, got {n_target}")
    eligible = [img for img in pool if img.image_ref not in exclusion]
    eligible.sort(key=lambda img: img.image_ref)
    random.Random(f"{seed}:pool").shuffle(eligible)

    samples: list[SyntheticSample] = []
    scanned = 0
    for image in eligible:
        if len(samples) >= n_target:
            break
        scanned += 1
        detections = detections_by_image.get(image.image_ref, ())
        seed_path = f"{seed}:{image.image_ref}"
        sample = synthesize(
            image, detections, table, _image_rng(seed, image.image_ref), seed_path
        )
        if sample is not None:
            samples.append(sample)
    return ForgeResult(samples=samples, requested=n_target, images_scanned=scanned)


def synthetic_to_samples(forged: Sequence[SyntheticSample]) -> list[Sample]:
    """Convert forged samples to dataset rows (ids are generation indexes)."""
    return [
        Sample(
            sample_id=str(i),
            image_url=s.image_ref,
            question=s.question,
            dims=s.dims,
            gt_box=s.target_box,
            pseudo_answer=s.pseudo_answer,
        )
        for i, s in enumerate(forged)
    ]


@dataclass(frozen=True)
class TableAugmentation:
    """Result of merging paraphrases into a table."""

    table: PseudoAnswerTable
    skipped_pairs: int


def apply_back_translation(
    table: PseudoAnswerTable, augmentation: Mapping[str, Sequence[str]]
) -> TableAugmentation:
    """Append externally produced paraphrases to matching table entries.

    Each paraphrase is appended to every entry whose question list contains
    its original question, skipping exact duplicates. Pairs whose original
    question appears nowhere are skipped and counted.
    """
    entries = {answer: list(questions) for answer, questions in table.entries.items()}
    skipped = 0
    for original, paraphrases in augmentation.items():
        homes = [answer for answer, qs in entries.items() if original in qs]
        for paraphrase in paraphrases:
            if not homes:
                skipped += 1
                continue
            for answer in homes:
                if paraphrase not in entries[answer]:
                    entries[answer].append(paraphrase)
    return TableAugmentation(
        table=PseudoAnswerTable(entries=entries), skipped_pairs=skipped
    )


# ---------------------------------------------------------------------------
# Table file format: pseudo_answer, question (one pair per line, ordered)


def read_table(source: Source) -> PseudoAnswerTable:
    with corpus._opened(source) as handle:
        reader, columns, width = corpus._read_header(
            handle, ("pseudo_answer", "question"), "pseudo-answer table"
        )
        entries: dict[str, list[str]] = {}
        for row in reader:
            if not row:
                continue
            corpus._check_arity(row, width, reader.line_num + 1)
            answer = normalize_text(row[columns["pseudo_answer"]])
            question = row[columns["question"]]
            questions = entries.setdefault(answer, [])
            if question not in questions:
                questions.append(question)
        return PseudoAnswerTable(entries=entries)


def write_table(table: PseudoAnswerTable, dest: Source) -> None:
    with corpus._opened(dest, "w") as handle:
        writer = corpus._writer(handle)
        writer.writerow(["pseudo_answer", "question"])
        for answer, questions in table.entries.items():
            for question in questions:
                writer.writerow([answer, question])


# ---------------------------------------------------------------------------
# Distribution comparison between forged and reference data


@dataclass(frozen=True)
class HistogramComparison:
    """Side-by-side normalized histograms and their L1 distance."""

    name: str
    labels: list[str]
    synthetic: list[float]
    reference: list[float]
    l1: float


@dataclass(frozen=True)
class DistributionReport:
    """Advisory comparison of forged data against a reference dataset.

    Reports, per metric, the two normalized histograms and the L1 distance
    between them (0 identical, 2 disjoint). It never gates forging: the
    sampling stays uniform, the report only shows how far the result is
    from the reference distribution.
    """

    metrics: list[HistogramComparison]

    def render(self) -> str:
        lines: list[str] = []
        for metric in self.metrics:
            lines.append(metric.name)
            label_width = max(len(label) for label in metric.labels)
            lines.append(
                f"  {'bin':<{label_width}}  {'synthetic':>9}  {'reference':>9}"
            )
            for label, s, r in zip(metric.labels, metric.synthetic, metric.reference):
                lines.append(f"  {label:<{label_width}}  {s:>9.4f}  {r:>9.4f}")
            lines.append(f"  L1 distance: {metric.l1:.4f}")
            lines.append("")
        return "\n".join(lines).rstrip() + "\n"


_ASPECT_EDGES = np.logspace(math.log10(1 / 8), math.log10(8), 11)


def _normalized(counts: np.ndarray) -> list[float]:
    total = counts.sum()
    return (counts / total).tolist() if total else [0.0] * len(counts)


def _l1(p: list[float], q: list[float]) -> float:
    return float(sum(abs(a - b) for a, b in zip(p, q)))


def _area_fractions(boxes: list[tuple[BBox, ImageDims]]) -> np.ndarray:
    values = np.array([area(b) / d.area for b, d in boxes])
    edges = np.linspace(0.0, 1.0, 11)
    counts, _ = np.histogram(np.clip(values, 0.0, 1.0), bins=edges)
    return counts


def _aspect_ratios(boxes: list[tuple[BBox, ImageDims]]) -> np.ndarray:
    values = np.array([b.width / b.height for b, _ in boxes])
    counts, _ = np.histogram(np.clip(values, 1 / 8, 8), bins=_ASPECT_EDGES)
    return counts


def _token_lengths(questions: list[str]) -> np.ndarray:
    counts = np.zeros(20, dtype=int)
    for question in questions:
        counts[min(len(question.split()), 20) - 1] += 1
    return counts


def distribution_report(
    synthetic: Sequence[SyntheticSample], reference: Sequence[Sample]
) -> DistributionReport:
    """Compare forged samples against reference samples with ground truth.

    Metrics: box area as a fraction of image area (10 uniform bins),
    box aspect ratio (10 log-spaced bins over [1/8, 8]), and question
    token length (bins 1..19 plus 20+).
    """
    if not synthetic or not reference:
        raise SynthesisError("distribution_report requires non-empty inputs")
    ref_boxes = [(s.gt_box, s.dims) for s in reference if s.gt_box is not None]
    if not ref_boxes:
        raise SynthesisError("reference samples carry no ground-truth boxes")
    syn_boxes = [(s.target_box, s.dims) for s in synthetic]

    area_labels = [f"[{i / 10:.1f},{(i + 1) / 10:.1f})" for i in range(10)]
    aspect_labels = [
        f"[{_ASPECT_EDGES[i]:.3f},{_ASPECT_EDGES[i + 1]:.3f})" for i in range(10)
    ]
    length_labels = [str(n) for n in range(1, 20)] + ["20+"]

    metrics = []
    for name, labels, syn_counts, ref_counts in (
        (
            "box area / image area",
            area_labels,
            _area_fractions(syn_boxes),
            _area_fractions(ref_boxes),
        ),
        (
            "box aspect ratio (w/h)",
            aspect_labels,
            _aspect_ratios(syn_boxes),
            _aspect_ratios(ref_boxes),
        ),
        (
            "question token length",
            length_labels,
            _token_lengths([s.question for s in synthetic]),
            _token_lengths([s.question for s in reference]),
        ),
    ):
        syn_hist = _normalized(syn_counts)
        ref_hist = _normalized(ref_counts)
        metrics.append(
            HistogramComparison(
                name=name,
                labels=labels,
                synthetic=syn_hist,
                reference=ref_hist,
                l1=_l1(syn_hist, ref_hist),
            )
        )
    return DistributionReport(metrics=metrics)
