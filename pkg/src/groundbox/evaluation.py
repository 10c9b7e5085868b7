"""Scoring of prediction files against ground truth.

The metric is 100 x mean IoU over all ground-truth samples. NOTE: this
definition is this toolkit's documented assumption for the challenge
family it targets; it is consistent with leaderboard-style magnitudes but
external scorers may define their metric differently. Predicted boxes are
clamped to image bounds before scoring (decoders can emit out-of-range
coordinates); a prediction with no area left after clamping scores 0.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Sequence, Union

from groundbox.corpus import Prediction, Sample, Source, _opened
from groundbox.errors import EvaluationError, FormatError
from groundbox.geometry import clamp_to_image, iou


@dataclass(frozen=True)
class ScoreReport:
    """Per-sample IoUs plus their mean, scaled to a 0..100 score."""

    n_samples: int
    mean_iou: float
    score: float
    per_sample: list[tuple[str, float]]
    histogram: list[int]

    def __post_init__(self):
        assert self.n_samples == len(self.per_sample)


def _decile_histogram(values: Sequence[float]) -> list[int]:
    histogram = [0] * 10
    for value in values:
        histogram[min(int(value * 10), 9)] += 1
    return histogram


def score(predictions: Sequence[Prediction], samples: Sequence[Sample]) -> ScoreReport:
    """Score predictions against ground-truth samples.

    Every ground-truth sample must have exactly one prediction and no
    prediction may refer to an unknown sample. Per-sample IoU order
    follows the ground-truth sample order, so shuffling the prediction
    file never changes the report.
    """
    without_gt = [s.sample_id for s in samples if s.gt_box is None]
    if without_gt:
        raise EvaluationError(
            f"sample(s) without ground-truth box: {sorted(without_gt)}"
        )
    duplicates = [
        sample_id
        for sample_id, count in Counter(p.sample_id for p in predictions).items()
        if count > 1
    ]
    if duplicates:
        raise EvaluationError(
            f"duplicate prediction(s) for sample(s): {sorted(duplicates)}"
        )
    by_id = {p.sample_id: p for p in predictions}
    wanted = {s.sample_id for s in samples}
    missing = sorted(wanted - set(by_id))
    if missing:
        raise EvaluationError(f"missing prediction(s) for sample(s): {missing}")
    extra = sorted(set(by_id) - wanted)
    if extra:
        raise EvaluationError(f"prediction(s) for unknown sample(s): {extra}")

    per_sample: list[tuple[str, float]] = []
    for sample in samples:
        clamped = clamp_to_image(by_id[sample.sample_id].box.quad(), sample.dims)
        value = 0.0 if clamped is None else iou(clamped, sample.gt_box)
        per_sample.append((sample.sample_id, value))
    mean = sum(v for _, v in per_sample) / len(per_sample)
    return ScoreReport(
        n_samples=len(per_sample),
        mean_iou=mean,
        score=100.0 * mean,
        per_sample=per_sample,
        histogram=_decile_histogram([v for _, v in per_sample]),
    )


def format_score(value: float, full_precision: bool = False) -> str:
    """Format a score at one decimal place, keeping finer input precision.

    71.0 renders as "71.0" and 76.342 as "76.342"; values that one decimal
    place cannot represent keep up to six decimals.
    """
    if full_precision:
        return repr(value)
    short = f"{value:.1f}"
    if abs(float(short) - value) < 1e-9:
        return short
    longer = f"{value:.6f}".rstrip("0")
    return longer + "0" if longer.endswith(".") else longer


def ablation_table(
    entries: Sequence[tuple[str, Union[float, ScoreReport]]],
    full_precision: bool = False,
) -> str:
    """Render labeled scores as an aligned two-column text table."""
    if not entries:
        raise EvaluationError("ablation_table requires at least one entry")
    rows = [
        (label, value.score if isinstance(value, ScoreReport) else float(value))
        for label, value in entries
    ]
    label_width = max(len("Method"), max(len(label) for label, _ in rows))
    lines = [f"{'Method'.ljust(label_width)}  Score"]
    for label, value in rows:
        lines.append(f"{label.ljust(label_width)}  {format_score(value, full_precision)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DeltaReport:
    """Per-sample IoU movement between two score reports."""

    n_samples: int
    improved: int
    worsened: int
    unchanged: int
    score_delta: float
    per_sample: list[tuple[str, float]]

    def render(self) -> str:
        return (
            f"samples: {self.n_samples}  improved: {self.improved}  "
            f"worsened: {self.worsened}  unchanged: {self.unchanged}  "
            f"score delta: {format_score(self.score_delta)}\n"
        )


def compare(report_a: ScoreReport, report_b: ScoreReport) -> DeltaReport:
    """Per-sample IoU deltas from report_a to report_b (b minus a)."""
    a = dict(report_a.per_sample)
    b = dict(report_b.per_sample)
    if set(a) != set(b):
        raise EvaluationError(
            "reports cover different sample sets: "
            f"only in a: {sorted(set(a) - set(b))}, "
            f"only in b: {sorted(set(b) - set(a))}"
        )
    per_sample = [(sample_id, b[sample_id] - a[sample_id]) for sample_id, _ in report_a.per_sample]
    deltas = [d for _, d in per_sample]
    return DeltaReport(
        n_samples=len(per_sample),
        improved=sum(d > 0 for d in deltas),
        worsened=sum(d < 0 for d in deltas),
        unchanged=sum(d == 0 for d in deltas),
        score_delta=report_b.score - report_a.score,
        per_sample=per_sample,
    )


# ---------------------------------------------------------------------------
# Machine-readable report file: one JSON record per sample plus a summary


def write_report(report: ScoreReport, dest: Source) -> None:
    with _opened(dest, "w") as handle:
        for sample_id, value in report.per_sample:
            handle.write(
                json.dumps({"sample_id": sample_id, "iou": value}, sort_keys=True)
                + "\n"
            )
        handle.write(
            json.dumps(
                {
                    "summary": {
                        "n_samples": report.n_samples,
                        "mean_iou": report.mean_iou,
                        "score": report.score,
                        "histogram": report.histogram,
                    }
                },
                sort_keys=True,
            )
            + "\n"
        )


def read_report(source: Source) -> ScoreReport:
    per_sample: list[tuple[str, float]] = []
    summary = None
    with _opened(source) as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(
                    f"report line {line_number}: invalid JSON: {exc}"
                ) from None
            if "summary" in record:
                summary = record["summary"]
            else:
                per_sample.append((record["sample_id"], record["iou"]))
    if summary is None:
        raise FormatError("report file has no summary record")
    return ScoreReport(
        n_samples=summary["n_samples"],
        mean_iou=summary["mean_iou"],
        score=summary["score"],
        per_sample=per_sample,
        histogram=summary["histogram"],
    )
