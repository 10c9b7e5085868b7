"""Dataset, detection, and prediction file plumbing.

Every file the pipeline touches is a delimited text table with a header
row, written with tab delimiters and LF line endings so repeated runs are
byte-identical. Parsers are single-pass and validate as they go; errors
carry 1-based line numbers (the header is line 1).

Formats:

- dataset table:   sample_id?, image, question, width, height
                   [, left, top, right, bottom] [, pseudo_answer]
                   (tab- or comma-delimited, sniffed from the header line)
- detections:      image_ref, detector, class_name, confidence,
                   left, top, right, bottom
- predictions:     sample_id, left, top, right, bottom [, source]
- split manifest:  sample_id, fold
- pseudo-answers:  sample_id, pseudo_answer
- augmentation:    original_question, paraphrase
- image pool:      image, width, height
- prompts:         sample_id, prompt
"""

from __future__ import annotations

import csv
import hashlib
import logging
import os
import random
import tempfile
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Optional, Sequence, Union
from urllib.parse import urlparse

import requests

from groundbox.errors import FetchError, FormatError, GroundboxError, ParseError
from groundbox.geometry import BBox, ImageDims

logger = logging.getLogger(__name__)

Source = Union[str, Path, IO[str]]

_DATASET_REQUIRED = ("image", "question", "width", "height")
_BOX_COLUMNS = ("left", "top", "right", "bottom")


def normalize_text(text: str) -> str:
    """Lowercase and collapse all whitespace runs to single spaces."""
    return " ".join(text.split()).lower()


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True, slots=True)
class Sample:
    """One dataset row: an image, a question, and optional annotations."""

    sample_id: str
    image_url: str
    question: str
    dims: ImageDims
    gt_box: Optional[BBox] = None
    pseudo_answer: Optional[str] = None

    def __post_init__(self):
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")
        if not self.question.strip():
            raise ValueError(f"sample {self.sample_id!r}: question is empty")
        if self.gt_box is not None and not self.gt_box.fits(self.dims):
            raise ValueError(
                f"sample {self.sample_id!r}: box {self.gt_box} exceeds "
                f"image dims {self.dims.width}x{self.dims.height}"
            )
        if self.pseudo_answer is not None:
            object.__setattr__(
                self, "pseudo_answer", normalize_text(self.pseudo_answer)
            )


@dataclass(frozen=True, slots=True)
class Detection:
    """One object-detector output for one image.

    class_name is normalized (lowercased, whitespace collapsed) on
    construction so lookups against pseudo-answer keys are exact.
    """

    image_ref: str
    detector: str
    class_name: str
    confidence: float
    box: BBox

    def __post_init__(self):
        if not self.image_ref:
            raise ValueError("image_ref must be non-empty")
        if not self.detector:
            raise ValueError("detector must be non-empty")
        normalized = normalize_text(self.class_name)
        if not normalized:
            raise ValueError("class_name must be non-empty")
        object.__setattr__(self, "class_name", normalized)
        conf = float(self.confidence)
        if not 0.0 <= conf <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {conf!r}")
        object.__setattr__(self, "confidence", conf)


@dataclass(frozen=True, slots=True)
class Prediction:
    """A predicted box for one sample, tagged with its producing source."""

    sample_id: str
    box: BBox
    source: str = ""

    def __post_init__(self):
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")


@dataclass(frozen=True, slots=True)
class PoolImage:
    """One image available to the synthetic dataset forger."""

    image_ref: str
    dims: ImageDims

    def __post_init__(self):
        if not self.image_ref:
            raise ValueError("image_ref must be non-empty")


@dataclass(frozen=True)
class SplitManifest:
    """Assignment of every sample to one of ``fold_count`` folds.

    Fold sizes are balanced: they differ by at most one.
    """

    fold_count: int
    assignments: Mapping[str, int]

    def __post_init__(self):
        if self.fold_count < 2:
            raise ValueError(f"fold_count must be >= 2, got {self.fold_count}")
        sizes = Counter(self.assignments.values())
        for sample_id, fold in self.assignments.items():
            if not 0 <= fold < self.fold_count:
                raise ValueError(
                    f"sample {sample_id!r}: fold {fold} outside "
                    f"[0, {self.fold_count})"
                )
        if sizes:
            counts = [sizes.get(i, 0) for i in range(self.fold_count)]
            if max(counts) - min(counts) > 1:
                raise ValueError("fold sizes differ by more than 1")

    def ids_in_fold(self, fold: int) -> list[str]:
        return [s for s, f in self.assignments.items() if f == fold]


# ---------------------------------------------------------------------------
# Low-level table helpers


@contextmanager
def _opened(source: Source, mode: str = "r"):
    if hasattr(source, "read") or hasattr(source, "write"):
        yield source
    else:
        with open(source, mode, encoding="utf-8", newline="") as handle:
            yield handle


def _sniff_delimiter(header_line: str) -> str:
    return "\t" if "\t" in header_line else ","


def _read_header(handle, expected: Sequence[str], what: str):
    """Read and validate a header line; returns (reader, column index map)."""
    first = handle.readline()
    if not first:
        raise FormatError(f"{what} file is empty: missing header")
    delimiter = _sniff_delimiter(first)
    header = next(csv.reader([first], delimiter=delimiter))
    columns = {name.strip().lower(): i for i, name in enumerate(header)}
    missing = [c for c in expected if c not in columns]
    if missing:
        raise FormatError(
            f"{what} header missing column(s): {', '.join(missing)}"
        )
    return csv.reader(handle, delimiter=delimiter), columns, len(header)


def _writer(handle):
    return csv.writer(handle, delimiter="\t", lineterminator="\n")


def _check_arity(row, width, line):
    if len(row) != width:
        raise ParseError(f"expected {width} columns, got {len(row)}", line=line)


def _int_cell(row, index: int, name: str, line: int) -> int:
    cell = row[index]
    try:
        return int(cell)
    except ValueError:
        raise ParseError(
            f"column {name!r}: not an integer: {cell!r}", line=line
        ) from None


def _float_cell(row, index: int, name: str, line: int) -> float:
    cell = row[index]
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"column {name!r}: not a number: {cell!r}", line=line) from None


def _box_cells(row, columns, line) -> Optional[BBox]:
    cells = {name: row[columns[name]] for name in _BOX_COLUMNS}
    blank = [name for name, cell in cells.items() if not cell.strip()]
    if len(blank) == 4:
        return None
    if blank:
        raise ParseError(
            f"column {blank[0]!r}: incomplete box (all four coordinates "
            "or none must be present)",
            line=line,
        )
    coords = [_int_cell(row, columns[name], name, line) for name in _BOX_COLUMNS]
    try:
        return BBox(*coords)
    except ValueError as exc:
        raise ParseError(f"invalid box: {exc}", line=line) from None


# ---------------------------------------------------------------------------
# Dataset tables


def parse_dataset(source: Source) -> list[Sample]:
    """Parse a dataset table into validated samples.

    The table must carry at least image, question, width, and height
    columns; the four box columns and pseudo_answer are optional. Rows
    with all four box cells empty yield samples without ground truth.
    sample_id defaults to the 0-based row index rendered as text unless
    an explicit ``sample_id`` (or ``id``) column exists. Row order and
    duplicate (image, question) rows are preserved.
    """
    with _opened(source) as handle:
        reader, columns, width = _read_header(handle, _DATASET_REQUIRED, "dataset")
        box_columns = [c for c in _BOX_COLUMNS if c in columns]
        if box_columns and len(box_columns) < 4:
            raise FormatError(
                "dataset header has an incomplete box column set: "
                f"{', '.join(box_columns)}"
            )
        has_box = len(box_columns) == 4
        id_column = columns.get("sample_id", columns.get("id"))
        answer_column = columns.get("pseudo_answer")

        samples: list[Sample] = []
        seen_ids: set[str] = set()
        row_index = 0
        for row in reader:
            if not row:
                continue
            line = reader.line_num + 1
            _check_arity(row, width, line)
            sample_id = (
                row[id_column] if id_column is not None else str(row_index)
            )
            if sample_id in seen_ids:
                raise ParseError(f"duplicate sample_id {sample_id!r}", line=line)
            seen_ids.add(sample_id)
            dims_w = _int_cell(row, columns["width"], "width", line)
            dims_h = _int_cell(row, columns["height"], "height", line)
            try:
                dims = ImageDims(dims_w, dims_h)
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            gt_box = _box_cells(row, columns, line) if has_box else None
            answer = row[answer_column] if answer_column is not None else ""
            try:
                sample = Sample(
                    sample_id=sample_id,
                    image_url=row[columns["image"]],
                    question=row[columns["question"]],
                    dims=dims,
                    gt_box=gt_box,
                    pseudo_answer=answer if answer.strip() else None,
                )
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            samples.append(sample)
            row_index += 1
        return samples


def write_dataset(samples: Sequence[Sample], dest: Source) -> None:
    """Write samples as a tab-delimited dataset table.

    Box columns appear only when at least one sample carries a ground
    truth box; likewise for pseudo_answer. ``parse_dataset`` round-trips
    the output exactly.
    """
    any_box = any(s.gt_box is not None for s in samples)
    any_answer = any(s.pseudo_answer is not None for s in samples)
    header = ["sample_id", "image", "question", "width", "height"]
    if any_box:
        header += list(_BOX_COLUMNS)
    if any_answer:
        header.append("pseudo_answer")
    with _opened(dest, "w") as handle:
        writer = _writer(handle)
        writer.writerow(header)
        for s in samples:
            row = [s.sample_id, s.image_url, s.question,
                   str(s.dims.width), str(s.dims.height)]
            if any_box:
                if s.gt_box is None:
                    row += ["", "", "", ""]
                else:
                    row += [str(c) for c in s.gt_box.quad()]
            if any_answer:
                row.append(s.pseudo_answer or "")
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Detections


_DETECTION_COLUMNS = (
    "image_ref", "detector", "class_name", "confidence",
    "left", "top", "right", "bottom",
)


def parse_detections(source: Source) -> list[Detection]:
    """Parse a line-delimited detections file."""
    with _opened(source) as handle:
        reader, columns, width = _read_header(
            handle, _DETECTION_COLUMNS, "detections"
        )
        detections: list[Detection] = []
        for row in reader:
            if not row:
                continue
            line = reader.line_num + 1
            _check_arity(row, width, line)
            coords = [
                _int_cell(row, columns[name], name, line) for name in _BOX_COLUMNS
            ]
            try:
                box = BBox(*coords)
            except ValueError as exc:
                raise ParseError(f"invalid box: {exc}", line=line) from None
            confidence = _float_cell(row, columns["confidence"], "confidence", line)
            try:
                detection = Detection(
                    image_ref=row[columns["image_ref"]],
                    detector=row[columns["detector"]],
                    class_name=row[columns["class_name"]],
                    confidence=confidence,
                    box=box,
                )
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            detections.append(detection)
        return detections


def write_detections(detections: Sequence[Detection], dest: Source) -> None:
    with _opened(dest, "w") as handle:
        writer = _writer(handle)
        writer.writerow(list(_DETECTION_COLUMNS))
        for d in detections:
            writer.writerow(
                [d.image_ref, d.detector, d.class_name, repr(d.confidence)]
                + [str(c) for c in d.box.quad()]
            )


def group_detections(detections: Iterable[Detection]) -> dict[str, list[Detection]]:
    """Group detections by image_ref, preserving first-seen order."""
    grouped: dict[str, list[Detection]] = {}
    for d in detections:
        grouped.setdefault(d.image_ref, []).append(d)
    return grouped


def class_counts(detections: Sequence[Detection]) -> dict[str, int]:
    """Multiplicity of each class across all detectors for one image.

    Detector outputs are pooled: the count of a class is the number of
    detections of that class in the image regardless of which detector
    produced them.
    """
    refs = {d.image_ref for d in detections}
    if len(refs) > 1:
        raise GroundboxError(
            "class_counts requires detections for a single image, got "
            f"image_refs {sorted(refs)}"
        )
    return dict(Counter(d.class_name for d in detections))


# ---------------------------------------------------------------------------
# Predictions


def read_predictions(source: Source) -> list[Prediction]:
    """Read a predictions file; boxes must be valid."""
    with _opened(source) as handle:
        reader, columns, width = _read_header(
            handle, ("sample_id",) + _BOX_COLUMNS, "predictions"
        )
        source_column = columns.get("source")
        predictions: list[Prediction] = []
        for row in reader:
            if not row:
                continue
            line = reader.line_num + 1
            _check_arity(row, width, line)
            coords = [
                _int_cell(row, columns[name], name, line) for name in _BOX_COLUMNS
            ]
            try:
                box = BBox(*coords)
            except ValueError as exc:
                raise ParseError(f"invalid box: {exc}", line=line) from None
            predictions.append(
                Prediction(
                    sample_id=row[columns["sample_id"]],
                    box=box,
                    source=row[source_column] if source_column is not None else "",
                )
            )
        return predictions


def write_predictions(predictions: Sequence[Prediction], dest: Source) -> None:
    with _opened(dest, "w") as handle:
        writer = _writer(handle)
        writer.writerow(["sample_id", "left", "top", "right", "bottom", "source"])
        for p in predictions:
            writer.writerow(
                [p.sample_id] + [str(c) for c in p.box.quad()] + [p.source]
            )


# ---------------------------------------------------------------------------
# Fold splits


def split_folds(sample_ids: Sequence[str], fold_count: int, seed: int) -> SplitManifest:
    """Assign ids to folds by seeded shuffle + round robin.

    A deterministic function of (sorted ids, fold_count, seed): ids are
    sorted, shuffled with the seeded generator, and dealt round-robin, so
    fold sizes differ by at most one.
    """
    if fold_count < 2:
        raise GroundboxError(f"fold_count must be >= 2, got {fold_count}")
    ids = list(sample_ids)
    if not ids:
        raise GroundboxError("cannot split an empty id list")
    duplicates = [s for s, n in Counter(ids).items() if n > 1]
    if duplicates:
        raise GroundboxError(f"duplicate sample ids: {sorted(duplicates)}")
    ordered = sorted(ids)
    random.Random(seed).shuffle(ordered)
    assignments = {sample_id: i % fold_count for i, sample_id in enumerate(ordered)}
    return SplitManifest(fold_count=fold_count, assignments=assignments)


def read_split(source: Source, fold_count: Optional[int] = None) -> SplitManifest:
    """Read a split manifest; fold_count defaults to max fold index + 1."""
    with _opened(source) as handle:
        reader, columns, width = _read_header(handle, ("sample_id", "fold"), "split")
        assignments: dict[str, int] = {}
        for row in reader:
            if not row:
                continue
            line = reader.line_num + 1
            _check_arity(row, width, line)
            sample_id = row[columns["sample_id"]]
            if sample_id in assignments:
                raise ParseError(f"duplicate sample_id {sample_id!r}", line=line)
            assignments[sample_id] = _int_cell(row, columns["fold"], "fold", line)
        if not assignments:
            raise FormatError("split manifest has no rows")
        if fold_count is None:
            fold_count = max(assignments.values()) + 1
        try:
            return SplitManifest(fold_count=fold_count, assignments=assignments)
        except ValueError as exc:
            raise FormatError(f"invalid split manifest: {exc}") from None


def write_split(manifest: SplitManifest, dest: Source) -> None:
    with _opened(dest, "w") as handle:
        writer = _writer(handle)
        writer.writerow(["sample_id", "fold"])
        for sample_id in sorted(manifest.assignments):
            writer.writerow([sample_id, str(manifest.assignments[sample_id])])


# ---------------------------------------------------------------------------
# Pseudo-answer assignments


def read_pseudo_answers(source: Source) -> dict[str, str]:
    """Read per-sample pseudo-answer assignments, order preserved."""
    with _opened(source) as handle:
        reader, columns, width = _read_header(
            handle, ("sample_id", "pseudo_answer"), "pseudo-answers"
        )
        answers: dict[str, str] = {}
        for row in reader:
            if not row:
                continue
            line = reader.line_num + 1
            _check_arity(row, width, line)
            sample_id = row[columns["sample_id"]]
            if sample_id in answers:
                raise ParseError(f"duplicate sample_id {sample_id!r}", line=line)
            answer = row[columns["pseudo_answer"]]
            if not answer.strip():
                raise ParseError("empty pseudo_answer", line=line)
            answers[sample_id] = answer
        return answers


def write_pseudo_answers(answers: Mapping[str, str], dest: Source) -> None:
    with _opened(dest, "w") as handle:
        writer = _writer(handle)
        writer.writerow(["sample_id", "pseudo_answer"])
        for sample_id, answer in answers.items():
            writer.writerow([sample_id, answer])


# ---------------------------------------------------------------------------
# Question augmentation (externally produced paraphrases)


def read_augmentation(source: Source) -> dict[str, list[str]]:
    """Read question paraphrases as original -> list of paraphrases."""
    with _opened(source) as handle:
        reader, columns, width = _read_header(
            handle, ("original_question", "paraphrase"), "augmentation"
        )
        augmentation: dict[str, list[str]] = {}
        for row in reader:
            if not row:
                continue
            _check_arity(row, width, reader.line_num + 1)
            original = row[columns["original_question"]]
            augmentation.setdefault(original, []).append(row[columns["paraphrase"]])
        return augmentation


def write_augmentation(augmentation: Mapping[str, Sequence[str]], dest: Source) -> None:
    with _opened(dest, "w") as handle:
        writer = _writer(handle)
        writer.writerow(["original_question", "paraphrase"])
        for original, paraphrases in augmentation.items():
            for paraphrase in paraphrases:
                writer.writerow([original, paraphrase])


# ---------------------------------------------------------------------------
# Image pools


def read_image_pool(source: Source) -> list[PoolImage]:
    with _opened(source) as handle:
        reader, columns, width = _read_header(
            handle, ("image", "width", "height"), "image pool"
        )
        pool: list[PoolImage] = []
        seen: set[str] = set()
        for row in reader:
            if not row:
                continue
            line = reader.line_num + 1
            _check_arity(row, width, line)
            image_ref = row[columns["image"]]
            if image_ref in seen:
                raise ParseError(f"duplicate image {image_ref!r}", line=line)
            seen.add(image_ref)
            try:
                dims = ImageDims(
                    _int_cell(row, columns["width"], "width", line),
                    _int_cell(row, columns["height"], "height", line),
                )
                pool.append(PoolImage(image_ref=image_ref, dims=dims))
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
        return pool


def write_image_pool(pool: Sequence[PoolImage], dest: Source) -> None:
    with _opened(dest, "w") as handle:
        writer = _writer(handle)
        writer.writerow(["image", "width", "height"])
        for image in pool:
            writer.writerow(
                [image.image_ref, str(image.dims.width), str(image.dims.height)]
            )


def read_image_refs(source: Source) -> set[str]:
    """Collect the image column of any table that has one.

    Accepts dataset and pool files alike; used to build exclusion sets.
    """
    with _opened(source) as handle:
        reader, columns, width = _read_header(handle, ("image",), "image list")
        refs: set[str] = set()
        for row in reader:
            if not row:
                continue
            _check_arity(row, width, reader.line_num + 1)
            refs.add(row[columns["image"]])
        return refs


# ---------------------------------------------------------------------------
# Prompts


def read_prompts(source: Source) -> list[tuple[str, str]]:
    with _opened(source) as handle:
        reader, columns, width = _read_header(
            handle, ("sample_id", "prompt"), "prompts"
        )
        prompts: list[tuple[str, str]] = []
        seen: set[str] = set()
        for row in reader:
            if not row:
                continue
            line = reader.line_num + 1
            _check_arity(row, width, line)
            sample_id = row[columns["sample_id"]]
            if sample_id in seen:
                raise ParseError(f"duplicate sample_id {sample_id!r}", line=line)
            seen.add(sample_id)
            prompts.append((sample_id, row[columns["prompt"]]))
        return prompts


def write_prompts(prompts: Sequence[tuple[str, str]], dest: Source) -> None:
    with _opened(dest, "w") as handle:
        writer = _writer(handle)
        writer.writerow(["sample_id", "prompt"])
        for sample_id, prompt in prompts:
            writer.writerow([sample_id, prompt])


# ---------------------------------------------------------------------------
# Image fetching with a content-addressed cache


@dataclass(frozen=True)
class FetchPolicy:
    """Retry, timeout, and validation behavior for image downloads.

    dims_check: "off" skips validation, "warn" logs a mismatch between
    downloaded and declared dimensions, "strict" raises FetchError.
    """

    max_retries: int = 3
    backoff_start: float = 1.0
    timeout: float = 30.0
    dims_check: str = "off"

    def __post_init__(self):
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")
        if self.dims_check not in ("off", "warn", "strict"):
            raise ValueError(f"unknown dims_check policy {self.dims_check!r}")


def cache_name(url: str) -> str:
    """Content-addressed cache filename for a URL (hash + original suffix)."""
    digest = hashlib.sha256(url.encode("utf-8")).hexdigest()
    suffix = Path(urlparse(url).path).suffix
    if suffix and len(suffix) <= 8 and suffix[1:].isalnum():
        return digest + suffix.lower()
    return digest


def _check_dims(path: Path, url: str, expected: ImageDims, policy: FetchPolicy) -> None:
    from PIL import Image

    try:
        with Image.open(path) as img:
            actual = img.size
    except Exception as exc:
        raise FetchError(f"cannot read image fetched from {url}: {exc}") from exc
    if actual != (expected.width, expected.height):
        message = (
            f"image {url}: downloaded dims {actual[0]}x{actual[1]} != "
            f"declared {expected.width}x{expected.height}"
        )
        if policy.dims_check == "strict":
            raise FetchError(message)
        logger.warning(message)


def fetch_image(
    url: str,
    cache_dir: Union[str, Path],
    policy: FetchPolicy = FetchPolicy(),
    expected_dims: Optional[ImageDims] = None,
) -> Path:
    """Fetch an image into the cache and return its local path.

    Files are stored under a hash of the URL; an index.tsv in the cache
    maps hashes back to URLs for auditability. A cached file is returned
    without any network traffic. Downloads are written to a temp file and
    renamed into place so concurrent fetchers never observe partial files.
    """
    cache = Path(cache_dir)
    path = cache / cache_name(url)
    if path.exists():
        if expected_dims is not None and policy.dims_check != "off":
            _check_dims(path, url, expected_dims, policy)
        return path

    cache.mkdir(parents=True, exist_ok=True)
    last_error: Optional[str] = None
    for attempt in range(policy.max_retries):
        if attempt:
            time.sleep(policy.backoff_start * (2 ** (attempt - 1)))
        try:
            response = requests.get(url, timeout=policy.timeout)
        except requests.RequestException as exc:
            last_error = str(exc)
            continue
        if response.status_code != 200:
            last_error = f"HTTP {response.status_code}"
            continue
        fd, tmp_name = tempfile.mkstemp(dir=cache, suffix=".part")
        try:
            with os.fdopen(fd, "wb") as tmp:
                tmp.write(response.content)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        with open(cache / "index.tsv", "a", encoding="utf-8") as index:
            index.write(f"{path.name}\t{url}\n")
        if expected_dims is not None and policy.dims_check != "off":
            _check_dims(path, url, expected_dims, policy)
        return path
    raise FetchError(
        f"failed to fetch {url} after {policy.max_retries} attempts"
        + (f": {last_error}" if last_error else "")
    )


def fetch_images(
    items: Iterable[tuple[str, Optional[ImageDims]]],
    cache_dir: Union[str, Path],
    policy: FetchPolicy = FetchPolicy(),
    max_workers: int = 8,
) -> dict[str, Path]:
    """Fetch many images concurrently with a bounded in-flight limit.

    Returns url -> local path for every success; raises FetchError
    naming every failed URL after all fetches have settled.
    """
    items = list(items)
    results: dict[str, Path] = {}
    failures: list[str] = []
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        futures = {
            pool.submit(fetch_image, url, cache_dir, policy, dims): url
            for url, dims in items
        }
        for future, url in futures.items():
            try:
                results[url] = future.result()
            except FetchError:
                failures.append(url)
    if failures:
        raise FetchError(f"failed to fetch {len(failures)} image(s): {failures}")
    return results
