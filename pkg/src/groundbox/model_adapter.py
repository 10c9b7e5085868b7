"""Boundary to the external neural components.

The grounding model and the pseudo-answer generator live outside this
package, behind a file-and-process interface: the toolkit writes a
requests file, invokes a user-supplied command, and validates the
responses file it produces. Response boxes are raw integer quads, not yet
clamped or validated; downstream stages decide how to sanitize them.

A deterministic mock stands in for the real model so the whole pipeline
is testable offline: it returns ground-truth boxes perturbed by seeded
uniform jitter, with noise 0 reproducing ground truth exactly.
"""

from __future__ import annotations

import random
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

from groundbox import corpus
from groundbox.corpus import Sample, Source
from groundbox.errors import AdapterError, ExternalCommandError
from groundbox.geometry import BBox

RawQuad = tuple[int, int, int, int]


@dataclass(frozen=True, slots=True)
class GroundingRequest:
    """One unit of model work: an image and the prompt to ground in it."""

    sample_id: str
    image: str
    prompt: str

    def __post_init__(self):
        if not self.prompt:
            raise ValueError(f"sample {self.sample_id!r}: empty prompt")


@dataclass(frozen=True, slots=True)
class GroundingResponse:
    """The model's raw box for one request, before any clamping."""

    sample_id: str
    box: RawQuad


def build_requests(
    samples: Sequence[Sample],
    prompts: Mapping[str, str],
    images: Mapping[str, str] | None = None,
) -> list[GroundingRequest]:
    """Pair samples with their prompts (and optionally local image paths)."""
    missing = [s.sample_id for s in samples if s.sample_id not in prompts]
    if missing:
        raise AdapterError(f"no prompt for sample(s): {sorted(missing)}")
    return [
        GroundingRequest(
            sample_id=s.sample_id,
            image=(images or {}).get(s.image_url, s.image_url),
            prompt=prompts[s.sample_id],
        )
        for s in samples
    ]


# ---------------------------------------------------------------------------
# Request/response files


def write_requests(requests: Sequence[GroundingRequest], dest: Source) -> None:
    with corpus._opened(dest, "w") as handle:
        writer = corpus._writer(handle)
        writer.writerow(["sample_id", "image", "prompt"])
        for r in requests:
            writer.writerow([r.sample_id, r.image, r.prompt])


def read_requests(source: Source) -> list[GroundingRequest]:
    with corpus._opened(source) as handle:
        reader, columns, width = corpus._read_header(
            handle, ("sample_id", "image", "prompt"), "requests"
        )
        requests = []
        for row in reader:
            if not row:
                continue
            corpus._check_arity(row, width, reader.line_num + 1)
            requests.append(
                GroundingRequest(
                    sample_id=row[columns["sample_id"]],
                    image=row[columns["image"]],
                    prompt=row[columns["prompt"]],
                )
            )
        return requests


def write_responses(responses: Sequence[GroundingResponse], dest: Source) -> None:
    with corpus._opened(dest, "w") as handle:
        writer = corpus._writer(handle)
        writer.writerow(["sample_id", "left", "top", "right", "bottom"])
        for r in responses:
            writer.writerow([r.sample_id] + [str(c) for c in r.box])


def read_responses(source: Source) -> list[GroundingResponse]:
    """Read raw model responses; boxes are unvalidated integer quads."""
    with corpus._opened(source) as handle:
        reader, columns, width = corpus._read_header(
            handle, ("sample_id", "left", "top", "right", "bottom"), "responses"
        )
        responses = []
        for row in reader:
            if not row:
                continue
            line = reader.line_num + 1
            corpus._check_arity(row, width, line)
            quad = tuple(
                corpus._int_cell(row, columns[name], name, line)
                for name in ("left", "top", "right", "bottom")
            )
            responses.append(
                GroundingResponse(sample_id=row[columns["sample_id"]], box=quad)
            )
        return responses


# ---------------------------------------------------------------------------
# External command invocation


def _substitute(command: str, mapping: Mapping[str, str]) -> list[str]:
    tokens = shlex.split(command)
    for placeholder in ("{in}", "{out}"):
        if not any(placeholder in token for token in tokens):
            raise AdapterError(
                f"command template must contain the {placeholder} placeholder"
            )
    substituted = []
    for token in tokens:
        for placeholder, value in mapping.items():
            token = token.replace(placeholder, value)
        substituted.append(token)
    return substituted


def run_external(
    requests: Sequence[GroundingRequest],
    command: str,
    work_dir: Union[str, Path],
) -> list[GroundingResponse]:
    """Run the external model command over a batch of requests.

    Writes ``requests.tsv`` under ``work_dir``, substitutes {in} and {out}
    in the command template, executes it, and validates that the response
    file echoes exactly the requested sample ids. The command itself is a
    black box; only the response file contract is checked.
    """
    work = Path(work_dir)
    work.mkdir(parents=True, exist_ok=True)
    in_path = work / "requests.tsv"
    out_path = work / "responses.tsv"
    write_requests(requests, in_path)
    argv = _substitute(command, {"{in}": str(in_path), "{out}": str(out_path)})
    completed = subprocess.run(argv, capture_output=True, text=True)
    if completed.returncode != 0:
        raise ExternalCommandError(
            command, completed.returncode, stderr_tail=completed.stderr[-2000:]
        )
    if not out_path.exists():
        raise AdapterError(f"command produced no response file at {out_path}")
    responses = read_responses(out_path)
    expected = {r.sample_id for r in requests}
    got = {r.sample_id for r in responses}
    missing = sorted(expected - got)
    if missing:
        raise AdapterError(f"responses missing sample id(s): {missing}")
    extra = sorted(got - expected)
    if extra:
        raise AdapterError(f"responses for unknown sample id(s): {extra}")
    if len(responses) != len(got):
        raise AdapterError("duplicate response sample ids")
    return responses


# ---------------------------------------------------------------------------
# Deterministic mock model


def mock_ground(
    request: GroundingRequest,
    gt_lookup: Mapping[str, BBox],
    noise: float,
    seed: Union[int, str],
) -> GroundingResponse:
    """Ground-truth box with seeded uniform jitter on each coordinate.

    The jitter magnitude is ``noise * min(width, height)`` of the true
    box, rounded down; noise 0 reproduces ground truth exactly. Each
    sample's randomness derives from (seed, sample_id), so batch order
    and sharding never change the output.
    """
    if noise < 0:
        raise AdapterError(f"noise must be >= 0, got {noise}")
    box = gt_lookup.get(request.sample_id)
    if box is None:
        raise AdapterError(f"no ground truth for sample {request.sample_id!r}")
    magnitude = int(noise * min(box.width, box.height))
    if magnitude == 0:
        return GroundingResponse(sample_id=request.sample_id, box=box.quad())
    rng = random.Random(f"{seed}:{request.sample_id}")
    quad = tuple(c + rng.randint(-magnitude, magnitude) for c in box.quad())
    return GroundingResponse(sample_id=request.sample_id, box=quad)


def mock_ground_all(
    requests: Sequence[GroundingRequest],
    gt_lookup: Mapping[str, BBox],
    noise: float,
    seed: Union[int, str],
) -> list[GroundingResponse]:
    return [mock_ground(r, gt_lookup, noise, seed) for r in requests]


def mock_pseudo_answers(
    samples: Sequence[Sample],
    vocabulary: Sequence[str],
    seed: Union[int, str],
) -> dict[str, str]:
    """Assign each sample a vocabulary word, deterministically per seed."""
    if not vocabulary:
        raise AdapterError("vocabulary must be non-empty")
    words = list(vocabulary)
    return {
        s.sample_id: words[
            random.Random(f"{seed}:{s.sample_id}").randrange(len(words))
        ]
        for s in samples
    }
