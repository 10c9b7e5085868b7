"""Command-line front end wiring the pipeline stages together.

Every subcommand is a thin wrapper over one library operation: parse the
input files, call the operation, write the outputs, and record a manifest
(resolved arguments plus input digests) next to the primary output. All
randomness flows from --seed, and nothing here stamps dates or hostnames,
so re-running any subcommand with the same inputs reproduces its outputs
byte for byte.

Exit status: 0 on success, 1 on data errors (malformed files, contract
violations), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from groundbox import __version__, corpus, evaluation, model_adapter, synthesis
from groundbox.config import (
    RunConfig,
    load_config,
    save_config,
    write_manifest,
)
from groundbox.corpus import FetchPolicy, Prediction
from groundbox.errors import GroundboxError, PipelineError
from groundbox.geometry import BBox, clamp_to_image
from groundbox.postprocess import (
    FUSE_THRESHOLD_DEFAULT,
    REPLACE_THRESHOLD_DEFAULT,
    PostprocessConfig,
    build_candidate_sets,
    run_pipeline,
)
from groundbox.prompting import DEFAULT_TEMPLATE, TemplateId, render

ORDER_CHOICES = ("replace-then-fuse", "fuse-then-replace")
DEFAULT_CACHE_DIR = ".groundbox-cache"


def _manifest(out: str, args: argparse.Namespace, inputs) -> None:
    recorded = {
        name: value
        for name, value in vars(args).items()
        if name not in ("func", "command")
    }
    write_manifest(
        f"{out}.manifest.json",
        args.command,
        recorded,
        [path for path in inputs if path],
    )


def _sanitize(responses, samples, source: str) -> tuple[list[Prediction], int]:
    """Raw model quads become valid predictions clamped into their images.

    A degenerate or fully off-image response falls back to the whole frame
    so downstream stages always see a valid box; fallbacks are counted.
    """
    dims = {s.sample_id: s.dims for s in samples}
    unknown = sorted({r.sample_id for r in responses} - set(dims))
    if unknown:
        raise PipelineError(f"response(s) for unknown sample id(s): {unknown}")
    predictions: list[Prediction] = []
    fallbacks = 0
    for response in responses:
        d = dims[response.sample_id]
        box = clamp_to_image(response.box, d)
        if box is None:
            box = BBox(0, 0, d.width, d.height)
            fallbacks += 1
        predictions.append(
            Prediction(sample_id=response.sample_id, box=box, source=source)
        )
    return predictions, fallbacks


# ---------------------------------------------------------------------------
# Subcommands


def cmd_build_table(args) -> int:
    samples = corpus.parse_dataset(args.dataset)
    table = synthesis.build_table(samples)
    if args.augment:
        augmented = synthesis.apply_back_translation(
            table, corpus.read_augmentation(args.augment)
        )
        table = augmented.table
        if augmented.skipped_pairs:
            print(
                f"skipped {augmented.skipped_pairs} paraphrase(s) "
                "with no matching question",
                file=sys.stderr,
            )
    synthesis.write_table(table, args.out)
    _manifest(args.out, args, [args.dataset, args.augment])
    n_questions = sum(len(qs) for qs in table.entries.values())
    print(f"table: {len(table)} pseudo-answer(s), {n_questions} question(s)")
    return 0


def cmd_forge(args) -> int:
    if bool(args.distribution_out) != bool(args.reference):
        print(
            "error: --reference and --distribution-out must be given together",
            file=sys.stderr,
        )
        return 2
    pool = corpus.read_image_pool(args.pool)
    detections = corpus.group_detections(corpus.parse_detections(args.detections))
    table = synthesis.read_table(args.table)
    exclusion = corpus.read_image_refs(args.exclude) if args.exclude else set()
    result = synthesis.forge_dataset(
        pool, detections, table, args.count, args.seed, exclusion
    )
    corpus.write_dataset(synthesis.synthetic_to_samples(result.samples), args.out)
    if args.distribution_out:
        reference = corpus.parse_dataset(args.reference)
        report = synthesis.distribution_report(result.samples, reference)
        Path(args.distribution_out).write_text(report.render(), encoding="utf-8")
    _manifest(
        args.out,
        args,
        [args.pool, args.detections, args.table, args.exclude, args.reference],
    )
    print(result.report())
    return 0


def cmd_prompt(args) -> int:
    samples = corpus.parse_dataset(args.dataset)
    template = TemplateId.parse(args.template)
    answers = corpus.read_pseudo_answers(args.answers) if args.answers else {}
    prompts = [
        (
            s.sample_id,
            render(s.question, answers.get(s.sample_id, s.pseudo_answer), template),
        )
        for s in samples
    ]
    corpus.write_prompts(prompts, args.out)
    _manifest(args.out, args, [args.dataset, args.answers])
    print(f"rendered {len(prompts)} prompt(s) with template {template.value}")
    return 0


def cmd_split(args) -> int:
    samples = corpus.parse_dataset(args.dataset)
    manifest = corpus.split_folds(
        [s.sample_id for s in samples], args.folds, args.seed
    )
    corpus.write_split(manifest, args.out)
    _manifest(args.out, args, [args.dataset])
    sizes = [len(manifest.ids_in_fold(i)) for i in range(args.folds)]
    print(f"split {len(manifest.assignments)} sample(s) into folds of {sizes}")
    return 0


def cmd_infer(args) -> int:
    samples = corpus.parse_dataset(args.dataset)
    prompt_map = dict(corpus.read_prompts(args.prompts))
    images = None
    if args.fetch:
        cache_dir = args.cache_dir or os.environ.get(
            "GROUNDBOX_CACHE_DIR", DEFAULT_CACHE_DIR
        )
        policy = FetchPolicy(dims_check=args.dims_check)
        local = corpus.fetch_images(
            [(s.image_url, s.dims) for s in samples],
            cache_dir,
            policy,
            max_workers=args.jobs,
        )
        images = {url: str(path) for url, path in local.items()}
    requests = model_adapter.build_requests(samples, prompt_map, images)
    if args.model_command:
        work_dir = args.work_dir or f"{args.out}.work"
        responses = model_adapter.run_external(requests, args.model_command, work_dir)
        mode = "external"
    else:
        gt = {s.sample_id: s.gt_box for s in samples if s.gt_box is not None}
        responses = model_adapter.mock_ground_all(requests, gt, args.noise, args.seed)
        mode = "mock"
    model_adapter.write_responses(responses, args.out)
    _manifest(args.out, args, [args.dataset, args.prompts])
    print(f"inferred {len(responses)} box(es) ({mode})")
    return 0


def cmd_postprocess(args) -> int:
    samples = corpus.parse_dataset(args.dataset)
    candidates = build_candidate_sets(corpus.parse_detections(args.detections))
    folds = []
    fallbacks = 0
    for i, path in enumerate(args.fold):
        responses = model_adapter.read_responses(path)
        predictions, n = _sanitize(responses, samples, source=f"fold{i}")
        fallbacks += n
        folds.append(predictions)
    config = PostprocessConfig(
        replace_threshold=args.replace_threshold,
        fuse_threshold=args.fuse_threshold,
        order=args.order.replace("-", "_"),
    )
    result = run_pipeline(samples, folds, candidates, config)
    corpus.write_predictions(result.predictions, args.out)
    if args.stats:
        stats = dict(result.stats.to_dict(), sanitize_fallbacks=fallbacks)
        Path(args.stats).write_text(
            json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    _manifest(args.out, args, [args.dataset, args.detections, *args.fold])
    print(
        f"fused {result.stats.n_folds} fold(s) over {result.stats.n_samples} "
        f"sample(s); replacement rate {result.stats.replacement_rate:.3f}"
    )
    return 0


def cmd_score(args) -> int:
    samples = corpus.parse_dataset(args.dataset)
    predictions = corpus.read_predictions(args.predictions)
    report = evaluation.score(predictions, samples)
    if args.report:
        evaluation.write_report(report, args.report)
        _manifest(args.report, args, [args.dataset, args.predictions])
    print(f"score: {evaluation.format_score(report.score, args.full_precision)}")
    return 0


def cmd_report(args) -> int:
    report = evaluation.read_report(args.scores)
    print(f"samples: {report.n_samples}")
    print(f"score: {evaluation.format_score(report.score, args.full_precision)}")
    for i, count in enumerate(report.histogram):
        upper = "1.0]" if i == 9 else f"{(i + 1) / 10:.1f})"
        print(f"iou [{i / 10:.1f},{upper} {count}")
    if args.compare:
        other = evaluation.read_report(args.compare)
        delta = evaluation.compare(report, other)
        print(delta.render(), end="")
    return 0


def cmd_pipeline(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {
        "seed": args.seed,
        "folds": args.folds,
        "noise": args.noise,
        "template": args.template,
        "replace_threshold": args.replace_threshold,
        "fuse_threshold": args.fuse_threshold,
        "n_synthetic": args.n_synthetic,
        "jobs": args.jobs,
    }
    if args.order is not None:
        overrides["fuse_order"] = args.order.replace("-", "_")
    if args.skip_postprocess:
        overrides["skip_postprocess"] = True
    if args.model_command:
        overrides["command"] = args.model_command
        overrides["mock"] = False
    paths = {
        name: getattr(args, name)
        for name in ("dataset", "pool", "detections", "table", "exclude")
        if getattr(args, name)
    }
    if paths:
        overrides["paths"] = paths
    config = config.merged(**overrides)

    run_dir = Path(args.run_dir)
    if run_dir.exists() and not run_dir.is_dir():
        raise PipelineError(f"run directory {run_dir} exists and is not a directory")
    if run_dir.is_dir() and any(run_dir.iterdir()) and not args.force:
        raise PipelineError(
            f"run directory {run_dir} is not empty (use --force to reuse it)"
        )
    run_dir.mkdir(parents=True, exist_ok=True)

    dataset_path = config.paths.get("dataset")
    if not dataset_path:
        raise PipelineError("config must provide paths.dataset")
    samples = corpus.parse_dataset(dataset_path)
    save_config(config, run_dir / "config.json")
    inputs = [dataset_path]

    # Forge the coarse-tuning set; eval images are always excluded.
    if config.n_synthetic > 0:
        missing = [p for p in ("pool", "detections", "table") if p not in config.paths]
        if missing:
            raise PipelineError(f"forging requires paths: {missing}")
        pool = corpus.read_image_pool(config.paths["pool"])
        grouped = corpus.group_detections(
            corpus.parse_detections(config.paths["detections"])
        )
        table = synthesis.read_table(config.paths["table"])
        exclusion = {s.image_url for s in samples}
        if "exclude" in config.paths:
            exclusion |= corpus.read_image_refs(config.paths["exclude"])
        forged = synthesis.forge_dataset(
            pool, grouped, table, config.n_synthetic, config.seed, exclusion
        )
        corpus.write_dataset(
            synthesis.synthetic_to_samples(forged.samples),
            run_dir / "synthetic.tsv",
        )
        (run_dir / "forge_report.txt").write_text(
            forged.report() + "\n", encoding="utf-8"
        )
        inputs += [config.paths[p] for p in ("pool", "detections", "table")]

    prompts = [
        (s.sample_id, render(s.question, s.pseudo_answer, config.template))
        for s in samples
    ]
    corpus.write_prompts(prompts, run_dir / "prompts.tsv")

    requests = model_adapter.build_requests(samples, dict(prompts))
    gt = {s.sample_id: s.gt_box for s in samples if s.gt_box is not None}
    fold_predictions: list[list[Prediction]] = []
    for fold in range(config.folds):
        if config.mock:
            responses = model_adapter.mock_ground_all(
                requests, gt, config.noise, f"{config.seed}:fold{fold}"
            )
        else:
            command = config.command.replace("{fold}", str(fold))
            responses = model_adapter.run_external(
                requests, command, run_dir / f"external_fold{fold}"
            )
        model_adapter.write_responses(responses, run_dir / f"responses_fold{fold}.tsv")
        predictions, _ = _sanitize(responses, samples, source=f"fold{fold}")
        corpus.write_predictions(predictions, run_dir / f"predictions_fold{fold}.tsv")
        fold_predictions.append(predictions)

    if config.skip_postprocess:
        final = fold_predictions[0]
    else:
        if "detections" not in config.paths:
            raise PipelineError("postprocessing requires paths.detections")
        candidates = build_candidate_sets(
            corpus.parse_detections(config.paths["detections"])
        )
        result = run_pipeline(
            samples,
            fold_predictions,
            candidates,
            PostprocessConfig(
                replace_threshold=config.replace_threshold,
                fuse_threshold=config.fuse_threshold,
                order=config.fuse_order,
            ),
        )
        final = result.predictions
        (run_dir / "stats.json").write_text(
            json.dumps(result.stats.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        if config.paths["detections"] not in inputs:
            inputs.append(config.paths["detections"])
    corpus.write_predictions(final, run_dir / "predictions.tsv")

    report = evaluation.score(final, samples)
    evaluation.write_report(report, run_dir / "report.jsonl")
    write_manifest(
        run_dir / "manifest.json",
        "pipeline",
        {"config": config.to_dict(), "run_dir": str(run_dir)},
        inputs,
    )
    print(f"score: {evaluation.format_score(report.score)}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groundbox",
        description="Build, run, and score question-to-region grounding pipelines.",
    )
    parser.add_argument(
        "--version", action="version", version=f"groundbox {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser(
        "build-table",
        help="collect pseudo-answer question lists from an annotated dataset",
    )
    p.add_argument("--dataset", required=True, help="dataset with pseudo_answer column")
    p.add_argument("--augment", help="paraphrase pairs to merge into the table")
    p.add_argument("--out", required=True, help="table file to write")
    p.set_defaults(func=cmd_build_table)

    p = sub.add_parser(
        "forge", help="forge a synthetic dataset from detections and a table"
    )
    p.add_argument("--pool", required=True, help="image pool (image, width, height)")
    p.add_argument("--detections", required=True, help="detector output table")
    p.add_argument("--table", required=True, help="pseudo-answer table")
    p.add_argument("--count", required=True, type=int, help="samples to forge")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exclude", help="table whose image column is excluded (test set)")
    p.add_argument("--reference", help="dataset to compare distributions against")
    p.add_argument("--distribution-out", help="where to write the comparison")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.set_defaults(func=cmd_forge)

    p = sub.add_parser("prompt", help="render model prompts for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument(
        "--template",
        choices=[t.value for t in TemplateId],
        default=DEFAULT_TEMPLATE.value,
    )
    p.add_argument("--answers", help="pseudo-answer file overriding dataset answers")
    p.add_argument("--out", required=True, help="prompts file to write")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("split", help="assign samples to folds")
    p.add_argument("--dataset", required=True)
    p.add_argument("--folds", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="split manifest to write")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("infer", help="run the grounding model (mock or external)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--prompts", required=True, help="prompts file from `prompt`")
    p.add_argument(
        "--model-command",
        help="external command template with {in} and {out}; default is the mock",
    )
    p.add_argument("--work-dir", help="request/response staging dir (external only)")
    p.add_argument("--noise", type=float, default=0.0, help="mock jitter level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fetch", action="store_true", help="download images to the cache")
    p.add_argument(
        "--cache-dir", help=f"image cache (default $GROUNDBOX_CACHE_DIR or {DEFAULT_CACHE_DIR})"
    )
    p.add_argument("--dims-check", choices=("off", "warn", "strict"), default="off")
    p.add_argument("--jobs", type=int, default=8, help="parallel downloads")
    p.add_argument("--out", required=True, help="responses file to write")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser(
        "postprocess", help="correct and fuse per-fold responses into predictions"
    )
    p.add_argument("--dataset", required=True)
    p.add_argument("--detections", required=True, help="candidate boxes")
    p.add_argument(
        "--fold",
        action="append",
        required=True,
        help="per-fold responses file (repeat per fold)",
    )
    p.add_argument(
        "--replace-threshold", type=float, default=REPLACE_THRESHOLD_DEFAULT
    )
    p.add_argument("--fuse-threshold", type=float, default=FUSE_THRESHOLD_DEFAULT)
    p.add_argument("--order", choices=ORDER_CHOICES, default=ORDER_CHOICES[0])
    p.add_argument("--stats", help="stats JSON to write")
    p.add_argument("--out", required=True, help="predictions file to write")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("score", help="score predictions against ground truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--dataset", required=True, help="ground-truth dataset")
    p.add_argument("--report", help="per-sample report (JSONL) to write")
    p.add_argument("--full-precision", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="render a score report, optionally vs another")
    p.add_argument("--scores", required=True, help="report JSONL from `score`")
    p.add_argument("--compare", help="second report; deltas are second minus first")
    p.add_argument("--full-precision", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run forge, prompt, infer, postprocess, score")
    p.add_argument("--config", help="run config JSON; flags override its values")
    p.add_argument("--run-dir", required=True, help="output directory for the run")
    p.add_argument("--force", action="store_true", help="reuse a non-empty run dir")
    p.add_argument("--dataset", help="evaluation dataset with ground truth")
    p.add_argument("--pool", help="image pool for forging")
    p.add_argument("--detections", help="detector output table")
    p.add_argument("--table", help="pseudo-answer table")
    p.add_argument("--exclude", help="extra excluded images for forging")
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--template", choices=[t.value for t in TemplateId])
    p.add_argument("--replace-threshold", type=float)
    p.add_argument("--fuse-threshold", type=float)
    p.add_argument("--order", choices=ORDER_CHOICES)
    p.add_argument("--n-synthetic", type=int)
    p.add_argument("--skip-postprocess", action="store_true")
    p.add_argument("--model-command", help="external command; implies a non-mock run")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GroundboxError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
