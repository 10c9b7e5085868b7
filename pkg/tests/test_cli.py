"""End-to-end tests of the command-line interface.

Every test drives ``groundbox.cli.main`` directly with argv lists and a
small fixture corpus on disk: four evaluation samples whose detector
candidates include the exact ground-truth boxes, plus a pool of spare
images for forging.
"""

import json
import sys
from types import SimpleNamespace

import pytest

from groundbox import corpus, synthesis
from groundbox.cli import main
from groundbox.corpus import Detection, PoolImage, Prediction, Sample
from groundbox.geometry import BBox, ImageDims
from groundbox.model_adapter import read_responses

DIMS = ImageDims(100, 100)

GT = {
    "s1": BBox(10, 10, 30, 30),
    "s2": BBox(40, 40, 80, 90),
    "s3": BBox(5, 50, 45, 95),
    "s4": BBox(60, 5, 90, 35),
}

ANSWERS = {"s1": "clock", "s2": "lamp", "s3": "cat", "s4": "roll paper"}

QUESTIONS = {
    "s1": "what keeps time on the wall?",
    "s2": "what lights the desk?",
    "s3": "what is sleeping on the couch?",
    "s4": "where is the roll paper?",
}


def make_samples():
    return [
        Sample(
            sample_id=sample_id,
            image_url=f"p{i}.jpg",
            question=QUESTIONS[sample_id],
            dims=DIMS,
            gt_box=GT[sample_id],
            pseudo_answer=ANSWERS[sample_id],
        )
        for i, sample_id in enumerate(sorted(GT), start=1)
    ]


def make_detections(samples):
    dets = []
    for sample in samples:
        # A confident decoy that overlaps nothing, then the true box.
        dets.append(
            Detection(
                image_ref=sample.image_url,
                detector="det_a",
                class_name="junk",
                confidence=0.95,
                box=BBox(0, 0, 5, 5),
            )
        )
        dets.append(
            Detection(
                image_ref=sample.image_url,
                detector="det_a",
                class_name=sample.pseudo_answer,
                confidence=0.9,
                box=sample.gt_box,
            )
        )
    # Pool images carry one candidate each so they are forgeable.
    for i, class_name in enumerate(["clock", "lamp", "cat", "roll paper"], start=5):
        dets.append(
            Detection(
                image_ref=f"p{i}.jpg",
                detector="det_b",
                class_name=class_name,
                confidence=0.8,
                box=BBox(10, 10, 40, 40),
            )
        )
    return dets


@pytest.fixture
def world(tmp_path):
    samples = make_samples()
    paths = SimpleNamespace(
        root=tmp_path,
        dataset=str(tmp_path / "dataset.tsv"),
        detections=str(tmp_path / "detections.tsv"),
        pool=str(tmp_path / "pool.tsv"),
        table=str(tmp_path / "table.tsv"),
        predictions=str(tmp_path / "predictions.tsv"),
    )
    corpus.write_dataset(samples, paths.dataset)
    corpus.write_detections(make_detections(samples), paths.detections)
    pool = [PoolImage(image_ref=f"p{i}.jpg", dims=DIMS) for i in range(5, 10)]
    corpus.write_image_pool(pool, paths.pool)
    synthesis.write_table(synthesis.build_table(samples), paths.table)
    corpus.write_predictions(
        [Prediction(sample_id=s, box=GT[s]) for s in sorted(GT)], paths.predictions
    )
    return paths


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestExitCodes:
    def test_no_subcommand_is_a_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == 2

    def test_unknown_flag_is_a_usage_error(self, world):
        with pytest.raises(SystemExit) as info:
            main(["score", "--predictions", world.predictions, "--frobnicate"])
        assert info.value.code == 2

    def test_missing_input_file_is_a_data_error(self, world, capsys):
        code, _, err = run(
            capsys,
            [
                "score",
                "--predictions",
                str(world.root / "absent.tsv"),
                "--dataset",
                world.dataset,
            ],
        )
        assert code == 1
        assert err.startswith("error:")

    def test_malformed_dataset_is_a_data_error(self, world, capsys):
        bad = world.root / "bad.tsv"
        bad.write_text("image\tquestion\nonly-one-field", encoding="utf-8")
        code, _, err = run(
            capsys, ["split", "--dataset", str(bad), "--folds", "2", "--out", "x.tsv"]
        )
        assert code == 1
        assert err.startswith("error:")

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert capsys.readouterr().out.startswith("groundbox ")


class TestBuildTable:
    def test_writes_table_and_manifest(self, world, capsys):
        out = world.root / "built.tsv"
        code, stdout, _ = run(
            capsys,
            ["build-table", "--dataset", world.dataset, "--out", str(out)],
        )
        assert code == 0
        assert "table: 4 pseudo-answer(s), 4 question(s)" in stdout
        table = synthesis.read_table(out)
        assert set(table.entries) == {"clock", "lamp", "cat", "roll paper"}
        assert (world.root / "built.tsv.manifest.json").exists()

    def test_augment_merges_paraphrases(self, world, capsys):
        pairs = world.root / "pairs.tsv"
        corpus.write_augmentation(
            {QUESTIONS["s1"]: ["what tells the time?"]}, str(pairs)
        )
        out = world.root / "built.tsv"
        code, stdout, _ = run(
            capsys,
            [
                "build-table",
                "--dataset",
                world.dataset,
                "--augment",
                str(pairs),
                "--out",
                str(out),
            ],
        )
        assert code == 0
        assert "table: 4 pseudo-answer(s), 5 question(s)" in stdout


class TestForge:
    def test_forges_requested_count(self, world, capsys):
        out = world.root / "synthetic.tsv"
        code, stdout, _ = run(
            capsys,
            [
                "forge",
                "--pool",
                world.pool,
                "--detections",
                world.detections,
                "--table",
                world.table,
                "--count",
                "3",
                "--out",
                str(out),
            ],
        )
        assert code == 0
        assert "forged 3 sample(s)" in stdout
        forged = corpus.parse_dataset(out)
        assert len(forged) == 3
        assert all(s.gt_box is not None for s in forged)

    def test_shortfall_is_reported_not_fatal(self, world, capsys):
        out = world.root / "synthetic.tsv"
        code, stdout, _ = run(
            capsys,
            [
                "forge",
                "--pool",
                world.pool,
                "--detections",
                world.detections,
                "--table",
                world.table,
                "--count",
                "50",
                "--out",
                str(out),
            ],
        )
        assert code == 0
        assert "shortfall" in stdout

    def test_zero_count_writes_header_only_dataset(self, world, capsys):
        out = world.root / "synthetic.tsv"
        code, _, _ = run(
            capsys,
            [
                "forge",
                "--pool",
                world.pool,
                "--detections",
                world.detections,
                "--table",
                world.table,
                "--count",
                "0",
                "--out",
                str(out),
            ],
        )
        assert code == 0
        assert corpus.parse_dataset(out) == []

    def test_exclusion_file_removes_images(self, world, capsys):
        out = world.root / "synthetic.tsv"
        code, _, _ = run(
            capsys,
            [
                "forge",
                "--pool",
                world.pool,
                "--detections",
                world.detections,
                "--table",
                world.table,
                "--count",
                "4",
                "--exclude",
                world.dataset,  # excludes p1..p4, already outside the pool
                "--out",
                str(out),
            ],
        )
        assert code == 0
        refs = {s.image_url for s in corpus.parse_dataset(out)}
        assert refs <= {"p5.jpg", "p6.jpg", "p7.jpg", "p8.jpg"}

    def test_distribution_out_requires_reference(self, world, capsys):
        code, _, err = run(
            capsys,
            [
                "forge",
                "--pool",
                world.pool,
                "--detections",
                world.detections,
                "--table",
                world.table,
                "--count",
                "2",
                "--distribution-out",
                str(world.root / "dist.txt"),
                "--out",
                str(world.root / "synthetic.tsv"),
            ],
        )
        assert code == 2
        assert "--reference and --distribution-out" in err

    def test_distribution_report_is_written(self, world, capsys):
        dist = world.root / "dist.txt"
        code, _, _ = run(
            capsys,
            [
                "forge",
                "--pool",
                world.pool,
                "--detections",
                world.detections,
                "--table",
                world.table,
                "--count",
                "3",
                "--reference",
                world.dataset,
                "--distribution-out",
                str(dist),
                "--out",
                str(world.root / "synthetic.tsv"),
            ],
        )
        assert code == 0
        assert "L1 distance" in dist.read_text(encoding="utf-8")


class TestPrompt:
    def test_default_template_prefixes_which_region(self, world, capsys):
        out = world.root / "prompts.tsv"
        code, stdout, _ = run(
            capsys, ["prompt", "--dataset", world.dataset, "--out", str(out)]
        )
        assert code == 0
        assert "rendered 4 prompt(s) with template t2" in stdout
        prompts = corpus.read_prompts(out)
        assert len(prompts) == 4
        assert all(text.startswith("which region ") for _, text in prompts)

    def test_quoted_text_template(self, world, capsys):
        out = world.root / "prompts.tsv"
        code, _, _ = run(
            capsys,
            [
                "prompt",
                "--dataset",
                world.dataset,
                "--template",
                "t4",
                "--out",
                str(out),
            ],
        )
        assert code == 0
        prompts = dict(corpus.read_prompts(out))
        assert prompts["s1"] == 'which region does the text "clock" describe?'

    def test_answers_file_overrides_dataset(self, world, capsys):
        answers = world.root / "answers.tsv"
        corpus.write_pseudo_answers({"s1": "wall clock"}, str(answers))
        out = world.root / "prompts.tsv"
        code, _, _ = run(
            capsys,
            [
                "prompt",
                "--dataset",
                world.dataset,
                "--template",
                "t4",
                "--answers",
                str(answers),
                "--out",
                str(out),
            ],
        )
        assert code == 0
        prompts = dict(corpus.read_prompts(out))
        assert prompts["s1"] == 'which region does the text "wall clock" describe?'
        assert prompts["s2"] == 'which region does the text "lamp" describe?'


class TestSplit:
    def test_balanced_split(self, world, capsys):
        out = world.root / "split.tsv"
        code, stdout, _ = run(
            capsys,
            ["split", "--dataset", world.dataset, "--folds", "2", "--out", str(out)],
        )
        assert code == 0
        assert "split 4 sample(s) into folds of [2, 2]" in stdout
        manifest = corpus.read_split(out)
        assert manifest.fold_count == 2


def render_prompts(world, capsys):
    out = world.root / "prompts.tsv"
    code, _, _ = run(capsys, ["prompt", "--dataset", world.dataset, "--out", str(out)])
    assert code == 0
    return str(out)


def infer(world, capsys, out_name, extra=()):
    prompts = render_prompts(world, capsys)
    out = world.root / out_name
    code, stdout, _ = run(
        capsys,
        [
            "infer",
            "--dataset",
            world.dataset,
            "--prompts",
            prompts,
            "--out",
            str(out),
            *extra,
        ],
    )
    assert code == 0
    return out, stdout


class TestInfer:
    def test_mock_zero_noise_reproduces_ground_truth(self, world, capsys):
        out, stdout = infer(world, capsys, "responses.tsv")
        assert "inferred 4 box(es) (mock)" in stdout
        responses = {r.sample_id: r.box for r in read_responses(out)}
        assert responses == {s: GT[s].quad() for s in GT}

    def test_mock_noise_is_seeded(self, world, capsys):
        first, _ = infer(
            world, capsys, "r1.tsv", ["--noise", "0.4", "--seed", "9"]
        )
        second, _ = infer(
            world, capsys, "r2.tsv", ["--noise", "0.4", "--seed", "9"]
        )
        third, _ = infer(
            world, capsys, "r3.tsv", ["--noise", "0.4", "--seed", "10"]
        )
        assert read_responses(first) == read_responses(second)
        assert read_responses(first) != read_responses(third)

    def test_external_command_round_trip(self, world, capsys):
        script = world.root / "fake_model.py"
        script.write_text(
            "import csv, sys\n"
            "with open(sys.argv[1], newline='', encoding='utf-8') as f:\n"
            "    ids = [row[0] for row in list(csv.reader(f, delimiter='\\t'))[1:]]\n"
            "with open(sys.argv[2], 'w', newline='', encoding='utf-8') as f:\n"
            "    w = csv.writer(f, delimiter='\\t', lineterminator='\\n')\n"
            "    w.writerow(['sample_id', 'left', 'top', 'right', 'bottom'])\n"
            "    for sample_id in ids:\n"
            "        w.writerow([sample_id, 10, 10, 30, 30])\n",
            encoding="utf-8",
        )
        out, stdout = infer(
            world,
            capsys,
            "responses.tsv",
            ["--model-command", f"{sys.executable} {script} {{in}} {{out}}"],
        )
        assert "inferred 4 box(es) (external)" in stdout
        assert all(r.box == (10, 10, 30, 30) for r in read_responses(out))
        # The staging directory defaults to a sibling of the output file.
        assert (world.root / "responses.tsv.work" / "requests.tsv").exists()


class TestPostprocess:
    def test_two_identical_folds_snap_to_candidates(self, world, capsys):
        fold0, _ = infer(world, capsys, "fold0.tsv", ["--seed", "0"])
        fold1, _ = infer(world, capsys, "fold1.tsv", ["--seed", "1"])
        out = world.root / "final.tsv"
        stats_path = world.root / "stats.json"
        code, stdout, _ = run(
            capsys,
            [
                "postprocess",
                "--dataset",
                world.dataset,
                "--detections",
                world.detections,
                "--fold",
                str(fold0),
                "--fold",
                str(fold1),
                "--stats",
                str(stats_path),
                "--out",
                str(out),
            ],
        )
        assert code == 0
        assert "fused 2 fold(s) over 4 sample(s); replacement rate 1.000" in stdout
        final = {p.sample_id: p.box for p in corpus.read_predictions(out)}
        assert final == GT
        stats = json.loads(stats_path.read_text(encoding="utf-8"))
        assert stats["replacements"] == 8
        assert stats["sanitize_fallbacks"] == 0
        assert (world.root / "final.tsv.manifest.json").exists()

    def test_fold_missing_a_sample_fails(self, world, capsys):
        fold0, _ = infer(world, capsys, "fold0.tsv")
        truncated = world.root / "short.tsv"
        lines = (world.root / "fold0.tsv").read_text(encoding="utf-8").splitlines()
        truncated.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        code, _, err = run(
            capsys,
            [
                "postprocess",
                "--dataset",
                world.dataset,
                "--detections",
                world.detections,
                "--fold",
                str(fold0),
                "--fold",
                str(truncated),
                "--out",
                str(world.root / "final.tsv"),
            ],
        )
        assert code == 1
        assert "missing from fold prediction files" in err
        assert "s4 (fold 1)" in err


class TestScore:
    def test_perfect_predictions_score_100(self, world, capsys):
        code, stdout, _ = run(
            capsys,
            [
                "score",
                "--predictions",
                world.predictions,
                "--dataset",
                world.dataset,
            ],
        )
        assert code == 0
        assert stdout == "score: 100.0\n"
        # Without --report the command only reads; no manifest appears.
        assert list(world.root.glob("*.manifest.json")) == []

    def test_report_file_and_manifest(self, world, capsys):
        report = world.root / "report.jsonl"
        code, _, _ = run(
            capsys,
            [
                "score",
                "--predictions",
                world.predictions,
                "--dataset",
                world.dataset,
                "--report",
                str(report),
            ],
        )
        assert code == 0
        assert report.exists()
        assert (world.root / "report.jsonl.manifest.json").exists()

    def test_missing_prediction_is_a_data_error(self, world, capsys):
        partial = world.root / "partial.tsv"
        corpus.write_predictions(
            [Prediction(sample_id="s1", box=GT["s1"])], str(partial)
        )
        code, _, err = run(
            capsys,
            ["score", "--predictions", str(partial), "--dataset", world.dataset],
        )
        assert code == 1
        assert "missing prediction" in err
        assert "'s2'" in err


class TestReport:
    def make_report(self, world, capsys, name="report.jsonl"):
        report = world.root / name
        code, _, _ = run(
            capsys,
            [
                "score",
                "--predictions",
                world.predictions,
                "--dataset",
                world.dataset,
                "--report",
                str(report),
            ],
        )
        assert code == 0
        return str(report)

    def test_renders_summary_and_histogram(self, world, capsys):
        report = self.make_report(world, capsys)
        code, stdout, _ = run(capsys, ["report", "--scores", report])
        assert code == 0
        lines = stdout.splitlines()
        assert lines[0] == "samples: 4"
        assert lines[1] == "score: 100.0"
        assert "iou [0.0,0.1) 0" in lines
        assert "iou [0.9,1.0] 4" in lines

    def test_compare_against_itself_is_all_unchanged(self, world, capsys):
        report = self.make_report(world, capsys)
        code, stdout, _ = run(
            capsys, ["report", "--scores", report, "--compare", report]
        )
        assert code == 0
        assert "unchanged: 4" in stdout
        assert "score delta: 0.0" in stdout


PIPELINE_ARGS = ["--folds", "2", "--seed", "3"]


def run_pipeline_cli(world, capsys, run_dir, extra=()):
    return run(
        capsys,
        [
            "pipeline",
            "--run-dir",
            str(run_dir),
            "--dataset",
            world.dataset,
            "--detections",
            world.detections,
            *PIPELINE_ARGS,
            *extra,
        ],
    )


class TestPipeline:
    def test_zero_noise_run_scores_100(self, world, capsys):
        run_dir = world.root / "run1"
        code, stdout, _ = run_pipeline_cli(world, capsys, run_dir)
        assert code == 0
        assert stdout.strip().endswith("score: 100.0")
        for name in (
            "config.json",
            "prompts.tsv",
            "responses_fold0.tsv",
            "responses_fold1.tsv",
            "predictions_fold0.tsv",
            "predictions_fold1.tsv",
            "predictions.tsv",
            "stats.json",
            "report.jsonl",
            "manifest.json",
        ):
            assert (run_dir / name).exists(), name

    def test_reruns_are_byte_identical(self, world, capsys):
        first = world.root / "run1"
        second = world.root / "run2"
        assert run_pipeline_cli(world, capsys, first)[0] == 0
        assert run_pipeline_cli(world, capsys, second)[0] == 0
        for name in (
            "config.json",
            "prompts.tsv",
            "responses_fold0.tsv",
            "predictions.tsv",
            "stats.json",
            "report.jsonl",
        ):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_non_empty_run_dir_needs_force(self, world, capsys):
        run_dir = world.root / "run1"
        assert run_pipeline_cli(world, capsys, run_dir)[0] == 0
        code, _, err = run_pipeline_cli(world, capsys, run_dir)
        assert code == 1
        assert "is not empty (use --force to reuse it)" in err
        assert run_pipeline_cli(world, capsys, run_dir, ["--force"])[0] == 0

    def test_run_dir_must_be_a_directory(self, world, capsys):
        blocker = world.root / "blocker"
        blocker.write_text("", encoding="utf-8")
        code, _, err = run_pipeline_cli(world, capsys, blocker)
        assert code == 1
        assert "not a directory" in err

    def test_skip_postprocess_uses_first_fold(self, world, capsys):
        run_dir = world.root / "run1"
        code, _, _ = run_pipeline_cli(
            world, capsys, run_dir, ["--skip-postprocess"]
        )
        assert code == 0
        assert not (run_dir / "stats.json").exists()
        final = (run_dir / "predictions.tsv").read_text(encoding="utf-8")
        fold0 = (run_dir / "predictions_fold0.tsv").read_text(encoding="utf-8")
        assert final == fold0

    def test_forging_stage_writes_synthetic_artifacts(self, world, capsys):
        run_dir = world.root / "run1"
        code, _, _ = run_pipeline_cli(
            world,
            capsys,
            run_dir,
            [
                "--n-synthetic",
                "2",
                "--pool",
                world.pool,
                "--table",
                world.table,
            ],
        )
        assert code == 0
        forged = corpus.parse_dataset(run_dir / "synthetic.tsv")
        assert len(forged) == 2
        # Evaluation images are firewalled out of the forge pool.
        assert {s.image_url for s in forged}.isdisjoint(
            {f"p{i}.jpg" for i in range(1, 5)}
        )
        assert (run_dir / "forge_report.txt").exists()

    def test_config_file_with_flag_overrides(self, world, capsys):
        config_path = world.root / "config.json"
        config_path.write_text(
            json.dumps(
                {
                    "seed": 3,
                    "folds": 5,
                    "paths": {
                        "dataset": world.dataset,
                        "detections": world.detections,
                    },
                }
            ),
            encoding="utf-8",
        )
        run_dir = world.root / "run1"
        code, stdout, _ = run(
            capsys,
            [
                "pipeline",
                "--config",
                str(config_path),
                "--run-dir",
                str(run_dir),
                "--folds",
                "2",
            ],
        )
        assert code == 0
        saved = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
        assert saved["folds"] == 2  # flag beat the config file
        assert saved["seed"] == 3
        assert not (run_dir / "responses_fold2.tsv").exists()

    def test_missing_dataset_path_is_an_error(self, world, capsys):
        code, _, err = run(
            capsys, ["pipeline", "--run-dir", str(world.root / "run1")]
        )
        assert code == 1
        assert "paths.dataset" in err

    def test_external_model_command(self, world, capsys):
        script = world.root / "fake_model.py"
        script.write_text(
            "import csv, sys\n"
            "with open(sys.argv[1], newline='', encoding='utf-8') as f:\n"
            "    ids = [row[0] for row in list(csv.reader(f, delimiter='\\t'))[1:]]\n"
            "with open(sys.argv[2], 'w', newline='', encoding='utf-8') as f:\n"
            "    w = csv.writer(f, delimiter='\\t', lineterminator='\\n')\n"
            "    w.writerow(['sample_id', 'left', 'top', 'right', 'bottom'])\n"
            "    for sample_id in ids:\n"
            "        w.writerow([sample_id, 10, 10, 30, 30])\n",
            encoding="utf-8",
        )
        run_dir = world.root / "run1"
        code, stdout, _ = run_pipeline_cli(
            world,
            capsys,
            run_dir,
            ["--model-command", f"{sys.executable} {script} {{in}} {{out}}"],
        )
        assert code == 0
        assert (run_dir / "external_fold0" / "requests.tsv").exists()
        assert (run_dir / "external_fold1" / "responses.tsv").exists()
        saved = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
        assert saved["mock"] is False
