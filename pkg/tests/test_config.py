"""Tests for run configuration objects, config files, and run manifests."""

import json

import pytest

from groundbox.config import (
    RunConfig,
    file_digest,
    load_config,
    save_config,
    write_manifest,
)
from groundbox.errors import FormatError
from groundbox.postprocess import FUSE_THEN_REPLACE, REPLACE_THEN_FUSE
from groundbox.prompting import TemplateId


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert config.seed == 0
        assert config.template is TemplateId.T2_WHICH_REGION
        assert config.replace_threshold == 0.6
        assert config.fuse_threshold == 0.5
        assert config.fuse_order == REPLACE_THEN_FUSE
        assert config.folds == 3
        assert config.mock is True

    def test_template_accepts_string_names(self):
        assert RunConfig(template="t4").template is TemplateId.T4_VG_CANONICAL
        base = RunConfig(template=TemplateId.T1_VERBATIM)
        assert base.template is TemplateId.T1_VERBATIM

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            ({"replace_threshold": 0.0}, "replace_threshold"),
            ({"replace_threshold": 1.0}, "replace_threshold"),
            ({"fuse_threshold": -0.5}, "fuse_threshold"),
            ({"fuse_order": "diagonal"}, "fuse_order"),
            ({"folds": 0}, "folds"),
            ({"noise": -0.1}, "noise"),
            ({"n_synthetic": -1}, "n_synthetic"),
            ({"dims_check": "loud"}, "dims_check"),
            ({"jobs": 0}, "jobs"),
            ({"template": "t9"}, "unknown template"),
        ],
    )
    def test_validation(self, kwargs, message):
        with pytest.raises(Exception, match=message):
            RunConfig(**kwargs)

    def test_non_mock_requires_command(self):
        with pytest.raises(FormatError, match="requires a model command"):
            RunConfig(mock=False)
        config = RunConfig(mock=False, command="model {in} {out}")
        assert config.command == "model {in} {out}"

    def test_merged_overrides_win(self):
        base = RunConfig(seed=1, folds=3, noise=0.1)
        merged = base.merged(seed=9, noise=None, folds=5)
        assert merged.seed == 9
        assert merged.folds == 5
        # None means "flag not given": the base value stays.
        assert merged.noise == 0.1
        assert base.seed == 1

    def test_merged_unions_paths(self):
        base = RunConfig(paths={"dataset": "d.tsv", "pool": "p.tsv"})
        merged = base.merged(paths={"pool": "other.tsv", "table": "t.tsv"})
        assert merged.paths == {
            "dataset": "d.tsv",
            "pool": "other.tsv",
            "table": "t.tsv",
        }

    def test_merged_validates_result(self):
        with pytest.raises(FormatError, match="folds"):
            RunConfig().merged(folds=0)

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(FormatError, match=r"unknown config key.*\['sead'\]"):
            RunConfig.from_dict({"sead": 3})

    def test_to_dict_serializes_template_as_value(self):
        data = RunConfig(template="t3").to_dict()
        assert data["template"] == "t3"
        assert RunConfig.from_dict(data) == RunConfig(template="t3")


class TestConfigFile:
    def test_save_load_round_trip(self, tmp_path):
        config = RunConfig(
            seed=11,
            paths={"dataset": "d.tsv"},
            template="t4",
            fuse_order=FUSE_THEN_REPLACE,
            noise=0.25,
            n_synthetic=100,
        )
        path = tmp_path / "config.json"
        save_config(config, path)
        assert load_config(path) == config

    def test_saved_file_is_stable_json(self, tmp_path):
        path = tmp_path / "config.json"
        save_config(RunConfig(), path)
        text = path.read_text(encoding="utf-8")
        assert text.endswith("\n")
        assert json.loads(text)["template"] == "t2"
        save_config(RunConfig(), path)
        assert path.read_text(encoding="utf-8") == text

    def test_invalid_json_is_reported(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(FormatError, match="invalid config JSON"):
            load_config(path)

    def test_non_object_root_is_reported(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(FormatError, match="root must be an object"):
            load_config(path)


class TestManifest:
    def test_digest_matches_known_sha256(self, tmp_path):
        path = tmp_path / "data.bin"
        path.write_bytes(b"abc")
        assert file_digest(path) == (
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        )

    def test_manifest_records_args_and_input_digests(self, tmp_path):
        data = tmp_path / "dataset.tsv"
        data.write_text("sample_id\ts1\n", encoding="utf-8")
        dest = tmp_path / "out.manifest.json"
        write_manifest(dest, "score", {"seed": 3, "dataset": str(data)}, [data])
        manifest = json.loads(dest.read_text(encoding="utf-8"))
        assert manifest["tool"] == "groundbox"
        assert manifest["command"] == "score"
        assert manifest["args"] == {"seed": 3, "dataset": str(data)}
        assert manifest["inputs"] == {str(data): file_digest(data)}

    def test_manifest_is_byte_stable(self, tmp_path):
        data = tmp_path / "dataset.tsv"
        data.write_text("sample_id\ts1\n", encoding="utf-8")
        dest = tmp_path / "out.manifest.json"
        write_manifest(dest, "score", {"b": 1, "a": 2}, [data])
        first = dest.read_bytes()
        write_manifest(dest, "score", {"a": 2, "b": 1}, [data])
        assert dest.read_bytes() == first
        # No timestamps anywhere: the payload depends only on the inputs.
        assert b"time" not in first.lower()

    def test_same_name_different_directories_stay_distinct(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        first = tmp_path / "a" / "data.tsv"
        second = tmp_path / "b" / "data.tsv"
        first.write_text("one\n", encoding="utf-8")
        second.write_text("two\n", encoding="utf-8")
        dest = tmp_path / "out.manifest.json"
        write_manifest(dest, "score", {}, [first, second])
        manifest = json.loads(dest.read_text(encoding="utf-8"))
        assert set(manifest["inputs"]) == {str(first), str(second)}
