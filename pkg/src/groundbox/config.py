"""Run configuration and reproducibility manifests.

A run is fully described by a RunConfig: one seed feeds every random
choice, and every tunable lives in one serializable object. Command-line
flags override config-file values so a saved config can be replayed
verbatim or tweaked one knob at a time.

Manifests record what a command ran with: the resolved arguments and a
content digest of every input file. They carry no timestamps, so a
repeated run writes byte-identical manifests.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

from groundbox import __version__
from groundbox.errors import FormatError
from groundbox.postprocess import FUSE_THEN_REPLACE, REPLACE_THEN_FUSE
from groundbox.prompting import DEFAULT_TEMPLATE, TemplateId

DIMS_CHECK_MODES = ("off", "warn", "strict")


@dataclass(slots=True)
class RunConfig:
    seed: int = 0
    paths: dict[str, str] = field(default_factory=dict)
    template: TemplateId = DEFAULT_TEMPLATE
    replace_threshold: float = 0.6
    fuse_threshold: float = 0.5
    fuse_order: str = REPLACE_THEN_FUSE
    folds: int = 3
    noise: float = 0.0
    mock: bool = True
    command: str = ""
    n_synthetic: int = 0
    skip_postprocess: bool = False
    dims_check: str = "off"
    jobs: int = 4

    def __post_init__(self):
        if isinstance(self.template, str):
            self.template = TemplateId.parse(self.template)
        for name in ("replace_threshold", "fuse_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise FormatError(f"{name} must be in (0, 1), got {value}")
        if self.fuse_order not in (REPLACE_THEN_FUSE, FUSE_THEN_REPLACE):
            raise FormatError(f"unknown fuse_order {self.fuse_order!r}")
        if self.folds < 1:
            raise FormatError(f"folds must be >= 1, got {self.folds}")
        if self.noise < 0:
            raise FormatError(f"noise must be >= 0, got {self.noise}")
        if self.n_synthetic < 0:
            raise FormatError(f"n_synthetic must be >= 0, got {self.n_synthetic}")
        if self.dims_check not in DIMS_CHECK_MODES:
            raise FormatError(f"unknown dims_check mode {self.dims_check!r}")
        if self.jobs < 1:
            raise FormatError(f"jobs must be >= 1, got {self.jobs}")
        if not self.mock and not self.command:
            raise FormatError("a non-mock run requires a model command")

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["template"] = self.template.value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise FormatError(f"unknown config key(s): {unknown}")
        return cls(**dict(data))

    def merged(self, **overrides: Any) -> "RunConfig":
        """New config with every non-None override applied (flags win)."""
        data = dataclasses.asdict(self)
        data["template"] = self.template
        for key, value in overrides.items():
            if value is not None:
                if key == "paths":
                    data["paths"] = {**data["paths"], **value}
                else:
                    data[key] = value
        return RunConfig(**data)


def load_config(source: Union[str, Path]) -> RunConfig:
    text = Path(source).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid config JSON in {source}: {exc}") from None
    if not isinstance(data, dict):
        raise FormatError(f"config root must be an object, got {type(data).__name__}")
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, dest: Union[str, Path]) -> None:
    Path(dest).write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def file_digest(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    dest: Union[str, Path],
    command: str,
    args: Mapping[str, Any],
    inputs: Sequence[Union[str, Path]] = (),
) -> None:
    """Record what a run saw: args and input digests, never timestamps."""
    manifest = {
        "tool": "groundbox",
        "version": __version__,
        "command": command,
        "args": {k: args[k] for k in sorted(args)},
        "inputs": {str(p): file_digest(p) for p in inputs},
    }
    Path(dest).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
