"""Prompt templates are operator-editable files, not string constants.

Defaults ship inside the package; a config-supplied directory overrides any
subset of them by file name.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import ConfigError

TEMPLATE_NAMES = (
    "annotation",
    "annotation_retry",
    "compression",
    "response",
    "question_gen",
    "claims_decompose",
    "claims_classify",
)


class TemplateStore:
    def __init__(self, override_dir: str | Path | None = None):
        self._templates: dict[str, str] = {}
        for name in TEMPLATE_NAMES:
            ref = resources.files("patientrag.prompts").joinpath(f"{name}.txt")
            self._templates[name] = ref.read_text(encoding="utf-8")
        if override_dir is not None:
            override = Path(override_dir)
            if not override.is_dir():
                raise ConfigError(f"prompt template directory not found: {override}")
            for path in sorted(override.glob("*.txt")):
                self._templates[path.stem] = path.read_text(encoding="utf-8")

    def raw(self, name: str) -> str:
        try:
            return self._templates[name]
        except KeyError:
            raise ConfigError(f"unknown prompt template {name!r}") from None

    def render(self, name: str, **values: str) -> str:
        try:
            return self.raw(name).format(**values)
        except (KeyError, IndexError) as exc:
            raise ConfigError(f"template {name!r} is missing a placeholder: {exc}") from exc
