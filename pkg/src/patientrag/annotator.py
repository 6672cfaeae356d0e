"""Turns an unstructured transcript into the three-category patient context.

The categories are: history and symptoms, executed diagnostics, and prescribed
medications with further instructions. Model replies are parsed by heading;
heading wording varies between model runs, so matching goes through an alias
list that config can extend.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .corpus import SOURCE_PATIENT_TRANSCRIPT, Document
from .errors import AnnotationError, AnnotationParseError
from .llm import ChatProvider
from .templates import TemplateStore

CATEGORY_HISTORY = "history_and_symptoms"
CATEGORY_DIAGNOSTICS = "executed_diagnostics"
CATEGORY_MEDICATIONS = "medications_and_instructions"
CATEGORIES = (CATEGORY_HISTORY, CATEGORY_DIAGNOSTICS, CATEGORY_MEDICATIONS)

# Canonical headings used when serializing; aliases cover the wording variants
# models actually produce.
CANONICAL_HEADINGS = {
    CATEGORY_HISTORY: "Patient history and symptoms",
    CATEGORY_DIAGNOSTICS: "Executed diagnostics",
    CATEGORY_MEDICATIONS: "Prescribed medications and further instructions",
}

DEFAULT_HEADING_ALIASES: dict[str, tuple[str, ...]] = {
    CATEGORY_HISTORY: (
        "patient history and symptoms",
        "patient history and symptom",
        "history and symptoms",
        "patient history",
    ),
    CATEGORY_DIAGNOSTICS: (
        "executed diagnostics",
        "diagnostics",
    ),
    CATEGORY_MEDICATIONS: (
        "prescribed medications and further instructions",
        "prescribed medications & instruction",
        "prescribed medications & instructions",
        "prescribed medications and instructions",
        "medications and further instructions",
        "prescribed medications",
    ),
}

EMPTY_SECTION_MARKER = "Not stated in transcript."

# Strips list/emphasis decoration so "**Executed diagnostics:**" still matches.
_DECORATION_RE = re.compile(r"^[\s#*\->•]+|[\s*]+$")


@dataclass
class AnnotatedPatientContext:
    patient_id: str
    history_and_symptoms: str
    executed_diagnostics: str
    medications_and_instructions: str
    source_document_id: str = ""
    annotation_model: str = ""
    created_at: str = ""
    raw_reply: str = ""
    specialty: str = ""

    def sections(self) -> dict[str, str]:
        return {
            CATEGORY_HISTORY: self.history_and_symptoms,
            CATEGORY_DIAGNOSTICS: self.executed_diagnostics,
            CATEGORY_MEDICATIONS: self.medications_and_instructions,
        }

    def serialize(self) -> str:
        """Canonical headed-text layout; parse_annotation inverts it losslessly."""
        blocks = []
        for category in CATEGORIES:
            heading = CANONICAL_HEADINGS[category]
            body = self.sections()[category].strip() or EMPTY_SECTION_MARKER
            blocks.append(f"{heading}:\n{body}")
        return "\n\n".join(blocks) + "\n"


def _match_heading(line: str, aliases: dict[str, tuple[str, ...]]) -> tuple[str, str] | None:
    """Return (category, trailing_content) when the line is a category heading."""
    stripped = _DECORATION_RE.sub("", line).strip()
    if not stripped:
        return None
    lowered = stripped.lower()
    for category, names in aliases.items():
        for name in names:
            if lowered.startswith(name):
                rest = stripped[len(name):].lstrip()
                if rest.startswith(":"):
                    return category, rest[1:].lstrip("* \t")
                if rest == "":
                    return category, ""
    return None


def parse_annotation(reply: str, aliases: dict[str, tuple[str, ...]] | None = None) -> dict[str, str]:
    """Split a model reply into the three category texts by heading.

    Headings match case-insensitively against the alias list and may appear in
    any order; content after the colon on the heading line belongs to that
    section. Missing categories raise, naming what was absent.
    """
    aliases = aliases or DEFAULT_HEADING_ALIASES
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in reply.splitlines():
        match = _match_heading(line, aliases)
        if match is not None:
            current, inline = match
            sections.setdefault(current, [])
            if inline:
                sections[current].append(inline)
            continue
        if current is not None:
            sections[current].append(line)
    missing = [CANONICAL_HEADINGS[c] for c in CATEGORIES if c not in sections]
    if missing:
        raise AnnotationParseError(missing)
    result = {}
    for category in CATEGORIES:
        body = "\n".join(sections[category]).strip()
        result[category] = body or EMPTY_SECTION_MARKER
    return result


def annotate_transcript(
    doc: Document,
    chat: ChatProvider,
    templates: TemplateStore,
    *,
    aliases: dict[str, tuple[str, ...]] | None = None,
    created_at: str = "",
) -> AnnotatedPatientContext:
    """Zero-shot annotation of a transcript into the three categories.

    Generation runs at temperature 0. If the reply does not parse, one
    corrective re-prompt with explicit heading instructions is attempted; a
    second failure raises with the raw reply attached for audit.
    """
    if doc.source != SOURCE_PATIENT_TRANSCRIPT:
        raise ValueError(f"annotation expects a patient transcript, got source {doc.source!r}")
    if not doc.body.strip():
        raise ValueError("cannot annotate an empty transcript")
    prompt = templates.render("annotation", transcript=doc.body)
    reply = chat.complete([{"role": "user", "content": prompt}], temperature=0.0)
    try:
        sections = parse_annotation(reply, aliases)
    except AnnotationParseError:
        retry_prompt = templates.render("annotation_retry", prompt=prompt)
        reply = chat.complete([{"role": "user", "content": retry_prompt}], temperature=0.0)
        try:
            sections = parse_annotation(reply, aliases)
        except AnnotationParseError as exc:
            raise AnnotationError(
                f"annotation failed after corrective re-prompt: {exc}", raw_reply=reply
            ) from exc
    return AnnotatedPatientContext(
        patient_id=doc.metadata["patient_id"],
        history_and_symptoms=sections[CATEGORY_HISTORY],
        executed_diagnostics=sections[CATEGORY_DIAGNOSTICS],
        medications_and_instructions=sections[CATEGORY_MEDICATIONS],
        source_document_id=doc.id,
        annotation_model=chat.model_name,
        created_at=created_at,
        raw_reply=reply,
        specialty=doc.metadata.get("specialty", ""),
    )


def context_filename(patient_id: str) -> str:
    return f"{patient_id}.context.txt"


def load_context_file(path, patient_id: str) -> AnnotatedPatientContext:
    text = path.read_text(encoding="utf-8")
    sections = parse_annotation(text)
    return AnnotatedPatientContext(
        patient_id=patient_id,
        history_and_symptoms=sections[CATEGORY_HISTORY],
        executed_diagnostics=sections[CATEGORY_DIAGNOSTICS],
        medications_and_instructions=sections[CATEGORY_MEDICATIONS],
    )
