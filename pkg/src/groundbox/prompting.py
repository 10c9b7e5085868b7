"""Prompt construction for the grounding model.

Four templates turn a question (and optionally a pseudo-answer) into the
text the model sees. T2, the default, replaces the question's first word
with "which region", casting any question into region-pointing form. T4
is the canonical grounding phrasing ``which region does the text "..."
describe?``. All templates are pure functions.
"""

from __future__ import annotations

import enum

from groundbox.errors import GroundboxError


class TemplateId(enum.Enum):
    """The four prompt templates; T2 is the adopted default."""

    T1_VERBATIM = "t1"
    T2_WHICH_REGION = "t2"
    T3_ANSWER_SUFFIX = "t3"
    T4_VG_CANONICAL = "t4"

    @classmethod
    def parse(cls, name: str) -> "TemplateId":
        key = name.strip().lower()
        for template in cls:
            if key in (template.value, template.name.lower()):
                return template
        raise GroundboxError(
            f"unknown template {name!r}; choose from "
            f"{', '.join(t.value for t in cls)}"
        )


DEFAULT_TEMPLATE = TemplateId.T2_WHICH_REGION


def first_token(question: str) -> tuple[str, str]:
    """Split a question into its first whitespace-delimited token and rest.

    Leading whitespace is dropped; punctuation attached to the token stays
    with it ("Who?" is one token). The rest is returned verbatim past the
    first whitespace run, empty for single-token questions.
    """
    if not question.strip():
        raise GroundboxError("question is empty")
    parts = question.split(None, 1)
    return (parts[0], parts[1]) if len(parts) == 2 else (parts[0], "")


def render(
    question: str,
    pseudo_answer: str | None = None,
    template: TemplateId = DEFAULT_TEMPLATE,
) -> str:
    """Render the prompt for one question under the chosen template.

    T1 returns the question unchanged. T2 swaps the first token for
    "which region" (lowercase), keeping the rest of the question as is;
    single-word questions become exactly "which region". T3 appends
    " answer: <pseudo_answer>" and requires a pseudo-answer. T4 wraps the
    pseudo-answer (or, absent one, the whole question) in the canonical
    grounding form.
    """
    if not question.strip():
        raise GroundboxError("question is empty")
    if template is TemplateId.T1_VERBATIM:
        return question
    if template is TemplateId.T2_WHICH_REGION:
        _, rest = first_token(question)
        return f"which region {rest}" if rest else "which region"
    if template is TemplateId.T3_ANSWER_SUFFIX:
        if pseudo_answer is None:
            raise GroundboxError(
                "template t3 requires a pseudo-answer for every sample"
            )
        return f"{question} answer: {pseudo_answer}"
    if template is TemplateId.T4_VG_CANONICAL:
        text = pseudo_answer if pseudo_answer is not None else question
        return f'which region does the text "{text}" describe?'
    raise GroundboxError(f"unknown template {template!r}")
