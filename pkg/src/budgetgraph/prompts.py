"""Prompt templates, loaded from the bundled ``prompts.json`` resource."""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources

from .graph import EMPTY_SECTION


_PLACEHOLDER = re.compile(r"\{(\w+)\}")


@lru_cache(maxsize=1)
def templates() -> dict[str, str]:
    text = resources.files(__package__).joinpath("prompts.json").read_text(encoding="utf-8")
    return json.loads(text)


def fill(template: str, **fields: str) -> str:
    # single pass, so braces inside substituted values are never re-expanded
    return _PLACEHOLDER.sub(lambda m: fields.get(m.group(1), m.group(0)), template)


def _or_none(text: str) -> str:
    return text if text and text.strip() else EMPTY_SECTION


def decompose(content: str, is_root: bool, retry: bool = False) -> tuple[str, str]:
    t = templates()
    user = fill(t["decompose_user"], content=content, is_root="true" if is_root else "false")
    if retry:
        user += t["decompose_retry_suffix"]
    return t["decompose_system"], user


def direct(packet: str) -> tuple[str, str]:
    t = templates()
    return t["direct_system"], fill(t["direct_user"], packet=packet)


def cot(packet: str) -> tuple[str, str]:
    t = templates()
    return t["cot_system"], fill(t["cot_user"], packet=packet)


def subtask(packet: str) -> tuple[str, str]:
    t = templates()
    return t["subtask_system"], fill(t["subtask_user"], packet=packet)


def hint_lines(subtasks) -> str:
    lines = []
    for i, st in enumerate(subtasks, start=1):
        line = f"{i}. {st.content}"
        if st.evidence and st.evidence.strip():
            line += f" (evidence: {st.evidence})"
        lines.append(line)
    return "\n".join(lines)


def fallback(question: str, summary: str, subtasks) -> tuple[str, str]:
    t = templates()
    user = fill(
        t["fallback_user"],
        question=question,
        summary=_or_none(summary),
        hint_lines=hint_lines(subtasks),
    )
    return t["fallback_system"], user


def synthesis(question: str, result_lines: list[str]) -> tuple[str, str]:
    t = templates()
    body = "\n".join(result_lines) if result_lines else EMPTY_SECTION
    return t["synthesis_system"], fill(t["synthesis_user"], question=question, result_lines=body)


def judge(prediction: str, reference: str) -> tuple[str, str]:
    t = templates()
    return t["judge_system"], fill(t["judge_user"], prediction=prediction, reference=reference)
