"""Versioned prompt templates, pinned by the golden-trace tests."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def template(name: str) -> str:
    """Raw text of a prompt template bundled with the package."""
    return (
        resources.files("vadagent").joinpath(f"prompts/{name}.txt").read_text()
    )


def rules_block(rules: list[str] | None) -> str:
    """Numbered rules list under the fixed header; empty string when none.

    The same block prefixes the direct prompt and the refutation turn-1
    message, so both branches see identical guidance.
    """
    if not rules:
        return ""
    header = template("rules_header").rstrip("\n")
    lines = [header]
    for i, text in enumerate(rules, start=1):
        lines.append(f"{i}. {text}")
    return "\n".join(lines) + "\n\n"


def category_note(category: str) -> str:
    return f' (category: "{category}")' if category else ""
