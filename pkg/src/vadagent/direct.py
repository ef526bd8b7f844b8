"""Single-call direct anomaly scorer, in JSON-confidence and first-token
logit forms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .backend import (
    Backend,
    CallKey,
    CapabilityError,
    ChatMessage,
    StructuredParseError,
    parse_structured_block,
)
from .imaging import ImageResolver
from .manifest import ItemView
from .prompts import category_note, rules_block, template

YES_WORD = "yes"
NO_WORD = "no"


@dataclass(frozen=True)
class DirectResult:
    score: float
    form: str  # "json" | "logit"
    raw_label: Optional[str] = None
    raw_confidence: Optional[float] = None
    parse_ok: bool = True


def _build_messages(
    item: ItemView,
    resolver: ImageResolver,
    rules_context: Optional[str],
    user_template: str,
) -> list[ChatMessage]:
    refs = [resolver.load(r) for r in item.reference_refs]
    query = resolver.load(item.query_ref)
    user_text = template(user_template).format(
        rules_block=rules_context or "",
        n_refs=len(refs),
        category_note=category_note(item.category),
    )
    return [
        ChatMessage("system", template("direct_system").strip()),
        ChatMessage("user", user_text, images=tuple(refs + [query])),
    ]


def score_json_direct(
    backend: Backend,
    item_view: ItemView,
    rules_context: Optional[str] = None,
    resolver: Optional[ImageResolver] = None,
) -> DirectResult:
    """Ask for {image_label, confidence}; score = c if anomalous else 1 - c.

    Unparseable completions fall back to 0.5 with ``parse_ok=False``;
    confidences outside [0, 1] are clamped and flagged the same way.
    """
    if not isinstance(item_view, ItemView):
        raise TypeError("direct scorer accepts the agent view of an item only")
    messages = _build_messages(item_view, resolver, rules_context, "direct_json_user")
    result = backend.complete(messages, key=CallKey(item_view.id, "direct", 0))
    try:
        obj = parse_structured_block(
            result.text, {"image_label": str, "confidence": (int, float)}
        )
    except StructuredParseError:
        return DirectResult(score=0.5, form="json", parse_ok=False)
    label = str(obj["image_label"]).strip().lower()
    confidence = float(obj["confidence"])
    parse_ok = True
    if not 0.0 <= confidence <= 1.0:
        confidence = min(1.0, max(0.0, confidence))
        parse_ok = False
    score = confidence if label == "anomalous" else 1.0 - confidence
    return DirectResult(
        score=score,
        form="json",
        raw_label=label,
        raw_confidence=confidence,
        parse_ok=parse_ok,
    )


def logit_softmax(logprob_yes: float, logprob_no: float) -> float:
    """exp(ly) / (exp(ly) + exp(ln)), computed stably."""
    m = max(logprob_yes, logprob_no)
    ey = math.exp(logprob_yes - m)
    en = math.exp(logprob_no - m)
    return ey / (ey + en)


def _alias_logprob(logprobs: dict[str, float], word: str) -> Optional[float]:
    # Accept case and leading/trailing-space variants of the yes/no token.
    best = None
    for token, lp in logprobs.items():
        if token.strip().lower() == word:
            if best is None or lp > best:
                best = lp
    return best


def score_logit_direct(
    backend: Backend,
    item_view: ItemView,
    rules_context: Optional[str] = None,
    resolver: Optional[ImageResolver] = None,
) -> DirectResult:
    """Yes/no question scored from first-token log-probabilities.

    Requires a backend that exposes first-token logprobs. When one of the
    two tokens is missing from the returned top set, its logprob is taken
    as (min observed logprob - 10); when both are missing or no logprobs
    come back, the score falls back to 0.5 with ``parse_ok=False``.
    """
    if not isinstance(item_view, ItemView):
        raise TypeError("direct scorer accepts the agent view of an item only")
    if not backend.capabilities.supports_first_token_logprobs:
        raise CapabilityError(
            "backend does not expose first-token logprobs; use the JSON form"
        )
    messages = _build_messages(item_view, resolver, rules_context, "direct_logit_user")
    result = backend.complete(
        messages, want_logprobs=True, key=CallKey(item_view.id, "direct", 0)
    )
    logprobs = result.first_token_logprobs
    if not logprobs:
        return DirectResult(score=0.5, form="logit", parse_ok=False)
    ly = _alias_logprob(logprobs, YES_WORD)
    ln = _alias_logprob(logprobs, NO_WORD)
    if ly is None and ln is None:
        return DirectResult(score=0.5, form="logit", parse_ok=False)
    floor = min(logprobs.values()) - 10.0
    if ly is None:
        ly = floor
    if ln is None:
        ln = floor
    return DirectResult(score=logit_softmax(ly, ln), form="logit")
