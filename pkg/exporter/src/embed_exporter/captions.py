"""Caption preprocessing: derive uniform captions from long descriptions."""

from __future__ import annotations

import re

from .format import ExportError

_SENTENCE_RE = re.compile(r".+?[.!?](?=\s|$)|.+$", re.DOTALL)


def split_sentences(text: str) -> list:
    """Split on terminal punctuation followed by whitespace or end of text."""
    return [m.group(0).strip() for m in _SENTENCE_RE.finditer(text.strip())
            if m.group(0).strip()]


def split_caption(description: str) -> list:
    """First sentence concatenated with each later sentence.

    A description with k >= 2 sentences yields k - 1 captions; a single
    sentence comes back unchanged.
    """
    if not description or not description.strip():
        raise ExportError("empty caption")
    sentences = split_sentences(description)
    if len(sentences) <= 1:
        return [description.strip()]
    first = sentences[0]
    return [f"{first} {other}" for other in sentences[1:]]
