"""Shared text normalization and token-boundary helpers.

All matching in this package is token-boundary-delimited: a pattern hit
counts only when the characters adjacent to it (if any) are non-alphanumeric.
Boundaries are defined through :func:`is_boundary_char`; every consumer of
the rule goes through these helpers so the semantics stay in one place.
"""

from __future__ import annotations

import re
import unicodedata

# Alphanumeric runs; everything else is a token boundary.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
# \w includes the underscore, which is not alphanumeric; exclude it so the
# token definition agrees with str.isalnum().
_WORD_OR_UNDERSCORE = re.compile(r"\w", re.UNICODE)


def nfc(text: str) -> str:
    """Normalize to NFC. Applied once, at ingest time."""
    return unicodedata.normalize("NFC", text)


def lowercase(text: str) -> str:
    """Case normalization used for dictionaries and article text alike."""
    return text.lower()


def is_punctuation(ch: str) -> bool:
    """Unicode general categories P* and S* count as punctuation."""
    return unicodedata.category(ch)[0] in ("P", "S")


def strip_punctuation(text: str) -> str:
    """Replace each punctuation character with a space and collapse runs.

    This is the "no punct" normalization: lowercasing is the caller's job.
    """
    chars = [" " if is_punctuation(ch) else ch for ch in text]
    return " ".join("".join(chars).split())


def tokens(text: str) -> list[str]:
    """Alphanumeric runs of ``text``, in order, duplicates kept."""
    return _TOKEN_RE.findall(text)


def unique_tokens(text: str) -> list[str]:
    """Alphanumeric runs of ``text``, first occurrence order, deduplicated."""
    seen: dict[str, None] = {}
    for tok in _TOKEN_RE.findall(text):
        seen.setdefault(tok)
    return list(seen)


def is_boundary_char(ch: str) -> bool:
    return not ch.isalnum()


def occurs_at_token_boundary(text: str, pattern: str) -> bool:
    """True iff ``pattern`` occurs in ``text`` delimited by token boundaries.

    A boundary is the start/end of the text or any non-alphanumeric
    character. The pattern itself is matched literally.
    """
    if not pattern:
        return False
    start = text.find(pattern)
    while start != -1:
        end = start + len(pattern)
        left_ok = start == 0 or is_boundary_char(text[start - 1])
        right_ok = end == len(text) or is_boundary_char(text[end])
        if left_ok and right_ok:
            return True
        start = text.find(pattern, start + 1)
    return False
