"""Tweet tokenization and normalization.

Raw tweet text is scanned into tokens (mentions, URLs, phone numbers and
timestamps are kept atomic), then normalized: Twitter-specific tokens are
replaced with uppercase sentinels, everything else is lowercased, and emoji
runs are split and replaced by their description words.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

import regex

__all__ = [
    "RawTweet",
    "ProcessedTweet",
    "EmojiMap",
    "EmojiMapError",
    "SENTINELS",
    "load_emoji_map",
    "tokenize",
    "tokenize_tagged",
    "token_kind",
    "split_emoji",
    "normalize",
    "preprocess",
]

USERNAME = "USERNAME"
URL = "URL"
PHONENUMBER = "PHONENUMBER"
TIMESTAMP = "TIMESTAMP"
SENTINELS = frozenset({USERNAME, URL, PHONENUMBER, TIMESTAMP})

# Variation selectors, skin-tone modifiers and keycap marks bind to the emoji
# before them; a ZWJ glues the next pictograph into the same emoji.
_EMOJI_MODS = "\ufe0e\ufe0f\U0001F3FB-\U0001F3FF\u20e3"
_EMOJI_UNIT = (
    r"(?:[\U0001F1E6-\U0001F1FF]{2}"
    r"|\p{Extended_Pictographic}[" + _EMOJI_MODS + r"]*"
    "(?:\u200d" r"\p{Extended_Pictographic}[" + _EMOJI_MODS + r"]*)*)"
)
_URL_TAIL = r"""(?:\S*[^\s!?.,;:'"()\[\]{}<>])?"""

_PATTERNS = [
    ("url", regex.compile(r"(?:https?://|www\.|(?<![\w.])t\.co/)" + _URL_TAIL, regex.I)),
    ("mention", regex.compile(r"@\w+")),
    (
        "timestamp",
        regex.compile(
            r"(?<![\w:])(?:[01]?\d|2[0-3]):[0-5]\d(?::[0-5]\d)?"
            r"(?:\s?(?i:[ap]\.m\.|[ap]m))?(?![\w:])"
        ),
    ),
    (
        "phone",
        regex.compile(r"(?<![\w+])\+?(?:\(\d+\)|\d+)(?:[ \-]?(?:\(\d+\)|\d+))*(?!\w)"),
    ),
    ("hashtag", regex.compile(r"#\w+")),
    ("emoji", regex.compile(_EMOJI_UNIT + r"+")),
    ("word", regex.compile(r"\w+(?:['’]\w+)*")),
    ("punct", regex.compile(r"\S")),
]
_SPACE = regex.compile(r"\s+")
_EMOJI_UNIT_RE = regex.compile(_EMOJI_UNIT)
_MIN_PHONE_DIGITS = 7

_SENTINEL_OF_KIND = {
    "url": URL,
    "mention": USERNAME,
    "timestamp": TIMESTAMP,
    "phone": PHONENUMBER,
}


@dataclass(frozen=True)
class RawTweet:
    id: str
    text: str
    dimension: str
    gold: Optional[Union[float, int]] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("tweet id must be non-empty")
        if not self.text:
            raise ValueError(f"tweet {self.id!r} has empty text")


@dataclass(frozen=True)
class ProcessedTweet:
    id: str
    tokens: tuple


class EmojiMapError(ValueError):
    pass


class EmojiMap(Mapping):
    """Read-only mapping from an emoji sequence to its description."""

    def __init__(self, entries: Optional[Mapping[str, str]] = None):
        self._entries = {}
        for key, desc in (entries or {}).items():
            desc = " ".join(desc.lower().split())
            if not key or not desc:
                raise EmojiMapError(f"empty emoji or description for {key!r}")
            self._entries[key] = desc

    def __getitem__(self, key):
        return self._entries[key]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def describe(self, emoji: str) -> Optional[str]:
        desc = self._entries.get(emoji)
        if desc is None and "\ufe0f" in emoji:
            desc = self._entries.get(emoji.replace("\ufe0f", ""))
        return desc


def load_emoji_map(path: Union[str, os.PathLike]) -> EmojiMap:
    """Load a two-column ``emoji<TAB>description`` file (UTF-8, no header)."""
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise EmojiMapError(
                    f"{path}: line {lineno}: expected 2 tab-separated columns, got {len(cols)}"
                )
            emoji, desc = cols[0].strip(), cols[1].strip()
            if not emoji or not desc:
                raise EmojiMapError(f"{path}: line {lineno}: empty emoji or description")
            if emoji in entries:
                raise EmojiMapError(f"{path}: line {lineno}: duplicate emoji {emoji!r}")
            entries[emoji] = desc
    return EmojiMap(entries)


def _scan(text: str) -> Iterator[tuple]:
    pos, end = 0, len(text)
    while pos < end:
        ws = _SPACE.match(text, pos)
        if ws:
            pos = ws.end()
            if pos >= end:
                break
        for kind, pattern in _PATTERNS:
            m = pattern.match(text, pos)
            if m is None or m.end() == pos:
                continue
            if kind == "phone" and sum(c.isdigit() for c in m.group()) < _MIN_PHONE_DIGITS:
                continue
            yield m.group(), kind
            pos = m.end()
            break


def tokenize_tagged(text: str) -> list:
    """Tokenize ``text`` into ``(token, kind)`` pairs.

    Kinds are ``url``, ``mention``, ``timestamp``, ``phone``, ``hashtag``,
    ``emoji`` (a contiguous run), ``word`` and ``punct``.
    """
    return list(_scan(text))


def tokenize(text: str) -> list:
    return [tok for tok, _ in _scan(text)]


def token_kind(token: str) -> str:
    """Classify a single token with the same rules :func:`tokenize` uses."""
    if token in SENTINELS:
        return "sentinel"
    for kind, pattern in _PATTERNS:
        m = pattern.fullmatch(token)
        if m is None:
            continue
        if kind == "phone" and sum(c.isdigit() for c in token) < _MIN_PHONE_DIGITS:
            continue
        return kind
    return "other"


def split_emoji(run: str) -> list:
    return _EMOJI_UNIT_RE.findall(run)


def normalize(tokens: Iterable[str], emoji_map: Optional[EmojiMap] = None) -> list:
    out = []
    for tok in tokens:
        kind = token_kind(tok)
        if kind == "sentinel":
            out.append(tok)
        elif kind in _SENTINEL_OF_KIND:
            out.append(_SENTINEL_OF_KIND[kind])
        elif kind == "emoji":
            for unit in split_emoji(tok):
                desc = emoji_map.describe(unit) if emoji_map is not None else None
                if desc is None:
                    out.append(unit)
                else:
                    out.extend(desc.split())
        else:
            low = tok.lower()
            out.extend(low.split())
    return out


def preprocess(
    tweets: Union[RawTweet, Sequence[RawTweet]], emoji_map: Optional[EmojiMap] = None
):
    """Tokenize and normalize one tweet or a sequence of tweets."""
    if isinstance(tweets, RawTweet):
        return ProcessedTweet(tweets.id, tuple(normalize(tokenize(tweets.text), emoji_map)))
    return [preprocess(t, emoji_map) for t in tweets]
