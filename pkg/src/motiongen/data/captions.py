"""Caption templates and the fixed, versioned vocabulary.

Captions follow "the <size> <color> <shape> <action-phrase>", lowercase,
whitespace-tokenized. The vocabulary is frozen at build time; bumping it
means bumping VOCAB_VERSION so checkpoints can refuse mismatched token ids.
"""

from __future__ import annotations

VOCAB_VERSION = 1

PAD_TOKEN = "<pad>"
PAD_ID = 0

VOCABULARY: tuple[str, ...] = (
    PAD_TOKEN,
    "the", "small", "large",
    "red", "green", "blue", "yellow",
    "circle", "square", "triangle",
    "slides", "to", "left", "right", "up", "down",
    "rotates", "in", "place",
    "grows", "larger",
)

_TOKEN_TO_ID = {tok: i for i, tok in enumerate(VOCABULARY)}

ACTION_PHRASES = {
    "slide_left": "slides to the left",
    "slide_right": "slides to the right",
    "slide_up": "slides up",
    "slide_down": "slides down",
    "rotate": "rotates in place",
    "grow": "grows larger",
}


def vocab_size() -> int:
    return len(VOCABULARY)


def caption_for_action(size: str, color: str, shape: str, action_kind: str) -> str:
    phrase = ACTION_PHRASES.get(action_kind)
    if phrase is None:
        raise ValueError(f"unknown action kind {action_kind!r}")
    return f"the {size} {color} {shape} {phrase}"


def encode_caption(text: str) -> list[int]:
    """Whitespace tokenization against the fixed vocabulary; unknown words are errors."""
    ids = []
    for word in text.lower().split():
        if word not in _TOKEN_TO_ID:
            raise ValueError(f"word {word!r} is not in the caption vocabulary")
        ids.append(_TOKEN_TO_ID[word])
    return ids


def decode_caption(ids: list[int] | tuple[int, ...]) -> str:
    words = []
    for i in ids:
        if not 0 <= i < len(VOCABULARY):
            raise ValueError(f"token id {i} outside vocabulary of size {len(VOCABULARY)}")
        if i == PAD_ID:
            continue
        words.append(VOCABULARY[i])
    return " ".join(words)
