"""Token sequences, the three edit operations, and prompt alignment.

A Prompt is an immutable value: every edit returns a fresh instance. Token
embeddings are supplied by a vocabulary object (see generator.Vocabulary);
this module never builds them itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import DegenerateEmbedding, InvalidEdit, InvalidPrompt, OutOfRange

WEIGHT_MIN = -2.0
WEIGHT_MAX = 2.0

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class Token:
    """One prompt word: stable id, surface text, unit embedding."""

    id: int
    surface: str
    embedding: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=np.float64)
        object.__setattr__(self, "embedding", emb)
        if abs(np.linalg.norm(emb) - 1.0) > _NORM_TOL:
            raise DegenerateEmbedding(f"token {self.surface!r} embedding not unit norm")

    def __eq__(self, other):
        return (
            isinstance(other, Token)
            and self.id == other.id
            and self.surface == other.surface
            and np.array_equal(self.embedding, other.embedding)
        )

    def __hash__(self):
        return hash((self.id, self.surface))


class VocabularyLike(Protocol):
    def token(self, surface: str) -> Token: ...


@dataclass(frozen=True)
class Prompt:
    tokens: tuple[Token, ...]
    weights: np.ndarray

    def __post_init__(self):
        tokens = tuple(self.tokens)
        weights = np.array(self.weights, dtype=np.float64)
        if len(tokens) < 1:
            raise InvalidPrompt("prompt needs at least one token")
        if weights.shape != (len(tokens),):
            raise InvalidPrompt("one weight per token required")
        if not np.all(np.isfinite(weights)):
            raise InvalidPrompt("non-finite prompt weight")
        if np.any(weights < WEIGHT_MIN) or np.any(weights > WEIGHT_MAX):
            raise OutOfRange(f"prompt weights must lie in [{WEIGHT_MIN}, {WEIGHT_MAX}]")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "weights", weights)
        weights.setflags(write=False)

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return (
            isinstance(other, Prompt)
            and self.tokens == other.tokens
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash(self.tokens)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.surfaces)

    def to_json(self) -> list[dict]:
        return [
            {"surface": t.surface, "weight": float(w)}
            for t, w in zip(self.tokens, self.weights)
        ]

    @staticmethod
    def from_json(entries: Sequence[dict], vocab: VocabularyLike) -> "Prompt":
        if not entries:
            raise InvalidPrompt("empty prompt serialization")
        tokens = tuple(vocab.token(str(e["surface"])) for e in entries)
        weights = np.array([float(e["weight"]) for e in entries])
        return Prompt(tokens, weights)


def tokenize(text: str, vocab: VocabularyLike) -> Prompt:
    """Whitespace tokenization; every word resolves to a deterministic Token."""
    words = text.split()
    if not words:
        raise InvalidPrompt("prompt text is empty")
    tokens = tuple(vocab.token(w) for w in words)
    return Prompt(tokens, np.ones(len(tokens)))


# ------------------------------------------------------------------ edit ops


@dataclass(frozen=True)
class WordSwap:
    index: int
    new: Token

    kind = "word_swap"

    def to_json(self) -> dict:
        return {"type": self.kind, "index": self.index, "new": self.new.surface}


@dataclass(frozen=True)
class AddPhrase:
    position: int
    tokens: tuple[Token, ...]

    kind = "add_phrase"

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise InvalidEdit("add-phrase needs at least one token")

    def to_json(self) -> dict:
        return {
            "type": self.kind,
            "position": self.position,
            "words": [t.surface for t in self.tokens],
        }


@dataclass(frozen=True)
class Reweight:
    index: int
    scale: float

    kind = "reweight"

    def __post_init__(self):
        if not (WEIGHT_MIN <= self.scale <= WEIGHT_MAX):
            raise OutOfRange(f"scale {self.scale} outside [{WEIGHT_MIN}, {WEIGHT_MAX}]")

    def to_json(self) -> dict:
        return {"type": self.kind, "index": self.index, "scale": float(self.scale)}


EditOp = WordSwap | AddPhrase | Reweight


def edit_from_json(data: dict, vocab: VocabularyLike) -> EditOp:
    kind = data.get("type")
    if kind == "word_swap":
        return WordSwap(int(data["index"]), vocab.token(str(data["new"])))
    if kind == "add_phrase":
        words = [str(w) for w in data["words"]]
        return AddPhrase(int(data["position"]), tuple(vocab.token(w) for w in words))
    if kind == "reweight":
        return Reweight(int(data["index"]), float(data["scale"]))
    raise InvalidEdit(f"unknown edit type {kind!r}")


def apply_edit(p: Prompt, e: EditOp) -> Prompt:
    """Apply one edit, returning a new prompt; the input is never mutated."""
    if isinstance(e, WordSwap):
        if not (0 <= e.index < len(p)):
            raise InvalidEdit(f"swap index {e.index} out of bounds for n={len(p)}")
        tokens = list(p.tokens)
        tokens[e.index] = e.new
        return Prompt(tuple(tokens), p.weights.copy())
    if isinstance(e, AddPhrase):
        if not (0 <= e.position <= len(p)):
            raise InvalidEdit(f"insert position {e.position} out of bounds for n={len(p)}")
        tokens = p.tokens[: e.position] + e.tokens + p.tokens[e.position :]
        weights = np.concatenate(
            [p.weights[: e.position], np.ones(len(e.tokens)), p.weights[e.position :]]
        )
        return Prompt(tokens, weights)
    if isinstance(e, Reweight):
        if not (0 <= e.index < len(p)):
            raise InvalidEdit(f"reweight index {e.index} out of bounds for n={len(p)}")
        weights = p.weights.copy()
        weights[e.index] = e.scale
        return Prompt(p.tokens, weights)
    raise InvalidEdit(f"unsupported edit {type(e).__name__}")


# ----------------------------------------------------------------- alignment


@dataclass(frozen=True)
class AlignmentMap:
    """Maps each new-prompt index to an old-prompt index, or None for fresh tokens.

    Non-None entries are strictly increasing, which gives injectivity and
    order preservation at once.
    """

    entries: tuple[Optional[int], ...]
    n_old: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        prev = -1
        for j, a in enumerate(self.entries):
            if a is None:
                continue
            if not (0 <= a < self.n_old):
                raise InvalidEdit(f"alignment entry {a} out of old-prompt bounds")
            if a <= prev:
                raise InvalidEdit("alignment must be injective and order-preserving")
            prev = a
    def __len__(self):
        return len(self.entries)

    @property
    def is_identity(self) -> bool:
        return self.n_old == len(self.entries) and all(
            a == j for j, a in enumerate(self.entries)
        )

    def to_json(self) -> dict:
        return {"n_old": self.n_old, "entries": list(self.entries)}


def compute_alignment(old: Prompt, new: Prompt) -> AlignmentMap:
    """Longest-common-subsequence match over token ids, leftmost matches first."""
    a = [t.id for t in old.tokens]
    b = [t.id for t in new.tokens]
    n, m = len(a), len(b)
    # lcs[i][j] = LCS length of a[i:], b[j:]
    lcs = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                lcs[i, j] = lcs[i + 1, j + 1] + 1
            else:
                lcs[i, j] = max(lcs[i + 1, j], lcs[i, j + 1])
    entries: list[Optional[int]] = [None] * m
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j] and lcs[i, j] == lcs[i + 1, j + 1] + 1:
            entries[j] = i
            i += 1
            j += 1
        elif lcs[i + 1, j] >= lcs[i, j + 1]:
            i += 1
        else:
            j += 1
    return AlignmentMap(tuple(entries), n_old=n)


def prompt_embedding(p: Prompt) -> np.ndarray:
    """Unit-normalized weighted mean of token embeddings.

    Negative weights are clamped to zero for pooling only; the signed values
    still drive attention scaling elsewhere.
    """
    w = np.maximum(p.weights, 0.0)
    pooled = w @ np.stack([t.embedding for t in p.tokens])
    norm = np.linalg.norm(pooled)
    if norm < 1e-12:
        raise DegenerateEmbedding("pooled prompt embedding is zero")
    return pooled / norm
