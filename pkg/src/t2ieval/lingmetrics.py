"""Prompt-difficulty metrics: word and syllable statistics, Flesch-Kincaid
grade level, Yngve depth over constituency trees, and LM perplexity.

Tokenization is whitespace splitting with punctuation stripped from token
edges; sentence boundaries are runs of ``.!?`` with a floor of one sentence.
"""

from __future__ import annotations

import math
import re
import string
import subprocess
from dataclasses import dataclass
from typing import Sequence

from .errors import ScoringUnsupportedError, TreeParseError
from .gateway import MllmClient

VOWELS = frozenset("aeiouy")

PERPLEXITY_PREFIX = "There's an image of a"

# Common hiatus words the contiguous-vowel-group rule undercounts.
_SYLLABLE_EXCEPTIONS = {
    "area": 3,
    "areas": 3,
    "being": 2,
    "buying": 2,
    "create": 2,
    "created": 3,
    "crying": 2,
    "diet": 2,
    "doing": 2,
    "drying": 2,
    "flying": 2,
    "frying": 2,
    "going": 2,
    "idea": 3,
    "ideas": 3,
    "lion": 2,
    "lions": 2,
    "piano": 3,
    "playing": 2,
    "poem": 2,
    "poet": 2,
    "quiet": 2,
    "riot": 2,
    "saying": 2,
    "science": 2,
    "seeing": 2,
    "triangle": 3,
    "trying": 2,
    "violet": 3,
}

_EDGE_PUNCT = string.punctuation + "“”‘’"


def words(text: str) -> list[str]:
    """Whitespace tokens with punctuation stripped off the edges."""
    out = []
    for token in text.split():
        token = token.strip(_EDGE_PUNCT)
        if token:
            out.append(token)
    return out


def sentence_count(text: str) -> int:
    segments = re.split(r"[.!?]+", text)
    count = sum(1 for s in segments if re.search(r"\w", s))
    return max(count, 1)


def count_syllables(word: str, warnings: list[str] | None = None) -> int:
    """Heuristic syllable count.

    Contiguous vowel groups (a e i o u y) are counted, a trailing silent 'e'
    is subtracted unless that would leave zero, and a consonant + 'le' ending
    keeps its 'e'.  A small lexicon of hiatus words overrides the group rule.
    """
    if not word:
        raise ValueError("word must be nonempty")
    cleaned = "".join(ch for ch in word.lower() if ch.isalpha())
    if not cleaned:
        if warnings is not None:
            warnings.append(f"non-alphabetic word counted as one syllable: {word!r}")
        return 1
    if cleaned in _SYLLABLE_EXCEPTIONS:
        return _SYLLABLE_EXCEPTIONS[cleaned]
    groups = len(re.findall("[aeiouy]+", cleaned))
    if cleaned.endswith("e"):
        le_syllable = (
            cleaned.endswith("le") and len(cleaned) >= 3 and cleaned[-3] not in VOWELS
        )
        if not le_syllable:
            groups -= 1
    return max(groups, 1)


def flesch_kincaid(text: str) -> float:
    """Grade level: 0.39 * words/sentences + 11.8 * syllables/words - 15.59."""
    tokens = words(text)
    if not tokens:
        raise ValueError("text contains no words")
    n_words = len(tokens)
    n_sentences = sentence_count(text)
    n_syllables = sum(count_syllables(t) for t in tokens)
    return 0.39 * (n_words / n_sentences) + 11.8 * (n_syllables / n_words) - 15.59


@dataclass(frozen=True)
class ConstituencyTree:
    """Labeled ordered tree; a node is a leaf exactly when it has a token."""

    label: str
    children: tuple["ConstituencyTree", ...] = ()
    token: str | None = None

    def __post_init__(self) -> None:
        if (self.token is None) == (len(self.children) == 0):
            raise TreeParseError("a node is either a leaf with a token or has children")

    @property
    def is_leaf(self) -> bool:
        return self.token is not None

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.token]  # type: ignore[list-item]
        out: list[str] = []
        for child in self.children:
            out.extend(child.leaves())
        return out


def leaf(token: str, label: str = "") -> ConstituencyTree:
    return ConstituencyTree(label=label, token=token)


def node(label: str, children: Sequence[ConstituencyTree]) -> ConstituencyTree:
    return ConstituencyTree(label=label, children=tuple(children))


_TREE_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def parse_bracketed_tree(text: str) -> ConstituencyTree:
    """Parse Penn-style bracketing: "(LABEL child child ...)".

    Leaves appear either as "(POS token)" or as bare tokens inside a node.
    """
    tokens = _TREE_TOKEN_RE.findall(text)
    if not tokens:
        raise TreeParseError("empty tree text")
    tree, rest = _parse_node(tokens, 0)
    if rest != len(tokens):
        raise TreeParseError(f"trailing content after tree: {tokens[rest:]!r}")
    return tree


def _parse_node(tokens: list[str], i: int) -> tuple[ConstituencyTree, int]:
    if tokens[i] == ")":
        raise TreeParseError("unexpected ')'")
    if tokens[i] != "(":
        # A bare atom at this level is a leaf.
        return leaf(tokens[i]), i + 1
    i += 1
    if i >= len(tokens) or tokens[i] in "()":
        raise TreeParseError("node without a label")
    label = tokens[i]
    i += 1
    items: list[tuple[bool, object]] = []  # (is_atom, atom-or-tree)
    while True:
        if i >= len(tokens):
            raise TreeParseError("unbalanced brackets: missing ')'")
        if tokens[i] == ")":
            i += 1
            break
        if tokens[i] == "(":
            child, i = _parse_node(tokens, i)
            items.append((False, child))
        else:
            items.append((True, tokens[i]))
            i += 1
    if not items:
        raise TreeParseError(f"empty node ({label})")
    if len(items) == 1 and items[0][0]:
        return leaf(items[0][1], label=label), i  # type: ignore[arg-type]
    children = [
        leaf(item) if is_atom else item  # type: ignore[arg-type]
        for is_atom, item in items
    ]
    return node(label, children), i


def serialize_tree(tree: ConstituencyTree) -> str:
    if tree.is_leaf:
        if tree.label:
            return f"({tree.label} {tree.token})"
        return tree.token  # type: ignore[return-value]
    inner = " ".join(serialize_tree(c) for c in tree.children)
    return f"({tree.label} {inner})"


def yngve_score(tree: ConstituencyTree) -> float:
    """Mean over leaves of the summed right-sibling counts along each
    root-to-leaf path.  Interior labels carry no weight."""
    depths: list[int] = []

    def walk(t: ConstituencyTree, acc: int) -> None:
        if t.is_leaf:
            depths.append(acc)
            return
        fanout = len(t.children)
        for position, child in enumerate(t.children):
            walk(child, acc + (fanout - 1 - position))

    walk(tree, 0)
    return sum(depths) / len(depths)


def fallback_tree(tokens: Sequence[str]) -> ConstituencyTree:
    """Uniform right-branching binary tree, for when no parser is configured."""
    if not tokens:
        raise ValueError("tokens must be nonempty")
    if len(tokens) == 1:
        return leaf(tokens[0])
    return node("X", (leaf(tokens[0]), fallback_tree(tokens[1:])))


class ShellParser:
    """Shell-out to an external constituency parser.

    Contract: one sentence per input line on stdin, one bracketed tree per
    output line on stdout.
    """

    def __init__(self, command: Sequence[str], timeout: float = 60.0) -> None:
        if not command:
            raise ValueError("parser command must be nonempty")
        self.command = tuple(command)
        self.timeout = timeout

    def parse(self, sentence: str) -> ConstituencyTree:
        result = subprocess.run(
            self.command,
            input=sentence.replace("\n", " ") + "\n",
            capture_output=True,
            text=True,
            timeout=self.timeout,
        )
        if result.returncode != 0:
            raise TreeParseError(
                f"parser exited {result.returncode}: {result.stderr.strip()[:200]}"
            )
        for line in result.stdout.splitlines():
            if line.strip():
                return parse_bracketed_tree(line.strip())
        raise TreeParseError("parser produced no output line")


def perplexity(client: MllmClient, text: str) -> float:
    """exp(-mean token log-probability) of `text`, conditioned on the fixed
    image-caption prefix."""
    if not text:
        raise ValueError("text must be nonempty")
    total, count = client.token_logprobs_sum(PERPLEXITY_PREFIX, " " + text)
    return math.exp(-total / count)


@dataclass(frozen=True)
class DifficultyProfile:
    """Per-prompt difficulty metrics; optional fields stay absent when their
    inputs (a parse tree, a scoring endpoint) are unavailable."""

    word_count: int
    syllable_count: int
    avg_syllables_per_word: float
    avg_word_length: float
    flesch_kincaid: float
    yngve: float | None = None
    perplexity: float | None = None
    yngve_approximate: bool = False

    METRIC_NAMES = (
        "word_count",
        "syllable_count",
        "avg_syllables_per_word",
        "avg_word_length",
        "flesch_kincaid",
        "yngve",
        "perplexity",
    )

    def metric(self, name: str) -> float | None:
        if name not in self.METRIC_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def to_dict(self) -> dict:
        out = {
            "word_count": self.word_count,
            "syllable_count": self.syllable_count,
            "avg_syllables_per_word": self.avg_syllables_per_word,
            "avg_word_length": self.avg_word_length,
            "flesch_kincaid": self.flesch_kincaid,
        }
        if self.yngve is not None:
            out["yngve"] = self.yngve
            out["yngve_approximate"] = self.yngve_approximate
        if self.perplexity is not None:
            out["perplexity"] = self.perplexity
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "DifficultyProfile":
        return cls(
            word_count=raw["word_count"],
            syllable_count=raw["syllable_count"],
            avg_syllables_per_word=raw["avg_syllables_per_word"],
            avg_word_length=raw["avg_word_length"],
            flesch_kincaid=raw["flesch_kincaid"],
            yngve=raw.get("yngve"),
            perplexity=raw.get("perplexity"),
            yngve_approximate=raw.get("yngve_approximate", False),
        )


def difficulty_profile(
    text: str,
    tree: ConstituencyTree | None = None,
    scorer: MllmClient | None = None,
    tree_is_approximate: bool = False,
    warnings: list[str] | None = None,
) -> DifficultyProfile:
    """Bundle every available metric for one prompt."""
    tokens = words(text)
    if not tokens:
        raise ValueError("text contains no words")
    n_words = len(tokens)
    n_syllables = sum(count_syllables(t, warnings) for t in tokens)
    total_chars = sum(len(t) for t in tokens)

    ppl: float | None = None
    if scorer is not None:
        try:
            ppl = perplexity(scorer, text)
        except ScoringUnsupportedError as exc:
            if warnings is not None:
                warnings.append(f"perplexity unavailable: {exc}")

    return DifficultyProfile(
        word_count=n_words,
        syllable_count=n_syllables,
        avg_syllables_per_word=n_syllables / n_words,
        avg_word_length=total_chars / n_words,
        flesch_kincaid=flesch_kincaid(text),
        yngve=yngve_score(tree) if tree is not None else None,
        perplexity=ppl,
        yngve_approximate=tree_is_approximate if tree is not None else False,
    )
