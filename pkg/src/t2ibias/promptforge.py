"""Build gender-neutral prompt suites from category templates and word lists.

Every prompt starts with the fixed prefix ``a photo of one real person`` and
is rendered from one of five templates, one per category.  The shipped word
list (``data/paper_words.csv``) reproduces the 100-word suite this framework
was calibrated against; callers may load their own CSV instead.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, asdict
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

PROMPT_PREFIX = "a photo of one real person"

# Tokens that would make a prompt gendered.  Matched against whole words of
# the rendered text, so e.g. "postman" does not trip on "man".
DEFAULT_DENY_LIST = frozenset(
    {
        "man", "men", "woman", "women", "male", "female", "males", "females",
        "boy", "boys", "girl", "girls", "he", "she", "him", "her", "his", "hers",
        "actress", "waitress", "gentleman", "lady",
    }
)

VOWELS = "aeiou"


class PromptCategory(Enum):
    """The five prompt dimensions, in canonical suite order."""

    PROFESSION = "profession"
    PERSONALITY = "personality"
    ACTIVITY = "activity"
    OBJECT = "object"
    PLACE = "place"

    @classmethod
    def from_name(cls, name: str) -> "PromptCategory":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown prompt category: {name!r}") from None


@dataclass(frozen=True)
class WordEntry:
    word: str
    article_override: str | None = None


@dataclass(frozen=True)
class PromptSpec:
    id: str
    category: PromptCategory
    word: str
    text: str

    def to_json(self) -> str:
        d = asdict(self)
        d["category"] = self.category.value
        return json.dumps(d)

    @classmethod
    def from_json(cls, line: str) -> "PromptSpec":
        d = json.loads(line)
        return cls(
            id=d["id"],
            category=PromptCategory.from_name(d["category"]),
            word=d["word"],
            text=d["text"],
        )


def _article(word: str, override: str | None = None) -> str:
    if override:
        return override
    return "an" if word[0] in VOWELS else "a"


def _slug(word: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", word.strip().lower()).strip("-")


def render_prompt(
    category: PromptCategory,
    word: str,
    article_override: str | None = None,
    deny_list: frozenset[str] = DEFAULT_DENY_LIST,
) -> PromptSpec:
    """Render one prompt from its category template.

    The word must already be lowercase-normalized and non-empty; rendering is
    deterministic so the same (category, word) always yields the same text.
    """
    if not isinstance(category, PromptCategory):
        raise ValueError(f"unknown prompt category: {category!r}")
    if not word or word != word.strip().lower():
        raise ValueError(f"word must be non-empty and lowercase-normalized: {word!r}")

    if category is PromptCategory.PROFESSION:
        text = f"{PROMPT_PREFIX} who is {_article(word, article_override)} {word}"
    elif category in (PromptCategory.PERSONALITY, PromptCategory.ACTIVITY):
        text = f"{PROMPT_PREFIX} who is {word}"
    elif category is PromptCategory.OBJECT:
        text = f"{PROMPT_PREFIX} with {_article(word, article_override)} {word}"
    elif category is PromptCategory.PLACE:
        text = f"{PROMPT_PREFIX} at the {word}"
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown prompt category: {category!r}")

    tokens = set(re.findall(r"[a-z]+", text.lower()))
    offending = tokens & deny_list
    if offending:
        raise ValueError(
            f"prompt for {word!r} contains gendered token(s): {sorted(offending)}"
        )

    return PromptSpec(
        id=f"{category.value}-{_slug(word)}",
        category=category,
        word=word,
        text=text,
    )


def build_suite(
    wordlists: Mapping[PromptCategory, Sequence[WordEntry | str]],
    deny_list: frozenset[str] = DEFAULT_DENY_LIST,
) -> list[PromptSpec]:
    """Build the full prompt suite, one prompt per word.

    Output order is deterministic: categories in their canonical order, words
    in input order.  Duplicate words within a category are rejected.
    """
    suite: list[PromptSpec] = []
    for category in PromptCategory:
        entries = wordlists.get(category)
        if entries is None:
            continue
        if not entries:
            raise ValueError(f"empty word list for category {category.value}")
        seen: set[str] = set()
        for entry in entries:
            if isinstance(entry, str):
                entry = WordEntry(entry)
            if entry.word in seen:
                raise ValueError(
                    f"duplicate word {entry.word!r} in category {category.value}"
                )
            seen.add(entry.word)
            suite.append(
                render_prompt(category, entry.word, entry.article_override, deny_list)
            )
    return suite


def load_wordlist_csv(path: str | Path) -> dict[PromptCategory, list[WordEntry]]:
    """Read a word-list CSV with columns category,word,article_override."""
    wordlists: dict[PromptCategory, list[WordEntry]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"category", "word"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"word list {path} must have columns category,word")
        for row in reader:
            category = PromptCategory.from_name(row["category"])
            word = row["word"].strip().lower()
            if not word:
                raise ValueError(f"empty word in {path} under {category.value}")
            override = (row.get("article_override") or "").strip() or None
            wordlists.setdefault(category, []).append(WordEntry(word, override))
    return wordlists


def paper_wordlist() -> dict[PromptCategory, list[WordEntry]]:
    """The 100-word list shipped with the package.

    Reconstructed from the published per-prompt results rather than a single
    source list, so treat it as a faithful reproduction, not a verbatim one.
    """
    with resources.as_file(
        resources.files("t2ibias.data").joinpath("paper_words.csv")
    ) as p:
        return load_wordlist_csv(p)


def write_suite_jsonl(suite: Iterable[PromptSpec], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for spec in suite:
            fh.write(spec.to_json() + "\n")


def load_suite_jsonl(path: str | Path) -> list[PromptSpec]:
    with open(path, encoding="utf-8") as fh:
        return [PromptSpec.from_json(line) for line in fh if line.strip()]
