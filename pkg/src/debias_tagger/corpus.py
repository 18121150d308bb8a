"""Tagsets, vocabularies and two-column gold corpora.

A gold corpus file is UTF-8 text with one ``token<TAB>tag`` pair per line and
a blank line after each sentence.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

UNIVERSAL_TAGS = (
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET",
    "ADP", "NUM", "CONJ", "PRT", ".", "X",
)

UNK = "<unk>"


class CorpusError(Exception):
    """Base class for malformed or inconsistent corpus data."""


class ParseError(CorpusError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class TagsetError(CorpusError):
    pass


class MappingError(CorpusError):
    pass


class InsufficientDataError(CorpusError):
    pass


class TagSet:
    """Ordered, duplicate-free list of tag labels."""

    def __init__(self, labels: Iterable[str]):
        labels = list(labels)
        if not labels:
            raise TagsetError("tagset must contain at least one label")
        index = {}
        for i, label in enumerate(labels):
            if not isinstance(label, str) or not label:
                raise TagsetError(f"invalid tag label {label!r}")
            if label in index:
                raise TagsetError(f"duplicate tag label {label!r}")
            index[label] = i
        self.labels = tuple(labels)
        self._index = index

    @classmethod
    def universal(cls) -> "TagSet":
        return cls(UNIVERSAL_TAGS)

    @classmethod
    def read(cls, path) -> "TagSet":
        with open(path, encoding="utf-8") as f:
            return cls(line.strip() for line in f if line.strip())

    def write(self, path) -> None:
        Path(path).write_text("".join(f"{label}\n" for label in self.labels), encoding="utf-8")

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other):
        return isinstance(other, TagSet) and self.labels == other.labels

    def __hash__(self):
        return hash(self.labels)

    def __repr__(self):
        return f"TagSet({list(self.labels)!r})"

    def lookup(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise TagsetError(f"tag {label!r} is not in the tagset") from None

    def label(self, index: int) -> str:
        return self.labels[index]


class Vocabulary:
    """Token to id map with the unknown-word entry fixed at id 0."""

    def __init__(self, tokens: Iterable[str] = (), min_count: int = 1):
        self.min_count = min_count
        self.tokens = [UNK]
        self._ids = {UNK: 0}
        for tok in tokens:
            if tok not in self._ids:
                self._ids[tok] = len(self.tokens)
                self.tokens.append(tok)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._ids

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def lookup(self, token: str) -> int:
        return self._ids.get(token, 0)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._ids.get(t, 0) for t in tokens]


def build_vocab(corpora: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary over token sequences.

    Tokens occurring at least ``min_count`` times receive ids in order of first
    occurrence; everything else maps to the unknown-word id.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    order = []
    for seq in corpora:
        for tok in seq:
            if tok not in counts:
                order.append(tok)
            counts[tok] += 1
    return Vocabulary((t for t in order if counts[t] >= min_count), min_count=min_count)


@dataclass(frozen=True)
class GoldSentence:
    tokens: tuple[str, ...]
    tags: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "tags", tuple(int(t) for t in self.tags))
        if not self.tokens:
            raise CorpusError("sentence must contain at least one token")
        if len(self.tokens) != len(self.tags):
            raise CorpusError(
                f"sentence has {len(self.tokens)} tokens but {len(self.tags)} tags")

    def __len__(self):
        return len(self.tokens)


@dataclass
class GoldCorpus:
    sentences: list[GoldSentence]
    tagset: TagSet = field(default_factory=TagSet.universal)

    def __post_init__(self):
        self.sentences = list(self.sentences)
        k = self.tagset.size
        for s in self.sentences:
            for t in s.tags:
                if not 0 <= t < k:
                    raise TagsetError(f"tag index {t} out of range for tagset of size {k}")

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def token_sequences(self) -> list[tuple[str, ...]]:
        return [s.tokens for s in self.sentences]

    def tag_sequences(self) -> list[tuple[int, ...]]:
        return [s.tags for s in self.sentences]

    def subset(self, sentences) -> "GoldCorpus":
        return GoldCorpus(list(sentences), self.tagset)


def iter_blocks(path):
    """Yield ``(lineno, [(lineno, fields), ...])`` per blank-line separated block.

    Fields are split on TAB; the caller validates their count.
    """
    block = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                if block:
                    yield block
                    block = []
                continue
            block.append((lineno, line.split("\t")))
    if block:
        yield block


def read_two_column(path, tagset: TagSet) -> GoldCorpus:
    sentences = []
    for block in iter_blocks(path):
        tokens, tags = [], []
        for lineno, fields in block:
            if len(fields) != 2:
                raise ParseError(path, lineno, "expected exactly one TAB between token and tag")
            tok, label = fields
            if not tok:
                raise ParseError(path, lineno, "empty token")
            if label not in tagset:
                raise TagsetError(f"{path}:{lineno}: tag {label!r} is not in the tagset")
            tokens.append(tok)
            tags.append(tagset.lookup(label))
        sentences.append(GoldSentence(tokens, tags))
    return GoldCorpus(sentences, tagset)


def write_two_column(corpus: GoldCorpus, path) -> None:
    labels = corpus.tagset.labels
    with open(path, "w", encoding="utf-8") as f:
        for s in corpus:
            for tok, tag in zip(s.tokens, s.tags):
                f.write(f"{tok}\t{labels[tag]}\n")
            f.write("\n")


def read_mapping(path) -> dict[str, str]:
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(path, lineno, "expected fine<TAB>universal")
            mapping[fields[0]] = fields[1]
    return mapping


def map_to_universal(corpus: GoldCorpus, mapping: Mapping[str, str],
                     target: TagSet | None = None) -> GoldCorpus:
    """Relabel a corpus through a fine-to-coarse tag table."""
    target = target or TagSet.universal()
    fine = corpus.tagset.labels
    table = {}
    for s in corpus:
        for t in s.tags:
            if t in table:
                continue
            label = fine[t]
            if label not in mapping:
                raise MappingError(f"no universal mapping for tag {label!r}")
            table[t] = target.lookup(mapping[label])
    sentences = [GoldSentence(s.tokens, [table[t] for t in s.tags]) for s in corpus]
    return GoldCorpus(sentences, target)


def take_first_tokens(corpus: GoldCorpus, n: int) -> tuple[GoldCorpus, GoldCorpus]:
    """Split off the shortest whole-sentence prefix holding at least ``n`` tokens."""
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0
    for i, s in enumerate(corpus.sentences):
        total += len(s)
        if total >= n:
            return corpus.subset(corpus.sentences[:i + 1]), corpus.subset(corpus.sentences[i + 1:])
    raise InsufficientDataError(f"corpus has {total} tokens, fewer than the {n} requested")


def split_dev_test(rest: GoldCorpus) -> tuple[GoldCorpus, GoldCorpus]:
    if not rest.sentences:
        raise InsufficientDataError("nothing left to split into dev and test")
    half = len(rest.sentences) // 2
    return rest.subset(rest.sentences[:half]), rest.subset(rest.sentences[half:])
