"""Cross-lingual tag projection through word alignments.

Target tokens linked one-to-one to a source token inherit its tag as a hard
label. Every other target token receives a soft label: the relative frequency
of tags over the whole source sentence.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .corpus import CorpusError, ParseError, TagSet, iter_blocks


class ProjectionError(CorpusError):
    pass


class AlignmentLink(NamedTuple):
    src: int
    tgt: int


@dataclass(frozen=True)
class Hard:
    tag: int

    def vector(self, k: int) -> np.ndarray:
        v = np.zeros(k)
        v[self.tag] = 1.0
        return v


@dataclass(frozen=True)
class Soft:
    dist: tuple[float, ...]

    def __post_init__(self):
        dist = tuple(float(p) for p in self.dist)
        if any(p < 0 for p in dist):
            raise ProjectionError("soft label has a negative probability")
        if abs(sum(dist) - 1.0) > 1e-9:
            raise ProjectionError(f"soft label sums to {sum(dist)!r}, not 1")
        object.__setattr__(self, "dist", dist)

    def vector(self, k: int) -> np.ndarray:
        if len(self.dist) != k:
            raise ProjectionError(f"soft label has {len(self.dist)} entries, expected {k}")
        return np.array(self.dist)


ProjectedLabel = Hard | Soft


@dataclass(frozen=True)
class ParallelSentence:
    src_tokens: tuple[str, ...]
    src_tags: tuple[int, ...]
    tgt_tokens: tuple[str, ...]
    links: frozenset = field(default_factory=frozenset)
    score: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "src_tokens", tuple(self.src_tokens))
        object.__setattr__(self, "src_tags", tuple(self.src_tags))
        object.__setattr__(self, "tgt_tokens", tuple(self.tgt_tokens))
        links = frozenset(AlignmentLink(*l) for l in self.links)
        object.__setattr__(self, "links", links)
        if len(self.src_tokens) != len(self.src_tags):
            raise ProjectionError("source tokens and tags differ in length")
        ns, nt = len(self.src_tokens), len(self.tgt_tokens)
        for l in links:
            if not (0 <= l.src < ns and 0 <= l.tgt < nt):
                raise ProjectionError(f"alignment link {l.src}-{l.tgt} out of range")


@dataclass(frozen=True)
class ProjectedSentence:
    tokens: tuple[str, ...]
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.tokens:
            raise ProjectionError("projected sentence must contain at least one token")
        if len(self.tokens) != len(self.labels):
            raise ProjectionError("projected sentence needs exactly one label per token")

    def __len__(self):
        return len(self.tokens)

    def targets(self, k: int) -> np.ndarray:
        """Label distributions as a ``(len, k)`` array."""
        out = np.zeros((len(self.labels), k))
        for t, lab in enumerate(self.labels):
            if isinstance(lab, Hard):
                out[t, lab.tag] = 1.0
            else:
                out[t] = lab.vector(k)
        return out


@dataclass
class ProjectedCorpus:
    sentences: list[ProjectedSentence]
    tagset: TagSet

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def token_sequences(self):
        return [s.tokens for s in self.sentences]

    def label_counts(self) -> tuple[int, int]:
        """Return ``(hard, soft)`` label counts."""
        hard = sum(isinstance(l, Hard) for s in self.sentences for l in s.labels)
        return hard, self.token_count - hard


def filter_one_to_one(links: Iterable) -> frozenset:
    links = [AlignmentLink(*l) for l in links]
    src_count = Counter(l.src for l in links)
    tgt_count = Counter(l.tgt for l in links)
    return frozenset(l for l in links if src_count[l.src] == 1 and tgt_count[l.tgt] == 1)


def sentence_tag_distribution(src_tags: Sequence[int], k: int) -> Soft:
    if not src_tags:
        raise ProjectionError("cannot build a tag distribution from an empty source sentence")
    counts = np.bincount(np.asarray(src_tags, dtype=int), minlength=k).astype(float)
    if counts.size != k:
        raise ProjectionError(f"source tag index out of range for tagset of size {k}")
    return Soft(tuple(counts / len(src_tags)))


def project(p: ParallelSentence, k_src: int) -> ProjectedSentence:
    kept = filter_one_to_one(p.links)
    by_tgt = {l.tgt: l.src for l in kept}
    fallback = None
    labels = []
    for t in range(len(p.tgt_tokens)):
        if t in by_tgt:
            labels.append(Hard(p.src_tags[by_tgt[t]]))
        else:
            if fallback is None:
                fallback = sentence_tag_distribution(p.src_tags, k_src)
            labels.append(fallback)
    return ProjectedSentence(p.tgt_tokens, labels)


def project_corpus(sentences: Iterable[ParallelSentence], tagset: TagSet) -> ProjectedCorpus:
    return ProjectedCorpus([project(p, tagset.size) for p in sentences], tagset)


def select_sentences(corpus: Sequence[ParallelSentence], n: int) -> list[ParallelSentence]:
    """Keep the ``n`` best-scoring sentences, preserving corpus order."""
    corpus = list(corpus)
    if n >= len(corpus):
        return corpus
    if n < 0:
        raise ValueError("n must be non-negative")
    missing = [i for i, p in enumerate(corpus) if p.score is None]
    if missing:
        raise ProjectionError(f"sentence {missing[0]} has no alignment score; cannot select top {n}")
    # stable sort keeps earlier sentences ahead on ties
    ranked = sorted(range(len(corpus)), key=lambda i: -corpus[i].score)
    return [corpus[i] for i in sorted(ranked[:n])]


def parse_links(text: str) -> list[AlignmentLink]:
    links = []
    for item in text.split():
        s, sep, t = item.partition("-")
        if not sep:
            raise ValueError(f"bad alignment pair {item!r}")
        links.append(AlignmentLink(int(s), int(t)))
    return links


def read_parallel(src_path, tgt_path, align_path, src_tagset: TagSet,
                  scores_path=None) -> list[ParallelSentence]:
    """Read a parallel bundle.

    ``src_path`` is two-column token/tag text, ``tgt_path`` holds one
    whitespace-tokenised sentence per line, ``align_path`` one line of
    ``i-j`` pairs (0-based source-target) per sentence, and the optional
    ``scores_path`` one real score per line.
    """
    sources = []
    for block in iter_blocks(src_path):
        toks, tags = [], []
        for lineno, fields in block:
            if len(fields) != 2:
                raise ParseError(src_path, lineno, "expected exactly one TAB between token and tag")
            if fields[1] not in src_tagset:
                raise ParseError(src_path, lineno, f"tag {fields[1]!r} is not in the source tagset")
            toks.append(fields[0])
            tags.append(src_tagset.lookup(fields[1]))
        sources.append((toks, tags))

    with open(tgt_path, encoding="utf-8") as f:
        targets = [line.split() for line in f.read().splitlines()]
    with open(align_path, encoding="utf-8") as f:
        aligns = f.read().splitlines()
    scores = None
    if scores_path is not None:
        with open(scores_path, encoding="utf-8") as f:
            scores = [line.strip() for line in f.read().splitlines()]

    n = len(sources)
    for name, items in (("target", targets), ("alignment", aligns), ("score", scores)):
        if items is not None and len(items) != n:
            raise ProjectionError(f"{name} file has {len(items)} lines but source has {n} sentences")

    out = []
    for i, ((toks, tags), tgt) in enumerate(zip(sources, targets)):
        if not tgt:
            raise ParseError(tgt_path, i + 1, "empty target sentence")
        try:
            links = parse_links(aligns[i])
        except ValueError as e:
            raise ParseError(align_path, i + 1, str(e)) from None
        score = None
        if scores is not None:
            try:
                score = float(scores[i])
            except ValueError:
                raise ParseError(scores_path, i + 1, f"bad score {scores[i]!r}") from None
        try:
            out.append(ParallelSentence(toks, tags, tgt, links, score))
        except ProjectionError as e:
            raise ParseError(align_path, i + 1, str(e)) from None
    return out


def format_label(label, tagset: TagSet) -> str:
    if isinstance(label, Hard):
        return tagset.label(label.tag)
    return "|".join(f"{tagset.label(j)}:{p:.6f}" for j, p in enumerate(label.dist) if p > 0)


def parse_label(text: str, tagset: TagSet):
    if text in tagset:
        return Hard(tagset.lookup(text))
    dist = np.zeros(tagset.size)
    for item in text.split("|"):
        tag, sep, prob = item.rpartition(":")
        if not sep or tag not in tagset:
            raise ValueError(f"bad label {text!r}")
        p = float(prob)
        if not np.isfinite(p) or p < 0:
            raise ValueError(f"bad probability in {text!r}")
        dist[tagset.lookup(tag)] += p
    total = dist.sum()
    if total <= 0:
        raise ValueError(f"label {text!r} has no probability mass")
    return Soft(tuple(dist / total))


def write_projected(corpus: ProjectedCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in corpus:
            for tok, lab in zip(s.tokens, s.labels):
                f.write(f"{tok}\t{format_label(lab, corpus.tagset)}\n")
            f.write("\n")


def read_projected(path, tagset: TagSet) -> ProjectedCorpus:
    sentences = []
    for block in iter_blocks(path):
        toks, labels = [], []
        for lineno, fields in block:
            if len(fields) != 2:
                raise ParseError(path, lineno, "expected exactly one TAB between token and label")
            try:
                labels.append(parse_label(fields[1], tagset))
            except (ValueError, ProjectionError) as e:
                raise ParseError(path, lineno, str(e)) from None
            toks.append(fields[0])
        sentences.append(ProjectedSentence(toks, labels))
    return ProjectedCorpus(sentences, tagset)
