"""Corpus ingestion: vocabularies, tagsets, integer coding and OOV bookkeeping.

Input conventions: unlabeled corpora are UTF-8 text with one pre-tokenized
sentence per line (single-space separated); labeled corpora are CoNLL-style
``form<TAB>tag`` lines with blank lines between sentences.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

UNK_FORM = "<unk>"

# Coarse 12-tag inventory used as the default tagset.
UNIVERSAL_TAGS = (
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET",
    "ADP", "NUM", "CONJ", "PRT", ".", "X",
)


class CorpusError(ValueError):
    """Raised for malformed or empty corpus input."""


@dataclass
class Vocabulary:
    """Bijective word-type/id tables with per-id counts and a shared UNK slot.

    Ids are assigned by decreasing corpus count with lexicographic tie-break;
    id 0 is reserved for UNK so the mapping is stable under thresholding.
    """

    type_to_id: dict[str, int]
    id_to_type: list[str]
    counts: np.ndarray
    unk_id: int = 0

    @property
    def V(self) -> int:
        return len(self.id_to_type)

    def id_of(self, form: str) -> int:
        return self.type_to_id.get(form, self.unk_id)

    def __contains__(self, form: str) -> bool:
        return form in self.type_to_id and self.type_to_id[form] != self.unk_id

    def __len__(self) -> int:
        return len(self.id_to_type)


@dataclass
class TokenSequence:
    """One sentence as word ids, optionally retaining the surface forms."""

    ids: np.ndarray
    raw: tuple[str, ...] | None = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.ndim != 1 or len(self.ids) == 0:
            raise CorpusError("token sequence must be a non-empty 1-d id list")
        if self.raw is not None and len(self.raw) != len(self.ids):
            raise CorpusError("raw forms and ids differ in length")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class LabeledSequence:
    """A token sequence with per-token tag ids and a domain marker."""

    tokens: TokenSequence
    tags: np.ndarray
    domain_label: str = "source"

    def __post_init__(self):
        self.tags = np.asarray(self.tags, dtype=np.int64)
        if len(self.tags) != len(self.tokens):
            raise CorpusError("tags and tokens differ in length")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Tagset:
    """Bijection between tag names and ids."""

    id_to_tag: tuple[str, ...]
    tag_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.tag_to_id = {t: i for i, t in enumerate(self.id_to_tag)}
        if len(self.tag_to_id) != len(self.id_to_tag):
            raise CorpusError("duplicate tag names in tagset")

    @property
    def T(self) -> int:
        return len(self.id_to_tag)


def default_tagset() -> Tagset:
    return Tagset(UNIVERSAL_TAGS)


def build_vocabulary(corpus_stream: Iterable[Sequence[str]],
                     min_count: int = 1,
                     lowercase: bool = False) -> Vocabulary:
    """Count word types over a token stream and assign ids.

    Types with count >= min_count get distinct ids in decreasing-count order
    (ties broken lexicographically); everything else is folded into UNK, whose
    count records how many training tokens were replaced.
    """
    if min_count < 1:
        raise CorpusError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    n_sentences = 0
    for sent in corpus_stream:
        n_sentences += 1
        if lowercase:
            counts.update(t.lower() for t in sent)
        else:
            counts.update(sent)
    if n_sentences == 0 or not counts:
        raise CorpusError("empty corpus")

    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    dropped_tokens = sum(c for t, c in counts.items() if c < min_count)

    id_to_type = [UNK_FORM] + kept
    type_to_id = {t: i for i, t in enumerate(id_to_type)}
    id_counts = np.zeros(len(id_to_type), dtype=np.int64)
    id_counts[0] = dropped_tokens
    for t in kept:
        id_counts[type_to_id[t]] = counts[t]
    return Vocabulary(type_to_id=type_to_id, id_to_type=id_to_type,
                      counts=id_counts, unk_id=0)


def encode(vocab: Vocabulary, tokens: Sequence[str],
           lowercase: bool = False) -> TokenSequence:
    """Map surface forms to ids; unregistered forms go to UNK."""
    if len(tokens) == 0:
        raise CorpusError("cannot encode an empty token list")
    forms = [t.lower() for t in tokens] if lowercase else list(tokens)
    ids = np.fromiter((vocab.id_of(t) for t in forms), dtype=np.int64,
                      count=len(forms))
    return TokenSequence(ids=ids, raw=tuple(tokens))


def decode(vocab: Vocabulary, seq: TokenSequence) -> list[str]:
    """Inverse of encode on in-vocabulary ids."""
    return [vocab.id_to_type[i] for i in seq.ids]


def oov_mask(train_vocab: Vocabulary, seq: TokenSequence) -> list[bool]:
    """Flag tokens whose surface form never occurred in the labeled training data.

    Uses retained surface forms when available (a thresholded vocabulary maps
    rare-but-seen forms to UNK, which is not the same thing as unseen);
    otherwise falls back to the UNK id.
    """
    if seq.raw is not None:
        return [form not in train_vocab.type_to_id for form in seq.raw]
    return [int(i) == train_vocab.unk_id for i in seq.ids]


# ---------------------------------------------------------------------------
# file formats

def read_sentences(path: str | Path) -> Iterator[list[str]]:
    """Yield token lists from a one-sentence-per-line text file."""
    with open(path, encoding="utf-8") as f:
        for line in f:
            toks = line.split()
            if toks:
                yield toks


def write_sentences(path: str | Path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sent in sentences:
            f.write(" ".join(sent) + "\n")


def read_conll(path: str | Path) -> list[tuple[list[str], list[str]]]:
    """Read (forms, tags) sentences from a form<TAB>tag CoNLL-style file."""
    sentences = []
    forms: list[str] = []
    tags: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                if forms:
                    sentences.append((forms, tags))
                    forms, tags = [], []
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected form<TAB>tag")
            forms.append(parts[0])
            tags.append(parts[1])
    if forms:
        sentences.append((forms, tags))
    if not sentences:
        raise CorpusError(f"{path}: empty labeled corpus")
    return sentences


def write_conll(path: str | Path,
                sentences: Iterable[tuple[Sequence[str], Sequence[str]]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for forms, tags in sentences:
            for form, tag in zip(forms, tags):
                f.write(f"{form}\t{tag}\n")
            f.write("\n")


def label_sentences(raw: Iterable[tuple[Sequence[str], Sequence[str]]],
                    vocab: Vocabulary, tagset: Tagset,
                    domain_label: str = "source") -> list[LabeledSequence]:
    """Integer-code raw (forms, tags) pairs against a vocabulary and tagset."""
    out = []
    for forms, tags in raw:
        try:
            tag_ids = np.array([tagset.tag_to_id[t] for t in tags], dtype=np.int64)
        except KeyError as e:
            raise CorpusError(f"unknown tag {e.args[0]!r}") from None
        out.append(LabeledSequence(tokens=encode(vocab, forms), tags=tag_ids,
                                   domain_label=domain_label))
    return out


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    """Write ``SEQREP-VOCAB 1 <V>`` header plus form<TAB>count lines in id order."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"SEQREP-VOCAB 1 {vocab.V}\n")
        for i, form in enumerate(vocab.id_to_type):
            f.write(f"{form}\t{int(vocab.counts[i])}\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 3 or header[0] != "SEQREP-VOCAB" or header[1] != "1":
            raise CorpusError(f"{path}: not a vocabulary file")
        V = int(header[2])
        id_to_type = []
        counts = np.zeros(V, dtype=np.int64)
        for i in range(V):
            line = f.readline().rstrip("\n")
            form, count = line.split("\t")
            id_to_type.append(form)
            counts[i] = int(count)
    if id_to_type[0] != UNK_FORM:
        raise CorpusError(f"{path}: id 0 must be the UNK type")
    type_to_id = {t: i for i, t in enumerate(id_to_type)}
    return Vocabulary(type_to_id=type_to_id, id_to_type=id_to_type,
                      counts=counts, unk_id=0)
