"""Word representations read off a trained HMM.

Four kinds: the Viterbi class sequence (categorical), per-token posteriors
(dense, context dependent), per-type averaged posteriors (dense, context
independent by construction), and the concatenation of the two posterior
kinds.  Feature extraction defaults to exact inference; pass ``k`` to use
the same beam approximation as training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import TokenSequence, Vocabulary, encode
from .hmm import HmmModel, kbest_forward_backward, viterbi

REP_KINDS = ("none", "viterbi", "posterior_token", "posterior_type",
             "posterior_both")

REP_DISPLAY = {
    "none": "Baseline",
    "viterbi": "Viterbi",
    "posterior_token": "Posterior-Token",
    "posterior_type": "Posterior-Type",
    "posterior_both": "Posterior-Both",
}

# Dense rows are probabilities; log transform floors at this value first.
LOG_FLOOR = 1e-10


class RepresentationError(ValueError):
    """Raised for malformed representation requests or tables."""


@dataclass
class Representation:
    """Per-token features for one sequence.

    Exactly one payload is set for HMM-backed kinds: ``categorical`` holds
    class ids (viterbi), ``dense`` holds one row per token (posterior kinds,
    width N or 2N).  Kind ``none`` carries neither.
    """

    kind: str
    categorical: np.ndarray | None = None
    dense: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in REP_KINDS:
            raise RepresentationError(f"unknown representation kind {self.kind!r}")

    def __len__(self) -> int:
        if self.categorical is not None:
            return len(self.categorical)
        if self.dense is not None:
            return self.dense.shape[0]
        return 0

    @property
    def width(self) -> int:
        return 0 if self.dense is None else self.dense.shape[1]


def viterbi_features(model: HmmModel, seq: TokenSequence) -> np.ndarray:
    """Most-likely class sequence, for use as categorical features."""
    return viterbi(model, seq)


def posterior_token_features(model: HmmModel, seq: TokenSequence,
                             k: int | None = None) -> np.ndarray:
    """Per-token posteriors over classes, one row per token (K, N)."""
    if k is None:
        k = model.n_classes
    posteriors, _, _ = kbest_forward_backward(model, seq, k)
    return posteriors


@dataclass
class TypeRepTable:
    """Per-type averaged token posteriors over an unlabeled corpus.

    Stored rows cover only the word forms seen at least once; everything
    else resolves to ``fallback`` (the unknown-word row when available).
    """

    forms: tuple
    rows: np.ndarray
    z: np.ndarray
    fallback: np.ndarray
    _form_to_row: dict = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.forms) != self.rows.shape[0] or len(self.forms) != len(self.z):
            raise RepresentationError("table forms/rows/z lengths disagree")
        if np.any(self.z < 1):
            raise RepresentationError("stored rows must have count >= 1")
        self._form_to_row = {form: i for i, form in enumerate(self.forms)}

    @property
    def n_classes(self) -> int:
        return self.rows.shape[1] if self.rows.size else len(self.fallback)

    def row_for(self, form: str) -> np.ndarray:
        i = self._form_to_row.get(form)
        return self.fallback if i is None else self.rows[i]


def build_type_table(model: HmmModel, corpus_stream: Iterable,
                     vocab: Vocabulary, k: int | None = None) -> TypeRepTable:
    """One streaming pass: sum token posteriors per word id, divide by counts.

    Out-of-vocabulary tokens accumulate into the unknown-word row, which
    doubles as the fallback for forms never seen here.  If no token ever
    mapped to the unknown word, the fallback is the corpus-wide mean
    posterior instead.
    """
    N = model.n_classes
    sums = np.zeros((vocab.V, N))
    counts = np.zeros(vocab.V, dtype=np.int64)
    total = np.zeros(N)
    n_tokens = 0
    for sent in corpus_stream:
        seq = sent if isinstance(sent, TokenSequence) else encode(vocab, sent)
        posteriors = posterior_token_features(model, seq, k)
        np.add.at(sums, seq.ids, posteriors)
        np.add.at(counts, seq.ids, 1)
        total += posteriors.sum(axis=0)
        n_tokens += len(seq)
    if n_tokens == 0:
        raise RepresentationError("empty corpus")

    seen = np.flatnonzero(counts)
    rows = sums[seen] / counts[seen, None]
    forms = tuple(vocab.id_to_type[i] for i in seen)
    if counts[vocab.unk_id]:
        fallback = sums[vocab.unk_id] / counts[vocab.unk_id]
    else:
        fallback = total / n_tokens
    return TypeRepTable(forms=forms, rows=rows, z=counts[seen].copy(),
                        fallback=fallback)


def lookup_type_features(table: TypeRepTable, seq: TokenSequence) -> np.ndarray:
    """Table row per token by surface form; context independent by construction."""
    if seq.raw is None:
        raise RepresentationError("sequence lacks raw forms for type lookup")
    return np.stack([table.row_for(form) for form in seq.raw])


def both_features(token_rows: np.ndarray, type_rows: np.ndarray) -> np.ndarray:
    """Row-wise concatenation, token part first (width 2N)."""
    if token_rows.shape[0] != type_rows.shape[0]:
        raise RepresentationError("token/type representation length mismatch")
    return np.concatenate([token_rows, type_rows], axis=1)


@dataclass
class RepresentationProvider:
    """Turns raw token forms into the representation a tagger was built with.

    Encoding always goes through the HMM vocabulary, so forms unseen by the
    HMM use the unknown-word emission column.  ``k=None`` means exact
    inference.  ``log_features`` maps dense probabilities through
    ``log(max(p, 1e-10))``.
    """

    kind: str
    model: HmmModel | None = None
    vocab: Vocabulary | None = None
    table: TypeRepTable | None = None
    k: int | None = None
    log_features: bool = False

    def __post_init__(self):
        if self.kind not in REP_KINDS:
            raise RepresentationError(f"unknown representation kind {self.kind!r}")
        if self.kind != "none" and (self.model is None or self.vocab is None):
            raise RepresentationError(f"kind {self.kind!r} needs an HMM and vocabulary")
        if self.kind in ("posterior_type", "posterior_both") and self.table is None:
            raise RepresentationError(f"kind {self.kind!r} needs a type table")

    @property
    def dense_width(self) -> int:
        if self.kind in ("posterior_token", "posterior_type"):
            return self.model.n_classes
        if self.kind == "posterior_both":
            return 2 * self.model.n_classes
        return 0

    @property
    def n_classes(self) -> int:
        return 0 if self.model is None else self.model.n_classes

    def represent(self, forms: Sequence[str]) -> Representation:
        if self.kind == "none":
            return Representation(kind="none")
        seq = encode(self.vocab, forms)
        if self.kind == "viterbi":
            return Representation(kind="viterbi",
                                  categorical=viterbi_features(self.model, seq))
        if self.kind == "posterior_token":
            dense = posterior_token_features(self.model, seq, self.k)
        elif self.kind == "posterior_type":
            dense = lookup_type_features(self.table, seq)
        else:
            dense = both_features(
                posterior_token_features(self.model, seq, self.k),
                lookup_type_features(self.table, seq))
        if self.log_features:
            dense = np.log(np.maximum(dense, LOG_FLOOR))
        return Representation(kind=self.kind, dense=dense)


def _format_vec(vec: np.ndarray) -> str:
    return " ".join(format(x, ".17g") for x in vec)


def save_typerep(table: TypeRepTable, path) -> None:
    """Write `SEQREP-TYPEREP 1 <V'> <N>` then `form<TAB>Z<TAB>v_1 .. v_N` lines.

    The fallback row is stored under the reserved form `<fallback>`.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"SEQREP-TYPEREP 1 {len(table.forms)} {table.n_classes}\n")
        f.write(f"<fallback>\t0\t{_format_vec(table.fallback)}\n")
        for form, count, row in zip(table.forms, table.z, table.rows):
            f.write(f"{form}\t{count}\t{_format_vec(row)}\n")


def load_typerep(path) -> TypeRepTable:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if header[:2] != ["SEQREP-TYPEREP", "1"] or len(header) != 4:
            raise RepresentationError(f"bad type-table header in {path}")
        n_rows, n_classes = int(header[2]), int(header[3])
        fb_form, _, fb_vec = f.readline().rstrip("\n").split("\t")
        if fb_form != "<fallback>":
            raise RepresentationError("missing fallback row")
        fallback = np.array(fb_vec.split(), dtype=np.float64)
        forms, zs, rows = [], [], []
        for _ in range(n_rows):
            form, count, vec = f.readline().rstrip("\n").split("\t")
            forms.append(form)
            zs.append(int(count))
            rows.append(np.array(vec.split(), dtype=np.float64))
    rows_arr = np.array(rows) if rows else np.zeros((0, n_classes))
    if rows_arr.shape != (n_rows, n_classes) or len(fallback) != n_classes:
        raise RepresentationError(f"type-table shape mismatch in {path}")
    return TypeRepTable(forms=tuple(forms), rows=rows_arr,
                        z=np.array(zs, dtype=np.int64), fallback=fallback)
