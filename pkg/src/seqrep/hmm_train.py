"""Unsupervised HMM estimation by stepwise (online) EM over token streams.

Sufficient statistics are kept as per-token averages and blended with
stepsize ``(t + t0) ** -alpha`` per minibatch, so corpora of any size mix on
the same scale.  When one minibatch covers the whole corpus and
``alpha=1, t0=0, burn_in=0``, updates degenerate to plain replacement and the
loop is textbook batch EM.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import CorpusError, TokenSequence, Vocabulary, encode
from .hmm import HmmModel, default_k, kbest_forward_backward

log = logging.getLogger(__name__)


class TrainError(ValueError):
    """Raised for invalid training configurations or inputs."""


@dataclass
class SufficientStats:
    """Running per-token-average statistics for initial/transition/emission."""

    init_stats: np.ndarray
    trans_stats: np.ndarray
    emit_stats: np.ndarray
    updates_seen: int = 0

    def check_shapes(self, other: "SufficientStats") -> None:
        if (self.init_stats.shape != other.init_stats.shape
                or self.trans_stats.shape != other.trans_stats.shape
                or self.emit_stats.shape != other.emit_stats.shape):
            raise TrainError("sufficient statistics shapes do not match")


@dataclass
class TrainConfig:
    """Knobs for online EM.

    ``k=None`` selects the default beam width for ``n_classes``;
    ``smoothing=None`` auto-scales to ``0.01 / (N * V)`` so the additive
    smoothing stays a ~1% perturbation of per-token-average rows regardless
    of model size.
    """

    n_classes: int = 128
    k: int | None = None
    alpha: float = 0.6
    t0: float = 2.0
    minibatch: int = 128
    burn_in: int = 8
    epochs: int = 1
    seed: int = 0
    smoothing: float | None = None
    exact: bool = False
    shuffle: bool = False
    log_every: int = 10000

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1.0:
            raise TrainError("alpha must be in (0.5, 1]")
        if self.minibatch < 1:
            raise TrainError("minibatch must be >= 1")
        if self.smoothing is not None and self.smoothing < 0:
            raise TrainError("smoothing must be >= 0")
        if self.n_classes < 1 or self.epochs < 1:
            raise TrainError("n_classes and epochs must be >= 1")

    def resolved_k(self) -> int:
        if self.exact:
            return self.n_classes
        if self.k is None:
            return default_k(self.n_classes)
        return self.k

    def resolved_smoothing(self, vocab_size: int) -> float:
        if self.smoothing is not None:
            return self.smoothing
        return 0.01 / (self.n_classes * vocab_size)


def init_model(N: int, V: int, seed: int) -> HmmModel:
    """Random strictly-positive model: rows ~ symmetric Dirichlet(1.1)."""
    if N < 1 or V < 1:
        raise TrainError("N and V must be >= 1")
    rng = np.random.default_rng(seed)

    def dirichlet_rows(rows, cols):
        g = rng.gamma(1.1, size=(rows, cols))
        np.maximum(g, 1e-300, out=g)
        return g / g.sum(axis=1, keepdims=True)

    initial = dirichlet_rows(1, N)[0]
    transition = dirichlet_rows(N, N)
    emission = dirichlet_rows(N, V)
    return HmmModel(initial=initial, transition=transition, emission=emission)


def expectation_step(model: HmmModel, batch: Sequence[TokenSequence],
                     k: int | None = None) -> SufficientStats:
    """Posterior-expected counts over a minibatch, averaged per token."""
    stats, _, _ = _accumulate_batch(model, batch, k)
    return stats


def _accumulate_batch(model, batch, k):
    if len(batch) == 0:
        raise TrainError("empty minibatch")
    if k is None:
        k = model.n_classes
    N, V = model.n_classes, model.vocab_size
    init = np.zeros(N)
    trans = np.zeros((N, N))
    emit = np.zeros((N, V))
    ll_sum = 0.0
    total_tokens = 0
    for seq in batch:
        posteriors, pairwise, ll = kbest_forward_backward(model, seq, k)
        init += posteriors[0]
        if len(pairwise):
            trans += pairwise.sum(axis=0)
        np.add.at(emit.T, seq.ids, posteriors)
        ll_sum += ll
        total_tokens += len(seq)
    scale = 1.0 / total_tokens
    stats = SufficientStats(init_stats=init * scale, trans_stats=trans * scale,
                            emit_stats=emit * scale, updates_seen=0)
    return stats, ll_sum, total_tokens


def online_update(running: SufficientStats, fresh: SufficientStats, t: int,
                  alpha: float = 0.6, t0: float = 2.0) -> SufficientStats:
    """Blend fresh statistics into the running average with stepsize (t+t0)^-alpha."""
    if t < 1:
        raise TrainError("update index t must be >= 1")
    running.check_shapes(fresh)
    gamma = (t + t0) ** (-alpha)
    return SufficientStats(
        init_stats=(1.0 - gamma) * running.init_stats + gamma * fresh.init_stats,
        trans_stats=(1.0 - gamma) * running.trans_stats + gamma * fresh.trans_stats,
        emit_stats=(1.0 - gamma) * running.emit_stats + gamma * fresh.emit_stats,
        updates_seen=running.updates_seen + 1,
    )


def maximization_step(running: SufficientStats, smoothing: float) -> HmmModel:
    """Add-constant smoothing and row normalization of the running statistics."""

    def normalize(table):
        table = table + smoothing
        sums = table.sum(axis=-1, keepdims=True)
        if np.any(sums == 0):
            raise TrainError("empty statistics row (increase smoothing)")
        return table / sums

    return HmmModel(initial=normalize(running.init_stats),
                    transition=normalize(running.trans_stats),
                    emission=normalize(running.emit_stats))


def train_hmm(corpus_stream, vocab: Vocabulary, config: TrainConfig,
              progress: list | None = None) -> HmmModel:
    """Run online EM over a corpus of token-string sentences.

    ``corpus_stream`` is an iterable of token lists, or a zero-argument
    callable returning one (re-invoked per epoch, for file-backed streams).
    ``progress``, when given, collects ``(sequences_seen, avg per-token
    log-likelihood)`` pairs per ``config.log_every`` sequences.

    Deterministic for a fixed (seed, corpus order, config).
    """
    corpus: Sequence | Callable[[], Iterable]
    if callable(corpus_stream):
        corpus = corpus_stream
        corpus_size = None
    else:
        corpus = corpus_stream if isinstance(corpus_stream, (list, tuple)) \
            else list(corpus_stream)
        corpus_size = len(corpus)
        if corpus_size == 0:
            raise CorpusError("empty corpus")

    k = min(config.resolved_k(), config.n_classes)
    smoothing = config.resolved_smoothing(vocab.V)
    batch_em = (corpus_size is not None and config.minibatch >= corpus_size
                and config.alpha == 1.0 and config.t0 == 0 and config.burn_in == 0)

    model = init_model(config.n_classes, vocab.V, config.seed)
    running: SufficientStats | None = None
    shuffle_rng = np.random.default_rng(config.seed + 1) if config.shuffle else None

    t = 0
    seqs_seen = 0
    window_ll = 0.0
    window_tokens = 0
    window_seqs = 0
    for epoch in range(config.epochs):
        sentences = corpus() if callable(corpus) else corpus
        if shuffle_rng is not None:
            sentences = list(sentences)
            order = shuffle_rng.permutation(len(sentences))
            sentences = [sentences[i] for i in order]
        saw_any = False
        for batch in _minibatches(sentences, config.minibatch):
            saw_any = True
            encoded = [sent if isinstance(sent, TokenSequence)
                       else encode(vocab, sent) for sent in batch]
            t += 1
            fresh, ll_sum, n_tokens = _accumulate_batch(model, encoded, k)
            if running is None or batch_em:
                fresh.updates_seen = t
                running = fresh
            else:
                running = online_update(running, fresh, t,
                                        alpha=config.alpha, t0=config.t0)
            if config.burn_in == 0 or t >= config.burn_in:
                model = maximization_step(running, smoothing)

            seqs_seen += len(batch)
            window_ll += ll_sum
            window_tokens += n_tokens
            window_seqs += len(batch)
            if window_seqs >= config.log_every:
                avg = window_ll / window_tokens
                log.info("epoch %d, %d sequences: avg per-token ll %.4f",
                         epoch + 1, seqs_seen, avg)
                if progress is not None:
                    progress.append((seqs_seen, avg))
                window_ll = window_tokens = window_seqs = 0
        if not saw_any:
            raise CorpusError("empty corpus")
    if window_seqs and progress is not None:
        progress.append((seqs_seen, window_ll / window_tokens))
    return model


def corpus_log_likelihood(model: HmmModel, corpus_stream, vocab: Vocabulary,
                          k: int | None = None) -> float:
    """Average per-token log-likelihood of a token-string corpus."""
    if k is None:
        k = model.n_classes
    total_ll = 0.0
    total_tokens = 0
    for sent in corpus_stream:
        seq = sent if isinstance(sent, TokenSequence) else encode(vocab, sent)
        _, _, ll = kbest_forward_backward(model, seq, k)
        total_ll += ll
        total_tokens += len(seq)
    if total_tokens == 0:
        raise CorpusError("empty corpus")
    return total_ll / total_tokens


def _minibatches(sentences: Iterable, size: int):
    batch = []
    for sent in sentences:
        batch.append(sent)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch
