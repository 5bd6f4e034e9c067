"""Hidden Markov model container and inference.

Inference uses rescaled (sum-normalized) linear-domain messages so long
sequences neither underflow nor overflow, and so that beamed message
truncation operates directly on message weights.  The beamed variant keeps
the top-k entries of each propagated forward message (ties to the smaller
class id), restricts the backward pass to the surviving supports, and reports
posteriors and pairwise marginals that are exact for the pruned lattice.
With k = N it runs the identical dense code path as the exact algorithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_SUM_TOL = 1e-9
MESSAGE_FLOOR = 1e-12


class HmmError(ValueError):
    """Raised for invalid models or inference arguments."""


@dataclass
class InferenceDiagnostics:
    """Tallies for degenerate events encountered during inference."""

    floored_messages: int = 0
    zero_probability_paths: int = 0

    def reset(self) -> None:
        self.floored_messages = 0
        self.zero_probability_paths = 0


DIAGNOSTICS = InferenceDiagnostics()


@dataclass
class HmmModel:
    """Initial, transition and emission probability tables.

    ``transition[c_prev, c]`` is the probability of moving to class ``c`` from
    ``c_prev``; ``emission[c, w]`` the probability of word id ``w`` under
    class ``c``.  All rows and the initial vector are stochastic.  Instances
    are treated as immutable after construction.
    """

    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.emission = np.asarray(self.emission, dtype=np.float64)
        self.validate()

    @property
    def n_classes(self) -> int:
        return len(self.initial)

    @property
    def vocab_size(self) -> int:
        return self.emission.shape[1]

    def validate(self) -> None:
        N = len(self.initial)
        if N < 1 or self.emission.shape[1] < 1:
            raise HmmError("model needs at least one class and one word type")
        if self.transition.shape != (N, N) or self.emission.shape[0] != N:
            raise HmmError("table shapes are inconsistent")
        for name, table in (("initial", self.initial[None, :]),
                            ("transition", self.transition),
                            ("emission", self.emission)):
            if np.any(table < 0):
                raise HmmError(f"{name} has negative entries")
            sums = table.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
                raise HmmError(f"{name} rows do not sum to 1")


def default_k(N: int) -> int:
    """Beam width used for approximate inference: min(N, ceil(3*log2(N)))."""
    if N < 2:
        return N
    return min(N, math.ceil(3.0 * math.log2(N)))


def joint_log_probability(model: HmmModel, seq, classes) -> float:
    """Log joint probability of one (word sequence, class sequence) pair.

    Returns -inf for zero-probability paths.
    """
    ids = np.asarray(seq.ids if hasattr(seq, "ids") else seq, dtype=np.int64)
    classes = np.asarray(classes, dtype=np.int64)
    if len(classes) != len(ids):
        raise HmmError("class sequence length does not match token sequence")
    with np.errstate(divide="ignore"):
        total = np.log(model.initial[classes[0]])
        if len(ids) > 1:
            total += np.log(model.transition[classes[:-1], classes[1:]]).sum()
        total += np.log(model.emission[classes, ids]).sum()
    return float(total)


def _top_k_support(raw: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, ties to the smaller index, sorted.

    Entries equal to zero are never selected, so the support can be smaller
    than k.  Selection is by partial partition, not a full sort.
    """
    nonzero = int(np.count_nonzero(raw))
    if nonzero <= k:
        return np.flatnonzero(raw)
    threshold = np.partition(raw, len(raw) - k)[len(raw) - k]
    above = np.flatnonzero(raw > threshold)
    slots = k - len(above)
    if slots > 0:
        at = np.flatnonzero(raw == threshold)[:slots]
        above = np.concatenate([above, at])
        above.sort()
    return above


def _floor_if_dead(raw: np.ndarray) -> np.ndarray:
    """Replace an all-zero message by a flat floor; tallies the event."""
    if raw.max() <= 0.0:
        DIAGNOSTICS.floored_messages += 1
        return raw + MESSAGE_FLOOR
    return raw


def _lattice_forward_backward(model: HmmModel, ids: np.ndarray, k: int):
    """Shared implementation of exact (k = N) and beamed forward-backward.

    Forward messages are truncated to their top-k entries and renormalized
    before propagation; the backward pass and all marginals are then computed
    exactly on the resulting pruned lattice, so every pairwise table
    marginalizes back to the adjacent posterior rows.
    """
    A = model.transition
    B = model.emission
    N = model.n_classes
    K = len(ids)
    dense = k >= N

    # forward sweep
    supports: list[np.ndarray | None] = [None] * K
    fwd: list[np.ndarray] = [None] * K  # type: ignore[list-item]
    log_likelihood = 0.0
    raw = model.initial * B[:, ids[0]]
    for t in range(K):
        if t > 0:
            if dense:
                raw = (fwd[t - 1] @ A) * B[:, ids[t]]
            else:
                raw = (fwd[t - 1] @ A[supports[t - 1], :]) * B[:, ids[t]]
        raw = _floor_if_dead(raw)
        if dense:
            mass = raw.sum()
            fwd[t] = raw / mass
        else:
            support = _top_k_support(raw, k)
            kept = raw[support]
            mass = kept.sum()
            supports[t] = support
            fwd[t] = kept / mass
        log_likelihood += math.log(mass)

    # backward sweep, restricted to the forward supports
    bwd: list[np.ndarray] = [None] * K  # type: ignore[list-item]
    width = N if dense else len(supports[K - 1])
    bwd[K - 1] = np.full(width, 1.0 / width)
    for t in range(K - 2, -1, -1):
        if dense:
            raw = A @ (B[:, ids[t + 1]] * bwd[t + 1])
        else:
            s_next = supports[t + 1]
            raw = A[np.ix_(supports[t], s_next)] @ (B[s_next, ids[t + 1]] * bwd[t + 1])
        raw = _floor_if_dead(raw)
        bwd[t] = raw / raw.sum()

    # posterior rows
    posteriors = np.zeros((K, N))
    local = [None] * K  # per-position posterior on the local support
    for t in range(K):
        prod = fwd[t] * bwd[t]
        prod = _floor_if_dead(prod)
        prod /= prod.sum()
        local[t] = prod
        if dense:
            posteriors[t] = prod
        else:
            posteriors[t, supports[t]] = prod

    # pairwise marginals
    pairwise = np.zeros((K - 1, N, N))
    for t in range(1, K):
        if dense:
            block = (fwd[t - 1][:, None] * A) * (B[:, ids[t]] * bwd[t])[None, :]
            block = _floor_if_dead(block)
            pairwise[t - 1] = block / block.sum()
        else:
            s_prev, s_cur = supports[t - 1], supports[t]
            block = (fwd[t - 1][:, None] * A[np.ix_(s_prev, s_cur)]) \
                * (B[s_cur, ids[t]] * bwd[t])[None, :]
            block = _floor_if_dead(block)
            pairwise[t - 1][np.ix_(s_prev, s_cur)] = block / block.sum()

    return posteriors, pairwise, log_likelihood, local, (None if dense else supports)


def forward_backward(model: HmmModel, seq):
    """Exact per-token posteriors, pairwise marginals and log-likelihood."""
    ids = _check_ids(model, seq)
    post, pair, ll, _, _ = _lattice_forward_backward(model, ids, model.n_classes)
    return post, pair, ll


def kbest_forward_backward(model: HmmModel, seq, k: int):
    """Beamed forward-backward; identical to the exact algorithm when k = N."""
    if not 1 <= k <= model.n_classes:
        raise HmmError(f"k must be in [1, {model.n_classes}], got {k}")
    ids = _check_ids(model, seq)
    post, pair, ll, _, _ = _lattice_forward_backward(model, ids, k)
    return post, pair, ll


def viterbi(model: HmmModel, seq) -> np.ndarray:
    """Most probable class sequence; ties go to the smaller class id."""
    ids = _check_ids(model, seq)
    K = len(ids)
    with np.errstate(divide="ignore"):
        log_init = np.log(model.initial)
        log_trans = np.log(model.transition)
        log_emit = np.log(model.emission)

    score = log_init + log_emit[:, ids[0]]
    backptr = np.zeros((K, model.n_classes), dtype=np.int64)
    for t in range(1, K):
        cand = score[:, None] + log_trans
        backptr[t] = np.argmax(cand, axis=0)
        score = cand[backptr[t], np.arange(model.n_classes)] + log_emit[:, ids[t]]

    if not np.isfinite(score.max()):
        DIAGNOSTICS.zero_probability_paths += 1
    path = np.zeros(K, dtype=np.int64)
    path[K - 1] = int(np.argmax(score))
    for t in range(K - 1, 0, -1):
        path[t - 1] = backptr[t, path[t]]
    return path


def _check_ids(model: HmmModel, seq) -> np.ndarray:
    ids = np.asarray(seq.ids if hasattr(seq, "ids") else seq, dtype=np.int64)
    if ids.ndim != 1 or len(ids) == 0:
        raise HmmError("sequence must be a non-empty 1-d id list")
    if ids.min() < 0 or ids.max() >= model.vocab_size:
        raise HmmError("word id out of range for this model")
    return ids


# ---------------------------------------------------------------------------
# serialization

def _format_row(row: np.ndarray) -> str:
    return " ".join(format(x, ".17g") for x in row)


def save_hmm(model: HmmModel, path: str | Path) -> None:
    """Write ``SEQREP-HMM 1 <N> <V>`` plus initial/transition/emission rows.

    Floats use 17 significant digits so reloading is exact in binary64.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"SEQREP-HMM 1 {model.n_classes} {model.vocab_size}\n")
        f.write(_format_row(model.initial) + "\n")
        for row in model.transition:
            f.write(_format_row(row) + "\n")
        for row in model.emission:
            f.write(_format_row(row) + "\n")


def load_hmm(path: str | Path) -> HmmModel:
    def parse_row(line: str) -> np.ndarray:
        return np.array(line.split(), dtype=np.float64)

    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != "SEQREP-HMM" or header[1] != "1":
            raise HmmError(f"{path}: not an HMM model file")
        N, V = int(header[2]), int(header[3])
        try:
            initial = parse_row(f.readline())
            transition = np.array([parse_row(f.readline()) for _ in range(N)])
            emission = np.array([parse_row(f.readline()) for _ in range(N)])
        except ValueError as exc:
            raise HmmError(f"{path}: truncated or malformed model file") from exc
    if initial.shape != (N,) or transition.shape != (N, N) or emission.shape != (N, V):
        raise HmmError(f"{path}: truncated or malformed model file")
    return HmmModel(initial=initial, transition=transition, emission=emission)
