"""Shared fixtures and independent oracles for the test suite.

The oracles recompute quantities from first principles (exhaustive
enumeration over latent sequences, explicit feature-weight sums) so the
library implementations are checked against independent math, not against
themselves.
"""

import itertools
import math

import numpy as np

from seqrep.corpus import UNK_FORM
from seqrep.hmm import HmmModel


def random_hmm(N, V, rng, concentration=0.5):
    return HmmModel(
        initial=rng.dirichlet(np.full(N, concentration)),
        transition=rng.dirichlet(np.full(N, concentration), size=N),
        emission=rng.dirichlet(np.full(V, concentration), size=N),
    )


def enum_hmm(model, ids):
    """Exhaustive-enumeration oracle for HMM inference.

    Sums the joint probability over all N^K class sequences in plain linear
    arithmetic.  Returns (posteriors, pairwise, log_likelihood, best_path);
    the best path is the first maximum in lexicographic order, which is the
    unique argmax on the continuous random instances used by the tests.
    """
    ids = np.asarray(ids)
    N = model.n_classes
    K = len(ids)
    init, trans, emis = model.initial, model.transition, model.emission

    total = 0.0
    post = np.zeros((K, N))
    pair = np.zeros((K - 1, N, N))
    best_p = -1.0
    best_path = None
    for path in itertools.product(range(N), repeat=K):
        p = init[path[0]] * emis[path[0], ids[0]]
        for t in range(1, K):
            p *= trans[path[t - 1], path[t]] * emis[path[t], ids[t]]
        total += p
        for t in range(K):
            post[t, path[t]] += p
        for t in range(1, K):
            pair[t - 1, path[t - 1], path[t]] += p
        if p > best_p:
            best_p = p
            best_path = np.array(path)
    return post / total, pair / total, math.log(total), best_path


def crf_token_score(model, form, tag, dense_row=None, cat_extra=()):
    """Per-token score from the documented feature naming, via feature_index."""
    index = model.feature_index
    w = model.weights
    if form not in model.train_vocab.type_to_id:
        form = UNK_FORM
    s = w[index[("bias", tag)]] + w[index[(f"W={form}", tag)]]
    for name in cat_extra:
        if (name, tag) in index:
            s += w[index[(name, tag)]]
    if dense_row is not None:
        for j, x in enumerate(dense_row):
            s += x * w[index[(f"P_{j}", tag)]]
    return s


def enum_crf(model, forms, reps):
    """Exhaustive-enumeration oracle for a linear-chain tagger.

    Scores every tag sequence by explicit per-token feature-weight sums plus
    transition weights.  Returns (log partition, best path, score function).
    """
    K = len(forms)
    T = model.T
    index = model.feature_index
    w = model.weights

    def cat_extra(k):
        if reps.kind != "viterbi":
            return ()
        names = []
        for delta in range(-model.template.window, model.template.window + 1):
            j = k + delta
            if 0 <= j < K:
                names.append(f"HC[{delta}]={reps.categorical[j]}")
        return names

    def score(tags):
        s = 0.0
        for k in range(K):
            dense_row = None if reps.dense is None else reps.dense[k]
            s += crf_token_score(model, forms[k], tags[k], dense_row,
                                 cat_extra(k))
        for k in range(1, K):
            prev = model.tagset.id_to_tag[tags[k - 1]]
            s += w[index[(f"TR={prev}", tags[k])]]
        return s

    scores = [score(tags) for tags in itertools.product(range(T), repeat=K)]
    mx = max(scores)
    logZ = mx + math.log(sum(math.exp(s - mx) for s in scores))
    best = int(np.argmax(scores))
    best_path = np.array(list(itertools.product(range(T), repeat=K))[best])
    return logZ, best_path, score
