"""Linear-chain CRF tagger over word identity and HMM-derived features.

Feature space per token: a constant bias, the word form (unknown-mapped at
tag time), optional categorical latent-class features within a small window
(Viterbi representation), and optional dense real-valued features (posterior
representations, one weight per dimension and tag).  Tag-pair transition
weights are shared across positions.  Training maximizes the L2-regularized
conditional log-likelihood with a deterministic batch quasi-Newton loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .corpus import (Tagset, Vocabulary, build_vocabulary, default_tagset,
                     UNK_FORM)
from .representations import Representation, RepresentationProvider, REP_KINDS


class CrfError(ValueError):
    """Raised for invalid tagger configurations, inputs, or files."""


@dataclass
class FeatureTemplateConfig:
    """What the tagger looks at.

    ``rep_kind="none"`` is the word-identity baseline.  ``window`` applies
    to categorical latent-class features only.  ``n_classes``/``n_dense``
    size the latent feature blocks and are normally filled in from the
    representation provider at training time.  Sidecar paths record where
    the HMM and type table live so a serialized tagger is self-describing.
    """

    rep_kind: str = "none"
    window: int = 0
    n_classes: int = 0
    n_dense: int = 0
    log_features: bool = False
    use_word: bool = True
    hmm_path: str = ""
    vocab_path: str = ""
    typerep_path: str = ""

    def __post_init__(self):
        if self.rep_kind not in REP_KINDS:
            raise CrfError(f"unknown representation kind {self.rep_kind!r}")
        if not 0 <= self.window <= 2:
            raise CrfError("window must be in [0, 2]")
        if not self.use_word:
            raise CrfError("the word-identity feature is always on")
        if self.n_classes < 0 or self.n_dense < 0:
            raise CrfError("negative feature block sizes")


@dataclass
class TrainOptions:
    l2: float = 1.0
    max_iters: int = 200
    tol: float = 1e-4

    def __post_init__(self):
        if self.l2 < 0:
            raise CrfError("l2 must be >= 0")
        if self.tol <= 0:
            raise CrfError("tol must be > 0")
        if self.max_iters < 1:
            raise CrfError("max_iters must be >= 1")


def _cat_feature_names(vocab: Vocabulary, template: FeatureTemplateConfig):
    names = ["bias"]
    names.extend(f"W={form}" for form in vocab.id_to_type)
    if template.rep_kind == "viterbi":
        for delta in range(-template.window, template.window + 1):
            names.extend(f"HC[{delta}]={c}" for c in range(template.n_classes))
    return tuple(names)


@dataclass
class CrfModel:
    """Trained tagger: template, training vocabulary, and one flat weight vector.

    Slot layout: categorical block (name-major, tag-minor), then dense block
    (dimension-major), then the T*T transition block (previous-tag-major).
    """

    tagset: Tagset
    template: FeatureTemplateConfig
    train_vocab: Vocabulary
    weights: np.ndarray | None = None
    cat_names: tuple = field(init=False)
    _name_to_id: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.cat_names = _cat_feature_names(self.train_vocab, self.template)
        self._name_to_id = {n: i for i, n in enumerate(self.cat_names)}
        if self.weights is None:
            self.weights = np.zeros(self.n_slots)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.n_slots,):
            raise CrfError(f"expected {self.n_slots} weights, "
                           f"got shape {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise CrfError("non-finite weights")

    @property
    def T(self) -> int:
        return self.tagset.T

    @property
    def n_cat(self) -> int:
        return len(self.cat_names)

    @property
    def n_slots(self) -> int:
        return (self.n_cat + self.template.n_dense + self.T) * self.T

    @property
    def cat_weights(self) -> np.ndarray:
        return self.weights[:self.n_cat * self.T].reshape(self.n_cat, self.T)

    @property
    def dense_weights(self) -> np.ndarray:
        a = self.n_cat * self.T
        b = a + self.template.n_dense * self.T
        return self.weights[a:b].reshape(self.template.n_dense, self.T)

    @property
    def transition_weights(self) -> np.ndarray:
        return self.weights[-self.T * self.T:].reshape(self.T, self.T)

    @property
    def feature_index(self) -> dict:
        """(feature name, tag id) -> weight slot, covering every slot."""
        T = self.T
        index = {}
        for i, name in enumerate(self.cat_names):
            for t in range(T):
                index[(name, t)] = i * T + t
        base = self.n_cat * T
        for j in range(self.template.n_dense):
            for t in range(T):
                index[(f"P_{j}", t)] = base + j * T + t
        base += self.template.n_dense * T
        for p, prev in enumerate(self.tagset.id_to_tag):
            for t in range(T):
                index[(f"TR={prev}", t)] = base + p * T + t
        return index


def extract_features(template: FeatureTemplateConfig, forms: Sequence[str],
                     reps: Representation,
                     vocab: Vocabulary | None = None):
    """Per-token sparse categorical names plus the dense block, if any.

    ``vocab`` maps unseen forms to the unknown word; omit it to keep forms
    verbatim (vocabulary construction time).
    """
    if reps.kind != template.rep_kind:
        raise CrfError(f"representation kind {reps.kind!r} does not match "
                       f"template {template.rep_kind!r}")
    K = len(forms)
    if reps.kind != "none" and len(reps) != K:
        raise CrfError("representation length does not match sequence")
    cat_lists = []
    for k, form in enumerate(forms):
        if vocab is not None and form not in vocab.type_to_id:
            form = UNK_FORM
        names = ["bias", f"W={form}"]
        if template.rep_kind == "viterbi":
            for delta in range(-template.window, template.window + 1):
                j = k + delta
                if 0 <= j < K:
                    names.append(f"HC[{delta}]={reps.categorical[j]}")
        cat_lists.append(names)
    dense = reps.dense
    if dense is not None and dense.shape[1] != template.n_dense:
        raise CrfError(f"dense width {dense.shape[1]} != template "
                       f"n_dense {template.n_dense}")
    return cat_lists, dense


class _Dataset:
    """Flattened feature incidences for fast batch scoring."""

    def __init__(self, model: CrfModel, sequences, reps_list, tags_list=None):
        pair_tok, pair_name = [], []
        dense_blocks = []
        slices = []
        offset = 0
        for i, forms in enumerate(sequences):
            cat_lists, dense = extract_features(model.template, forms,
                                                reps_list[i], model.train_vocab)
            for k, names in enumerate(cat_lists):
                for name in names:
                    nid = model._name_to_id.get(name)
                    if nid is not None:
                        pair_tok.append(offset + k)
                        pair_name.append(nid)
            if model.template.n_dense:
                if dense is None:
                    raise CrfError("template expects dense features")
                dense_blocks.append(dense)
            slices.append((offset, offset + len(forms)))
            offset += len(forms)
        self.n_tokens = offset
        self.slices = slices
        self.pair_tok = np.asarray(pair_tok, dtype=np.int64)
        self.pair_name = np.asarray(pair_name, dtype=np.int64)
        self.dense = np.vstack(dense_blocks) if dense_blocks else None
        self.gold = (np.concatenate(tags_list).astype(np.int64)
                     if tags_list is not None else None)

    def emission_scores(self, model: CrfModel) -> np.ndarray:
        T = model.T
        W_cat = model.cat_weights
        scores = np.zeros((self.n_tokens, T))
        picked = W_cat[self.pair_name]
        for t in range(T):
            scores[:, t] = np.bincount(self.pair_tok, weights=picked[:, t],
                                       minlength=self.n_tokens)
        if self.dense is not None:
            scores += self.dense @ model.dense_weights
        return scores


def _lse_rows(M: np.ndarray) -> np.ndarray:
    """logsumexp over axis 0 of a (T, T) matrix, columnwise."""
    mx = M.max(axis=0)
    return mx + np.log(np.exp(M - mx).sum(axis=0))


def _lse_cols(M: np.ndarray) -> np.ndarray:
    mx = M.max(axis=1)
    return mx + np.log(np.exp(M - mx[:, None]).sum(axis=1))


def _sequence_posteriors(scores: np.ndarray, W_trans: np.ndarray):
    """Forward-backward in log space for one sequence of emission scores.

    Returns (log partition, per-token marginals, summed pairwise marginals).
    """
    K, T = scores.shape
    alpha = np.empty((K, T))
    alpha[0] = scores[0]
    for t in range(1, K):
        alpha[t] = scores[t] + _lse_rows(alpha[t - 1][:, None] + W_trans)
    mx = alpha[-1].max()
    logZ = mx + np.log(np.exp(alpha[-1] - mx).sum())

    beta = np.empty((K, T))
    beta[-1] = 0.0
    for t in range(K - 2, -1, -1):
        beta[t] = _lse_cols(W_trans + (scores[t + 1] + beta[t + 1])[None, :])

    marginals = np.exp(alpha + beta - logZ)
    if K > 1:
        block = (alpha[:-1, :, None] + W_trans[None, :, :]
                 + (scores[1:] + beta[1:])[:, None, :] - logZ)
        pair_sum = np.exp(block).sum(axis=0)
    else:
        pair_sum = np.zeros((T, T))
    return logZ, marginals, pair_sum


def _objective(model: CrfModel, data: _Dataset, l2: float):
    """Regularized conditional log-likelihood and its gradient.

    Gradient = empirical feature counts - expected counts - l2 * w, packed
    in the model's slot layout.
    """
    T = model.T
    W_trans = model.transition_weights
    scores = data.emission_scores(model)

    ll = 0.0
    marginals = np.empty_like(scores)
    emp_trans = np.zeros((T, T))
    exp_trans = np.zeros((T, T))
    for (a, b) in data.slices:
        logZ, marg, pair_sum = _sequence_posteriors(scores[a:b], W_trans)
        marginals[a:b] = marg
        exp_trans += pair_sum
        gold = data.gold[a:b]
        ll += scores[a:b][np.arange(b - a), gold].sum() - logZ
        if b - a > 1:
            ll += W_trans[gold[:-1], gold[1:]].sum()
            np.add.at(emp_trans, (gold[:-1], gold[1:]), 1.0)

    emp_minus_exp = -marginals
    emp_minus_exp[np.arange(data.n_tokens), data.gold] += 1.0

    grad_cat = np.zeros((model.n_cat, T))
    rows = emp_minus_exp[data.pair_tok]
    for t in range(T):
        grad_cat[:, t] = np.bincount(data.pair_name, weights=rows[:, t],
                                     minlength=model.n_cat)
    if data.dense is not None:
        grad_dense = data.dense.T @ emp_minus_exp
    else:
        grad_dense = np.zeros((model.template.n_dense, T))
    grad_trans = emp_trans - exp_trans

    grad = np.concatenate([grad_cat.ravel(), grad_dense.ravel(),
                           grad_trans.ravel()])
    ll -= 0.5 * l2 * float(model.weights @ model.weights)
    grad -= l2 * model.weights
    return ll, grad


def crf_log_likelihood(model: CrfModel, data: list, provider=None,
                       l2: float = 0.0):
    """Objective value and gradient on labeled sequences (helper for tests
    and diagnostics; training uses the same computation internally)."""
    ds = _make_dataset(model, data, provider)
    return _objective(model, ds, l2)


def _make_dataset(model: CrfModel, data: list, provider) -> _Dataset:
    if not data:
        raise CrfError("empty training data")
    forms_list, tags_list, reps_list = [], [], []
    for ls in data:
        forms = ls.tokens.raw
        if forms is None:
            raise CrfError("labeled sequences must carry raw forms")
        forms_list.append(forms)
        tags_list.append(ls.tags)
        if np.any(ls.tags < 0) or np.any(ls.tags >= model.T):
            raise CrfError("tag id out of range")
        reps_list.append(provider.represent(forms) if provider is not None
                         else Representation(kind="none"))
    return _Dataset(model, forms_list, reps_list, tags_list)


def template_for_provider(provider: RepresentationProvider,
                          window: int = 0, hmm_path: str = "",
                          vocab_path: str = "",
                          typerep_path: str = "") -> FeatureTemplateConfig:
    """Template sized to match what the provider emits."""
    return FeatureTemplateConfig(
        rep_kind=provider.kind, window=window,
        n_classes=provider.n_classes if provider.kind == "viterbi" else 0,
        n_dense=provider.dense_width, log_features=provider.log_features,
        hmm_path=hmm_path, vocab_path=vocab_path, typerep_path=typerep_path)


def train_crf(data: list, template: FeatureTemplateConfig,
              provider: RepresentationProvider | None = None,
              options: TrainOptions | None = None,
              tagset: Tagset | None = None,
              trace: list | None = None) -> CrfModel:
    """Fit weights by L-BFGS on the regularized conditional log-likelihood.

    Deterministic given (data order, template, provider, options).
    ``trace``, when given, collects the objective value at each accepted
    iterate.
    """
    if options is None:
        options = TrainOptions()
    if tagset is None:
        tagset = default_tagset()
    if provider is not None and provider.kind != template.rep_kind:
        raise CrfError(f"provider kind {provider.kind!r} does not match "
                       f"template {template.rep_kind!r}")
    if not data:
        raise CrfError("empty training data")

    train_vocab = build_vocabulary(
        (ls.tokens.raw for ls in data if ls.tokens.raw is not None),
        min_count=1)
    if provider is not None:
        template = replace(template,
                           n_classes=(provider.n_classes
                                      if template.rep_kind == "viterbi" else 0),
                           n_dense=provider.dense_width,
                           log_features=provider.log_features)
    model = CrfModel(tagset=tagset, template=template, train_vocab=train_vocab)
    ds = _make_dataset(model, data, provider)

    def neg(w):
        model.weights[:] = w
        ll, grad = _objective(model, ds, options.l2)
        if not np.isfinite(ll) or not np.all(np.isfinite(grad)):
            raise CrfError("non-finite objective: feature values or weights "
                           "exploded (check dense feature scaling)")
        if trace is not None:
            trace.append(-ll)
        return -ll, -grad

    result = minimize(neg, np.zeros(model.n_slots), jac=True,
                      method="L-BFGS-B",
                      options={"maxiter": options.max_iters,
                               "gtol": options.tol, "ftol": 1e-14})
    model.weights[:] = result.x
    return model


def decode(model: CrfModel, forms: Sequence[str],
           reps: Representation) -> np.ndarray:
    """Highest-scoring tag sequence; ties break toward the smaller tag id."""
    ds = _Dataset(model, [forms], [reps])
    scores = ds.emission_scores(model)
    K, T = scores.shape
    W_trans = model.transition_weights
    back = np.zeros((K, T), dtype=np.int64)
    best = scores[0].copy()
    for t in range(1, K):
        cand = best[:, None] + W_trans
        back[t] = np.argmax(cand, axis=0)
        best = cand[back[t], np.arange(T)] + scores[t]
    path = np.zeros(K, dtype=np.int64)
    path[-1] = int(np.argmax(best))
    for t in range(K - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def tag_sequence(model: CrfModel, provider: RepresentationProvider | None,
                 forms: Sequence[str]) -> list:
    """Decode one sentence of raw forms into tag names."""
    reps = (provider.represent(forms) if provider is not None
            else Representation(kind="none"))
    path = decode(model, forms, reps)
    return [model.tagset.id_to_tag[t] for t in path]


def save_crf(model: CrfModel, path) -> None:
    """Plain-text model file: template block, tagset, vocabulary, then the
    nonzero weights as `feature<TAB>tag<TAB>weight` lines."""
    t = model.template
    nz = np.flatnonzero(model.weights)
    index = model.feature_index
    slot_to_key = {slot: key for key, slot in index.items()}
    with open(path, "w", encoding="utf-8") as f:
        f.write("SEQREP-CRF 1\n")
        f.write("TEMPLATE\n")
        f.write(f"rep_kind {t.rep_kind}\n")
        f.write(f"window {t.window}\n")
        f.write(f"n_classes {t.n_classes}\n")
        f.write(f"n_dense {t.n_dense}\n")
        f.write(f"log_features {int(t.log_features)}\n")
        f.write(f"hmm {t.hmm_path or '-'}\n")
        f.write(f"vocab {t.vocab_path or '-'}\n")
        f.write(f"typerep {t.typerep_path or '-'}\n")
        f.write("END\n")
        f.write("TAGS " + " ".join(model.tagset.id_to_tag) + "\n")
        f.write(f"VOCAB {model.train_vocab.V}\n")
        for form, count in zip(model.train_vocab.id_to_type,
                               model.train_vocab.counts):
            f.write(f"{form}\t{count}\n")
        f.write(f"WEIGHTS {len(nz)}\n")
        for slot in nz:
            name, tag = slot_to_key[slot]
            f.write(f"{name}\t{model.tagset.id_to_tag[tag]}\t"
                    f"{model.weights[slot]:.17g}\n")


def load_crf(path) -> CrfModel:
    with open(path, encoding="utf-8") as f:
        if f.readline().split() != ["SEQREP-CRF", "1"]:
            raise CrfError(f"bad tagger header in {path}")
        if f.readline().strip() != "TEMPLATE":
            raise CrfError("missing TEMPLATE block")
        fields = {}
        for line in f:
            line = line.strip()
            if line == "END":
                break
            key, _, value = line.partition(" ")
            fields[key] = value
        template = FeatureTemplateConfig(
            rep_kind=fields["rep_kind"], window=int(fields["window"]),
            n_classes=int(fields["n_classes"]), n_dense=int(fields["n_dense"]),
            log_features=bool(int(fields["log_features"])),
            hmm_path="" if fields["hmm"] == "-" else fields["hmm"],
            vocab_path="" if fields.get("vocab", "-") == "-" else fields["vocab"],
            typerep_path="" if fields["typerep"] == "-" else fields["typerep"])
        tags_line = f.readline().split()
        if tags_line[0] != "TAGS":
            raise CrfError("missing TAGS line")
        tagset = Tagset(id_to_tag=tuple(tags_line[1:]))
        vocab_line = f.readline().split()
        if vocab_line[0] != "VOCAB":
            raise CrfError("missing VOCAB line")
        V = int(vocab_line[1])
        id_to_type, counts = [], []
        for _ in range(V):
            form, count = f.readline().rstrip("\n").split("\t")
            id_to_type.append(form)
            counts.append(int(count))
        vocab = Vocabulary(type_to_id={w: i for i, w in enumerate(id_to_type)},
                           id_to_type=id_to_type,
                           counts=np.array(counts, dtype=np.int64))
        model = CrfModel(tagset=tagset, template=template, train_vocab=vocab)
        index = model.feature_index
        n_weights = int(f.readline().split()[1])
        for _ in range(n_weights):
            name, tag, value = f.readline().rstrip("\n").split("\t")
            if tag not in tagset.tag_to_id:
                raise CrfError(f"unknown tag {tag!r} in {path}")
            key = (name, tagset.tag_to_id[tag])
            if key not in index:
                raise CrfError(f"unknown feature {name!r} in {path}")
            model.weights[index[key]] = float(value)
    return model
