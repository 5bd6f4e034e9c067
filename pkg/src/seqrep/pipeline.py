"""Experiment orchestration: evaluation, the corpus-mixing grid, the
target-data learning curve, and a synthetic two-domain benchmark.

The benchmark substitutes for licensed corpora: a 12-class generating HMM
plays the role of gold part-of-speech structure, the source and target
domains share its transitions but only part of its vocabulary, and the
target-only emission mass is tuned by bisection until the target test set's
out-of-vocabulary rate against the source labeled data lands in a band
(default 30-40%) comparable to real cross-domain tagging.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import (LabeledSequence, Tagset, Vocabulary, build_vocabulary,
                     default_tagset, encode, oov_mask)
from .crf import (CrfModel, FeatureTemplateConfig, TrainOptions, decode,
                  template_for_provider, train_crf)
from .hmm import HmmModel
from .hmm_train import TrainConfig, train_hmm
from .representations import (REP_DISPLAY, Representation,
                              RepresentationProvider, TypeRepTable,
                              build_type_table)

MODES = ("source", "both", "target")


class PipelineError(ValueError):
    """Raised for invalid experiment configurations or data."""


@dataclass
class EvalReport:
    """Tagging quality on one test set.

    ``oov_accuracy`` is restricted to tokens whose form never occurs in the
    tagger's labeled training data; it is 0.0 when no such token exists.
    ``per_tag_counts[g, p]`` counts gold tag g predicted as p.
    """

    token_accuracy: float
    oov_accuracy: float
    oov_rate: float
    per_tag_counts: np.ndarray
    n_tokens: int
    n_oov: int


def evaluate(model: CrfModel, test: Sequence[LabeledSequence],
             train_vocab: Vocabulary | None = None,
             provider: RepresentationProvider | None = None) -> EvalReport:
    """Token and out-of-vocabulary accuracy of a tagger on labeled data."""
    if not test:
        raise PipelineError("empty test set")
    if train_vocab is None:
        train_vocab = model.train_vocab
    T = model.tagset.T
    confusion = np.zeros((T, T), dtype=np.int64)
    n_tokens = n_correct = n_oov = n_oov_correct = 0
    for ls in test:
        forms = ls.tokens.raw
        if forms is None:
            raise PipelineError("test sequences must carry raw forms")
        reps = (provider.represent(forms) if provider is not None
                else Representation(kind="none"))
        pred = decode(model, forms, reps)
        hits = pred == ls.tags
        np.add.at(confusion, (ls.tags, pred), 1)
        mask = np.asarray(oov_mask(train_vocab, ls.tokens))
        n_tokens += len(forms)
        n_correct += int(hits.sum())
        n_oov += int(mask.sum())
        n_oov_correct += int(hits[mask].sum())
    return EvalReport(
        token_accuracy=100.0 * n_correct / n_tokens,
        oov_accuracy=(100.0 * n_oov_correct / n_oov) if n_oov else 0.0,
        oov_rate=100.0 * n_oov / n_tokens,
        per_tag_counts=confusion, n_tokens=n_tokens, n_oov=n_oov)


# ---------------------------------------------------------------------------
# Synthetic two-domain benchmark


@dataclass
class SynthConfig:
    """Shape of the generated benchmark.

    The generating chain runs over fine latent classes that project onto the
    coarse tagset (class c -> tag c mod T), the way fine syntactic states
    collapse onto coarse tags; transitions are sharp at the class level, so
    coarse tag bigrams alone underdetermine the context.  Per class the
    vocabulary has a shared slice plus a slice exclusive to each domain, and
    an ambiguous pool is shared between several classes so word identity
    alone cannot resolve those tokens.  The target-exclusive emission mass
    is the bisection knob for the OOV band.
    """

    n_classes: int = 24
    shared_per_class: int = 10
    source_only_per_class: int = 6
    target_only_per_class: int = 6
    n_ambiguous: int = 72
    ambiguous_mass: float = 0.30
    ambiguous_owners: tuple = (2, 3)
    source_only_mass: float = 0.25
    trans_shape: float = 0.15
    n_source_unlabeled: int = 1800
    n_target_unlabeled: int = 1800
    n_source_labeled: int = 300
    n_target_labeled: int = 1100
    n_target_test: int = 350
    min_len: int = 5
    max_len: int = 12
    zipf_s: float = 1.2
    oov_low: float = 0.30
    oov_high: float = 0.40

    def __post_init__(self):
        if not 0 < self.oov_low < self.oov_high < 1:
            raise PipelineError("need 0 < oov_low < oov_high < 1")
        if self.min_len < 1 or self.max_len < self.min_len:
            raise PipelineError("bad sentence length bounds")


@dataclass
class DomainData:
    """The five corpora of one benchmark instance plus its generation stats."""

    source_unlabeled: list
    target_unlabeled: list
    source_labeled: list
    target_labeled: list
    target_test: list
    tagset: Tagset
    oov_rate: float
    mix: float


class _Generator:
    """Generating HMM with per-domain emission rows."""

    def __init__(self, cfg: SynthConfig, structure_seed):
        rng = np.random.default_rng(structure_seed)
        C = cfg.n_classes
        trans = rng.gamma(cfg.trans_shape, size=(C, C))
        trans /= trans.sum(axis=1, keepdims=True)
        self.transition = 0.98 * trans + 0.02 / C
        init = rng.gamma(1.0, size=C)
        self.initial = init / init.sum()

        def zipf(n):
            w = (np.arange(1, n + 1)) ** (-cfg.zipf_s)
            return w / w.sum()

        # Vocabulary layout: per-class shared/source/target slices, then the
        # ambiguous pool, each type owned by exactly two classes.
        self.types = []
        self.shared_ids, self.src_ids, self.tgt_ids = [], [], []
        for c in range(C):
            self.shared_ids.append(self._add(f"w{c}.", cfg.shared_per_class))
            self.src_ids.append(self._add(f"s{c}.", cfg.source_only_per_class))
            self.tgt_ids.append(self._add(f"t{c}.", cfg.target_only_per_class))
        ambiguous = self._add("a", cfg.n_ambiguous)
        lo, hi = cfg.ambiguous_owners

        W = len(self.types)
        amb_rows = np.zeros((C, W))
        amb_w = zipf(cfg.n_ambiguous) if cfg.n_ambiguous else np.zeros(0)
        for j, tid in enumerate(ambiguous):
            n_own = int(rng.integers(lo, hi + 1))
            for c in rng.choice(C, size=n_own, replace=False):
                amb_rows[c, tid] += amb_w[j]
        self.cfg = cfg
        self.W = W
        self._zipf = zipf
        self._amb_rows = amb_rows

    def _add(self, prefix, n):
        ids = np.arange(len(self.types), len(self.types) + n)
        self.types.extend(f"{prefix}{i}" for i in range(n))
        return ids

    def emissions(self, domain: str, mix: float) -> np.ndarray:
        """Row-stochastic emission table for one domain.

        Slice masses are relative weights; each row is normalized, so a
        class owning no ambiguous types redistributes that mass.
        """
        cfg = self.cfg
        C = cfg.n_classes
        B = np.zeros((C, self.W))
        for c in range(C):
            B[c, self.shared_ids[c]] = self._zipf(len(self.shared_ids[c]))
            if domain == "source":
                excl, excl_mass = self.src_ids[c], cfg.source_only_mass
            else:
                excl, excl_mass = self.tgt_ids[c], mix
            B[c, self.shared_ids[c]] *= 1.0 - excl_mass - cfg.ambiguous_mass
            B[c, excl] = excl_mass * self._zipf(len(excl))
            amb = self._amb_rows[c]
            if amb.sum() > 0:
                B[c] += cfg.ambiguous_mass * amb / amb.sum()
        return B / B.sum(axis=1, keepdims=True)

    def sample_corpus(self, n_sentences: int, emission: np.ndarray, seed):
        """(class paths, form lists) for one corpus, inverse-CDF sampling."""
        rng = np.random.default_rng(seed)
        cfg = self.cfg
        trans_cum = np.cumsum(self.transition, axis=1)
        init_cum = np.cumsum(self.initial)
        emis_cum = np.cumsum(emission, axis=1)
        lengths = rng.integers(cfg.min_len, cfg.max_len + 1, size=n_sentences)
        C = cfg.n_classes
        paths, sents = [], []
        for K in lengths:
            u = rng.random(K)
            path = np.empty(K, dtype=np.int64)
            path[0] = min(np.searchsorted(init_cum, u[0]), C - 1)
            for t in range(1, K):
                path[t] = min(np.searchsorted(trans_cum[path[t - 1]], u[t]),
                              C - 1)
            w = rng.random(K)
            words = np.minimum(
                np.array([np.searchsorted(emis_cum[c], x)
                          for c, x in zip(path, w)], dtype=np.int64),
                self.W - 1)
            paths.append(path)
            sents.append([self.types[i] for i in words])
        return paths, sents


def make_synthetic_domains(seed: int,
                           cfg: SynthConfig | None = None) -> DomainData:
    """Generate the benchmark; identical seeds give byte-identical corpora.

    All randomness flows from child streams of one seed sequence, and the
    target-exclusive mass is bisected against the measured target-test OOV
    rate, so the construction is a pure function of (seed, cfg).
    """
    if cfg is None:
        cfg = SynthConfig()
    children = np.random.SeedSequence(seed).spawn(6)
    s_struct, s_su, s_tu, s_sl, s_tl, s_tt = children
    gen = _Generator(cfg, s_struct)
    src_emis = gen.emissions("source", 0.0)

    _, src_unlab = gen.sample_corpus(cfg.n_source_unlabeled, src_emis, s_su)
    src_lab_paths, src_lab = gen.sample_corpus(
        cfg.n_source_labeled, src_emis, s_sl)
    src_lab_forms = {form for sent in src_lab for form in sent}

    def test_oov(mix: float) -> float:
        _, sents = gen.sample_corpus(cfg.n_target_test,
                                     gen.emissions("target", mix), s_tt)
        n = sum(len(s) for s in sents)
        oov = sum(form not in src_lab_forms for s in sents for form in s)
        return oov / n

    mid = 0.5 * (cfg.oov_low + cfg.oov_high)
    lo, hi = 0.0, 0.9
    mix = 0.5 * (lo + hi)
    for _ in range(40):
        rate = test_oov(mix)
        if cfg.oov_low + 0.01 <= rate <= cfg.oov_high - 0.01:
            break
        if rate < mid:
            lo = mix
        else:
            hi = mix
        mix = 0.5 * (lo + hi)
    rate = test_oov(mix)
    if not cfg.oov_low <= rate <= cfg.oov_high:
        raise PipelineError(
            f"could not reach OOV band: rate {rate:.3f} at mix {mix:.3f}")

    tgt_emis = gen.emissions("target", mix)
    _, tgt_unlab = gen.sample_corpus(cfg.n_target_unlabeled, tgt_emis, s_tu)
    tgt_lab_paths, tgt_lab = gen.sample_corpus(cfg.n_target_labeled,
                                               tgt_emis, s_tl)
    tgt_test_paths, tgt_test = gen.sample_corpus(cfg.n_target_test,
                                                 tgt_emis, s_tt)

    tagset = default_tagset()
    full_vocab = build_vocabulary([gen.types])

    def labeled(paths, sents, domain):
        return [LabeledSequence(tokens=encode(full_vocab, s),
                                tags=p % tagset.T, domain_label=domain)
                for p, s in zip(paths, sents)]

    return DomainData(
        source_unlabeled=src_unlab, target_unlabeled=tgt_unlab,
        source_labeled=labeled(src_lab_paths, src_lab, "source"),
        target_labeled=labeled(tgt_lab_paths, tgt_lab, "target"),
        target_test=labeled(tgt_test_paths, tgt_test, "target"),
        tagset=tagset, oov_rate=rate, mix=mix)


# ---------------------------------------------------------------------------
# Experiment grids


@dataclass
class ExperimentConfig:
    """Everything the two experiment harnesses need.

    The trained-representation HMM deliberately has more classes than the
    benchmark's generating model so classes split and merge as they do on
    real text.
    """

    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    hmm: TrainConfig | None = None
    hmm_min_count: int = 2
    rep_kinds: tuple = ("none", "viterbi", "posterior_token",
                        "posterior_type", "posterior_both")
    modes: tuple = MODES
    window: int = 0
    crf_options: TrainOptions = field(default_factory=lambda: TrainOptions(
        l2=0.1, max_iters=80, tol=1e-3))
    target_counts: tuple = (0, 10, 30, 100, 300, 1000)
    curve_rep: str = "posterior_both"

    def hmm_config(self) -> TrainConfig:
        if self.hmm is not None:
            return self.hmm
        return TrainConfig(n_classes=28, minibatch=64, epochs=4, burn_in=4,
                           seed=self.seed + 1)


@dataclass
class ModeAssets:
    """HMM-side artifacts shared by every representation of one corpus mode."""

    vocab: Vocabulary
    model: HmmModel
    table: TypeRepTable


def build_mode_assets(data: DomainData, config: ExperimentConfig,
                      mode: str) -> ModeAssets:
    if mode == "source":
        corpus = data.source_unlabeled
    elif mode == "target":
        corpus = data.target_unlabeled
    elif mode == "both":
        corpus = data.source_unlabeled + data.target_unlabeled
    else:
        raise PipelineError(f"unknown corpus mode {mode!r}")
    vocab = build_vocabulary(corpus, min_count=config.hmm_min_count)
    model = train_hmm(corpus, vocab, config.hmm_config())
    table = build_type_table(model, corpus, vocab)
    return ModeAssets(vocab=vocab, model=model, table=table)


def provider_for(assets: ModeAssets | None, kind: str) -> RepresentationProvider | None:
    if kind == "none":
        return None
    return RepresentationProvider(kind=kind, model=assets.model,
                                  vocab=assets.vocab, table=assets.table)


def _fit_cell(train_data, provider, config) -> CrfModel:
    if provider is None:
        template = FeatureTemplateConfig(rep_kind="none")
    else:
        template = template_for_provider(provider, window=config.window)
    return train_crf(train_data, template, provider,
                     options=config.crf_options)


def run_table1(config: ExperimentConfig, data: DomainData | None = None,
               on_error: str = "raise") -> dict:
    """Train and score every (representation, corpus mode) cell.

    The taggers always train on source labeled data only; the corpus mode
    picks which unlabeled text the HMM saw.  Returns {(rep, mode):
    EvalReport}; the baseline consumes no HMM, so its row is computed once
    and replicated.  With on_error="record" a failed cell holds the error
    string instead of stopping the grid.
    """
    if data is None:
        data = make_synthetic_domains(config.seed, config.synth)
    results: dict = {}

    def run_cell(rep, mode, fn):
        try:
            results[(rep, mode)] = fn()
        except Exception as exc:
            if on_error != "record":
                raise PipelineError(f"cell ({rep}, {mode}): {exc}") from exc
            results[(rep, mode)] = f"FAILED: {exc}"

    if "none" in config.rep_kinds:
        try:
            baseline_model = _fit_cell(data.source_labeled, None, config)
            baseline = evaluate(baseline_model, data.target_test)
        except Exception as exc:
            if on_error != "record":
                raise PipelineError(f"cell (none, *): {exc}") from exc
            baseline = f"FAILED: {exc}"
        for mode in config.modes:
            results[("none", mode)] = baseline

    for mode in config.modes:
        hmm_reps = [r for r in config.rep_kinds if r != "none"]
        if not hmm_reps:
            continue
        try:
            assets = build_mode_assets(data, config, mode)
        except Exception as exc:
            if on_error != "record":
                raise PipelineError(f"mode {mode}: {exc}") from exc
            for rep in hmm_reps:
                results[(rep, mode)] = f"FAILED: {exc}"
            continue
        for rep in hmm_reps:
            def cell(rep=rep, assets=assets):
                provider = provider_for(assets, rep)
                model = _fit_cell(data.source_labeled, provider, config)
                return evaluate(model, data.target_test, provider=provider)
            run_cell(rep, mode, cell)
    return results


@dataclass
class CurvePoint:
    count: int
    labeled: str
    rep_kind: str
    report: EvalReport


def run_learning_curve(config: ExperimentConfig,
                       data: DomainData | None = None) -> list:
    """Accuracy as labeled target sentences are added.

    Grid: target count x {target-only, source+target labeled} x
    {baseline, config.curve_rep}; the target-only condition is undefined at
    n=0 and skipped.  Representations come from the both-domains HMM.
    """
    if data is None:
        data = make_synthetic_domains(config.seed, config.synth)
    counts = sorted(set(config.target_counts))
    if counts and counts[-1] > len(data.target_labeled):
        raise PipelineError(
            f"count {counts[-1]} exceeds target labeled pool "
            f"({len(data.target_labeled)} sentences)")
    assets = build_mode_assets(data, config, "both")
    rep_provider = provider_for(assets, config.curve_rep)

    points = []
    for n in counts:
        target_part = data.target_labeled[:n]
        pools = [("source+target", data.source_labeled + target_part)]
        if n > 0:
            pools.append(("target", target_part))
        for pool_label, train_data in pools:
            for rep_kind, provider in (("none", None),
                                       (config.curve_rep, rep_provider)):
                model = _fit_cell(train_data, provider, config)
                report = evaluate(model, data.target_test, provider=provider)
                points.append(CurvePoint(count=n, labeled=pool_label,
                                         rep_kind=rep_kind, report=report))
    return points


# ---------------------------------------------------------------------------
# Report rendering


def table1_tsv_rows(results: dict) -> list:
    """One row per cell: mode, representation, accuracy, oov accuracy."""
    rows = [("mode", "representation", "accuracy", "oov_accuracy")]
    for (rep, mode), value in sorted(results.items(),
                                     key=lambda kv: (kv[0][1], kv[0][0])):
        if isinstance(value, EvalReport):
            rows.append((mode, rep, f"{value.token_accuracy:.2f}",
                         f"{value.oov_accuracy:.2f}"))
        else:
            rows.append((mode, rep, str(value), ""))
    return rows


def format_table1(results: dict, modes: Sequence[str] = MODES) -> str:
    """Aligned table, representations down the side, corpus modes across."""
    reps = [r for r in REP_DISPLAY if any((r, m) in results for m in modes)]
    width = max(len(REP_DISPLAY[r]) for r in reps) if reps else 10
    header = "".join(f"{m.capitalize():>10}" for m in modes)
    lines = [f"{'':{width}}{header}"]
    for rep in reps:
        cells = []
        for mode in modes:
            value = results.get((rep, mode))
            if isinstance(value, EvalReport):
                cells.append(f"{value.token_accuracy:>10.1f}")
            elif value is None:
                cells.append(f"{'-':>10}")
            else:
                cells.append(f"{'FAILED':>10}")
        lines.append(f"{REP_DISPLAY[rep]:{width}}" + "".join(cells))
    return "\n".join(lines)


def curve_tsv_rows(points: list) -> list:
    rows = [("count", "labeled", "representation", "accuracy",
             "oov_accuracy")]
    for p in points:
        rows.append((str(p.count), p.labeled, p.rep_kind,
                     f"{p.report.token_accuracy:.2f}",
                     f"{p.report.oov_accuracy:.2f}"))
    return rows


def format_curve(points: list) -> str:
    conditions = []
    for p in points:
        key = (p.labeled, p.rep_kind)
        if key not in conditions:
            conditions.append(key)
    counts = sorted({p.count for p in points})
    by_key = {(p.count, p.labeled, p.rep_kind): p.report for p in points}
    width = max(len(f"{lab}/{rep}") for lab, rep in conditions)
    lines = [f"{'n':>6} " + "".join(f"{lab + '/' + rep:>{width + 2}}"
                                    for lab, rep in conditions)]
    for n in counts:
        cells = []
        for lab, rep in conditions:
            report = by_key.get((n, lab, rep))
            cells.append(f"{report.token_accuracy:>{width + 2}.1f}"
                         if report else f"{'-':>{width + 2}}")
        lines.append(f"{n:>6} " + "".join(cells))
    return "\n".join(lines)


def write_tsv(rows: list, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write("\t".join(row) + "\n")
