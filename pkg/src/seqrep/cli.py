"""Command-line front end.

Subcommands mirror the library layers: HMM training and type-table
construction over raw sentence files, CRF training/tagging/evaluation over
CoNLL-style files, plus the two report harnesses and the synthetic
benchmark generator.  Report subcommands write TSV, an aligned text table,
and a rendered figure into the output directory.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import corpus, crf, hmm, hmm_train, pipeline, representations


def _chain_sentences(paths):
    def stream():
        for p in paths:
            yield from corpus.read_sentences(p)
    return stream


def cmd_train_hmm(args) -> int:
    stream = _chain_sentences(args.input)
    if args.vocab_in:
        vocab = corpus.load_vocabulary(args.vocab_in)
    else:
        vocab = corpus.build_vocabulary(stream(), min_count=args.min_count,
                                        lowercase=args.lowercase)
    config = hmm_train.TrainConfig(
        n_classes=args.n_classes, k=args.k, exact=args.exact,
        alpha=args.alpha, t0=args.t0, minibatch=args.minibatch,
        burn_in=args.burn_in, epochs=args.epochs, seed=args.seed,
        smoothing=args.smoothing, shuffle=args.shuffle)
    progress: list = []
    model = hmm_train.train_hmm(stream, vocab, config, progress=progress)
    hmm.save_hmm(model, args.out_model)
    corpus.save_vocabulary(vocab, args.out_vocab)
    for seen, avg_ll in progress:
        print(f"{seen} sequences: avg per-token ll {avg_ll:.4f}")
    print(f"wrote {args.out_model} (N={model.n_classes}, V={model.vocab_size})"
          f" and {args.out_vocab}")
    return 0


def cmd_build_typerep(args) -> int:
    model = hmm.load_hmm(args.hmm)
    vocab = corpus.load_vocabulary(args.vocab)
    stream = _chain_sentences(args.input)
    k = model.n_classes if args.exact or args.k is None else args.k
    table = representations.build_type_table(model, stream(), vocab, k=k)
    representations.save_typerep(table, args.out)
    print(f"wrote {args.out} ({len(table.forms)} types, N={table.n_classes})")
    return 0


def _load_provider(template, base_dir: Path):
    """Build the representation provider a serialized tagger asks for."""
    if template.rep_kind == "none":
        return None

    def resolve(p):
        path = Path(p)
        if not path.is_file() and (base_dir / path).is_file():
            path = base_dir / path
        return path

    model = hmm.load_hmm(resolve(template.hmm_path))
    vocab = corpus.load_vocabulary(resolve(template.vocab_path))
    table = None
    if template.rep_kind in ("posterior_type", "posterior_both"):
        table = representations.load_typerep(resolve(template.typerep_path))
    return representations.RepresentationProvider(
        kind=template.rep_kind, model=model, vocab=vocab, table=table,
        log_features=template.log_features)


def cmd_train_crf(args) -> int:
    tagset = corpus.default_tagset()
    raw = corpus.read_conll(args.train)
    vocab_for_ids = corpus.build_vocabulary((forms for forms, _ in raw))
    data = corpus.label_sentences(raw, vocab_for_ids, tagset)
    if args.rep == "none":
        provider = None
        template = crf.FeatureTemplateConfig(rep_kind="none")
    else:
        if not args.hmm or not args.vocab:
            print("error: --hmm and --vocab are required for this "
                  "representation", file=sys.stderr)
            return 2
        needs_table = args.rep in ("posterior_type", "posterior_both")
        if needs_table and not args.typerep:
            print("error: --typerep is required for this representation",
                  file=sys.stderr)
            return 2
        model = hmm.load_hmm(args.hmm)
        vocab = corpus.load_vocabulary(args.vocab)
        table = (representations.load_typerep(args.typerep)
                 if needs_table else None)
        provider = representations.RepresentationProvider(
            kind=args.rep, model=model, vocab=vocab, table=table,
            log_features=args.log_features)
        template = crf.template_for_provider(
            provider, window=args.window, hmm_path=args.hmm or "",
            vocab_path=args.vocab or "", typerep_path=args.typerep or "")
    options = crf.TrainOptions(l2=args.l2, max_iters=args.max_iters,
                               tol=args.tol)
    model = crf.train_crf(data, template, provider, options, tagset=tagset)
    crf.save_crf(model, args.out)
    print(f"wrote {args.out} ({model.n_slots} weight slots)")
    return 0


def cmd_tag(args) -> int:
    model = crf.load_crf(args.model)
    provider = _load_provider(model.template, Path(args.model).parent)
    tagged = []
    for forms in corpus.read_sentences(args.input):
        tags = crf.tag_sequence(model, provider, forms)
        tagged.append((forms, tags))
    corpus.write_conll(args.out, tagged)
    print(f"wrote {args.out} ({len(tagged)} sentences)")
    return 0


def cmd_eval(args) -> int:
    model = crf.load_crf(args.model)
    provider = _load_provider(model.template, Path(args.model).parent)
    raw = corpus.read_conll(args.test)
    data = corpus.label_sentences(raw, model.train_vocab, model.tagset)
    report = pipeline.evaluate(model, data, provider=provider)
    print(f"token accuracy {report.token_accuracy:.2f}% "
          f"({report.n_tokens} tokens)")
    print(f"oov accuracy   {report.oov_accuracy:.2f}% "
          f"({report.n_oov} tokens, rate {report.oov_rate:.2f}%)")
    if args.confusion:
        tags = model.tagset.id_to_tag
        width = max(len(t) for t in tags) + 1
        print("".join(f"{t:>{width}}" for t in ("",) + tags))
        for g, row in enumerate(report.per_tag_counts):
            print(f"{tags[g]:>{width}}"
                  + "".join(f"{int(c):>{width}}" for c in row))
    return 0


def _experiment_config(args) -> pipeline.ExperimentConfig:
    hmm_cfg = hmm_train.TrainConfig(
        n_classes=args.hmm_classes, minibatch=64, epochs=args.hmm_epochs,
        burn_in=4, seed=args.seed + 1)
    return pipeline.ExperimentConfig(
        seed=args.seed, hmm=hmm_cfg, window=args.window,
        crf_options=crf.TrainOptions(l2=args.l2, max_iters=args.max_iters,
                                     tol=args.tol))


def cmd_table1(args) -> int:
    from . import figures
    config = _experiment_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = pipeline.make_synthetic_domains(config.seed, config.synth)
    print(f"benchmark ready: target-test OOV rate {data.oov_rate * 100:.1f}%")
    results = pipeline.run_table1(config, data, on_error="record")
    pipeline.write_tsv(pipeline.table1_tsv_rows(results),
                       out_dir / "table1.tsv")
    text = pipeline.format_table1(results, config.modes)
    (out_dir / "table1.txt").write_text(text + "\n", encoding="utf-8")
    figures.render_table1(results, out_dir / "table1.png", config.modes)
    print(text)
    print(f"wrote table1.tsv, table1.txt, table1.png under {out_dir}")
    failed = [k for k, v in results.items()
              if not isinstance(v, pipeline.EvalReport)]
    for key in failed:
        print(f"FAILED cell {key}: {results[key]}", file=sys.stderr)
    return 1 if failed else 0


def cmd_learning_curve(args) -> int:
    from . import figures
    config = _experiment_config(args)
    config.target_counts = tuple(int(c) for c in args.counts.split(","))
    config.curve_rep = args.rep
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = pipeline.make_synthetic_domains(config.seed, config.synth)
    print(f"benchmark ready: target-test OOV rate {data.oov_rate * 100:.1f}%")
    try:
        points = pipeline.run_learning_curve(config, data)
    except Exception as exc:
        print(f"FAILED: {exc}", file=sys.stderr)
        return 1
    pipeline.write_tsv(pipeline.curve_tsv_rows(points),
                       out_dir / "learning_curve.tsv")
    text = pipeline.format_curve(points)
    (out_dir / "learning_curve.txt").write_text(text + "\n", encoding="utf-8")
    figures.render_curve(points, out_dir / "learning_curve.png")
    print(text)
    print(f"wrote learning_curve.tsv, learning_curve.txt, learning_curve.png "
          f"under {out_dir}")
    return 0


def cmd_synth_gen(args) -> int:
    data = pipeline.make_synthetic_domains(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus.write_sentences(out_dir / "source_unlabeled.txt",
                           data.source_unlabeled)
    corpus.write_sentences(out_dir / "target_unlabeled.txt",
                           data.target_unlabeled)

    def conll_pairs(seqs):
        return [(ls.tokens.raw, [data.tagset.id_to_tag[t] for t in ls.tags])
                for ls in seqs]

    corpus.write_conll(out_dir / "source_labeled.conll",
                       conll_pairs(data.source_labeled))
    corpus.write_conll(out_dir / "target_labeled.conll",
                       conll_pairs(data.target_labeled))
    corpus.write_conll(out_dir / "target_test.conll",
                       conll_pairs(data.target_test))
    (out_dir / "meta.txt").write_text(
        f"seed {args.seed}\noov_rate {data.oov_rate:.6f}\n"
        f"target_mix {data.mix:.6f}\n", encoding="utf-8")
    print(f"wrote benchmark corpora under {out_dir} "
          f"(target-test OOV rate {data.oov_rate * 100:.1f}%)")
    return 0


def _add_experiment_options(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="results")
    p.add_argument("--hmm-classes", type=int, default=28)
    p.add_argument("--hmm-epochs", type=int, default=4)
    p.add_argument("--window", type=int, default=0)
    p.add_argument("--l2", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=80)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqrep",
        description="HMM word representations for domain-adapted tagging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-hmm", help="online EM over sentence files")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-vocab", required=True)
    p.add_argument("--vocab-in", help="reuse an existing vocabulary file")
    p.add_argument("--n-classes", type=int, default=128)
    p.add_argument("--k", type=int, default=None,
                   help="beam width (default: 3*log2(N) capped at N)")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--t0", type=float, default=2.0)
    p.add_argument("--minibatch", type=int, default=128)
    p.add_argument("--burn-in", type=int, default=8)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smoothing", type=float, default=None)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--shuffle", action="store_true")
    p.set_defaults(fn=cmd_train_hmm)

    p = sub.add_parser("build-typerep",
                       help="average token posteriors per word type")
    p.add_argument("--hmm", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--exact", action="store_true")
    p.set_defaults(fn=cmd_build_typerep)

    p = sub.add_parser("train-crf", help="fit a tagger on CoNLL data")
    p.add_argument("--train", required=True)
    p.add_argument("--rep", default="none",
                   choices=representations.REP_KINDS)
    p.add_argument("--hmm")
    p.add_argument("--vocab")
    p.add_argument("--typerep")
    p.add_argument("--window", type=int, default=0)
    p.add_argument("--log-features", action="store_true")
    p.add_argument("--l2", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_crf)

    p = sub.add_parser("tag", help="tag raw sentences with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_tag)

    p = sub.add_parser("eval", help="score a tagger on CoNLL data")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--confusion", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("table1",
                       help="representation x corpus-mode grid on the "
                            "synthetic benchmark")
    _add_experiment_options(p)
    p.set_defaults(fn=cmd_table1)

    p = sub.add_parser("learning-curve",
                       help="accuracy vs added labeled target sentences")
    _add_experiment_options(p)
    p.add_argument("--counts", default="0,10,30,100,300,1000")
    p.add_argument("--rep", default="posterior_both",
                   choices=[k for k in representations.REP_KINDS
                            if k != "none"])
    p.set_defaults(fn=cmd_learning_curve)

    p = sub.add_parser("synth-gen", help="write the benchmark corpora")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_synth_gen)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
