import re

import numpy as np
import pytest

from seqrep import pipeline
from seqrep.cli import main
from seqrep.corpus import (load_vocabulary, read_conll, read_sentences,
                           write_sentences)
from seqrep.crf import load_crf
from seqrep.hmm import load_hmm
from seqrep.pipeline import CurvePoint, EvalReport

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Benchmark corpora plus trained artifacts, built once via the CLI."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth-gen", "--seed", "0", "--out-dir", str(d / "bench")]) == 0
    unlabeled = [str(d / "bench" / "source_unlabeled.txt"),
                 str(d / "bench" / "target_unlabeled.txt")]
    assert main(["train-hmm", "--input", *unlabeled,
                 "--out-model", str(d / "m.hmm"),
                 "--out-vocab", str(d / "v.vocab"),
                 "--n-classes", "8", "--epochs", "1", "--minibatch", "64",
                 "--burn-in", "2", "--min-count", "2", "--seed", "5"]) == 0
    assert main(["build-typerep", "--hmm", str(d / "m.hmm"),
                 "--vocab", str(d / "v.vocab"), "--input", *unlabeled,
                 "--out", str(d / "t.typerep")]) == 0
    common = ["--train", str(d / "bench" / "source_labeled.conll"),
              "--l2", "0.1", "--max-iters", "40", "--tol", "1e-3"]
    assert main(["train-crf", *common, "--rep", "posterior_both",
                 "--hmm", str(d / "m.hmm"), "--vocab", str(d / "v.vocab"),
                 "--typerep", str(d / "t.typerep"),
                 "--out", str(d / "rep.crf")]) == 0
    assert main(["train-crf", *common, "--rep", "none",
                 "--out", str(d / "base.crf")]) == 0
    return d


def eval_accuracy(capsys, model, test) -> float:
    assert main(["eval", "--model", str(model), "--test", str(test)]) == 0
    out = capsys.readouterr().out
    m = re.search(r"token accuracy (\d+\.\d+)%", out)
    assert m, out
    return float(m.group(1))


def test_synth_gen_outputs(workspace):
    bench = workspace / "bench"
    for name in ("source_unlabeled.txt", "target_unlabeled.txt",
                 "source_labeled.conll", "target_labeled.conll",
                 "target_test.conll"):
        assert (bench / name).exists()
    meta = (bench / "meta.txt").read_text(encoding="utf-8")
    rate = float(re.search(r"oov_rate (\d+\.\d+)", meta).group(1))
    assert 0.30 <= rate <= 0.40
    assert len(read_conll(bench / "source_labeled.conll")) == 300


def test_trained_artifacts_load(workspace):
    model = load_hmm(workspace / "m.hmm")
    vocab = load_vocabulary(workspace / "v.vocab")
    assert model.n_classes == 8
    assert model.vocab_size == vocab.V
    tagger = load_crf(workspace / "rep.crf")
    assert tagger.template.rep_kind == "posterior_both"
    assert tagger.template.n_dense == 16
    # sidecar paths let the tagger reconstruct its provider later
    assert tagger.template.hmm_path.endswith("m.hmm")


def test_vocab_reuse_gives_identical_model(workspace, tmp_path):
    src = str(workspace / "bench" / "source_unlabeled.txt")
    args = ["--input", src, "--n-classes", "4", "--epochs", "1",
            "--minibatch", "32", "--burn-in", "1", "--seed", "2"]
    assert main(["train-hmm", *args, "--min-count", "2",
                 "--out-model", str(tmp_path / "a.hmm"),
                 "--out-vocab", str(tmp_path / "a.vocab")]) == 0
    assert main(["train-hmm", *args, "--vocab-in", str(tmp_path / "a.vocab"),
                 "--out-model", str(tmp_path / "b.hmm"),
                 "--out-vocab", str(tmp_path / "b.vocab")]) == 0
    a, b = load_hmm(tmp_path / "a.hmm"), load_hmm(tmp_path / "b.hmm")
    assert np.array_equal(a.emission, b.emission)


def test_tag_round_trip(workspace, tmp_path):
    sentences = [forms for forms, _ in
                 read_conll(workspace / "bench" / "target_test.conll")][:25]
    raw = tmp_path / "raw.txt"
    write_sentences(raw, sentences)
    out = tmp_path / "tagged.conll"
    assert main(["tag", "--model", str(workspace / "rep.crf"),
                 "--input", str(raw), "--out", str(out)]) == 0
    tagged = read_conll(out)
    assert len(tagged) == 25
    assert [f for f, _ in tagged] == sentences
    tagset = set(load_crf(workspace / "rep.crf").tagset.id_to_tag)
    assert all(t in tagset for _, tags in tagged for t in tags)


def test_representation_tagger_beats_baseline(workspace, capsys):
    test = workspace / "bench" / "target_test.conll"
    rep_acc = eval_accuracy(capsys, workspace / "rep.crf", test)
    base_acc = eval_accuracy(capsys, workspace / "base.crf", test)
    assert rep_acc > base_acc


def test_eval_confusion_table(workspace, capsys):
    assert main(["eval", "--model", str(workspace / "base.crf"),
                 "--test", str(workspace / "bench" / "target_test.conll"),
                 "--confusion"]) == 0
    out = capsys.readouterr().out
    assert "NOUN" in out and "oov accuracy" in out


def test_train_crf_requires_representation_inputs(workspace, capsys):
    train = str(workspace / "bench" / "source_labeled.conll")
    assert main(["train-crf", "--train", train, "--rep", "viterbi",
                 "--out", "x.crf"]) == 2
    assert main(["train-crf", "--train", train, "--rep", "posterior_type",
                 "--hmm", str(workspace / "m.hmm"),
                 "--vocab", str(workspace / "v.vocab"),
                 "--out", "x.crf"]) == 2
    err = capsys.readouterr().err
    assert "typerep" in err


def fake_report(acc):
    return EvalReport(token_accuracy=acc, oov_accuracy=acc / 2, oov_rate=35.0,
                      per_tag_counts=np.zeros((12, 12), dtype=np.int64),
                      n_tokens=100, n_oov=35)


class FakeData:
    oov_rate = 0.35
    mix = 0.3


def test_table1_command_writes_reports(monkeypatch, tmp_path, capsys):
    results = {(rep, mode): fake_report(70.0)
               for rep in ("none", "viterbi") for mode in pipeline.MODES}
    monkeypatch.setattr(pipeline, "make_synthetic_domains",
                        lambda seed, cfg=None: FakeData())
    monkeypatch.setattr(pipeline, "run_table1",
                        lambda config, data, on_error: results)
    out = tmp_path / "res"
    assert main(["table1", "--seed", "1", "--out-dir", str(out)]) == 0
    assert (out / "table1.tsv").exists()
    assert (out / "table1.txt").exists()
    assert (out / "table1.png").read_bytes()[:8] == PNG_MAGIC
    tsv = (out / "table1.tsv").read_text(encoding="utf-8").splitlines()
    assert len(tsv) == len(results) + 1


def test_table1_command_fails_on_failed_cell(monkeypatch, tmp_path, capsys):
    results = {("none", "source"): fake_report(70.0),
               ("viterbi", "source"): "FAILED: boom"}
    monkeypatch.setattr(pipeline, "make_synthetic_domains",
                        lambda seed, cfg=None: FakeData())
    monkeypatch.setattr(pipeline, "run_table1",
                        lambda config, data, on_error: results)
    assert main(["table1", "--out-dir", str(tmp_path / "res")]) == 1
    assert "FAILED cell" in capsys.readouterr().err


def test_learning_curve_command_writes_reports(monkeypatch, tmp_path):
    def fake_curve(config, data):
        assert config.target_counts == (0, 5)
        return [CurvePoint(count=n, labeled="source+target", rep_kind=rep,
                           report=fake_report(60.0 + n))
                for n in (0, 5) for rep in ("none", "posterior_both")]

    monkeypatch.setattr(pipeline, "make_synthetic_domains",
                        lambda seed, cfg=None: FakeData())
    monkeypatch.setattr(pipeline, "run_learning_curve", fake_curve)
    out = tmp_path / "res"
    assert main(["learning-curve", "--counts", "0,5",
                 "--out-dir", str(out)]) == 0
    assert (out / "learning_curve.tsv").exists()
    assert (out / "learning_curve.txt").exists()
    assert (out / "learning_curve.png").read_bytes()[:8] == PNG_MAGIC


def test_learning_curve_command_reports_failure(monkeypatch, tmp_path, capsys):
    def boom(config, data):
        raise pipeline.PipelineError("count 99 exceeds target labeled pool")

    monkeypatch.setattr(pipeline, "make_synthetic_domains",
                        lambda seed, cfg=None: FakeData())
    monkeypatch.setattr(pipeline, "run_learning_curve", boom)
    assert main(["learning-curve", "--counts", "0,99",
                 "--out-dir", str(tmp_path / "res")]) == 1
    assert "FAILED" in capsys.readouterr().err


def test_synth_gen_sentences_parse(workspace):
    sents = list(read_sentences(workspace / "bench" / "source_unlabeled.txt"))
    assert len(sents) == 1800
    assert all(5 <= len(s) <= 12 for s in sents)
