import numpy as np
import pytest

from helpers import random_hmm
from seqrep.corpus import TokenSequence, build_vocabulary, encode
from seqrep.hmm import HmmModel, forward_backward, kbest_forward_backward, viterbi
from seqrep.representations import (LOG_FLOOR, Representation,
                                    RepresentationError,
                                    RepresentationProvider, TypeRepTable,
                                    both_features, build_type_table,
                                    load_typerep, lookup_type_features,
                                    posterior_token_features, save_typerep,
                                    viterbi_features)


def contrast_world():
    """Two anchor words tied to different classes plus one ambiguous word."""
    corpus = [["a", "amb"], ["b", "amb"]]
    vocab = build_vocabulary(corpus)
    ia, ib, iamb = vocab.id_of("a"), vocab.id_of("b"), vocab.id_of("amb")
    emission = np.full((2, vocab.V), 0.05)
    emission[0, ia], emission[0, iamb] = 0.65, 0.25
    emission[1, ib], emission[1, iamb] = 0.65, 0.25
    emission /= emission.sum(axis=1, keepdims=True)
    model = HmmModel(initial=np.array([0.5, 0.5]),
                     transition=np.array([[0.9, 0.1], [0.1, 0.9]]),
                     emission=emission)
    return model, vocab, corpus


def test_viterbi_features_are_the_viterbi_path():
    rng = np.random.default_rng(0)
    model = random_hmm(4, 6, rng)
    seq = TokenSequence(ids=rng.integers(0, 6, size=8))
    assert np.array_equal(viterbi_features(model, seq), viterbi(model, seq))


def test_posterior_token_features_default_to_exact_inference():
    rng = np.random.default_rng(1)
    model = random_hmm(5, 7, rng)
    seq = TokenSequence(ids=rng.integers(0, 7, size=6))
    exact, _, _ = forward_backward(model, seq)
    assert np.array_equal(posterior_token_features(model, seq), exact)
    beamed, _, _ = kbest_forward_backward(model, seq, 2)
    assert np.array_equal(posterior_token_features(model, seq, k=2), beamed)


def test_type_rows_context_independent_while_token_rows_differ():
    model, vocab, corpus = contrast_world()
    table = build_type_table(model, corpus, vocab)
    seq1 = encode(vocab, corpus[0])
    seq2 = encode(vocab, corpus[1])

    tok1 = posterior_token_features(model, seq1)[1]
    tok2 = posterior_token_features(model, seq2)[1]
    assert np.max(np.abs(tok1 - tok2)) > 0.3  # context moves the posterior

    typ1 = lookup_type_features(table, seq1)[1]
    typ2 = lookup_type_features(table, seq2)[1]
    assert np.array_equal(typ1, typ2)


def test_single_occurrence_type_row_equals_its_token_posterior():
    model, vocab, corpus = contrast_world()
    table = build_type_table(model, corpus, vocab)
    post = posterior_token_features(model, encode(vocab, corpus[0]))
    assert np.array_equal(table.row_for("a"), post[0])


def test_two_occurrence_type_row_is_the_mean_of_its_posteriors():
    model, vocab, corpus = contrast_world()
    table = build_type_table(model, corpus, vocab)
    p1 = posterior_token_features(model, encode(vocab, corpus[0]))[1]
    p2 = posterior_token_features(model, encode(vocab, corpus[1]))[1]
    assert np.array_equal(table.row_for("amb"), (p1 + p2) / 2)
    assert table.z[list(table.forms).index("amb")] == 2


def test_build_type_table_matches_reference_accumulation():
    rng = np.random.default_rng(2)
    words = [f"w{i}" for i in range(8)]
    corpus = [[words[i] for i in rng.integers(0, 8, size=rng.integers(2, 6))]
              for _ in range(12)]
    vocab = build_vocabulary(corpus)
    model = random_hmm(3, vocab.V, rng)
    table = build_type_table(model, corpus, vocab)

    sums, counts = {}, {}
    for sent in corpus:
        post = posterior_token_features(model, encode(vocab, sent))
        for t, form in enumerate(sent):
            sums[form] = sums.get(form, 0) + post[t]
            counts[form] = counts.get(form, 0) + 1
    for form, count in counts.items():
        i = list(table.forms).index(form)
        assert table.z[i] == count
        assert np.allclose(table.rows[i], sums[form] / count, atol=1e-15)


def test_fallback_is_unk_row_when_unk_tokens_were_seen():
    corpus = [["a", "a", "rare"], ["a", "b", "b"]]
    vocab = build_vocabulary(corpus, min_count=2)  # rare folds to unk
    model = random_hmm(2, vocab.V, np.random.default_rng(3))
    table = build_type_table(model, corpus, vocab)
    seq = encode(vocab, corpus[0])
    unk_post = posterior_token_features(model, seq)[2]
    assert np.array_equal(table.fallback, unk_post)
    assert np.array_equal(table.row_for("never-seen"), unk_post)


def test_fallback_is_corpus_mean_without_unk_tokens():
    corpus = [["a", "b"], ["b", "a"]]
    vocab = build_vocabulary(corpus)
    model = random_hmm(2, vocab.V, np.random.default_rng(4))
    table = build_type_table(model, corpus, vocab)
    total = np.zeros(2)
    for sent in corpus:
        total += posterior_token_features(model, encode(vocab, sent)).sum(axis=0)
    assert np.allclose(table.fallback, total / 4, atol=1e-15)


def test_build_type_table_rejects_empty_corpus():
    vocab = build_vocabulary([["a"]])
    model = random_hmm(2, vocab.V, np.random.default_rng(5))
    with pytest.raises(RepresentationError):
        build_type_table(model, [], vocab)


def test_lookup_requires_raw_forms():
    model, vocab, corpus = contrast_world()
    table = build_type_table(model, corpus, vocab)
    with pytest.raises(RepresentationError):
        lookup_type_features(table, TokenSequence(ids=np.array([1])))


def test_both_features_concatenates_token_then_type():
    tok = np.array([[0.2, 0.8], [0.5, 0.5]])
    typ = np.array([[0.4, 0.6], [0.1, 0.9]])
    both = both_features(tok, typ)
    assert both.shape == (2, 4)
    assert np.array_equal(both[:, :2], tok)
    assert np.array_equal(both[:, 2:], typ)
    with pytest.raises(RepresentationError):
        both_features(tok, typ[:1])


def test_provider_widths_and_payloads():
    model, vocab, corpus = contrast_world()
    table = build_type_table(model, corpus, vocab)
    forms = ["a", "amb"]
    seq = encode(vocab, forms)

    prov = RepresentationProvider(kind="viterbi", model=model, vocab=vocab)
    rep = prov.represent(forms)
    assert rep.dense is None and prov.dense_width == 0
    assert np.array_equal(rep.categorical, viterbi(model, seq))

    prov = RepresentationProvider(kind="posterior_token", model=model, vocab=vocab)
    rep = prov.represent(forms)
    assert prov.dense_width == 2 and rep.width == 2
    assert np.array_equal(rep.dense, posterior_token_features(model, seq))

    prov = RepresentationProvider(kind="posterior_type", model=model,
                                  vocab=vocab, table=table)
    rep = prov.represent(forms)
    assert np.array_equal(rep.dense, lookup_type_features(table, seq))

    prov = RepresentationProvider(kind="posterior_both", model=model,
                                  vocab=vocab, table=table)
    rep = prov.represent(forms)
    assert prov.dense_width == 4 and rep.width == 4
    assert np.array_equal(rep.dense[:, :2], posterior_token_features(model, seq))
    assert np.array_equal(rep.dense[:, 2:], lookup_type_features(table, seq))

    none = RepresentationProvider(kind="none")
    assert none.represent(forms).kind == "none"


def test_provider_maps_unseen_forms_through_unk():
    model, vocab, corpus = contrast_world()
    prov = RepresentationProvider(kind="posterior_token", model=model, vocab=vocab)
    rep_unseen = prov.represent(["never-seen", "amb"])
    unk_form = vocab.id_to_type[vocab.unk_id]
    rep_unk = prov.represent([unk_form, "amb"])
    assert np.array_equal(rep_unseen.dense, rep_unk.dense)


def test_provider_log_transform():
    model, vocab, corpus = contrast_world()
    plain = RepresentationProvider(kind="posterior_token", model=model,
                                   vocab=vocab)
    logp = RepresentationProvider(kind="posterior_token", model=model,
                                  vocab=vocab, log_features=True)
    forms = ["a", "amb"]
    expected = np.log(np.maximum(plain.represent(forms).dense, LOG_FLOOR))
    assert np.array_equal(logp.represent(forms).dense, expected)


def test_provider_validation():
    model, vocab, _ = contrast_world()
    with pytest.raises(RepresentationError):
        RepresentationProvider(kind="nope")
    with pytest.raises(RepresentationError):
        RepresentationProvider(kind="posterior_token")  # no model
    with pytest.raises(RepresentationError):
        RepresentationProvider(kind="posterior_type", model=model, vocab=vocab)


def test_representation_validation_and_len():
    with pytest.raises(RepresentationError):
        Representation(kind="bogus")
    assert len(Representation(kind="none")) == 0
    rep = Representation(kind="posterior_token", dense=np.zeros((3, 2)))
    assert len(rep) == 3 and rep.width == 2
    cat = Representation(kind="viterbi", categorical=np.array([1, 0]))
    assert len(cat) == 2 and cat.width == 0


def test_typerep_file_round_trip_is_exact(tmp_path):
    model, vocab, corpus = contrast_world()
    table = build_type_table(model, corpus, vocab)
    path = tmp_path / "table.typerep"
    save_typerep(table, path)
    loaded = load_typerep(path)
    assert loaded.forms == table.forms
    assert np.array_equal(loaded.rows, table.rows)
    assert np.array_equal(loaded.z, table.z)
    assert np.array_equal(loaded.fallback, table.fallback)
    first = path.read_text(encoding="utf-8").splitlines()
    assert first[0] == f"SEQREP-TYPEREP 1 {len(table.forms)} 2"
    assert first[1].startswith("<fallback>\t0\t")


def test_load_typerep_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.typerep"
    path.write_text("WRONG 1 0 2\n", encoding="utf-8")
    with pytest.raises(RepresentationError):
        load_typerep(path)


def test_type_table_validation():
    with pytest.raises(RepresentationError):
        TypeRepTable(forms=("a",), rows=np.zeros((2, 3)), z=np.array([1, 1]),
                     fallback=np.zeros(3))
    with pytest.raises(RepresentationError):
        TypeRepTable(forms=("a",), rows=np.zeros((1, 3)), z=np.array([0]),
                     fallback=np.zeros(3))
