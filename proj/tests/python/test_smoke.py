"""Smoke tests for the python bindings."""

import math

import pytest

import medrex


@pytest.fixture
def fixture_corpus(tmp_path):
    (tmp_path / "txt").mkdir()
    (tmp_path / "con").mkdir()
    (tmp_path / "rel").mkdir()
    (tmp_path / "txt" / "doc1.txt").write_text(
        "Given her fever the patient was treated with Ceptaz and Levaquin .\n"
        "His rash is diagnosed with steroids .\n"
    )
    (tmp_path / "con" / "doc1.con").write_text(
        'c="fever" 1:2 1:2||t="problem"\n'
        'c="Ceptaz" 1:8 1:8||t="treatment"\n'
        'c="Levaquin" 1:10 1:10||t="treatment"\n'
        'c="rash" 2:1 2:1||t="problem"\n'
        'c="steroids" 2:5 2:5||t="treatment"\n'
    )
    (tmp_path / "rel" / "doc1.rel").write_text(
        'c="Ceptaz" 1:8 1:8||r="TrAP"||c="fever" 1:2 1:2\n'
        'c="Levaquin" 1:10 1:10||r="TrAP"||c="fever" 1:2 1:2\n'
        'c="steroids" 2:5 2:5||r="TrAP"||c="rash" 2:1 2:1\n'
    )
    return medrex.load_corpus_root(tmp_path)


def test_tokenize():
    tokens = medrex.tokenize_line("Given her fever .")
    assert [t.text for t in tokens] == ["Given", "her", "fever", "."]
    assert [t.index for t in tokens] == [0, 1, 2, 3]


def test_concept_round_trip():
    line = 'c="rapid atrial fibrillation" 3:4 3:6||t="problem"'
    span = medrex.parse_concept_line(line)
    assert span.ctype == medrex.ConceptType.Problem
    assert medrex.serialize_concept(span) == line
    with pytest.raises(medrex.ParseError):
        medrex.parse_concept_line('c="fever" 5:2 4:2||t="problem"')


def test_relation_round_trip():
    line = 'c="Ceptaz" 7:9 7:9||r="TrAP"||c="fever" 7:2 7:2'
    first, second, label = medrex.parse_relation_line(line)
    assert label == medrex.RelationLabel.TrAP
    assert medrex.serialize_relation(first, second, label) == line


def test_position_vector():
    span = medrex.ConceptSpan()
    span.tok_start = span.tok_end = 1
    assert medrex.position_vector(5, span) == [-1, 0, 1, 2, 3]
    span.tok_start = span.tok_end = 4
    assert medrex.position_vector(5, span) == [-4, -3, -2, -1, 0]


def test_corpus_and_candidates(fixture_corpus):
    corpus = fixture_corpus
    assert len(corpus.sentences) == 2
    assert corpus.num_concepts == 5
    assert len(corpus.gold_relations) == 3

    candidates = medrex.generate_candidates(corpus)
    assert len(candidates) == 3
    assert all(c.label == medrex.RelationLabel.TrAP for c in candidates)


def test_rules_worked_example(tmp_path):
    sentence = medrex.Sentence()
    sentence.doc_id = "doc1"
    sentence.line = 1
    sentence.tokens = medrex.tokenize_line(
        "Given her fever the patient was treated with Ceptaz and Levaquin ."
    )
    problem = medrex.ConceptSpan()
    problem.text, problem.line = "fever", 1
    problem.tok_start = problem.tok_end = 2
    problem.ctype = medrex.ConceptType.Problem
    treatment = medrex.ConceptSpan()
    treatment.text, treatment.line = "Ceptaz", 1
    treatment.tok_start = treatment.tok_end = 8
    treatment.ctype = medrex.ConceptType.Treatment
    inst = medrex.make_instance(sentence, treatment, problem)

    assert medrex.surface_path(inst) == ["the", "patient", "was", "treated", "with"]

    verb_file = tmp_path / "verbs.tsv"
    verb_file.write_text("TrAP\ttreated\n")
    verbs = medrex.load_verbs(verb_file)
    assert medrex.rule_predict(inst, [], verbs) == medrex.RelationLabel.TrAP

    pattern = medrex.parse_pattern(
        "<problem> the patient was treated with <treatment>",
        medrex.RelationLabel.TrAP,
    )
    assert medrex.match_pattern(pattern, inst)


def test_train_predict_and_model_io(fixture_corpus, tmp_path):
    corpus = fixture_corpus
    vocab = medrex.build_vocab(corpus)
    top = medrex.top_pos_sequences(corpus)
    counts = medrex.CooccurrenceCounts.build(corpus)
    lexicons = medrex.AssertionLexicons()

    candidates = medrex.generate_candidates(corpus)
    encoded = [
        medrex.encode_instance(c, vocab, top, counts, lexicons)
        for c in candidates
    ]
    assert all(len(e.word_ids) == len(e.pos_to_treatment) for e in encoded)
    assert len(encoded[0].sentence_features) == 108

    config = medrex.TrainConfig()
    config.epochs = 2
    config.lstm_hidden = 4
    config.d_w = 6
    config.d_p = 3
    config.d_c = 3
    config.d_pos = 2
    config.p_max = 10
    config.batch_size = 4
    config.seed = 5
    dims = medrex.VocabDims(vocab.word_count, vocab.pos_count, vocab.chunk_count)
    result = medrex.train(encoded, config, dims)
    assert len(result.epoch_losses) == 2
    assert all(math.isfinite(loss) for loss in result.epoch_losses)

    label, probs = medrex.predict(result.model, encoded[0])
    assert isinstance(label, medrex.RelationLabel)
    assert abs(sum(probs) - 1.0) < 1e-9

    path = tmp_path / "model.bin"
    medrex.save_model(result.model, path)
    reloaded = medrex.load_model(path)
    label2, probs2 = medrex.predict(reloaded, encoded[0])
    assert label2 == label
    assert probs2 == probs

    with pytest.raises(medrex.ModelFormatError):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"XXXX not a model")
        medrex.load_model(bad)


def test_merge_and_evaluate(fixture_corpus):
    corpus = fixture_corpus
    candidates = medrex.generate_candidates(corpus)
    gold = medrex.gold_set(candidates)

    network = {k: medrex.RelationLabel.Null for k in gold}
    some_key = medrex.key_of(candidates[0])
    rules = {some_key: medrex.RelationLabel.TrIP}
    merged = medrex.merge_predictions(network, rules)
    assert merged[some_key] == medrex.RelationLabel.TrIP

    report = medrex.evaluate(gold, merged)
    assert report.total.fn == 3  # every gold TrAP missed, one of them as TrIP
    assert report.total.fp == 1
    table = report.to_table()
    assert "Total" in table and "TrAP" in table


def test_pmi_values():
    counts = medrex.CooccurrenceCounts()
    counts.num_sentences = 100
    assert medrex.compute_pmi(counts, "t", "p") == pytest.approx(math.log(100))
