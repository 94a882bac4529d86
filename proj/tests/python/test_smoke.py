import math

import numpy as np
import pytest

import babyhgrn as bh


def tiny_config(vocab):
    cfg = bh.desk_hgrn2_config(vocab)
    cfg.hidden_size = 16
    cfg.num_layers = 2
    cfg.expand_ratio = 4
    cfg.hidden_ratio = 2
    return cfg


def test_logits_shape_and_causality():
    model = bh.LanguageModel(tiny_config(30), seed=1)
    a = model.logits(np.array([[1, 2, 3, 4]]))
    b = model.logits(np.array([[1, 2, 9, 9]]))
    assert a.shape == (1, 4, 30)
    np.testing.assert_array_equal(a[0, :2], b[0, :2])


def test_scan_paths_agree():
    rng = np.random.default_rng(0)
    q, k = rng.uniform(-1, 1, (2, 20, 8))
    f = rng.uniform(0, 1, (20, 8))
    v = rng.uniform(-1, 1, (20, 6))
    out_seq, state_seq = bh.gated_recurrence(q, f, k, v, heads=2)
    out_chunk, state_chunk = bh.gated_recurrence(q, f, k, v, heads=2, block=4)
    assert np.abs(out_seq - out_chunk).max() <= 1e-5
    assert np.abs(state_seq - state_chunk).max() <= 1e-5


def test_loss_identities():
    z = np.random.default_rng(1).normal(size=(3, 7)).astype(np.float32)
    assert bh.kd_loss(z, z) == 0.0
    assert bh.total_loss(1.25, 3.5, 0.0) == 1.25
    assert bh.total_loss(1.25, 3.5, 1.0) == 3.5
    assert bh.ce_loss(np.zeros((2, 2000)), [0, 5]) == pytest.approx(math.log(2000), abs=1e-5)


def test_lower_bounds_monotone():
    model = bh.LanguageModel(tiny_config(30), seed=2)
    beta = np.array(model.lower_bounds())
    assert beta.shape[0] == 2
    assert (np.diff(beta, axis=0) >= 0).all()
    assert (beta >= 0).all() and (beta < 1).all()


def test_bpe_round_trip(tmp_path):
    vocab = bh.BpeVocabulary.train(["the cat sat", "the cat ran"], 270)
    text = "the cat sat on ünïcode"
    assert vocab.decode(vocab.encode(text)) == text
    vocab.save(tmp_path / "v.json")
    assert bh.load_encoder(tmp_path / "v.json").encode(text) == vocab.encode(text)


def test_train_eval_and_checkpoint(tmp_path):
    grammar = bh.SyntheticGrammar()
    vocab = grammar.vocabulary()
    data = bh.pack(grammar.corpus(3000, 1), vocab, 32)
    model = bh.LanguageModel(tiny_config(vocab.vocab_size()), seed=3)
    config = {"epochs": 1, "batch_size": 8, "learning_rate": 3e-3, "sequence_length": 32,
              "output_dir": str(tmp_path / "run")}
    report = bh.train(model, data, config)
    assert report["steps"] > 0
    assert (tmp_path / "run" / "model.bhck").exists()

    reloaded = bh.LanguageModel.load(tmp_path / "run" / "model.bhck")
    assert reloaded.checkpoint_bytes() == model.checkpoint_bytes()

    pairs = grammar.minimal_pairs(20, 2)
    score = bh.eval_minimal_pairs(model, vocab, pairs)
    assert score["total"] == 20
    choices = bh.eval_choice(model, vocab, grammar.choice_instances(20, 4, 3), norm="per-token")
    assert 0 <= choices["accuracy"] <= 100
    ce = bh.mean_cross_entropy(model, data)
    assert bh.perplexity(model, data) == pytest.approx(math.exp(ce), rel=1e-9)
    assert round(bh.macro_average([69.4, 55.6, 50.7, 63.0]), 1) == 59.7


def test_errors_carry_kind():
    grammar = bh.SyntheticGrammar()
    data = bh.pack(grammar.corpus(2000, 1), grammar.vocabulary(), 32)
    model = bh.LanguageModel(tiny_config(grammar.vocabulary().vocab_size()), seed=4)
    with pytest.raises(bh.BabyHgrnError) as info:
        bh.train(model, data, {"sequence_length": 16})
    assert info.value.kind == "config"
    with pytest.raises(bh.BabyHgrnError) as info:
        bh.macro_average([])
    assert info.value.kind == "usage"


def test_sampling_is_seeded():
    plan = {"domains": [{"name": "a", "ratio": 0.75}, {"name": "b", "ratio": 0.25}]}
    pools = {"a": ["one two three"] * 50, "b": ["four five"] * 50}
    docs, manifest = bh.sample_corpus(plan, pools, 100, seed=5)
    again, manifest2 = bh.sample_corpus(plan, pools, 100, seed=5)
    assert docs == again and manifest == manifest2
    assert {d for d, _ in docs} == {"a", "b"}
