import numpy as np
import pytest

from debias_tagger.corpus import build_vocab
from debias_tagger.model import save_model
from debias_tagger.neural import (Gradients, NumericError, init_params, make_gold_examples,
                                  make_projected_examples)
from debias_tagger.training import (ConfigError, EpochRecord, TrainConfig, _CyclingStream,
                                    accuracy, best_epoch, joint_train, load_config,
                                    parse_key_values, pretrain, sgd_update, train_pipeline)


def rec(acc, epoch=1):
    return EpochRecord("pretrain", epoch, 0.0, acc, 0.0)


@pytest.mark.parametrize("field,value", [
    ("emb_dim", 0), ("hidden_dim", -1), ("lr", 0.0), ("patience", -1),
    ("stage1_epochs", -2), ("proj_per_gold", -1), ("clip_norm", 0.0), ("min_count", 0),
])
def test_config_rejects(field, value):
    with pytest.raises(ConfigError):
        TrainConfig(**{field: value})


def test_parse_key_values_comments_and_blanks():
    text = "# header\nlr = 0.5  # inline\n\n  seed=7\n"
    assert parse_key_values(text) == {"lr": "0.5", "seed": "7"}


def test_parse_key_values_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_key_values("lr 0.5\n")


def test_load_config_overrides_win(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("lr = 0.5\nseed = 1\nhidden_dim = 16\n", encoding="utf-8")
    c = load_config(p, {"seed": "9"})
    assert (c.lr, c.seed, c.hidden_dim) == (0.5, 9, 16)


def test_load_config_unknown_key(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("learning_rate = 0.5\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="learning_rate"):
        load_config(p)


def test_load_config_bad_value():
    with pytest.raises(ConfigError):
        load_config(None, {"seed": "abc"})


def test_best_epoch_earliest_maximum():
    assert best_epoch([rec(0.5), rec(0.7), rec(0.7), rec(0.6)]) == 1


def test_best_epoch_skips_missing_dev():
    assert best_epoch([rec(None), rec(None)]) is None
    assert best_epoch([rec(None), rec(0.1)]) == 1


def _grads(params, value):
    arrays = {name: np.full_like(arr, value) for name, arr in params.named_arrays() if name != "E"}
    return Gradients(arrays, np.array([1]), np.full((1, params.emb_dim), value), params.vocab_size)


def test_sgd_update_clips_global_norm():
    p = init_params(3, 2, 4, 3, seed=0)
    before = p.copy()
    g = _grads(p, 1.0)
    norm = g.global_norm()
    assert norm > 1.0
    sgd_update(p, g, lr=0.5, clip_norm=1.0)
    step = 0.5 * 1.0 / norm
    np.testing.assert_allclose(before.W_fwd - p.W_fwd, step)
    np.testing.assert_allclose(before.E[1] - p.E[1], step)
    np.testing.assert_array_equal(before.E[0], p.E[0])


def test_sgd_update_rejects_non_finite():
    p = init_params(3, 2, 4, 3, seed=0)
    with pytest.raises(NumericError):
        sgd_update(p, _grads(p, np.nan), lr=1.0, clip_norm=5.0)


def test_cycling_stream_single_item():
    s = _CyclingStream(["only"], np.random.default_rng(0))
    assert [s.next() for _ in range(5)] == ["only"] * 5


def test_cycling_stream_covers_each_pass():
    s = _CyclingStream(list(range(7)), np.random.default_rng(0))
    for _ in range(3):
        assert sorted(s.next() for _ in range(7)) == list(range(7))


@pytest.fixture
def examples(toy_data):
    vocab = build_vocab(toy_data["train"].token_sequences() + toy_data["projected"].token_sequences())
    return {
        "vocab": vocab,
        "gold": make_gold_examples(toy_data["train"], vocab),
        "dev": make_gold_examples(toy_data["dev"], vocab),
        "proj": make_projected_examples(toy_data["projected"], vocab),
    }


def fresh(examples, cfg):
    return init_params(cfg.emb_dim, cfg.hidden_dim, len(examples["vocab"]), 3, 3, seed=cfg.seed)


def test_pretrain_returns_best_dev_epoch(examples, tiny_config):
    cfg = tiny_config.replace(stage1_epochs=6, patience=10)
    params, report = pretrain(fresh(examples, cfg), examples["gold"], examples["dev"], cfg)
    accs = [r.dev_accuracy for r in report.epochs]
    assert len(accs) == 6
    assert report.chosen == int(np.argmax(accs))
    assert accuracy(params, examples["dev"]) == pytest.approx(max(accs))


def test_pretrain_does_not_touch_input(examples, tiny_config):
    p = fresh(examples, tiny_config)
    before = p.copy()
    pretrain(p, examples["gold"], examples["dev"], tiny_config)
    for (_, a), (_, b) in zip(p.named_arrays(), before.named_arrays()):
        np.testing.assert_array_equal(a, b)


def test_patience_stops_early(examples, tiny_config):
    # a dev set of one token saturates quickly, so accuracy cannot keep improving
    cfg = tiny_config.replace(stage1_epochs=30, patience=0)
    _, report = pretrain(fresh(examples, cfg), examples["gold"], examples["dev"][:1], cfg)
    assert len(report.epochs) < 30


def test_joint_proj_per_gold_zero_leaves_A(examples, tiny_config):
    cfg = tiny_config.replace(proj_per_gold=0)
    p = fresh(examples, cfg)
    out, _ = joint_train(p, examples["gold"], examples["proj"], examples["dev"], cfg)
    np.testing.assert_array_equal(out.A, p.A)


def test_joint_unbeatable_baseline_keeps_input(examples, tiny_config):
    p = fresh(examples, tiny_config)
    out, report = joint_train(p, examples["gold"], examples["proj"], examples["dev"], tiny_config,
                              baseline=1.01)
    assert report.chosen is not None
    for (_, a), (_, b) in zip(out.named_arrays(), p.named_arrays()):
        np.testing.assert_array_equal(a, b)


def test_joint_moves_A(examples, tiny_config):
    p = fresh(examples, tiny_config)
    out, _ = joint_train(p, examples["gold"], examples["proj"], examples["dev"],
                         tiny_config.replace(patience=5), baseline=0.0)
    assert not np.array_equal(out.A, p.A)


def test_joint_needs_both_streams(examples, tiny_config):
    with pytest.raises(ValueError):
        joint_train(fresh(examples, tiny_config), examples["gold"], [], examples["dev"], tiny_config)


def test_non_finite_loss_raises(examples, tiny_config):
    p = fresh(examples, tiny_config)
    p.W_fwd[:] = np.nan
    with pytest.raises(NumericError):
        pretrain(p, examples["gold"], examples["dev"], tiny_config)


def test_pipeline_without_stage2_equals_pretrain(toy_data, tiny_config):
    a, _ = train_pipeline(toy_data["train"], toy_data["projected"], toy_data["dev"],
                          tiny_config.replace(stage2_epochs=0))
    vocab = build_vocab(toy_data["train"].token_sequences() + toy_data["projected"].token_sequences())
    gold = make_gold_examples(toy_data["train"], vocab)
    dev = make_gold_examples(toy_data["dev"], vocab)
    p = init_params(tiny_config.emb_dim, tiny_config.hidden_dim, len(vocab), 3, 3, seed=tiny_config.seed)
    b, _ = pretrain(p, gold, dev, tiny_config)
    for (_, x), (_, y) in zip(a.params.named_arrays(), b.named_arrays()):
        np.testing.assert_array_equal(x, y)


def test_pipeline_report_chosen_is_max(toy_data, tiny_config):
    _, report = train_pipeline(toy_data["train"], toy_data["projected"], toy_data["dev"], tiny_config)
    stages = {r.stage for r in report.epochs}
    assert stages == {"pretrain", "joint"}
    accs = [r.dev_accuracy for r in report.epochs]
    assert report.chosen_record.dev_accuracy == max(accs)
    assert '"chosen"' in report.to_json()


def test_pipeline_final_dev_not_below_pretrain(toy_data, tiny_config):
    model, report = train_pipeline(toy_data["train"], toy_data["projected"], toy_data["dev"],
                                   tiny_config)
    pre = max(r.dev_accuracy for r in report.epochs if r.stage == "pretrain")
    vocab = model.vocab
    final = accuracy(model.params, make_gold_examples(toy_data["dev"], vocab))
    assert final >= pre


def test_pipeline_deterministic_bytes(toy_data, tiny_config, tmp_path):
    paths = []
    for name in ("a.model", "b.model"):
        model, _ = train_pipeline(toy_data["train"], toy_data["projected"], toy_data["dev"],
                                  tiny_config)
        save_model(model, tmp_path / name)
        paths.append(tmp_path / name)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_pipeline_gold_only(toy_data, tiny_config):
    model, report = train_pipeline(toy_data["train"], None, toy_data["dev"], tiny_config)
    assert {r.stage for r in report.epochs} == {"pretrain"}
    np.testing.assert_array_equal(model.params.A, np.eye(3))
