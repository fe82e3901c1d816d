import math
import pickle

import numpy as np
import pytest

from moegan import checkpoint as ckpt
from moegan import tensor as T
from moegan.evaluation import Evaluator
from moegan.features import copy_to_auxiliary, features
from moegan.generator import init_generator
from moegan.training import (AdamState, NonFiniteLossError, ScopeError, TrainConfig, Trainer, _check_scope,
                             adam_step, clip_global_norm, global_norm, models_from_entries, params_digest, pretrain)

VOCAB = 5


def tiny_config(**kw):
    base = dict(emb_dim=4, hidden_dim=6, disc_emb_dim=4, disc_channels=3, disc_windows=(2, 3), feature_dim=5,
                batch_size=4, pretrain_epochs=1, max_iterations=3, eval_interval=2, eval_samples=8)
    return TrainConfig(**{**base, **kw})


@pytest.fixture
def corpus():
    return np.random.default_rng(7).integers(0, VOCAB, size=(24, 6))


def param(values, name="p"):
    return T.Tensor(np.asarray(values, dtype=np.float32), requires_grad=True, name=name)


# ---------------------------------------------------------------- Adam


def scalar_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_two_steps_match_scalar_reference():
    p = param([0.5])
    state = AdamState()
    for _ in range(2):
        adam_step(state, {"p": p}, {"p": np.array([1.0], dtype=np.float32)}, lr=0.1)
    assert state.t == 2
    assert p.data[0] == pytest.approx(scalar_adam(0.5, [1.0, 1.0], 0.1), abs=1e-7)


def test_adam_matches_reference_on_varying_gradients(rng):
    grads = rng.standard_normal(6)
    p = T.Tensor(np.array([0.3]), requires_grad=True, name="p")
    state = AdamState()
    for g in grads:
        adam_step(state, {"p": p}, {"p": np.array([g])}, lr=0.01)
    assert p.data[0] == pytest.approx(scalar_adam(0.3, grads, 0.01), rel=1e-12)


def test_adam_first_step_moves_by_lr_times_sign():
    p = param([1.0, 1.0, 1.0])
    adam_step(AdamState(), {"p": p}, {"p": np.array([3.0, -0.2, 50.0], dtype=np.float32)}, lr=0.01)
    np.testing.assert_allclose(p.data, [0.99, 1.01, 0.99], atol=1e-6)


def test_adam_zero_gradient_is_identity_but_counts():
    p = param([[1.0, 2.0]])
    state = adam_step(AdamState(), {"p": p}, {"p": np.zeros((1, 2), dtype=np.float32)}, lr=0.1)
    np.testing.assert_array_equal(p.data, [[1.0, 2.0]])
    assert state.t == 1 and state.m["p"].shape == (1, 2)


def test_adam_missing_gradient_treated_as_zero():
    p = param([1.0])
    adam_step(AdamState(), {"p": p}, {}, lr=0.1)
    assert p.data[0] == 1.0


def test_adam_rejects_shape_mismatch_and_unknown_names():
    p = param([1.0, 2.0])
    with pytest.raises(T.ShapeError):
        adam_step(AdamState(), {"p": p}, {"p": np.zeros(3)}, lr=0.1)
    with pytest.raises(KeyError):
        adam_step(AdamState(), {"p": p}, {"q": np.zeros(2)}, lr=0.1)


def test_adam_handles_non_contiguous_parameters():
    p = T.Tensor(np.arange(6, dtype=np.float32).reshape(2, 3).T, requires_grad=True, name="p")
    adam_step(AdamState(), {"p": p}, {"p": np.ones((3, 2), dtype=np.float32)}, lr=0.5)
    np.testing.assert_allclose(p.data, np.arange(6, dtype=np.float32).reshape(2, 3).T - 0.5, atol=1e-6)


# ---------------------------------------------------------------- clipping


def test_clip_hand_scaling():
    out = clip_global_norm({"g": np.array([30.0, 40.0])}, 5.0)
    np.testing.assert_allclose(out["g"], [3.0, 4.0])


def test_clip_below_threshold_and_zero_unchanged():
    g = {"a": np.array([1.0, 2.0]), "b": np.array([2.0])}
    assert global_norm(g) == pytest.approx(3.0)
    np.testing.assert_array_equal(clip_global_norm(g)["a"], g["a"])
    np.testing.assert_array_equal(clip_global_norm({"z": np.zeros(4)})["z"], np.zeros(4))


def test_clip_is_global_not_per_tensor():
    out = clip_global_norm({"a": np.array([3.0]), "b": np.array([4.0])}, threshold=1.0)
    np.testing.assert_allclose([out["a"][0], out["b"][0]], [0.6, 0.8])
    per = clip_global_norm({"a": np.array([3.0]), "b": np.array([4.0])}, threshold=1.0, mode="per_tensor")
    np.testing.assert_allclose([per["a"][0], per["b"][0]], [1.0, 1.0])


def test_clipped_norm_never_exceeds_threshold(rng):
    for _ in range(50):
        grads = {f"g{i}": (rng.standard_normal(rng.integers(1, 20)) * 10 ** rng.uniform(-2, 3)).astype(np.float32)
                 for i in range(4)}
        assert global_norm(clip_global_norm(grads)) <= 5.0 + 1e-6


def test_clip_rejects_bad_threshold():
    with pytest.raises(ValueError):
        clip_global_norm({"g": np.ones(2)}, 0.0)


# ---------------------------------------------------------------- configuration


def test_config_defaults():
    cfg = TrainConfig()
    assert (cfg.g_steps, cfg.d_steps, cfg.lr_pretrain, cfg.lr_gen_adv, cfg.lr_disc, cfg.clip_norm) == \
        (1, 5, 1e-2, 1e-4, 1e-4, 5.0)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("kw", [{"g_steps": 0}, {"d_steps": 0}, {"tau": 0.0}, {"lr_disc": -1e-4},
                                {"clip_norm": 0.0}, {"clip_mode": "layer"}, {"batch_size": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


# ---------------------------------------------------------------- pretraining


def test_pretrain_zero_epochs_leaves_parameters():
    gen = init_generator(VOCAB, 2, 4, 6, np.random.default_rng(0))
    before = params_digest(gen.named_parameters())
    log = pretrain(gen, np.zeros((4, 3), dtype=np.int64), tiny_config(pretrain_epochs=0), np.random.default_rng(0))
    assert log == [] and params_digest(gen.named_parameters()) == before


def test_pretrain_rejects_empty_corpus():
    gen = init_generator(VOCAB, 2, 4, 6, np.random.default_rng(0))
    with pytest.raises(ValueError, match="empty"):
        pretrain(gen, np.zeros((0, 3), dtype=np.int64), tiny_config(), np.random.default_rng(0))


def test_pretrain_memorises_a_repeated_sequence():
    vocab = 10
    gen = init_generator(vocab, 2, 16, 16, np.random.default_rng(0))
    corpus = np.tile(np.array([3, 1, 4, 1, 5, 9, 2, 6]), (8, 1))
    log = pretrain(gen, corpus, tiny_config(pretrain_epochs=200, batch_size=8), np.random.default_rng(0))
    assert abs(log[0] - math.log(vocab)) < 0.5
    assert log[-1] < 0.1 * log[0]


# ---------------------------------------------------------------- adversarial loop


def test_iteration_update_scopes(corpus):
    trainer = Trainer(tiny_config(), corpus, VOCAB)
    aux = copy_to_auxiliary(trainer.disc)
    gen_params, disc_params = trainer.gen.named_parameters(), trainer.disc.named_parameters()
    g0, d0 = params_digest(gen_params), params_digest(disc_params)
    trainer.generator_step(aux)
    g1, d1 = params_digest(gen_params), params_digest(disc_params)
    assert g1 != g0 and d1 == d0
    trainer.discriminator_step()
    assert params_digest(gen_params) == g1 and params_digest(disc_params) != d1


def test_auxiliary_is_a_snapshot_from_iteration_start(corpus):
    trainer = Trainer(tiny_config(), corpus, VOCAB)
    probe = corpus[:3]
    at_start = features(trainer.disc, probe).data.copy()
    trainer.adversarial_iteration()
    assert features(trainer.aux, probe).data.tobytes() == at_start.tobytes()
    assert features(trainer.disc, probe).data.tobytes() != at_start.tobytes()


def test_discriminator_fakes_are_fresh_draws(corpus):
    cfg = tiny_config(g_steps=2, d_steps=3)
    trainer = Trainer(cfg, corpus, VOCAB)
    gumbel = trainer.streams["gumbel"]
    per_batch = cfg.batch_size * corpus.shape[1] * VOCAB
    trainer.adversarial_iteration()
    assert gumbel.draws == (cfg.g_steps + cfg.d_steps) * per_batch


def test_zero_learning_rates_are_a_no_op(corpus):
    trainer = Trainer(tiny_config(lr_gen_adv=0.0, lr_disc=0.0), corpus, VOCAB)
    params = {**trainer.gen.named_parameters(), **trainer.disc.named_parameters()}
    before = params_digest(params)
    report = trainer.adversarial_iteration()
    assert params_digest(params) == before
    assert all(math.isfinite(v) for v in (report.loss_d, report.loss_g, report.fsa))


def test_corpus_smaller_than_batch(corpus):
    trainer = Trainer(tiny_config(batch_size=30), corpus, VOCAB)
    with pytest.raises(ValueError, match="smaller than batch"):
        trainer.adversarial_iteration()


def test_scope_check_names_foreign_parameters():
    with pytest.raises(ScopeError, match="aux.embedding"):
        _check_scope({"gen.w_out": 0, "aux.embedding": 0}, {"gen.w_out": 0}, "generator")


def test_non_finite_loss_raises(corpus):
    trainer = Trainer(tiny_config(), corpus, VOCAB)
    trainer.disc.head_b.data[...] = np.nan
    with pytest.raises(NonFiniteLossError):
        trainer.adversarial_iteration()


def evaluator(corpus):
    return Evaluator(corpus[:8], corpus.shape[1], n_samples=8)


@pytest.mark.parametrize("iterations,interval", [(0, 2), (3, 2), (4, 2), (5, 5), (7, 3)])
def test_history_row_count(corpus, iterations, interval):
    trainer = Trainer(tiny_config(max_iterations=iterations, eval_interval=interval), corpus, VOCAB,
                      evaluator(corpus))
    history = trainer.run()
    assert len(history) == math.ceil(iterations / interval) + 1
    assert history[0].iteration == 0 and history[-1].iteration == iterations


def test_zero_iterations_equals_pretraining(corpus):
    cfg = tiny_config(max_iterations=0)
    a = Trainer(cfg, corpus, VOCAB)
    a.run()
    b = Trainer(cfg, corpus, VOCAB)
    b.pretrain()
    assert params_digest(a.gen.named_parameters()) == params_digest(b.gen.named_parameters())
    assert a.pretrain_log == b.pretrain_log


def test_mle_baseline_never_touches_discriminator(corpus):
    trainer = Trainer(tiny_config(mle_only=True), corpus, VOCAB)
    before = params_digest(trainer.disc.named_parameters())
    trainer.run()
    assert params_digest(trainer.disc.named_parameters()) == before and trainer.opt_disc.t == 0


def test_identical_seeds_identical_runs(corpus):
    rows = []
    for _ in range(2):
        trainer = Trainer(tiny_config(), corpus, VOCAB, evaluator(corpus))
        rows.append([r.csv_fields() for r in trainer.run()])
    assert rows[0] == rows[1]


def test_different_seeds_differ(corpus):
    a = Trainer(tiny_config(seed=1), corpus, VOCAB)
    b = Trainer(tiny_config(seed=2), corpus, VOCAB)
    assert params_digest(a.gen.named_parameters()) != params_digest(b.gen.named_parameters())


# ---------------------------------------------------------------- persistence


def test_state_round_trip_resumes_exactly(corpus):
    cfg = tiny_config(max_iterations=4)
    straight = Trainer(cfg, corpus, VOCAB, evaluator(corpus))
    straight.run()

    first = Trainer(tiny_config(max_iterations=2), corpus, VOCAB, evaluator(corpus))
    first.run()
    blob = ckpt.to_bytes(first.state_entries())
    resumed = Trainer(cfg, corpus, VOCAB, evaluator(corpus))
    resumed.load_entries(ckpt.from_bytes(blob))
    resumed.run()
    assert [r.csv_fields() for r in resumed.history] == [r.csv_fields() for r in straight.history]
    assert ckpt.to_bytes(resumed.state_entries()) == ckpt.to_bytes(straight.state_entries())


def test_save_load_save_identical_bytes(corpus, tmp_path):
    trainer = Trainer(tiny_config(), corpus, VOCAB, evaluator(corpus))
    trainer.run()
    trainer.save(tmp_path / "a.moeg")
    again = Trainer(tiny_config(), corpus, VOCAB)
    again.load_entries(ckpt.load(tmp_path / "a.moeg"))
    again.save(tmp_path / "b.moeg")
    assert (tmp_path / "a.moeg").read_bytes() == (tmp_path / "b.moeg").read_bytes()


def test_models_from_entries(corpus):
    trainer = Trainer(tiny_config(), corpus, VOCAB)
    cfg, gen, disc = models_from_entries(trainer.state_entries())
    assert cfg == trainer.config
    assert params_digest(gen.named_parameters()) == params_digest(trainer.gen.named_parameters())
    assert params_digest(disc.named_parameters()) == params_digest(trainer.disc.named_parameters())
    with pytest.raises(ckpt.CheckpointError):
        models_from_entries({})


def test_load_rejects_shape_mismatch(corpus):
    entries = Trainer(tiny_config(), corpus, VOCAB).state_entries()
    entries["gen.w_out"] = np.zeros((2, 2), dtype=np.float32)
    with pytest.raises(ckpt.CheckpointError, match="gen.w_out"):
        Trainer(tiny_config(), corpus, VOCAB).load_entries(entries)


def test_trainer_pickles(corpus):
    trainer = Trainer(tiny_config(), corpus, VOCAB)
    clone = pickle.loads(pickle.dumps(trainer))
    assert clone.streams["data"].random() == trainer.streams["data"].random()
