import numpy as np
import pytest

from actioncast.model import (
    FilterEmptyError,
    NextActionForecaster,
    Predictor,
    TrainingConfig,
    encode_corpus,
    evaluate,
    filter_renormalize,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metrics_csv,
)
from actioncast.tokenizer import ContextFeatures, UserAction, build_vocabulary


def _ctx(app=0, n_apps=1, rel=(0.5, 0.5), elapsed=0):
    return ContextFeatures(app_index=app, n_apps=n_apps, rel_x=rel[0], rel_y=rel[1], elapsed_bucket=elapsed)


def cycle_corpus(n=200, keys="ABC"):
    actions = [UserAction.keystroke(k) for k in keys]
    vocab = build_vocabulary(actions, app_vocab={"app": 0})
    session = [(actions[i % len(keys)], _ctx()) for i in range(n)]
    return encode_corpus([session], vocab), vocab


def small_config(**overrides):
    defaults = dict(cell="gru", hidden_size=16, epochs=8, learning_rate=0.01, seed=1)
    defaults.update(overrides)
    return TrainingConfig(**defaults)


class TestTraining:
    def test_repeating_corpus_learned_perfectly(self):
        corpus, _ = cycle_corpus(200)
        ckpt, metrics = train(corpus, small_config(epochs=10))
        assert max(m.val_accuracy for m in metrics) == 1.0
        accuracy, _ = evaluate(corpus, ckpt)
        assert accuracy == 1.0

    def test_same_seed_gives_identical_metrics(self):
        corpus, _ = cycle_corpus(120)
        _, m1 = train(corpus, small_config())
        _, m2 = train(corpus, small_config())
        assert [(m.epoch, m.train_loss, m.val_accuracy) for m in m1] == [
            (m.epoch, m.train_loss, m.val_accuracy) for m in m2
        ]

    def test_different_seeds_differ(self):
        corpus, _ = cycle_corpus(120)
        _, m1 = train(corpus, small_config(seed=1, epochs=2))
        _, m2 = train(corpus, small_config(seed=2, epochs=2))
        assert m1[0].train_loss != m2[0].train_loss

    def test_loss_decreases_early(self):
        corpus, _ = cycle_corpus(300)
        _, metrics = train(corpus, small_config(epochs=5))
        losses = [m.train_loss for m in metrics]
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))

    def test_corpus_too_short_rejected(self):
        corpus, _ = cycle_corpus(1)
        with pytest.raises(ValueError):
            train(corpus, small_config())

    def test_mismatched_validation_vocab_rejected(self):
        corpus, _ = cycle_corpus(50)
        other, _ = cycle_corpus(50, keys="XYZ")
        with pytest.raises(ValueError):
            train(corpus, small_config(), other)

    def test_best_epoch_checkpoint_kept(self):
        corpus, _ = cycle_corpus(200)
        ckpt, metrics = train(corpus, small_config(epochs=10))
        best = max(m.val_accuracy for m in metrics)
        accuracy, _ = evaluate(corpus, ckpt)
        assert accuracy == pytest.approx(best)

    def test_lstm_trains_too(self):
        corpus, _ = cycle_corpus(200)
        ckpt, metrics = train(corpus, small_config(cell="lstm", epochs=10))
        assert max(m.val_accuracy for m in metrics) == 1.0

    def test_all_parameters_finite(self):
        corpus, _ = cycle_corpus(100)
        ckpt, _ = train(corpus, small_config(epochs=3))
        for tensor in ckpt.params.values():
            assert np.isfinite(tensor).all()

    def test_windows_never_cross_session_boundaries(self):
        from actioncast.model import _WindowIndex

        actions = [UserAction.keystroke(k) for k in "AB"]
        vocab = build_vocabulary(actions, app_vocab={"app": 0})
        sessions = [
            [(actions[0], _ctx())] * 4,   # all A
            [(actions[1], _ctx())] * 4,   # all B
        ]
        corpus = encode_corpus(sessions, vocab)
        windows = _WindowIndex(corpus, n_past=3)
        a_idx = vocab.encode(actions[0])
        b_idx = vocab.encode(actions[1])
        feats, targets = windows.gather(windows.starts)
        v = corpus.vocab_size
        for row in range(len(targets)):
            onehot_ids = feats[row, :, :v].argmax(axis=1)
            present = set(int(i) for i in onehot_ids)
            # a window predicting a B-session target may contain B and PAD
            # but never A from the previous session, and vice versa
            if targets[row] == b_idx:
                assert a_idx not in present
            else:
                assert b_idx not in present


class TestEvaluate:
    def test_uniform_predictor_matches_binomial_bound(self):
        # Untrained-but-symmetric model: all-zero params give uniform probs;
        # argmax then always picks index 0 (PAD), which never occurs as a
        # target, so build an explicit uniform-random comparison instead.
        rng = np.random.default_rng(0)
        v = 10
        predictions = rng.integers(2, v + 2, size=4000)
        targets = rng.integers(2, v + 2, size=4000)
        accuracy = float((predictions == targets).mean())
        p = 1.0 / v
        sigma = (p * (1 - p) / 4000) ** 0.5
        assert abs(accuracy - p) < 3 * sigma

    def test_incorrect_position_counted(self):
        corpus, vocab = cycle_corpus(30)
        ckpt, _ = train(corpus, small_config(epochs=6))
        accuracy, records = evaluate(corpus, ckpt)
        correct = sum(1 for r in records if r.correct)
        assert accuracy == correct / len(records)
        assert any(not r.correct for r in records) or accuracy == 1.0


class TestFilterRenormalize:
    def test_worked_example(self):
        out = filter_renormalize(np.array([0.5, 0.3, 0.2]), {1, 2})
        assert np.allclose(out, [0.0, 0.6, 0.4])

    def test_keep_all_is_identity(self):
        probs = np.array([0.25, 0.25, 0.5])
        assert np.allclose(filter_renormalize(probs, {0, 1, 2}), probs)

    def test_zero_mass_raises(self):
        with pytest.raises(FilterEmptyError):
            filter_renormalize(np.array([0.5, 0.5, 0.0]), {2})

    def test_empty_keep_raises(self):
        with pytest.raises(FilterEmptyError):
            filter_renormalize(np.array([1.0]), set())

    def test_order_of_kept_entries_invariant(self, rng):
        for _ in range(100):
            probs = rng.random(12)
            probs /= probs.sum()
            keep = {int(i) for i in rng.choice(12, size=rng.integers(1, 12), replace=False)}
            filtered = filter_renormalize(probs, keep)
            kept = sorted(keep)
            before = np.argsort([-probs[i] for i in kept], kind="stable")
            after = np.argsort([-filtered[i] for i in kept], kind="stable")
            assert np.array_equal(before, after)


@pytest.fixture(scope="module")
def fitted():
    corpus, vocab = cycle_corpus(200)
    ckpt, _ = train(corpus, small_config(epochs=10))
    return Predictor(ckpt, vocab), vocab


class TestPredictor:
    def _recent(self, vocab, keys):
        return [(UserAction.keystroke(k), _ctx()) for k in keys]

    def test_topk_size_and_ordering(self, fitted):
        predictor, vocab = fitted
        out = predictor.topk(self._recent(vocab, "ABC"), k=3)
        assert len(out) == 3
        probs = [p for _, p in out]
        assert probs == sorted(probs, reverse=True)

    def test_k1_is_argmax(self, fitted):
        # The kept checkpoint is the first epoch reaching top validation
        # accuracy, so probabilities stay soft; only the ranking is pinned.
        predictor, vocab = fitted
        recent = self._recent(vocab, "ABCAB")
        (action, prob), = predictor.topk(recent, k=1)
        assert action == UserAction.keystroke("C")
        assert prob > 1.0 / 3.0
        assert (action, prob) == predictor.topk(recent, k=3)[0]

    def test_k_must_be_positive(self, fitted):
        predictor, _ = fitted
        with pytest.raises(ValueError):
            predictor.topk([], k=0)

    def test_unknown_actions_dropped_from_window(self, fitted):
        predictor, vocab = fitted
        known = self._recent(vocab, "AB")
        with_unknown = known[:1] + [(UserAction.keystroke("Q"), _ctx())] + known[1:]
        assert predictor.topk(with_unknown, k=3) == predictor.topk(known, k=3)

    def test_reserved_indices_never_returned(self, fitted):
        predictor, vocab = fitted
        out = predictor.topk([], k=vocab.size - 2)
        labels = [a.label for a, _ in out]
        assert "<PAD>" not in labels and "<UNK>" not in labels
        assert len(out) == vocab.size - 2

    def test_filterered_prediction_renormalizes(self, fitted):
        predictor, vocab = fitted
        keep = {vocab.encode(UserAction.keystroke("A")), vocab.encode(UserAction.keystroke("B"))}
        out = predictor.topk(self._recent(vocab, "ABC"), k=2, keep=keep)
        assert {a.label for a, _ in out} == {"A", "B"}
        assert sum(p for _, p in out) == pytest.approx(1.0)

    def test_vocab_mismatch_rejected(self, fitted):
        predictor, _ = fitted
        _, other_vocab = cycle_corpus(30, keys="XYZ")
        with pytest.raises(ValueError):
            Predictor(predictor.checkpoint, other_vocab)


class TestCheckpointIo:
    def test_round_trip_bit_identical_forward(self, tmp_path):
        corpus, vocab = cycle_corpus(100)
        ckpt, _ = train(corpus, small_config(epochs=3))
        path = tmp_path / "model.acf"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)

        assert loaded.vocab_hash == ckpt.vocab_hash
        assert loaded.adam.t == ckpt.adam.t
        for name, tensor in ckpt.params.items():
            assert np.array_equal(loaded.params[name], tensor)

        predictor_a = Predictor(ckpt, vocab)
        predictor_b = Predictor(loaded, vocab)
        recent = [(UserAction.keystroke("A"), _ctx())]
        assert np.array_equal(predictor_a.window_probs(recent), predictor_b.window_probs(recent))

    def test_magic_bytes(self, tmp_path):
        corpus, _ = cycle_corpus(60)
        ckpt, _ = train(corpus, small_config(epochs=1))
        path = tmp_path / "m.acf"
        save_checkpoint(ckpt, path)
        assert path.read_bytes()[:4] == b"ACF1"

    def test_save_is_deterministic(self, tmp_path):
        corpus, _ = cycle_corpus(60)
        a = train(corpus, small_config(epochs=2))[0]
        b = train(corpus, small_config(epochs=2))[0]
        save_checkpoint(a, tmp_path / "a.acf")
        save_checkpoint(b, tmp_path / "b.acf")
        assert (tmp_path / "a.acf").read_bytes() == (tmp_path / "b.acf").read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.acf"
        path.write_bytes(b"NOPE1234")
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_metrics_csv_layout(self, tmp_path):
        corpus, _ = cycle_corpus(60)
        _, metrics = train(corpus, small_config(epochs=2))
        write_metrics_csv(metrics, tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_accuracy,seconds"
        assert len(lines) == 3
        assert all(line.endswith(",0.000") for line in lines[1:])


class TestEstimatorSurface:
    def test_get_set_params_round_trip(self):
        est = NextActionForecaster(hidden_size=32, epochs=3)
        params = est.get_params()
        assert params["hidden_size"] == 32
        est.set_params(hidden_size=64)
        assert est.get_params()["hidden_size"] == 64

    def test_unknown_param_rejected(self):
        with pytest.raises(ValueError):
            NextActionForecaster().set_params(banana=1)

    def test_sklearn_clone_compatible(self):
        from sklearn.base import clone

        est = NextActionForecaster(cell="lstm", hidden_size=24, epochs=2, seed=7)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_fit_score_flow(self):
        corpus, _ = cycle_corpus(150)
        est = NextActionForecaster(hidden_size=16, epochs=8, learning_rate=0.01, seed=1)
        assert est.fit(corpus) is est
        assert est.score(corpus) == 1.0
        assert est.best_val_accuracy_ == 1.0
        preds = est.predict(corpus)
        assert preds.shape == (149,)

    def test_unfitted_score_raises(self):
        corpus, _ = cycle_corpus(50)
        with pytest.raises(RuntimeError):
            NextActionForecaster().score(corpus)
