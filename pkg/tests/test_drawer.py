from __future__ import annotations

import math

import numpy as np
import pytest

from cqsim.drawer import (TrainConfig, TrainingTurn, Vocabulary,
                          batch_loss_and_grads, decode_canvas, encode_canvas,
                          encode_text, encode_training_turn, forward, init_params,
                          load_params, save_params, tokenize, train, train_ensemble,
                          turn_loss)
from cqsim.world import Flip, Gallery, Placement, Scene, Size, load_gallery

MINI_MANIFEST = (
    "id,name,is_person,is_symmetric,expression_count,pose_count\n"
    "0,tree,0,0,0,0\n"
    "1,sun,0,1,0,0\n"
    "2,boy,1,0,5,7\n"
    "3,bear,0,0,0,0\n"
)


@pytest.fixture(scope="module")
def mini_gallery():
    return Gallery(load_gallery(MINI_MANIFEST.encode()))


@pytest.fixture(scope="module")
def vocab():
    return Vocabulary.from_texts([
        "add a small tree at the top left",
        "add a large sun facing right at the bottom center",
        "what size is the bear ? the bear is medium",
        "ok add a boy at the middle right",
    ])


class TestTokenize:
    def test_lowercases_and_splits_punctuation(self):
        assert tokenize("What SIZE is the tree?") == ["what", "size", "is", "the", "tree", "?"]

    def test_empty(self):
        assert tokenize("") == []

    def test_unknown_maps_to_unk(self, vocab):
        ids = vocab.encode("zebra tree")
        assert ids[0] == 1  # unk
        assert ids[1] == vocab.index["tree"]


class TestEncoders:
    def test_empty_text_is_zero_vector(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=0)
        assert np.all(encode_text(params, np.array([], dtype=np.int64)) == 0.0)

    def test_single_token_is_embedding_row(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=0)
        tid = vocab.index["tree"]
        np.testing.assert_array_equal(
            encode_text(params, np.array([tid])), params.emb[tid])

    def test_mean_is_order_invariant(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=0)
        a = vocab.encode("small tree at the left")
        b = vocab.encode("left the at tree small")
        np.testing.assert_allclose(encode_text(params, a), encode_text(params, b), atol=1e-15)

    def test_canvas_empty_is_zero(self, mini_gallery):
        assert np.all(encode_canvas(Scene(), mini_gallery) == 0.0)

    def test_canvas_block_layout(self, mini_gallery):
        scene = Scene.of(Placement(1, Size.LARGE, Flip.FACING_RIGHT, 0.25, 0.75))
        vec = encode_canvas(scene, mini_gallery)
        block = vec[8:16]
        np.testing.assert_array_equal(block, [1, 0, 0, 1, 0, 1, 0.25, 0.75])
        assert np.all(vec[:8] == 0) and np.all(vec[16:] == 0)

    def test_canvas_roundtrip(self, mini_gallery):
        scene = Scene.of(
            Placement(0, Size.SMALL, Flip.FACING_LEFT, 0.1, 0.2),
            Placement(2, Size.LARGE, Flip.FACING_RIGHT, 0.9, 0.4, expression=0, pose=0),
        )
        decoded = decode_canvas(encode_canvas(scene, mini_gallery), mini_gallery)
        assert decoded.ids() == scene.ids()
        for cid in scene.ids():
            a, b = scene.get(cid), decoded.get(cid)
            assert (a.size, a.flip, a.x, a.y) == (b.size, b.flip, b.x, b.y)


class TestForward:
    def test_deterministic(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=0)
        scene = Scene.of(Placement(0, Size.SMALL, Flip.FACING_LEFT, 0.1, 0.2))
        a = forward(params, "add a tree", scene, mini_gallery)
        b = forward(params, "add a tree", scene, mini_gallery)
        np.testing.assert_array_equal(a.scores, b.scores)
        np.testing.assert_array_equal(a.size_dist, b.size_dist)

    def test_zero_params_give_uniform_outputs(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=0)
        for name in params.TENSOR_NAMES:
            getattr(params, name)[...] = 0.0
        out = forward(params, "add a tree", Scene(), mini_gallery)
        np.testing.assert_allclose(out.size_dist, 1.0 / 3.0, atol=1e-15)
        np.testing.assert_allclose(out.flip_dist, 0.5, atol=1e-15)
        np.testing.assert_allclose(out.pos, 0.5, atol=1e-15)
        np.testing.assert_array_equal(out.scores, 0.0)
        assert out.selected_ids() == []  # score exactly 0 is not selected

    def test_distributions_sum_to_one(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=3)
        out = forward(params, "add a large bear", Scene(), mini_gallery)
        np.testing.assert_allclose(out.size_dist.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(out.flip_dist.sum(axis=1), 1.0, atol=1e-9)


class TestLoss:
    def test_perfect_prediction_is_near_zero(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=0)
        target = Placement(0, Size.SMALL, Flip.FACING_LEFT, 0.25, 0.75)
        out = forward(params, "x", Scene(), mini_gallery)
        big = 25.0  # sigmoid(25) ~ 1 - 1e-11
        out.scores[...] = -big
        out.scores[0] = big
        out.size_dist[0] = np.array([1.0, 0.0, 0.0])
        out.flip_dist[0] = np.array([1.0, 0.0])
        out.pos[0] = (0.25, 0.75)
        assert turn_loss(out, {0: target}, mini_gallery) < 1e-6

    def test_uniform_size_dist_costs_log3(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=0)
        target = Placement(0, Size.SMALL, Flip.FACING_LEFT, 0.25, 0.75)
        out = forward(params, "x", Scene(), mini_gallery)
        out.scores[...] = -25.0
        out.scores[0] = 25.0
        out.size_dist[0] = np.full(3, 1.0 / 3.0)
        out.flip_dist[0] = np.array([1.0, 0.0])
        out.pos[0] = (0.25, 0.75)
        assert turn_loss(out, {0: target}, mini_gallery) == pytest.approx(math.log(3.0), abs=1e-6)

    def test_symmetric_clipart_has_no_flip_term(self, vocab, mini_gallery):
        # clipart 1 (sun) is symmetric: flip_dist must not matter
        target = Placement(1, Size.SMALL, Flip.FACING_LEFT, 0.25, 0.75)
        params = init_params(vocab, mini_gallery, seed=0)
        out = forward(params, "x", Scene(), mini_gallery)
        out.scores[...] = -25.0
        out.scores[1] = 25.0
        out.size_dist[1] = np.array([1.0, 0.0, 0.0])
        out.pos[1] = (0.25, 0.75)
        out.flip_dist[1] = np.array([0.0, 1.0])  # "wrong" flip
        assert turn_loss(out, {1: target}, mini_gallery) < 1e-6


def _probe_batch(vocab, gallery):
    turns = [
        TrainingTurn("add a small tree at the top left", Scene(),
                     {0: Placement(0, Size.SMALL, Flip.FACING_LEFT, 0.2, 0.1)}),
        TrainingTurn("ok add a large sun facing right at the bottom center",
                     Scene.of(Placement(0, Size.SMALL, Flip.FACING_LEFT, 0.2, 0.1)),
                     {1: Placement(1, Size.LARGE, Flip.FACING_RIGHT, 0.5, 0.9)}),
        TrainingTurn("what size is the bear ? the bear is medium",
                     Scene.of(Placement(3, Size.SMALL, Flip.FACING_LEFT, 0.7, 0.7)),
                     {3: Placement(3, Size.MEDIUM, Flip.FACING_LEFT, 0.7, 0.7)}),
    ]
    return [encode_training_turn(t, vocab, gallery) for t in turns]


class TestGradients:
    def test_analytic_matches_finite_differences(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=1)
        batch = _probe_batch(vocab, mini_gallery)
        asym = mini_gallery.asymmetric_mask().astype(np.float64)
        _, grads = batch_loss_and_grads(params, batch, asym)
        rng = np.random.default_rng(0)
        step = 1e-5
        worst = 0.0
        for name in params.TENSOR_NAMES:
            tensor = getattr(params, name)
            flat = tensor.reshape(-1)
            for idx in rng.choice(flat.size, size=min(10, flat.size), replace=False):
                original = flat[idx]
                flat[idx] = original + step
                up, _ = batch_loss_and_grads(params, batch, asym)
                flat[idx] = original - step
                down, _ = batch_loss_and_grads(params, batch, asym)
                flat[idx] = original
                numeric = (up - down) / (2 * step)
                analytic = grads[name].reshape(-1)[idx]
                denom = max(abs(numeric), abs(analytic), 1e-8)
                worst = max(worst, abs(numeric - analytic) / denom)
        assert worst < 1e-4

    def test_loss_invariant_to_batch_order(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=3)
        batch = _probe_batch(vocab, mini_gallery)
        asym = mini_gallery.asymmetric_mask().astype(np.float64)
        loss_a, grads_a = batch_loss_and_grads(params, batch, asym)
        loss_b, grads_b = batch_loss_and_grads(params, batch[::-1], asym)
        assert loss_a == pytest.approx(loss_b, rel=1e-12)
        for name in grads_a:
            np.testing.assert_allclose(grads_a[name], grads_b[name], atol=1e-12)

    def test_loss_value_consistent_with_turn_loss(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=2)
        turns = [
            TrainingTurn("add a small tree at the top left", Scene(),
                         {0: Placement(0, Size.SMALL, Flip.FACING_LEFT, 0.2, 0.1)}),
        ]
        batch = [encode_training_turn(t, vocab, mini_gallery) for t in turns]
        asym = mini_gallery.asymmetric_mask().astype(np.float64)
        loss_kernel, _ = batch_loss_and_grads(params, batch, asym)
        out = forward(params, turns[0].input_text, turns[0].canvas_before, mini_gallery)
        assert loss_kernel == pytest.approx(turn_loss(out, turns[0].targets, mini_gallery), rel=1e-9)


def _memorizable_corpus(gallery, n_turns=200, seed=0):
    """Every instruction fully determines its clipart and size."""
    rng = np.random.default_rng(seed)
    turns = []
    for _ in range(n_turns):
        cid = int(rng.integers(0, len(gallery)))
        size = Size(int(rng.integers(3)))
        entry = gallery[cid]
        p = Placement(cid, size, Flip.FACING_LEFT, 0.5, 0.5,
                      expression=0 if entry.is_person else None,
                      pose=0 if entry.is_person else None)
        turns.append(TrainingTurn(f"add a {size.label} {entry.name}", Scene(), {cid: p}))
    return turns


class TestTraining:
    def test_loss_decreases_on_memorizable_data(self, mini_gallery):
        turns = _memorizable_corpus(mini_gallery, n_turns=20)
        vocab = Vocabulary.from_texts([t.input_text for t in turns])
        result = train(turns, vocab, mini_gallery, TrainConfig(epochs=15, seed=0))
        assert result.epoch_losses[-1] < result.epoch_losses[0]

    def test_memorizable_corpus_reaches_95_pct_size_accuracy(self):
        manifest = ["id,name,is_person,is_symmetric,expression_count,pose_count"]
        names = ["ant", "bat", "cow", "dog", "eel", "fox", "gnu", "hen", "ibis", "jay"]
        for i, name in enumerate(names):
            manifest.append(f"{i},{name},0,0,0,0")
        gallery = Gallery(load_gallery(("\n".join(manifest) + "\n").encode()))
        turns = _memorizable_corpus(gallery, n_turns=200, seed=1)
        vocab = Vocabulary.from_texts([t.input_text for t in turns])
        # batch 8: at 200 turns the default batch of 32 gives too few updates in 15 epochs
        result = train(turns, vocab, gallery, TrainConfig(epochs=15, batch_size=8, seed=0))
        hits = total = 0
        for t in turns:
            out = forward(result.params, t.input_text, t.canvas_before, gallery)
            for cid, placement in t.targets.items():
                hits += int(np.argmax(out.size_dist[cid])) == int(placement.size)
                total += 1
        assert hits / total >= 0.95

    def test_same_seed_bit_identical(self, mini_gallery):
        turns = _memorizable_corpus(mini_gallery, n_turns=30)
        vocab = Vocabulary.from_texts([t.input_text for t in turns])
        a = train(turns, vocab, mini_gallery, TrainConfig(epochs=3, seed=5)).params
        b = train(turns, vocab, mini_gallery, TrainConfig(epochs=3, seed=5)).params
        for name in a.TENSOR_NAMES:
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_empty_corpus_rejected(self, vocab, mini_gallery):
        with pytest.raises(ValueError, match="empty"):
            train([], vocab, mini_gallery)


class TestEnsemble:
    def test_five_seeds_give_distinct_members(self, mini_gallery):
        turns = _memorizable_corpus(mini_gallery, n_turns=30)
        vocab = Vocabulary.from_texts([t.input_text for t in turns])
        ensemble, _ = train_ensemble(turns, vocab, mini_gallery,
                                     TrainConfig(epochs=2), seeds=(0, 1, 2, 3, 4))
        assert len(ensemble) == 5
        for i in range(4):
            assert not np.array_equal(ensemble.members[i].emb, ensemble.members[i + 1].emb)

    def test_single_member_ensemble_accepted(self, mini_gallery):
        turns = _memorizable_corpus(mini_gallery, n_turns=20)
        vocab = Vocabulary.from_texts([t.input_text for t in turns])
        ensemble, _ = train_ensemble(turns, vocab, mini_gallery,
                                     TrainConfig(epochs=1), seeds=(0,))
        assert len(ensemble) == 1

    def test_mean_prediction_is_member_mean(self, mini_gallery):
        turns = _memorizable_corpus(mini_gallery, n_turns=20)
        vocab = Vocabulary.from_texts([t.input_text for t in turns])
        ensemble, _ = train_ensemble(turns, vocab, mini_gallery,
                                     TrainConfig(epochs=1), seeds=(0, 1, 2))
        outs = ensemble.forward_all("add a small ant", Scene(), mini_gallery)
        mean_dist = np.mean([o.size_dist for o in outs], axis=0)
        np.testing.assert_allclose(
            mean_dist, sum(o.size_dist for o in outs) / 3.0, atol=1e-12)


class TestPersistence:
    def test_save_load_roundtrip(self, vocab, mini_gallery):
        params = init_params(vocab, mini_gallery, seed=4)
        params.epochs_trained = 7
        loaded = load_params(save_params(params), mini_gallery)
        for name in params.TENSOR_NAMES:
            np.testing.assert_array_equal(getattr(params, name), getattr(loaded, name))
        assert loaded.epochs_trained == 7
        assert loaded.vocab.tokens == params.vocab.tokens

    def test_truncated_file_rejected(self, vocab, mini_gallery):
        raw = save_params(init_params(vocab, mini_gallery, seed=0))
        with pytest.raises(ValueError, match="unparseable"):
            load_params(raw[: len(raw) // 2])

    def test_wrong_schema_version_rejected(self, vocab, mini_gallery):
        raw = save_params(init_params(vocab, mini_gallery, seed=0))
        doc = raw.decode().replace('"schema_version": 1', '"schema_version": 2')
        with pytest.raises(ValueError, match="schema_version"):
            load_params(doc.encode())

    def test_gallery_mismatch_rejected(self, vocab, mini_gallery, gallery):
        raw = save_params(init_params(vocab, mini_gallery, seed=0))
        with pytest.raises(ValueError, match="gallery"):
            load_params(raw, gallery)
