from dataclasses import replace

import numpy as np
import pytest

from hetfl.data import make_plan, make_shards, normalize
from hetfl.datasets import generate_synthetic
from hetfl.errors import InvalidArgumentError, ShapeError
from hetfl.federation import (
    Aggregation, FederationConfig, Strategy, aggregate_heads, batch_order, build_models,
    client_update, run_federation,
)
from hetfl.models import HeadParams
from hetfl.tensor_nn import GradTape, backward, cross_entropy, forward, sgd_step


def head(w, b=None):
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return HeadParams(w, np.zeros((1, w.shape[1])) if b is None else b)


@pytest.fixture(scope="module")
def shards():
    t = normalize(generate_synthetic({"classes": 3, "dims": 6, "samples": 240, "seed": 3}))
    return make_shards(t, make_plan(t, 3, seed=1, alpha=0.5), 0.25, seed=1)


def small_config(**kw):
    base = dict(t_max=6, lr=0.1, batch_size=16, embedding_dim=8, depth_range=(1, 2),
                width_range=(4, 12), seed=11)
    base.update(kw)
    return FederationConfig(**base)


class TestAggregate:
    def test_mean(self):
        out = aggregate_heads([head([[1, 2]]), head([[3, 4]])], "mean")
        np.testing.assert_array_equal(out.weights, [[2, 3]])

    def test_sum(self):
        out = aggregate_heads([head([[1, 2]]), head([[3, 4]])], "sum")
        np.testing.assert_array_equal(out.weights, [[4, 6]])

    @pytest.mark.parametrize("mode", list(Aggregation))
    def test_single_client_identity(self, mode):
        h = head([[0.3, -1.0]], np.array([[0.1, 0.2]]))
        out = aggregate_heads([h], mode, [5])
        assert out.weights.tobytes() == h.weights.tobytes()
        assert out.bias.tobytes() == h.bias.tobytes()

    def test_weighted(self):
        out = aggregate_heads([head([[0.0]]), head([[4.0]])], "weighted_mean", [1, 3])
        np.testing.assert_array_equal(out.weights, [[3.0]])

    def test_bias_aggregated(self):
        out = aggregate_heads([head([[0.0]], np.array([[2.0]])), head([[0.0]], np.array([[4.0]]))])
        np.testing.assert_array_equal(out.bias, [[3.0]])

    def test_errors(self):
        with pytest.raises(InvalidArgumentError):
            aggregate_heads([])
        with pytest.raises(ShapeError):
            aggregate_heads([head([[1, 2]]), head([[1, 2, 3]])])


class TestClientUpdate:
    def _replay_ce(self, model, shard, cfg, epoch):
        layers = [*model.body, model.local_head]
        order = batch_order(cfg.seed, shard.client_id, epoch, shard.n_train)
        total = 0.0
        for s in range(0, shard.n_train, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            tape = GradTape()
            ce = cross_entropy(forward(layers, shard.train_x[idx], tape), shard.train_y[idx],
                               tape=tape)
            total += idx.size / shard.n_train * ce
            layers = sgd_step(layers, backward(tape), cfg.lr)
        return total, layers

    def test_epoch_one_is_pure_ce(self, shards):
        cfg = small_config(strategy="ours")
        model = build_models(shards, cfg)[0]
        expected_loss, expected_layers = self._replay_ce(model.copy(), shards[0], cfg, 1)
        out = client_update(model, shards[0], 1, cfg)
        assert out.dkd_loss == 0.0
        assert out.loss == expected_loss
        assert out.head.weights.tobytes() == expected_layers[-1].weights.tobytes()

    def test_epoch_two_adds_dkd(self, shards):
        cfg = small_config(strategy="ours")
        model = build_models(shards, cfg)[0]
        client_update(model, shards[0], 1, cfg)
        assert client_update(model, shards[0], 2, cfg).dkd_loss > 0

    def test_teacher_fixed_within_epoch(self, shards):
        cfg = small_config(strategy="ours")
        model = build_models(shards, cfg)[0]
        client_update(model, shards[0], 1, cfg)
        snapshot = model.teacher_logits(shards[0].train_x)
        global_before = model.global_head.weights.copy()
        seen = []
        client_update(model, shards[0], 2, cfg, on_batch=lambda idx, t: seen.append((idx, t)))
        assert len(seen) > 1
        for idx, t in seen:
            assert t.tobytes() == snapshot[idx].tobytes()
        np.testing.assert_array_equal(model.global_head.weights, global_before)

    def test_input_dim_mismatch(self, shards):
        cfg = small_config()
        model = build_models(shards, cfg)[0]
        other = replace(shards[0], train_x=shards[0].train_x[:, :-1])
        with pytest.raises(ShapeError):
            client_update(model, other, 1, cfg)


class TestRunFederation:
    def test_shapes_and_messages(self, shards):
        cfg = small_config(strategy="ours")
        res = run_federation(cfg, shards)
        e, c = cfg.embedding_dim, shards[0].num_classes
        assert len(res.messages) == cfg.t_max * len(shards)
        assert all(m.num_reals == e * c + c and m.n_samples is None for m in res.messages)
        assert all(h.shape == (e, c) for h in res.global_heads)

    def test_solo_sends_nothing(self, shards):
        res = run_federation(small_config(strategy="solo"), shards)
        assert res.messages == [] and res.global_heads == []

    def test_solo_equals_isolated_runs(self, shards):
        cfg = small_config(strategy="solo")
        fed = run_federation(cfg, shards)
        for i, s in enumerate(shards):
            alone = run_federation(cfg, [s])
            assert [r.valid_acc[0] for r in alone.rounds] == [r.valid_acc[i] for r in fed.rounds]
            assert [r.train_loss[0] for r in alone.rounds] == [r.train_loss[i] for r in fed.rounds]

    def test_zero_alpha_ours_is_solo(self, shards):
        solo = run_federation(small_config(strategy="solo"), shards)
        ours = run_federation(small_config(strategy="ours", alpha=0.0), shards)
        assert [r.to_dict() for r in solo.rounds] == [r.to_dict() for r in ours.rounds]

    def test_single_client_mean_tracks_local_head(self, shards):
        updates = []
        cfg = small_config(strategy="ours")
        models = build_models(shards[:1], cfg)
        res = run_federation(cfg, shards[:1], models)
        for epoch, g in enumerate(res.global_heads, start=1):
            m = res.messages[epoch - 1]
            assert g.weights.tobytes() == m.head.weights.tobytes()
            updates.append(g)
        assert models[0].global_head.weights.tobytes() == updates[-1].weights.tobytes()

    def test_avg_overwrites_local_heads(self, shards):
        res = run_federation(small_config(strategy="avg"), shards)
        last = res.global_heads[-1]
        for m in res.models:
            assert m.local_head.weights.tobytes() == last.weights.tobytes()

    def test_ours_keeps_local_heads(self, shards):
        res = run_federation(small_config(strategy="ours"), shards)
        last = res.global_heads[-1]
        for m in res.models:
            assert m.global_head.weights.tobytes() == last.weights.tobytes()
            assert not np.array_equal(m.local_head.weights, last.weights)

    @pytest.mark.parametrize("strategy", list(Strategy))
    def test_worker_count_independent(self, shards, strategy):
        a = run_federation(small_config(strategy=strategy, workers=1), shards)
        b = run_federation(small_config(strategy=strategy, workers=3), shards)
        assert [r.to_dict() for r in a.rounds] == [r.to_dict() for r in b.rounds]

    def test_body_isolation(self, shards):
        """Client 0's body sees client 1's data only through the aggregated head."""
        cfg = small_config(strategy="ours")
        changed = list(shards)
        changed[1] = replace(shards[1], train_x=shards[1].train_x[::-1].copy(),
                             train_y=shards[1].train_y[::-1].copy())
        base = run_federation(cfg, shards)
        pert = run_federation(cfg, changed)
        # identical first round: client 0's epoch-1 update cannot depend on anyone else
        assert base.rounds[0].train_loss[0] == pert.rounds[0].train_loss[0]
        solo = small_config(strategy="solo")
        a = run_federation(solo, shards).models[0]
        b = run_federation(solo, changed).models[0]
        for la, lb in zip(a.body, b.body):
            assert la.weights.tobytes() == lb.weights.tobytes()

    def test_weighted_mean_sends_counts(self, shards):
        res = run_federation(small_config(strategy="ours", aggregation="weighted_mean", t_max=2),
                             shards)
        assert [m.n_samples for m in res.messages[:3]] == [s.n_train for s in shards]

    def test_client_error_names_client(self, shards):
        cfg = small_config()
        models = build_models(shards, cfg)
        bad = list(shards)
        bad[2] = replace(shards[2], train_x=shards[2].train_x[:, :1])
        with pytest.raises(ShapeError, match="client 2"):
            run_federation(cfg, bad, models)
