"""Minibatch trainer: pairing policies, descent, determinism, cost scaling."""

import json
import time

import numpy as np
import pytest

from settransport.datagen import (PairedDataset, PriorConfig,
                                  build_supervised_pairs,
                                  build_unsupervised_dataset, draw_set,
                                  sample_mvn_params)
from settransport.encoders import OneHotEncoder
from settransport.metrics import energy_distance
from settransport.rng import stream
from settransport.training import PAIRINGS, TrainConfig, Trainer, train

MVN = PriorConfig(family="mvn")


def _tiny_dataset(n_sets=32, set_size=16, K=8, seed=0, tags=None):
    return build_unsupervised_dataset(MVN, n_sets, set_size, K, seed, tags=tags)


def _tiny_pairs(n_pairs=16, set_size=16, seed=0):
    return build_supervised_pairs(MVN, n_pairs, set_size, "mvn_shift", seed)


def _tiny_config(**kw):
    base = dict(generator="energy", conditioning="set", stc=True,
                pairing="any_to_any_uniform", d_latent=6, d_hidden_encoder=12,
                d_hidden_generator=12, epochs=1, batch_pairs=4, subsample=8,
                seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestTrainConfig:
    def test_rejects_unknown_enums(self):
        with pytest.raises(ValueError):
            TrainConfig(generator="gan")
        with pytest.raises(ValueError):
            TrainConfig(conditioning="labels")
        with pytest.raises(ValueError):
            TrainConfig(pairing="nearest_neighbour")

    def test_source_only_requires_supervised_pairs(self):
        with pytest.raises(ValueError):
            TrainConfig(stc=False, pairing="any_to_any_uniform")
        TrainConfig(stc=False, pairing="supervised_pairs")

    def test_source_only_onehot_unsupported(self):
        with pytest.raises(ValueError):
            TrainConfig(stc=False, conditioning="onehot",
                        pairing="supervised_pairs")

    def test_bidirectional_defaults_to_stc(self):
        assert TrainConfig(stc=True).effective_bidirectional
        assert not TrainConfig(stc=False,
                               pairing="supervised_pairs").effective_bidirectional
        assert not TrainConfig(stc=True, bidirectional=False).effective_bidirectional


class TestTrainerConstruction:
    def test_policy_dataset_compatibility(self):
        data = _tiny_dataset()
        pairs = _tiny_pairs()
        with pytest.raises(TypeError):
            Trainer(data, _tiny_config(pairing="supervised_pairs"))
        with pytest.raises(TypeError):
            Trainer(data, _tiny_config(pairing="semi_supervised_mixture"))
        with pytest.raises(TypeError):
            Trainer(pairs, _tiny_config(pairing="any_to_any_uniform"))
        with pytest.raises(TypeError):
            Trainer(pairs, _tiny_config(pairing="forward_time_only"))

    def test_forward_time_needs_both_tags(self):
        with pytest.raises(ValueError):
            Trainer(_tiny_dataset(), _tiny_config(pairing="forward_time_only"))
        only_early = _tiny_dataset(tags=["early"] * 32)
        with pytest.raises(ValueError):
            Trainer(only_early, _tiny_config(pairing="forward_time_only"))

    def test_onehot_needs_unpaired_dataset(self):
        with pytest.raises(TypeError):
            Trainer(_tiny_pairs(), _tiny_config(conditioning="onehot",
                                                pairing="supervised_pairs"))

    def test_steps_per_epoch(self):
        tr = Trainer(_tiny_dataset(n_sets=32), _tiny_config(batch_pairs=5))
        assert tr.steps_per_epoch == 6
        tr = Trainer(_tiny_dataset(n_sets=4, K=4), _tiny_config(batch_pairs=16))
        assert tr.steps_per_epoch == 1


class TestPairingPolicies:
    def test_supervised_always_returns_partner(self):
        tr = Trainer(_tiny_pairs(), _tiny_config(pairing="supervised_pairs"))
        rng = np.random.default_rng(0)
        for _ in range(50):
            u, v = tr._draw_pair_indices(rng)
            assert np.array_equal(u, v)

    def test_any_to_any_draws_independently(self):
        tr = Trainer(_tiny_dataset(n_sets=64, K=64),
                     _tiny_config(batch_pairs=256))
        u, v = tr._draw_pair_indices(np.random.default_rng(0))
        assert not np.array_equal(u, v)
        assert set(u) | set(v) <= set(range(64))

    def test_forward_time_respects_tags(self):
        tags = ["early"] * 16 + ["late"] * 16
        data = _tiny_dataset(n_sets=32, tags=tags)
        tr = Trainer(data, _tiny_config(pairing="forward_time_only",
                                        batch_pairs=64))
        rng = np.random.default_rng(0)
        for _ in range(20):
            u, v = tr._draw_pair_indices(rng)
            assert np.all(data.tags[u] == "early")
            assert np.all(data.tags[v] == "late")

    def test_mixture_p1_is_supervised(self):
        tr = Trainer(_tiny_pairs(), _tiny_config(pairing="semi_supervised_mixture",
                                                 mixture_p=1.0))
        rng = np.random.default_rng(0)
        for _ in range(50):
            u, v = tr._draw_pair_indices(rng)
            assert np.array_equal(u, v)

    def test_mixture_true_pair_frequency(self):
        # large pair pool so accidental u == v collisions are negligible
        n = 100_000
        blank = np.zeros((n, 2, 2))
        pairs = PairedDataset(family="mvn", source_points=blank,
                              target_points=blank.copy(), source_params=[],
                              target_params=[], kind="mvn_shift",
                              shift=np.zeros(2), offset=np.zeros(2),
                              support_low=0.0, support_high=2.5, seed=0,
                              prior=MVN)
        tr = Trainer(pairs, _tiny_config(pairing="semi_supervised_mixture",
                                         mixture_p=0.25, batch_pairs=1000))
        rng = np.random.default_rng(0)
        hits = total = 0
        for _ in range(100):
            u, v = tr._draw_pair_indices(rng)
            hits += int(np.sum(u == v))
            total += len(u)
        assert abs(hits / total - 0.25) < 0.01


class TestBatchAssembly:
    def test_shapes_and_membership(self):
        data = _tiny_dataset()
        tr = Trainer(data, _tiny_config(batch_pairs=4, subsample=8))
        u, v, src, tgt = tr._batch(np.random.default_rng(0))
        assert src.shape == (4, 8, 2) and tgt.shape == (4, 8, 2)
        for b in range(4):
            stored = data.points[u[b]]
            for row in src[b]:
                assert any(np.array_equal(row, p) for p in stored)

    def test_subsample_rows_are_distinct(self):
        data = _tiny_dataset()
        tr = Trainer(data, _tiny_config(batch_pairs=8, subsample=8))
        _, _, src, _ = tr._batch(np.random.default_rng(1))
        for b in range(8):
            assert len(np.unique(src[b], axis=0)) == 8

    def test_full_subsample_returns_stored_set(self):
        data = _tiny_dataset(set_size=8)
        tr = Trainer(data, _tiny_config(batch_pairs=2, subsample=8))
        u, _, src, _ = tr._batch(np.random.default_rng(2))
        assert np.array_equal(src, data.points[u])

    def test_oversized_subsample_rejected(self):
        data = _tiny_dataset(set_size=8)
        tr = Trainer(data, _tiny_config(subsample=9))
        with pytest.raises(ValueError):
            tr.loss(0)


class TestDescentAndGradients:
    @pytest.mark.parametrize("generator", ["energy", "swd", "fm", "stoch_energy"])
    def test_one_step_reduces_frozen_batch_loss(self, generator):
        data = _tiny_dataset()
        decreased = 0
        for init in range(20):
            tr = Trainer(data, _tiny_config(generator=generator, seed=init,
                                            n_projections=32))
            before = tr.loss(0).item()
            tr.step(0)
            after = tr.loss(0).item()
            decreased += int(after < before)
        assert decreased >= 18

    @pytest.mark.parametrize("generator", ["energy", "fm"])
    def test_step_objective_gradient_matches_finite_differences(self, generator):
        tr = Trainer(_tiny_dataset(), _tiny_config(generator=generator))
        loss = tr.loss(0)
        for p in tr.params:
            p.grad = None
        loss.backward()
        rng = np.random.default_rng(7)
        h = 1e-5
        for _ in range(12):
            p = tr.params[rng.integers(len(tr.params))]
            flat = rng.integers(p.data.size)
            idx = np.unravel_index(flat, p.data.shape)
            orig = p.data[idx]
            p.data[idx] = orig + h
            up = tr.loss(0).item()
            p.data[idx] = orig - h
            down = tr.loss(0).item()
            p.data[idx] = orig
            numeric = (up - down) / (2 * h)
            analytic = p.grad[idx]
            assert abs(analytic - numeric) <= 1e-4 * max(1.0, abs(numeric))

    def test_bidirectional_adds_reverse_term(self):
        data = _tiny_dataset()
        both = Trainer(data, _tiny_config()).loss(0).item()
        fwd = Trainer(data, _tiny_config(bidirectional=False)).loss(0).item()
        assert both > fwd > 0


class TestRun:
    def test_zero_epochs_leaves_parameters_at_init(self):
        data = _tiny_dataset()
        model = train(data, _tiny_config(epochs=0))
        fresh = Trainer(data, _tiny_config(epochs=0))
        trained = list(model.encoder.parameters()) + list(model.generator.parameters())
        for got, ref in zip(trained, fresh.params):
            assert np.array_equal(got.data, ref.data)
        assert model.epoch_losses == []

    def test_same_seed_twice_is_bit_identical(self):
        data = _tiny_dataset()
        m1 = train(data, _tiny_config(epochs=2))
        m2 = train(data, _tiny_config(epochs=2))
        p1 = list(m1.encoder.parameters()) + list(m1.generator.parameters())
        p2 = list(m2.encoder.parameters()) + list(m2.generator.parameters())
        for a, b in zip(p1, p2):
            assert np.array_equal(a.data, b.data)
        assert m1.epoch_losses == m2.epoch_losses

    def test_epoch_losses_and_log(self, tmp_path):
        data = _tiny_dataset()
        log = tmp_path / "log.jsonl"
        model = train(data, _tiny_config(epochs=3), log_path=log)
        assert len(model.epoch_losses) == 3
        lines = [json.loads(x) for x in log.read_text().splitlines()]
        assert len(lines) == 3 * 8
        assert [x["step"] for x in lines] == list(range(24))
        assert all({"step", "epoch", "loss", "wall"} <= set(x) for x in lines)

    def test_onehot_run_sets_centroids(self):
        data = _tiny_dataset()
        model = train(data, _tiny_config(conditioning="onehot"))
        assert isinstance(model.encoder, OneHotEncoder)
        assert model.encoder.centroids is not None
        assert model.encoder.centroids.shape == (data.K, data.dim)
        z = model.embed(data.points[0])
        assert z.shape == (model.config.d_latent,)

    def test_non_finite_loss_aborts(self):
        tr = Trainer(_tiny_dataset(), _tiny_config())
        # a huge but finite output bias passes the map's own finiteness guard
        # while the squared distances in the loss overflow past the float range
        tr.params[-1].data[:] = 1e200
        with pytest.raises(RuntimeError, match="non-finite"), np.errstate(all="ignore"):
            tr.step(0)

    def test_supervised_source_only_run(self):
        pairs = _tiny_pairs()
        model = train(pairs, _tiny_config(stc=False, pairing="supervised_pairs",
                                          epochs=2))
        assert not model.config.effective_bidirectional
        out = model.transport(pairs.source_points[0],
                              model.embed(pairs.source_points[0]))
        assert out.shape == pairs.source_points[0].shape


class TestStepCost:
    def test_per_step_time_flat_in_corpus_size(self):
        cfg = _tiny_config(batch_pairs=8, subsample=16)
        small = build_unsupervised_dataset(MVN, 400, 32, 400, 0)
        large = build_unsupervised_dataset(MVN, 800, 32, 800, 0)

        def median_step(data):
            tr = Trainer(data, cfg)
            for s in range(3):
                tr.step(s)
            times = []
            for s in range(3, 23):
                t0 = time.perf_counter()
                tr.step(s)
                times.append(time.perf_counter() - t0)
            return float(np.median(times))

        ratio = median_step(large) / median_step(small)
        assert ratio < 1.6


class TestTrainedQuality:
    def test_energy_model_matches_targets_in_distribution(self, trained_models):
        model = trained_models["energy"]
        vals = []
        for i in range(50):
            pu = sample_mvn_params(stream(3, "evalprobe/pu", i), MVN)
            pv = sample_mvn_params(stream(3, "evalprobe/pv", i), MVN)
            X = draw_set(stream(3, "evalprobe/X", i), pu, 256)
            Y = draw_set(stream(3, "evalprobe/Y", i), pv, 256)
            Yhat = model.transport(X, model.embed(X), model.embed(Y))
            vals.append(energy_distance(Yhat, Y))
        assert float(np.mean(vals)) < 0.05

    def test_losses_trend_downward(self, trained_models):
        for model in trained_models.values():
            assert model.epoch_losses[-1] < 0.5 * model.epoch_losses[0]
