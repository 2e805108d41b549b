from dataclasses import replace

import numpy as np
import pytest

from changestream import NO_CHANGE, detect
from changestream.description import (
    ToyDiscriminator,
    ToyGenerator,
    TrainConfig,
    TrainHistory,
    discriminator_accuracy,
    fit_discriminator,
    fit_generator,
    fit_image_only,
    image_only_stat_table,
    language_stat_table,
    make_toy_dataset,
    train_phases,
)
from changestream.description.training import change_caption


@pytest.fixture(scope="module")
def data():
    return make_toy_dataset(seed=0)


@pytest.fixture(scope="module")
def trained(data):
    history = TrainHistory()
    gen, disc = train_phases(data, TrainConfig(), history)
    return gen, disc, history


def test_toy_dataset_shape(data):
    assert len(data.labeled_w) + len(data.unlabeled_x) == sum(6 * 5 // 2 for _ in data.streams)
    assert data.vocab_size == 5 and data.caption_length == 2
    assert set(data.labeled_w) <= {NO_CHANGE} | {change_caption(c, 2) for c in range(1, 5)}


def test_zero_learning_rate_keeps_parameters(data):
    cfg = TrainConfig(learning_rate=0.0)
    gen = ToyGenerator(data.vocab_size, data.feature_dim, seed=3)
    disc = ToyDiscriminator(data.vocab_size, data.feature_dim, seed=4)
    g2 = fit_generator(gen, data, 2, cfg, np.random.default_rng(0))
    d2 = fit_discriminator(disc, data, 2, cfg, np.random.default_rng(0))
    g3 = fit_generator(gen, data, 2, cfg, np.random.default_rng(0), discriminator=disc, lambda_rl=0.2,
                       sample_rng=np.random.default_rng(1))
    np.testing.assert_array_equal(g2.theta, gen.theta)
    np.testing.assert_array_equal(d2.theta, disc.theta)
    np.testing.assert_array_equal(g3.theta, gen.theta)


def test_phase3_without_reward_continues_phase1(data):
    cfg = TrainConfig()
    gen = ToyGenerator(data.vocab_size, data.feature_dim, seed=3)
    disc = ToyDiscriminator(data.vocab_size, data.feature_dim, seed=4)
    plain = fit_generator(gen, data, 4, cfg, np.random.default_rng(7), learning_rate=0.05)
    rl_off = fit_generator(gen, data, 4, cfg, np.random.default_rng(7), learning_rate=0.05,
                           discriminator=disc, lambda_rl=0.0, sample_rng=np.random.default_rng(8))
    np.testing.assert_array_equal(plain.theta, rl_off.theta)


def test_train_phases_reproducible(data):
    cfg = TrainConfig(epochs_generator=3, epochs_discriminator=3, epochs_phase3=2)
    g1, d1 = train_phases(data, cfg)
    g2, d2 = train_phases(data, cfg)
    np.testing.assert_array_equal(g1.theta, g2.theta)
    np.testing.assert_array_equal(d1.theta, d2.theta)


def test_discriminator_generalizes(trained):
    _, disc, _ = trained
    held_out = make_toy_dataset(seed=1)
    assert discriminator_accuracy(disc, held_out, seed=1) > 0.95


def test_phase3_loss_decreases(trained):
    _, _, history = trained
    l3 = history.phase3[:11]
    assert all(b < a for a, b in zip(l3, l3[1:]))


def test_generator_learns_captions(trained):
    gen, _, _ = trained
    held_out = make_toy_dataset(seed=2)
    # the generator emits fixed-length captions, so "no change" is judged by its leading token
    hits = [gen.greedy(x)[:len(w)] == w for x, w in held_out.labeled]
    assert np.mean(hits) > 0.9


def test_no_change_statistic_separates_straddling_pairs(trained):
    gen, disc, _ = trained
    held_out = make_toy_dataset(num_streams=10, seed=3)
    for stream in held_out.streams:
        k = stream.manifest.true_changepoint
        table = language_stat_table(stream.features, disc, gen)
        p = table.p_matrix
        cross = p[:k, k:]
        same = [p[t, u] for t in range(p.shape[0]) for u in range(t + 1, p.shape[0]) if not t < k <= u]
        if same:
            assert cross.min() > max(same)
        assert detect(table, "rc").kappa_hat == k


def test_image_only_detector_table(data):
    det = fit_image_only(data, epochs=20)
    held_out = make_toy_dataset(num_streams=6, seed=4)
    correct = 0
    for stream in held_out.streams:
        table = image_only_stat_table(stream.features, det)
        correct += detect(table, "gc-io").kappa_hat == stream.manifest.true_changepoint
    assert correct >= 5


def test_empty_labeled_set_rejected(data):
    empty = replace(data, labeled_x=data.labeled_x[:0], labeled_w=[], labeled_type=data.labeled_type[:0])
    with pytest.raises(ValueError):
        train_phases(empty, TrainConfig(epochs_generator=1, epochs_discriminator=1, epochs_phase3=1))
