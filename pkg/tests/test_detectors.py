import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from changestream import (
    InvalidChangepoint,
    MissingRepresentations,
    RcParams,
    SimConfig,
    StatTable,
    consistency_score,
    cut_partition,
    detect,
    detect_incremental,
    gc_score,
    incremental_profile,
    rc_score,
    score_profile,
    simulate_benchmark,
    step_score,
)
from changestream.core import ValidationError
from changestream.detectors import pairwise_cosine_mean

from conftest import GC_EXAMPLE, table_from_dict
from oracles import cosine_mean, gc_exact, pair_dict, random_table, rc_profile

METHODS = ("step", "gc", "rc", "rc-lambda0", "step-io", "gc-io", "rc-io")


# cut partition ------------------------------------------------------------

def test_cut_partition_n4():
    part = cut_partition(4, 2)
    assert set(part.cut_edges) == {(0, 2), (0, 3), (1, 2), (1, 3)}
    assert set(part.complement_edges) == {(0, 1), (2, 3)}


def test_cut_partition_n2_has_empty_complement():
    part = cut_partition(2, 1)
    assert part.cut_edges == ((0, 1),)
    assert part.complement_edges == ()


def test_cut_size_identity():
    assert len(cut_partition(10, 3).cut_edges) == 21
    for n in range(2, 16):
        for k in range(1, n):
            part = cut_partition(n, k)
            assert len(part.cut_edges) == k * (n - k)
            assert len(part.cut_edges) + len(part.complement_edges) == n * (n - 1) // 2


@pytest.mark.parametrize("kappa", [0, 4, 7])
def test_cut_partition_rejects_out_of_range(kappa):
    with pytest.raises(InvalidChangepoint):
        cut_partition(4, kappa)


# step ---------------------------------------------------------------------

def test_step_profile_example():
    table = table_from_dict({(0, 1): 0.1, (1, 2): 1.0, (2, 3): 0.2, (0, 2): 0, (0, 3): 0, (1, 3): 0}, 4)
    assert list(score_profile(table, "step")) == [0.1, 1.0, 0.2]
    assert detect(table, "step").kappa_hat == 2


def test_step_constant_table_ties_to_first():
    table = StatTable.from_arrays(np.triu(np.full((5, 5), 0.3), 1))
    res = detect(table, "step")
    assert all(v == 0.3 for v in res.profile)
    assert res.kappa_hat == 1


def test_step_n2():
    table = StatTable.from_arrays(np.array([[0, 0.42], [0, 0]]))
    assert step_score(table, 1) == 0.42
    assert detect(table, "step").kappa_hat == 1


def test_step_argmax_invariant_under_monotone_transform():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p, _ = random_table(rng, int(rng.integers(2, 12)))
        a = detect(StatTable.from_arrays(p), "step").kappa_hat
        b = detect(StatTable.from_arrays(np.triu(np.exp(3 * p) + 7, 1)), "step").kappa_hat
        assert a == b


# graph cut ----------------------------------------------------------------

def test_gc_hand_worked_example(gc_example):
    assert gc_score(gc_example, 1) == pytest.approx(-1 / 30, abs=1e-12)
    assert gc_score(gc_example, 2) == pytest.approx(0.70, abs=1e-12)
    assert gc_score(gc_example, 3) == pytest.approx(-0.1, abs=1e-12)
    res = detect(gc_example, "gc")
    assert res.kappa_hat == 2
    assert res.confidence == pytest.approx(0.70, abs=1e-12)


def test_gc_matches_rational_oracle():
    rng = np.random.default_rng(1)
    for _ in range(40):
        n = int(rng.integers(2, 10))
        p, _ = random_table(rng, n)
        table = StatTable.from_arrays(p)
        for k in range(1, n):
            assert gc_score(table, k) == pytest.approx(float(gc_exact(pair_dict(p), n, k)), abs=1e-12)


def test_gc_all_zero():
    table = StatTable.from_arrays(np.zeros((6, 6)))
    assert all(v == 0 for v in score_profile(table, "gc"))


def test_gc_n2_uses_zero_complement_mean():
    # the only case without a complement, hence the only one that a shift moves
    table = StatTable.from_arrays(np.array([[0, 0.8], [0, 0]]))
    assert gc_score(table, 1) == 0.8
    assert detect(table, "gc").kappa_hat == 1


def test_gc_shift_exact_on_dyadic_values():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(3, 16))
        p, _ = random_table(rng, n, dyadic=True)
        c = int(rng.integers(-4096, 4096)) / 1024
        a = StatTable.from_arrays(p)
        b = StatTable.from_arrays(np.triu(p + c, 1))
        assert list(score_profile(a, "gc")) == list(score_profile(b, "gc"))
        assert list(incremental_profile(a, "gc")) == list(incremental_profile(b, "gc"))


def test_gc_shift_close_on_arbitrary_values():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(3, 16))
        p, _ = random_table(rng, n)
        c = rng.uniform(-10, 10)
        a = score_profile(StatTable.from_arrays(p), "gc")
        b = score_profile(StatTable.from_arrays(np.triu(p + c, 1)), "gc")
        assert np.max(np.abs(a - b)) < 1e-12


def test_gc_scale_equivariance():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 16))
        p, _ = random_table(rng, n)
        a = rng.uniform(0.01, 100)
        base = score_profile(StatTable.from_arrays(p), "gc")
        scaled = score_profile(StatTable.from_arrays(a * p), "gc")
        np.testing.assert_allclose(scaled, a * base, rtol=1e-12, atol=1e-12)
        assert int(np.argmax(scaled)) == int(np.argmax(base))


# consistency --------------------------------------------------------------

def test_consistency_third(gc_example):
    assert consistency_score(gc_example, 2) == pytest.approx(1 / 3, abs=1e-12)
    assert pairwise_cosine_mean(gc_example, 2) == pytest.approx(1 / 3, abs=1e-12)


def test_consistency_identical_reps_is_one():
    n = 6
    h = np.broadcast_to(np.array([0.3, -2.0, 1.0]), (n, n, 3))
    table = StatTable.from_arrays(np.zeros((n, n)), h)
    for k in range(1, n):
        assert consistency_score(table, k) == pytest.approx(1.0, abs=1e-12)


def test_consistency_single_edge():
    table = StatTable.from_arrays(np.zeros((2, 2)), np.ones((2, 2, 3)))
    assert consistency_score(table, 1) == 1.0


def test_consistency_unnormalized_variant(gc_example):
    # |sum of unit vectors|^2 = |(2, 2)|^2 = 8, self-pairs included
    assert consistency_score(gc_example, 2, average=False) == pytest.approx(8.0, abs=1e-12)


def test_gram_identity_against_double_loop():
    rng = np.random.default_rng(5)
    for _ in range(40):
        n = int(rng.integers(2, 9))
        p, h = random_table(rng, n, d=int(rng.integers(1, 6)))
        table = StatTable.from_arrays(p, h)
        hd = {k: h[k] for k in table.observations}
        for k in range(1, n):
            assert abs(consistency_score(table, k) - cosine_mean(hd, n, k)) < 1e-9


def test_consistency_bounds():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.integers(2, 10))
        p, h = random_table(rng, n, d=2)
        prof = score_profile(StatTable.from_arrays(p, h), "rc-lambda0")
        assert np.all(prof >= -1 - 1e-12) and np.all(prof <= 1 + 1e-12)


def test_consistency_needs_representations(gc_example):
    bare = StatTable.from_arrays(gc_example.p_matrix)
    with pytest.raises(MissingRepresentations):
        consistency_score(bare, 2)
    with pytest.raises(MissingRepresentations):
        detect(bare, "rc")
    with pytest.raises(MissingRepresentations):
        detect_incremental(bare, "rc")


# regularized cut ----------------------------------------------------------

def test_rc_composition(gc_example):
    assert rc_score(gc_example, 2) == pytest.approx(1.25 * 0.70 + 1 / 3, abs=1e-12)
    assert rc_score(gc_example, 2) == pytest.approx(1.2083333333333333, abs=1e-12)


def test_rc_lambda_zero_equals_consistency(gc_example):
    for k in (1, 2, 3):
        assert rc_score(gc_example, k, RcParams(0.0)) == consistency_score(gc_example, k)
    np.testing.assert_array_equal(score_profile(gc_example, "rc", RcParams(0.0)),
                                  score_profile(gc_example, "rc0"))


def test_rc_constant_table_ties_to_first():
    n = 7
    h = np.broadcast_to(np.array([1.0, 2.0]), (n, n, 2))
    table = StatTable.from_arrays(np.triu(np.full((n, n), 0.4), 1), h)
    res = detect(table, "rc")
    np.testing.assert_allclose(res.profile, 1.0, atol=1e-12)
    assert res.kappa_hat == 1


def test_rc_large_lambda_agrees_with_gc():
    rng = np.random.default_rng(7)
    for _ in range(30):
        n = int(rng.integers(3, 12))
        p, h = random_table(rng, n)
        table = StatTable.from_arrays(p, h)
        gc_hat = detect(table, "gc").kappa_hat
        lam, stable = 1.0, 0
        while stable < 3 and lam < 1e12:
            stable = stable + 1 if detect(table, "rc", RcParams(lam)).kappa_hat == gc_hat else 0
            lam *= 2
        assert stable == 3


@pytest.mark.parametrize("lam", [-0.1, float("nan"), float("inf")])
def test_rc_params_validation(lam):
    with pytest.raises(ValidationError):
        RcParams(lam)


# estimator ----------------------------------------------------------------

def test_near_ties_resolve_to_smallest():
    from changestream.detectors import argmax_first
    assert argmax_first([1.0, 1.0 + 1e-15, 0.2]) == 0
    assert argmax_first([1.0, 1.0 + 1e-9, 0.2]) == 1
    assert argmax_first([-3.0, -2.0, -2.0]) == 1


def test_tie_break_smallest():
    table = table_from_dict({(0, 1): 0.5, (1, 2): 0.5, (2, 3): 0.1, (0, 2): 0, (0, 3): 0, (1, 3): 0}, 4)
    assert detect(table, "step").kappa_hat == 1


def test_unknown_method(gc_example):
    with pytest.raises(ValidationError):
        detect(gc_example, "nope")


def test_io_methods_share_scores(gc_example):
    for m in ("step", "gc", "rc"):
        np.testing.assert_array_equal(score_profile(gc_example, m), score_profile(gc_example, m + "-io"))
        assert detect(gc_example, m + "-io").method == m + "-io"


def test_noiseless_streams_recover_changepoint():
    cfg = SimConfig(num_streams=3, no_change_streams=0)
    for table, truth in simulate_benchmark(cfg):
        for m in METHODS:
            assert detect(table, m).kappa_hat == truth.kappa_star
            assert detect_incremental(table, m).kappa_hat == truth.kappa_star


def test_detect_is_pure(gc_example):
    a = detect(gc_example, "rc", stream_id="x")
    b = detect(gc_example, "rc", stream_id="x")
    assert a == b and a.profile == b.profile


# incremental vs naive -----------------------------------------------------

def test_incremental_matches_naive_all_methods():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(2, 25))
        p, h = random_table(rng, n)
        table = StatTable.from_arrays(p, h)
        for m in METHODS:
            assert np.max(np.abs(incremental_profile(table, m) - score_profile(table, m))) < 1e-9


def test_naive_matches_double_loop_oracle():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n = int(rng.integers(2, 8))
        p, h = random_table(rng, n)
        got = score_profile(StatTable.from_arrays(p, h), "rc", RcParams(1.25))
        np.testing.assert_allclose(got, rc_profile(p, h, 1.25), rtol=0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 14), seed=st.integers(0, 2**32 - 1), lam=st.floats(0, 10))
def test_incremental_property(n, seed, lam):
    rng = np.random.default_rng(seed)
    p, h = random_table(rng, n, d=3)
    table = StatTable.from_arrays(p, h)
    naive = score_profile(table, "rc", RcParams(lam))
    fast = incremental_profile(table, "rc", RcParams(lam))
    assert np.max(np.abs(naive - fast)) < 1e-9
    assert math.isfinite(float(fast.sum()))
