"""Pixel-flipping curves, AUC, and the method comparison harness."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rlpm.errors import InputError, ShapeError
from rlpm.flipping import (
    MethodScore,
    auc,
    class_probability,
    compare_methods,
    pixel_flip_curve,
    random_relevance,
    worker_count,
)
from rlpm.graph import GraphBuilder
from rlpm.relprop import RuleConfig, gradient_times_input
from rlpm.toynets import build_mlp, random_conv_net


def linear_softmax_model(w):
    # logits = [w . x, 0]; probability of class 0 rises with w . x
    w = np.asarray(w, dtype=float)
    b = GraphBuilder((w.shape[0],))
    b.dense(2, weights=np.column_stack([w, np.zeros_like(w)]), bias=None)
    b.softmax()
    return b.build()


# ---------------------------------------------------------------------------
# auc


def test_auc_of_constant_one_is_one():
    assert auc([0.0, 0.5, 1.0], [1.0, 1.0, 1.0]) == pytest.approx(1.0, abs=1e-15)


def test_auc_of_linear_decay_is_half():
    fr = np.linspace(0.0, 1.0, 11)
    assert auc(fr, 1.0 - fr) == pytest.approx(0.5, abs=1e-15)


@given(seed=st.integers(0, 10_000), n=st.integers(2, 30))
def test_auc_matches_fine_grid_oracle(seed, n):
    gen = np.random.default_rng(seed)
    fractions = np.unique(np.concatenate([[0.0, 1.0], gen.random(n)]))
    scores = gen.random(fractions.shape[0])
    assert auc(fractions, scores) == pytest.approx(
        oracles.trapezoid_fine(fractions, scores), abs=1e-12
    )


def test_auc_input_validation():
    with pytest.raises(InputError, match="equal-length"):
        auc([0.0, 1.0], [1.0, 0.5, 0.0])
    with pytest.raises(InputError, match="two curve points"):
        auc([0.0], [1.0])
    with pytest.raises(InputError, match="strictly increasing"):
        auc([0.0, 0.5, 0.5], [1.0, 0.5, 0.0])


# ---------------------------------------------------------------------------
# flip curves


def test_constant_model_gives_flat_curve():
    # weights 0: logits always [0, 0], probability 0.5 throughout
    net = linear_softmax_model(np.zeros(4))
    x = np.array([1.0, 2.0, 3.0, 4.0])
    curve = pixel_flip_curve(net, x, np.ones(4), target_class=0, batch_fraction=0.25)
    assert curve.fractions == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert all(s == 0.5 for s in curve.scores)
    assert curve.auc == pytest.approx(0.5, abs=1e-12)


def test_flipping_the_only_informative_pixel_drops_the_score():
    net = linear_softmax_model(np.array([5.0, 0.0, 0.0, 0.0]))
    x = np.ones(4)
    relevance = np.array([10.0, 0.0, 0.0, 0.0])
    curve = pixel_flip_curve(net, x, relevance, batch_fraction=0.25, target_class=0)
    p0 = 1.0 / (1.0 + np.exp(-5.0))
    assert curve.scores[0] == pytest.approx(p0, abs=1e-12)
    assert curve.scores[1] == pytest.approx(0.5, abs=1e-12)
    assert all(s == pytest.approx(0.5, abs=1e-12) for s in curve.scores[1:])


def test_full_flip_matches_zeroed_image(rng):
    net = random_conv_net(np.random.default_rng(3), image=6, classes=3)
    x = rng.random((6, 6, 1))
    curve = pixel_flip_curve(net, x, rng.random((6, 6, 1)), target_class=1,
                             batch_fraction=0.5)
    assert curve.fractions[-1] == 1.0
    assert curve.scores[-1] == pytest.approx(
        class_probability(net, np.zeros_like(x), 1), abs=1e-15
    )


def test_mean_policy_fills_with_scalar_mean(rng):
    net = random_conv_net(np.random.default_rng(3), image=6, classes=3)
    x = rng.random((6, 6, 1))
    curve = pixel_flip_curve(net, x, rng.random((6, 6, 1)), policy="mean",
                             target_class=0, batch_fraction=1.0)
    filled = np.full_like(x, x.mean())
    assert curve.scores[-1] == pytest.approx(
        class_probability(net, filled, 0), abs=1e-15
    )


def test_constant_map_flips_in_row_major_order():
    net = linear_softmax_model(np.array([3.0, 2.0, 1.0, 0.5]))
    x = np.ones(4)
    curve = pixel_flip_curve(net, x, np.zeros(4), batch_fraction=0.25, target_class=0)
    # ties everywhere: elements are flipped 0,1,2,3 in turn
    expected = []
    flat = x.copy()
    expected.append(class_probability(net, flat, 0))
    for i in range(4):
        flat[i] = 0.0
        expected.append(class_probability(net, flat, 0))
    assert np.allclose(curve.scores, expected, atol=1e-15)


def test_informative_order_scores_below_reversed_order(rng):
    # linear model: flipping truly relevant pixels first must not raise AUC
    for seed in range(5):
        gen = np.random.default_rng(seed)
        w = gen.random(8) + 0.1
        x = gen.random(8) + 0.1
        net = linear_softmax_model(w)
        m = gradient_times_input(net, x, 0)
        down = pixel_flip_curve(net, x, m, batch_fraction=0.125)
        up = pixel_flip_curve(net, x, -m.values, batch_fraction=0.125, target_class=0)
        assert down.auc <= up.auc + 1e-12


def test_batches_round_up(rng):
    net = linear_softmax_model(np.ones(5))
    curve = pixel_flip_curve(net, np.ones(5), np.arange(5.0), batch_fraction=0.3,
                             target_class=0)
    # ceil(0.3 * 5) = 2 elements per batch: 2, 4, then the final 1
    assert curve.fractions == (0.0, 0.4, 0.8, 1.0)


def test_curve_validation(rng):
    net = linear_softmax_model(np.ones(3))
    with pytest.raises(InputError, match="target_class required"):
        pixel_flip_curve(net, np.ones(3), np.ones(3))
    with pytest.raises(ShapeError, match="relevance shape"):
        pixel_flip_curve(net, np.ones(3), np.ones(4), target_class=0)
    with pytest.raises(InputError, match="policy"):
        pixel_flip_curve(net, np.ones(3), np.ones(3), policy="swap", target_class=0)
    with pytest.raises(InputError, match="batch_fraction"):
        pixel_flip_curve(net, np.ones(3), np.ones(3), batch_fraction=0.0,
                         target_class=0)


def test_relevance_map_supplies_its_target(rng):
    net = build_mlp(4, [6], 3, rng=rng, bias=False)
    x = rng.random(4)
    m = gradient_times_input(net, x, 2)
    curve = pixel_flip_curve(net, x, m, batch_fraction=0.5)
    assert curve.scores[0] == pytest.approx(class_probability(net, x, 2), abs=1e-15)


# ---------------------------------------------------------------------------
# random baseline and method comparison


def test_random_relevance_is_reproducible_per_image():
    a = random_relevance((3, 3), seed=7, image_index=2)
    b = random_relevance((3, 3), seed=7, image_index=2)
    c = random_relevance((3, 3), seed=7, image_index=3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_worker_count_parses_env(monkeypatch):
    monkeypatch.delenv("RLPM_THREADS", raising=False)
    assert worker_count() == 0
    monkeypatch.setenv("RLPM_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("RLPM_THREADS", "-2")
    assert worker_count() == 0
    monkeypatch.setenv("RLPM_THREADS", "many")
    with pytest.raises(InputError, match="RLPM_THREADS"):
        worker_count()


def comparison_fixture(threads, monkeypatch):
    monkeypatch.setenv("RLPM_THREADS", str(threads))
    net = random_conv_net(np.random.default_rng(5), image=6, classes=3)
    gen = np.random.default_rng(1)
    images = [gen.random((6, 6, 1)) for _ in range(4)]
    return compare_methods(
        net, images, {"gxi": RuleConfig("gxi")}, batch_fraction=0.25, seed=3
    )


def test_compare_methods_rows_and_summaries(monkeypatch):
    cmp = comparison_fixture(0, monkeypatch)
    assert [r.method for r in cmp.rows] == ["gxi"] * 4 + ["random"] * 4
    assert [r.image_id for r in cmp.rows[:4]] == ["0000", "0001", "0002", "0003"]
    gxi = cmp.summary("gxi")
    aucs = [r.auc for r in cmp.rows if r.method == "gxi"]
    assert gxi.mean_auc == pytest.approx(np.mean(aucs))
    assert gxi.std_auc == pytest.approx(np.std(aucs))
    with pytest.raises(KeyError):
        cmp.summary("nosuch")


def test_compare_methods_thread_parity(monkeypatch):
    seq = comparison_fixture(0, monkeypatch)
    par = comparison_fixture(3, monkeypatch)
    assert seq.rows == par.rows


def test_compare_methods_reserved_name(monkeypatch):
    monkeypatch.setenv("RLPM_THREADS", "0")
    net = linear_softmax_model(np.ones(3))
    with pytest.raises(InputError, match="reserved"):
        compare_methods(net, [np.ones(3)], {"random": RuleConfig("gxi")})
    with pytest.raises(InputError, match="at least one image"):
        compare_methods(net, [], {"gxi": RuleConfig("gxi")})


def test_compare_methods_named_images(monkeypatch):
    monkeypatch.setenv("RLPM_THREADS", "0")
    net = linear_softmax_model(np.array([1.0, -1.0, 0.5]))
    images = [("b", np.ones(3)), ("a", np.full(3, 0.2))]
    cmp = compare_methods(net, images, {"gxi": RuleConfig("gxi")},
                          batch_fraction=0.5)
    assert [r.image_id for r in cmp.rows if r.method == "gxi"] == ["a", "b"]


def test_method_score_rows_are_value_objects():
    assert MethodScore("m", "0", 0.5) == MethodScore("m", "0", 0.5)
