import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xsep import metrics as M
from xsep.errors import ConfigError, DataError, ParameterError
from xsep.tensor import Rng

from oracles import ap_brute, topk_brute, weighted_map_brute


def test_topk_fixture():
    scores = np.array([[0.1, 0.7, 0.2], [0.5, 0.3, 0.2], [0.3, 0.3, 0.4]])
    labels = np.array([1, 2, 1])
    assert M.topk_accuracy(scores, labels, 1) == 1 / 3
    # row 3: class 1 trails class 2 and loses the tie to class 0
    assert M.topk_accuracy(scores, labels, 2) == 1 / 3
    assert M.topk_accuracy(scores, labels, 3) == 1.0


def test_topk_ties_go_to_lower_index():
    scores = np.array([[1.0, 1.0]])
    assert M.topk_accuracy(scores, np.array([0]), 1) == 1.0
    assert M.topk_accuracy(scores, np.array([1]), 1) == 0.0


def test_topk_errors():
    with pytest.raises(ParameterError):
        M.topk_accuracy(np.zeros((2, 3)), np.array([0, 1]), 0)
    with pytest.raises(ParameterError):
        M.topk_accuracy(np.zeros((2, 3)), np.array([0, 1]), 4)
    with pytest.raises(DataError):
        M.topk_accuracy(np.zeros((2, 3)), np.array([0]), 1)


@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(2, 8))
def test_topk_matches_brute_force(seed, n, k_classes):
    r = Rng(seed)
    # coarse integer scores force ties
    scores = r.integers(4, (n, k_classes)).astype(np.float64)
    labels = r.integers(k_classes, n)
    for k in range(1, k_classes + 1):
        assert M.topk_accuracy(scores, labels, k) == topk_brute(scores, labels, k)


@given(st.integers(0, 10**6))
def test_topk_invariant_under_monotone_transform(seed):
    r = Rng(seed)
    scores, labels = r.normal((20, 6)), r.integers(6, 20)
    for k in (1, 3):
        base = M.topk_accuracy(scores, labels, k)
        assert M.topk_accuracy(np.exp(scores) * 3 + 1, labels, k) == base


def test_ap_fixtures():
    assert M.average_precision_at_k([0.9, 0.8, 0.7], [1, 0, 1], 3) == (1 + 2 / 3) / 2
    assert M.average_precision_at_k([0.9, 0.8], [0, 1], 100) == 0.5
    assert M.average_precision_at_k([0.9, 0.8, 0.7], [0, 0, 1], 2) == 0.0
    assert math.isnan(M.average_precision_at_k([0.1, 0.2], [0, 0], 5))


def test_weighted_mean_fixture():
    scores = np.array([[0.9, 0.9], [0.1, 0.1]])
    targets = np.array([[1, 0], [0, 1]])
    assert M.average_precision_at_k(scores[:, 0], targets[:, 0], 100) == 1.0
    assert M.average_precision_at_k(scores[:, 1], targets[:, 1], 100) == 0.5
    assert M.weighted_map_at_k(scores, targets, [1, 3], 100) == 0.625


@given(st.integers(0, 10**6), st.integers(1, 15), st.integers(1, 6), st.integers(1, 20))
def test_weighted_map_matches_brute_force(seed, n, k_classes, k):
    r = Rng(seed)
    scores = r.integers(5, (n, k_classes)).astype(np.float64)
    targets = (r.random((n, k_classes)) < 0.4).astype(np.uint8)
    weights = r.uniform(0.1, 3.0, k_classes)
    got = M.weighted_map_at_k(scores, targets, weights, k)
    if not targets.any():
        assert math.isnan(got)
    else:
        assert abs(got - weighted_map_brute(scores, targets, weights, k)) < 1e-9


@given(st.integers(0, 10**6), st.floats(0.1, 10))
def test_equal_weights_reduce_to_unweighted_map(seed, w):
    r = Rng(seed)
    scores = r.normal((12, 5))
    targets = (r.random((12, 5)) < 0.5).astype(np.uint8)
    targets[0] = 1
    aps = [M.average_precision_at_k(scores[:, c], targets[:, c], 12) for c in range(5)]
    plain = float(np.mean(aps))
    assert abs(M.weighted_map_at_k(scores, targets, np.full(5, w), 12) - plain) < 1e-12
    assert abs(M.weighted_map_at_k(scores, targets, None, 12) - plain) < 1e-12


def test_weight_errors():
    scores, targets = np.zeros((2, 2)), np.array([[1, 0], [0, 1]])
    for bad in ([1, 0], [1, -1], [1, np.inf], [1, np.nan]):
        with pytest.raises(ConfigError):
            M.weighted_map_at_k(scores, targets, bad)
    with pytest.raises(ConfigError):
        M.weighted_map_at_k(scores, targets, [1, 2, 3])
    # classes without positives may carry weight 0
    assert M.weighted_map_at_k(scores, np.array([[1, 0], [0, 0]]), [1, 0]) == 1.0
    with pytest.raises(DataError):
        M.weighted_map_at_k(scores, np.zeros((3, 2)))
    with pytest.raises(ParameterError):
        M.weighted_map_at_k(scores, targets, k=0)


def test_evaluate_scores_dispatch():
    single = M.evaluate_scores(np.eye(3), np.array([0, 1, 2]))
    assert (single.top1, single.top5) == (1.0, 1.0) and math.isnan(single.wmap100)
    multi = M.evaluate_scores(np.eye(3), np.eye(3, dtype=np.uint8))
    assert multi.wmap100 == 1.0 and math.isnan(multi.top1)
