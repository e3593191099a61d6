"""Metric axioms and matching operations for unordered Q-tuples."""

import numpy as np
import pytest

from qhalf.qpoint import (
    QPoint,
    batch_match_cost2,
    batch_match_values,
    blend,
    eta_mean,
    g_distance,
    g_distance_bruteforce,
    optimal_matching,
)


def random_qpoint(rng, q, n):
    return QPoint(rng.uniform(-2.0, 2.0, size=(q, n)))


def test_distance_known_values():
    # two scalar sheets: identity matching costs 0.01 + 0.01
    a = QPoint([[0.0], [1.0]])
    b = QPoint([[0.1], [0.9]])
    assert g_distance(a, b) == pytest.approx(np.sqrt(0.02), abs=1e-14)
    # single sheet in the plane: plain Euclidean distance
    p = QPoint([[3.0, 4.0]])
    origin = QPoint([[0.0, 0.0]])
    assert g_distance(p, origin) == pytest.approx(5.0, abs=1e-14)


def test_distance_matches_bruteforce():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(300):
        q = int(rng.integers(1, 7))
        n = int(rng.integers(1, 5))
        a, b = random_qpoint(rng, q, n), random_qpoint(rng, q, n)
        worst = max(worst, abs(g_distance(a, b) - g_distance_bruteforce(a, b)))
    assert worst <= 1e-12


def test_bruteforce_size_limit():
    a = QPoint(np.zeros((9, 1)))
    b = QPoint(np.ones((9, 1)))
    with pytest.raises(ValueError):
        g_distance_bruteforce(a, b)


def test_metric_axioms_random_triples():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        q = int(rng.integers(1, 7))
        n = int(rng.integers(1, 5))
        a, b, c = (random_qpoint(rng, q, n) for _ in range(3))
        dab, dba = g_distance(a, b), g_distance(b, a)
        assert abs(dab - dba) <= 1e-12
        assert dab >= 0.0
        # triangle inequality
        assert dab <= g_distance(a, c) + g_distance(c, b) + 1e-10
    # identity of indiscernibles, both directions
    a = QPoint([[0.5, -1.0], [2.0, 0.25]])
    same = QPoint([[2.0, 0.25], [0.5, -1.0]])
    assert g_distance(a, same) == 0.0
    assert a == same
    other = QPoint([[0.5, -1.0], [2.0, 0.2500001]])
    assert g_distance(a, other) > 0.0


def test_permutation_invariance_of_operations():
    rng = np.random.default_rng(3)
    for _ in range(50):
        q = int(rng.integers(2, 6))
        n = int(rng.integers(1, 4))
        a, b = random_qpoint(rng, q, n), random_qpoint(rng, q, n)
        pa = a.permuted(rng.permutation(q))
        pb = b.permuted(rng.permutation(q))
        assert g_distance(pa, pb) == pytest.approx(g_distance(a, b), abs=1e-12)
        assert np.allclose(eta_mean(pa), eta_mean(a), atol=1e-14)
        t = float(rng.uniform(0, 1))
        assert blend(pa, pb, t) == blend(pa, pb, t)
        # blended multisets agree regardless of storage order
        lhs = blend(a, b, t).sorted_sheets()
        rhs = blend(pa, pb, t).sorted_sheets()
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_optimal_matching_deterministic_tiebreak():
    # all four pairings cost the same; the identity wins lexicographically
    a = QPoint([[0.0], [0.0]])
    b = QPoint([[1.0], [1.0]])
    m = optimal_matching(a, b)
    assert m.perm == (0, 1)
    assert m.cost == pytest.approx(np.sqrt(2.0), abs=1e-14)
    # symmetric square: sheets at distance 1 either way
    c = QPoint([[0.0, 0.0], [1.0, 1.0]])
    d = QPoint([[1.0, 0.0], [0.0, 1.0]])
    assert optimal_matching(c, d).perm == (0, 1)


def test_optimal_matching_realizes_distance():
    rng = np.random.default_rng(5)
    for _ in range(200):
        q = int(rng.integers(1, 7))
        a, b = random_qpoint(rng, q, 3), random_qpoint(rng, q, 3)
        m = optimal_matching(a, b)
        assert sorted(m.perm) == list(range(q))
        real = np.sqrt(((a.sheets - b.sheets[list(m.perm)]) ** 2).sum())
        assert m.cost == pytest.approx(g_distance(a, b), abs=1e-12)
        assert real == pytest.approx(m.cost, abs=1e-12)


def test_blend_endpoint_and_midpoint():
    a = QPoint([[0.0], [0.0]])
    b = QPoint([[2.0], [4.0]])
    mid = blend(a, b, 0.5)
    assert mid == QPoint([[1.0], [2.0]])
    assert blend(a, b, 0.0) == a
    assert blend(a, b, 1.0) == b


def test_blend_path_length_linear():
    rng = np.random.default_rng(13)
    for _ in range(200):
        q = int(rng.integers(1, 7))
        n = int(rng.integers(1, 5))
        a, b = random_qpoint(rng, q, n), random_qpoint(rng, q, n)
        t = float(rng.uniform(0, 1))
        d = g_distance(a, b)
        assert g_distance(a, blend(a, b, t)) == pytest.approx(t * d, abs=1e-10)
        assert g_distance(blend(a, b, t), b) == pytest.approx((1 - t) * d, abs=1e-10)


def test_blend_domain_error():
    a, b = QPoint([[0.0]]), QPoint([[1.0]])
    with pytest.raises(ValueError):
        blend(a, b, -0.1)
    with pytest.raises(ValueError):
        blend(a, b, 1.5)


def test_mean_contraction():
    # sqrt(Q) * |mean difference| never exceeds the matching distance
    rng = np.random.default_rng(17)
    for _ in range(500):
        q = int(rng.integers(1, 7))
        n = int(rng.integers(1, 5))
        a, b = random_qpoint(rng, q, n), random_qpoint(rng, q, n)
        lhs = np.sqrt(q) * np.linalg.norm(eta_mean(a) - eta_mean(b))
        assert lhs <= g_distance(a, b) + 1e-12


def test_json_roundtrip():
    a = QPoint([[0.5, -1.5], [2.0, 0.0], [1.0, 1.0]])
    back = QPoint.from_json(a.to_json())
    assert back.Q == 3 and back.n == 2
    assert np.array_equal(back.sheets, a.sheets)
    with pytest.raises(ValueError):
        QPoint.from_json('{"Q": 2, "n": 2, "sheets": [1.0, 2.0]}')


def test_batch_helpers_match_scalar_path():
    rng = np.random.default_rng(23)
    M, q, n = 64, 3, 2
    U = rng.normal(size=(M, q, n))
    V = rng.normal(size=(M, q, n))
    c2 = batch_match_cost2(U, V)
    W = batch_match_values(U, V)
    for m in range(M):
        d = g_distance(QPoint(U[m]), QPoint(V[m]))
        assert np.sqrt(c2[m]) == pytest.approx(d, abs=1e-12)
        # matched values realize the same cost
        realized = ((U[m] - W[m]) ** 2).sum()
        assert realized == pytest.approx(d * d, abs=1e-12)
        assert np.allclose(np.sort(W[m], axis=0), np.sort(V[m], axis=0))
