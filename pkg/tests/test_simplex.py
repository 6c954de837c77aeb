import numpy as np
import pytest

from baflow.simplex import (
    ProbVec,
    TangentVec,
    divergence,
    fr_inner,
    project_tangent,
    random_prob_vec,
    random_tangent_vec,
    tangent_basis,
)


def test_prob_vec_validation():
    with pytest.raises(ValueError):
        ProbVec(np.array([0.5, 0.6]))  # does not sum to 1
    with pytest.raises(ValueError):
        ProbVec(np.array([1.0, 0.0]))  # boundary
    with pytest.raises(ValueError):
        ProbVec(np.array([1.0]))  # dim < 2
    with pytest.raises(ValueError):
        ProbVec(np.array([0.5, np.nan]))


def test_prob_vec_immutable():
    q = ProbVec(np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        q.values[0] = 0.3


def test_tangent_vec_requires_zero_sum():
    TangentVec(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        TangentVec(np.array([1.0, -0.5]))


def test_fr_inner_direct_values():
    q = ProbVec(np.array([0.5, 0.5]))
    zero = TangentVec(np.zeros(2))
    u = TangentVec(np.array([1.0, -1.0]))
    v = TangentVec(np.array([-1.0, 1.0]))
    assert fr_inner(zero, zero, q) == 0.0
    assert fr_inner(u, u, q) == pytest.approx(4.0, abs=1e-15)
    assert fr_inner(u, v, q) == pytest.approx(-4.0, abs=1e-15)


def test_fr_inner_positive_definite(rng):
    for _ in range(50):
        n = int(rng.integers(2, 8))
        q = random_prob_vec(rng, n)
        u = random_tangent_vec(rng, n)
        if np.abs(u.values).max() < 1e-12:
            continue
        assert fr_inner(u, u, q) > 0.0


def test_fr_inner_dimension_mismatch():
    with pytest.raises(ValueError):
        fr_inner(TangentVec(np.array([1.0, -1.0])),
                 TangentVec(np.array([1.0, 0.0, -1.0])),
                 ProbVec(np.array([0.5, 0.5])))


def test_divergences_direct_values():
    r = ProbVec(np.array([0.6, 0.4]))
    q = ProbVec(np.array([0.5, 0.5]))
    assert divergence("chi2", q, q) == 0.0
    assert divergence("chi2", r, q) == pytest.approx(0.04, abs=1e-15)
    assert divergence("l1", r, q) == pytest.approx(0.2, abs=1e-15)
    # chi2 dominates half the squared l1 distance
    assert divergence("chi2", r, q) >= 0.5 * divergence("l1", r, q) ** 2


@pytest.mark.parametrize("kind", ["chi2", "kl", "jeffreys", "l1", "l2"])
def test_divergence_zero_iff_equal(kind, rng):
    for _ in range(30):
        n = int(rng.integers(2, 7))
        q = random_prob_vec(rng, n)
        r = random_prob_vec(rng, n)
        assert divergence(kind, q, q) == pytest.approx(0.0, abs=1e-15)
        if np.abs(r.values - q.values).max() > 1e-9:
            assert divergence(kind, r, q) > 0.0


def test_chi2_controls_l1(rng):
    for _ in range(200):
        n = int(rng.integers(2, 9))
        r = random_prob_vec(rng, n, spread=1.5)
        q = random_prob_vec(rng, n, spread=1.5)
        assert divergence("chi2", r, q) >= 0.5 * divergence("l1", r, q) ** 2 - 1e-14


def test_jeffreys_is_symmetrised_kl(rng):
    for _ in range(20):
        r = random_prob_vec(rng, 5)
        q = random_prob_vec(rng, 5)
        expect = divergence("kl", r, q) + divergence("kl", q, r)
        assert divergence("jeffreys", r, q) == pytest.approx(expect, rel=1e-12)


def test_project_tangent_examples():
    assert np.allclose(project_tangent([1.0, 2.0, 3.0]).values, [-1.0, 0.0, 1.0])
    assert np.allclose(project_tangent([0.0, 0.0]).values, [0.0, 0.0])
    assert np.allclose(project_tangent([5.0, 5.0, 5.0, 5.0]).values, np.zeros(4))


def test_project_tangent_linear_idempotent(rng):
    for _ in range(20):
        n = int(rng.integers(2, 8))
        v = rng.standard_normal(n)
        w = rng.standard_normal(n)
        a, b = rng.standard_normal(2)
        left = project_tangent(a * v + b * w).values
        right = a * project_tangent(v).values + b * project_tangent(w).values
        assert np.allclose(left, right, atol=1e-12)
        once = project_tangent(v).values
        assert np.allclose(project_tangent(once).values, once, atol=1e-15)


def test_tangent_basis_orthonormal_zero_sum():
    for n in (2, 3, 7, 15):
        basis = tangent_basis(n)
        assert basis.shape == (n, n - 1)
        assert np.allclose(basis.T @ basis, np.eye(n - 1), atol=1e-14)
        assert np.allclose(basis.sum(axis=0), 0.0, atol=1e-14)
