import itertools
import json

import numpy as np
import pytest

from baflow.core import (
    BAProblem,
    ba_map,
    dissipation,
    dissipation_fr,
    dual_identity_residual,
    free_energy,
    free_energy_gradient,
    gibbs_state,
)
from baflow.models import random_problem, two_point_problem, TwoPointSpec
from baflow.simplex import ProbVec, random_prob_vec, random_tangent_vec


def brute_force_ba_map(prob: BAProblem, q: ProbVec) -> np.ndarray:
    """Direct double-sum oracle, no shared code with the library path."""
    m, n = prob.cost.shape
    out = np.zeros(n)
    for y in range(n):
        for x in range(m):
            z = sum(q.values[yy] * np.exp(-prob.beta * prob.cost[x, yy]) for yy in range(n))
            out[y] += prob.source[x] * np.exp(-prob.beta * prob.cost[x, y]) * q.values[y] / z
    return out


def test_problem_validation():
    with pytest.raises(ValueError):
        BAProblem(np.array([0.5, 0.5]), np.array([[0.0, np.inf], [1.0, 0.0]]), 1.0)
    with pytest.raises(ValueError):
        BAProblem(np.array([0.5, 0.5]), np.zeros((3, 2)), 1.0)
    with pytest.raises(ValueError):
        BAProblem(np.array([0.5, 0.5]), np.zeros((2, 2)), -1.0)
    with pytest.raises(ValueError):
        BAProblem(np.array([1.0, 0.0]), np.zeros((2, 2)), 1.0)


def test_problem_json_roundtrip(rng):
    prob = random_problem(rng, 3, 4, beta=1.7)
    clone = BAProblem.from_json(prob.to_json())
    assert clone == prob
    payload = json.loads(prob.to_json())
    assert set(payload) == {"source", "cost", "beta"}


def test_gibbs_state_beta_small_rows_equal_q(rng):
    # beta -> 0 limit: uniform exponential weights, rows collapse onto q
    q = random_prob_vec(rng, 5)
    prob = random_problem(rng, 3, 5, beta=1e-12)
    state = gibbs_state(prob, q)
    assert np.abs(state.kernels - q.values).max() < 1e-11


def test_gibbs_state_two_point_closed_form():
    # symmetric cost: K(0,.) = (1, e^{-bd}) / (1 + e^{-bd}) at q = (1/2, 1/2)
    bd = 2.0
    prob = two_point_problem(TwoPointSpec(0.5, bd))
    state = gibbs_state(prob, ProbVec(np.array([0.5, 0.5])))
    w = np.exp(-bd)
    assert np.allclose(state.kernels[0], [1 / (1 + w), w / (1 + w)], atol=1e-15)
    assert np.allclose(state.kernels[1], [w / (1 + w), 1 / (1 + w)], atol=1e-15)


def test_gibbs_state_cost_constant_in_y(rng):
    q = random_prob_vec(rng, 4)
    cost = np.outer(rng.uniform(0, 3, 3), np.ones(4))
    prob = BAProblem(np.full(3, 1 / 3), cost, 2.0)
    state = gibbs_state(prob, q)
    assert np.abs(state.kernels - q.values).max() < 1e-14


def test_gibbs_state_large_beta_no_overflow():
    # max-shifted exponentials survive beta*d ~ 700
    prob = BAProblem(np.array([0.5, 0.5]), np.array([[0.0, 700.0], [700.0, 0.0]]), 1.0)
    state = gibbs_state(prob, ProbVec(np.array([0.5, 0.5])))
    assert np.all(np.isfinite(state.kernels))
    assert np.allclose(state.kernels.sum(axis=1), 1.0, atol=1e-12)


def test_ba_map_identity_at_beta_small(rng):
    q = random_prob_vec(rng, 6)
    prob = random_problem(rng, 4, 6, beta=1e-13)
    assert np.abs(ba_map(prob, q).values - q.values).max() < 1e-11


def test_ba_map_symmetric_fixed_point():
    prob = two_point_problem(TwoPointSpec(0.5, 2.0))
    q = ProbVec(np.array([0.5, 0.5]))
    assert np.allclose(ba_map(prob, q).values, q.values, atol=1e-15)


def test_ba_map_against_brute_force(rng):
    prob = two_point_problem(TwoPointSpec(0.7, 1.0))
    q = ProbVec(np.array([0.5, 0.5]))
    assert np.allclose(ba_map(prob, q).values, brute_force_ba_map(prob, q), atol=1e-14)
    for _ in range(10):
        prob = random_problem(rng, 3, 4, beta=float(rng.uniform(0.2, 3.0)))
        q = random_prob_vec(rng, 4)
        assert np.allclose(ba_map(prob, q).values, brute_force_ba_map(prob, q), atol=1e-13)


def test_ba_map_preserves_interior(rng):
    for _ in range(50):
        prob = random_problem(rng, 4, 5, beta=float(rng.uniform(0.2, 5.0)))
        q = random_prob_vec(rng, 5, spread=2.0)
        out = ba_map(prob, q)
        assert out.values.min() > 0
        assert abs(out.values.sum() - 1.0) < 1e-12


def test_replicator_identity(rng):
    # Tq - q = q (Psi - E_q[Psi]) with Psi = Tq/q and E_q[Psi] = 1
    for _ in range(30):
        prob = random_problem(rng, 3, 5, beta=float(rng.uniform(0.3, 3.0)))
        q = random_prob_vec(rng, 5)
        tq = ba_map(prob, q).values
        psi = tq / q.values
        assert abs(np.dot(q.values, psi) - 1.0) < 1e-14
        lhs = tq - q.values
        rhs = q.values * (psi - np.dot(q.values, psi))
        assert np.abs(lhs - rhs).max() < 1e-14


def test_free_energy_zero_cost():
    # d = 0 makes every Z = 1 and F = 0
    prob = BAProblem(np.full(3, 1 / 3), np.zeros((3, 4)), 2.0)
    q = ProbVec(np.full(4, 0.25))
    assert free_energy(prob, q) == pytest.approx(0.0, abs=1e-15)


def test_free_energy_constant_cost_shift(rng):
    # d = c shifts F by +beta*c and leaves the dynamics fixed
    q = random_prob_vec(rng, 4)
    c = 0.7
    prob = BAProblem(np.full(3, 1 / 3), np.full((3, 4), c), 2.0)
    assert free_energy(prob, q) == pytest.approx(prob.beta * c, rel=1e-14)
    assert np.abs(ba_map(prob, q).values - q.values).max() < 1e-14


def test_gradient_matches_finite_differences(rng):
    # central differences along 5 random tangent directions, relative 1e-6
    problems = [two_point_problem(TwoPointSpec(0.6, 1.5)),
                random_problem(rng, 4, 5, beta=1.3)]
    for prob in problems:
        n = prob.n_output
        q = random_prob_vec(rng, n)
        grad = free_energy_gradient(prob, q)
        for _ in range(5):
            h = random_tangent_vec(rng, n).values
            h = h / np.abs(h).max() * min(1e-5, q.values.min() / 10)
            fd = (free_energy(prob, ProbVec.normalize(q.values + h))
                  - free_energy(prob, ProbVec.normalize(q.values - h))) / 2.0
            pairing = float(grad @ h)
            assert fd == pytest.approx(pairing, rel=1e-6, abs=1e-14)


def test_gradient_pairing_is_minus_ratio_sum(rng):
    prob = random_problem(rng, 3, 4, beta=2.0)
    q = random_prob_vec(rng, 4)
    grad = free_energy_gradient(prob, q)
    tq = ba_map(prob, q).values
    h = random_tangent_vec(rng, 4).values
    assert float(grad @ h) == pytest.approx(float(-(tq / q.values) @ h), rel=1e-13)


def test_dissipation_identities(rng):
    prob = two_point_problem(TwoPointSpec(0.7, 1.0))
    q = ProbVec(np.array([0.5, 0.5]))
    tq = brute_force_ba_map(prob, q)
    chi2 = np.sum((tq - q.values) ** 2 / q.values)
    assert dissipation(prob, q) == pytest.approx(chi2, abs=1e-14)
    for _ in range(100):
        prob = random_problem(rng, 3, 5, beta=float(rng.uniform(0.3, 3.0)))
        q = random_prob_vec(rng, 5)
        assert abs(dissipation(prob, q) - dissipation_fr(prob, q)) <= 1e-14


def test_dissipation_zero_cases(rng):
    prob = random_problem(rng, 3, 4, beta=1e-13)  # near beta = 0: T = id
    q = random_prob_vec(rng, 4)
    assert dissipation(prob, q) < 1e-20


def test_dual_identity_residual(rng):
    prob = two_point_problem(TwoPointSpec(0.5, 2.0))
    q = ProbVec(np.array([0.9, 0.1]))
    tq = brute_force_ba_map(prob, q)
    expected = np.abs(tq / q.values - 1.0).max()
    assert dual_identity_residual(prob, q) == pytest.approx(expected, rel=1e-13)
    assert expected > 0.01
    # fixed point of the symmetric model
    assert dual_identity_residual(prob, ProbVec(np.array([0.5, 0.5]))) < 1e-15


def test_gibbs_rows_minimise_variational_objective(rng):
    # grid search over the 3-simplex at resolution 0.01: the Gibbs row beats
    # every grid candidate of KL(p||q) + beta E_p[d(x,.)]
    prob = random_problem(rng, 2, 3, beta=1.5)
    q = random_prob_vec(rng, 3)
    state = gibbs_state(prob, q)

    def objective(p, x):
        mask = p > 0
        kl = np.sum(p[mask] * np.log(p[mask] / q.values[mask]))
        return kl + prob.beta * float(p @ prob.cost[x])

    steps = np.arange(101)
    for x in range(2):
        best = min(
            objective(np.array([i, j, 100 - i - j]) / 100.0, x)
            for i, j in itertools.product(steps, steps)
            if i + j <= 100
        )
        assert objective(state.kernels[x], x) <= best + 1e-12
