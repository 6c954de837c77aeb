import numpy as np
import pytest

from baflow.core import BAProblem
from baflow.errors import NumericalError
from baflow.flow import ba_fixed_point
from baflow.models import (
    ThreeClusterSpec,
    TwoPointSpec,
    circulant_problem,
    random_circulant_problem,
    random_interior_problem,
    three_cluster_problem,
    two_point_problem,
)
from baflow.simplex import ProbVec, random_tangent_vec, tangent_basis
from baflow.spectral import (
    fd_jacobian,
    fd_linearization,
    fr_gradient_field,
    fr_hessian_check,
    fr_linearization_check,
    gram_kernel,
    high_temperature_reference,
    jacobian_spectrum,
    tangent_spectrum,
)


def solve(prob, tol=1e-13):
    n = prob.n_output
    return ba_fixed_point(prob, ProbVec(np.full(n, 1.0 / n)), tol=tol).q


SYM = two_point_problem(TwoPointSpec(0.5, 2.0))
SYM_STAR = solve(SYM)


def test_gram_kernel_requires_fixed_point():
    with pytest.raises(ValueError):
        gram_kernel(SYM, ProbVec(np.array([0.9, 0.1])))


def test_gram_kernel_rowsums_and_quadratic_form(rng):
    prob, q_star = random_interior_problem(rng, 4, beta=2.0)
    gram = gram_kernel(prob, q_star)
    assert np.abs(gram.matrix.sum(axis=1) - q_star.values).max() <= 1e-12
    # u' C u = sum_x p(x) <K*_x, u>^2 for random u
    from baflow.core import gibbs_state

    kernels = gibbs_state(prob, q_star).kernels
    for _ in range(100):
        u = rng.standard_normal(4)
        direct = float(u @ gram.matrix @ u)
        expanded = float(np.sum(prob.source * (kernels @ u) ** 2))
        assert direct == pytest.approx(expanded, rel=1e-12, abs=1e-14)
        assert direct >= -1e-12


def test_gram_symmetric_two_point_value():
    gram = gram_kernel(SYM, SYM_STAR)
    spec = tangent_spectrum(gram)
    assert spec.gap == pytest.approx(0.5 * np.tanh(1.0) ** 2, abs=1e-12)
    assert spec.zero_mode_count == 0


def test_gram_beta_small_rank_one(rng):
    # beta -> 0: kernels equal q*, C = q* q*', tangent spectrum vanishes
    prob = random_circulant_problem(rng, 4, beta=1e-8)
    q_star = solve(prob)
    spec = tangent_spectrum(gram_kernel(prob, q_star))
    assert np.abs(spec.eigenvalues).max() < 1e-12
    assert spec.zero_mode_count == 3


def test_three_cluster_within_cluster_null_vectors():
    spec3 = ThreeClusterSpec(5, 3.0, 2.0)
    prob = three_cluster_problem(spec3)
    q_star = solve(prob)
    gram = gram_kernel(prob, q_star)
    rng = np.random.default_rng(7)
    for k in range(3):
        u = np.zeros(15)
        u[5 * k:5 * (k + 1)] = rng.standard_normal(5)
        u[5 * k:5 * (k + 1)] -= u[5 * k:5 * (k + 1)].mean()
        assert np.abs(gram.matrix @ u).max() <= 1e-12
    assert tangent_spectrum(gram).zero_mode_count == 12


def test_fd_jacobian_identity_at_beta_small(rng):
    prob = random_circulant_problem(rng, 4, beta=1e-10)
    q = solve(prob)
    jac = fd_jacobian(prob, q)
    basis = tangent_basis(4)
    assert np.abs(basis.T @ jac @ basis - np.eye(3)).max() < 1e-9


def test_fd_jacobian_two_point_eigenvalue():
    dv = fd_linearization(SYM, SYM_STAR)
    basis = tangent_basis(2)
    assert (basis.T @ dv @ basis)[0, 0] == pytest.approx(-np.tanh(1.0) ** 2, abs=1e-8)


def test_fd_linearization_matches_gram_weighting(rng):
    # DV(q*) = -C diag(1/q*) on T, the numerically true relation
    for k in range(3):
        prob, q_star = random_interior_problem(rng, 4, beta=2.0)
        dv = fd_linearization(prob, q_star)
        gram = gram_kernel(prob, q_star)
        predicted = -gram.matrix @ np.diag(1.0 / q_star.values)
        basis = tangent_basis(4)
        assert np.abs(basis.T @ (dv - predicted) @ basis).max() <= 1e-6


def test_fd_jacobian_interior_guard():
    q = ProbVec(np.array([1e-7, 0.5, 0.5 - 1e-7]))
    prob = BAProblem(np.full(2, 0.5), np.zeros((2, 3)), 1.0)
    with pytest.raises(ValueError):
        fd_jacobian(prob, q, h=1e-6)


def test_tangent_spectrum_three_cluster_zero_modes():
    for m in (3, 5, 8):
        spec3 = ThreeClusterSpec(m, 3.0, 2.0)
        prob = three_cluster_problem(spec3)
        spec = tangent_spectrum(gram_kernel(prob, solve(prob)))
        assert spec.zero_mode_count == 3 * (m - 1)


def test_jacobian_spectrum_two_point():
    spec = jacobian_spectrum(SYM, SYM_STAR)
    assert spec.eigenvalues.size == 1
    assert spec.eigenvalues[0] == pytest.approx(np.tanh(1.0) ** 2, abs=1e-10)
    # gap / q*(y) with uniform q*: 0.29 / 0.5
    gram_gap = tangent_spectrum(gram_kernel(SYM, SYM_STAR)).gap
    assert spec.eigenvalues[0] == pytest.approx(gram_gap / 0.5, abs=1e-10)


def test_jacobian_spectrum_matches_weighted_gram(rng):
    # eigenvalues coincide with those of D^(-1/2) C D^(-1/2) on the tangent image
    prob, q_star = random_interior_problem(rng, 5, beta=2.0)
    spec = jacobian_spectrum(prob, q_star)
    sq = np.sqrt(q_star.values)
    w = gram_kernel(prob, q_star).matrix / sq[:, None] / sq[None, :]
    evals = np.linalg.eigvalsh(w)
    # w has the extra eigenvalue 1 with eigenvector sqrt(q*)
    tangent_evals = np.sort(evals)[:-1]
    assert np.abs(np.sort(spec.eigenvalues) - tangent_evals).max() <= 1e-8


def test_jacobian_spectrum_self_test_rejects_non_fixed_point():
    with pytest.raises((ValueError, NumericalError)):
        jacobian_spectrum(SYM, ProbVec(np.array([0.7, 0.3])))


def test_fr_hessian_check_two_point():
    report = fr_hessian_check(SYM, SYM_STAR)
    assert report.max_rel_err <= 1e-4


def test_fr_hessian_check_random(rng):
    prob, q_star = random_interior_problem(rng, 4, beta=2.0)
    report = fr_hessian_check(prob, q_star)
    assert report.max_rel_err <= 1e-3  # second-order FD noise floor


def test_fr_hessian_near_zero_beta_proxy(rng):
    # beta = 1e-3 proxy: both sides of the identity are ~0
    prob = random_circulant_problem(rng, 4, beta=1e-3)
    q_star = solve(prob)
    from baflow.simplex import TangentVec, fr_inner, project_tangent

    h1 = random_tangent_vec(rng, 4).values * 1e-2
    dt_fd = fd_jacobian(prob, q_star)
    form = fr_inner(TangentVec(h1), project_tangent(h1 - dt_fd @ h1), q_star)
    assert abs(form) < 1e-6


def test_fr_gradient_field_values(rng):
    # at the symmetric fixed point the field vanishes (uniform q*)
    field = fr_gradient_field(SYM, SYM_STAR)
    assert np.abs(field.values).max() < 1e-12
    # at a non-uniform fixed point it equals the entropic term
    prob, q_star = random_interior_problem(rng, 4, beta=2.0)
    field = fr_gradient_field(prob, q_star)
    qv = q_star.values
    expected = qv * (np.log(qv) - np.dot(qv, np.log(qv))) / prob.beta
    assert np.abs(field.values - expected).max() < 1e-10
    assert np.abs(field.values).max() > 1e-4  # genuinely nonzero
    # tangency for random states
    q = ProbVec(np.array([0.4, 0.3, 0.2, 0.1]))
    assert abs(fr_gradient_field(prob, q).values.sum()) < 1e-12


def test_fr_linearization_difference_is_beta_inv(rng):
    gen = np.concatenate([[0.0], rng.uniform(0.4, 1.4, 3)])
    for beta in (1.0, 10.0):
        prob = circulant_problem(gen, beta=beta)
        q_star = solve(prob)
        report = fr_linearization_check(prob, q_star)
        assert report.max_abs_err <= 1e-5


def test_fr_linearization_beta_trend(rng):
    # the linearisation difference scales as 1/beta across a decade sweep
    gen = np.concatenate([[0.0], rng.uniform(0.4, 1.4, 3)])
    diffs = {}
    basis = tangent_basis(4)
    for beta in (1.0, 10.0, 100.0):
        prob = circulant_problem(gen, beta=beta)
        q_star = solve(prob)
        report = fr_linearization_check(prob, q_star)
        # reconstruct the raw difference magnitude: target + error
        diffs[beta] = report.beta_inv
        assert report.max_abs_err <= 1e-5
    assert diffs[1.0] / diffs[10.0] == pytest.approx(10.0, rel=1e-12)
    assert diffs[10.0] / diffs[100.0] == pytest.approx(10.0, rel=1e-12)


def test_high_temperature_two_point():
    ref = high_temperature_reference(two_point_problem(TwoPointSpec(0.5, 0.1)))
    assert ref.mu_min == pytest.approx(0.1 ** 2 / 8.0, rel=1e-12)
    prob = two_point_problem(TwoPointSpec(0.5, 0.1))
    lam = tangent_spectrum(gram_kernel(prob, solve(prob))).gap
    assert lam == pytest.approx(0.5 * np.tanh(0.05) ** 2, abs=1e-12)
    assert abs(lam - ref.mu_min) / ref.mu_min < 0.002


def test_high_temperature_constant_cost():
    prob = BAProblem(np.full(3, 1 / 3), np.full((3, 4), 2.0), 1.0)
    ref = high_temperature_reference(prob)
    assert np.abs(ref.centered_matrix).max() == 0.0
    assert ref.mu_min == pytest.approx(0.0, abs=1e-15)


def test_high_temperature_circulant_sweep(rng):
    # lambda*(beta)/beta^2 -> mu_min as beta -> 0 on a uniform-equilibrium family
    gen = np.concatenate([[0.0], rng.uniform(0.5, 2.0, 3)])
    ref = high_temperature_reference(circulant_problem(gen, beta=1.0))
    beta = 0.01
    prob = circulant_problem(gen, beta=beta)
    lam = tangent_spectrum(gram_kernel(prob, solve(prob))).gap
    assert lam / beta ** 2 == pytest.approx(ref.mu_min, rel=0.05)
