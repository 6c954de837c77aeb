"""The acceptance suite: one callable per numbered criterion.

Each criterion returns a CriterionResult with the measured quantities it
was judged on; `run_all` executes the whole gate.  Tolerances are pinned
here and nowhere else.  Three checks are expected to fail on analytic
grounds (see the README section on known deviations): the general-alpha
half of criterion 5, the moment-trajectory half of criterion 7, and the
plateau-shape half of criterion 12.  They are implemented as stated and
report honestly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import extensions, gaussian, models
from .core import BAProblem, dissipation, dual_identity_residual, free_energy
from .core import dissipation_fr
from .flow import (
    IntegratorConfig,
    ba_fixed_point,
    entry_time_report,
    fit_decay_rate,
    integrate_flow,
    verify_dissipation,
)
from .simplex import ProbVec, random_prob_vec, tangent_basis
from .spectral import (
    fd_linearization,
    fr_linearization_check,
    gram_kernel,
    high_temperature_reference,
    jacobian_spectrum,
    tangent_spectrum,
)

__all__ = ["CriterionResult", "CRITERIA", "run_all", "run_criterion"]


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d}: {self.name}"


def _result(number, name, failures, details) -> CriterionResult:
    return CriterionResult(
        number=number, name=name, passed=not failures, details=details, failures=failures
    )


def _check(failures, condition, message):
    if not condition:
        failures.append(message)


def _dissipation_suite(seed: int):
    rng = np.random.default_rng(seed)
    suite = [
        ("two-point symmetric", models.two_point_problem(models.TwoPointSpec(0.5, 2.0)),
         ProbVec(np.array([0.9, 0.1]))),
        ("two-point asymmetric", models.two_point_problem(models.TwoPointSpec(0.7, 2.0)),
         ProbVec(np.array([0.2, 0.8]))),
    ]
    spec3 = models.ThreeClusterSpec(m=5, delta=3.0, beta=2.0, source_weights=(0.5, 0.3, 0.2))
    suite.append(("three-cluster m=5", models.three_cluster_problem(spec3),
                  random_prob_vec(rng, 15, spread=0.5)))
    # beta in [2, 4] and a minimum initial dissipation keep the check's
    # discretisation error well above the float cancellation floor, so the
    # halving-ratio test measures convergence order rather than noise
    drawn = 0
    while drawn < 5:
        prob = models.random_problem(rng, 5, 5, beta=float(rng.uniform(2.0, 4.0)))
        q0 = random_prob_vec(rng, 5, spread=1.5)
        if dissipation(prob, q0) < 0.05:
            continue
        suite.append((f"random-5x5-{drawn}", prob, q0))
        drawn += 1
    return suite


def criterion_1(seed: int = 0) -> CriterionResult:
    """Exact chi^2 dissipation: centred-difference check at dt = 1e-3 with
    second-order convergence under halving."""
    failures, details = [], {}
    for name, prob, q0 in _dissipation_suite(seed):
        errs = {}
        for dt in (1e-3, 5e-4):
            cfg = IntegratorConfig(dt=dt, t_max=0.5, sample_every=1)
            report = verify_dissipation(prob, integrate_flow(prob, q0, cfg))
            errs[dt] = report.max_abs_err
        ratio = errs[1e-3] / errs[5e-4]
        details[name] = {"max_abs_err": errs[1e-3], "halving_ratio": ratio}
        _check(failures, errs[1e-3] <= 1e-5,
               f"{name}: max |dF/dt + D| = {errs[1e-3]:.3e} > 1e-5")
        _check(failures, ratio >= 3.5,
               f"{name}: halving dt improved the error only {ratio:.2f}x (< 3.5)")
    return _result(1, "exact chi^2 dissipation identity", failures, details)


def criterion_2(seed: int = 0, n_pairs: int = 1000) -> CriterionResult:
    """Dissipation equals the squared Fisher-Rao velocity norm to 1e-14."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        m = int(rng.integers(2, 7))
        n = int(rng.integers(2, 7))
        prob = models.random_problem(rng, m, n, beta=float(rng.uniform(0.3, 3.0)))
        q = random_prob_vec(rng, n, spread=1.0)
        worst = max(worst, abs(dissipation(prob, q) - dissipation_fr(prob, q)))
    failures = []
    _check(failures, worst <= 1e-14, f"max |chi2 - FR norm^2| = {worst:.3e} > 1e-14")
    return _result(2, "dissipation-norm identity on random pairs",
                   failures, {"max_abs_diff": worst, "n_pairs": n_pairs})


def _certified_suite(seed: int):
    rng = np.random.default_rng(seed)
    suite = []
    for alpha, bd in ((0.5, 2.0), (0.7, 2.0), (0.4, 1.0), (0.6, 4.0)):
        prob = models.two_point_problem(models.TwoPointSpec(alpha, bd))
        suite.append((f"two-point a={alpha} bd={bd}", prob))
    suite.append(("three-cluster m=5 asym", models.three_cluster_problem(
        models.ThreeClusterSpec(5, 3.0, 2.0, (0.5, 0.3, 0.2)))))
    suite.append(("three-cluster m=3 uniform", models.three_cluster_problem(
        models.ThreeClusterSpec(3, 2.0, 1.5))))
    for k in range(3):
        prob, _ = models.random_interior_problem(rng, 4, beta=2.0)
        suite.append((f"random-interior-4-{k}", prob))
    suite.append(("circulant-4", models.random_circulant_problem(rng, 4, beta=1.5)))
    solved = []
    for name, prob in suite:
        n = prob.n_output
        res = ba_fixed_point(prob, ProbVec(np.full(n, 1.0 / n)), tol=1e-12)
        solved.append((name, prob, res))
    return solved


def criterion_3(seed: int = 0) -> CriterionResult:
    """Dual fixed-point identity and Gram row sums at certified equilibria."""
    failures, details = [], {}
    for name, prob, res in _certified_suite(seed):
        _check(failures, res.converged, f"{name}: solver did not converge")
        dual = dual_identity_residual(prob, res.q)
        rowsum = np.abs(
            gram_kernel(prob, res.q).matrix.sum(axis=1) - res.q.values
        ).max()
        details[name] = {"dual_residual": dual, "gram_rowsum_err": float(rowsum)}
        _check(failures, dual <= 1e-10, f"{name}: dual residual {dual:.3e} > 1e-10")
        _check(failures, rowsum <= 1e-10, f"{name}: Gram row-sum error {rowsum:.3e} > 1e-10")
    return _result(3, "dual identity and Gram row sums at fixed points", failures, details)


def criterion_4(seed: int = 0) -> CriterionResult:
    """Linearisation ground truth: DV_fd = -C diag(1/q*) on T to 1e-6, and
    the symmetric two-point tangent eigenvalue equals -tanh^2(1)."""
    rng = np.random.default_rng(seed)
    failures, details = [], {}
    cases = [("two-point a=%s bd=%s" % (a, b),
              models.two_point_problem(models.TwoPointSpec(a, b)))
             for a, b in ((0.5, 2.0), (0.35, 2.0), (0.65, 2.0), (0.5, 1.0), (0.5, 4.0))]
    for k in range(2):
        prob, _ = models.random_interior_problem(rng, 4, beta=2.0)
        cases.append((f"random-interior-4-{k}", prob))
    for name, prob in cases:
        n = prob.n_output
        q_star = ba_fixed_point(prob, ProbVec(np.full(n, 1.0 / n)), tol=1e-13).q
        basis = tangent_basis(n)
        dv = fd_linearization(prob, q_star)
        c = gram_kernel(prob, q_star).matrix
        predicted = -c @ np.diag(1.0 / q_star.values)
        dev = np.abs(basis.T @ (dv - predicted) @ basis).max()
        details[name] = {"max_dev_on_T": float(dev)}
        _check(failures, dev <= 1e-6, f"{name}: |DV_fd + C diag(1/q*)| = {dev:.3e} > 1e-6")

    prob = models.two_point_problem(models.TwoPointSpec(0.5, 2.0))
    q_star = ba_fixed_point(prob, ProbVec(np.array([0.5, 0.5])), tol=1e-13).q
    basis = tangent_basis(2)
    eig = float((basis.T @ fd_linearization(prob, q_star) @ basis)[0, 0])
    target = -np.tanh(1.0) ** 2
    details["symmetric eigenvalue"] = {"fd": eig, "analytic": target}
    _check(failures, abs(eig - target) <= 1e-6,
           f"symmetric two-point eigenvalue {eig:.8f} vs -tanh^2(1) = {target:.8f}")
    return _result(4, "finite-difference linearisation ground truth", failures, details)


def two_point_gap_grid(alphas, beta_ds):
    """(closed form, pipeline gap) over a parameter grid; shared by the
    acceptance suite and the CLI gap-surface export."""
    rows = []
    for alpha in alphas:
        for bd in beta_ds:
            spec = models.TwoPointSpec(float(alpha), float(bd))
            prob = models.two_point_problem(spec)
            q_star = ba_fixed_point(prob, ProbVec(np.array([0.5, 0.5])), tol=1e-13).q
            closed = models.two_point_gap_closed_form(spec, float(q_star.values[0]))
            pipeline = tangent_spectrum(gram_kernel(prob, q_star)).gap
            rows.append((float(alpha), float(bd), closed, pipeline))
    return rows


def criterion_5() -> CriterionResult:
    """Closed-form two-point gaps versus the spectral pipeline.

    The symmetric-case check passes.  The 10x10 grid check fails for
    alpha != 1/2: at the true fixed point the closed-form expression reduces
    identically to tanh^2(beta d/2)/2 (alpha-independent) while the
    Euclidean pipeline gap is alpha-dependent; no kernel or normalisation
    convention makes both stated identities hold.  Kept as stated; see the
    README known-deviations table.
    """
    failures, details = [], {}
    sym_devs = {}
    for bd in (0.5, 1.0, 2.0, 4.0):
        spec = models.TwoPointSpec(0.5, bd)
        prob = models.two_point_problem(spec)
        q_star = ba_fixed_point(prob, ProbVec(np.array([0.5, 0.5])), tol=1e-13).q
        pipeline = tangent_spectrum(gram_kernel(prob, q_star)).gap
        target = 0.5 * np.tanh(bd / 2.0) ** 2
        sym_devs[bd] = abs(pipeline - target)
        _check(failures, abs(pipeline - target) <= 1e-12,
               f"symmetric bd={bd}: |pipeline - tanh^2(bd/2)/2| = {abs(pipeline - target):.3e} > 1e-12")
    details["symmetric_max_dev"] = max(sym_devs.values())

    rows = two_point_gap_grid(np.linspace(0.32, 0.68, 10), np.linspace(1.0, 4.0, 10))
    grid_dev = max(abs(closed - pipeline) for _, _, closed, pipeline in rows)
    details["grid_max_dev"] = grid_dev
    # the algebraic identity behind the defect: the formula at the true fixed
    # point is alpha-independent (= tanh^2(bd/2)/2 for every alpha)
    details["formula_alpha_independence_dev"] = max(
        abs(c - 0.5 * np.tanh(bd / 2.0) ** 2) for _, bd, c, _ in rows
    )
    _check(failures, grid_dev <= 1e-9,
           f"10x10 grid: max |closed form - pipeline| = {grid_dev:.3e} > 1e-9 "
           f"(alpha-independence of the formula vs alpha-dependent pipeline; known defect)")
    return _result(5, "two-point closed-form gaps", failures, details)


def criterion_6() -> CriterionResult:
    """High-temperature asymptotics at beta d = 0.1 for the two-point model."""
    spec = models.TwoPointSpec(0.5, 0.1)
    prob = models.two_point_problem(spec)
    q_star = ba_fixed_point(prob, ProbVec(np.array([0.5, 0.5])), tol=1e-13).q
    lam = tangent_spectrum(gram_kernel(prob, q_star)).gap
    ref = high_temperature_reference(prob)
    rel = abs(lam / prob.beta ** 2 - ref.mu_min) / ref.mu_min
    failures = []
    _check(failures, rel <= 0.05,
           f"|lambda*/beta^2 - mu_min|/mu_min = {rel:.4f} > 0.05")
    details = {"lambda_star": lam, "mu_min": ref.mu_min, "relative_gap": rel,
               "exact_check": 0.5 * np.tanh(0.05) ** 2, "asymptote": 0.1 ** 2 / 8}
    return _result(6, "high-temperature gap asymptotics", failures, details)


GRID_GP = gaussian.GaussianParams(sigma2=1.0, beta=1.0)


def _grid_setup():
    prob = gaussian.discretize_gaussian(GRID_GP, half_width_sigmas=6.0, n_points=201)
    axis = gaussian.grid_axis(GRID_GP, 6.0, 201)
    return prob, axis


def criterion_7() -> CriterionResult:
    """Gaussian reduction on the grid: fixed-point second moment and
    shape-independent second-moment trajectories.

    The fixed-point half passes.  The trajectory half fails on analytic
    grounds: the scalar reduction is exact only on Gaussian states (a
    symmetric two-spike density is an exact fixed point of the update at
    any spike position, so a bimodal start cannot follow the scalar ODE),
    and the measured deviations (1.7e-2 Gaussian start, 1.4e-1 bimodal,
    7e-2 uniform) are grid-resolution independent.  Kept verbatim; see
    the README known-deviations table."""
    failures, details = [], {}
    prob, axis = _grid_setup()
    q_star = gaussian.solve_grid_fixed_point(prob)
    moment = float(np.dot(q_star.values, axis ** 2))
    details["fixed_point_moment"] = moment
    _check(failures, abs(moment - 0.5) <= 1e-3,
           f"grid fixed-point second moment {moment:.6f} not within 1e-3 of 0.5")

    target_s0 = 1.5
    cfg = gaussian.grid_integrator_config(dt=0.02, t_max=10.0, sample_every=5)
    for shape in ("gaussian", "bimodal", "uniform"):
        q0 = gaussian.grid_density_with_moment(axis, shape, target_s0)
        traj = integrate_flow(prob, q0, cfg)
        s_series = gaussian.second_moment_series(traj, axis)
        taus, ode = gaussian.integrate_variance_ode(
            GRID_GP, float(s_series[0]), dt=cfg.dt, t_max=cfg.t_max
        )
        ode_sampled = ode[:: cfg.sample_every]
        sup = float(np.abs(s_series - ode_sampled[: s_series.size]).max())
        details[f"{shape}_sup_dev"] = sup
        details[f"{shape}_s0"] = float(s_series[0])
        _check(failures, sup <= 1e-3,
               f"{shape} start: sup |grid moment - scalar ODE| = {sup:.2e} > 1e-3")
    return _result(7, "Gaussian grid reduction (moment + shape independence)",
                   failures, details)


def criterion_8() -> CriterionResult:
    """Hermite ladder on the grid: top-3 relaxation eigenvalues and the
    geometric ratio alpha."""
    failures, details = [], {}
    prob, axis = _grid_setup()
    q_star = gaussian.solve_grid_fixed_point(prob)
    evals = gaussian.grid_relaxation_eigenvalues(prob, q_star, axis, n_modes=6)
    ladder = gaussian.hermite_spectrum(GRID_GP, n_max=6)
    details["fd_eigenvalues"] = evals[:4].tolist()
    details["alpha"] = ladder.alpha
    for i, target in enumerate((0.5, 0.25, 0.125)):
        _check(failures, abs(evals[i] - target) <= 1e-2,
               f"mode {i + 1}: eigenvalue {evals[i]:.5f} vs {target} (tol 1e-2)")
    for i in range(2):
        ratio = evals[i + 1] / evals[i]
        _check(failures, abs(ratio - ladder.alpha) <= 1e-2,
               f"ratio {ratio:.5f} vs alpha = {ladder.alpha} (tol 1e-2)")
    return _result(8, "Hermite spectrum on the grid", failures, details)


def _fit_scalar_tail(taus: np.ndarray, gap: np.ndarray, tail_fraction: float = 0.4) -> float:
    keep = gap > 1e-12
    taus, gap = taus[keep], gap[keep]
    start = int(np.floor(taus.size * (1 - tail_fraction)))
    slope = np.polyfit(taus[start:], np.log(gap[start:]), 1)[0]
    return float(-slope)


def criterion_9() -> CriterionResult:
    """Variance-ODE decay rates against the FD field derivative, and the exact
    doubling of the relaxation-time formula."""
    failures, details = [], {}
    for beta in (0.6, 1.0, 2.0, 5.0):
        gp = gaussian.GaussianParams(sigma2=1.0, beta=beta)
        s_star = gp.s_star
        h = 1e-6
        fd_rate = abs(
            (gaussian.variance_field(s_star + h, gp) - gaussian.variance_field(s_star - h, gp))
            / (2 * h)
        )
        horizon = max(40.0, 30.0 / fd_rate)
        taus, series = gaussian.integrate_variance_ode(gp, s_star + 0.3, dt=0.02,
                                                       t_max=horizon)
        fitted = _fit_scalar_tail(taus, np.abs(series - s_star))
        rel = abs(fitted - fd_rate) / fd_rate
        details[f"beta={beta}"] = {"fitted": fitted, "fd_rate": fd_rate, "rel_err": rel}
        _check(failures, rel <= 0.02,
               f"beta={beta}: fitted rate {fitted:.6f} vs FD {fd_rate:.6f} ({rel:.2%} > 2%)")
        tau1 = gaussian.gaussian_gap(gp).tau_relax
        tau2 = gaussian.gaussian_gap(gaussian.GaussianParams(1.0, 2 * beta)).tau_relax
        _check(failures, abs(tau2 / tau1 - 2.0) <= 1e-12,
               f"beta={beta}: relaxation time did not double exactly")
    return _result(9, "critical slowing down of the variance mode", failures, details)


def criterion_10() -> CriterionResult:
    """Second-moment bound constants and the trajectory bound on the grid."""
    failures, details = [], {}
    consts = gaussian.moment_bound_constants(1.0, 1.0, 1.0, v0=1.0)
    for name, got, want in (("C1", consts.c1, 1 / 3), ("C2", consts.c2, 4 / 9),
                            ("c", consts.c, 5 / 9)):
        details[name] = got
        _check(failures, abs(got - want) <= 1e-14, f"{name} = {got!r}, expected {want!r}")
    prob, axis = _grid_setup()
    cfg = gaussian.grid_integrator_config(dt=0.02, t_max=10.0, sample_every=5)
    for v0 in (0.1, 1.0, 3.0):
        q0 = gaussian.grid_gaussian_density(axis, v0)
        traj = integrate_flow(prob, q0, cfg)
        sup = float(gaussian.second_moment_series(traj, axis).max())
        details[f"V0={v0}"] = {"sup_moment": sup, "limit": max(v0, 0.6)}
        _check(failures, sup <= max(v0, 0.6) + 1e-3,
               f"V0={v0}: sup_t moment {sup:.6f} > max(V0, 0.6) + 1e-3")
    return _result(10, "uniform second-moment bound", failures, details)


def criterion_11() -> CriterionResult:
    """Entry-time bound t_entry <= 2 (F(q0) - F*) / delta0^2."""
    failures, details = [], {}
    cases = []
    prob_sym = models.two_point_problem(models.TwoPointSpec(0.5, 2.0))
    cases.append(("two-point symmetric", prob_sym, ProbVec(np.array([0.99, 0.01]))))
    prob_asym = models.two_point_problem(models.TwoPointSpec(0.7, 2.0))
    cases.append(("two-point asymmetric", prob_asym, ProbVec(np.array([0.05, 0.95]))))
    spec3 = models.ThreeClusterSpec(5, 3.0, 2.0, (0.5, 0.3, 0.2))
    prob3 = models.three_cluster_problem(spec3)
    cases.append(("three-cluster asym uniform start", prob3, ProbVec(np.full(15, 1 / 15))))
    skew = np.concatenate([np.full(5, 0.12), np.full(5, 0.06), np.full(5, 0.02)])
    cases.append(("three-cluster asym skew start", prob3, ProbVec(skew / skew.sum())))
    for name, prob, q0 in cases:
        f_star = free_energy(prob, ba_fixed_point(prob, q0, tol=1e-13).q)
        cfg = IntegratorConfig(dt=0.01, t_max=40.0, sample_every=1)
        traj = integrate_flow(prob, q0, cfg)
        for delta0 in (0.2, 0.05):
            report = entry_time_report(prob, traj, delta0, f_star)
            key = f"{name} delta0={delta0}"
            details[key] = {"t_entry": report.t_entry, "bound": report.bound}
            _check(failures, report.t_entry is not None, f"{key}: no entry within horizon")
            if report.t_entry is not None:
                _check(failures, report.t_entry <= report.bound + 1e-12,
                       f"{key}: t_entry {report.t_entry:.3f} > bound {report.bound:.3f}")
    return _result(11, "finite entry-time bound", failures, details)


def criterion_12() -> CriterionResult:
    """Two-scale experiment at (m=5, Delta=3, beta=2) with the asymmetric
    source (0.5, 0.3, 0.2).

    The rate bound and the FD-Jacobian match pass.  The plateau-shape
    check fails on analytic grounds: within-cluster ratios are conserved
    exactly, mass modes relax at ~0.98, and the measured residual/distance
    ratio at the uniform start is ~0.99, so no interval with a slow
    log-distance slope exists.  Kept verbatim; see README.
    """
    failures, details = [], {}
    spec = models.ThreeClusterSpec(5, 3.0, 2.0, (0.5, 0.3, 0.2))
    result = models.two_scale_experiment(
        spec, cfg=IntegratorConfig(dt=0.05, t_max=40.0), seed=1
    )
    details["reduced_gap_mass"] = result.reduced.reduced_gap_mass
    details["reduced_gap_perentry"] = result.reduced.reduced_gap_perentry
    details["reference_gap"] = 0.08  # externally quoted value, reported not asserted
    details["fd_min_rate"] = result.fd_min_rate
    details["t_plateau_end"] = result.t_plateau_end
    _check(failures, not result.degenerate, "trajectory degenerate (started at equilibrium)")
    if result.fitted is not None:
        details["fitted_rate"] = result.fitted.rate
        _check(failures, result.fitted.rate >= result.bound_rate,
               f"fitted rate {result.fitted.rate:.4f} < lambda*/4 = {result.bound_rate:.4f}")
        if result.fd_min_rate:
            rel = abs(result.fitted.rate - result.fd_min_rate) / result.fd_min_rate
            details["fd_rel_err"] = rel
            _check(failures, rel <= 0.10,
                   f"fitted rate off FD minimal rate by {rel:.2%} (> 10%)")
    else:
        failures.append("tail fit unavailable")
    _check(failures,
           result.t_plateau_end is not None and result.t_plateau_end >= 1.0,
           f"no visible plateau phase (t_plateau_end = {result.t_plateau_end}); "
           f"known defect: the model admits no slow phase from this start")
    return _result(12, "two-scale phenomenology", failures, details)


def criterion_13(seed: int = 0) -> CriterionResult:
    """Fisher-Rao comparison: the two FD linearisations differ by exactly
    (1/beta) I on T, on uniform-equilibrium problems."""
    rng = np.random.default_rng(seed)
    failures, details = [], {}
    gen4 = np.concatenate([[0.0], rng.uniform(0.4, 1.4, 3)])
    for beta in (1.0, 10.0, 100.0):
        cases = [
            ("two-point symmetric", BAProblem(np.array([0.5, 0.5]),
                                              np.array([[0.0, 2.0], [2.0, 0.0]]), beta)),
            ("circulant-4", models.circulant_problem(gen4, beta=beta)),
        ]
        for name, prob in cases:
            n = prob.n_output
            q_star = ba_fixed_point(prob, ProbVec(np.full(n, 1.0 / n)), tol=1e-13).q
            report = fr_linearization_check(prob, q_star)
            key = f"{name} beta={beta}"
            details[key] = report.max_abs_err
            _check(failures, report.max_abs_err <= 1e-5,
                   f"{key}: max |diff - I/beta| = {report.max_abs_err:.3e} > 1e-5")
    return _result(13, "Fisher-Rao gradient-flow comparison", failures, details)


def criterion_14(seed: int = 0) -> CriterionResult:
    """Extensions: water-filling KKT, effective temperature, rate gap,
    stiffness structure."""
    rng = np.random.default_rng(seed)
    failures, details = [], {}
    specs = [
        extensions.MimoSpec(np.array([1.0, 1.0]), 2.0, 1.0),
        extensions.MimoSpec(np.array([1.0, 0.5]), 3.0, 1.0),
        extensions.MimoSpec(np.array([2.0, 1.0, 0.25, 0.1]), 1.5, 2.0),
        extensions.MimoSpec(rng.uniform(0.1, 3.0, 5), 4.0, 1.0),
    ]
    for i, spec in enumerate(specs):
        powers = extensions.water_filling(spec)
        inv = 1.0 / spec.channel_gains
        active = powers > 0
        mu = (powers + inv)[active]
        kkt_active = float(np.abs(mu - mu[0]).max()) if active.any() else np.inf
        kkt_inactive = 0.0
        if (~active).any():
            kkt_inactive = float(max(0.0, (mu[0] - inv[~active]).max()))
        power_err = abs(powers.sum() - spec.total_power)
        details[f"mimo-{i}"] = {"powers": powers.tolist(), "kkt_active": kkt_active,
                                "sum_err": power_err}
        _check(failures, kkt_active <= 1e-12, f"mimo-{i}: active water levels differ")
        _check(failures, kkt_inactive <= 1e-12, f"mimo-{i}: inactive channel above water level")
        _check(failures, power_err <= 1e-12, f"mimo-{i}: power budget off by {power_err:.2e}")
        report = extensions.mimo_direction_gaps(spec, powers)
        load = spec.channel_gains[report.active] * powers[report.active]
        structural = (1 + 2 * spec.beta * load.max()) / (1 + 2 * spec.beta * load.min())
        _check(failures, abs(report.stiffness_ratio - structural) <= 1e-12,
               f"mimo-{i}: stiffness ratio does not match the gain-power structure")

    hand = extensions.water_filling(extensions.MimoSpec(np.array([1.0, 0.5]), 3.0, 1.0))
    _check(failures, np.abs(hand - np.array([2.0, 1.0])).max() <= 1e-12,
           f"water level hand check: got {hand}")

    wz_beta = 1.3
    eq_fail = False
    for rho in (0.0, 0.3, -0.3, 0.6, -0.6, 0.9):
        spec = extensions.WynerZivSpec(sigma2=1.0, rho=rho, beta=wz_beta)
        for s in np.linspace(0.0, 0.9, 7):
            be = extensions.wz_effective_beta(spec, float(s))
            if rho == 0.0:
                eq_fail |= abs(be - wz_beta) > 1e-14
            else:
                eq_fail |= not be < wz_beta
    _check(failures, not eq_fail, "beta_eff <= beta with equality iff rho = 0 violated")

    gap = extensions.wz_rate_gap(np.sqrt(0.75))
    details["wz_rate_gap"] = gap
    _check(failures, abs(gap - np.log(2.0)) <= 1e-12,
           f"wz_rate_gap(rho^2=0.75) = {gap!r}, expected ln 2")
    return _result(14, "MIMO and Wyner-Ziv extension formulas", failures, details)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
    12: criterion_12,
    13: criterion_13,
    14: criterion_14,
}

# Checks that fail for documented analytic reasons (the target identities
# are false as stated), not implementation bugs; see README "Known deviations".
EXPECTED_DEFECTS = {5, 7, 12}


def run_criterion(number: int, seed: int = 0) -> CriterionResult:
    func = CRITERIA[number]
    try:
        return func(seed) if "seed" in func.__code__.co_varnames else func()
    except Exception as exc:  # noqa: BLE001 - suite must report, not crash
        return CriterionResult(
            number=number, name=func.__doc__.splitlines()[0] if func.__doc__ else "",
            passed=False, failures=[f"raised {type(exc).__name__}: {exc}"],
        )


def run_all(seed: int = 0) -> list[CriterionResult]:
    return [run_criterion(number, seed=seed) for number in sorted(CRITERIA)]
