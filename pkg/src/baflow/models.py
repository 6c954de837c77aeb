"""Exactly solvable finite models and experiment drivers.

Two-point model: source (alpha, 1-alpha), zero diagonal cost, off-diagonal
cost d; only the product beta*d matters, so problems are built with
beta = 1, d = beta_d.  The interior fixed point is

    theta* = (alpha (1 + w) - w) / (1 - w),     w = exp(-beta d),

valid while alpha is inside (w/(1+w), 1/(1+w)); outside that window the
optimum sits on the boundary and is out of scope.  At theta* the partition
functions satisfy Z_0 Z_1 = alpha (1 - alpha) (1 + w)^2, which makes the
closed-form gap expression collapse to tanh^2(beta d / 2) / 2 for every
alpha (the alpha-dependence cancels identically).

Three-cluster model: 3 m outputs in three cost-0 clusters, inter-cluster
cost Delta.  Gibbs conditionals are constant within clusters, so the Gram
kernel annihilates every within-cluster mean-zero vector (3(m-1) exact
zero modes) and within-cluster probability ratios are conserved exactly
by the flow: the model has a continuum of equilibria parametrised by the
within-cluster shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import BAProblem, dual_identity_residual, gibbs_state
from .errors import NumericalError
from .flow import (
    DecayFit,
    IntegratorConfig,
    Trajectory,
    ba_fixed_point,
    fit_decay_rate,
    integrate_flow,
)
from .simplex import ProbVec, tangent_basis
from .spectral import gram_kernel, jacobian_spectrum, tangent_spectrum

__all__ = [
    "TwoPointSpec",
    "ThreeClusterSpec",
    "two_point_problem",
    "two_point_theta_star",
    "two_point_interior_window",
    "two_point_gap_closed_form",
    "three_cluster_problem",
    "three_cluster_reduced",
    "ReducedClusterReport",
    "two_scale_experiment",
    "TwoScaleResult",
    "random_problem",
    "random_interior_problem",
    "circulant_problem",
    "random_circulant_problem",
]


@dataclass(frozen=True)
class TwoPointSpec:
    alpha: float
    beta_d: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.beta_d <= 0:
            raise ValueError("beta_d must be positive")


@dataclass(frozen=True)
class ThreeClusterSpec:
    m: int
    delta: float
    beta: float
    source_weights: tuple = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if self.m < 3:
            raise ValueError("cluster size m must be >= 3")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        w = np.asarray(self.source_weights, dtype=float)
        if w.size != 3 or w.min() <= 0 or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("source_weights must be 3 positive numbers summing to 1")


def two_point_problem(spec: TwoPointSpec) -> BAProblem:
    source = np.array([spec.alpha, 1.0 - spec.alpha])
    cost = np.array([[0.0, spec.beta_d], [spec.beta_d, 0.0]])
    return BAProblem(source=source, cost=cost, beta=1.0)


def two_point_interior_window(beta_d: float) -> tuple[float, float]:
    """Range of alpha for which the fixed point is interior."""
    w = np.exp(-beta_d)
    return w / (1 + w), 1 / (1 + w)


def two_point_theta_star(spec: TwoPointSpec) -> float:
    """Closed-form interior fixed point theta* (first coordinate of q*)."""
    w = np.exp(-spec.beta_d)
    lo, hi = two_point_interior_window(spec.beta_d)
    if not lo < spec.alpha < hi:
        raise ValueError(
            f"alpha={spec.alpha} is outside the interior window ({lo:.4f}, {hi:.4f}) "
            f"at beta_d={spec.beta_d}; the optimum is on the boundary"
        )
    return (spec.alpha * (1 + w) - w) / (1 - w)


def two_point_gap_closed_form(spec: TwoPointSpec, theta_star: float) -> float:
    """The closed-form gap expression

        (alpha (1-alpha) / 2) (1 - w)^2 / ((th + (1-th) w)(th w + (1-th)))

    evaluated verbatim.  At the true fixed point the denominator equals
    alpha (1-alpha)(1+w)^2, so the value reduces to tanh^2(beta d / 2)/2
    for every alpha; the Euclidean pipeline gap agrees with it only in
    the symmetric case alpha = 1/2 (see README, two-point conventions).
    """
    if not 0 < theta_star < 1:
        raise ValueError("theta_star must be in (0, 1)")
    w = np.exp(-spec.beta_d)
    th = theta_star
    z0 = th + (1 - th) * w
    z1 = th * w + (1 - th)
    return float(spec.alpha * (1 - spec.alpha) / 2 * (1 - w) ** 2 / (z0 * z1))


def three_cluster_problem(spec: ThreeClusterSpec) -> BAProblem:
    n = 3 * spec.m
    cost = np.full((3, n), spec.delta)
    for k in range(3):
        cost[k, k * spec.m:(k + 1) * spec.m] = 0.0
    return BAProblem(
        source=np.asarray(spec.source_weights, dtype=float), cost=cost, beta=spec.beta
    )


def cluster_masses(spec: ThreeClusterSpec, q: ProbVec) -> np.ndarray:
    return np.add.reduceat(q.values, [0, spec.m, 2 * spec.m])


@dataclass(frozen=True)
class ReducedClusterReport:
    reduced_gram: np.ndarray          # 3x3 Gram of the cluster-mass kernels
    reduced_gap_mass: float           # min tangent eigenvalue, Euclidean on masses
    reduced_gap_perentry: float       # same subspace, Euclidean on the full simplex
    zero_modes: int                   # conserved directions of the relaxation operator
    gram_zero_modes: int              # null count of the Euclidean-projected Gram
    masses: np.ndarray


def three_cluster_reduced(spec: ThreeClusterSpec, q_star: ProbVec) -> ReducedClusterReport:
    """Project the Gram kernel onto cluster-constant vectors.

    Two normalisations are reported: Euclidean on the 3-vector of cluster
    masses (m-independent), and Euclidean on the full simplex (carries a
    1/m factor; equals the mass gap divided by m at the within-cluster
    uniform equilibrium).

    zero_modes counts the conserved directions of the relaxation operator
    -DV and equals 3(m-1) at every equilibrium of the continuum (the
    within-cluster probability ratios are conserved exactly).  The
    Euclidean-projected Gram agrees at within-cluster-uniform equilibria
    but pushes one null direction slightly off the tangent hyperplane
    when the conserved shape is non-uniform; its count is reported
    separately as gram_zero_modes.
    """
    prob = three_cluster_problem(spec)
    resid = dual_identity_residual(prob, q_star)
    if resid > 1e-8:
        raise ValueError(f"q_star is not a fixed point (dual residual {resid:.3e})")
    kernels = gibbs_state(prob, q_star).kernels
    mass_kernels = np.add.reduceat(kernels, [0, spec.m, 2 * spec.m], axis=1)
    reduced = np.einsum("x,xk,xl->kl", prob.source, mass_kernels, mass_kernels)
    basis3 = tangent_basis(3)
    mass_evals = np.linalg.eigvalsh(basis3.T @ reduced @ basis3)

    # cluster-constant tangent directions, orthonormal in the full space
    n = 3 * spec.m
    indicators = np.zeros((n, 3))
    for k in range(3):
        indicators[k * spec.m:(k + 1) * spec.m, k] = 1.0
    cc_basis = indicators @ basis3 / np.sqrt(spec.m)
    gram = gram_kernel(prob, q_star)
    perentry_evals = np.linalg.eigvalsh(cc_basis.T @ gram.matrix @ cc_basis)

    full = tangent_spectrum(gram)
    relax = jacobian_spectrum(prob, q_star, fd_check=False)
    return ReducedClusterReport(
        reduced_gram=reduced,
        reduced_gap_mass=float(mass_evals[0]),
        reduced_gap_perentry=float(perentry_evals[0]),
        zero_modes=relax.zero_mode_count,
        gram_zero_modes=full.zero_mode_count,
        masses=cluster_masses(spec, q_star),
    )


@dataclass(frozen=True)
class TwoScaleResult:
    trajectory: Trajectory
    reference: ProbVec
    t_plateau_end: Optional[float]
    fitted: Optional[DecayFit]
    bound_rate: float                # lambda*/4 with the mass-coordinate gap
    reduced: ReducedClusterReport
    fd_min_rate: Optional[float]
    degenerate: bool


def _log_slope(times: np.ndarray, values: np.ndarray, i: int, window: int) -> float:
    lo = max(0, i - window)
    hi = min(values.size, i + window + 1)
    t, v = times[lo:hi], np.log(values[lo:hi])
    return float(np.polyfit(t, v, 1)[0])


def two_scale_experiment(
    spec: ThreeClusterSpec,
    q0_mode: str = "uniform_perturbed",
    cfg: IntegratorConfig = IntegratorConfig(dt=0.05, t_max=40.0),
    q0: Optional[ProbVec] = None,
    seed: int = 0,
    fd_rate: bool = True,
) -> TwoScaleResult:
    """Run the three-cluster convergence experiment.

    The reference equilibrium is obtained by the discrete iteration from
    the same q0, which lands on the continuum point selected by q0's
    (conserved) within-cluster ratios.  Plateau end is the first time the
    local log-distance slope exceeds half the tail slope; a constant
    trajectory (distance at the noise floor) reports the degenerate flag.
    """
    prob = three_cluster_problem(spec)
    n = 3 * spec.m
    if q0_mode == "uniform_perturbed":
        rng = np.random.default_rng(seed)
        raw = np.full(n, 1.0 / n) * (1.0 + 0.01 * rng.standard_normal(n))
        q_start = ProbVec.normalize(np.abs(raw))
    elif q0_mode == "custom":
        if q0 is None:
            raise ValueError("q0_mode='custom' requires q0")
        q_start = q0
    else:
        raise ValueError(f"unknown q0_mode {q0_mode!r}")

    ref = ba_fixed_point(prob, q_start, tol=1e-13).q
    reduced = three_cluster_reduced(spec, ref)
    bound_rate = reduced.reduced_gap_mass / 4.0
    traj = integrate_flow(prob, q_start, cfg, ref=ref)

    dist = traj.dist_to_ref_l1
    degenerate = bool(dist.max() < 1e-12)
    fitted = None
    t_plateau = None
    if not degenerate:
        try:
            fitted = fit_decay_rate(traj, ref, tail_fraction=0.3)
        except NumericalError:
            fitted = None
        if fitted is not None:
            above = dist > 1e-13
            usable = int(np.argmin(above)) if not above.all() else dist.size
            tail_slope = -fitted.rate
            window = max(2, int(0.25 / cfg.dt / cfg.sample_every))
            for i in range(window, usable - window):
                if _log_slope(traj.times, dist, i, window) <= 0.5 * tail_slope:
                    t_plateau = float(traj.times[i])
                    break

    fd_min = None
    if fd_rate and not degenerate:
        spectrum = jacobian_spectrum(prob, ref, fd_check=False)
        nonzero = spectrum.eigenvalues[spectrum.eigenvalues > 1e-8]
        fd_min = float(nonzero[0]) if nonzero.size else None

    return TwoScaleResult(
        trajectory=traj,
        reference=ref,
        t_plateau_end=t_plateau,
        fitted=fitted,
        bound_rate=bound_rate,
        reduced=reduced,
        fd_min_rate=fd_min,
        degenerate=degenerate,
    )


def random_problem(
    rng: np.random.Generator, n_source: int, n_output: int, beta: float = 1.0
) -> BAProblem:
    """Generic random problem: uniform costs in [0, 1), random positive source."""
    source = rng.uniform(0.5, 1.5, n_source)
    source /= source.sum()
    cost = rng.uniform(0.0, 1.0, (n_source, n_output))
    return BAProblem(source=source, cost=cost, beta=beta)


def random_interior_problem(
    rng: np.random.Generator,
    n: int,
    beta: float = 2.0,
    min_mass: float = 1e-3,
) -> tuple[BAProblem, ProbVec]:
    """Random n x n problem with a certified interior fixed point.

    Costs are a perturbed permutation structure (each source symbol has a
    distinct cheap output), which keeps the optimum full-support; draws
    are rejected until the solved fixed point is interior with min mass
    above min_mass.
    """
    for _ in range(200):
        source = rng.uniform(0.5, 1.5, n)
        source /= source.sum()
        cost = (1.0 - np.eye(n)) + 0.3 * rng.uniform(0.0, 1.0, (n, n))
        prob = BAProblem(source=source, cost=cost, beta=beta)
        try:
            result = ba_fixed_point(prob, ProbVec(np.full(n, 1.0 / n)),
                                    tol=1e-12, max_iter=20_000)
        except NumericalError:  # support-reduced draw, try again
            continue
        if result.converged and result.q.values.min() > min_mass:
            return prob, result.q
    raise NumericalError("could not draw an interior problem in 200 attempts")


def circulant_problem(generator: np.ndarray, beta: float = 1.0) -> BAProblem:
    """Circulant cost d(x, y) = g((y - x) mod n) with uniform source.

    The uniform distribution is an exact interior fixed point for every
    beta, which makes this family the natural testbed for checks that
    require a uniform equilibrium (high-temperature asymptotics, the
    Fisher-Rao comparison identity).
    """
    gen = np.asarray(generator, dtype=float)
    n = gen.size
    cost = np.empty((n, n))
    for i in range(n):
        cost[i] = np.roll(gen, i)
    return BAProblem(source=np.full(n, 1.0 / n), cost=cost, beta=beta)


def random_circulant_problem(
    rng: np.random.Generator, n: int, beta: float = 1.0
) -> BAProblem:
    gen = np.concatenate([[0.0], rng.uniform(0.3, 1.5, n - 1)])
    return circulant_problem(gen, beta=beta)
