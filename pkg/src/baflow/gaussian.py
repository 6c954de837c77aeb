"""Exact Gaussian reduction and the grid oracle tying it to finite problems.

For a Gaussian source with quadratic cost the second moment s of the
reproduction distribution obeys a closed scalar ODE

    s' = stilde(s, beta) - s,
    stilde(s, beta) = s/(1+2 beta s) + (2 beta s)^2 sigma^2 / (1+2 beta s)^2,

independently of the shape of the density.  Its unique fixed point is
s* = sigma^2 - 1/(2 beta), interior whenever 2 beta sigma^2 > 1.

Spectral attribution
--------------------
With B = 2 beta sigma^2 and alpha = 1 - 1/B, the geometric sequence
alpha^n is the eigenvalue ladder of the *relaxation kernel* -DV(q*),
i.e. the ladder of decay rates of the linearised flow; DT(q*) has
eigenvalues 1 - alpha^n accumulating at one.  (Multiplicative
high-frequency perturbations pass through the Gibbs update almost
unchanged, so they are the slow modes.)  This assignment is forced by
the scalar ODE itself -- the variance mode decays at exactly
|d(stilde - s)/ds| at s*, which equals alpha^2 -- and is confirmed by
finite-difference Jacobians of the discretised problem.  hermite_spectrum
returns the ladder with both labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.polynomial.hermite_e as hermite_e

from .core import BAProblem
from .errors import NumericalError
from .flow import IntegratorConfig, Trajectory, integrate_flow
from .simplex import ProbVec

__all__ = [
    "GaussianParams",
    "MultivariateGaussianParams",
    "s_tilde",
    "variance_field",
    "integrate_variance_ode",
    "hermite_spectrum",
    "HermiteSpectrum",
    "gaussian_gap",
    "GaussianGap",
    "multivariate_gap",
    "MultivariateGap",
    "convergence_time_bound",
    "discretize_gaussian",
    "grid_axis",
    "grid_integrator_config",
    "grid_gaussian_density",
    "grid_density_with_moment",
    "solve_grid_fixed_point",
    "hermite_probe_basis",
    "grid_relaxation_eigenvalues",
    "moment_bound_constants",
    "MomentBoundConstants",
]


@dataclass(frozen=True)
class GaussianParams:
    sigma2: float
    beta: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def degenerate(self) -> bool:
        """True when s* <= 0 (no interior Gaussian fixed point)."""
        return 2.0 * self.beta * self.sigma2 <= 1.0

    @property
    def s_star(self) -> float:
        return self.sigma2 - 1.0 / (2.0 * self.beta)


@dataclass(frozen=True)
class MultivariateGaussianParams:
    sigma2s: np.ndarray
    beta: float

    def __post_init__(self):
        arr = np.asarray(self.sigma2s, dtype=float)
        if arr.ndim != 1 or arr.min() <= 0:
            raise ValueError("sigma2s must be a vector of positive variances")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "sigma2s", arr)


def s_tilde(s: float, gp: GaussianParams) -> float:
    """Second moment of the updated density as a function of s alone."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    u = 2.0 * gp.beta * s
    return s / (1.0 + u) + u * u * gp.sigma2 / (1.0 + u) ** 2


def variance_field(s: float, gp: GaussianParams) -> float:
    """Right-hand side of the scalar ODE: stilde(s) - s."""
    return s_tilde(s, gp) - s


def integrate_variance_ode(
    gp: GaussianParams, s0: float, dt: float = 0.01, t_max: float = 20.0
) -> tuple[np.ndarray, np.ndarray]:
    """RK4 series (tau, s) of the scalar variance ODE."""
    if s0 < 0:
        raise ValueError("s0 must be nonnegative")
    n = int(round(t_max / dt))
    taus = np.linspace(0.0, n * dt, n + 1)
    out = np.empty(n + 1)
    out[0] = s = s0
    for k in range(1, n + 1):
        k1 = variance_field(s, gp)
        k2 = variance_field(s + 0.5 * dt * k1, gp)
        k3 = variance_field(s + 0.5 * dt * k2, gp)
        k4 = variance_field(s + dt * k3, gp)
        s = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k] = s
    return taus, out


@dataclass(frozen=True)
class HermiteSpectrum:
    alpha: float
    mode_rates: np.ndarray        # alpha^n: decay rates / relaxation-kernel spectrum
    update_eigenvalues: np.ndarray  # 1 - alpha^n: spectrum of DT at q*
    sigma_k2: float               # Mehler kernel width, recorded for completeness


def hermite_spectrum(gp: GaussianParams, n_max: int = 8) -> HermiteSpectrum:
    """Geometric eigenvalue ladder alpha^n, n = 1..n_max, at the Gaussian
    fixed point, with alpha = 1 - 1/(2 beta sigma^2).

    mode_rates are the decay rates of the linearised flow (eigenvalues of
    the relaxation kernel -DV); update_eigenvalues = 1 - alpha^n is the
    spectrum of DT.  See the module docstring for why the ladder attaches
    to -DV.
    """
    if gp.degenerate:
        raise ValueError("degenerate regime: 2 beta sigma^2 <= 1")
    big_b = 2.0 * gp.beta * gp.sigma2
    alpha = 1.0 - 1.0 / big_b
    n = np.arange(1, n_max + 1)
    rates = alpha ** n
    sigma_k2 = gp.s_star * (1 - alpha ** 2) + alpha ** 2 / (2 * gp.beta)
    return HermiteSpectrum(
        alpha=alpha,
        mode_rates=rates,
        update_eigenvalues=1.0 - rates,
        sigma_k2=sigma_k2,
    )


@dataclass(frozen=True)
class GaussianGap:
    lambda_star: float
    tau_relax: float


def gaussian_gap(gp: GaussianParams) -> GaussianGap:
    """Closed forms lambda* = 1/(2 beta sigma^2) and tau_relax = 1/lambda*."""
    if gp.degenerate:
        raise ValueError("degenerate regime: 2 beta sigma^2 <= 1")
    lam = 1.0 / (2.0 * gp.beta * gp.sigma2)
    return GaussianGap(lambda_star=lam, tau_relax=1.0 / lam)


@dataclass(frozen=True)
class MultivariateGap:
    lambda_sys: float
    per_direction: np.ndarray
    stiffness_ratio: float
    degenerate_directions: np.ndarray


def multivariate_gap(mgp: MultivariateGaussianParams) -> MultivariateGap:
    """Per-direction gaps 1/(2 beta sigma_i^2); the system gap is their
    minimum and the stiffness ratio equals the variance condition number."""
    gaps = 1.0 / (2.0 * mgp.beta * mgp.sigma2s)
    degenerate = 2.0 * mgp.beta * mgp.sigma2s <= 1.0
    return MultivariateGap(
        lambda_sys=float(gaps.min()),
        per_direction=gaps,
        stiffness_ratio=float(gaps.max() / gaps.min()),
        degenerate_directions=degenerate,
    )


def convergence_time_bound(
    gp: GaussianParams,
    f0_minus_fstar: float,
    delta0: float,
    c0: float,
    dist_entry: float,
    eps: float,
) -> float:
    """Two-term time bound: entry phase 2 (F0 - F*) / delta0^2 plus local
    phase 2 beta sigma^2 log(C0 dist_entry / eps), clamped at 0."""
    if min(f0_minus_fstar, delta0, c0, dist_entry, eps) <= 0:
        raise ValueError("all inputs must be positive")
    entry = 2.0 * f0_minus_fstar / delta0 ** 2
    local = 2.0 * gp.beta * gp.sigma2 * max(0.0, np.log(c0 * dist_entry / eps))
    return float(entry + local)


def grid_integrator_config(dt: float = 0.02, t_max: float = 10.0,
                           sample_every: int = 1) -> IntegratorConfig:
    """Integrator settings for grid problems: the positivity floor is
    dropped to the underflow guard because equilibrium tails near the
    truncation boundary sit many orders below the generic 1e-14 floor."""
    return IntegratorConfig(dt=dt, t_max=t_max, sample_every=sample_every,
                            positivity_floor=1e-280)


def grid_axis(gp: GaussianParams, half_width_sigmas: float = 6.0, n_points: int = 201) -> np.ndarray:
    if n_points < 51 or n_points % 2 == 0:
        raise ValueError("n_points must be odd and >= 51")
    if half_width_sigmas < 5:
        raise ValueError("half_width_sigmas must be >= 5")
    limit = half_width_sigmas * np.sqrt(gp.sigma2)
    return np.linspace(-limit, limit, n_points)


def discretize_gaussian(
    gp: GaussianParams, half_width_sigmas: float = 6.0, n_points: int = 201
) -> BAProblem:
    """Finite problem on a shared uniform grid: Gaussian source weights,
    quadratic cost d(x, y) = (x - y)^2."""
    axis = grid_axis(gp, half_width_sigmas, n_points)
    weights = np.exp(-(axis ** 2) / (2.0 * gp.sigma2))
    weights /= weights.sum()
    cost = (axis[:, None] - axis[None, :]) ** 2
    return BAProblem(source=weights, cost=cost, beta=gp.beta)


def grid_gaussian_density(axis: np.ndarray, variance: float) -> ProbVec:
    w = np.exp(-(axis ** 2) / (2.0 * variance))
    return ProbVec(w / w.sum())


def grid_density_with_moment(axis: np.ndarray, shape: str, target_s: float) -> ProbVec:
    """Grid density of a given shape whose discrete second moment equals
    target_s to ~1e-12 (scale parameter found by bisection).

    Shapes: gaussian, bimodal (symmetric two-Gaussian mixture),
    uniform (indicator of a centred interval, smoothed by the grid).
    """
    def builder(scale: float) -> np.ndarray:
        if shape == "gaussian":
            w = np.exp(-(axis ** 2) / (2.0 * scale))
        elif shape == "bimodal":
            centre = scale
            width = max(scale / 4.0, 1e-3)
            w = np.exp(-((axis - centre) ** 2) / (2 * width)) + np.exp(
                -((axis + centre) ** 2) / (2 * width)
            )
        elif shape == "uniform":
            # indicator of [-scale, scale] with a one-grid-cell logistic edge,
            # so the second moment is continuous in scale and bisectable
            edge = max(np.diff(axis).min(), 1e-6)
            w = 1.0 / (1.0 + np.exp(np.clip((np.abs(axis) - scale) / edge, -500, 500)))
        else:
            raise ValueError(f"unknown shape {shape!r}")
        w = np.maximum(w, 1e-290)
        return w / w.sum()

    def moment(scale: float) -> float:
        return float(np.dot(builder(scale), axis ** 2))

    lo, hi = 1e-4, float(np.abs(axis).max())
    if shape == "bimodal":
        hi = float(np.abs(axis).max()) * 0.9
    if not moment(lo) <= target_s <= moment(hi):
        raise ValueError(f"target second moment {target_s} unreachable for shape {shape!r}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if moment(mid) < target_s:
            lo = mid
        else:
            hi = mid
    return ProbVec(builder(0.5 * (lo + hi)))


def solve_grid_fixed_point(
    prob: BAProblem,
    t_max: float = 60.0,
    dt: float = 0.05,
) -> ProbVec:
    """Grid equilibrium via long flow integration from the source shape.

    The discrete iteration is unusable here: the truncated problem sheds
    support at the outer grid points (the dual value sits below one near
    the boundary), so iterates underflow.  The flow contracts entries at
    most like exp(-t) and lands on the interior state whose bulk is
    stationary to solver precision; the residual dual deficit is confined
    to the far tail and carries negligible mass.
    """
    q0 = ProbVec(prob.source.copy())
    # tail entries legitimately sink far below the generic 1e-14 floor
    cfg = grid_integrator_config(dt=dt, t_max=t_max,
                                 sample_every=max(1, int(round(t_max / dt))))
    traj = integrate_flow(prob, q0, cfg)
    return traj.state(traj.n_samples - 1)


def hermite_probe_basis(
    axis: np.ndarray, q_star: ProbVec, n_modes: int
) -> np.ndarray:
    """Tangent probe directions He_j(y / sqrt(s)) q*(y), j = 1..n_modes.

    Tangency is restored by subtracting (sum) * q*, which keeps every
    entry proportional to q* so probes respect the tiny equilibrium
    tails; columns are normalised but deliberately not orthogonalised
    (QR would smear machine noise into the tails).
    """
    qv = q_star.values
    s = float(np.dot(qv, axis ** 2))
    cols = []
    for j in range(1, n_modes + 1):
        coeff = np.zeros(j + 1)
        coeff[j] = 1.0
        v = hermite_e.hermeval(axis / np.sqrt(s), coeff) * qv
        v = v - v.sum() * qv
        cols.append(v / np.linalg.norm(v))
    return np.array(cols).T


def grid_relaxation_eigenvalues(
    prob: BAProblem,
    q_star: ProbVec,
    axis: np.ndarray,
    n_modes: int = 6,
    h: float = 1e-6,
) -> np.ndarray:
    """Finite-difference (Galerkin) eigenvalues of -DV(q*) on the span of
    the Hermite probes, descending.

    Steps are shrunk per direction so that relative perturbations stay
    below 10% of every entry, keeping all evaluation points interior.
    """
    from .core import ba_map  # local import to avoid cycle noise

    basis = hermite_probe_basis(axis, q_star, n_modes)
    qv = q_star.values
    cols = np.zeros_like(basis)
    for i in range(n_modes):
        rel = np.abs(basis[:, i] / qv).max()
        step = min(h, 0.1 / rel)
        plus = qv + step * basis[:, i]
        minus = qv - step * basis[:, i]
        if plus.min() <= 0 or minus.min() <= 0:
            raise NumericalError("probe perturbation exited the interior")
        v_plus = ba_map(prob, ProbVec.normalize(plus)).values - plus / plus.sum()
        v_minus = ba_map(prob, ProbVec.normalize(minus)).values - minus / minus.sum()
        cols[:, i] = (v_plus - v_minus) / (2 * step)
    gram = basis.T @ basis
    projected = np.linalg.solve(gram, basis.T @ (-cols))
    evals = np.linalg.eigvals(projected).real
    return np.sort(evals)[::-1]


@dataclass(frozen=True)
class MomentBoundConstants:
    c1: float
    c2: float
    c: float
    bound: float
    lam: np.ndarray
    h_op: np.ndarray


def moment_bound_constants(sigma_p2, a, beta: float, v0: float) -> MomentBoundConstants:
    """Constants of the uniform second-moment bound for quadratic costs.

    Lambda = Sigma_P^(-1) + 2 beta A, C1 = tr Lambda^(-1),
    H = 2 beta A Lambda^(-1), C2 = ||H||_op^2 < 1, c = 1 - C2, and the
    trajectory bound sup_t tr Sigma(t) <= max(V(0), C1 / c).
    Scalar inputs are treated as 1x1 matrices.
    """
    sp = np.atleast_2d(np.asarray(sigma_p2, dtype=float))
    am = np.atleast_2d(np.asarray(a, dtype=float))
    for name, m in (("sigma_p2", sp), ("a", am)):
        if np.abs(m - m.T).max() > 1e-12 or np.linalg.eigvalsh(m).min() <= 0:
            raise ValueError(f"{name} must be symmetric positive definite")
    lam = np.linalg.inv(sp) + 2.0 * beta * am
    lam_inv = np.linalg.inv(lam)
    h_op = 2.0 * beta * am @ lam_inv
    c1 = float(np.trace(lam_inv))
    c2 = float(np.linalg.norm(h_op, 2) ** 2)
    c = 1.0 - c2
    if c <= 0:
        raise NumericalError("contraction constant c = 1 - C2 is not positive")
    return MomentBoundConstants(
        c1=c1, c2=c2, c=c, bound=float(max(v0, c1 / c)), lam=lam, h_op=h_op
    )


def second_moment_series(traj: Trajectory, axis: np.ndarray) -> np.ndarray:
    """tr Sigma(t) along a grid trajectory."""
    return traj.states @ (axis ** 2)
