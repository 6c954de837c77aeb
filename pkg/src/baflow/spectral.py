"""Equilibrium analysis: Gram kernel, Jacobians, tangent spectra, and the
Fisher-Rao comparisons.

Conventions (fixed package-wide, see README):

* The Gram kernel is built from row-stochastic equilibrium conditionals,
  C[y, y'] = sum_x p(x) K*_x(y) K*_x(y'); its row sums equal q*.
* The spectral gap lambda* is the Euclidean-normalised minimum of
  u' C u over unit tangent vectors.
* The numerically true linearisation of the velocity field at a fixed
  point is DV(q*) = -C diag(1/q*) on the tangent space (verified here by
  finite differences); the decay-rate spectrum is therefore that of the
  symmetrised operator W = D^(-1/2) C D^(-1/2) restricted to the
  orthogonal complement of sqrt(q*).  lambda* and the decay rates differ
  by the diag(1/q*) weighting except at uniform q*; both are reported
  and never conflated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    BAProblem,
    ba_map,
    dual_identity_residual,
    free_energy,
    gibbs_state,
)
from .errors import NumericalError
from .simplex import ProbVec, TangentVec, fr_inner, project_tangent, tangent_basis

__all__ = [
    "GramKernel",
    "SpectrumReport",
    "gram_kernel",
    "fd_jacobian",
    "fd_linearization",
    "tangent_spectrum",
    "jacobian_spectrum",
    "fr_hessian_check",
    "fr_gradient_field",
    "fr_linearization_check",
    "high_temperature_reference",
]

FIXED_POINT_TOL = 1e-8
ZERO_MODE_THRESHOLD = 1e-10


@dataclass(frozen=True)
class GramKernel:
    """Symmetric PSD matrix C = sum_x p(x) K*_x (x) K*_x, with row sums q*."""

    matrix: np.ndarray
    q_star: ProbVec

    def __post_init__(self):
        c = self.matrix
        if np.abs(c - c.T).max() > 1e-14:
            raise NumericalError("Gram kernel is not symmetric")
        evals = np.linalg.eigvalsh((c + c.T) / 2)
        if evals.min() < -1e-12:
            raise NumericalError(f"Gram kernel is not PSD: min eigenvalue {evals.min():.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues on the tangent space, ascending; gap = eigenvalues[0]."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # coordinates in the deterministic tangent basis
    gap: float
    zero_mode_count: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "eigenvalues": self.eigenvalues.tolist(),
                "gap": self.gap,
                "zero_mode_count": self.zero_mode_count,
            }
        )


def gram_kernel(prob: BAProblem, q_star: ProbVec, fp_tol: float = FIXED_POINT_TOL) -> GramKernel:
    """Gram/relaxation kernel at a certified fixed point.

    Requires dual_identity_residual(q_star) <= fp_tol; the row-sum
    identity (row sums equal q*) is validated to a tolerance that scales
    with the certification quality.
    """
    resid = dual_identity_residual(prob, q_star)
    if resid > fp_tol:
        raise ValueError(
            f"q_star is not a fixed point at tolerance {fp_tol:.1e} "
            f"(dual residual {resid:.3e})"
        )
    kernels = gibbs_state(prob, q_star).kernels
    c = np.einsum("x,xy,xz->yz", prob.source, kernels, kernels)
    c = (c + c.T) / 2
    rowsum_err = np.abs(c.sum(axis=1) - q_star.values).max()
    if rowsum_err > max(1e-10, 10 * resid):
        raise NumericalError(f"Gram row sums deviate from q* by {rowsum_err:.3e}")
    return GramKernel(matrix=c, q_star=q_star)


def _check_perturbations(q: np.ndarray, basis: np.ndarray, h) -> None:
    steps = np.broadcast_to(h, (basis.shape[1],))
    for i in range(basis.shape[1]):
        for sign in (1.0, -1.0):
            if (q + sign * steps[i] * basis[:, i]).min() <= 0:
                raise ValueError(
                    f"perturbation along basis column {i} exits the interior; "
                    f"reduce h or supply an equilibrium-weighted basis"
                )


def fd_jacobian(
    prob: BAProblem,
    q: ProbVec,
    h: float = 1e-6,
    basis: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Central-difference Jacobian of T along a tangent basis.

    Returns an N x N matrix acting on tangent vectors (DV = result minus
    the tangent projector).  basis defaults to the Helmert frame; any
    matrix with zero-sum columns is accepted, e.g. equilibrium-weighted
    probes for grid problems whose tails are tiny.
    """
    n = prob.n_output
    if basis is None:
        basis = tangent_basis(n)
    qv = q.values
    _check_perturbations(qv, basis, h)
    gram = basis.T @ basis
    inv = np.linalg.inv(gram)
    cols = np.zeros((n, basis.shape[1]))
    for i in range(basis.shape[1]):
        plus = ba_map(prob, ProbVec.normalize(qv + h * basis[:, i])).values
        minus = ba_map(prob, ProbVec.normalize(qv - h * basis[:, i])).values
        cols[:, i] = (plus - minus) / (2 * h)
    # J b_i = cols_i, extended by least squares to the span of the basis
    return cols @ inv @ basis.T


def fd_linearization(prob: BAProblem, q: ProbVec, h: float = 1e-6,
                     basis: Optional[np.ndarray] = None) -> np.ndarray:
    """DV = DT - I as a matrix on the tangent space (I acts as the projector)."""
    n = prob.n_output
    proj = np.eye(n) - np.ones((n, n)) / n
    return fd_jacobian(prob, q, h=h, basis=basis) - proj


def tangent_spectrum(kernel: GramKernel) -> SpectrumReport:
    """Spectrum of C restricted to the zero-sum hyperplane.

    gap = smallest eigenvalue = lambda*, the Euclidean-normalised
    minimum of u' C u; zero modes are eigenvalues below 1e-10.
    """
    basis = tangent_basis(kernel.dim)
    reduced = basis.T @ kernel.matrix @ basis
    evals, evecs = np.linalg.eigh((reduced + reduced.T) / 2)
    if evals.min() < -1e-12:
        raise NumericalError(f"negative tangent eigenvalue {evals.min():.3e}")
    return SpectrumReport(
        eigenvalues=evals,
        eigenvectors=evecs,
        gap=float(evals[0]),
        zero_mode_count=int(np.sum(evals < ZERO_MODE_THRESHOLD)),
    )


def jacobian_spectrum(
    prob: BAProblem,
    q_star: ProbVec,
    fp_tol: float = FIXED_POINT_TOL,
    fd_check: bool = True,
    h: float = 1e-6,
) -> SpectrumReport:
    """Decay-rate spectrum: eigenvalues of -DV(q*) = C diag(1/q*) on T.

    Computed from the symmetrised operator W = D^(-1/2) C D^(-1/2)
    restricted to the orthogonal complement of sqrt(q*), where it is
    self-adjoint.  With fd_check the finite-difference linearisation is
    symmetrised the same way and its asymmetry must stay below 1e-8,
    which fails when q_star is not converged or h is too large.
    """
    gram = gram_kernel(prob, q_star, fp_tol=fp_tol)
    qv = q_star.values
    sq = np.sqrt(qv)
    w = gram.matrix / sq[:, None] / sq[None, :]
    # orthonormal basis of the complement of sqrt(q*): QR of the weighted Helmert frame
    helm = tangent_basis(gram.dim)
    qmat, _ = np.linalg.qr(helm / sq[:, None])
    if fd_check:
        dv = fd_linearization(prob, q_star, h=h)
        w_fd = qmat.T @ ((-dv) * sq[None, :] / sq[:, None]) @ qmat
        asym = np.abs(w_fd - w_fd.T).max()
        if asym > 1e-8:
            raise NumericalError(
                f"symmetry self-test failed: FD-linearised operator has "
                f"asymmetry {asym:.3e} (q_star not converged, or h too large)"
            )
    reduced = qmat.T @ w @ qmat
    evals, evecs = np.linalg.eigh((reduced + reduced.T) / 2)
    return SpectrumReport(
        eigenvalues=evals,
        eigenvectors=evecs,
        gap=float(evals[0]),
        zero_mode_count=int(np.sum(evals < ZERO_MODE_THRESHOLD)),
    )


@dataclass(frozen=True)
class HessianCheckReport:
    max_rel_err: float
    h: float
    n_directions: int


def fr_hessian_check(
    prob: BAProblem,
    q_star: ProbVec,
    n_directions: int = 6,
    h: float = 1e-4,
    seed: int = 0,
    fp_tol: float = FIXED_POINT_TOL,
) -> HessianCheckReport:
    """Second-order FD Hessian of the free energy against the bilinear
    form <h1, (I - DT) h2> in the Fisher-Rao metric at q*.

    The FD noise floor is about 1e-4 relative at the default step.
    """
    resid = dual_identity_residual(prob, q_star)
    if resid > fp_tol:
        raise ValueError(f"q_star not certified (dual residual {resid:.3e})")
    rng = np.random.default_rng(seed)
    n = prob.n_output
    qv = q_star.values
    dt_fd = fd_jacobian(prob, q_star)
    proj = np.eye(n) - np.ones((n, n)) / n
    scale = h * 2.0
    dirs = []
    for _ in range(100 * n_directions):
        if len(dirs) == n_directions:
            break
        v = proj @ rng.standard_normal(n)
        v /= np.linalg.norm(v)
        if (qv - scale * np.abs(v)).min() > 0:
            dirs.append(v)
    else:
        raise ValueError(
            "could not find interior probe directions; q_star has entries "
            "smaller than the Hessian step (reduce h or use a weighted basis)"
        )
    worst = 0.0
    for i, h1 in enumerate(dirs):
        for h2 in dirs[i:]:
            fpp = free_energy(prob, ProbVec.normalize(qv + h * h1 + h * h2))
            fpm = free_energy(prob, ProbVec.normalize(qv + h * h1 - h * h2))
            fmp = free_energy(prob, ProbVec.normalize(qv - h * h1 + h * h2))
            fmm = free_energy(prob, ProbVec.normalize(qv - h * h1 - h * h2))
            fd_form = (fpp - fpm - fmp + fmm) / (4 * h * h)
            # project out the spurious constant the FD Jacobian leaks (~1e-11)
            op_form = fr_inner(
                TangentVec(h1), project_tangent(h2 - dt_fd @ h2), q_star
            )
            denom = max(abs(op_form), 1e-10)
            worst = max(worst, abs(fd_form - op_form) / denom)
    return HessianCheckReport(max_rel_err=worst, h=h, n_directions=n_directions)


def fr_gradient_field(prob: BAProblem, q: ProbVec) -> TangentVec:
    """The comparison field (Tq - q) + (1/beta) q (log q - E_q[log q]).

    This is the negative Fisher-Rao gradient of the entropy-corrected
    free energy in the convention used for the gradient-flow comparison;
    it vanishes at a fixed point only when q* is uniform.
    """
    tq = ba_map(prob, q).values
    qv = q.values
    log_q = np.log(qv)
    entropic = qv * (log_q - np.dot(qv, log_q))
    return TangentVec((tq - qv) + entropic / prob.beta)


@dataclass(frozen=True)
class FRLinearizationReport:
    max_abs_err: float
    beta_inv: float


def fr_linearization_check(
    prob: BAProblem,
    q_star: ProbVec,
    h: float = 1e-6,
    fp_tol: float = FIXED_POINT_TOL,
) -> FRLinearizationReport:
    """FD-linearise the Fisher-Rao comparison field and the flow field at
    q* and test that they differ by exactly (1/beta) I on T.

    The identity is exact when q* is uniform (symmetric problems); at a
    non-uniform equilibrium the entropic term contributes extra
    off-identity curvature and the reported error is O(max|log q*|/beta).
    """
    resid = dual_identity_residual(prob, q_star)
    if resid > fp_tol:
        raise ValueError(f"q_star not certified (dual residual {resid:.3e})")
    n = prob.n_output
    basis = tangent_basis(n)
    qv = q_star.values
    _check_perturbations(qv, basis, h)

    def fd(field: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        out = np.zeros((n, n - 1))
        for i in range(n - 1):
            out[:, i] = (field(qv + h * basis[:, i]) - field(qv - h * basis[:, i])) / (2 * h)
        return basis.T @ out

    def ba_field(vec: np.ndarray) -> np.ndarray:
        pv = ProbVec.normalize(vec)
        return ba_map(prob, pv).values - pv.values

    def fr_field(vec: np.ndarray) -> np.ndarray:
        return fr_gradient_field(prob, ProbVec.normalize(vec)).values

    diff = fd(fr_field) - fd(ba_field)
    target = np.eye(n - 1) / prob.beta
    return FRLinearizationReport(
        max_abs_err=float(np.abs(diff - target).max()), beta_inv=1.0 / prob.beta
    )


@dataclass(frozen=True)
class HighTemperatureReference:
    mu_min: float
    centered_matrix: np.ndarray


def high_temperature_reference(prob: BAProblem) -> HighTemperatureReference:
    """Small-beta predictor of the spectral gap: lambda* ~ beta^2 mu_min.

    Expanding the Gibbs kernels at small beta around a uniform
    equilibrium gives K*_x = 1/N - (beta/N) dtilde_x + O(beta^2) with
    dtilde_x(y) = d(x, y) - mean_y d(x, .), so the Gram kernel opens as
    beta^2 M with M = sum_x p(x) (dtilde_x / N)(dtilde_x / N)'.  mu_min
    is the smallest tangent eigenvalue of M.  (The 1/N^2 factor is
    essential; for the symmetric two-point model mu_min = d^2/8, matching
    the exact gap tanh^2(beta d / 2)/2 to second order.)
    """
    n = prob.n_output
    centered = prob.cost - prob.cost.mean(axis=1, keepdims=True)
    scaled = centered / n
    mat = np.einsum("x,xy,xz->yz", prob.source, scaled, scaled)
    basis = tangent_basis(n)
    evals = np.linalg.eigvalsh(basis.T @ mat @ basis)
    return HighTemperatureReference(mu_min=float(evals[0]), centered_matrix=mat)
