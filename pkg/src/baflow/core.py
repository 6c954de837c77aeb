"""The self-consistent Gibbs update on finite problems.

A problem is a strictly positive source p on X, a finite cost matrix
d(x, y), and an inverse temperature beta.  The update map sends a
reproduction distribution q to the p-average of its Gibbs conditionals

    T(q)(y) = sum_x p(x) K_q(x, y),
    K_q(x, y) = exp(-beta d(x, y)) q(y) / Z_q(x).

Kernels are row-stochastic throughout.  All exponentials are max-shifted
so costs with beta*d up to ~700 do not overflow.

Free energy convention
----------------------
The Lyapunov functional reported here is

    F(q) = -sum_x p(x) log Z_q(x),

the minimised value of the Gibbs variational problem
inf_k { KL(k||q) + beta E_k[d] } averaged over the source.  This is the
unique functional whose instantaneous decrease along the flow
q' = T(q) - q equals the chi^2 dissipation exactly; its Euclidean
gradient is -T(q)/q entrywise.  (An entropy-corrected variant appears in
the Fisher-Rao comparison, see spectral.fr_gradient_field.)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .simplex import ProbVec, fr_inner, TangentVec

__all__ = [
    "BAProblem",
    "GibbsState",
    "gibbs_state",
    "ba_map",
    "free_energy",
    "free_energy_gradient",
    "dissipation",
    "dual_identity_residual",
]


@dataclass(frozen=True)
class BAProblem:
    """Finite rate-distortion problem (source, cost matrix, inverse temperature)."""

    source: np.ndarray
    cost: np.ndarray
    beta: float

    def __post_init__(self):
        src = np.asarray(self.source, dtype=float)
        cst = np.asarray(self.cost, dtype=float)
        if src.ndim != 1 or cst.ndim != 2 or cst.shape[0] != src.size:
            raise ValueError(
                f"shape mismatch: source {src.shape}, cost {cst.shape}"
            )
        if not np.all(np.isfinite(cst)):
            raise ValueError("cost matrix has non-finite entries")
        if src.min() <= 0:
            raise ValueError("source must be strictly positive")
        if abs(src.sum() - 1.0) > 1e-12:
            raise ValueError("source must sum to 1")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be positive and finite")
        src = src.copy()
        cst = cst.copy()
        src.flags.writeable = False
        cst.flags.writeable = False
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "cost", cst)

    @property
    def n_source(self) -> int:
        return self.source.size

    @property
    def n_output(self) -> int:
        return self.cost.shape[1]

    @cached_property
    def _shifted_weights(self):
        """(exp(-beta d - shift), shift) with a per-row max shift."""
        logits = -self.beta * self.cost
        shift = logits.max(axis=1, keepdims=True)
        return np.exp(logits - shift), shift[:, 0]

    def to_json(self) -> str:
        return json.dumps(
            {"source": self.source.tolist(), "cost": self.cost.tolist(), "beta": self.beta}
        )

    @staticmethod
    def from_json(text: str) -> "BAProblem":
        data = json.loads(text)
        return BAProblem(
            np.asarray(data["source"], dtype=float),
            np.asarray(data["cost"], dtype=float),
            float(data["beta"]),
        )

    def __eq__(self, other):
        return (
            isinstance(other, BAProblem)
            and self.beta == other.beta
            and np.array_equal(self.source, other.source)
            and np.array_equal(self.cost, other.cost)
        )


@dataclass(frozen=True)
class GibbsState:
    """Row-stochastic Gibbs kernels K_q(x, .) and their partition functions."""

    kernels: np.ndarray
    partition: np.ndarray
    log_partition: np.ndarray

    def __post_init__(self):
        rows = self.kernels.sum(axis=1)
        if np.abs(rows - 1.0).max() > 1e-12:
            raise ValueError("kernel rows must sum to 1")


def _raw_state(prob: BAProblem, q: np.ndarray):
    weights, shift = prob._shifted_weights
    scaled_z = weights @ q
    kernels = weights * q / scaled_z[:, None]
    log_z = np.log(scaled_z) + shift
    return kernels, log_z


def _check_q(prob: BAProblem, q: ProbVec):
    if q.dim != prob.n_output:
        raise ValueError(
            f"dimension mismatch: q has {q.dim} entries, problem expects {prob.n_output}"
        )


def gibbs_state(prob: BAProblem, q: ProbVec) -> GibbsState:
    """Conditional Gibbs distributions of every source symbol given q."""
    _check_q(prob, q)
    kernels, log_z = _raw_state(prob, q.values)
    return GibbsState(kernels=kernels, partition=np.exp(log_z), log_partition=log_z)


def ba_map(prob: BAProblem, q: ProbVec) -> ProbVec:
    """One application of the update operator T; maps interior to interior."""
    _check_q(prob, q)
    kernels, _ = _raw_state(prob, q.values)
    return ProbVec(prob.source @ kernels)


def free_energy(prob: BAProblem, q: ProbVec) -> float:
    """Lyapunov functional F(q) = -sum_x p(x) log Z_q(x), in nats."""
    _check_q(prob, q)
    _, log_z = _raw_state(prob, q.values)
    return float(-np.dot(prob.source, log_z))


def free_energy_gradient(prob: BAProblem, q: ProbVec) -> np.ndarray:
    """Euclidean gradient of free_energy: -T(q)(y) / q(y) entrywise.

    Pairing with a tangent vector h gives -sum_y (Tq(y)/q(y)) h(y), the
    first variation of F.  The full Fisher-Rao-projected field need not
    vanish at a fixed point; see spectral.fr_gradient_field.
    """
    _check_q(prob, q)
    kernels, _ = _raw_state(prob, q.values)
    tq = prob.source @ kernels
    return -tq / q.values


def dissipation(prob: BAProblem, q: ProbVec) -> float:
    """chi^2(Tq || q): the exact instantaneous rate of free-energy decrease.

    Coincides with the squared Fisher-Rao norm of the velocity T(q) - q.
    """
    _check_q(prob, q)
    kernels, _ = _raw_state(prob, q.values)
    tq = prob.source @ kernels
    delta = tq - q.values
    return float(np.sum(delta * delta / q.values))


def dissipation_fr(prob: BAProblem, q: ProbVec) -> float:
    """Independent route: ||Tq - q||^2 in the Fisher-Rao metric at q."""
    delta = TangentVec(ba_map(prob, q).values - q.values)
    return fr_inner(delta, delta, q)


def dual_identity_residual(prob: BAProblem, q: ProbVec) -> float:
    """max_y |sum_x p(x) K_q(x, y) / q(y) - 1| = max_y |Tq(y)/q(y) - 1|.

    Zero exactly at fixed points; the certification metric used by the
    fixed-point solver and required by the spectral constructors.
    """
    _check_q(prob, q)
    kernels, _ = _raw_state(prob, q.values)
    tq = prob.source @ kernels
    return float(np.abs(tq / q.values - 1.0).max())
