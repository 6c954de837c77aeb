"""Probability-simplex primitives.

Distributions live in the interior of the simplex, tangent vectors in the
zero-sum hyperplane.  The Fisher-Rao inner product <u, v>_q = sum u v / q
turns the tangent space into the weighted Hilbert space used everywhere
else in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProbVec",
    "TangentVec",
    "fr_inner",
    "divergence",
    "project_tangent",
    "tangent_basis",
    "random_prob_vec",
    "random_tangent_vec",
    "POSITIVITY_EPS",
    "NORMALIZATION_TOL",
]

# Underflow guard: the flow preserves the interior analytically, but floating
# point needs a hard floor below which an entry counts as "left the simplex".
POSITIVITY_EPS = 1e-300
NORMALIZATION_TOL = 1e-12

DIVERGENCE_KINDS = ("chi2", "kl", "jeffreys", "l1", "l2")


def _as_float_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    return arr


@dataclass(frozen=True)
class ProbVec:
    """Strictly positive distribution on the output alphabet."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_vector(self.values)
        if arr.size < 2:
            raise ValueError("alphabet size must be >= 2")
        if arr.min() < POSITIVITY_EPS:
            raise ValueError(
                f"distribution is not interior: min entry {arr.min():.3e}"
            )
        total = arr.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"entries sum to {total!r}, not 1")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.size

    def renormalized(self) -> "ProbVec":
        """Divide by the sum; used to absorb machine-epsilon drift."""
        return ProbVec(self.values / self.values.sum())

    @staticmethod
    def normalize(values) -> "ProbVec":
        arr = _as_float_vector(values)
        return ProbVec(arr / arr.sum())

    def __eq__(self, other):
        return isinstance(other, ProbVec) and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class TangentVec:
    """Direction of motion within the simplex: entries sum to zero."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_vector(self.values)
        if abs(arr.sum()) > NORMALIZATION_TOL * max(1.0, np.abs(arr).max()):
            raise ValueError(f"entries sum to {arr.sum()!r}, not 0")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.size


def _check_dims(*dims: int):
    if len(set(dims)) != 1:
        raise ValueError(f"dimension mismatch: {dims}")


def fr_inner(u: TangentVec, v: TangentVec, q: ProbVec) -> float:
    """Fisher-Rao inner product sum_y u(y) v(y) / q(y)."""
    _check_dims(u.dim, v.dim, q.dim)
    return float(np.sum(u.values * v.values / q.values))


def divergence(kind: str, r: ProbVec, q: ProbVec) -> float:
    """Divergence between distributions r and q.

    kind is one of chi2 (Pearson), kl, jeffreys (symmetrised KL),
    l1, l2.  All are >= 0 and vanish iff r == q.
    """
    _check_dims(r.dim, q.dim)
    rv, qv = r.values, q.values
    if kind == "chi2":
        return float(np.sum((rv - qv) ** 2 / qv))
    if kind == "kl":
        return float(np.sum(rv * np.log(rv / qv)))
    if kind == "jeffreys":
        return float(np.sum((rv - qv) * np.log(rv / qv)))
    if kind == "l1":
        return float(np.abs(rv - qv).sum())
    if kind == "l2":
        return float(np.linalg.norm(rv - qv))
    raise ValueError(f"unknown divergence kind {kind!r}; expected one of {DIVERGENCE_KINDS}")


def project_tangent(v) -> TangentVec:
    """Orthogonal projection of a raw vector onto the zero-sum hyperplane."""
    arr = _as_float_vector(v)
    return TangentVec(arr - arr.mean())


def tangent_basis(n: int) -> np.ndarray:
    """Deterministic orthonormal (Helmert) basis of the zero-sum hyperplane.

    Returns an n x (n-1) matrix whose columns are Euclidean-orthonormal and
    sum to zero.  Used as the fixed coordinate frame for every tangent-space
    eigensolve so eigenvector coordinates are reproducible.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    basis = np.zeros((n, n - 1))
    for k in range(1, n):
        basis[:k, k - 1] = 1.0
        basis[k, k - 1] = -k
        basis[:, k - 1] /= np.sqrt(k * (k + 1))
    return basis


def random_prob_vec(rng: np.random.Generator, n: int, spread: float = 1.0) -> ProbVec:
    """Random interior distribution; spread > 0 controls non-uniformity."""
    raw = np.exp(spread * rng.standard_normal(n))
    return ProbVec(raw / raw.sum())


def random_tangent_vec(rng: np.random.Generator, n: int) -> TangentVec:
    v = rng.standard_normal(n)
    return project_tangent(v)
