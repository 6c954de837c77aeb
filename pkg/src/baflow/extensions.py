"""Information-theoretic application formulas: MIMO water-filling gaps and
Wyner-Ziv effective temperature.

The two circulating MIMO gap conventions -- 1/(1 + 2 beta lambda_i P_i) per
direction, and 1/(2 beta sigma_{P,i}^2) in source-variance form -- are not
obviously identical; both are computed and reported side by side, no
reconciliation is guessed.  The Wyner-Ziv variance ODE composes the scalar
Gaussian field with the state-dependent effective inverse temperature;
the composition is an interpretation rather than a derived equation and
is labelled as interpreted in outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianParams, s_tilde

__all__ = [
    "MimoSpec",
    "WynerZivSpec",
    "water_filling",
    "mimo_direction_gaps",
    "MimoGapReport",
    "wz_effective_beta",
    "wz_rate_gap",
    "wz_variance_ode",
]


@dataclass(frozen=True)
class MimoSpec:
    channel_gains: np.ndarray
    total_power: float
    beta: float

    def __post_init__(self):
        gains = np.asarray(self.channel_gains, dtype=float)
        if gains.ndim != 1 or gains.min() <= 0:
            raise ValueError("channel gains must be positive")
        if self.total_power <= 0:
            raise ValueError("total power must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        gains = gains.copy()
        gains.flags.writeable = False
        object.__setattr__(self, "channel_gains", gains)


@dataclass(frozen=True)
class WynerZivSpec:
    sigma2: float
    rho: float
    beta: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


def water_filling(spec: MimoSpec) -> np.ndarray:
    """Classical allocation P_i = max(mu - 1/lambda_i, 0), sum P_i = P.

    The water level is found by the sorted-threshold search: activate
    channels in decreasing gain order until the level implied by the
    active set drops below the next channel's inverse gain.
    """
    inv = 1.0 / spec.channel_gains
    order = np.argsort(inv)
    sorted_inv = inv[order]
    n = inv.size
    k = n
    for m in range(1, n + 1):
        mu = (spec.total_power + sorted_inv[:m].sum()) / m
        if m < n and mu > sorted_inv[m]:
            continue
        k = m
        break
    mu = (spec.total_power + sorted_inv[:k].sum()) / k
    powers = np.zeros(n)
    powers[order[:k]] = mu - sorted_inv[:k]
    return powers


@dataclass(frozen=True)
class MimoGapReport:
    per_direction: np.ndarray        # 1/(1 + 2 beta lambda_i P_i) on active directions
    per_direction_variance_form: np.ndarray  # 1/(2 beta lambda_i P_i), the alternative
    system_gap: float
    stiffness_ratio: float
    active: np.ndarray


def mimo_direction_gaps(spec: MimoSpec, powers: np.ndarray) -> MimoGapReport:
    """Per-direction spectral gaps for the allocated directions.

    Inactive directions (zero power) are excluded; the system gap is the
    minimum over active directions and the stiffness ratio the max/min
    of the active gaps.  Both circulating gap conventions are reported:
    g_i = 1/(1 + 2 beta lambda_i P_i) and the source-variance form
    1/(2 beta sigma_i^2) with sigma_i^2 = lambda_i P_i.
    """
    powers = np.asarray(powers, dtype=float)
    active = powers > 0
    if not active.any():
        raise ValueError("no active direction (total power zero?)")
    load = spec.channel_gains[active] * powers[active]
    gaps = 1.0 / (1.0 + 2.0 * spec.beta * load)
    gaps_var = 1.0 / (2.0 * spec.beta * load)
    return MimoGapReport(
        per_direction=gaps,
        per_direction_variance_form=gaps_var,
        system_gap=float(gaps.min()),
        stiffness_ratio=float(gaps.max() / gaps.min()),
        active=active,
    )


def wz_effective_beta(spec: WynerZivSpec, s: float) -> float:
    """State-dependent effective inverse temperature

        beta_eff(s, rho) = beta sigma^4 (1 - rho^2)^2 / (sigma^2 - rho^2 s)^2,

    at most beta for s <= sigma^2, with equality iff rho = 0 (side
    information cools the Gibbs update)."""
    denom = spec.sigma2 - spec.rho ** 2 * s
    if denom <= 0:
        raise ValueError("rho^2 s must be below sigma^2")
    return spec.beta * spec.sigma2 ** 2 * (1 - spec.rho ** 2) ** 2 / denom ** 2


def wz_rate_gap(rho: float) -> float:
    """Side-information rate gap I(X;Y) = 0.5 log 1/(1 - rho^2), in nats."""
    if not abs(rho) < 1:
        raise ValueError("|rho| must be < 1")
    return float(0.5 * np.log(1.0 / (1.0 - rho ** 2)))


def wz_variance_ode(
    spec: WynerZivSpec, s0: float, dt: float = 0.01, t_max: float = 20.0
) -> tuple[np.ndarray, np.ndarray]:
    """RK4 series of the interpreted WZ variance ODE
    s' = stilde(s, beta_eff(s, rho)) - s."""
    if s0 < 0:
        raise ValueError("s0 must be nonnegative")
    if spec.rho ** 2 * s0 >= spec.sigma2:
        raise ValueError("s0 outside the valid region rho^2 s < sigma^2")

    def field(s: float) -> float:
        beta_eff = wz_effective_beta(spec, s)
        return s_tilde(s, GaussianParams(sigma2=spec.sigma2, beta=beta_eff)) - s

    n = int(round(t_max / dt))
    taus = np.linspace(0.0, n * dt, n + 1)
    out = np.empty(n + 1)
    out[0] = s = s0
    for k in range(1, n + 1):
        k1 = field(s)
        k2 = field(s + 0.5 * dt * k1)
        k3 = field(s + 0.5 * dt * k2)
        k4 = field(s + dt * k3)
        s = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if spec.rho ** 2 * s >= spec.sigma2:
            raise ValueError("trajectory crossed the valid-region boundary")
        out[k] = s
    return taus, out
