"""Gamma precision beliefs and the VMP / hybrid message arithmetic.

Gamma(gamma | omega, nu) has natural parameters ``eta1 = -1/(2 omega)`` and
``eta2 = nu/2 - 1`` against sufficient statistics ``(gamma, log gamma)``;
its mean is ``nu * omega``. Observed bit nodes use BPSK means -1 / +1.

The scalar kernels (``digamma``, ``gamma_mean_log``, ``bit_log_heights``,
``residual_increment``) are numba-compiled so the decoder kernel shares them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
from numba import njit

from .factortable import CategoricalMessage, SparseFactorTable

MU0 = -1.0
MU1 = 1.0
LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def digamma(x):
    """psi(x) for x > 0: shift up to x >= 10, then the asymptotic series."""
    if x <= 0.0:
        return np.nan
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (
        1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))))
    return acc + math.log(x) - 0.5 * inv - series


@njit(cache=True)
def gamma_mean_log(eta1, eta2):
    """(<gamma>, <log gamma>) from natural parameters."""
    shape = eta2 + 1.0
    rate = -eta1
    return shape / rate, digamma(shape) - math.log(rate)


@njit(cache=True)
def bit_log_heights(x, e_gamma, e_log_gamma):
    """Log heights of the two BPSK Gaussians at x under the installed gamma moments."""
    base = -0.5 * e_gamma * x * x + 0.5 * (e_log_gamma - e_gamma - LOG_2PI)
    return base + e_gamma * MU0 * x, base + e_gamma * MU1 * x


@njit(cache=True)
def residual_increment(x, p0, p1):
    """First natural-parameter component of a bit node's message to the gamma node."""
    return -0.5 * (p0 * (x - MU0) ** 2 + p1 * (x - MU1) ** 2)


@dataclass(frozen=True)
class GammaMoments:
    e_gamma: float
    e_log_gamma: float

    @classmethod
    def point_mass(cls, precision: float) -> "GammaMoments":
        """Moments of a known precision (used for fixed / perfect-knowledge decoding)."""
        if precision <= 0:
            raise ValueError("precision must be positive")
        return cls(float(precision), math.log(precision))


@dataclass(frozen=True)
class GammaBelief:
    eta1: float
    eta2: float

    def __post_init__(self):
        if not (self.eta1 < 0 and self.eta2 > -1):
            raise ValueError(f"improper gamma belief: eta1={self.eta1}, eta2={self.eta2}")

    @classmethod
    def from_nu_omega(cls, nu: float, omega: float) -> "GammaBelief":
        return cls(-1.0 / (2.0 * omega), nu / 2.0 - 1.0)

    @classmethod
    def from_mean(cls, precision: float, nu: float = 2.0) -> "GammaBelief":
        """Prior with mean ``precision`` worth ``nu`` pseudo-observations."""
        return cls.from_nu_omega(nu, precision / nu)

    @property
    def nu(self) -> float:
        return 2.0 * (self.eta2 + 1.0)

    @property
    def omega(self) -> float:
        return -1.0 / (2.0 * self.eta1)

    @property
    def mean(self) -> float:
        return self.nu * self.omega

    @property
    def sd(self) -> float:
        return self.omega * math.sqrt(2.0 * self.nu)

    def natural(self) -> tuple[float, float]:
        return self.eta1, self.eta2


def gamma_moments(g: GammaBelief) -> GammaMoments:
    """Expected sufficient statistics ``(<gamma>, <log gamma>)``."""
    e, el = gamma_mean_log(g.eta1, g.eta2)
    return GammaMoments(e, el)


def default_prior(initial_precision: float = 1.0, nu: float = 2.0) -> GammaBelief:
    return GammaBelief.from_mean(initial_precision, nu)


@dataclass(frozen=True)
class CondGaussianBelief:
    """Observed bit node x_n | b_n, gamma kept in conditional form.

    ``gm`` and ``p_b`` are the expectations last installed by the gamma
    parent and the parity-check parent respectively.
    """

    x: float
    gm: GammaMoments
    p_b: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        p0, p1 = self.p_b
        if p0 < 0 or p1 < 0 or not math.isclose(p0 + p1, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"p_b must be a probability pair, got {self.p_b}")

    def precision(self) -> float:
        return self.gm.e_gamma


def vmp_parent_to_child_gamma(g: GammaBelief, node: CondGaussianBelief) -> CondGaussianBelief:
    return replace(node, gm=gamma_moments(g))


def vmp_child_to_parent_gamma(node: CondGaussianBelief) -> tuple[float, float]:
    p0, p1 = node.p_b
    return residual_increment(node.x, p0, p1), 0.5 * (p0 + p1)


def gamma_posterior(prior: GammaBelief, increments: Iterable[tuple[float, float]]) -> GammaBelief:
    e1, e2 = prior.eta1, prior.eta2
    for d1, d2 in increments:
        e1 += d1
        e2 += d2
    return GammaBelief(e1, e2)


def hybrid_child_to_parent_bit(node: CondGaussianBelief, var: int = 0) -> CategoricalMessage:
    """Categorical message toward the parity cluster; ``p_b`` deliberately unused."""
    return CategoricalMessage(var, bit_log_heights(node.x, node.gm.e_gamma, node.gm.e_log_gamma))


def hybrid_parent_to_child_bit(node: CondGaussianBelief, sepset_belief: SparseFactorTable) -> CondGaussianBelief:
    if len(sepset_belief.scope) != 1:
        raise ValueError("sepset belief must be over a single bit")
    if len(sepset_belief) == 0:
        raise ValueError("sepset belief is all-zero")
    p = sepset_belief.probabilities()
    return replace(node, p_b=(float(p[0]), float(p[1])))
