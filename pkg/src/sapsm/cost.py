"""Residual sublevel cost family, its subgradient, schedules and the
relaxed subgradient-projection map.

The cost at iteration n is ``(||Hx - y||^2 - rho_n)_+``: nonnegative, convex,
and zero exactly on the sublevel set of radius ``rho_n``. Normal-equation
terms (H'H, H'y, y'y) are cached once so each evaluation costs a single
matrix-vector product in the low-dimensional space.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch
from .geometry import BoxSet, project_box

_GRAM_TOL = 1e-12


class QuadraticResidualCost:
    """Quadratic data-fit residual ||Hx - y||^2 with cached Gram terms."""

    def __init__(self, H: np.ndarray, y: np.ndarray,
                 gram: np.ndarray | None = None, hty: np.ndarray | None = None):
        H = np.asarray(H, dtype=float)
        y = np.asarray(y, dtype=float)
        if H.ndim != 2 or y.ndim != 1 or H.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"H has shape {H.shape}, y has shape {y.shape}"
            )
        self.H = H
        self.y = y
        if gram is None:
            gram = H.T @ H
        elif not np.allclose(gram, H.T @ H, rtol=0, atol=_GRAM_TOL):
            raise ConfigError("supplied Gram cache does not match H")
        if hty is None:
            hty = H.T @ y
        elif not np.allclose(hty, H.T @ y, rtol=0, atol=_GRAM_TOL):
            raise ConfigError("supplied H'y cache does not match H, y")
        self.gram = gram
        self.hty = hty
        self.yty = float(y @ y)

    @property
    def dim_in(self) -> int:
        return self.H.shape[1]

    @property
    def dim_out(self) -> int:
        return self.H.shape[0]

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim_in,):
            raise DimensionMismatch(
                f"x has shape {x.shape}, expected ({self.dim_in},)"
            )
        return x

    def eval(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Residual ||Hx - y||^2 and its gradient 2H'(Hx - y), sharing one
        Gram matvec. The residual is clamped at 0 against cancellation."""
        x = self._check(x)
        gx = self.gram @ x
        resid = float(x @ gx - 2.0 * (self.hty @ x) + self.yty)
        return max(resid, 0.0), 2.0 * (gx - self.hty)

    def residual_sq(self, x: np.ndarray) -> float:
        x = self._check(x)
        resid = float(x @ (self.gram @ x) - 2.0 * (self.hty @ x) + self.yty)
        return max(resid, 0.0)


def theta(cost: QuadraticResidualCost, x: np.ndarray, rho: float) -> float:
    """Cost value (||Hx - y||^2 - rho)_+ at level rho."""
    if rho < 0:
        raise ConfigError("rho must be nonnegative")
    return max(cost.residual_sq(x) - rho, 0.0)


def theta_subgradient(cost: QuadraticResidualCost, x: np.ndarray) -> np.ndarray:
    """Subgradient 2H'(Hx - y), valid wherever the cost is positive."""
    return cost.eval(x)[1]


def grad_tolerance(x: np.ndarray) -> float:
    # scale-aware stand-in for the exact test "subgradient != 0"
    return 1e-12 * (1.0 + math.sqrt(float(x @ x)))


def relaxed_step(z: np.ndarray, theta_val: float, grad: np.ndarray,
                 mu: float, box: BoxSet) -> np.ndarray:
    """One relaxed subgradient-projection step followed by the box projection."""
    if theta_val > 0.0:
        gn2 = float(grad @ grad)
        if math.sqrt(gn2) > grad_tolerance(z):
            z = z - (mu * theta_val / gn2) * grad
    return project_box(z, box)


def apsm_map(cost: QuadraticResidualCost, x: np.ndarray, rho: float,
             mu: float, box: BoxSet) -> np.ndarray:
    """The iteration map: subgradient projection toward the rho-sublevel set,
    relaxed by mu, then clamped to the box."""
    if not 0.0 < mu < 2.0:
        raise ConfigError("mu must lie in (0, 2)")
    if rho < 0:
        raise ConfigError("rho must be nonnegative")
    resid, grad = cost.eval(x)
    return relaxed_step(np.asarray(x, dtype=float),
                        max(resid - rho, 0.0), grad, mu, box)


@dataclass(frozen=True)
class RhoSchedule:
    """Geometric radius schedule rho0 * growth^n, saturating at rho_max."""

    rho0: float
    growth: float = 1.0
    rho_max: float = 1e12

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ConfigError("rho0 must be positive")
        if self.growth < 1.0:
            raise ConfigError("growth must be >= 1 (radii must not shrink)")
        if self.rho_max < self.rho0:
            raise ConfigError("rho_max must be >= rho0")


def rho_at(schedule: RhoSchedule, n: int) -> float:
    if n < 0:
        raise ConfigError("iteration index must be nonnegative")
    if schedule.growth == 1.0:
        return schedule.rho0
    # cap the exponent before exponentiating so long runs cannot overflow
    n_sat = math.log(schedule.rho_max / schedule.rho0) / math.log(schedule.growth)
    if n >= n_sat:
        return schedule.rho_max
    return schedule.rho0 * schedule.growth**n


@dataclass(frozen=True)
class BetaSchedule:
    """Perturbation scaling sequence: geometric b^n, constant, or zero."""

    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "constant", "geometric"):
            raise ConfigError(f"unknown beta schedule kind {self.kind!r}")
        if self.kind == "geometric" and not 0.0 < self.value < 1.0:
            raise ConfigError("geometric beta needs b in (0, 1)")
        if self.kind == "constant" and self.value < 0.0:
            raise ConfigError("constant beta must be nonnegative")

    @classmethod
    def none(cls) -> "BetaSchedule":
        return cls("none", 0.0)

    @classmethod
    def constant(cls, value: float) -> "BetaSchedule":
        return cls("constant", value)

    @classmethod
    def geometric(cls, base: float) -> "BetaSchedule":
        return cls("geometric", base)

    def at(self, n: int) -> float:
        if self.kind == "geometric":
            return self.value**n
        if self.kind == "constant":
            return self.value
        return 0.0

    @property
    def summable(self) -> bool:
        """Whether the full series converges (the resilience hypothesis)."""
        return self.kind != "constant" or self.value == 0.0

    def series_sum(self, n_terms: int) -> float:
        """Sum of the full series when summable, else of the finite run."""
        if self.kind == "geometric":
            return 1.0 / (1.0 - self.value)
        if self.kind == "constant":
            return self.value * n_terms
        return 0.0


VARIANTS = ("plain", "l2", "l1")


@dataclass(frozen=True)
class ApsmConfig:
    """Full parameterization of one superiorized run."""

    rho: RhoSchedule
    mu: float = 0.7
    beta: BetaSchedule = field(default_factory=BetaSchedule.none)
    tau: float = 0.0
    variant: str = "plain"
    max_iters: int = 300
    stop_eps: float = 0.0
    eps1: float = 0.05
    eps2: float = 0.05

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ConfigError("relaxation margins must be positive")
        if not self.eps1 <= self.mu <= 2.0 - self.eps2:
            raise ConfigError(
                f"mu={self.mu} outside [{self.eps1}, {2.0 - self.eps2}]"
            )
        if self.tau < 0:
            raise ConfigError("tau must be nonnegative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.stop_eps < 0:
            raise ConfigError("stop_eps must be nonnegative")

    def config_hash(self) -> str:
        payload = json.dumps(
            {
                "rho": [self.rho.rho0, self.rho.growth, self.rho.rho_max],
                "mu": self.mu,
                "beta": [self.beta.kind, self.beta.value],
                "tau": self.tau,
                "variant": self.variant,
                "max_iters": self.max_iters,
                "stop_eps": self.stop_eps,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


def standard_config(variant: str, max_iters: int = 300,
                    stop_eps: float = 0.0) -> ApsmConfig:
    """Default run parameters per variant.

    All variants share the radius schedule 5e-5 * 1.06^n and relaxation 0.7.
    The hard-slicing variant scales its perturbations by 0.9^n; the
    soft-thresholded variant uses tau 0.005 with a constant 0.9999 scaling
    (not summable, so the resilience guarantee is void and flagged as such
    in trace metadata).
    """
    rho = RhoSchedule(5e-5, 1.06)
    if variant == "plain":
        beta, tau = BetaSchedule.none(), 0.0
    elif variant == "l2":
        beta, tau = BetaSchedule.geometric(0.9), 0.0
    elif variant == "l1":
        beta, tau = BetaSchedule.constant(0.9999), 0.005
    else:
        raise ConfigError(f"unknown variant {variant!r}")
    return ApsmConfig(rho=rho, mu=0.7, beta=beta, tau=tau, variant=variant,
                      max_iters=max_iters, stop_eps=stop_eps)
