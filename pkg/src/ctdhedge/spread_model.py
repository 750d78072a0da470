"""Hull-White collateral-spread model: calibration and Gaussian moment analytics.

Each collateral spread (and the domestic short rate) follows one-factor
Hull-White dynamics

    dq(t) = kappa * (theta(t) - q(t)) dt + xi dW(t),

written throughout as the decomposition q(t) = qhat(t) + u(t) with qhat the
deterministic forecast curve and u a centred Ornstein-Uhlenbeck process
started at zero.  All first and second moments of spreads, their time
integrals and the induced zero-coupon bond factors are available in closed
form and implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .curves import SpreadCurve

__all__ = [
    "HullWhiteSpec",
    "CorrelationMatrix",
    "MarketModel",
    "theta_continuous",
    "theta_piecewise",
    "spread_mean",
    "mean_under_piecewise_theta",
    "spread_cross_covariance",
    "integral_covariance",
    "bond_moment",
    "joint_bond_moment",
]

# smallest eigenvalue allowed before a correlation matrix is rejected
_PSD_TOL = -1e-10


class ModelValidationError(ValueError):
    """Raised when model inputs violate a structural invariant."""


@dataclass(frozen=True)
class HullWhiteSpec:
    """
    One Hull-White process: mean reversion, volatility and forecast curve.

    Parameters
    ----------
    kappa : float
        Speed of mean reversion (1/years), strictly positive.
    xi : float
        Volatility (absolute rate per sqrt-year).  Zero is allowed and
        collapses the process onto its forecast curve.
    mean_curve : SpreadCurve
        Deterministic forecast qhat(t); also the process mean.
    initial_value : float, optional
        Level at the curve start.  Defaults to the curve value there and
        must match it when given explicitly.
    """

    kappa: float
    xi: float
    mean_curve: SpreadCurve
    initial_value: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not self.kappa > 0.0:
            raise ModelValidationError(f"kappa must be positive, got {self.kappa}")
        if self.xi < 0.0:
            raise ModelValidationError(f"xi must be nonnegative, got {self.xi}")
        anchor = self.mean_curve(self.mean_curve.start)
        if self.initial_value is None:
            object.__setattr__(self, "initial_value", anchor)
        elif abs(self.initial_value - anchor) > 1e-12:
            raise ModelValidationError(
                f"initial_value {self.initial_value} does not match the curve "
                f"start level {anchor}"
            )

    @property
    def t0(self) -> float:
        return self.mean_curve.start

    def variance(self, t, start: float | None = None):
        """Marginal variance of the spread at time t (accrued from `start`)."""
        s = self.t0 if start is None else start
        dt = np.asarray(t, dtype=float) - s
        if np.any(dt < -1e-12):
            raise ModelValidationError("variance requested before the anchor time")
        dt = np.maximum(dt, 0.0)
        out = self.xi**2 * (-np.expm1(-2.0 * self.kappa * dt)) / (2.0 * self.kappa)
        if np.asarray(t).ndim == 0:
            return float(out)
        return out

    def bumped_xi(self, new_xi: float) -> "HullWhiteSpec":
        return HullWhiteSpec(self.kappa, new_xi, self.mean_curve, None)

    def bumped_level(self, delta: float) -> "HullWhiteSpec":
        return HullWhiteSpec(self.kappa, self.xi, self.mean_curve.shifted(delta), None)


@dataclass(frozen=True)
class CorrelationMatrix:
    """
    Instantaneous correlations of the Brownian drivers.

    Index 0 is the domestic-rate driver, indices 1..N the spread drivers.
    """

    entries: np.ndarray

    def __init__(self, entries):
        m = np.asarray(entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelValidationError("correlation matrix must be square")
        if not np.allclose(m, m.T, atol=1e-12):
            raise ModelValidationError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(m), 1.0, atol=1e-12):
            raise ModelValidationError("correlation matrix must have unit diagonal")
        if np.any(np.abs(m) > 1.0 + 1e-12):
            raise ModelValidationError("correlations must lie in [-1, 1]")
        smallest = float(np.linalg.eigvalsh(m)[0])
        if smallest < _PSD_TOL:
            raise ModelValidationError(
                f"correlation matrix is not positive semidefinite "
                f"(smallest eigenvalue {smallest:.3e})"
            )
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def from_single(cls, rho_12: float, n: int = 2, rho_0i: Sequence[float] | None = None):
        """Convenience builder for two spreads with one mutual correlation."""
        if n != 2:
            raise ModelValidationError("from_single builds two-spread matrices only")
        m = np.eye(3)
        m[1, 2] = m[2, 1] = rho_12
        if rho_0i is not None:
            m[0, 1] = m[1, 0] = rho_0i[0]
            m[0, 2] = m[2, 0] = rho_0i[1]
        return cls(m)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def spread(self, i: int, j: int) -> float:
        """Correlation between spread drivers i and j (1-based)."""
        return float(self.entries[i, j])


@dataclass(frozen=True)
class MarketModel:
    """Domestic rate plus N collateral spreads with their correlations."""

    domestic: HullWhiteSpec
    spreads: tuple[HullWhiteSpec, ...]
    correlations: CorrelationMatrix

    def __init__(self, domestic, spreads, correlations):
        spreads = tuple(spreads)
        if len(spreads) < 1:
            raise ModelValidationError("at least one collateral spread is required")
        if correlations.size != len(spreads) + 1:
            raise ModelValidationError(
                f"correlation matrix size {correlations.size} does not match "
                f"{len(spreads)} spreads plus the domestic driver"
            )
        t0 = domestic.t0
        horizon = domestic.mean_curve.end
        for s in spreads:
            if abs(s.t0 - t0) > 1e-12:
                raise ModelValidationError("all processes must share the same start time")
            horizon = min(horizon, s.mean_curve.end)
        object.__setattr__(self, "domestic", domestic)
        object.__setattr__(self, "spreads", spreads)
        object.__setattr__(self, "correlations", correlations)

    @property
    def n_spreads(self) -> int:
        return len(self.spreads)

    @property
    def t0(self) -> float:
        return self.domestic.t0

    @property
    def horizon(self) -> float:
        """Largest maturity covered by every curve in the model."""
        return min([self.domestic.mean_curve.end] + [s.mean_curve.end for s in self.spreads])

    def spread(self, i: int) -> HullWhiteSpec:
        """Spread process by 1-based index; index 0 is not a stored process."""
        if not 1 <= i <= self.n_spreads:
            raise ModelValidationError(f"spread index {i} out of range 1..{self.n_spreads}")
        return self.spreads[i - 1]

    def rho(self, i: int, j: int) -> float:
        return float(self.correlations.entries[i, j])

    def with_spread(self, i: int, spec: HullWhiteSpec) -> "MarketModel":
        spreads = list(self.spreads)
        spreads[i - 1] = spec
        return MarketModel(self.domestic, spreads, self.correlations)

    def spread_covariance(self, t, start: float | None = None) -> np.ndarray:
        """Covariance matrix of (q_1(t), ..., q_N(t)), noise from `start`."""
        n = self.n_spreads
        cov = np.empty((n, n))
        for i in range(1, n + 1):
            for j in range(i, n + 1):
                c = spread_cross_covariance(
                    self.spread(i), self.spread(j), self.rho(i, j), t, t, start=start
                )
                cov[i - 1, j - 1] = cov[j - 1, i - 1] = c
        return cov


# ---------------------------------------------------------------------------
# long-term mean calibration
# ---------------------------------------------------------------------------

def theta_continuous(spec: HullWhiteSpec, t: float) -> float:
    """
    Long-term mean that reproduces the forecast curve in continuous time.

    theta(t) = qhat(t) + qhat'(t) / kappa, with the left-hand slope at curve
    kinks.  With this choice the process mean equals qhat(t) at every time.
    """
    return float(spec.mean_curve(t) + spec.mean_curve.derivative(t) / spec.kappa)


def theta_piecewise(spec: HullWhiteSpec, grid: Sequence[float]) -> np.ndarray:
    """
    Piecewise-constant long-term mean hitting the forecast at grid nodes.

    Returns one value per interval (t_{k-1}, t_k].  The value on interval k
    is chosen so that the analytic process mean equals qhat(t_k) exactly at
    every node, independent of the behaviour between nodes.  When
    kappa * dt underflows the exponential difference, the equivalent
    arithmetic-slope limit qhat(t_k) + slope / kappa is used instead.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise ModelValidationError("grid must hold at least two ascending times")
    if not np.all(np.diff(g) > 0.0):
        raise ModelValidationError("grid must be strictly increasing")
    q = np.asarray(spec.mean_curve(g), dtype=float)
    dt = np.diff(g)
    x = spec.kappa * dt
    growth = np.expm1(x)  # e^{kappa dt} - 1, stable for small x
    out = np.empty(dt.size)
    degenerate = np.abs(growth) < 1e-14 * np.exp(np.maximum(x, 0.0))
    safe = ~degenerate
    # (qhat_k e^{kappa t_k} - qhat_{k-1} e^{kappa t_{k-1}}) / (e^{kappa t_k} - e^{kappa t_{k-1}}),
    # rescaled by e^{-kappa t_{k-1}} for overflow safety
    out[safe] = (q[1:][safe] * (growth[safe] + 1.0) - q[:-1][safe]) / growth[safe]
    if np.any(degenerate):
        slope = (q[1:] - q[:-1]) / dt
        out[degenerate] = q[1:][degenerate] + slope[degenerate] / spec.kappa
    return out


def mean_under_piecewise_theta(
    spec: HullWhiteSpec, grid: Sequence[float], theta: Sequence[float]
) -> np.ndarray:
    """
    Analytic process mean at grid nodes under a piecewise-constant theta.

    Closed-form recursion m_k = m_{k-1} e^{-kappa dt} + theta_k (1 - e^{-kappa dt});
    used to verify that `theta_piecewise` reproduces the forecast exactly.
    """
    g = np.asarray(grid, dtype=float)
    th = np.asarray(theta, dtype=float)
    if th.size != g.size - 1:
        raise ModelValidationError("need one theta value per grid interval")
    out = np.empty(g.size)
    out[0] = spec.initial_value
    decay = np.exp(-spec.kappa * np.diff(g))
    for k in range(th.size):
        out[k + 1] = out[k] * decay[k] + th[k] * (1.0 - decay[k])
    return out


def spread_mean(spec: HullWhiteSpec, t: float) -> float:
    """Process mean at time t, i.e. the forecast curve value."""
    return float(spec.mean_curve(t))


# ---------------------------------------------------------------------------
# second-order analytics
# ---------------------------------------------------------------------------

def spread_cross_covariance(
    spec_i: HullWhiteSpec,
    spec_j: HullWhiteSpec,
    rho_ij: float,
    u: float,
    v: float,
    start: float | None = None,
) -> float:
    """
    Cov[q_i(u), q_j(v)] for two Hull-White spreads with driver correlation rho.

    Both processes carry no noise before `start` (default: common curve
    start), so the covariance vanishes at u = v = start.
    """
    t0 = spec_i.t0 if start is None else start
    if u < t0 - 1e-12 or v < t0 - 1e-12:
        raise ModelValidationError("covariance times must not precede the start")
    ki, kj = spec_i.kappa, spec_j.kappa
    c = ki + kj
    m = min(u, v)
    # xi_i xi_j rho / (ki+kj) * e^{-(ki u + kj v)} (e^{c min(u,v)} - e^{c t0}),
    # evaluated as expm1 of the elapsed time for stability
    scale = spec_i.xi * spec_j.xi * rho_ij / c
    return float(scale * math.exp(-(ki * (u - m) + kj * (v - m))) * (-math.expm1(-c * (m - t0))))


def integral_covariance(
    spec_i: HullWhiteSpec,
    spec_j: HullWhiteSpec,
    rho_ij: float,
    t0: float,
    T: float,
) -> float:
    """
    Cov[int_t0^T q_i(s) ds, int_t0^T q_j(s) ds] in closed form.

    Derived by integrating the cross-covariance kernel twice (the kernel is
    exponential in both arguments, so both integrals telescope).  The i = j
    case reduces to the integrated Ornstein-Uhlenbeck variance.
    """
    if T < t0:
        raise ModelValidationError("need T >= t0")
    tau = T - t0
    if tau == 0.0 or rho_ij == 0.0 or spec_i.xi == 0.0 or spec_j.xi == 0.0:
        return 0.0
    xi_ = spec_i.kappa * tau
    xj_ = spec_j.kappa * tau
    # bracket in cancellation-free form: each term is O(1) as kappa*tau -> 0
    hi = (xi_ + math.expm1(-xi_)) / xi_**2
    hj = (xj_ + math.expm1(-xj_)) / xj_**2
    ei = -math.expm1(-xi_)
    ej = -math.expm1(-xj_)
    bracket = tau * tau * (hi + hj - ei * ej / (xi_ * xj_))
    return float(spec_i.xi * spec_j.xi * rho_ij / (spec_i.kappa + spec_j.kappa) * bracket)


def bond_moment(spec: HullWhiteSpec, t0: float, T: float, multiplier: int = 1) -> float:
    """
    E[exp(-m * int_t0^T q(s) ds)] for m in {1, 2}.

    The integral of a Hull-White spread is Gaussian, so the expectation is
    the lognormal moment exp(-m * int qhat + m^2/2 * Var[int u]).
    """
    if multiplier not in (1, 2):
        raise ModelValidationError("multiplier must be 1 or 2")
    if T < t0:
        raise ModelValidationError("need T >= t0")
    mean_part = spec.mean_curve.integral(t0, T)
    var_part = integral_covariance(spec, spec, 1.0, t0, T)
    return float(math.exp(-multiplier * mean_part + 0.5 * multiplier**2 * var_part))


def joint_bond_moment(
    spec_i: HullWhiteSpec,
    spec_j: HullWhiteSpec,
    rho_ij: float,
    t0: float,
    T: float,
) -> float:
    """
    E[exp(-int q_i) * exp(-int q_j)] over [t0, T].

    The sum of the two Gaussian integrals is Gaussian with mean
    int (qhat_i + qhat_j) and variance v_i + v_j + 2 rho-covariance, so the
    expectation is again a lognormal moment.
    """
    if T < t0:
        raise ModelValidationError("need T >= t0")
    mu = -(spec_i.mean_curve.integral(t0, T) + spec_j.mean_curve.integral(t0, T))
    v = (
        integral_covariance(spec_i, spec_i, 1.0, t0, T)
        + integral_covariance(spec_j, spec_j, 1.0, t0, T)
        + 2.0 * integral_covariance(spec_i, spec_j, rho_ij, t0, T)
    )
    return float(math.exp(mu + 0.5 * v))
