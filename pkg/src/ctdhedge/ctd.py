"""Cheapest-to-deliver discount factors.

Two pricing routes are implemented:

* a deterministic route that integrates the running maximum of the forecast
  curves exactly (they are piecewise linear), and
* a stochastic route approximating E[exp(-int max(0, q_1..q_N))] through a
  per-time common-factor decomposition of the spread vector, semi-analytic
  moments of the resulting maximum, and a second-order correction built
  from a diffusion proxy for the variance of the time integral.

The same machinery prices the shifted maximum exp(-int max(q_i, q_1+q_i,
..., q_N+q_i)) needed by the hedging covariances, and conditional factors
re-anchored at a simulated market state for portfolio revaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .curves import SpreadCurve, max_curve_integral
from .spread_model import MarketModel, ModelValidationError

__all__ = [
    "GaussianVectorSnapshot",
    "CommonFactorState",
    "MaxMoments",
    "fit_gamma",
    "max_cdf",
    "max_moments",
    "integral_variance_estimator",
    "ctd_deterministic",
    "ctd_common_factor",
    "ctd_common_factor_detailed",
    "shifted_max_ctd",
    "CommonFactorResult",
    "ConditionalCtdTable",
]

_GAMMA_CAP = 1.0 - 1e-9
_PANEL_HALF_WIDTH = 8.5  # standard deviations covered by each Gaussian panel
_PANEL_NODES = 96
_CONV_NODES = 128  # convolution nodes for the explicit cdf
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class NumericalError(RuntimeError):
    """Raised when a quadrature or decomposition step degenerates."""


def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


_PANEL_X, _PANEL_W = _gauss_legendre(_PANEL_NODES)
_CONV_X, _CONV_W = _gauss_legendre(_CONV_NODES)


def _phi(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


# ---------------------------------------------------------------------------
# common factor decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianVectorSnapshot:
    """Joint Gaussian law of the spread vector at one fixed time."""

    means: np.ndarray
    covariance: np.ndarray
    time: float

    def __init__(self, means, covariance, time: float):
        mu = np.atleast_1d(np.asarray(means, dtype=float))
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if cov.shape != (mu.size, mu.size):
            raise ModelValidationError("covariance shape does not match means")
        if not np.allclose(cov, cov.T, atol=1e-14 * max(1.0, float(np.abs(cov).max()))):
            raise ModelValidationError("covariance must be symmetric")
        scale = max(float(np.abs(cov).max()), 1e-30)
        if float(np.linalg.eigvalsh(cov)[0]) < -1e-10 * max(scale, 1.0):
            raise ModelValidationError("covariance is not positive semidefinite")
        mu.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "time", float(time))

    @property
    def size(self) -> int:
        return self.means.size


def _golden_section(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Scalar golden-section minimizer on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_gamma(snapshot: GaussianVectorSnapshot) -> float:
    """
    Common-factor loading replicating the covariance structure best.

    For a single spread there is nothing to share and gamma is 0.  With two
    spreads the single off-diagonal entry can be matched exactly whenever
    it is nonnegative and not larger than the smallest marginal variance;
    outside that range the value is clamped into [0, 1).  With three or
    more spreads gamma minimizes the Frobenius distance between the
    implied and the exact covariance matrix (golden-section search).
    """
    n = snapshot.size
    if n == 1:
        return 0.0
    cov = snapshot.covariance
    sig_min_sq = float(np.min(np.diag(cov)))
    if sig_min_sq <= 0.0:
        return 0.0
    off = cov[~np.eye(n, dtype=bool)]
    if n == 2:
        return float(np.clip(off[0] / sig_min_sq, 0.0, _GAMMA_CAP))

    def frob(gamma: float) -> float:
        return float(np.sum((gamma * sig_min_sq - off) ** 2))

    return _golden_section(frob, 0.0, _GAMMA_CAP)


@dataclass(frozen=True)
class CommonFactorState:
    """
    One-time decomposition q_i = C + A_i into a shared and own factors.

    C is centred Gaussian with variance gamma * sigma_min_sq, each A_i is
    Gaussian with the component mean and the residual variance, and all
    factors are independent.  The maximum of interest is
    max(0, C + max_i A_i) when `floor_at_zero` is set and C + max_i A_i
    otherwise (the shifted-maximum variant).
    """

    time: float
    gamma: float
    sigma_min_sq: float
    component_means: np.ndarray
    component_vars: np.ndarray
    common_var: float
    floor_at_zero: bool = True

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.component_means, dtype=float))
        res = np.atleast_1d(np.asarray(self.component_vars, dtype=float))
        if mu.size != res.size:
            raise ModelValidationError("component means and variances disagree in size")
        if not 0.0 <= self.gamma < 1.0:
            raise ModelValidationError("gamma must lie in [0, 1)")
        if self.common_var < 0.0 or np.any(res < 0.0):
            raise ModelValidationError("negative variance in common factor state")
        mu.setflags(write=False)
        res.setflags(write=False)
        object.__setattr__(self, "component_means", mu)
        object.__setattr__(self, "component_vars", res)

    @classmethod
    def from_snapshot(
        cls,
        snapshot: GaussianVectorSnapshot,
        floor_at_zero: bool = True,
        gamma: float | None = None,
    ) -> "CommonFactorState":
        if gamma is None:
            gamma = fit_gamma(snapshot)
        sig_min_sq = float(np.min(np.diag(snapshot.covariance)))
        common_var = gamma * sig_min_sq
        residual = np.maximum(np.diag(snapshot.covariance) - common_var, 0.0)
        return cls(
            time=snapshot.time,
            gamma=gamma,
            sigma_min_sq=sig_min_sq,
            component_means=snapshot.means.copy(),
            component_vars=residual,
            common_var=common_var,
            floor_at_zero=floor_at_zero,
        )

    @property
    def size(self) -> int:
        return self.component_means.size

    def total_vars(self) -> np.ndarray:
        """Marginal variances of the reconstructed components."""
        return self.component_vars + self.common_var


@dataclass(frozen=True)
class MaxMoments:
    """First two moments of the maximum along a time grid."""

    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray


# ---------------------------------------------------------------------------
# cdf of the maximum
# ---------------------------------------------------------------------------

def _inner_max_cdf(y: np.ndarray, means: np.ndarray, sds: np.ndarray) -> np.ndarray:
    """cdf of max_i A_i at points y; degenerate components act as steps."""
    out = np.ones_like(y, dtype=float)
    for mu, sd in zip(means, sds):
        if sd > 0.0:
            out = out * ndtr((y - mu) / sd)
        else:
            out = out * (y >= mu)
    return out


def max_cdf(state: CommonFactorState, x) -> float | np.ndarray:
    """
    Cumulative distribution function of the (floored) common-factor maximum.

    Evaluates the convolution of the common-factor density with the product
    of the component cdfs by Gauss-Legendre quadrature over +-8 standard
    deviations of the common factor.  For the floored variant the value is
    0 for x <= 0.
    """
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    sds = np.sqrt(state.component_vars)
    s_c = math.sqrt(state.common_var)
    if s_c == 0.0:
        vals = _inner_max_cdf(arr, state.component_means, sds)
    else:
        half = 8.0 * s_c
        z = half * _CONV_X  # nodes of the common factor
        w = half * _CONV_W * _phi(z / s_c) / s_c
        y = arr[:, None] - z[None, :]
        g = np.ones_like(y)
        for mu, sd in zip(state.component_means, sds):
            if sd > 0.0:
                g *= ndtr((y - mu) / sd)
            else:
                g *= y >= mu
        vals = np.sum(g * w[None, :], axis=1)
        vals = np.clip(vals, 0.0, 1.0)
    if state.floor_at_zero:
        vals = np.where(arr <= 0.0, 0.0, vals)
    if np.asarray(x).ndim == 0:
        return float(vals[0])
    return vals


# ---------------------------------------------------------------------------
# moments of the maximum
# ---------------------------------------------------------------------------

_MOMENT_CHUNK = 4096
_PANEL_X64, _PANEL_W64 = _gauss_legendre(64)


def _batched_moments(
    mu: np.ndarray,
    idio_var: np.ndarray,
    common_var: np.ndarray,
    floored: bool,
    panel: tuple[np.ndarray, np.ndarray] | None = None,
):
    """
    Moment driver: splits the batch into the regular case (every component
    stochastic, nondegenerate common factor) served by a lean kernel, and
    the degenerate remainder served by the general kernel, in chunks.
    """
    mu = np.asarray(mu, dtype=float)
    idio_var = np.asarray(idio_var, dtype=float)
    common_var = np.asarray(common_var, dtype=float)
    px, pw = panel if panel is not None else (_PANEL_X, _PANEL_W)
    m = mu.shape[0]
    mean = np.empty(m)
    var = np.empty(m)
    simple = np.all(idio_var > 0.0, axis=1)
    if floored:
        simple &= common_var > 0.0
    idx_s = np.flatnonzero(simple)
    idx_g = np.flatnonzero(~simple)
    for lo in range(0, idx_s.size, _MOMENT_CHUNK):
        sel = idx_s[lo : lo + _MOMENT_CHUNK]
        mean[sel], var[sel] = _moments_fast(
            mu[sel], idio_var[sel], common_var[sel], floored, px, pw
        )
    for lo in range(0, idx_g.size, _MOMENT_CHUNK):
        sel = idx_g[lo : lo + _MOMENT_CHUNK]
        mean[sel], var[sel] = _batched_moments_core(
            mu[sel], idio_var[sel], common_var[sel], floored
        )
    return mean, var


def _moments_fast(mu, idio_var, common_var, floored, px, pw):
    """Lean kernel: all components stochastic, common factor nondegenerate."""
    m, k = mu.shape
    sd = np.sqrt(idio_var)
    x = px * _PANEL_HALF_WIDTH
    wx = pw * _PANEL_HALF_WIDTH * _phi(x)
    e1 = np.zeros(m)
    e2 = np.zeros(m)
    l1 = np.zeros(m)
    l2 = np.zeros(m)
    s_c = np.sqrt(common_var)[:, None]
    with np.errstate(under="ignore"):
        for i in range(k):
            y = mu[:, i][:, None] + sd[:, i][:, None] * x[None, :]  # [m,g]
            w = np.tile(wx, (m, 1))
            for j in range(k):
                if j != i:
                    w *= ndtr((y - mu[:, j][:, None]) / sd[:, j][:, None])
            e1 += np.sum(w * y, axis=1)
            e2 += np.sum(w * y * y, axis=1)
            if floored:
                t = y / s_c
                nt = ndtr(-t)
                pt = _phi(t)
                l1 += np.sum(w * (s_c * pt - y * nt), axis=1)
                l2 += np.sum(w * ((s_c * s_c + y * y) * nt - s_c * y * pt), axis=1)
    mean = e1 + l1
    second = common_var + e2 - l2
    if floored:
        mean = np.maximum(mean, 0.0)
    return mean, np.maximum(second - mean * mean, 0.0)


def _batched_moments_core(
    mu: np.ndarray,
    idio_var: np.ndarray,
    common_var: np.ndarray,
    floored: bool,
):
    """
    First two moments of max(0?, C + max_i A_i) for a batch of states.

    mu, idio_var: [m, k]; common_var: [m].  Moments of the inner maximum are
    integrated against one component's Gaussian density times the cdfs of
    the others, with each panel centred and scaled on its own component, so
    accuracy is uniform down to the sigma -> 0 limit.  Components with zero
    variance act as a hard floor and are folded in exactly; with a
    degenerate common factor the zero floor joins that fold, otherwise it
    enters through closed-form Gaussian lower-tail corrections.
    """
    m, k = mu.shape
    sd = np.sqrt(idio_var)
    s_c = np.sqrt(common_var)
    stoch = sd > 0.0

    with np.errstate(divide="ignore", invalid="ignore", under="ignore", over="ignore"):
        det_mu = np.where(stoch, -np.inf, mu)
        has_det = ~np.all(stoch, axis=1)
        m0 = np.where(has_det, det_mu.max(axis=1), -np.inf)
        # with no common factor the zero floor is just one more hard floor
        zero_common = s_c == 0.0
        tail = floored & ~zero_common  # nodes using the Gaussian tail corrections
        if floored:
            m0 = np.where(zero_common, np.maximum(m0, 0.0), m0)
        has_floor = np.isfinite(m0)
        sc_safe = np.where(zero_common, 1.0, s_c)

        e1 = np.zeros(m)
        e2 = np.zeros(m)
        l1 = np.zeros(m)
        l2 = np.zeros(m)

        any_stoch = np.any(stoch, axis=1)

        if np.any(any_stoch):
            x = _PANEL_X * _PANEL_HALF_WIDTH
            wx = _PANEL_W * _PANEL_HALF_WIDTH * _phi(x)  # [g]
            y = mu[:, :, None] + sd[:, :, None] * x[None, None, :]  # [m,k,g]
            prod = np.ones((m, k, x.size))
            for j in range(k):
                mu_j = mu[:, j][:, None, None]
                sd_j = np.where(stoch[:, j], sd[:, j], 1.0)[:, None, None]
                f_j = np.where(
                    stoch[:, j][:, None, None],
                    ndtr((y - mu_j) / sd_j),
                    1.0,  # zero-variance components live in the floor m0
                )
                f_j[:, j, :] = 1.0  # own density carries the panel, not its cdf
                prod = prod * f_j
            weight = np.where(stoch[:, :, None], prod, 0.0) * wx[None, None, :]
            e1 += np.sum(weight * y, axis=(1, 2))
            e2 += np.sum(weight * y * y, axis=(1, 2))
            if np.any(tail):
                s3 = sc_safe[:, None, None]
                w_tail = np.where(tail[:, None, None], weight, 0.0)
                t = -y / s3
                gm = -y * ndtr(t) + s3 * _phi(t)  # E[((-y) - C)^+]
                hm = (s3 * s3 + y * y) * ndtr(t) - s3 * y * _phi(t)
                l1 += np.sum(w_tail * gm, axis=(1, 2))
                l2 += np.sum(w_tail * hm, axis=(1, 2))

            # fold the hard floor m0 into the stochastic maximum:
            # E[f(max(D_S, m0))] = E[f(D_S)] + int_{-inf}^{m0} f'(y) G_S(y) dy.
            # Above the transition window of G_S the integrand is exactly f',
            # integrated in closed form; quadrature covers only the window.
            fold = has_floor & any_stoch
            if np.any(fold):
                lo_cand = np.where(stoch, mu - _PANEL_HALF_WIDTH * sd, -np.inf)
                hi_cand = np.where(stoch, mu + _PANEL_HALF_WIDTH * sd, -np.inf)
                y_lo = np.minimum(lo_cand.max(axis=1), m0)
                y_hi = np.minimum(hi_cand.max(axis=1), m0)
                y_hi = np.maximum(y_hi, y_lo)
                width = np.where(fold, y_hi - y_lo, 0.0)
                base = np.where(fold, y_lo, 0.0)
                yf = base[:, None] + width[:, None] * 0.5 * (_PANEL_X[None, :] + 1.0)
                gs = np.ones_like(yf)
                for j in range(k):
                    sd_j = np.where(stoch[:, j], sd[:, j], 1.0)[:, None]
                    f_j = np.where(
                        stoch[:, j][:, None],
                        ndtr((yf - mu[:, j][:, None]) / sd_j),
                        1.0,
                    )
                    gs = gs * f_j
                wf = 0.5 * width[:, None] * _PANEL_W[None, :] * gs
                flat = np.where(fold, m0 - y_hi, 0.0)  # region where G_S == 1
                m0f = np.where(fold, m0, 0.0)
                yhf = np.where(fold, y_hi, 0.0)
                e1 += np.sum(wf, axis=1) + flat
                e2 += np.sum(wf * 2.0 * yf, axis=1) + np.where(fold, m0f**2 - yhf**2, 0.0)
                tf_nodes = fold & tail
                if np.any(tf_nodes):
                    scf = sc_safe[:, None]
                    wt = np.where(tf_nodes[:, None], wf, 0.0)
                    tf = yf / scf
                    l1 += np.sum(wt * (-ndtr(-tf)), axis=1)
                    l2 += np.sum(wt * (2.0 * yf * ndtr(-tf) - 2.0 * scf * _phi(tf)), axis=1)
                    # closed flat parts: g(-y) and h(y) differences
                    t_m0 = m0f / sc_safe
                    t_yh = yhf / sc_safe
                    g_diff = (-m0f * ndtr(-t_m0) + sc_safe * _phi(t_m0)) - (
                        -yhf * ndtr(-t_yh) + sc_safe * _phi(t_yh)
                    )
                    h_diff = (
                        (sc_safe**2 + m0f**2) * ndtr(-t_m0) - sc_safe * m0f * _phi(t_m0)
                    ) - ((sc_safe**2 + yhf**2) * ndtr(-t_yh) - sc_safe * yhf * _phi(t_yh))
                    l1 += np.where(tf_nodes, g_diff, 0.0)
                    l2 += np.where(tf_nodes, h_diff, 0.0)

        # states whose every component is deterministic: D == m0 exactly
        pure = ~any_stoch
        if np.any(pure):
            d = np.where(pure & np.isfinite(m0), m0, 0.0)
            e1 = np.where(pure, d, e1)
            e2 = np.where(pure, d * d, e2)
            pure_tail = pure & tail
            if np.any(pure_tail):
                t = -d / sc_safe
                g_val = -d * ndtr(t) + sc_safe * _phi(t)
                h_val = (sc_safe**2 + d * d) * ndtr(t) - sc_safe * d * _phi(t)
                l1 = np.where(pure_tail, g_val, l1)
                l2 = np.where(pure_tail, h_val, l2)

        mean = e1 + l1
        second = common_var + e2 - l2
        if floored:
            mean = np.maximum(mean, 0.0)
        var = np.maximum(second - mean * mean, 0.0)
    return mean, var


def max_moments(state: CommonFactorState) -> tuple[float, float]:
    """
    Mean and variance of the common-factor maximum at one time.

    Semi-analytic: the moments of the inner maximum are integrated against
    per-component Gaussian panels and the zero floor (when present) is
    applied through exact rectification identities, conditioning on the
    common factor.  Equivalent to integrating the survival function of
    `max_cdf` but uniformly accurate for vanishing volatilities.
    """
    mean, var = _batched_moments(
        state.component_means[None, :],
        state.component_vars[None, :],
        np.asarray([state.common_var]),
        state.floor_at_zero,
    )
    return float(mean[0]), float(var[0])


# ---------------------------------------------------------------------------
# variance of the time integral
# ---------------------------------------------------------------------------

def integral_variance_estimator(times, variances, t0: float, T: float):
    """
    Diffusion-based proxy for Var[int_t0^T M(t) dt].

    Treats the marginal variance curve as that of a driftless diffusion, for
    which Var[int X] = int_t0^T int_t0^s v(t) dt ds + int_t0^T (T-s) v(s) ds.
    The curve is taken piecewise linear between grid nodes and both terms
    are integrated exactly; batches of variance curves share the grid.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(variances, dtype=float)
    if t.ndim != 1 or not np.all(np.diff(t) > 0.0):
        raise ModelValidationError("times must be strictly increasing")
    if v.shape[-1] != t.size:
        raise ModelValidationError("variance curve and grid have different lengths")
    if np.any(v < -1e-18):
        raise ModelValidationError("variance curve must be nonnegative")
    if t[0] > t0 + 1e-12 or t[-1] < T - 1e-12:
        raise ModelValidationError(
            f"grid [{t[0]:g}, {t[-1]:g}] does not cover [{t0:g}, {T:g}]"
        )
    if T < t0:
        raise ModelValidationError("need T >= t0")
    if T == t0:
        return np.zeros(v.shape[:-1]) if v.ndim > 1 else 0.0

    # restrict to [t0, T], interpolating the end values if needed
    single = v.ndim == 1
    v2 = np.atleast_2d(v)
    inside = (t > t0) & (t < T)
    grid = np.concatenate(([t0], t[inside], [T]))
    v_lo = np.array([np.interp(t0, t, row) for row in v2])[:, None]
    v_hi = np.array([np.interp(T, t, row) for row in v2])[:, None]
    vv = np.hstack([v_lo, v2[:, inside], v_hi])

    h = np.diff(grid)  # [n-1]
    vk = vv[:, :-1]
    vk1 = vv[:, 1:]
    slope = (vk1 - vk) / h
    # cumulative integral C(s) at nodes, exact for the linear pieces
    seg = 0.5 * (vk + vk1) * h
    c_nodes = np.concatenate([np.zeros((vv.shape[0], 1)), np.cumsum(seg, axis=1)], axis=1)
    ck = c_nodes[:, :-1]
    # term 1: int C(s) ds with C quadratic on each interval
    term1 = np.sum(ck * h + 0.5 * vk * h**2 + slope * h**3 / 6.0, axis=1)
    # term 2: int (T - s) v(s) ds, cubic-exact via Simpson on each interval
    smid = 0.5 * (grid[:-1] + grid[1:])
    vmid = 0.5 * (vk + vk1)
    f_a = (T - grid[:-1]) * vk
    f_m = (T - smid) * vmid
    f_b = (T - grid[1:]) * vk1
    term2 = np.sum(h / 6.0 * (f_a + 4.0 * f_m + f_b), axis=1)
    psi = term1 + term2
    if single:
        return float(psi[0])
    return psi


# ---------------------------------------------------------------------------
# CTD discount factors
# ---------------------------------------------------------------------------

def _zero_curve(t0: float, T: float) -> SpreadCurve:
    return SpreadCurve.constant(0.0, t0, T)


def ctd_deterministic(model: MarketModel, t0: float, T: float) -> float:
    """
    exp(-int_t0^T max(0, qhat_1, ..., qhat_N)): the forecast-only factor.

    Exact: the integrand is piecewise linear, so crossings are found by
    segment intersection and the integral carries no quadrature error.
    """
    if T < t0:
        raise ModelValidationError("need T >= t0")
    if T == t0:
        return 1.0
    curves = [_zero_curve(t0, T)] + [s.mean_curve for s in model.spreads]
    return math.exp(-max_curve_integral(curves, t0, T))


def _time_grid(t0: float, T: float, nodes_per_year: int) -> np.ndarray:
    n = max(2, int(round((T - t0) * nodes_per_year)))
    return np.linspace(t0, T, n + 1)


def _model_time_grid(model: MarketModel, t0: float, T: float, nodes_per_year: int) -> np.ndarray:
    """Uniform grid plus every kink of the forecast maximum (curve nodes and
    curve crossings), so the trapezoidal integral of the maximum's mean is
    exact on piecewise-linear segments in the zero-volatility limit."""
    from .curves import max_curve_breakpoints

    base = _time_grid(t0, T, nodes_per_year)
    curves = [_zero_curve(t0, T)] + [s.mean_curve for s in model.spreads]
    breakpoints, _ = max_curve_breakpoints(curves, t0, T)
    return np.unique(np.concatenate((base, breakpoints)))


@dataclass(frozen=True)
class CommonFactorResult:
    """Detailed output of the stochastic CTD evaluation."""

    value: float
    moments: MaxMoments
    psi: float
    gamma: np.ndarray
    gamma_clamped: int
    floor_at_zero: bool

    @property
    def mean_integral(self) -> float:
        t, e = self.moments.times, self.moments.mean
        return float(np.trapezoid(e, t))


def _spread_snapshot_arrays(model: MarketModel, times: np.ndarray, anchor: float):
    """Means and covariances of the spread vector along a grid."""
    n = model.n_spreads
    mu = np.empty((times.size, n))
    for i in range(1, n + 1):
        mu[:, i - 1] = model.spread(i).mean_curve(times)
    cov = np.empty((times.size, n, n))
    for k, t in enumerate(times):
        cov[k] = model.spread_covariance(float(t), start=anchor)
    return mu, cov


def _fit_gamma_batch(cov: np.ndarray) -> tuple[np.ndarray, int]:
    """Per-node gamma for covariance stacks [m, k, k]; counts clamps."""
    m, k, _ = cov.shape
    if k == 1:
        return np.zeros(m), 0
    diag = np.diagonal(cov, axis1=1, axis2=2)
    sig_min_sq = diag.min(axis=1)
    clamped = 0
    if k == 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = np.where(sig_min_sq > 0.0, cov[:, 0, 1] / np.where(sig_min_sq > 0, sig_min_sq, 1.0), 0.0)
        clamped = int(np.sum((raw < 0.0) | (raw > _GAMMA_CAP)))
        return np.clip(raw, 0.0, _GAMMA_CAP), clamped
    out = np.empty(m)
    mask = ~np.eye(k, dtype=bool)
    for node in range(m):
        smin = sig_min_sq[node]
        if smin <= 0.0:
            out[node] = 0.0
            continue
        off = cov[node][mask]

        def frob(g: float) -> float:
            return float(np.sum((g * smin - off) ** 2))

        out[node] = _golden_section(frob, 0.0, _GAMMA_CAP)
        unconstrained = float(np.mean(off)) / smin
        if unconstrained < 0.0 or unconstrained > _GAMMA_CAP:
            clamped += 1
    return out, clamped


def _moment_curves(mu: np.ndarray, cov: np.ndarray, floored: bool, panel=None):
    """Per-node maximum moments for mean/covariance stacks."""
    gamma, clamped = _fit_gamma_batch(cov)
    diag = np.diagonal(cov, axis1=1, axis2=2)
    sig_min_sq = diag.min(axis=1)
    common = gamma * sig_min_sq
    idio = np.maximum(diag - common[:, None], 0.0)
    mean, var = _batched_moments(mu, idio, common, floored, panel=panel)
    return mean, var, gamma, clamped


def ctd_common_factor_detailed(
    model: MarketModel,
    t0: float,
    T: float,
    nodes_per_year: int = 48,
) -> CommonFactorResult:
    """Stochastic CTD factor with its intermediate curves exposed."""
    if T < t0:
        raise ModelValidationError("need T >= t0")
    if T == t0:
        empty = MaxMoments(np.asarray([t0]), np.zeros(1), np.zeros(1))
        return CommonFactorResult(1.0, empty, 0.0, np.zeros(1), 0, True)
    times = _model_time_grid(model, t0, T, nodes_per_year)
    mu, cov = _spread_snapshot_arrays(model, times, anchor=t0)
    mean, var, gamma, clamped = _moment_curves(mu, cov, floored=True)
    moments = MaxMoments(times, mean, var)
    psi = float(integral_variance_estimator(times, var, t0, T))
    value = math.exp(-float(np.trapezoid(mean, times))) * (1.0 + 0.5 * psi)
    return CommonFactorResult(value, moments, psi, gamma, clamped, True)


def ctd_common_factor(
    model: MarketModel, t0: float, T: float, nodes_per_year: int = 48
) -> float:
    """
    Second-order common-factor approximation of the stochastic CTD factor:
    exp(-int E[max]) * (1 + Psi / 2).
    """
    return ctd_common_factor_detailed(model, t0, T, nodes_per_year).value


def _pivot_max_covariance(
    mu: np.ndarray,
    idio_var: np.ndarray,
    common_var: np.ndarray,
    e_max: np.ndarray,
    pivot: int,
):
    """
    Cov[C + A_p, max(0, C + max_j A_j)] per node, within the decomposition.

    Both contributions are semi-analytic: conditioning on the inner maximum
    gives E[C (C+d)^+] = s_C^2 Phi(d/s_C) for the shared factor, and the
    own-factor part decomposes over which component attains the maximum,
    with every conditional expectation a closed Gaussian form evaluated on
    the same per-component panels as the moments.
    """
    m, k = mu.shape
    sd = np.sqrt(idio_var)
    s_c = np.sqrt(common_var)
    stoch = sd > 0.0
    p_stoch = stoch[:, pivot]
    mu_p = mu[:, pivot]
    sd_p = np.where(p_stoch, sd[:, pivot], 1.0)

    with np.errstate(divide="ignore", invalid="ignore", under="ignore", over="ignore"):
        det_mu = np.where(stoch, -np.inf, mu)
        has_det = ~np.all(stoch, axis=1)
        m0 = np.where(has_det, det_mu.max(axis=1), -np.inf)
        any_stoch = np.any(stoch, axis=1)
        sc_pos = s_c > 0.0
        sc_safe = np.where(sc_pos, s_c, 1.0)

        def g_plus(y):
            """E[(C + y)^+]; collapses to y^+ without a common factor."""
            t = y / sc_safe[:, None] if y.ndim == 2 else y / sc_safe
            smooth = y * ndtr(t) + (sc_safe[:, None] if y.ndim == 2 else sc_safe) * _phi(t)
            hard = np.maximum(y, 0.0)
            mask = sc_pos[:, None] if y.ndim == 2 else sc_pos
            return np.where(mask, smooth, hard)

        x = _PANEL_X * _PANEL_HALF_WIDTH
        wx = _PANEL_W * _PANEL_HALF_WIDTH * _phi(x)
        e_am = np.zeros(m)  # E[A_p * max(0, C + D)]
        e_fd = np.zeros(m)  # E[Phi(D_S / s_C)] over the stochastic maximum
        for j in range(k):
            y = mu[:, j][:, None] + sd[:, j][:, None] * x[None, :]
            w = np.tile(wx, (m, 1))
            for kk in range(k):
                if kk == j:
                    continue
                sd_kk = np.where(stoch[:, kk], sd[:, kk], 1.0)[:, None]
                f_kk = np.where(
                    stoch[:, kk][:, None],
                    ndtr((y - mu[:, kk][:, None]) / sd_kk),
                    1.0,
                )
                w *= f_kk
            w = np.where(stoch[:, j][:, None], w, 0.0)
            g_y = g_plus(y)
            w_tr = w * (y >= m0[:, None])  # below the hard floor j cannot attain D
            if j == pivot:
                integrand = y * g_y
            else:
                zp = (y - mu_p[:, None]) / sd_p[:, None]
                lower_mean = np.where(
                    p_stoch[:, None],
                    mu_p[:, None] * ndtr(zp) - sd_p[:, None] * _phi(zp),
                    mu_p[:, None] * (mu_p[:, None] <= y),
                )
                integrand = lower_mean * g_y
            e_am += np.sum(w_tr * integrand, axis=1)
            e_fd += np.sum(w * ndtr(y / sc_safe[:, None]), axis=1)

        # term where the deterministic floor attains the maximum
        if np.any(has_det):
            gs_m0 = np.ones(m)
            prod_no_p = np.ones(m)
            for kk in range(k):
                f_kk = np.where(
                    stoch[:, kk],
                    ndtr((m0 - mu[:, kk]) / np.where(stoch[:, kk], sd[:, kk], 1.0)),
                    1.0,
                )
                gs_m0 *= np.where(np.isfinite(m0), f_kk, 1.0)
                if kk != pivot:
                    prod_no_p *= np.where(np.isfinite(m0), f_kk, 1.0)
            zp0 = (m0 - mu_p) / sd_p
            lower_p = np.where(p_stoch, mu_p * ndtr(zp0) - sd_p * _phi(zp0), mu_p)
            g_m0 = np.where(
                sc_pos, m0 * ndtr(m0 / sc_safe) + sc_safe * _phi(m0 / sc_safe), np.maximum(m0, 0.0)
            )
            floor_term = np.where(
                has_det & np.isfinite(m0), lower_p * prod_no_p * g_m0, 0.0
            )
            e_am += floor_term

            # fold the floor into E[Phi(D / s_C)]
            fold = has_det & any_stoch & sc_pos
            if np.any(fold):
                lo_cand = np.where(stoch, mu - _PANEL_HALF_WIDTH * sd, -np.inf)
                hi_cand = np.where(stoch, mu + _PANEL_HALF_WIDTH * sd, -np.inf)
                y_lo = np.minimum(lo_cand.max(axis=1), m0)
                y_hi = np.maximum(np.minimum(hi_cand.max(axis=1), m0), y_lo)
                width = np.where(fold, y_hi - y_lo, 0.0)
                base = np.where(fold, y_lo, 0.0)
                yf = base[:, None] + width[:, None] * 0.5 * (_PANEL_X[None, :] + 1.0)
                gs = np.ones_like(yf)
                for kk in range(k):
                    sd_kk = np.where(stoch[:, kk], sd[:, kk], 1.0)[:, None]
                    gs *= np.where(
                        stoch[:, kk][:, None],
                        ndtr((yf - mu[:, kk][:, None]) / sd_kk),
                        1.0,
                    )
                wf = 0.5 * width[:, None] * _PANEL_W[None, :] * gs
                e_fd += np.sum(wf * _phi(yf / sc_safe[:, None]) / sc_safe[:, None], axis=1)
                flat_gain = np.where(
                    fold,
                    ndtr(np.where(fold, m0, 0.0) / sc_safe) - ndtr(np.where(fold, y_hi, 0.0) / sc_safe),
                    0.0,
                )
                e_fd += flat_gain

        # states with no stochastic component at all: D == m0 exactly
        pure = ~any_stoch
        if np.any(pure):
            e_fd = np.where(pure & np.isfinite(m0), ndtr(np.where(pure, m0, 0.0) / sc_safe), e_fd)

        cov_c = np.where(sc_pos, common_var * e_fd, 0.0)
        cov_a = np.where(p_stoch, e_am - mu_p * e_max, 0.0)
    return cov_c + cov_a


def shifted_max_ctd(
    model: MarketModel,
    pivot: int,
    t0: float,
    T: float,
    nodes_per_year: int = 48,
) -> float:
    """
    E[exp(-int max(q_i, q_1 + q_i, ..., q_N + q_i))] for pivot spread i.

    The shifted maximum is q_i plus the floored spread maximum exactly, so
    its per-time moments come from the standard common-factor moments plus
    the semi-analytic covariance between the pivot spread and the maximum.
    (A direct common-factor fit of the shifted family cannot reproduce its
    covariances: they exceed the smallest marginal variance.)  The factor
    is then the usual second-order approximation with the diffusion-based
    integral variance.
    """
    if not 1 <= pivot <= model.n_spreads:
        raise ModelValidationError(f"pivot {pivot} out of range 1..{model.n_spreads}")
    if T < t0:
        raise ModelValidationError("need T >= t0")
    if T == t0:
        return 1.0
    times = _model_time_grid(model, t0, T, nodes_per_year)
    mu, cov = _spread_snapshot_arrays(model, times, anchor=t0)
    gamma, _ = _fit_gamma_batch(cov)
    diag = np.diagonal(cov, axis1=1, axis2=2)
    common = gamma * diag.min(axis=1)
    idio = np.maximum(diag - common[:, None], 0.0)
    e_max, var_max = _batched_moments(mu, idio, common, True)
    p = pivot - 1
    cov_pm = _pivot_max_covariance(mu, idio, common, e_max, p)
    e_sm = mu[:, p] + e_max
    var_sm = np.maximum(diag[:, p] + var_max + 2.0 * cov_pm, 0.0)
    psi = float(integral_variance_estimator(times, var_sm, t0, T))
    return math.exp(-float(np.trapezoid(e_sm, times))) * (1.0 + 0.5 * psi)


# ---------------------------------------------------------------------------
# conditional revaluation along simulated paths
# ---------------------------------------------------------------------------

def ctd_common_factor_conditional(
    model: MarketModel,
    t: float,
    T: float,
    displacements: np.ndarray,
    nodes_per_year: int = 48,
    fast_panel: bool = False,
) -> np.ndarray:
    """
    Stochastic CTD factor re-anchored at time t for a batch of states.

    `displacements` holds the centred Ornstein-Uhlenbeck offsets u_i(t) of
    every spread, one row per state.  Conditional forecast curves are the
    initial curves plus the offsets decaying at each spread's mean-reversion
    speed; conditional variances restart from zero at t.
    """
    u = np.atleast_2d(np.asarray(displacements, dtype=float))
    n = model.n_spreads
    if u.shape[1] != n:
        raise ModelValidationError("one displacement per spread is required")
    if T < t:
        raise ModelValidationError("need T >= t")
    if T == t:
        return np.ones(u.shape[0])
    times = _model_time_grid(model, t, T, nodes_per_year)
    base_mu, cov = _spread_snapshot_arrays(model, times, anchor=t)
    ns = times.size
    decay = np.empty((ns, n))
    for i in range(1, n + 1):
        decay[:, i - 1] = np.exp(-model.spread(i).kappa * (times - t))
    nu = u.shape[0]
    mu = base_mu[None, :, :] + u[:, None, :] * decay[None, :, :]  # [nu, ns, n]
    gamma, _ = _fit_gamma_batch(cov)
    diag = np.diagonal(cov, axis1=1, axis2=2)
    common = gamma * diag.min(axis=1)
    idio = np.maximum(diag - common[:, None], 0.0)
    mean, var = _batched_moments(
        mu.reshape(nu * ns, n),
        np.broadcast_to(idio, (nu, ns, n)).reshape(nu * ns, n),
        np.broadcast_to(common, (nu, ns)).reshape(nu * ns),
        True,
        panel=(_PANEL_X64, _PANEL_W64) if fast_panel else None,
    )
    mean = mean.reshape(nu, ns)
    var = var.reshape(nu, ns)
    integral = np.trapezoid(mean, times, axis=1)
    psi = integral_variance_estimator(times, var, t, T)
    return np.exp(-integral) * (1.0 + 0.5 * np.asarray(psi))


class ConditionalCtdTable:
    """
    Interpolation table for conditional CTD factors at fixed anchor times.

    For every anchor time a tensor grid of spread displacements is priced
    with the conditional common-factor routine; queries interpolate the log
    factor (cubic for interior anchors with enough nodes).  Displacements
    outside the grid are clamped to its edge, which is five standard
    deviations out by default.
    """

    def __init__(
        self,
        model: MarketModel,
        anchor_times: Sequence[float],
        maturity: float,
        nodes_per_dim: int = 9,
        half_width_sds: float = 4.5,
        nodes_per_year: int = 24,
    ):
        from scipy.interpolate import RegularGridInterpolator

        self.model = model
        self.maturity = float(maturity)
        self.anchor_times = np.asarray(anchor_times, dtype=float)
        n = model.n_spreads
        self._interps: list = []
        self._grids: list = []
        for t in self.anchor_times:
            if t >= maturity:
                self._interps.append(None)
                self._grids.append(None)
                continue
            sds = [math.sqrt(model.spread(i).variance(float(t))) for i in range(1, n + 1)]
            if max(sds) < 1e-10:
                # no dispersion yet: a single conditional value serves all states
                val = ctd_common_factor_conditional(
                    model, float(t), maturity, np.zeros((1, n)), nodes_per_year, fast_panel=True
                )
                self._interps.append(float(np.log(val[0])))
                self._grids.append(None)
                continue
            axes = [
                np.linspace(-half_width_sds * max(sd, 1e-12), half_width_sds * max(sd, 1e-12), nodes_per_dim)
                for sd in sds
            ]
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
            vals = ctd_common_factor_conditional(
                model, float(t), maturity, pts, nodes_per_year, fast_panel=True
            )
            table = np.log(vals).reshape([nodes_per_dim] * n)
            method = "cubic" if nodes_per_dim >= 4 else "linear"
            self._interps.append(
                RegularGridInterpolator(axes, table, method=method, bounds_error=False, fill_value=None)
            )
            self._grids.append(axes)

    def evaluate(self, anchor_index: int, displacements: np.ndarray) -> np.ndarray:
        """Conditional CTD factors for states at one anchor time."""
        interp = self._interps[anchor_index]
        n_states = np.atleast_2d(displacements).shape[0]
        if interp is None:
            return np.ones(n_states)
        if isinstance(interp, float):
            return np.full(n_states, math.exp(interp))
        u = np.atleast_2d(np.asarray(displacements, dtype=float)).copy()
        axes = self._grids[anchor_index]
        for d, ax in enumerate(axes):
            u[:, d] = np.clip(u[:, d], ax[0], ax[-1])
        return np.exp(interp(u))
