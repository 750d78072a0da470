"""Static hedging of the collateral-choice bond and swap P&L replication.

The target asset is the domestic zero-coupon bond carrying the collateral
choice option.  Hedging instruments are the domestic and foreign
zero-coupon bonds (and forwards on them), which do not carry the option.
Four portfolio families are built:

* the variance-minimizing static portfolio, whose weights solve a
  box-constrained quadratic program assembled from closed-form bond
  covariances and semi-analytic shifted-maximum factors,
* the crossing-time strategy, short the bond of whichever currency the
  forecast curves make maximal on each time interval (entered through
  forwards at inception),
* the basic one-bond hedges, and
* the option-blind hedge using the domestic bond alone.

A separate harness replicates the option's discount factors synthetically
on a swap and accumulates the hedge P&L account along simulated paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product as _iter_product
from typing import Sequence

import numpy as np

from .ctd import (
    ConditionalCtdTable,
    ctd_common_factor,
    ctd_deterministic,
    shifted_max_ctd,
)
from .curves import SpreadCurve, max_curve_breakpoints
from .instruments import ForwardBondContract, SwapSpec, forward_bond, zcb_domestic, zcb_foreign
from .montecarlo import PathBundle
from .spread_model import MarketModel, ModelValidationError, bond_moment, integral_covariance

__all__ = [
    "QuadraticForm",
    "HedgeWeights",
    "CrossingSchedule",
    "Position",
    "Portfolio",
    "PortfolioPathStats",
    "PnLAccount",
    "assemble_quadratic",
    "solve_min_variance",
    "crossing_schedule",
    "model_crossing_schedule",
    "build_deterministic_portfolio",
    "build_basic_portfolio",
    "build_none_portfolio",
    "build_stochastic_portfolio",
    "stochastic_strategy",
    "evaluate_portfolio_paths",
    "synthetic_replication_pnl",
]

ALPHA0_POLICIES = ("free", "cash_neutral", "zero")
_DEGENERATE_DIAG = 1e-14


@dataclass(frozen=True)
class QuadraticForm:
    """
    Covariance data of the hedge objective.

    matrix[i, j] = Cov of the bond payoff factors of currencies i and j
    (0 = domestic), vector[i] = Cov between the collateral-choice bond
    payoff and currency i's, constant = Var of the collateral-choice bond
    payoff (informational; estimated by Monte Carlo when available, else
    NaN -- it never moves the minimizer).
    """

    matrix: np.ndarray
    vector: np.ndarray
    constant: float = math.nan

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        b = np.atleast_1d(np.asarray(self.vector, dtype=float))
        if q.shape[0] != q.shape[1] or b.size != q.shape[0]:
            raise ModelValidationError("quadratic form dimensions disagree")
        if not np.allclose(q, q.T, atol=1e-12 * max(1.0, float(np.abs(q).max()))):
            raise ModelValidationError("covariance matrix must be symmetric")
        q = 0.5 * (q + q.T)
        w, v = np.linalg.eigh(q)
        # tolerate eigenvalue dust from exact cancellations of O(1) products
        floor = -(1e-12 * max(float(w.max()), 0.0) + 1e-14)
        if float(w.min()) < floor:
            raise ModelValidationError(
                f"covariance matrix has negative eigenvalue {float(w.min()):.3e}"
            )
        q = (v * np.clip(w, 0.0, None)) @ v.T
        q = 0.5 * (q + q.T)
        q.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", q)
        object.__setattr__(self, "vector", b)

    @property
    def size(self) -> int:
        return self.vector.size

    def objective(self, alpha: np.ndarray) -> float:
        """f(alpha) = alpha' Q alpha + 2 b' alpha (variance up to a constant)."""
        a = np.asarray(alpha, dtype=float)
        return float(a @ self.matrix @ a + 2.0 * self.vector @ a)

    def portfolio_variance(self, alpha: np.ndarray) -> float:
        """Var of the hedged payoff; needs the constant term."""
        return self.constant + self.objective(alpha)


def assemble_quadratic(
    model: MarketModel,
    t0: float,
    T: float,
    nodes_per_year: int = 48,
    pc_variance: float = math.nan,
) -> QuadraticForm:
    """
    Build the hedge covariance data over [t0, T].

    Bond-bond covariances are exact lognormal expressions; the cross terms
    against the collateral-choice bond use the common-factor factor for the
    plain maximum (domestic entry) and the shifted maximum (foreign
    entries).  `pc_variance` can carry a Monte Carlo estimate of the
    choice bond's payoff variance for the informational constant.
    """
    n = model.n_spreads
    r1 = bond_moment(model.domestic, t0, T, 1)
    r2 = bond_moment(model.domestic, t0, T, 2)
    e = np.empty(n + 1)
    e[0] = 1.0
    for i in range(1, n + 1):
        e[i] = bond_moment(model.spread(i), t0, T, 1)
    q = np.empty((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(i, n + 1):
            if i == 0 and j == 0:
                joint = 1.0
            elif i == 0:
                joint = e[j]
            else:
                mu = -(
                    model.spread(i).mean_curve.integral(t0, T)
                    + model.spread(j).mean_curve.integral(t0, T)
                )
                v = (
                    integral_covariance(model.spread(i), model.spread(i), 1.0, t0, T)
                    + integral_covariance(model.spread(j), model.spread(j), 1.0, t0, T)
                    + 2.0
                    * integral_covariance(
                        model.spread(i), model.spread(j), model.rho(i, j), t0, T
                    )
                )
                joint = math.exp(mu + 0.5 * v)
            q[i, j] = q[j, i] = joint * r2 - e[i] * e[j] * r1 * r1
    ctd = ctd_common_factor(model, t0, T, nodes_per_year)
    b = np.empty(n + 1)
    b[0] = ctd * (r2 - r1 * r1)
    for i in range(1, n + 1):
        sm = shifted_max_ctd(model, i, t0, T, nodes_per_year)
        b[i] = sm * r2 - ctd * e[i] * r1 * r1
    return QuadraticForm(q, b, pc_variance)


@dataclass(frozen=True)
class HedgeWeights:
    """Solved hedge weights with the degenerate-cash-weight bookkeeping."""

    alpha: np.ndarray
    alpha0_policy: str
    predicted_variance: float
    objective: float
    alpha0_degenerate: bool

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)


def _enumerate_boxed_minimum(q: np.ndarray, b: np.ndarray, lo: float, hi: float):
    """
    Exact minimizer of a' q a + 2 b' a over the box by face enumeration.

    Every coordinate is tried interior, at the lower or the upper bound;
    candidates must satisfy the first-order conditions of their face.  The
    matrix is positive semidefinite, so those conditions are sufficient.
    """
    n = b.size
    best = None
    best_f = math.inf
    gtol = 1e-9 + 1e-7 * max(float(np.abs(q).max()), float(np.abs(b).max()))
    for states in _iter_product((0, -1, +1), repeat=n):
        a = np.empty(n)
        free = [k for k, s in enumerate(states) if s == 0]
        for k, s in enumerate(states):
            if s == -1:
                a[k] = lo
            elif s == +1:
                a[k] = hi
        if free:
            qff = q[np.ix_(free, free)]
            fixed = [k for k in range(n) if k not in free]
            rhs = -b[free]
            if fixed:
                rhs = rhs - q[np.ix_(free, fixed)] @ a[fixed]
            sol, *_ = np.linalg.lstsq(qff, rhs, rcond=None)
            a[free] = sol
            if np.any(a[free] < lo - 1e-12) or np.any(a[free] > hi + 1e-12):
                continue
        grad = 2.0 * (q @ a + b)
        ok = True
        for k, s in enumerate(states):
            if s == 0 and abs(grad[k]) > gtol:
                ok = False
                break
            if s == -1 and grad[k] < -gtol:
                ok = False
                break
            if s == +1 and grad[k] > gtol:
                ok = False
                break
        if not ok:
            continue
        f = float(a @ q @ a + 2.0 * b @ a)
        if best is None or f < best_f:
            best_f = f
            best = np.clip(a, lo, hi)
    if best is None:
        raise ModelValidationError("box-constrained minimization found no KKT point")
    return best, best_f


def _projected_gradient(q, b, lo, hi, iters=20000):
    lip = float(np.linalg.eigvalsh(q)[-1]) * 2.0 + 1e-12
    a = np.zeros(b.size)
    step = 1.0 / lip
    for _ in range(iters):
        a_new = np.clip(a - step * 2.0 * (q @ a + b), lo, hi)
        if np.max(np.abs(a_new - a)) < 1e-14:
            a = a_new
            break
        a = a_new
    return a, float(a @ q @ a + 2.0 * b @ a)


def solve_min_variance(
    form: QuadraticForm,
    alpha0_policy: str = "cash_neutral",
    prices: Sequence[float] | None = None,
    box: tuple[float, float] = (-1.0, 1.0),
) -> HedgeWeights:
    """
    Variance-minimizing weights over the box, with the cash-weight policy.

    When the domestic bond carries no variance (its row of the covariance
    matrix vanishes, e.g. a deterministic domestic rate), the weight
    alpha_0 drops out of the objective.  It is then fixed by policy:
    "zero" or "free" leave it at zero, "cash_neutral" solves for zero
    portfolio price at inception and needs `prices` = (choice bond price,
    bond prices 0..N).
    """
    if alpha0_policy not in ALPHA0_POLICIES:
        raise ModelValidationError(f"alpha0_policy must be one of {ALPHA0_POLICIES}")
    q, b = form.matrix, form.vector
    n = form.size
    lo, hi = box
    degenerate = q[0, 0] < _DEGENERATE_DIAG * max(float(np.diag(q).max()), 1e-300)
    if degenerate:
        sub_q = q[1:, 1:]
        sub_b = b[1:]
        if n - 1 <= 6:
            a_sub, f = _enumerate_boxed_minimum(sub_q, sub_b, lo, hi)
        else:
            a_sub, f = _projected_gradient(sub_q, sub_b, lo, hi)
        alpha = np.concatenate(([0.0], a_sub))
        if alpha0_policy == "cash_neutral":
            if prices is None:
                raise ModelValidationError(
                    "cash_neutral policy needs prices=(choice bond, bonds 0..N)"
                )
            pc = float(prices[0])
            bonds = np.asarray(prices[1:], dtype=float)
            if bonds.size != n:
                raise ModelValidationError("need one price per hedge bond")
            alpha[0] = -(pc + float(bonds[1:] @ alpha[1:])) / float(bonds[0])
    else:
        if n <= 7:
            alpha, f = _enumerate_boxed_minimum(q, b, lo, hi)
        else:
            alpha, f = _projected_gradient(q, b, lo, hi)
    return HedgeWeights(
        alpha=alpha,
        alpha0_policy=alpha0_policy,
        predicted_variance=form.constant + f,
        objective=f,
        alpha0_degenerate=bool(degenerate),
    )


# ---------------------------------------------------------------------------
# crossing-time schedule and portfolio compositions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossingSchedule:
    """Times at which the maximal forecast spread changes, with winners."""

    times: tuple[float, ...]
    indices: tuple[int, ...]

    def __post_init__(self):
        if len(self.times) != len(self.indices):
            raise ModelValidationError("schedule needs one index per interval")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ModelValidationError("crossing times must be strictly increasing")


def crossing_schedule(curves: Sequence[SpreadCurve], t0: float, T: float) -> CrossingSchedule:
    """
    Iterative crossing times of the pointwise-maximal curve on [t0, T).

    `curves[0]` is conventionally the zero spread of the domestic currency.
    Curves are piecewise linear, so crossings are segment intersections and
    are found exactly.  Ties go to the lowest curve index.
    """
    nodes, winners = max_curve_breakpoints(curves, t0, T)
    times = [float(nodes[0])]
    indices = [int(winners[0])]
    for k in range(1, winners.size):
        if winners[k] != indices[-1]:
            times.append(float(nodes[k]))
            indices.append(int(winners[k]))
    return CrossingSchedule(tuple(times), tuple(indices))


def model_crossing_schedule(model: MarketModel, t0: float, T: float) -> CrossingSchedule:
    """Crossing schedule of the model's forecast curves (plus zero spread)."""
    curves = [SpreadCurve.constant(0.0, t0, T)] + [s.mean_curve for s in model.spreads]
    return crossing_schedule(curves, t0, T)


@dataclass(frozen=True)
class Position:
    """One instrument leg: collateral-choice bond, plain bond, or forward."""

    kind: str  # "choice_bond" | "bond" | "forward"
    units: float
    currency: int = 0
    delivery: float = math.nan  # forwards only

    def __post_init__(self):
        if self.kind not in ("choice_bond", "bond", "forward"):
            raise ModelValidationError(f"unknown position kind {self.kind!r}")


@dataclass(frozen=True)
class Portfolio:
    """Static composition plus the cash account fixed at inception."""

    name: str
    maturity: float
    positions: tuple[Position, ...]
    cash: float

    def position_value(self, model: MarketModel, t: float, nodes_per_year: int = 48) -> float:
        """Value of the instrument legs at time t off the forecast curves."""
        total = 0.0
        for p in self.positions:
            if p.kind == "choice_bond":
                v = ctd_common_factor(model, t, self.maturity, nodes_per_year) * zcb_domestic(
                    model, t, self.maturity
                )
            elif p.kind == "bond":
                v = zcb_foreign(model, p.currency, t, self.maturity)
            else:
                v = forward_bond(
                    model, ForwardBondContract(p.currency, p.delivery, self.maturity), t
                )
            total += p.units * v
        return total


def _with_offsetting_cash(name, model, maturity, positions, t0, nodes_per_year) -> Portfolio:
    draft = Portfolio(name, maturity, tuple(positions), 0.0)
    return Portfolio(
        name, maturity, tuple(positions), -draft.position_value(model, t0, nodes_per_year)
    )


def build_basic_portfolio(
    model: MarketModel, i: int, t0: float, T: float, nodes_per_year: int = 48
) -> Portfolio:
    """Choice bond hedged by one unit of bond i (0 = domestic)."""
    if not 0 <= i <= model.n_spreads:
        raise ModelValidationError(f"bond index {i} out of range 0..{model.n_spreads}")
    positions = [Position("choice_bond", 1.0), Position("bond", -1.0, currency=i)]
    name = "none" if i == 0 else f"basic_q{i}"
    return _with_offsetting_cash(name, model, T, positions, t0, nodes_per_year)


def build_none_portfolio(model: MarketModel, t0: float, T: float, nodes_per_year: int = 48) -> Portfolio:
    """The option-blind hedge: the domestic bond against the choice bond."""
    return build_basic_portfolio(model, 0, t0, T, nodes_per_year)


def build_deterministic_portfolio(
    model: MarketModel,
    schedule: CrossingSchedule | None,
    t0: float,
    T: float,
    nodes_per_year: int = 48,
) -> Portfolio:
    """
    Crossing-time strategy: short the interval-maximal bond via forwards.

    For every crossing interval [S_k, S_{k+1}) the portfolio is short a
    forward on the winner's bond delivered at S_k and long the offsetting
    forward delivered at S_{k+1} (none for the last interval), so after
    physical settlement the net holding is minus one unit of the currently
    maximal currency's bond.
    """
    if schedule is None:
        schedule = model_crossing_schedule(model, t0, T)
    positions = [Position("choice_bond", 1.0)]
    times = list(schedule.times) + [None]
    for k, idx in enumerate(schedule.indices):
        start = times[k]
        nxt = times[k + 1]
        positions.append(Position("forward", -1.0, currency=idx, delivery=start))
        if nxt is not None:
            positions.append(Position("forward", +1.0, currency=idx, delivery=nxt))
    return _with_offsetting_cash("deterministic", model, T, positions, t0, nodes_per_year)


def build_stochastic_portfolio(
    model: MarketModel,
    weights: HedgeWeights,
    t0: float,
    T: float,
    nodes_per_year: int = 48,
) -> Portfolio:
    """Variance-minimizing strategy: alpha_i units of each bond."""
    positions = [Position("choice_bond", 1.0)]
    for i, a in enumerate(weights.alpha):
        if a != 0.0:
            positions.append(Position("bond", float(a), currency=i))
    return _with_offsetting_cash("stochastic", model, T, positions, t0, nodes_per_year)


def stochastic_strategy(
    model: MarketModel,
    t0: float,
    T: float,
    alpha0_policy: str = "cash_neutral",
    nodes_per_year: int = 48,
    pc_variance: float = math.nan,
) -> tuple[HedgeWeights, QuadraticForm, Portfolio]:
    """Assemble the quadratic form, solve for weights, build the portfolio."""
    form = assemble_quadratic(model, t0, T, nodes_per_year, pc_variance)
    pc = ctd_common_factor(model, t0, T, nodes_per_year) * zcb_domestic(model, t0, T)
    bonds = [zcb_foreign(model, i, t0, T) for i in range(model.n_spreads + 1)]
    weights = solve_min_variance(form, alpha0_policy, prices=[pc] + bonds)
    return weights, form, build_stochastic_portfolio(model, weights, t0, T, nodes_per_year)


# ---------------------------------------------------------------------------
# pathwise revaluation
# ---------------------------------------------------------------------------

def _conditional_domestic_bond(model, t, T, u0):
    """P(t, T | r_0 displacement u0) under the Hull-White dynamics."""
    spec = model.domestic
    load = (1.0 - math.exp(-spec.kappa * (T - t))) / spec.kappa
    base = -spec.mean_curve.integral(t, T) + 0.5 * integral_covariance(spec, spec, 1.0, t, T)
    return np.exp(base - load * u0)


def _conditional_spread_factor(model, i, t, T, ui):
    spec = model.spread(i)
    load = (1.0 - math.exp(-spec.kappa * (T - t))) / spec.kappa
    base = -spec.mean_curve.integral(t, T) + 0.5 * integral_covariance(spec, spec, 1.0, t, T)
    return np.exp(base - load * ui)


@dataclass(frozen=True)
class PortfolioPathStats:
    """Per-time summary of a portfolio's simulated values."""

    name: str
    times: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    sd_se: np.ndarray
    samples: np.ndarray  # [n_samples, times]


def evaluate_portfolio_paths(
    portfolios: Portfolio | Sequence[Portfolio],
    bundle: PathBundle,
    table: ConditionalCtdTable | None = None,
    n_samples: int = 8,
) -> list[PortfolioPathStats]:
    """
    Revalue portfolios along simulated paths at every observation time.

    The collateral-choice bond is repriced with the common-factor method
    re-anchored at each path state (via an interpolation table shared by
    all portfolios); plain bonds and forwards are repriced with the
    Hull-White closed forms; cash accrues at the realized domestic rate.
    """
    if isinstance(portfolios, Portfolio):
        portfolios = [portfolios]
    model = bundle.model
    maturities = {p.maturity for p in portfolios}
    if len(maturities) != 1:
        raise ModelValidationError("portfolios must share one maturity")
    maturity = maturities.pop()
    times = bundle.times
    if table is None:
        table = ConditionalCtdTable(model, times[times <= maturity], maturity)
    n_paths = bundle.n_paths
    out = []
    values = {p.name: np.empty((n_paths, times.size)) for p in portfolios}
    for k, t in enumerate(times):
        t = float(t)
        u = bundle.displacements(t)
        u0 = bundle.values[:, k, 0] - model.domestic.mean_curve(t)
        pdom = _conditional_domestic_bond(model, t, maturity, u0)
        if t < maturity:
            anchor = int(np.argmin(np.abs(table.anchor_times - t)))
            choice = table.evaluate(anchor, u) * pdom
        else:
            choice = np.ones(n_paths)
        bonds = {0: pdom}
        for i in range(1, model.n_spreads + 1):
            bonds[i] = _conditional_spread_factor(model, i, t, maturity, u[:, i - 1]) * pdom
        bank = bundle.bank_factor(bundle.plan.t0, t)
        for p in portfolios:
            acc = p.cash * bank
            for pos in p.positions:
                if pos.kind == "choice_bond":
                    acc = acc + pos.units * choice
                elif pos.kind == "bond":
                    acc = acc + pos.units * bonds[pos.currency]
                else:
                    if t >= pos.delivery:
                        acc = acc + pos.units * bonds[pos.currency]
                    else:
                        pdel = _conditional_domestic_bond(model, t, pos.delivery, u0)
                        acc = acc + pos.units * bonds[pos.currency] / pdel
            values[p.name][:, k] = acc
    for p in portfolios:
        v = values[p.name]
        mean = v.mean(axis=0)
        sd = v.std(axis=0, ddof=1)
        centered = v - mean[None, :]
        m4 = np.mean(centered**4, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            sd_se = np.sqrt(np.maximum(m4 - sd**4, 0.0) / (4.0 * np.maximum(sd, 1e-300) ** 2 * n_paths))
        sd_se = np.where(sd > 1e-14, sd_se, 0.0)
        out.append(
            PortfolioPathStats(p.name, times.copy(), mean, sd, sd_se, v[:n_samples].copy())
        )
    return out


# ---------------------------------------------------------------------------
# synthetic replication of a swap's CTD factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PnLAccount:
    """Hedge P&L account marked at every rebalancing time, one row per path."""

    times: np.ndarray
    values: np.ndarray  # [paths, times]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


def synthetic_replication_pnl(
    model: MarketModel,
    swap: SwapSpec,
    scheme: str,
    bundle: PathBundle,
    nodes_per_year: int = 24,
    tables: dict[float, ConditionalCtdTable] | None = None,
    full_account: bool = False,
) -> np.ndarray | PnLAccount:
    """
    Terminal P&L of hedging the collateral-choice swap with plain bonds.

    The hedge holds, per payment date, the swap leg scaled by a synthetic
    discount factor fixed at inception: 1 for scheme "none", the
    deterministic factor for "deterministic", the common-factor value for
    "common_factor".  The P&L account accrues at the realized domestic
    rate and is marked at every observation time of the bundle (which must
    contain all payment dates); the swap itself is marked with the
    conditional common-factor pricer.  Returns one terminal P&L per path,
    or the whole per-time account when `full_account` is set.
    """
    if scheme not in ("none", "deterministic", "common_factor"):
        raise ModelValidationError("scheme must be none, deterministic or common_factor")
    times = bundle.times
    for tk in swap.payment_dates:
        if not np.any(np.abs(times - tk) < 1e-9):
            raise ModelValidationError(
                f"payment date {tk:g} is not in the rebalancing grid"
            )
    model_t0 = bundle.plan.t0
    n_paths = bundle.n_paths
    if tables is None:
        tables = {}
        for tk in swap.payment_dates:
            anchors = times[times <= tk + 1e-12]
            tables[tk] = ConditionalCtdTable(
                model, anchors, tk, nodes_per_dim=7, nodes_per_year=nodes_per_year
            )

    # synthetic factor schedule per (observation time, payment date)
    synth = {}
    for tk in swap.payment_dates:
        for k, t in enumerate(times):
            t = float(t)
            if t > tk:
                continue
            if scheme == "none":
                synth[(t, tk)] = 1.0
            elif scheme == "deterministic":
                synth[(t, tk)] = ctd_deterministic(model, t, tk)
            else:
                synth[(t, tk)] = ctd_common_factor(model, t, tk, nodes_per_year)

    periods = swap.periods(model_t0)
    sign = 1.0 if swap.payer else -1.0
    fixings: dict[float, np.ndarray] = {}
    pnl = None
    prev_pi = None
    prev_t = None
    account = np.empty((n_paths, times.size)) if full_account else None
    for k, t in enumerate(times):
        t = float(t)
        u = bundle.displacements(t)
        u0 = bundle.values[:, k, 0] - model.domestic.mean_curve(t)
        # record fixings at period starts
        for s, e_, tau in periods:
            if abs(t - s) < 1e-9:
                p_end = _conditional_domestic_bond(model, t, e_, u0)
                fixings[s] = (1.0 / p_end - 1.0) / tau
        # mark the un-hedged residue sum_{T_k > t} (CTD_cond - C_j) * leg_k
        pi = np.zeros(n_paths)
        for (s, e_, tau) in periods:
            if e_ <= t + 1e-12:
                continue
            p_end = _conditional_domestic_bond(model, t, e_, u0)
            if t >= s - 1e-9:
                ell = fixings[s]
            else:
                p_start = _conditional_domestic_bond(model, t, s, u0)
                ell = (p_start / p_end - 1.0) / tau
            leg = sign * swap.notional * tau * p_end * (ell - swap.fixed_rate)
            tk_idx = tables[e_].anchor_times
            a_idx = int(np.argmin(np.abs(tk_idx - t)))
            ctd_cond = tables[e_].evaluate(a_idx, u)
            pi = pi + (ctd_cond - synth[(t, e_)]) * leg
        if pnl is None:
            pnl = pi.copy()
        else:
            pnl = pnl * bundle.bank_factor(prev_t, t) + (pi - prev_pi)
        if account is not None:
            account[:, k] = pnl
        prev_pi = pi
        prev_t = t
    if account is not None:
        return PnLAccount(times.copy(), account)
    return pnl
