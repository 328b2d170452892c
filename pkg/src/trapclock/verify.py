"""Numerical checks of the clock-process convergence conditions, plus the
statistics used by the tests (KS distance, log-log slopes, envelope fits)."""
from __future__ import annotations

import json
import math
from collections import namedtuple
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, special

from ._validation import check_sorted
from .dynamics import ChainModel, CorrelationEstimate, clock_increment_tail, initial_tail
from .limits import LevyTail, asl_cdf

SCHEMA_VERSION = 1
ANALYTIC_TOL = 1e-9

KSResult = namedtuple("KSResult", ["statistic", "pvalue"])
RVFit = namedtuple("RVFit", ["slope", "intercept", "r2"])


@dataclass
class ConditionReport:
    """Grid of computed values against targets, with a pass/fail verdict.

    ``verdict`` is None when the condition is not meaningful for the chain,
    for example (A2) with a constant index scale.
    """

    condition: str
    grid: list
    computed: list
    target: list
    tol: float | None
    verdict: bool | None
    rate_fit: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def deviations(self) -> list:
        return [abs(c - t) for c, t in zip(self.computed, self.target)]

    @property
    def max_deviation(self) -> float:
        d = self.deviations
        return max(d) if d else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deviations"] = self.deviations
        d["max_deviation"] = self.max_deviation
        d["schema_version"] = SCHEMA_VERSION
        return _plain(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def summary(self) -> str:
        v = {True: "PASS", False: "FAIL", None: "n/a"}[self.verdict]
        what = "max value" if not any(self.target) else "max deviation"
        lines = [f"condition {self.condition}: {v}  ({what} {self.max_deviation:.3e}, tol {self.tol})",
                 f"  grid points: {len(self.grid)}"]
        if self.rate_fit:
            fit = ", ".join(f"{k}={val:.4g}" for k, val in self.rate_fit.items() if isinstance(val, (int, float)))
            lines.append(f"  fit: {fit}")
        return "\n".join(lines)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _verdict(dev, tol):
    if tol is None:
        return None
    return bool(max(dev, default=0.0) <= tol)


def _nu_n(chain, u_grid):
    return np.atleast_1d(clock_increment_tail(chain, np.asarray(u_grid, dtype=float)))


def check_condition_A1(chain: ChainModel, target: LevyTail, t_grid, u_grid, tol: float = ANALYTIC_TOL
                       ) -> ConditionReport:
    """(floor(a_n t)/a_n) nu_n(u, inf) against t nu(u, inf).

    With a_n = 1 the left side only matches at integer t, where it reduces to
    the pointwise convergence of nu_n.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    u_grid = np.asarray(u_grid, dtype=float)
    if t_grid.size == 0 or u_grid.size == 0 or np.any(u_grid <= 0):
        raise ValueError("grids must be non-empty and u_grid positive")
    a_n = chain.scale.a_n
    nu_n = _nu_n(chain, u_grid)
    nu = np.atleast_1d(target.survival(u_grid))
    grid, comp, targ = [], [], []
    for t in t_grid:
        f = math.floor(a_n * t) / a_n
        for u, x, y in zip(u_grid, nu_n, nu):
            grid.append([float(t), float(u)])
            comp.append(float(f * x))
            targ.append(float(t * y))
    dev = [abs(c - t) for c, t in zip(comp, targ)]
    return ConditionReport("A1", grid, comp, targ, tol, _verdict(dev, tol),
                           extra={"a_n": a_n, "nu_n": nu_n.tolist(), "u_grid": u_grid.tolist(),
                                  "target_kind": target.kind})


def check_condition_A2(chain: ChainModel, t_grid, u_grid, tol: float = 1e-2) -> ConditionReport:
    """[nu_n(u, inf)]^2 floor(a_n t) / a_n^2, which must vanish for diverging a_n."""
    a_n = chain.scale.a_n
    nu_n = _nu_n(chain, u_grid)
    grid, comp = [], []
    for t in np.asarray(t_grid, dtype=float):
        for u, x in zip(np.asarray(u_grid, dtype=float), nu_n):
            grid.append([float(t), float(u)])
            comp.append(float(x * x * math.floor(a_n * t) / a_n**2))
    verdict = None if a_n == 1.0 else _verdict(comp, tol)
    return ConditionReport("A2", grid, comp, [0.0] * len(comp), tol, verdict, extra={"a_n": a_n})


def small_jump_integral(chain: ChainModel, delta):
    """int_0^delta nu_n(u, inf) du = a_n sum_x pi_n(x) h(x) (1 - exp(-delta/h(x)))."""
    d = np.atleast_1d(np.asarray(delta, dtype=float))
    h = chain.hold
    out = np.array([chain.scale.a_n * np.dot(chain.pi, -h * np.expm1(-x / h)) for x in d])
    return out if np.ndim(delta) else float(out[0])


def check_condition_A3(chain: ChainModel, delta_grid, tol: float | None = None) -> ConditionReport:
    """Integral of nu_n near zero, with a c delta^kappa envelope fit and the
    truncated-mean sum as a cross-check."""
    d = np.asarray(delta_grid, dtype=float)
    if d.size == 0 or np.any(d <= 0) or np.any(d > 1):
        raise ValueError("delta_grid must lie in (0, 1]")
    vals = np.atleast_1d(small_jump_integral(chain, d))
    h = chain.hold
    alt = np.array([chain.scale.a_n * np.dot(chain.pi, np.where(h <= x, h, 0.0)) for x in d])
    fit = None
    if d.size >= 3 and np.all(vals > 0):
        r = rv_index_estimate(d, vals)
        fit = {"c": math.exp(r.intercept), "kappa": r.slope, "r2": r.r2}
    verdict = None
    if fit is not None:
        verdict = fit["kappa"] > 0
        if tol is not None:
            verdict = verdict and bool(vals[np.argmin(d)] <= tol)
    eps_n = np.maximum.accumulate(vals[np.argsort(d)])
    return ConditionReport("A3", d.tolist(), vals.tolist(), [0.0] * d.size, tol, verdict, rate_fit=fit,
                           extra={"alt_sum": alt.tolist(), "eps_n": eps_n.tolist()})


def check_condition_A0(chain: ChainModel, initial, target, v_grid, tol: float = ANALYTIC_TOL) -> ConditionReport:
    """P(sigma_n >= v) against 1 - F(v).

    ``target`` is a callable v -> 1 - F(v), an object with ``survival``, or
    ``"zero"`` for the delay that vanishes in the limit.
    """
    v = np.asarray(v_grid, dtype=float)
    if np.any(v < 0):
        raise ValueError("v_grid must be nonnegative")
    comp = np.atleast_1d(initial_tail(chain, initial, v))
    if isinstance(target, str):
        if target != "zero":
            raise ValueError(f"unknown special target {target!r}")
        targ = np.where(v == 0, 1.0, 0.0)
    else:
        fn = target.survival if hasattr(target, "survival") else target
        targ = np.atleast_1d(np.asarray(fn(v), dtype=float))
    dev = np.abs(comp - targ)
    return ConditionReport("A0", v.tolist(), comp.tolist(), targ.tolist(), tol, _verdict(dev.tolist(), tol))


def limit_measure_deviation(chain: ChainModel, target: LevyTail, u_grid) -> np.ndarray:
    """|nu_n(u, inf) - nu(u, inf)| on the grid."""
    u = np.asarray(u_grid, dtype=float)
    return np.abs(_nu_n(chain, u) - np.atleast_1d(target.survival(u)))


def n_grid_sweep(deviation_fn, n_grid) -> dict:
    """Evaluate ``deviation_fn(n)`` (a sup-deviation) over n and record monotonicity."""
    ns = [int(n) for n in n_grid]
    devs = [float(deviation_fn(n)) for n in ns]
    return {"n": ns, "deviation": devs, "decreasing": bool(all(b < a for a, b in zip(devs, devs[1:])))}


def landscape_quantiles(values, q=(0.0, 0.25, 0.5, 0.75, 1.0)) -> dict:
    """Across-landscape quantiles of a per-landscape statistic."""
    v = np.asarray(values, dtype=float)
    return {f"q{int(round(100 * p)):02d}": float(np.quantile(v, p)) for p in q}


def fit_envelope(u, deviations, scale, c2_grid=None) -> dict:
    """Fit sigma(u) = c0 + c1 u^(-1+c2), c0, c1 >= 0, with dev <= scale * sigma.

    ``deviations`` and ``scale`` may be stacked over several n (rows). For each
    c2 a linear program minimises sum_u sigma(u); the best c2 is kept.
    """
    u = np.asarray(u, dtype=float)
    dev = np.atleast_2d(np.asarray(deviations, dtype=float))
    sc = np.atleast_1d(np.asarray(scale, dtype=float))
    need = (dev / sc[:, None]).max(axis=0)
    if c2_grid is None:
        c2_grid = np.linspace(0.0, 1.0, 41)
    best = None
    for c2 in c2_grid:
        p = u ** (-1.0 + c2)
        res = optimize.linprog(c=[u.size, p.sum()], A_ub=-np.column_stack([np.ones_like(u), p]), b_ub=-need,
                               bounds=[(0, None), (0, None)], method="highs")
        if res.success and (best is None or res.fun < best[0] - 1e-15):
            best = (res.fun, res.x[0], res.x[1], float(c2))
    if best is None:
        raise RuntimeError("envelope fit failed")
    return {"c0": float(best[1]), "c1": float(best[2]), "c2": best[3], "objective": float(best[0])}


def envelope(fit: dict, u):
    u = np.asarray(u, dtype=float)
    return fit["c0"] + fit["c1"] * u ** (-1.0 + fit["c2"])


def ks_distance(sample, cdf) -> KSResult:
    """One-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    x = check_sorted(sample)
    m = x.size
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, m + 1)
    d = max(float(np.max(i / m - F)), float(np.max(F - (i - 1) / m)))
    return KSResult(d, float(special.kolmogorov(math.sqrt(m) * d)))


def rv_index_estimate(u, f) -> RVFit:
    """Least-squares line through (log u, log f)."""
    u = np.asarray(u, dtype=float)
    f = np.asarray(f, dtype=float)
    if u.size < 3 or u.size != f.size:
        raise ValueError("need at least 3 points")
    if np.any(f <= 0) or np.any(u <= 0):
        raise ValueError("values must be positive")
    x, y = np.log(u), np.log(f)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    # a flat line leaves only rounding noise in ss, which would make r2 meaningless
    flat = ss <= (1e-12 * max(1.0, float(np.max(np.abs(y))))) ** 2 * y.size
    r2 = 1.0 if flat else 1.0 - float(np.sum(resid**2) / ss)
    return RVFit(float(slope), float(icpt), r2)


REGIMES = ("t_inf", "fixed", "t_zero")


def compare_aging(estimates, target_index: float, regime: str = "fixed", systematic: float = 0.02,
                  k: float = 3.0, stranded_level: float = 0.99) -> dict:
    """Compare C(t, rho t) estimates with Asl(1/(1+rho)).

    ``estimates`` is a sequence of (t, rho, CorrelationEstimate). For
    ``t_inf`` the t values are read in increasing order, for ``t_zero`` in
    decreasing order, and the deviation at the last t is the one that counts.
    """
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}")
    est = [(float(t), float(r), e) for t, r, e in estimates]
    rhos = sorted({r for _, r, _ in est})
    if len(rhos) < 3:
        raise ValueError("sweep must cover at least 3 rho values")
    ts = sorted({t for t, _, _ in est}, reverse=(regime == "t_zero"))
    rows = []
    for t, r, e in est:
        target = asl_cdf(target_index, 1.0 / (1.0 + r))
        rows.append({"t": t, "rho": r, "mean": e.mean, "stderr": e.stderr, "target": target,
                     "deviation": abs(e.mean - target), "allowed": k * (e.stderr + systematic)})
    last = [row for row in rows if row["t"] == ts[-1]]
    by_t = [max(row["deviation"] for row in rows if row["t"] == t) for t in ts]
    stranded = all(e.mean >= stranded_level for _, _, e in est)
    return {
        "regime": regime, "target_index": target_index, "t_sequence": ts, "max_deviation_by_t": by_t,
        "rows": rows, "max_deviation": max(row["deviation"] for row in last),
        "pass": all(row["deviation"] < row["allowed"] for row in last), "stranded": stranded,
    }


def estimate_rows(t: float, rhos, estimates: list[CorrelationEstimate]):
    """Pair a sweep over rho at fixed t with its estimates for compare_aging."""
    return [(t, r, e) for r, e in zip(rhos, estimates)]
