"""Limit objects: generalized arcsine law, Levy tails, subordinators and
renewal processes, overshoots and the stationary correlation function."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import rng as rngmod
from ._validation import check_asymmetry, check_positive
from .dynamics import AliasTable, ClockPath, CorrelationEstimate
from .randscape import PRMPoints, TailSpec, residual_sum

KINDS = ("cst_minus", "int_minus", "ext_minus", "ext_plus", "stable", "tabulated", "delta_inf")
STABLE_KINDS = ("stable", "int_minus")
ATOM_KINDS = ("ext_minus", "ext_plus")


class IncompletePathError(ValueError):
    """The simulated range does not reach past the requested time."""


def alpha_bar(alpha: float, a: float) -> float:
    return (alpha - a) / (1.0 - a)


# ---------------------------------------------------------------------------
# generalized arcsine law

def _check_index(index):
    if not 0.0 < index < 1.0:
        raise ValueError(f"arcsine index must lie in (0, 1), got {index!r}")


def _asl_scalar(ab: float, u: float) -> float:
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    opts = dict(epsabs=1e-13, epsrel=1e-13, limit=200)
    # x = y^(1/ab) removes the x^(ab-1) singularity at 0
    m = min(u, 0.5)
    left, _ = integrate.quad(lambda y: (1.0 - y ** (1.0 / ab)) ** (-ab) / ab, 0.0, m**ab, **opts)
    right = 0.0
    if u > 0.5:
        # 1 - x = z^(1/(1-ab)) removes the (1-x)^(-ab) singularity at 1
        e = 1.0 / (1.0 - ab)
        right, _ = integrate.quad(lambda z: (1.0 - z**e) ** (ab - 1.0) * e, (1.0 - u) ** (1.0 - ab),
                                  0.5 ** (1.0 - ab), **opts)
    return min(1.0, math.sin(ab * math.pi) / math.pi * (left + right))


def asl_cdf(alpha_index: float, u):
    """Distribution function of the generalized arcsine law with index alpha_index."""
    _check_index(alpha_index)
    ua = np.asarray(u, dtype=float)
    if np.any((ua < 0) | (ua > 1)) or np.any(np.isnan(ua)):
        raise ValueError("u must lie in [0, 1]")
    out = np.array([_asl_scalar(alpha_index, float(x)) for x in ua.ravel()]).reshape(ua.shape)
    return float(out) if out.ndim == 0 else out


def asl_sample(alpha_index: float, size: int, rng) -> np.ndarray:
    """Inverse-transform draws from the generalized arcsine law (a Beta law)."""
    _check_index(alpha_index)
    gen = rngmod.generator(rng, rngmod.LIMIT)
    return special.betaincinv(alpha_index, 1.0 - alpha_index, gen.random(size))


# ---------------------------------------------------------------------------
# Levy tails

def _atoms(atoms) -> tuple[np.ndarray, float | None]:
    if isinstance(atoms, PRMPoints):
        return np.asarray(atoms.gamma, dtype=float), atoms.alpha
    g = np.asarray(atoms, dtype=float).ravel()
    return g, None


@dataclass(frozen=True, eq=False)
class LevyTail:
    """Tail nu(u, inf) of a Levy measure on (0, inf) together with a sampler.

    Atom kinds are mixtures of exponential laws: nu(u, inf) =
    sum_k w_k exp(-rate_k u) with w_k = gamma_k^a / norm and
    rate_k = gamma_k^-(1-a).
    """

    kind: str
    a: float = 0.0
    alpha: float | None = None
    norm: float = 1.0
    kappa: float | None = None
    abar: float | None = None
    atoms: np.ndarray | None = None
    tail: TailSpec | None = None
    r: float = 1.0
    sizes: np.ndarray | None = None
    masses: np.ndarray | None = None
    prm_alpha: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    # -- constructors -----------------------------------------------------
    @classmethod
    def cst_minus(cls, tail: TailSpec, a: float, r: float = 1.0) -> "LevyTail":
        """Inter-arrival law E[tau^a exp(-u (r/tau)^(1-a))] / E tau^a."""
        check_asymmetry(a)
        check_positive(r, "r")
        m = tail.moment(a)
        if not math.isfinite(m):
            raise ValueError("E tau^a must be finite for the constant-scale measure")
        return cls("cst_minus", a=a, alpha=tail.alpha, norm=m, tail=tail, r=float(r))

    @classmethod
    def int_minus(cls, alpha: float, a: float, moment: float | None = None) -> "LevyTail":
        """u^-abar (alpha/(1-a)) Gamma(abar) / E tau^a; Pareto x_min=1 moment by default."""
        check_asymmetry(a)
        if not a < alpha < 1:
            raise ValueError("need 0 <= a < alpha < 1")
        if moment is None:
            moment = alpha / (alpha - a)
        ab = alpha_bar(alpha, a)
        kappa = alpha / (1.0 - a) * special.gamma(ab) / moment
        return cls("int_minus", a=a, alpha=alpha, norm=float(moment), kappa=float(kappa), abar=ab)

    @classmethod
    def stable(cls, abar: float, kappa: float = 1.0) -> "LevyTail":
        """Pure power tail kappa u^-abar."""
        _check_index(abar)
        check_positive(kappa, "kappa")
        return cls("stable", abar=float(abar), kappa=float(kappa))

    @classmethod
    def ext_minus(cls, atoms, a: float, moment: float) -> "LevyTail":
        check_asymmetry(a)
        check_positive(moment, "moment")
        g, pa = _atoms(atoms)
        return cls._atom_tail("ext_minus", g, a, float(moment), pa)

    @classmethod
    def ext_plus(cls, atoms, a: float) -> "LevyTail":
        check_asymmetry(a)
        g, pa = _atoms(atoms)
        if g.size == 0:
            raise ValueError("atom list is empty")
        return cls._atom_tail("ext_plus", g, a, float(np.sum(np.sort(g**a))), pa)

    @classmethod
    def _atom_tail(cls, kind, g, a, norm, prm_alpha):
        if g.size == 0:
            raise ValueError("atom list is empty")
        if np.any(g <= 0) or not np.all(np.isfinite(g)):
            raise ValueError("atoms must be positive and finite")
        g = g.copy()
        g.setflags(write=False)
        return cls(kind, a=a, alpha=prm_alpha, norm=norm, atoms=g, prm_alpha=prm_alpha)

    @classmethod
    def tabulated(cls, sizes, masses) -> "LevyTail":
        """Finite measure sum_j masses_j delta_{sizes_j}."""
        x = np.asarray(sizes, dtype=float).ravel()
        c = np.asarray(masses, dtype=float).ravel()
        if x.size == 0 or x.size != c.size:
            raise ValueError("sizes and masses must be non-empty and of equal length")
        if np.any(x <= 0) or np.any(c < 0):
            raise ValueError("sizes must be positive and masses nonnegative")
        return cls("tabulated", sizes=x, masses=c)

    @classmethod
    def delta_inf(cls) -> "LevyTail":
        """Inter-arrival law concentrated at infinity (survival identically 1)."""
        return cls("delta_inf")

    # -- evaluation -------------------------------------------------------
    @property
    def weights(self) -> np.ndarray:
        return self.atoms**self.a / self.norm

    @property
    def rates(self) -> np.ndarray:
        return self.atoms ** (-(1.0 - self.a))

    @property
    def is_probability(self) -> bool:
        return abs(self.total_mass() - 1.0) < 1e-9

    def total_mass(self) -> float:
        if self.kind in STABLE_KINDS:
            return math.inf
        if self.kind in ATOM_KINDS:
            return float(np.sum(np.sort(self.weights)))
        if self.kind == "tabulated":
            return float(self.masses.sum())
        return 1.0

    def survival(self, u):
        """nu(u, inf); u = 0 gives the total mass."""
        ua = np.asarray(u, dtype=float)
        if np.any(ua < 0) or np.any(np.isnan(ua)):
            raise ValueError("u must be nonnegative")
        flat = ua.ravel()
        if self.kind in STABLE_KINDS:
            with np.errstate(divide="ignore"):
                out = self.kappa * flat ** (-self.abar)
        elif self.kind in ATOM_KINDS:
            out = self._mixture(flat, self.weights)
        elif self.kind == "cst_minus":
            out = np.array([self._cst(x) for x in flat])
        elif self.kind == "tabulated":
            out = np.array([self.masses[self.sizes > x].sum() for x in flat])
        else:
            out = np.ones(flat.size)
        out = out.reshape(ua.shape)
        return float(out) if out.ndim == 0 else out

    __call__ = survival

    def _mixture(self, u: np.ndarray, w: np.ndarray, chunk: int = 1 << 18) -> np.ndarray:
        lam = self.rates
        out = np.zeros(u.size)
        for lo in range(0, lam.size, chunk):
            out += np.exp(-np.outer(u, lam[lo: lo + chunk])) @ w[lo: lo + chunk]
        return out

    def _cst(self, u: float) -> float:
        a, r = self.a, self.r
        if u == 0.0:
            return 1.0
        return self.tail.expect(lambda x: x**a * math.exp(-u * (r / x) ** (1.0 - a))) / self.norm

    def truncated_mass(self, eps: float) -> float:
        """nu(eps, inf), the jump intensity after truncation."""
        return self.survival(float(eps))

    def integral(self, lo: float = 0.0, hi: float = math.inf) -> float:
        """int_lo^hi nu(u, inf) du, in closed form where one exists."""
        if lo < 0 or hi < lo:
            raise ValueError("need 0 <= lo <= hi")
        if self.kind in ATOM_KINDS:
            lam, w = self.rates, self.weights
            ehi = np.exp(-lam * hi) if math.isfinite(hi) else 0.0
            return float(np.sum(w / lam * (np.exp(-lam * lo) - ehi)))
        if self.kind == "tabulated":
            return float(np.sum(self.masses * np.clip(self.sizes - lo, 0.0, hi - lo)))
        if self.kind in STABLE_KINDS:
            if self.abar <= 1 and math.isinf(hi):
                return math.inf
            p = 1.0 - self.abar
            return self.kappa * (hi**p - lo**p) / p
        if self.kind == "delta_inf":
            return hi - lo
        return quad_tail_integral(self, lo, hi)

    def small_jump_mean(self, eps: float) -> float:
        """int_0^eps x nu(dx), the mean mass discarded per unit time by truncation."""
        if eps <= 0:
            return 0.0
        if self.kind in STABLE_KINDS:
            ab = self.abar
            return self.kappa * ab * eps ** (1.0 - ab) / (1.0 - ab)
        if self.kind in ATOM_KINDS:
            lam, w = self.rates, self.weights
            z = lam * eps
            return float(np.sum(w * -np.expm1(-z) / lam - w * z * np.exp(-z) / lam))
        if self.kind == "tabulated":
            keep = self.sizes <= eps
            return float(np.sum(self.masses[keep] * self.sizes[keep]))
        if self.kind == "delta_inf":
            return 0.0
        # integration by parts: int_0^eps x nu(dx) = int_0^eps nu(u) du - eps nu(eps)
        head, _ = integrate.quad(self._cst, 0.0, eps, epsrel=1e-8, limit=200)
        return max(0.0, head - eps * self._cst(eps))

    # -- sampling ---------------------------------------------------------
    def sample_jumps(self, gen: np.random.Generator, size: int, eps: float = 0.0) -> np.ndarray:
        """i.i.d. draws from nu restricted to (eps, inf), normalized."""
        if self.kind == "delta_inf":
            return np.full(size, np.inf)
        if self.kind in STABLE_KINDS:
            if eps <= 0:
                raise ValueError("infinite measure: a positive truncation eps is required")
            return eps * gen.random(size) ** (-1.0 / self.abar)
        if self.kind in ATOM_KINDS:
            table = self._atom_table(eps)
            k = table.sample(gen, size)
            return eps + gen.standard_exponential(size) / self.rates[k]
        if self.kind == "tabulated":
            table = self._cache.get(("tab", eps))
            if table is None:
                keep = np.where(self.sizes > eps, self.masses, 0.0)
                if keep.sum() <= 0:
                    raise ValueError("no mass above the truncation level")
                table = self._cache[("tab", eps)] = AliasTable(keep / keep.sum())
            return self.sizes[table.sample(gen, size)]
        # cst_minus: size-biased depth, then an exponential holding time
        out = np.empty(size)
        todo = np.arange(size)
        while todo.size:
            tau = self._size_biased(gen, todo.size)
            x = gen.standard_exponential(todo.size) * (tau / self.r) ** (1.0 - self.a)
            ok = x > eps
            out[todo[ok]] = x[ok]
            todo = todo[~ok]
        return out

    def _atom_table(self, eps: float) -> AliasTable:
        key = ("atoms", float(eps))
        table = self._cache.get(key)
        if table is None:
            lw = self.a * np.log(self.atoms) - self.rates * eps
            w = np.exp(lw - lw.max())
            table = self._cache[key] = AliasTable(w / w.sum())
        return table

    def _size_biased(self, gen, size: int) -> np.ndarray:
        """Depth drawn from P(tau* in dx) proportional to x^a P(tau in dx)."""
        t = self.tail
        if t.kind == "degenerate":
            return np.full(size, float(t.value))
        if t.is_pure_pareto:
            # the tilt of a Pareto(alpha) by x^a is Pareto(alpha - a)
            return t.x_min * (1.0 - gen.random(size)) ** (-1.0 / (t.alpha - self.a))
        y, cdf = self._cache.get("sb") or self._size_biased_table()
        return t.quantile_log(np.interp(gen.random(size), cdf, y))

    def _size_biased_table(self):
        t = self.tail
        y = np.concatenate([np.linspace(0.0, 1.0, 201)[:-1], np.geomspace(1.0, 700.0 * t.alpha, 4000)])
        dens = t.quantile_log(y) ** self.a * np.exp(-y)
        cdf = integrate.cumulative_trapezoid(dens, y, initial=0.0)
        cdf /= cdf[-1]
        self._cache["sb"] = (y, cdf)
        return y, cdf


def levy_tail(kind: str, params: dict, u):
    """Evaluate nu(u, inf) for a measure given by ``kind`` and constructor params."""
    if kind not in KINDS:
        raise ValueError(f"unknown measure kind {kind!r}")
    if np.any(np.asarray(u, dtype=float) <= 0):
        raise ValueError("u must be positive")
    return getattr(LevyTail, kind)(**params).survival(u)


def quad_tail_integral(tail: LevyTail, lo: float = 0.0, hi: float = math.inf, rel_tol: float = 1e-10) -> float:
    """int_lo^hi nu(u, inf) du by adaptive quadrature in log u.

    Used as an independent check of the closed forms; the log substitution
    resolves the widely separated scales of atom mixtures.
    """
    if tail.kind in ATOM_KINDS:
        scales = 1.0 / tail.rates
        x_min, x_max = math.log(scales.min()) - 30.0, math.log(scales.max()) + 5.0
    else:
        x_min, x_max = -30.0, 30.0
    x_lo = math.log(lo) if lo > 0 else x_min
    x_hi = math.log(hi) if math.isfinite(hi) else max(x_max, x_lo + 1.0)
    total = 0.0
    if lo == 0.0:
        # head: nu is bounded by its total mass on (0, e^x_lo)
        total += tail.survival(math.exp(x_lo)) * math.exp(x_lo)
    edges = np.linspace(x_lo, x_hi, max(2, int(math.ceil(x_hi - x_lo)) + 1))
    f = lambda x: float(tail.survival(math.exp(x))) * math.exp(x)  # noqa: E731
    for a_, b_ in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a_, b_, epsabs=0.0, epsrel=rel_tol, limit=200)
        total += val
    if math.isinf(hi) and tail.kind in ATOM_KINDS:
        total += tail.integral(math.exp(x_hi))
    return total


# ---------------------------------------------------------------------------
# paths

@dataclass
class LimitPath:
    """Jump sizes of a subordinator (with jump times) or renewal process."""

    sizes: np.ndarray
    values: np.ndarray
    times: np.ndarray | None = None
    indices: np.ndarray | None = None
    eps: float = 0.0
    bias_bound: float = 0.0
    start: float = 0.0

    @property
    def horizon(self) -> float:
        return float(self.values[-1]) if self.values.size else self.start

    def range_points(self) -> np.ndarray:
        return np.concatenate([[self.start], self.values])


def simulate_subordinator(tail: LevyTail, T: float, eps: float, rng) -> LimitPath:
    """Compound Poisson approximation keeping only jumps above eps on [0, T]."""
    check_positive(T, "T")
    lam = tail.truncated_mass(eps)
    if not math.isfinite(lam):
        raise ValueError("truncated mass is infinite; increase eps")
    gen = rngmod.generator(rng, rngmod.LIMIT)
    N = gen.poisson(lam * T)
    times = np.sort(gen.uniform(0.0, T, N))
    sizes = tail.sample_jumps(gen, N, eps) if N else np.empty(0)
    return LimitPath(sizes, np.cumsum(sizes), times=times, eps=float(eps),
                     bias_bound=float(T * tail.small_jump_mean(eps)))


def simulate_renewal(tail: LevyTail, k_max: int, rng) -> LimitPath:
    """R(k) = xi_1 + ... + xi_k with xi i.i.d. from a probability tail."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not tail.is_probability:
        raise ValueError("renewal inter-arrival tail must have total mass 1")
    gen = rngmod.generator(rng, rngmod.LIMIT)
    sizes = tail.sample_jumps(gen, k_max)
    return LimitPath(sizes, np.cumsum(sizes), indices=np.arange(1, k_max + 1))


def overshoot(path, t: float) -> tuple[float, float]:
    """(D_t, theta_t): the first range point strictly beyond t and its excess."""
    if isinstance(path, ClockPath):
        pts, horizon = path.values, path.horizon
    elif isinstance(path, LimitPath):
        pts, horizon = path.range_points(), path.horizon
    else:
        pts = np.asarray(path, dtype=float)
        horizon = float(pts[-1]) if pts.size else 0.0
    if horizon <= t:
        raise IncompletePathError(f"path horizon {horizon} does not exceed t={t}")
    i = int(np.searchsorted(pts, t, side="right"))
    if i >= pts.size:
        raise IncompletePathError(f"no range point beyond t={t}")
    D = float(pts[i])
    return D, D - t


# ---------------------------------------------------------------------------
# stationary objects

@dataclass(frozen=True, eq=False)
class StationaryDelay:
    """Delay with P(sigma > v) = sum_k (gamma_k / sum gamma) exp(-v gamma_k^-(1-a))."""

    atoms: np.ndarray
    a: float

    def survival(self, v):
        return stationary_correlation(self.atoms, self.a, v)

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        k = _alias_for(self).sample(gen, size)
        return gen.standard_exponential(size) * self.atoms[k] ** (1.0 - self.a)


_DELAY_TABLES: dict = {}


def _alias_for(delay: StationaryDelay) -> AliasTable:
    key = id(delay)
    hit = _DELAY_TABLES.get(key)
    if hit is None or hit[0] is not delay:
        g = delay.atoms
        hit = _DELAY_TABLES[key] = (delay, AliasTable(g / g.sum()))
    return hit[1]


def stationary_delay(atoms, a: float) -> StationaryDelay:
    g, _ = _atoms(atoms)
    if g.size == 0:
        raise ValueError("atom list is empty")
    return StationaryDelay(g, check_asymmetry(a))


def stationary_correlation(atoms, a: float, s, with_bound: bool = False):
    """sum_k (gamma_k / sum_l gamma_l) exp(-s gamma_k^-(1-a)) over the truncation."""
    g, pa = _atoms(atoms)
    if g.size == 0:
        raise ValueError("atom list is empty")
    sa = np.asarray(s, dtype=float)
    if np.any(sa < 0):
        raise ValueError("s must be nonnegative")
    w = g / np.sum(np.sort(g))
    lam = g ** (-(1.0 - a))
    val = (np.exp(-np.outer(sa.ravel(), lam)) @ w).reshape(sa.shape)
    val = float(val) if val.ndim == 0 else val
    if not with_bound:
        return val
    # dropping mass R from numerator and normalizer moves the ratio by at most R / sum
    bound = 2.0 * residual_sum(pa, g.size, 1.0) / g.sum() if pa is not None else 0.0
    return val, bound


def mean_lifetime(tail: LevyTail, with_bound: bool = False):
    """m = sum gamma_k / norm for the atom kinds (norm = E tau^a or sum gamma^a)."""
    if tail.kind not in ATOM_KINDS:
        raise ValueError("mean lifetime is defined for the atom kinds")
    m = float(np.sum(np.sort(tail.atoms)) / tail.norm)
    if not with_bound:
        return m
    bound = residual_sum(tail.prm_alpha, tail.atoms.size, 1.0) / tail.norm if tail.prm_alpha else 0.0
    return m, bound


# ---------------------------------------------------------------------------
# correlation of the limit process

def _passage_batch(tail, delay, t, size, eps, gen, gen_delay):
    pos = np.zeros(size) if delay is None else np.asarray(delay.sample(gen_delay, size), dtype=float)
    active = np.flatnonzero(pos <= t)
    while active.size:
        pos[active] += tail.sample_jumps(gen, active.size, eps)
        active = active[pos[active] <= t]
    return pos


def limit_passage(tail: LevyTail, t: float, M: int, rng, eps: float = 0.0, delay=None,
                  threads: int = 1) -> np.ndarray:
    """First range point beyond t for M replicas of the (delayed) limit process.

    The range of a pure-jump process is the set of partial sums of its jumps,
    so jump times are not needed. The delay uses its own stream, which makes
    it independent of the jumps.
    """
    sizes = rngmod.batch_sizes(M)

    def run(i):
        return _passage_batch(tail, delay, t, sizes[i], eps, rngmod.generator(rng, rngmod.LIMIT, i),
                              rngmod.generator(rng, rngmod.DELAY, i))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    return np.concatenate(parts) if parts else np.empty(0)


def limit_correlation(tail: LevyTail, delay, t: float, s: float, M: int, rng, eps: float | None = None,
                      threads: int = 1) -> CorrelationEstimate:
    """P(theta_t >= s) for the limit process, by Monte Carlo or the arcsine fast path."""
    if t < 0 or s < 0:
        raise ValueError("need 0 <= t < t+s")
    if s == 0:
        return CorrelationEstimate(1.0, 0.0, M, "analytic", M)
    if tail.kind in STABLE_KINDS and delay is None:
        if t == 0:
            return CorrelationEstimate(0.0, 0.0, M, "analytic", 0)
        return CorrelationEstimate(asl_cdf(tail.abar, 1.0 / (1.0 + s / t)), 0.0, M, "analytic", 0)
    if eps is None:
        eps = 0.0 if tail.is_probability or tail.kind == "tabulated" else 1e-4 * min(t, s) if t > 0 else 1e-4 * s
    D = limit_passage(tail, t, M, rng, eps, delay, threads)
    return CorrelationEstimate.from_counts(int(np.count_nonzero(D >= t + s)), M, "limit")


def tail_table(tail: LevyTail, u_grid) -> str:
    """CSV table (u, nu) for plotting."""
    u = np.asarray(u_grid, dtype=float)
    nu = np.atleast_1d(tail.survival(u))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "nu"])
    for x, y in zip(u, nu):
        w.writerow([repr(float(x)), repr(float(y))])
    return buf.getvalue()
