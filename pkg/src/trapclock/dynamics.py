"""Trap dynamics on the complete graph: chain construction, clock paths and
first-passage estimates of the time-time correlation function."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from ._validation import check_asymmetry, check_probability_vector
from .randscape import Landscape, ScaleSpec, gibbs_measure

CORRELATION_COLUMNS = ("n", "alpha", "a", "scale_class", "b_n", "t", "rho", "mean", "stderr", "M",
                       "landscape_seed")


class AliasTable:
    """Walker/Vose alias table: O(n) setup, O(1) per draw."""

    def __init__(self, probs):
        p = check_probability_vector(probs, atol=1e-8)
        n = p.size
        q = p * n
        alias = np.zeros(n, dtype=np.int64)
        prob = np.zeros(n)
        small = [i for i in range(n) if q[i] < 1.0]
        large = [i for i in range(n) if q[i] >= 1.0]
        q = q.tolist()
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = q[s]
            alias[s] = g
            q[g] = (q[g] + q[s]) - 1.0
            if q[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers carry probability one up to rounding
        for i in large + small:
            prob[i] = 1.0
            alias[i] = i
        self.prob = prob
        self.alias = alias
        self.n = n

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        k = gen.integers(0, self.n, size=size)
        keep = gen.random(size) < self.prob[k]
        return np.where(keep, k, self.alias[k])

    def probabilities(self) -> np.ndarray:
        """Reconstruct the categorical law from the table."""
        out = self.prob / self.n
        np.add.at(out, self.alias, (1.0 - self.prob) / self.n)
        return out


@dataclass(frozen=True, eq=False)
class ChainModel:
    landscape: Landscape
    a: float
    scale: ScaleSpec
    rates: np.ndarray
    pi: np.ndarray
    sampler: AliasTable
    #: rescaled mean holding time (c_n lambda_n(x))^-1 = (tau(x)/r_n)^(1-a)
    hold: np.ndarray

    @property
    def n(self) -> int:
        return self.landscape.n

    @property
    def tau(self) -> np.ndarray:
        return self.landscape.tau

    @property
    def lambda_(self) -> np.ndarray:
        """Holding rates; ``lambda`` is a keyword, hence the underscore."""
        return self.rates


@dataclass
class ClockPath:
    """Increasing marks c_n^-1 S~_n(i); ``values[0]`` is the delay when
    ``includes_initial`` is set."""

    values: np.ndarray
    includes_initial: bool = True
    horizon: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.values) <= 0):
            raise ValueError("clock marks must be strictly increasing")
        if self.values.size and self.horizon < self.values[-1]:
            self.horizon = float(self.values[-1])


@dataclass
class CorrelationEstimate:
    mean: float
    stderr: float
    replicas: int
    landscape_id: str = ""
    successes: int = 0

    @classmethod
    def from_counts(cls, successes: int, replicas: int, landscape_id: str = "") -> "CorrelationEstimate":
        if replicas <= 0:
            raise ValueError("need at least one replica")
        m = successes / replicas
        return cls(m, float(np.sqrt(m * (1.0 - m) / replicas)), replicas, landscape_id, successes)

    def merge(self, other: "CorrelationEstimate") -> "CorrelationEstimate":
        return CorrelationEstimate.from_counts(self.successes + other.successes, self.replicas + other.replicas,
                                               self.landscape_id)


def build_chain(landscape: Landscape, a: float, scale: ScaleSpec) -> ChainModel:
    """Holding rates tau^-(1-a), jump law pi_n proportional to tau^a."""
    check_asymmetry(a)
    if landscape.n == 0:
        raise ValueError("empty landscape")
    tau = landscape.tau
    rates = tau ** (-(1.0 - a))
    pi = gibbs_measure(landscape, a)
    hold = (tau / scale.r_n) ** (1.0 - a)
    for arr in (rates, pi, hold):
        arr.setflags(write=False)
    return ChainModel(landscape, a, scale, rates, pi, AliasTable(pi), hold)


def resolve_initial(chain: ChainModel, initial) -> np.ndarray:
    """Initial law from a preset name, a vertex index, or an explicit vector."""
    if isinstance(initial, str):
        key = initial.lower()
        if key in ("pi", "pi_n"):
            return chain.pi
        if key == "gibbs":
            return gibbs_measure(chain.landscape, 1.0)
        if key == "uniform":
            return np.full(chain.n, 1.0 / chain.n)
        if key == "deepest":
            return _point_mass(chain.n, int(np.argmax(chain.tau)))
        raise ValueError(f"unknown initial distribution preset {initial!r}")
    if isinstance(initial, (int, np.integer)):
        return _point_mass(chain.n, int(initial))
    return check_probability_vector(initial, chain.n)


def _point_mass(n: int, x: int) -> np.ndarray:
    if not 0 <= x < n:
        raise ValueError("vertex index out of range")
    p = np.zeros(n)
    p[x] = 1.0
    return p


def _initial_sampler(chain: ChainModel, initial) -> AliasTable:
    if isinstance(initial, str) and initial.lower() in ("pi", "pi_n"):
        return chain.sampler
    return AliasTable(resolve_initial(chain, initial))


def simulate_clock(chain: ChainModel, initial="pi", t_max: float | None = None, k_max: int | None = None,
                   rng=None, chunk: int = 1024) -> ClockPath:
    """One clock path: marks c_n^-1 S~_n(i), i = 0, 1, ...

    Stops after the first mark >= ``t_max`` or after ``k_max`` steps beyond
    the initial one, whichever comes first.
    """
    if t_max is None and k_max is None:
        raise ValueError("give t_max or k_max")
    gen = rngmod.generator(rng, rngmod.DYNAMICS)
    x0 = _initial_sampler(chain, initial).sample(gen, 1)
    vals = [chain.hold[x0] * gen.standard_exponential(1)]
    total = float(vals[0][0])
    steps = 0
    while (t_max is None or total < t_max) and (k_max is None or steps < k_max):
        m = chunk if k_max is None else min(chunk, k_max - steps)
        inc = chain.hold[chain.sampler.sample(gen, m)] * gen.standard_exponential(m)
        block = total + np.cumsum(inc)
        if t_max is not None:
            hit = np.searchsorted(block, t_max, side="left")
            if hit < m:
                block = block[: hit + 1]
        vals.append(block)
        steps += block.size
        total = float(block[-1])
    values = np.concatenate(vals)
    return ClockPath(values, True, float(values[-1]))


def _first_passage_batch(chain: ChainModel, init_sampler: AliasTable, t: float, size: int,
                         gen: np.random.Generator) -> np.ndarray:
    # only the running clock value is kept per replica
    pos = chain.hold[init_sampler.sample(gen, size)] * gen.standard_exponential(size)
    active = np.flatnonzero(pos <= t)
    while active.size:
        k = active.size
        pos[active] += chain.hold[chain.sampler.sample(gen, k)] * gen.standard_exponential(k)
        active = active[pos[active] <= t]
    return pos


def first_passage(chain: ChainModel, initial, t: float, M: int, rng, threads: int = 1) -> np.ndarray:
    """D_t for M independent replicas: the first mark strictly beyond t.

    Replicas run in fixed batches, each with its own derived stream, so the
    result does not depend on ``threads``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    sizes = rngmod.batch_sizes(M)
    sampler = _initial_sampler(chain, initial)
    if isinstance(rng, np.random.Generator):
        return np.concatenate([_first_passage_batch(chain, sampler, t, m, rng) for m in sizes]) if sizes \
            else np.empty(0)

    def run(i):
        return _first_passage_batch(chain, sampler, t, sizes[i], rngmod.generator(rng, rngmod.DYNAMICS, i))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    return np.concatenate(parts) if parts else np.empty(0)


def estimate_from_passage(D: np.ndarray, t: float, s: float, landscape_id: str = "") -> CorrelationEstimate:
    """Range avoids (t, t+s) iff the first mark beyond t is >= t+s."""
    if s == 0:
        return CorrelationEstimate.from_counts(D.size, D.size, landscape_id)
    return CorrelationEstimate.from_counts(int(np.count_nonzero(D >= t + s)), D.size, landscape_id)


def correlation_fn(chain: ChainModel, initial, t: float, s: float, M: int, rng,
                   threads: int = 1) -> CorrelationEstimate:
    """Monte Carlo estimate of C_n(t, s)."""
    if s < 0:
        raise ValueError("need 0 <= t < t+s")
    if M < 1:
        raise ValueError("M must be >= 1")
    if s == 0:
        return CorrelationEstimate.from_counts(M, M, chain.landscape.landscape_id)
    D = first_passage(chain, initial, t, M, rng, threads)
    return estimate_from_passage(D, t, s, chain.landscape.landscape_id)


def correlation_sweep(chain: ChainModel, initial, t: float, s_values, M: int, rng,
                      threads: int = 1) -> list[CorrelationEstimate]:
    """C_n(t, s) for several s from one set of paths (pathwise monotone in s)."""
    D = first_passage(chain, initial, t, M, rng, threads)
    return [estimate_from_passage(D, t, float(s), chain.landscape.landscape_id) for s in s_values]


def _weighted_exp_sum(weights: np.ndarray, hold: np.ndarray, u, chunk: int = 1 << 20) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u < 0):
        raise ValueError("argument must be nonnegative")
    inv = 1.0 / hold
    out = np.zeros(u.size)
    for lo in range(0, hold.size, chunk):
        w = weights[lo: lo + chunk]
        iv = inv[lo: lo + chunk]
        out += np.exp(-np.outer(u, iv)) @ w
    return out


def clock_increment_tail(chain: ChainModel, u):
    """nu_n(u, inf) = a_n sum_x pi_n(x) exp(-u (r_n / tau(x))^(1-a))."""
    vals = chain.scale.a_n * _weighted_exp_sum(chain.pi, chain.hold, u)
    return vals if np.ndim(u) else float(vals[0])


def initial_tail(chain: ChainModel, initial, v):
    """P(sigma_n >= v) = sum_x mu_n(x) exp(-v c_n lambda_n(x))."""
    mu = resolve_initial(chain, initial)
    vals = _weighted_exp_sum(mu, chain.hold, v)
    return vals if np.ndim(v) else float(vals[0])


@dataclass
class QuenchedSweep:
    """Estimates indexed by landscape seed, then by (t, s)."""

    rows: list = field(default_factory=list)

    def spread(self, t: float, s: float) -> dict:
        means = np.array([r["estimate"].mean for r in self.rows if r["t"] == t and r["s"] == s])
        return {"min": float(means.min()), "median": float(np.median(means)), "max": float(means.max()),
                "R": int(means.size)}


def quenched_sweep(landscapes, a: float, scales, initial, t_values, s_values, M: int, seed,
                   threads: int = 1) -> QuenchedSweep:
    """Outer loop over landscapes, inner Monte Carlo over dynamics replicas."""
    out = QuenchedSweep()
    for r, (land, scale) in enumerate(zip(landscapes, scales)):
        chain = build_chain(land, a, scale)
        for j, t in enumerate(t_values):
            dyn_seed = np.random.SeedSequence(int(seed), spawn_key=(rngmod.DYNAMICS, r, j))
            D = first_passage(chain, initial, t, M, dyn_seed, threads)
            for s in s_values:
                out.rows.append({"replica": r, "t": t, "s": s,
                                 "estimate": estimate_from_passage(D, t, s, land.landscape_id)})
    return out


def correlation_rows(estimates, *, n, alpha, a, scale_class, b_n, landscape_seed) -> list[dict]:
    """Rows in the correlation CSV schema; ``estimates`` yields (t, s, estimate)."""
    rows = []
    for t, s, est in estimates:
        rows.append({
            "n": n, "alpha": alpha, "a": a, "scale_class": scale_class,
            "b_n": "" if b_n is None else b_n, "t": t, "rho": (s / t) if t > 0 else "",
            "mean": repr(float(est.mean)), "stderr": repr(float(est.stderr)), "M": est.replicas,
            "landscape_seed": landscape_seed,
        })
    return rows


def write_correlation_csv(rows, fh=None) -> str:
    buf = io.StringIO() if fh is None else fh
    w = csv.DictWriter(buf, fieldnames=CORRELATION_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue() if fh is None else ""


def correlation_summary(rows, config: dict | None = None) -> str:
    return json.dumps({"schema_version": 1, "config": config or {}, "rows": list(rows)}, indent=1, sort_keys=True)
