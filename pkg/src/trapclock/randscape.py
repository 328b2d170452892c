"""Heavy-tailed landscapes, space/time scales, Gibbs weights and the LePage
representation of ranked landscapes."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from . import rng as rngmod
from ._validation import check_alpha, check_asymmetry, check_positive

SCALE_CLASSES = ("constant", "intermediate", "extreme")
TAIL_KINDS = ("pareto", "degenerate", "custom")

#: landscapes larger than this are written with a binary side file
JSON_INLINE_LIMIT = 10**5
SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class TailSpec:
    """Law of a single trap depth, described by its survival function G.

    ``pareto``: ``G(u) = (u/x_min)^-alpha * (1 + log(u/x_min))^log_power`` for
    ``u >= x_min``; ``log_power`` is an optional slowly varying correction
    (0 gives the pure Pareto law, it must not exceed ``alpha``).
    ``degenerate``: every depth equals ``value``.
    ``custom``: survival values ``table_survival`` tabulated at increasing
    depths ``table_depth`` (first value 1), interpolated log-log and extended
    beyond the table by a Pareto tail of index ``alpha``.
    """

    kind: str = "pareto"
    alpha: float = 0.5
    x_min: float = 1.0
    log_power: float = 0.0
    value: float | None = None
    table_depth: tuple | None = None
    table_survival: tuple | None = None

    def __post_init__(self):
        if self.kind not in TAIL_KINDS:
            raise ValueError(f"unknown tail kind {self.kind!r}")
        if self.kind == "degenerate":
            check_positive(self.value, "value")
            object.__setattr__(self, "x_min", float(self.value))
            return
        check_alpha(self.alpha)
        check_positive(self.x_min, "x_min")
        if self.kind == "pareto" and self.log_power > self.alpha:
            raise ValueError("log_power must not exceed alpha (survival must be non-increasing)")
        if self.kind == "custom":
            d = np.asarray(self.table_depth, dtype=float)
            s = np.asarray(self.table_survival, dtype=float)
            if d.ndim != 1 or d.shape != s.shape or d.size < 2:
                raise ValueError("custom table needs matching 1-d depth/survival arrays")
            if np.any(np.diff(d) <= 0) or np.any(np.diff(s) >= 0):
                raise ValueError("custom table must be strictly increasing in depth, strictly decreasing in survival")
            if s[0] != 1.0 or s[-1] <= 0 or d[0] <= 0:
                raise ValueError("custom table must start at survival 1 and stay positive")
            object.__setattr__(self, "table_depth", tuple(d))
            object.__setattr__(self, "table_survival", tuple(s))
            object.__setattr__(self, "x_min", float(d[0]))

    @classmethod
    def pareto(cls, alpha: float, x_min: float = 1.0, log_power: float = 0.0) -> "TailSpec":
        return cls("pareto", alpha=alpha, x_min=x_min, log_power=log_power)

    @classmethod
    def degenerate(cls, value: float) -> "TailSpec":
        return cls("degenerate", value=value, alpha=float("nan"))

    @classmethod
    def custom(cls, depth, survival, alpha: float) -> "TailSpec":
        return cls("custom", alpha=alpha, table_depth=tuple(depth), table_survival=tuple(survival))

    @property
    def is_pure_pareto(self) -> bool:
        return self.kind == "pareto" and self.log_power == 0.0

    def survival(self, u):
        """G(u) = P(tau > u)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "degenerate":
            return np.where(u < self.value, 1.0, 0.0)
        if self.kind == "pareto":
            z = np.maximum(u, self.x_min) / self.x_min
            g = z ** (-self.alpha)
            if self.log_power:
                g = g * (1.0 + np.log(z)) ** self.log_power
            return np.where(u < self.x_min, 1.0, g)
        d = np.log(np.asarray(self.table_depth))
        s = np.log(np.asarray(self.table_survival))
        with np.errstate(divide="ignore"):
            lu = np.log(np.maximum(u, self.x_min))
        inside = np.interp(lu, d, s)
        beyond = s[-1] - self.alpha * (lu - d[-1])
        return np.where(u < self.x_min, 1.0, np.exp(np.where(lu > d[-1], beyond, inside)))

    def quantile(self, p):
        """Generalized inverse G^-1(p) = inf{y >= 0 : G(y) <= p}, p in (0, 1]."""
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0) | (p > 1)):
            raise ValueError("quantile argument must lie in (0, 1]")
        if self.is_pure_pareto:
            return self.x_min * p ** (-1.0 / self.alpha)
        return self.quantile_log(-np.log(p))

    def quantile_log(self, y):
        """G^-1(exp(-y)) for y >= 0; avoids underflow deep in the tail."""
        y = np.asarray(y, dtype=float)
        if self.kind == "degenerate":
            return np.full(y.shape, float(self.value))
        if self.kind == "pareto":
            if not self.log_power:
                return self.x_min * np.exp(y / self.alpha)
            return self.x_min * np.exp(_solve_log_pareto(y, self.alpha, self.log_power))
        d = np.log(np.asarray(self.table_depth))
        s = np.log(np.asarray(self.table_survival))
        lp = -y
        inside = np.interp(-lp, -s, d)
        beyond = d[-1] + (s[-1] - lp) / self.alpha
        return np.exp(np.where(lp < s[-1], beyond, inside))

    def expect(self, f, rel_tol: float = 1e-10) -> float:
        """E f(tau) by quadrature over the quantile function.

        Uses ``p = exp(-y)`` so the integral runs over ``y in (0, inf)``, which
        turns the Pareto singularity at ``p = 0`` into exponential decay.
        """
        if self.kind == "degenerate":
            return float(f(np.asarray(self.value)))

        def integrand(y):
            q = float(self.quantile_log(y))
            return float(f(q)) * math.exp(-y) if math.isfinite(q) else 0.0

        # depths overflow beyond y ~ 700*alpha; the integrand is negligible there
        y_max = 700.0 * self.alpha
        edges = [e for e in (0.0, 1.0, 4.0, 16.0, 64.0, 256.0) if e < y_max] + [y_max]
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=rel_tol, limit=400)
            total += val
        return total

    def moment(self, a: float) -> float:
        """E tau^a; infinite for a >= alpha on heavy tails."""
        if self.kind == "degenerate":
            return float(self.value) ** a
        if a >= self.alpha:
            return float("inf")
        if self.is_pure_pareto:
            return self.alpha * self.x_min**a / (self.alpha - a)
        return self.expect(lambda t: t**a)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "degenerate":
            out["value"] = self.value
        else:
            out.update(alpha=self.alpha, x_min=self.x_min)
        if self.kind == "pareto" and self.log_power:
            out["log_power"] = self.log_power
        if self.kind == "custom":
            out["table_depth"] = list(self.table_depth)
            out["table_survival"] = list(self.table_survival)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TailSpec":
        kind = d.get("kind", "pareto")
        if kind == "degenerate":
            return cls.degenerate(d["value"])
        if kind == "custom":
            return cls.custom(d["table_depth"], d["table_survival"], d["alpha"])
        return cls.pareto(d["alpha"], d.get("x_min", 1.0), d.get("log_power", 0.0))


def _solve_log_pareto(y, alpha, beta, iters=60):
    """Solve alpha*L - beta*log(1+L) = y for L >= 0 (vectorized Newton)."""
    y = np.asarray(y, dtype=float)
    L = np.maximum(y / alpha, 0.0)
    for _ in range(iters):
        f = alpha * L - beta * np.log1p(L) - y
        df = alpha - beta / (1.0 + L)
        step = f / df
        L = np.maximum(L - step, 0.0)
        if np.all(np.abs(step) <= 1e-15 * (1.0 + L)):
            break
    return L


@dataclass(frozen=True, eq=False)
class Landscape:
    """Trap depths tau(x), x = 0..n-1."""

    tau: np.ndarray
    tail: TailSpec
    seed: dict = field(default_factory=dict)

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim != 1 or tau.size == 0:
            raise ValueError("landscape must be a non-empty 1-d array")
        if np.any(~np.isfinite(tau)) or np.any(tau <= 0):
            raise ValueError("trap depths must be finite and positive")
        tau.setflags(write=False)
        object.__setattr__(self, "tau", tau)

    @property
    def n(self) -> int:
        return int(self.tau.size)

    @property
    def landscape_id(self) -> str:
        s = self.seed or {}
        return f"{s.get('master')}:{s.get('stream')}:{s.get('replica')}"

    def to_json(self, path=None) -> str:
        """Serialize; above ``JSON_INLINE_LIMIT`` values go to ``<path>.npy``."""
        doc = {
            "schema_version": SCHEMA_VERSION,
            "type": "landscape",
            "n": self.n,
            "alpha": None if self.tail.kind == "degenerate" else self.tail.alpha,
            "tail_kind": self.tail.kind,
            "tail": self.tail.to_dict(),
            "seed": self.seed,
        }
        _attach_values(doc, self.tau, path)
        text = json.dumps(doc, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "Landscape":
        doc, base = _load_doc(text_or_path)
        return cls(_read_values(doc, base), TailSpec.from_dict(doc["tail"]), doc.get("seed", {}))


@dataclass(frozen=True)
class ScaleSpec:
    scale_class: str
    r_n: float
    c_n: float
    a_n: float
    a: float
    b_n: float | None = None

    def check(self, tail: TailSpec, tol: float = 1e-9) -> bool:
        """b_n * G(r_n) within tol of 1 (non-constant classes only)."""
        if self.scale_class == "constant":
            return True
        return abs(self.b_n * float(tail.survival(self.r_n)) - 1.0) <= tol

    def to_dict(self) -> dict:
        return {
            "class": self.scale_class,
            "b_n": self.b_n,
            "r_n": self.r_n,
            "c_n": self.c_n,
            "a_n": self.a_n,
            "a": self.a,
        }


def sample_landscape(n: int, tail: TailSpec, seed, replica: int = 0) -> Landscape:
    """n i.i.d. depths by inverse transform, tau = G^-1(U)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rngmod.generator(seed, rngmod.LANDSCAPE, replica)
    u = 1.0 - gen.random(n)  # uniform on (0, 1]
    return Landscape(tail.quantile(u), tail, rngmod.seed_record(seed, rngmod.LANDSCAPE, replica))


def index_scale(scale_class: str, r_n: float, b_n, a: float, alpha: float, n=None) -> float:
    """Auxiliary clock scale a_n for each space-scale class."""
    if scale_class == "constant":
        return 1.0
    minus = a < alpha
    if scale_class == "intermediate":
        return r_n ** (-a) * b_n if minus else 1.0
    return r_n ** (-a) * (n if n is not None else b_n) if minus else 1.0


def space_scale(tail: TailSpec, scale_class: str, b_n=None, a: float = 0.0, n=None, r=None) -> ScaleSpec:
    """Space scale r_n, time scale c_n = r_n^(1-a) and index scale a_n."""
    check_asymmetry(a)
    if scale_class not in SCALE_CLASSES:
        raise ValueError(f"scale class must be one of {SCALE_CLASSES}")
    if scale_class == "constant":
        if r is None:
            raise ValueError("constant scale needs r")
        check_positive(r, "r")
        return ScaleSpec("constant", float(r), float(r) ** (1 - a), 1.0, a, None)
    if scale_class == "extreme":
        if n is None and b_n is None:
            raise ValueError("extreme scale needs n")
        if n is not None and b_n is not None and b_n != n:
            raise ValueError("extreme scale requires b_n = n")
        b_n = n if n is not None else b_n
    else:
        if b_n is None:
            raise ValueError("intermediate scale needs b_n")
        if n is not None and b_n >= n:
            raise ValueError("intermediate scale requires b_n < n")
    if b_n < 1:
        raise ValueError("b_n must be >= 1")
    r_n = float(tail.quantile(1.0 / b_n))
    alpha = tail.alpha if tail.kind != "degenerate" else 1.0
    a_n = index_scale(scale_class, r_n, b_n, a, alpha, n)
    return ScaleSpec(scale_class, r_n, r_n ** (1 - a), float(a_n), a, float(b_n))


def gibbs_measure(landscape, exponent: float = 1.0) -> np.ndarray:
    """Weights tau^exponent / sum tau^exponent, computed in log space."""
    tau = landscape.tau if isinstance(landscape, Landscape) else np.asarray(landscape, dtype=float)
    if tau.size == 0:
        raise ValueError("empty landscape")
    if exponent < 0:
        raise ValueError("exponent must be nonnegative")
    if exponent == 0:
        return np.full(tau.size, 1.0 / tau.size)
    lw = exponent * np.log(tau)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def truncation_count(alpha: float, tol: float = 1e-6, k_max: int = 2 * 10**6) -> int:
    """Smallest K with integral_K^inf x^(-1/alpha) dx <= tol, capped at k_max."""
    check_alpha(alpha)
    p = 1.0 / alpha - 1.0
    k = math.ceil((tol * p) ** (-1.0 / p))
    return int(min(max(k, 1), k_max))


def residual_sum(alpha: float, K: int, power: float = 1.0) -> float:
    """Estimate of sum_{k>K} gamma_k^power using Gamma_k ~ k."""
    q = power / alpha
    if q <= 1.0:
        return float("inf")
    return K ** (1.0 - q) / (q - 1.0)


@dataclass(frozen=True, eq=False)
class PRMPoints:
    """Ranked marks gamma_k = Gamma_k^(-1/alpha) of a PRM with mean measure x^-alpha."""

    gamma: np.ndarray
    alpha: float
    Gamma: np.ndarray | None = None
    seed: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("need at least one PRM point")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @property
    def K(self) -> int:
        return int(self.gamma.size)

    @property
    def tail_bound(self) -> float:
        """Residual estimate of sum_{k>K} gamma_k."""
        return residual_sum(self.alpha, self.K, 1.0)

    def residual(self, power: float) -> float:
        return residual_sum(self.alpha, self.K, power)

    def to_json(self, path=None) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "type": "prm_points",
            "n": self.K,
            "alpha": self.alpha,
            "tail_kind": "prm",
            "tail_bound": self.tail_bound,
            "seed": self.seed,
        }
        _attach_values(doc, self.gamma, path)
        text = json.dumps(doc, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "PRMPoints":
        doc, base = _load_doc(text_or_path)
        return cls(_read_values(doc, base), doc["alpha"], None, doc.get("seed", {}))


def _exponentials(seed, count: int, replica: int = 0) -> np.ndarray:
    return rngmod.generator(seed, rngmod.PRM, replica).standard_exponential(count)


def prm_points(alpha: float, K: int | None = None, seed=None, *, exponentials=None, tol: float = 1e-6,
               replica: int = 0) -> PRMPoints:
    """gamma_k = Gamma_k^(-1/alpha) with Gamma_k partial sums of Exp(1) draws.

    ``exponentials`` injects the draws E_1, E_2, ... directly.
    """
    check_alpha(alpha)
    if exponentials is None:
        if K is None:
            K = truncation_count(alpha, tol)
        if K < 1:
            raise ValueError("K must be >= 1")
        E = _exponentials(seed, K, replica)
        record = rngmod.seed_record(seed, rngmod.PRM, replica)
    else:
        E = np.asarray(exponentials, dtype=float)
        if K is not None:
            E = E[:K]
        record = {"master": None, "stream": "injected", "replica": None}
    Gamma = np.cumsum(E)
    return PRMPoints(Gamma ** (-1.0 / alpha), alpha, Gamma, record)


def lepage_landscape(n: int, tail: TailSpec, r_n: float, seed=None, *, exponentials=None, K: int | None = None,
                     tol: float = 1e-6, replica: int = 0):
    """Ranked rescaled landscape gamma_nk = G^-1(Gamma_k / Gamma_{n+1}) / r_n.

    The PRM points returned alongside are built from the same exponential
    stream, so both sides are coupled draw by draw. Because the stream is
    consumed sequentially, a larger n with the same seed extends the same
    prefix of draws.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    check_positive(r_n, "r_n")
    if K is None:
        K = max(n, truncation_count(tail.alpha, tol))
    if exponentials is None:
        E = _exponentials(seed, max(n + 1, K), replica)
        record = rngmod.seed_record(seed, rngmod.PRM, replica)
    else:
        E = np.asarray(exponentials, dtype=float)
        if E.size < n + 1:
            raise ValueError("need at least n+1 exponential draws")
        K = min(K, E.size)
        record = {"master": None, "stream": "injected", "replica": None}
    Gamma = np.cumsum(E)
    gamma_n = tail.quantile(Gamma[:n] / Gamma[n]) / r_n
    prm = PRMPoints(Gamma[:K] ** (-1.0 / tail.alpha), tail.alpha, Gamma[:K], record)
    return gamma_n, prm


def lepage_to_landscape(gamma_n, tail: TailSpec, r_n: float, seed_record: dict | None = None) -> Landscape:
    """Landscape with depths r_n * gamma_nk (ranked, deepest first)."""
    return Landscape(np.asarray(gamma_n) * r_n, tail, dict(seed_record or {}))


def poisson_dirichlet_weights(prm) -> np.ndarray:
    """Normalized ranked marks w_k = gamma_k / sum_l gamma_l over the truncation."""
    if isinstance(prm, PRMPoints):
        if prm.alpha >= 1:
            raise ValueError("normalizer diverges for alpha >= 1")
        g = prm.gamma
    else:
        g = np.asarray(prm, dtype=float)
    if g.size == 0:
        raise ValueError("need at least one point")
    # sum from the smallest term up for accuracy
    return g / np.sum(np.sort(g))


def _attach_values(doc: dict, values: np.ndarray, path) -> None:
    if values.size > JSON_INLINE_LIMIT and path is not None:
        side = Path(str(path) + ".npy")
        np.save(side, np.asarray(values, dtype="<f8"))
        doc["values_file"] = side.name
        doc["values_dtype"] = "<f8"
    else:
        doc["values"] = [repr(float(v)) for v in values]


def _load_doc(text_or_path):
    if isinstance(text_or_path, Path) or (isinstance(text_or_path, str) and not text_or_path.lstrip().startswith("{")):
        p = Path(text_or_path)
        return json.loads(p.read_text()), p.parent
    return json.loads(text_or_path), None


def _read_values(doc, base) -> np.ndarray:
    if "values" in doc:
        return np.array([float(v) for v in doc["values"]])
    if base is None:
        raise ValueError("binary side file referenced but no base directory known")
    return np.load(Path(base) / doc["values_file"])
