"""Approximation in measure by perturbed exponentials ``exp(i sigma(n) x)``.

``sigma(n) = n + rho(|n|)``. A pool holds the indices with
``floor < |n| <= cap``; the solver looks for coefficients ``a_n`` so that
``|sum a_n exp(i sigma(n) x) - target(x)| >= delta`` only on a set of measure
below ``mu``.

Solver outline:

* clip the target modulus at ``truncation_factor`` times its 99th percentile;
* Tikhonov-regularized weighted least squares (normal equations);
* iterative reweighting: points above ``delta`` gain weight, while the worst
  points that fit inside the measure budget are dropped from the fit;
* several starting weight patterns (uniform, and "combs" that drop short
  arcs around a lattice ``(2 pi / K) Z``); the best iterate is kept.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidRho, PoolTooSmall
from .gridmeasure import ExceedanceReport, InputContractError, VERIFY_PER_2PI, exceedance_of_difference
from .trigpoly import SampleGrid, TrigPoly

RHO_RULES = ("one_over_k_plus_2", "one_over_log", "explicit")


@dataclass(frozen=True)
class RhoRule:
    """Perturbation sequence ``rho(k)``, ``k >= 0``."""

    name: str = "one_over_k_plus_2"
    values: tuple = ()

    def __post_init__(self):
        if self.name not in RHO_RULES:
            raise InvalidRho(f"unknown rho rule {self.name!r}")
        if self.name == "explicit":
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __call__(self, k):
        k = np.asarray(k)
        if np.any(k < 0):
            raise InvalidRho("rho is indexed by k >= 0")
        if self.name == "one_over_k_plus_2":
            return 1.0 / (k + 2.0)
        if self.name == "one_over_log":
            return 1.0 / np.log(k + 3.0)
        if np.any(k >= len(self.values)):
            raise InvalidRho(f"explicit rho has {len(self.values)} values, index {int(np.max(k))} requested")
        return np.asarray(self.values, dtype=np.float64)[k]

    def sigma(self, n):
        n = np.asarray(n)
        return n + self(np.abs(n))

    def to_obj(self):
        return list(self.values) if self.name == "explicit" else self.name

    @classmethod
    def from_obj(cls, obj) -> "RhoRule":
        if isinstance(obj, RhoRule):
            return obj
        if isinstance(obj, str):
            return cls(obj)
        if isinstance(obj, (list, tuple)):
            return cls("explicit", tuple(obj))
        raise InvalidRho(f"cannot interpret rho descriptor {obj!r}")


@dataclass(frozen=True)
class FrequencyPool:
    rho: RhoRule
    index_floor: int
    index_cap: int
    indices: np.ndarray = field(repr=False, compare=False)
    freqs: np.ndarray = field(repr=False, compare=False)

    def __len__(self) -> int:
        return int(self.indices.size)


def materialize_pool(rho, floor: int, cap: int, monotone_from: int = 0) -> FrequencyPool:
    """Indices ``floor < |n| <= cap`` with ``sigma(n)``.

    ``floor = -1`` admits ``n = 0`` as well.
    """
    rho = RhoRule.from_obj(rho)
    floor, cap = int(floor), int(cap)
    if floor < -1:
        raise ValueError(f"index floor must be >= -1, got {floor}")
    if floor >= cap:
        raise PoolTooSmall(f"floor {floor} >= cap {cap} leaves an empty pool")
    n = np.arange(-cap, cap + 1)
    n = n[np.abs(n) > floor]
    ks = np.arange(max(floor + 1, 0), cap + 1)
    rk = rho(ks)
    if np.any(rk == 0):
        raise InvalidRho(f"rho vanishes at k={int(ks[np.flatnonzero(rk == 0)[0]])}")
    tail = np.abs(rk[ks >= monotone_from])
    if tail.size > 1 and np.any(np.diff(tail) > 0):
        raise InvalidRho(f"|rho| increases beyond k={monotone_from}")
    freqs = rho.sigma(n).astype(np.float64)
    if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
        raise InvalidRho("sigma is not strictly increasing on the pool")
    n.flags.writeable = False
    freqs.flags.writeable = False
    return FrequencyPool(rho, floor, cap, n, freqs)


@dataclass(frozen=True)
class SolverConfig:
    regularization: float = 1e-8      # relative to the mean Gram diagonal
    truncation_factor: float = 10.0
    max_iterations: int = 8           # reweighting rounds per start
    pts_per_period: float = 4.0       # grid points per period of the top frequency
    emphasis_cap: float = 1e3
    sacrifice_fraction: float = 0.8   # share of the measure budget dropped each round
    min_weight: float = 1e-6
    comb_starts: bool = True
    comb_fractions: tuple = (0.5, 0.9)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["comb_fractions"] = list(self.comb_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        if "comb_fractions" in d:
            d["comb_fractions"] = tuple(d["comb_fractions"])
        return cls(**d)


@dataclass
class ApproxReport:
    coefficients: dict
    pool_cap_used: int
    pool_floor: int
    target_uniform_tol: float
    target_measure_tol: float
    achieved_exceedance: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    truncation_level: float = 0.0
    truncated_count: int = 0
    grid: dict = field(default_factory=dict)
    exceedance: dict = field(default_factory=dict)

    def to_poly(self, rho) -> TrigPoly:
        rho = RhoRule.from_obj(rho)
        if not self.coefficients:
            return TrigPoly()
        n = np.array(sorted(self.coefficients), dtype=np.int64)
        c = np.array([self.coefficients[int(k)] for k in n], dtype=np.complex128)
        return TrigPoly(rho.sigma(n), c)

    def a_norm(self) -> float:
        return float(sum(abs(v) for v in self.coefficients.values()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coefficients"] = [[int(n), c.real, c.imag] for n, c in sorted(self.coefficients.items())]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ApproxReport":
        d = dict(d)
        d["coefficients"] = {int(n): complex(re, im) for n, re, im in d["coefficients"]}
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def solver_grid(half_width: float, max_freq: float, pool_size: int,
                cfg: SolverConfig = SolverConfig(), per_2pi: int = VERIFY_PER_2PI) -> SampleGrid:
    """Grid on ``[-half_width, half_width]`` dense enough for both solving and verification."""
    L = 2 * half_width
    count = max(
        int(math.ceil(per_2pi * L / (2 * math.pi))),
        8 * pool_size,
        int(math.ceil(cfg.pts_per_period * L * max_freq / (2 * math.pi))),
    )
    return SampleGrid(-half_width, half_width, count)


def _weighted_solve(A, t, w, reg):
    Aw = A * w[:, None]
    G = Aw.conj().T @ A
    rhs = Aw.conj().T @ t
    lam = reg * max(float(np.mean(np.diag(G).real)), 1e-300)
    G[np.diag_indices_from(G)] += lam
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(G, check_finite=False), rhs, check_finite=False)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(G, rhs, rcond=None)[0]


def _starts(x, L, mu, floor, cfg):
    yield np.ones(x.size)
    if not cfg.comb_starts:
        return
    F = max(floor, 1)
    for K in sorted({F + 2, int(1.5 * F) + 2, 2 * F + 1}):
        phase = (x * K / (2 * math.pi)) % 1.0
        dist = np.minimum(phase, 1.0 - phase)
        for frac in cfg.comb_fractions:
            w = np.ones(x.size)
            w[dist < frac * mu / L / 2] = 0.0
            yield w


def approximate_in_measure(target, g: SampleGrid, pool: FrequencyPool, delta: float, mu: float,
                           cfg: SolverConfig = SolverConfig()) -> ApproxReport:
    t = np.asarray(target, dtype=np.complex128)
    if t.ndim != 1 or t.size != g.count:
        raise InputContractError(f"expected {g.count} target samples, got shape {t.shape}")
    if len(pool) == 0:
        raise PoolTooSmall("empty pool")
    if not (delta > 0 and mu > 0):
        raise ValueError("delta and mu must be positive")
    x = g.points
    L = g.length
    mod = np.abs(t)
    T = cfg.truncation_factor * float(np.percentile(mod, 99))
    clipped = mod > T
    tt = np.where(clipped, t / np.where(clipped, mod, 1.0) * T, t)

    budget = max(int(math.ceil(mu / g.step)) - 1, 0)
    best_cnt, best_c = None, np.zeros(len(pool), dtype=np.complex128)
    history: list[float] = []
    iterations = 0
    if T > 0:
        A = np.exp(1j * np.multiply.outer(x, pool.freqs))
        done = False
        for w0 in _starts(x, L, mu, pool.index_floor, cfg):
            w = w0.copy()
            for _ in range(cfg.max_iterations):
                iterations += 1
                c = _weighted_solve(A, tt, w, cfg.regularization)
                res = np.abs(A @ c - t)
                cnt = int(np.count_nonzero(res >= delta))
                if best_cnt is None or cnt < best_cnt:
                    best_cnt, best_c = cnt, c
                history.append(best_cnt * g.step)
                if best_cnt <= budget:
                    done = True
                    break
                worst = np.argsort(-res, kind="stable")[: int(cfg.sacrifice_fraction * budget)]
                w = np.where(res >= delta, np.minimum((res / delta) ** 2, cfg.emphasis_cap), 1.0) * w
                w /= w.max()
                w = np.maximum(w, cfg.min_weight)
                w[worst] = 0.0
            if done:
                break

    coeffs = {int(n): complex(c) for n, c in zip(pool.indices, best_c)}
    report = ApproxReport(
        coefficients=coeffs, pool_cap_used=pool.index_cap, pool_floor=pool.index_floor,
        target_uniform_tol=float(delta), target_measure_tol=float(mu),
        achieved_exceedance=0.0, iterations=iterations, converged=False, history=history,
        truncation_level=T, truncated_count=int(np.count_nonzero(clipped)), grid=g.to_dict(),
    )
    exc = exceedance_of_difference(report.to_poly(pool.rho), t, g, delta)
    report.achieved_exceedance = exc.estimated_measure
    report.exceedance = exc.to_dict()
    report.converged = exc.estimated_measure < mu
    return report


def report_exceedance(report: ApproxReport, rho, target, g: SampleGrid) -> ExceedanceReport:
    """Recompute the exceedance of a report against its target."""
    return exceedance_of_difference(report.to_poly(rho), target, g, report.target_uniform_tol)


def approximate_growing(target_fn, half_width: float, rho, floor: int, delta: float, mu: float,
                        cap_start: int, cap_budget: int, max_pool: int,
                        cfg: SolverConfig = SolverConfig()):
    """Double the pool cap from ``cap_start`` until the solve converges.

    Each cap gets its own grid (see :func:`solver_grid`); ``target_fn`` maps
    points to complex samples. Returns ``(report, grid, attempts)`` for the
    converged solve, or for the attempt with the smallest exceedance.
    """
    rho = RhoRule.from_obj(rho)
    cap = max(int(cap_start), floor + 1)
    best = None
    attempts = []
    while True:
        pool = materialize_pool(rho, floor, cap)
        if len(pool) > max_pool and attempts:
            break
        g = solver_grid(half_width, float(np.max(np.abs(pool.freqs))), len(pool), cfg)
        rep = approximate_in_measure(target_fn(g.points), g, pool, delta, mu, cfg)
        attempts.append({"cap": cap, "pool_size": len(pool), "grid_count": g.count,
                         "achieved": rep.achieved_exceedance, "converged": rep.converged})
        if best is None or rep.achieved_exceedance < best[0].achieved_exceedance:
            best = (rep, g)
        if rep.converged:
            return rep, g, attempts
        if cap * 2 > cap_budget:
            break
        cap *= 2
    return best[0], best[1], attempts
