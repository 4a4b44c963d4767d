"""Integer-spectrum polynomials that are close to 1 in measure but have small coefficients.

For ``0 < eps < 1`` and ``0 < delta <= 1`` the generator returns ``P`` with

1. zero constant coefficient,
2. every coefficient of modulus below ``eps``,
3. a finite grid-measured U-norm,
4. ``|P(x) - 1| >= eps`` only on a subset of ``[0, 2 pi]`` of measure below ``delta``.

Recipe ("dilated-average"): let ``S`` be a periodized Gaussian spike of mean
one, truncated to degree ``n``, and ``g0 = 1 - S``. Then
``P(x) = (1/m) sum_j g0(p_j x - theta_j)`` with ``m > 1/eps`` and distinct
primes ``p_j > n``. Primes keep the frequencies ``k p_j`` pairwise distinct
for ``|k| <= n``, so every coefficient is a single ``-S_hat(k)/m``. Off the
spikes ``P`` is within rounding of 1, and the spike sets have total measure
``m`` times the width of one spike.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import GenerationFailed, NonIntegerSpectrum
from .gridmeasure import exceedance_measure
from .trigpoly import SampleGrid, TrigPoly, degree, max_coefficient_modulus, u_norm_estimate

PROFILES = ("dilated-average",)


@dataclass(frozen=True)
class KornerParams:
    epsilon: float
    delta: float
    profile: str = "dilated-average"
    seed: int = 0

    def __post_init__(self):
        # delta = 1 is admitted: the pipeline asks for delta = l^-3 and N^-3 at l = N = 1.
        if not (0 < self.epsilon < 1) or not (0 < self.delta <= 1):
            raise ValueError(f"need 0 < epsilon < 1 and 0 < delta <= 1, got {self.epsilon}, {self.delta}")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")


@dataclass(frozen=True)
class KornerConfig:
    spike_level: float = 0.5       # a dilate counts as "on spike" where S >= this
    safety: float = 0.85           # fraction of delta/m granted to one spike
    tail: float = 6.0              # truncate S where exp(-(k s)^2 / 2) < exp(-tail^2 / 2)
    shrink: float = 0.8            # spike width factor per failed certification
    max_attempts: int = 8
    degree_budget: int = 1 << 40
    term_budget: int = 4_000_000
    certify_count: int = 4096      # midpoints on [0, 2 pi] for property 4
    u_count: int = 4096            # midpoints on [0, 2 pi] for property 3
    probe_epsilons: tuple = (0.5, 0.25, 0.1)
    u_safety: float = 2.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["probe_epsilons"] = list(self.probe_epsilons)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KornerConfig":
        d = dict(d)
        if "probe_epsilons" in d:
            d["probe_epsilons"] = tuple(float(e) for e in d["probe_epsilons"])
        return cls(**d)


@dataclass(frozen=True)
class KornerCertificate:
    epsilon: float
    delta: float
    mean_coefficient: complex
    max_coefficient_modulus: float
    u_norm_bound: float
    exceptional_measure: float
    degree: int
    passed: bool
    grid: dict = field(default_factory=dict)
    u_grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_coefficient"] = [self.mean_coefficient.real, self.mean_coefficient.imag]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KornerCertificate":
        d = dict(d)
        re, im = d["mean_coefficient"]
        d["mean_coefficient"] = complex(re, im)
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _primes_above(n: int, m: int) -> list[int]:
    """The ``m`` smallest primes strictly greater than ``n``."""
    hi = max(2 * n + 10, n + 50 * m + 50)
    while True:
        sieve = np.ones(hi + 1, dtype=bool)
        sieve[:2] = False
        for p in range(2, int(hi ** 0.5) + 1):
            if sieve[p]:
                sieve[p * p::p] = False
        found = [int(p) for p in np.flatnonzero(sieve) if p > n][:m]
        if len(found) == m:
            return found
        hi *= 2


def _spike_width(s: float, level: float) -> float:
    """Length of ``{y : gaussian spike of width s >= level}`` for the dominant bump."""
    peak = math.sqrt(2 * math.pi) / s
    if peak <= level:
        return 0.0
    return 2 * s * math.sqrt(2 * math.log(peak / level))


def _spike_scale(budget: float, level: float) -> float:
    hi = 1.0
    if _spike_width(hi, level) <= budget:
        return hi
    return brentq(lambda s: _spike_width(s, level) - budget, 1e-12, hi, xtol=1e-15)


def _dilated_average(params: KornerParams, s: float, cfg: KornerConfig) -> TrigPoly:
    m = int(math.floor(1 / params.epsilon)) + 1
    n = int(math.ceil(cfg.tail / s))
    primes = _primes_above(n, m)
    if n * primes[-1] > cfg.degree_budget or 2 * n * m > cfg.term_budget:
        raise GenerationFailed(
            f"recipe for eps={params.epsilon}, delta={params.delta} exceeds budget "
            f"(degree {n * primes[-1]}, terms {2 * n * m})"
        )
    k = np.arange(1, n + 1)
    hat = np.exp(-0.5 * (k * s) ** 2) / m
    if params.seed:
        theta = np.random.default_rng(params.seed).uniform(0, 2 * math.pi, m)
    else:
        theta = np.zeros(m)
    freqs, coeffs = [], []
    for p, th in zip(primes, theta):
        for sign in (1, -1):
            freqs.append(sign * k * p)
            coeffs.append(-hat * np.exp(-1j * sign * k * th))
    return TrigPoly(np.concatenate(freqs), np.concatenate(coeffs))


def periodic_samples(P: TrigPoly, count: int) -> np.ndarray:
    """Samples of an integer-spectrum ``P`` on the ``[0, 2 pi]`` midpoint grid.

    Coefficients are folded modulo ``count`` and summed by one inverse FFT;
    agrees with direct summation up to rounding.
    """
    if not len(P):
        return np.zeros(count, dtype=np.complex128)
    k = np.round(P.freqs).astype(np.int64)
    c = P.coeffs * np.exp(1j * np.pi * k / count)
    folded = np.zeros(count, dtype=np.complex128)
    np.add.at(folded, k % count, c)
    return np.fft.ifft(folded) * count


def _check_integer(P: TrigPoly):
    if not np.all(np.abs(P.freqs - np.round(P.freqs)) <= 1e-9):
        raise NonIntegerSpectrum("polynomial has non-integer frequencies")


def _check_period_grid(g: SampleGrid):
    if abs(g.a) > 1e-12 or abs(g.b - 2 * math.pi) > 1e-12:
        raise ValueError("certification grid must span [0, 2 pi]")


@lru_cache(maxsize=32)
def _u_norm_cached(P: TrigPoly, g: SampleGrid) -> float:
    return u_norm_estimate(P, g)


def exceptional_measure(P: TrigPoly, epsilon: float, g: SampleGrid) -> float:
    _check_period_grid(g)
    return exceedance_measure(periodic_samples(P, g.count) - 1.0, g, epsilon).estimated_measure


def certify(P: TrigPoly, epsilon: float, delta: float, g: SampleGrid | None = None,
            u_grid: SampleGrid | None = None, cfg: KornerConfig = KornerConfig()) -> KornerCertificate:
    _check_integer(P)
    g = g or SampleGrid.period(cfg.certify_count)
    u_grid = u_grid or SampleGrid.period(cfg.u_count)
    _check_period_grid(g)
    Pi = TrigPoly(np.round(P.freqs), P.coeffs)
    mean = Pi.coefficient_at(0.0)
    maxc = max_coefficient_modulus(Pi)
    meas = exceptional_measure(Pi, epsilon, g)
    u = _u_norm_cached(Pi, u_grid)
    passed = mean == 0 and maxc < epsilon and meas < delta
    return KornerCertificate(
        epsilon=float(epsilon), delta=float(delta), mean_coefficient=complex(mean),
        max_coefficient_modulus=maxc, u_norm_bound=u, exceptional_measure=meas,
        degree=int(round(degree(Pi))), passed=bool(passed),
        grid=g.to_dict(), u_grid=u_grid.to_dict(),
    )


def _core_checks(P: TrigPoly, params: KornerParams, cfg: KornerConfig) -> bool:
    g = SampleGrid.period(cfg.certify_count)
    return (
        P.coefficient_at(0.0) == 0
        and max_coefficient_modulus(P) < params.epsilon
        and exceptional_measure(P, params.epsilon, g) < params.delta
    )


def generate(params: KornerParams, cfg: KornerConfig = KornerConfig()) -> TrigPoly:
    """Deterministic polynomial for ``params``; raises GenerationFailed past the budget."""
    m = int(math.floor(1 / params.epsilon)) + 1
    s = _spike_scale(cfg.safety * params.delta / m, cfg.spike_level)
    for _ in range(cfg.max_attempts):
        P = _dilated_average(params, s, cfg)
        if _core_checks(P, params, cfg):
            return P
        s *= cfg.shrink
    raise GenerationFailed(
        f"no certified polynomial for eps={params.epsilon}, delta={params.delta} "
        f"after {cfg.max_attempts} attempts"
    )


def pad_to_degree(P: TrigPoly, D: int, epsilon: float) -> TrigPoly:
    """Add a conjugate pair at ``+-D`` with small modulus; degree becomes ``D``."""
    if D <= degree(P):
        return P
    c = min(epsilon / 2, 1e-6)
    return TrigPoly(np.concatenate((P.freqs, [-D, D])), np.concatenate((P.coeffs, [c, c])))


class KornerBook:
    """Memo of generated polynomials, their degrees d(eps, delta) and the U-bounds C(delta).

    Degrees are kept monotone: ``eps1 <= eps2`` and ``delta1 <= delta2`` imply
    ``d(eps1, delta1) >= d(eps2, delta2)`` over every pair queried so far.
    A violation is repaired by padding the smaller-parameter polynomial.
    """

    def __init__(self, cfg: KornerConfig = KornerConfig(), seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        self._lock = threading.RLock()
        self._polys: dict[tuple[float, float], TrigPoly] = {}
        self._padded: set[tuple[float, float]] = set()
        self._ubounds: dict[float, dict] = {}

    def _key(self, epsilon, delta):
        return (float(epsilon), float(delta))

    def polynomial(self, epsilon: float, delta: float) -> TrigPoly:
        key = self._key(epsilon, delta)
        with self._lock:
            if key not in self._polys:
                self._polys[key] = generate(KornerParams(*key, seed=self.seed), self.cfg)
                self._enforce_monotone()
            return self._polys[key]

    def _enforce_monotone(self):
        changed = True
        while changed:
            changed = False
            for q, Pq in list(self._polys.items()):
                need = max(
                    (degree(Pp) for p, Pp in self._polys.items() if p[0] >= q[0] and p[1] >= q[1]),
                    default=0.0,
                )
                if degree(Pq) < need:
                    self._polys[q] = pad_to_degree(Pq, int(round(need)), q[0])
                    self._padded.add(q)
                    changed = True

    def degree_for(self, epsilon: float, delta: float) -> int:
        return int(round(degree(self.polynomial(epsilon, delta))))

    def certificate(self, epsilon: float, delta: float) -> KornerCertificate:
        return certify(self.polynomial(epsilon, delta), epsilon, delta, cfg=self.cfg)

    def u_norm(self, epsilon: float, delta: float) -> float:
        return _u_norm_cached(self.polynomial(epsilon, delta), SampleGrid.period(self.cfg.u_count))

    def u_bound_for_delta(self, delta: float) -> float:
        delta = float(delta)
        with self._lock:
            if delta not in self._ubounds:
                probes = {e: self.u_norm(e, delta) for e in self.cfg.probe_epsilons}
                self._ubounds[delta] = {
                    "probes": probes,
                    "bound": max(probes.values()) * self.cfg.u_safety,
                }
            return self._ubounds[delta]["bound"]

    def probe_record(self, delta: float) -> dict:
        self.u_bound_for_delta(delta)
        return self._ubounds[float(delta)]

    def stability_ratio(self, delta: float) -> float:
        probes = self.probe_record(delta)["probes"]
        return max(probes.values()) / min(probes.values())

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "config": self.cfg.to_dict(),
                "seed": self.seed,
                "degrees": [
                    {"epsilon": e, "delta": d, "degree": int(round(degree(P))), "padded": (e, d) in self._padded}
                    for (e, d), P in sorted(self._polys.items())
                ],
                "u_bounds": [
                    {"delta": d, "bound": r["bound"], "probes": [[e, u] for e, u in sorted(r["probes"].items())]}
                    for d, r in sorted(self._ubounds.items())
                ],
            }
