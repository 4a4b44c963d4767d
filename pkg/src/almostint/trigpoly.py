"""Trigonometric polynomials with arbitrary real frequencies.

A :class:`TrigPoly` is a finite sum ``sum_k a_k exp(i nu_k x)`` stored in
canonical form: frequencies strictly increasing, no zero coefficients.
All operations are pure and return new objects.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

MERGE_TOL = 1e-12
# Largest number of complex entries materialized in one evaluation block.
_BLOCK = 1 << 21


@dataclass(frozen=True)
class SampleGrid:
    """Uniform midpoint grid ``x_j = a + (j + 1/2) (b - a) / count`` on ``[a, b]``."""

    a: float
    b: float
    count: int

    def __post_init__(self):
        if not (self.a < self.b):
            raise ValueError(f"grid needs a < b, got a={self.a}, b={self.b}")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"grid count must be a positive integer, got {self.count}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "count", int(self.count))

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def step(self) -> float:
        return (self.b - self.a) / self.count

    @property
    def points(self) -> np.ndarray:
        return self.a + (np.arange(self.count) + 0.5) * self.step

    @classmethod
    def symmetric(cls, half_width: float, count: int) -> "SampleGrid":
        return cls(-half_width, half_width, count)

    @classmethod
    def period(cls, count: int) -> "SampleGrid":
        """Grid over ``[0, 2 pi]``."""
        return cls(0.0, 2 * math.pi, count)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> "SampleGrid":
        return cls(float(d["a"]), float(d["b"]), int(d["count"]))


def _merge_sorted(freqs: np.ndarray, coeffs: np.ndarray, tol: float):
    """Merge runs of sorted frequencies lying within ``tol`` of the run start.

    The merged term keeps the run's first (smallest) frequency and the sum of
    the run's coefficients, accumulated left to right.
    """
    if freqs.size == 0:
        return freqs, coeffs
    gaps = np.diff(freqs)
    if tol <= 0:
        starts_mask = np.concatenate(([True], gaps != 0))
    elif np.all(gaps > tol):
        starts_mask = np.ones(freqs.size, dtype=bool)
    else:
        starts_mask = np.zeros(freqs.size, dtype=bool)
        anchor = None
        for i, f in enumerate(freqs):
            if anchor is None or f - anchor > tol:
                starts_mask[i] = True
                anchor = f
    starts = np.flatnonzero(starts_mask)
    if starts.size == freqs.size:
        return freqs, coeffs
    merged = np.add.reduceat(coeffs, starts)
    return freqs[starts], merged


class TrigPoly:
    """Immutable trigonometric polynomial in canonical form."""

    __slots__ = ("_freqs", "_coeffs")

    def __init__(self, freqs=(), coeffs=(), *, merge_tol: float = 0.0):
        f = np.asarray(freqs, dtype=np.float64).ravel()
        c = np.asarray(coeffs, dtype=np.complex128).ravel()
        if f.shape != c.shape:
            raise ValueError("frequency and coefficient arrays differ in length")
        if not np.all(np.isfinite(f)):
            raise ValueError("frequencies must be finite")
        order = np.argsort(f, kind="stable")
        f, c = f[order], c[order]
        f, c = _merge_sorted(f, c, merge_tol)
        keep = c != 0
        f, c = np.ascontiguousarray(f[keep]), np.ascontiguousarray(c[keep])
        f.flags.writeable = False
        c.flags.writeable = False
        self._freqs = f
        self._coeffs = c

    @classmethod
    def zero(cls) -> "TrigPoly":
        return cls()

    @classmethod
    def from_terms(cls, terms, *, merge_tol: float = 0.0) -> "TrigPoly":
        terms = list(terms)
        if not terms:
            return cls()
        f, c = zip(*terms)
        return cls(f, c, merge_tol=merge_tol)

    @property
    def freqs(self) -> np.ndarray:
        return self._freqs

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def terms(self) -> list[tuple[float, complex]]:
        return [(float(f), complex(c)) for f, c in zip(self._freqs, self._coeffs)]

    def __len__(self) -> int:
        return self._freqs.size

    def is_zero(self) -> bool:
        return self._freqs.size == 0

    def coefficient_at(self, freq: float, tol: float = 0.0) -> complex:
        hit = np.flatnonzero(np.abs(self._freqs - freq) <= tol)
        return complex(self._coeffs[hit].sum()) if hit.size else 0j

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrigPoly):
            return NotImplemented
        return np.array_equal(self._freqs, other._freqs) and np.array_equal(self._coeffs, other._coeffs)

    def __hash__(self):
        return hash((self._freqs.tobytes(), self._coeffs.tobytes()))

    def __repr__(self) -> str:
        if len(self) <= 6:
            return f"TrigPoly({self.terms})"
        return f"TrigPoly(<{len(self)} terms, degree {degree(self):g}>)"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1))

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return multiply(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __call__(self, x) -> np.ndarray:
        return evaluate_at(self, x)

    # serialization
    def to_json_obj(self) -> list[dict]:
        return [
            {"freq": float(f), "re": float(c.real), "im": float(c.imag)}
            for f, c in zip(self._freqs, self._coeffs)
        ]

    @classmethod
    def from_json_obj(cls, obj) -> "TrigPoly":
        if not isinstance(obj, list):
            raise ValueError("polynomial JSON must be an array of terms")
        f, c = [], []
        for item in obj:
            if not isinstance(item, dict) or not {"freq", "re", "im"} <= item.keys():
                raise ValueError(f"malformed term: {item!r}")
            f.append(float(item["freq"]))
            c.append(complex(float(item["re"]), float(item["im"])))
        return cls(f, c)

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, text: str) -> "TrigPoly":
        return cls.from_json_obj(json.loads(text))


def _points(x) -> np.ndarray:
    if isinstance(x, SampleGrid):
        return x.points
    return np.atleast_1d(np.asarray(x, dtype=np.float64))


def evaluate_at(P: TrigPoly, x) -> np.ndarray:
    """Direct summation at arbitrary points; terms are added in ascending frequency blocks."""
    xs = _points(x)
    out = np.zeros(xs.size, dtype=np.complex128)
    n = len(P)
    if n == 0:
        return out
    pchunk = min(xs.size, 4096)
    tchunk = max(1, min(n, _BLOCK // pchunk))
    for p0 in range(0, xs.size, pchunk):
        xp = xs[p0:p0 + pchunk]
        acc = np.zeros(xp.size, dtype=np.complex128)
        for t0 in range(0, n, tchunk):
            f = P.freqs[t0:t0 + tchunk]
            c = P.coeffs[t0:t0 + tchunk]
            acc += np.exp(1j * np.multiply.outer(xp, f)) @ c
        out[p0:p0 + pchunk] = acc
    return out


def evaluate(P: TrigPoly, g: SampleGrid) -> np.ndarray:
    """Samples of ``P`` on the grid ``g``."""
    return evaluate_at(P, g.points)


def symmetric_partial_sum(P: TrigPoly, eta: float) -> TrigPoly:
    """Terms with ``|nu| < eta``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    keep = np.abs(P.freqs) < eta
    return TrigPoly(P.freqs[keep], P.coeffs[keep])


def _abs_groups(freqs: np.ndarray):
    """Order of terms by |nu| and the end index of each equal-|nu| group."""
    mags = np.abs(freqs)
    order = np.lexsort((freqs, mags))
    m = mags[order]
    ends = []
    anchor = None
    for i, v in enumerate(m):
        if anchor is not None and v - anchor > MERGE_TOL:
            ends.append(i - 1)
            anchor = v
        elif anchor is None:
            anchor = v
    ends.append(m.size - 1)
    return order, np.asarray(ends, dtype=np.intp), m


def maximal_function_at(P: TrigPoly, x) -> np.ndarray:
    """``P*(x) = max over symmetric cuts of |partial sum|`` at arbitrary points."""
    xs = _points(x)
    out = np.zeros(xs.size)
    n = len(P)
    if n == 0:
        return out
    order, ends, _ = _abs_groups(P.freqs)
    f = P.freqs[order]
    c = P.coeffs[order]
    tchunk = max(1, min(n, 1 << 16))
    pchunk = max(1, _BLOCK // tchunk)
    for p0 in range(0, xs.size, pchunk):
        xp = xs[p0:p0 + pchunk]
        running = np.zeros(xp.size, dtype=np.complex128)
        best = np.zeros(xp.size)
        for t0 in range(0, n, tchunk):
            t1 = min(n, t0 + tchunk)
            block = np.exp(1j * np.multiply.outer(xp, f[t0:t1])) * c[t0:t1]
            np.cumsum(block, axis=1, out=block)
            block += running[:, None]
            sel = ends[(ends >= t0) & (ends < t1)] - t0
            if sel.size:
                best = np.maximum(best, np.abs(block[:, sel]).max(axis=1))
            running = block[:, -1].copy()
        out[p0:p0 + pchunk] = best
    return out


def _is_period_grid(g: SampleGrid) -> bool:
    return g.a == 0.0 and g.b == 2 * math.pi


def _maximal_function_periodic(P: TrigPoly, g: SampleGrid) -> np.ndarray:
    # Integer spectrum on [0, 2 pi] midpoints: exp(i k x_j) is read from a
    # table of G-th roots of unity instead of being recomputed per term.
    G = g.count
    order, ends, _ = _abs_groups(P.freqs)
    k = np.round(P.freqs[order]).astype(np.int64)
    c = P.coeffs[order] * np.exp(1j * np.pi * k / G)
    km = k % G
    table = np.exp(2j * np.pi * np.arange(G) / G)
    starts = np.concatenate(([0], ends[:-1] + 1))
    out = np.zeros(G)
    pchunk = max(1, _BLOCK // max(1, k.size))
    for p0 in range(0, G, pchunk):
        j = np.arange(p0, min(G, p0 + pchunk))
        block = table[np.multiply.outer(j, km) % G] * c
        groups = np.add.reduceat(block, starts, axis=1)
        np.cumsum(groups, axis=1, out=groups)
        out[p0:p0 + j.size] = np.abs(groups).max(axis=1)
    return out


def maximal_function(P: TrigPoly, g: SampleGrid) -> np.ndarray:
    """Maximal function of ``P`` sampled on ``g``.

    Equal ``|nu|`` values enter together. The empty prefix contributes 0, so
    the result is always nonnegative.
    """
    if len(P) and _is_period_grid(g) and np.array_equal(P.freqs, np.round(P.freqs)):
        return _maximal_function_periodic(P, g)
    return maximal_function_at(P, g.points)


def a_norm(P: TrigPoly) -> float:
    return float(np.abs(P.coeffs).sum())


def u_norm_grid(per_2pi: int = 1 << 14, periods: float = 1.0, center: float = math.pi) -> SampleGrid:
    """Default grid for U-norm estimates: ``per_2pi`` points per length 2 pi."""
    count = max(1, int(round(per_2pi * periods)))
    half = math.pi * periods
    return SampleGrid(center - half, center + half, count)


def u_norm_estimate(P: TrigPoly, g: SampleGrid | None = None, refinement: float = 1.0) -> float:
    """Grid lower estimate of ``sup_x P*(x)``.

    The window must cover at least ``2 pi * refinement``; the true supremum over
    the real line is not computable for incommensurable frequencies.
    """
    if g is None:
        g = u_norm_grid(periods=refinement)
    if g.length < 2 * math.pi * refinement * (1 - 1e-12):
        raise ValueError(f"U-norm grid must span at least {2 * math.pi * refinement:g}")
    if P.is_zero():
        return 0.0
    return float(maximal_function(P, g).max())


def dilate(P: TrigPoly, N: int) -> TrigPoly:
    """``P(N x)``."""
    if int(N) != N or N < 1:
        raise ValueError(f"dilation factor must be a positive integer, got {N}")
    return TrigPoly(P.freqs * int(N), P.coeffs)


def multiply(P: TrigPoly, Q: TrigPoly) -> TrigPoly:
    """Product; pairwise frequency sums within ``MERGE_TOL`` become one term."""
    if P.is_zero() or Q.is_zero():
        return TrigPoly()
    f = np.add.outer(P.freqs, Q.freqs).ravel()
    c = np.multiply.outer(P.coeffs, Q.coeffs).ravel()
    return TrigPoly(f, c, merge_tol=MERGE_TOL)


def add(P: TrigPoly, Q: TrigPoly) -> TrigPoly:
    return TrigPoly(
        np.concatenate((P.freqs, Q.freqs)),
        np.concatenate((P.coeffs, Q.coeffs)),
        merge_tol=MERGE_TOL,
    )


def scale(P: TrigPoly, c: complex) -> TrigPoly:
    return TrigPoly(P.freqs, P.coeffs * complex(c))


def degree(P: TrigPoly) -> float:
    if P.is_zero():
        return 0.0
    return float(max(abs(P.freqs[0]), abs(P.freqs[-1])))


def max_coefficient_modulus(P: TrigPoly) -> float:
    return float(np.abs(P.coeffs).max()) if len(P) else 0.0


def has_integer_spectrum(P: TrigPoly, tol: float = 1e-9) -> bool:
    return bool(np.all(np.abs(P.freqs - np.round(P.freqs)) <= tol))
