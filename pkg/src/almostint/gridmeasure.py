"""Grid estimates of exceedance-set measures ``m{x in [a, b] : |s(x)| >= t}``."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .trigpoly import SampleGrid, TrigPoly, evaluate

# Verification density: points per length 2 pi.
VERIFY_PER_2PI = 4096


class InputContractError(ValueError):
    """Sample array does not match its grid."""


@dataclass(frozen=True)
class ExceedanceReport:
    threshold: float
    window: tuple[float, float]
    estimated_measure: float
    exceed_count: int
    grid_count: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExceedanceReport":
        return cls(
            threshold=float(d["threshold"]),
            window=(float(d["window"][0]), float(d["window"][1])),
            estimated_measure=float(d["estimated_measure"]),
            exceed_count=int(d["exceed_count"]),
            grid_count=int(d["grid_count"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ExceedanceReport":
        return cls.from_dict(json.loads(text))


def _check(samples, g: SampleGrid) -> np.ndarray:
    s = np.asarray(samples)
    if s.ndim != 1 or s.size != g.count:
        raise InputContractError(f"expected {g.count} samples, got shape {s.shape}")
    return s


def exceedance_measure(samples, g: SampleGrid, t: float) -> ExceedanceReport:
    """Closed-threshold exceedance: a point counts when ``|sample| >= t``."""
    if not t >= 0:
        raise InputContractError(f"threshold must be nonnegative, got {t}")
    s = _check(samples, g)
    k = int(np.count_nonzero(np.abs(s) >= t))
    return ExceedanceReport(
        threshold=float(t),
        window=(g.a, g.b),
        estimated_measure=k * (g.b - g.a) / g.count,
        exceed_count=k,
        grid_count=g.count,
    )


def exceedance_of_difference(P: TrigPoly, target, g: SampleGrid, t: float) -> ExceedanceReport:
    tgt = _check(target, g)
    return exceedance_measure(evaluate(P, g) - tgt, g, t)


def verification_grid(a: float, b: float, per_2pi: int = VERIFY_PER_2PI) -> SampleGrid:
    """Midpoint grid with ``per_2pi`` points per length 2 pi (at least one point)."""
    count = max(1, int(math.ceil(per_2pi * (b - a) / (2 * math.pi) - 1e-9)))
    return SampleGrid(a, b, count)


def window_grid(N: int, per_2pi: int = VERIFY_PER_2PI) -> SampleGrid:
    """Grid on ``[-N pi, N pi]``."""
    return verification_grid(-N * math.pi, N * math.pi, per_2pi)


def exceedance_csv(samples, g: SampleGrid, t: float) -> str:
    """CSV rows ``x, abs, exceeds`` for plotting."""
    s = np.abs(_check(samples, g))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "abs", "exceeds"])
    for x, v in zip(g.points, s):
        w.writerow([repr(float(x)), repr(float(v)), int(v >= t)])
    return buf.getvalue()
