"""Layered family ``R_{r,l}`` of perturbed-exponential polynomials with increasing spectra.

Layer ``l`` holds ``R_{r,l}`` for ``r = -l..l``; each approximates
``exp(i sigma(r) x)`` on ``[-l pi, l pi]`` so that the error reaches
``1/l^2`` only on a set of measure below ``relaxation / l^3``. Every
polynomial uses only frequencies beyond the degree of everything built
before it, so spectra increase along the order ``(l, r)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import LayerBuildFailed
from .gridmeasure import exceedance_of_difference
from .l0approx import RhoRule, SolverConfig, approximate_growing
from .trigpoly import TrigPoly, a_norm, degree


@dataclass(frozen=True)
class BasisConfig:
    relaxation: float = 1.0
    cap_budget: int = 1 << 12     # largest index cap tried
    max_pool: int = 1024          # largest pool size tried (compute guard)
    cap_min_width: int = 8
    prune_rel: float = 1e-6       # drop coefficients below this fraction of the largest
    solver: SolverConfig = field(default_factory=SolverConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = self.solver.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BasisConfig":
        d = dict(d)
        if "solver" in d:
            d["solver"] = SolverConfig.from_dict(d["solver"])
        return cls(**d)


@dataclass
class BasisLayer:
    l: int
    polys: dict                   # r -> TrigPoly
    eta_l: float
    eta_prev: float
    max_a_norm: float
    relaxation: float = 1.0
    reports: dict = field(default_factory=dict)   # r -> diagnostics

    @property
    def threshold(self) -> float:
        return 1.0 / self.l ** 2

    @property
    def measure_bound(self) -> float:
        return self.relaxation / self.l ** 3

    @property
    def window(self) -> tuple[float, float]:
        return (-self.l * math.pi, self.l * math.pi)

    def to_dict(self) -> dict:
        return {
            "l": self.l,
            "eta_l": self.eta_l,
            "eta_prev": self.eta_prev,
            "max_a_norm": self.max_a_norm,
            "relaxation": self.relaxation,
            "polys": {str(r): P.to_json_obj() for r, P in sorted(self.polys.items())},
            "reports": {str(r): rep for r, rep in sorted(self.reports.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisLayer":
        return cls(
            l=int(d["l"]),
            polys={int(r): TrigPoly.from_json_obj(p) for r, p in d["polys"].items()},
            eta_l=float(d["eta_l"]),
            eta_prev=float(d["eta_prev"]),
            max_a_norm=float(d["max_a_norm"]),
            relaxation=float(d.get("relaxation", 1.0)),
            reports={int(r): rep for r, rep in d.get("reports", {}).items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def layer_a_norm_max(layer: BasisLayer) -> float:
    return max(a_norm(P) for P in layer.polys.values())


def index_floor_for(rho: RhoRule, D: float) -> int:
    """Smallest ``N >= -1`` such that ``|sigma(n)| > D`` for every ``|n| > N``."""
    hi = int(math.ceil(D)) + 3
    n = np.arange(-hi, hi + 1)
    bad = n[np.abs(rho.sigma(n)) <= D]
    return int(np.max(np.abs(bad))) if bad.size else -1


def build_layer(l: int, prev: BasisLayer | None, rho, cfg: BasisConfig = BasisConfig()) -> BasisLayer:
    if l < 1 or (prev is None) != (l == 1) or (prev is not None and prev.l != l - 1):
        raise ValueError(f"layer {l} needs layer {l - 1} as predecessor")
    rho = RhoRule.from_obj(rho)
    delta = 1.0 / l ** 2
    mu = cfg.relaxation / l ** 3
    half = l * math.pi
    eta_prev = prev.eta_l if prev is not None else 0.0
    running = eta_prev
    polys, reports = {}, {}
    for r in range(-l, l + 1):
        freq = float(rho.sigma(r))
        floor = index_floor_for(rho, running)
        cap0 = max(2 * max(floor, 0), floor + cfg.cap_min_width, abs(r) + 1)

        def target(x, freq=freq):
            return np.exp(1j * freq * x)

        rep, g, attempts = approximate_growing(
            target, half, rho, floor, delta, mu, cap0, cfg.cap_budget, cfg.max_pool, cfg.solver
        )
        R = rep.to_poly(rho)
        tg = target(g.points)
        check = exceedance_of_difference(R, tg, g, delta)
        if len(R):
            keep = np.abs(R.coeffs) >= cfg.prune_rel * np.abs(R.coeffs).max()
            pruned = TrigPoly(R.freqs[keep], R.coeffs[keep])
            pruned_check = exceedance_of_difference(pruned, tg, g, delta)
            if pruned_check.estimated_measure <= check.estimated_measure:
                R, check = pruned, pruned_check
        info = {
            "target_freq": freq,
            "pool_floor": floor,
            "pool_cap": rep.pool_cap_used,
            "converged": rep.converged,
            "iterations": rep.iterations,
            "a_norm": a_norm(R),
            "degree": degree(R),
            "exceedance": check.to_dict(),
            "attempts": attempts,
        }
        if not check.estimated_measure < mu:
            raise LayerBuildFailed(l, r, rep, f"layer {l}, r={r}: exceedance {check.estimated_measure:.4g} "
                                              f"not below {mu:.4g} (best of {len(attempts)} pool caps)")
        polys[r] = R
        reports[r] = info
        running = degree(R)
    return BasisLayer(
        l=l, polys=polys, eta_l=degree(polys[l]), eta_prev=eta_prev,
        max_a_norm=max(a_norm(P) for P in polys.values()), relaxation=cfg.relaxation, reports=reports,
    )


def build_layers(l_max: int, rho, cfg: BasisConfig = BasisConfig(), start: list | None = None) -> list[BasisLayer]:
    """Layers ``1..l_max``; on failure the exception carries ``.layers`` built so far."""
    layers = list(start or [])
    for l in range(len(layers) + 1, l_max + 1):
        try:
            layers.append(build_layer(l, layers[-1] if layers else None, rho, cfg))
        except LayerBuildFailed as exc:
            exc.layers = layers
            raise
    return layers


def check_increasing_spectra(layers: list[BasisLayer]) -> bool:
    """Every frequency of a later polynomial exceeds the degree of every earlier one."""
    top = -math.inf
    for layer in layers:
        for r in range(-layer.l, layer.l + 1):
            P = layer.polys[r]
            if len(P) and not np.min(np.abs(P.freqs)) > top:
                return False
            top = max(top, degree(P))
    return True


def check_layer_spectrum(layer: BasisLayer) -> bool:
    """All spectra lie in ``eta_prev <= |xi| <= eta_l``."""
    for P in layer.polys.values():
        m = np.abs(P.freqs)
        if len(P) and not (m.min() >= layer.eta_prev and m.max() <= layer.eta_l):
            return False
    return True
