"""The universal spectrum: layer records ``(eps_l, d_l, b_l)`` and the index map ``lambda``.

Layer ``l`` owns the blocks ``I_{l,s} = I_l + s b_l`` for ``1 <= |s| <= d_l``,
where ``I_l = [-eta_l, -eta_{l-1}] U [eta_{l-1}, eta_l]``. An index
``m = n + s b_l`` with ``sigma(n)`` in ``I_l`` is mapped to
``lambda(m) = sigma(n) + s b_l``; all other indices fall back to
``lambda(m) = sigma(m)``. Either way ``lambda(m) - m`` is some ``rho(k)``.

The map is stored as a rule over an index range rather than as an explicit
table, since ``d_l`` is the degree of a Korner polynomial and is large.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisLayer, layer_a_norm_max
from .errors import OutOfMaterializedRange
from .korner import KornerBook
from .l0approx import RhoRule

B0 = 1
D0 = 1


def compute_epsilon(l: int, layer: BasisLayer) -> float:
    """Half the largest admissible value: ``1 / (2 l^2 max_r ||R_{r,l}||_A)``."""
    return 1.0 / (2 * l ** 2 * layer_a_norm_max(layer))


def compute_d(l: int, epsilon_l: float, book: KornerBook) -> int:
    return book.degree_for(epsilon_l, float(l) ** -3)


def compute_b(l: int, prev_b: int, prev_d: int, eta_prev: float, eta_l: float) -> int:
    """Smallest integer strictly above ``prev_b prev_d + ceil(eta_prev) + 2 ceil(eta_l)``."""
    return int(prev_b) * int(prev_d) + math.ceil(eta_prev) + 2 * math.ceil(eta_l) + 1


@dataclass(frozen=True)
class LayerRecord:
    l: int
    eta_l: float
    eta_prev: float
    max_a_norm: float
    epsilon_l: float
    d_l: int
    b_l: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SpectrumPlan:
    rho: RhoRule
    records: list = field(default_factory=list)
    fallback: str = "sigma"

    @property
    def l_max(self) -> int:
        return len(self.records)

    def record(self, l: int) -> LayerRecord:
        if not 1 <= l <= len(self.records):
            raise OutOfMaterializedRange(f"layer {l} not in plan (have 1..{len(self.records)})")
        return self.records[l - 1]

    @property
    def index_range(self) -> int:
        """Every ``|m| <= index_range`` is covered by the map or its fallback."""
        if not self.records:
            return 0
        top = self.records[-1]
        return top.b_l * top.d_l + math.ceil(top.eta_l) + 1

    def layer_indices(self, l: int) -> np.ndarray:
        """The ``n`` with ``sigma(n)`` in ``I_l``."""
        rec = self.record(l)
        hi = math.ceil(rec.eta_l) + 2
        n = np.arange(-hi, hi + 1)
        a = np.abs(self.rho.sigma(n))
        return n[(a >= rec.eta_prev) & (a <= rec.eta_l)]

    def decode(self, m: int):
        """``(l, s, n)`` with ``m = n + s b_l``, or None for unmapped indices."""
        m = int(m)
        if abs(m) > self.index_range:
            raise OutOfMaterializedRange(f"index {m} beyond materialized range {self.index_range}")
        for rec in self.records:
            s = int(round(m / rec.b_l))
            if 1 <= abs(s) <= rec.d_l:
                n = m - s * rec.b_l
                a = abs(float(self.rho.sigma(n)))
                if rec.eta_prev <= a <= rec.eta_l:
                    return rec.l, s, n
        return None

    def lambda_offset_index(self, m: int) -> int:
        """``k`` with ``lambda(m) - m = rho(k)`` (exact, no floating point)."""
        hit = self.decode(m)
        return abs(hit[2]) if hit else abs(int(m))

    def lambda_of(self, m: int) -> float:
        m = int(m)
        return float(m + self.rho(self.lambda_offset_index(m)))

    def block_frequencies(self, l: int, s: int) -> np.ndarray:
        rec = self.record(l)
        if not 1 <= abs(s) <= rec.d_l:
            raise ValueError(f"block shift s={s} outside 1..{rec.d_l}")
        return np.sort(self.rho.sigma(self.layer_indices(l)) + s * rec.b_l)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho.to_obj(),
            "b0": B0,
            "d0": D0,
            "layers": [r.to_dict() for r in self.records],
            "lambda_map": {"rule": "n+s*b_l -> sigma(n)+s*b_l", "index_range": [-self.index_range, self.index_range]},
            "fallback": self.fallback,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumPlan":
        return cls(
            rho=RhoRule.from_obj(d["rho"]),
            records=[LayerRecord(**r) for r in d["layers"]],
            fallback=d.get("fallback", "sigma"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SpectrumPlan":
        return cls.from_dict(json.loads(text))


def extend_plan(plan: SpectrumPlan, layer: BasisLayer, book: KornerBook) -> SpectrumPlan:
    """Append the record for ``layer`` (which must be the next layer)."""
    l = layer.l
    if l != plan.l_max + 1:
        raise ValueError(f"plan has {plan.l_max} layers; cannot append layer {l}")
    prev = plan.records[-1] if plan.records else None
    eps = compute_epsilon(l, layer)
    d = compute_d(l, eps, book)
    b = compute_b(l, prev.b_l if prev else B0, prev.d_l if prev else D0, layer.eta_prev, layer.eta_l)
    rec = LayerRecord(l=l, eta_l=layer.eta_l, eta_prev=layer.eta_prev, max_a_norm=layer.max_a_norm,
                      epsilon_l=eps, d_l=d, b_l=b)
    return SpectrumPlan(plan.rho, plan.records + [rec], plan.fallback)


def build_plan(layers: list[BasisLayer], rho, book: KornerBook) -> SpectrumPlan:
    plan = SpectrumPlan(RhoRule.from_obj(rho))
    for layer in layers:
        plan = extend_plan(plan, layer, book)
    return plan


# ---- invariant checks (all recompute from the plan alone) ----

def check_epsilon(plan: SpectrumPlan) -> bool:
    return all(r.epsilon_l * r.max_a_norm < 1.0 / r.l ** 2 for r in plan.records)


def check_b(plan: SpectrumPlan) -> bool:
    prev_b, prev_d = B0, D0
    for r in plan.records:
        if r.b_l != compute_b(r.l, prev_b, prev_d, r.eta_prev, r.eta_l):
            return False
        if not r.b_l > prev_b * prev_d + r.eta_prev + 2 * r.eta_l:
            return False
        prev_b, prev_d = r.b_l, r.d_l
    return True


def block_hulls(plan: SpectrumPlan) -> np.ndarray:
    """Convex hulls ``[s b_l - eta_l, s b_l + eta_l]`` of every block, sorted by start."""
    parts = []
    for r in plan.records:
        s = np.concatenate((np.arange(-r.d_l, 0), np.arange(1, r.d_l + 1))).astype(np.float64)
        c = s * r.b_l
        parts.append(np.stack((c - r.eta_l, c + r.eta_l), axis=1))
    if not parts:
        return np.zeros((0, 2))
    h = np.concatenate(parts)
    return h[np.argsort(h[:, 0], kind="stable")]


def check_disjoint(plan: SpectrumPlan, explicit_limit: int = 20_000_000) -> bool:
    """Blocks are pairwise disjoint.

    The arithmetic argument (neighbours within a layer, and the outermost
    block of one layer against the innermost of the next) is always checked;
    the sorted list of all block hulls is checked too when it is small enough.
    """
    prev_top = -math.inf
    for r in plan.records:
        if not r.b_l > 2 * r.eta_l:
            return False
        if not r.b_l - r.eta_l > prev_top:
            return False
        prev_top = r.d_l * r.b_l + r.eta_l
    total = sum(2 * r.d_l for r in plan.records)
    if total <= explicit_limit:
        h = block_hulls(plan)
        if h.shape[0] > 1 and not np.all(h[1:, 0] > h[:-1, 1]):
            return False
    return True


def check_offsets(plan: SpectrumPlan, shifts_per_layer: int = 64) -> bool:
    """``lambda(m) - m`` is ``rho(k)`` for sampled mapped indices (both s-extremes included)."""
    for r in plan.records:
        ns = plan.layer_indices(r.l)
        s_all = np.unique(np.concatenate((
            np.arange(1, min(r.d_l, shifts_per_layer) + 1),
            [r.d_l], -np.arange(1, min(r.d_l, shifts_per_layer) + 1), [-r.d_l],
        )))
        for s in s_all:
            for n in ns:
                m = int(n) + int(s) * r.b_l
                hit = plan.decode(m)
                if hit is None or hit[0] != r.l or hit[1] != s or hit[2] != n:
                    return False
                if plan.lambda_offset_index(m) != abs(int(n)):
                    return False
    return True


def decay_bound(plan: SpectrumPlan, l: int) -> float:
    """``max |rho(k)|`` over ``k >= ceil(eta_{l-1}) - 1``, on the materialized range."""
    rec = plan.record(l)
    k0 = max(0, math.ceil(rec.eta_prev) - 1)
    ks = np.arange(k0, math.ceil(rec.eta_l) + 3)
    return float(np.max(np.abs(plan.rho(ks))))


def check_decay(plan: SpectrumPlan) -> bool:
    for r in plan.records:
        ns = plan.layer_indices(r.l)
        if ns.size and not np.max(np.abs(plan.rho(np.abs(ns)))) <= decay_bound(plan, r.l):
            return False
    return True


def repetition_counts(plan: SpectrumPlan, l: int) -> dict:
    """How many mapped indices of layer ``l`` (plus fallbacks at ``+-k``) use each ``rho(k)``."""
    rec = plan.record(l)
    counts: dict[int, int] = {}
    for n in plan.layer_indices(l):
        counts[abs(int(n))] = counts.get(abs(int(n)), 0) + 2 * rec.d_l
    for k in list(counts):
        counts[k] += sum(1 for m in {k, -k} if plan.decode(m) is None)
    return counts


def check_repetitions(plan: SpectrumPlan) -> bool:
    return all(
        c <= 4 * plan.record(l).d_l + 2
        for l in range(1, plan.l_max + 1)
        for c in repetition_counts(plan, l).values()
    )


def check_plan(plan: SpectrumPlan) -> dict:
    return {
        "eps_def": check_epsilon(plan),
        "b_formula": check_b(plan),
        "disjoint": check_disjoint(plan),
        "offsets": check_offsets(plan),
        "decay": check_decay(plan),
        "repetitions": check_repetitions(plan),
    }
