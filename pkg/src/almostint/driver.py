"""The representation loop: coefficient blocks ``H_N`` and the inequality checks.

Step ``N`` on the window ``[-N pi, N pi]``:

1. ``F_N = f - S_{N-1}``;
2. ``G_N = sum_{|r| < M_N} a_r exp(i sigma(r) x)`` approximates ``F_N`` in measure;
3. ``l(N)`` is the least integer above ``N, 1/delta_N, M_N, ||G_N||_A, l(N-1)``;
4. ``Q_N = sum a_r R_{r,l(N)}``;
5. ``P_N`` is the Korner polynomial for ``(eps_{l(N)}, N^-3)``;
6. ``H_N = Q_N * P_N(b_{l(N)} x)`` and ``S_N = S_{N-1} + H_N``.

Indices of ``H_N`` are ``m = n + k b_{l(N)}`` for ``sigma(n)`` in the
spectrum of ``Q_N`` and ``k`` in that of ``P_N``; the frequency is
``lambda(m) = sigma(n) + k b_{l(N)}``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .basis import BasisConfig, BasisLayer, build_layers
from .errors import GenerationFailed, LayerBuildFailed, OutOfMaterializedRange, StepFailed
from .gridmeasure import VERIFY_PER_2PI, exceedance_measure, window_grid
from .korner import KornerBook, KornerConfig
from .l0approx import RhoRule, SolverConfig, approximate_growing
from .spectrum import SpectrumPlan, extend_plan
from .trigpoly import SampleGrid, TrigPoly, a_norm, dilate, maximal_function, multiply, u_norm_estimate

PROFILES = ("faithful", "desk")


# ---- targets ----

def zero_target(x):
    return np.zeros_like(np.asarray(x, dtype=np.float64))


def clipped_step(x, width: float = 1.0):
    """Unit step at 0 with its jump replaced by a linear ramp of the given width."""
    return np.clip(np.asarray(x, dtype=np.float64) / width + 0.5, 0.0, 1.0)


def gaussian(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * x * x)


TARGETS: dict[str, Callable] = {"zero": zero_target, "clipped_step": clipped_step, "gaussian": gaussian}


class CsvTarget:
    """Target given by CSV columns ``x,f`` or ``x,re,im``; linear interpolation, zero outside."""

    def __init__(self, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        order = np.argsort(data[:, 0])
        data = data[order]
        self.x = data[:, 0]
        self.re = data[:, 1]
        self.im = data[:, 2] if data.shape[1] > 2 else np.zeros_like(self.re)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        re = np.interp(x, self.x, self.re, left=0.0, right=0.0)
        if not np.any(self.im):
            return re
        return re + 1j * np.interp(x, self.x, self.im, left=0.0, right=0.0)


def resolve_target(spec) -> Callable:
    if callable(spec):
        return spec
    if spec in TARGETS:
        return TARGETS[spec]
    if isinstance(spec, str) and spec.endswith(".csv"):
        return CsvTarget(spec)
    raise ValueError(f"unknown target {spec!r}")


# ---- configuration ----

@dataclass(frozen=True)
class DriverConfig:
    profile: str = "desk"
    relaxation: float = 1.0           # faithful delta_N multiplier
    desk_delta_scale: float = 0.2     # desk delta_N = scale / N
    g_cap_start: int = 4
    g_cap_budget: int = 1 << 12
    g_max_pool: int = 1024
    per_2pi: int = VERIFY_PER_2PI
    hstar_count: int = 1024           # grid on [-pi, pi] for H_N^* statistics
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")

    def measure_scale(self, N: int) -> float:
        """Desk budgets grow with the window length ``2 pi N`` (relative to ``2 pi``)."""
        return float(N) if self.profile == "desk" else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = self.solver.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DriverConfig":
        d = dict(d)
        if "solver" in d:
            d["solver"] = SolverConfig.from_dict(d["solver"])
        return cls(**d)


class Pipeline:
    """Rho, basis layers, spectrum plan and Korner book, extended on demand.

    With ``frozen=True`` the plan is never extended; a step needing a layer
    beyond it fails instead.
    """

    def __init__(self, rho="one_over_k_plus_2", basis_cfg: BasisConfig = BasisConfig(),
                 book=None, layers: list | None = None, plan: SpectrumPlan | None = None,
                 frozen: bool = False):
        self.rho = RhoRule.from_obj(rho)
        self.basis_cfg = basis_cfg
        self.book = book if book is not None else KornerBook(KornerConfig())
        self.layers: list[BasisLayer] = list(layers or [])
        self.plan = plan if plan is not None else SpectrumPlan(self.rho)
        self.frozen = frozen
        if self.plan.l_max > len(self.layers):
            raise ValueError("plan covers layers that were not supplied")

    def ensure(self, l: int):
        if l <= self.plan.l_max:
            return
        if self.frozen:
            raise OutOfMaterializedRange(f"frozen plan stops at layer {self.plan.l_max}, layer {l} needed")
        if l > len(self.layers):
            self.layers = build_layers(l, self.rho, self.basis_cfg, start=self.layers)
        for layer in self.layers[self.plan.l_max:l]:
            self.plan = extend_plan(self.plan, layer, self.book)

    def layer(self, l: int) -> BasisLayer:
        return self.layers[l - 1]


def delta_schedule(N: int, cfg: DriverConfig, book=None) -> float:
    if cfg.profile == "desk":
        return cfg.desk_delta_scale / N
    return cfg.relaxation / (N * book.u_bound_for_delta(float(N + 1) ** -3))


def l_of_N(N: int, delta_N: float, M_N: int, g_a_norm: float, l_prev: int) -> int:
    """Least integer strictly above every constraint."""
    return int(math.floor(max(N, 1.0 / delta_N, M_N, g_a_norm, l_prev))) + 1


# ---- state ----

@dataclass
class StepReport:
    N: int
    profile: str
    delta_N: float
    M_N: int
    l_N: int
    g_a_norm: float
    q_a_norm: float
    exceed_Gg: float
    exceed_HG: float
    exceed_KH_window: float
    exceed_fS: float
    h_star_max: float
    h_star_median: float
    bound_first_summand: float
    bound_checks: dict
    budgets: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StepReport":
        return cls(**d)


@dataclass
class RepresentationState:
    N: int = 0
    coefficients: dict = field(default_factory=dict)   # index m -> complex
    reports: list = field(default_factory=list)
    H: dict = field(default_factory=dict)              # N -> TrigPoly
    Q: dict = field(default_factory=dict)              # N -> TrigPoly
    P_u: dict = field(default_factory=dict)            # N -> grid U-norm estimate of P_N
    step_indices: dict = field(default_factory=dict)   # N -> sorted list of indices added

    def copy(self) -> "RepresentationState":
        return RepresentationState(
            self.N, dict(self.coefficients), list(self.reports), dict(self.H), dict(self.Q),
            dict(self.P_u), {k: list(v) for k, v in self.step_indices.items()},
        )

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "coefficients": [[int(m), c.real, c.imag] for m, c in sorted(self.coefficients.items())],
            "reports": [r.to_dict() for r in self.reports],
            "H": {str(k): P.to_json_obj() for k, P in sorted(self.H.items())},
            "Q": {str(k): P.to_json_obj() for k, P in sorted(self.Q.items())},
            "P_u": {str(k): v for k, v in sorted(self.P_u.items())},
            "step_indices": {str(k): [int(m) for m in v] for k, v in sorted(self.step_indices.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RepresentationState":
        return cls(
            N=int(d["N"]),
            coefficients={int(m): complex(re, im) for m, re, im in d["coefficients"]},
            reports=[StepReport.from_dict(r) for r in d["reports"]],
            H={int(k): TrigPoly.from_json_obj(v) for k, v in d["H"].items()},
            Q={int(k): TrigPoly.from_json_obj(v) for k, v in d["Q"].items()},
            P_u={int(k): float(v) for k, v in d["P_u"].items()},
            step_indices={int(k): [int(m) for m in v] for k, v in d["step_indices"].items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def reconstruct(state: RepresentationState, plan: SpectrumPlan) -> TrigPoly:
    """``S_N`` from the coefficient map and the plan's lambda."""
    if not state.coefficients:
        return TrigPoly()
    ms = sorted(state.coefficients)
    return TrigPoly([plan.lambda_of(m) for m in ms], [state.coefficients[m] for m in ms])


def partial_sum_samples(state: RepresentationState, x) -> np.ndarray:
    """``S_N(x)`` summed from the retained blocks ``H_1..H_N``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.size, dtype=np.complex128)
    for k in sorted(state.H):
        out += state.H[k](x)
    return out


def sigma_indices(rho: RhoRule, freqs: np.ndarray) -> np.ndarray:
    """Invert ``sigma`` exactly on a set of realized frequencies."""
    fl = np.floor(freqs).astype(np.int64)
    out = np.empty(freqs.size, dtype=np.int64)
    for i, (f, n0) in enumerate(zip(freqs, fl)):
        for n in (n0, n0 + 1, n0 - 1, n0 + 2):
            if rho.sigma(n) == f:
                out[i] = n
                break
        else:
            raise ValueError(f"frequency {f!r} is not sigma(n) for any n")
    return out


def step(state: RepresentationState, f, pipe: Pipeline, cfg: DriverConfig = DriverConfig()) -> RepresentationState:
    """One step of the loop; the input state is never modified."""
    N = state.N + 1
    f = resolve_target(f)
    rho = pipe.rho
    try:
        delta_N = delta_schedule(N, cfg, pipe.book)
    except GenerationFailed as exc:
        raise StepFailed(N, "delta schedule", exc) from exc
    scale = cfg.measure_scale(N)
    budgets = {"Gg": scale / N ** 2, "HG": 3 * scale / N ** 2, "KH": scale / N ** 2, "fS": 5 * scale / N ** 2}
    half = N * math.pi

    def F(x):
        return f(x) - partial_sum_samples(state, x)

    # (i)-(ii) G_N
    try:
        g_rep, g_grid, attempts = approximate_growing(
            F, half, rho, -1, delta_N, budgets["Gg"], cfg.g_cap_start, cfg.g_cap_budget, cfg.g_max_pool, cfg.solver)
    except Exception as exc:  # solver contract errors
        raise StepFailed(N, "G_N solve", exc) from exc
    if not g_rep.converged:
        raise StepFailed(N, "G_N solve", f"exceedance {g_rep.achieved_exceedance:.4g} not below {budgets['Gg']:.4g}",
                         report=g_rep)
    M_N = g_rep.pool_cap_used + 1
    a = {r: c for r, c in g_rep.coefficients.items() if c != 0}
    G = g_rep.to_poly(rho)
    g_a = a_norm(G)
    l_prev = state.reports[-1].l_N if state.reports else 0
    l_N = l_of_N(N, delta_N, M_N, g_a, l_prev)

    vgrid = window_grid(N, cfg.per_2pi)
    xv = vgrid.points
    details = {"G_grid": g_grid.to_dict(), "verify_grid": vgrid.to_dict(), "G_attempts": attempts,
               "G_converged": g_rep.converged}

    if not a:
        # G_N = 0 forces Q_N = H_N = 0; no layer or Korner polynomial is consulted.
        Q = H = TrigPoly()
        eps = b = d = None
        P_u = 0.0
        new_coeffs: dict[int, complex] = {}
        exceed_KH = 0.0
        max_a = 0.0
        containment = True
    else:
        try:
            pipe.ensure(l_N)
        except (LayerBuildFailed, GenerationFailed, OutOfMaterializedRange) as exc:
            raise StepFailed(N, f"layer/plan l={l_N}", exc) from exc
        layer = pipe.layer(l_N)
        rec = pipe.plan.record(l_N)
        eps, b, d = rec.epsilon_l, rec.b_l, rec.d_l
        max_a = layer.max_a_norm
        Q = TrigPoly()
        for r in sorted(a):
            Q = Q + layer.polys[r] * a[r]
        try:
            P = pipe.book.polynomial(eps, float(N) ** -3)
        except GenerationFailed as exc:
            raise StepFailed(N, "Korner polynomial", exc) from exc
        H = multiply(Q, dilate(P, b))
        # explicit index bookkeeping: m = n + k b
        qn = sigma_indices(rho, Q.freqs)
        pk = np.round(P.freqs).astype(np.int64)
        ms = (qn[:, None] + pk[None, :] * b).ravel()
        cs = np.multiply.outer(Q.coeffs, P.coeffs).ravel()
        new_coeffs = {}
        for m, c in zip(ms.tolist(), cs.tolist()):
            new_coeffs[m] = new_coeffs.get(m, 0) + c
        containment = len(new_coeffs) == ms.size and len(H) == ms.size
        for m in new_coeffs:
            hit = pipe.plan.decode(m)
            if hit is None or hit[0] != l_N or not 1 <= abs(hit[1]) <= d:
                containment = False
                break
        Pb = P(b * xv)
        exceed_KH = exceedance_measure(Pb - 1.0, vgrid, eps).estimated_measure
        P_u = pipe.book.u_norm(eps, float(N) ** -3) if hasattr(pipe.book, "u_norm") else u_norm_estimate(P)

    q_a = a_norm(Q)
    Fv = F(xv)
    Gv = G(xv) if len(G) else np.zeros(xv.size, dtype=np.complex128)
    Qv = Q(xv) if len(Q) else np.zeros(xv.size, dtype=np.complex128)
    Hv = H(xv) if len(H) else np.zeros(xv.size, dtype=np.complex128)
    exceed_Gg = g_rep.achieved_exceedance
    exceed_Gg_verify = exceedance_measure(Gv - Fv, vgrid, delta_N).estimated_measure
    exceed_HG = exceedance_measure(Qv - Gv, vgrid, delta_N).estimated_measure
    exceed_fS = exceedance_measure(Fv - Hv, vgrid, 3 * delta_N).estimated_measure

    hgrid = SampleGrid(-math.pi, math.pi, cfg.hstar_count)
    hstar = maximal_function(H, hgrid) if len(H) else np.zeros(hgrid.count)
    first = 2 * eps * q_a if eps is not None else 0.0
    prev_idx = set().union(*[set(v) for v in state.step_indices.values()]) if state.step_indices else set()
    checks = {
        "Gg": exceed_Gg < budgets["Gg"],
        "HG_arith": (2 * M_N + 1) / l_N ** 3 < 3 / N ** 2,
        "HG": exceed_HG < budgets["HG"],
        "KH": exceed_KH < budgets["KH"] and (eps is None or q_a * eps <= delta_N),
        "fS": exceed_fS < budgets["fS"],
        "QnA": q_a <= g_a * max_a + 1e-9,
        "containment": containment,
        "disjoint": prev_idx.isdisjoint(new_coeffs),
        "first_summand": first < 1.0 / N,
    }
    details.update({"epsilon_l": eps, "b_l": b, "d_l": d, "P_u_norm": P_u, "exceed_Gg_verify": exceed_Gg_verify,
                    "max_a_norm": max_a, "H_terms": len(H)})
    report = StepReport(
        N=N, profile=cfg.profile, delta_N=delta_N, M_N=M_N, l_N=l_N, g_a_norm=g_a, q_a_norm=q_a,
        exceed_Gg=exceed_Gg, exceed_HG=exceed_HG, exceed_KH_window=exceed_KH, exceed_fS=exceed_fS,
        h_star_max=float(hstar.max()), h_star_median=float(np.median(hstar)), bound_first_summand=first,
        bound_checks=checks, budgets=budgets, details=details,
    )
    out = state.copy()
    out.N = N
    for m, c in new_coeffs.items():
        out.coefficients[m] = out.coefficients.get(m, 0) + c
    out.coefficients = {m: c for m, c in out.coefficients.items() if c != 0}
    out.reports.append(report)
    out.H[N] = H
    out.Q[N] = Q
    out.P_u[N] = P_u
    out.step_indices[N] = sorted(new_coeffs)
    return out


def run(f, N_max: int, pipe: Pipeline, cfg: DriverConfig = DriverConfig(),
        state: RepresentationState | None = None) -> RepresentationState:
    """Fold :func:`step` up to ``N_max``; a failure carries the partial state as ``.state``."""
    state = state or RepresentationState()
    while state.N < N_max:
        try:
            state = step(state, f, pipe, cfg)
        except StepFailed as exc:
            exc.state = state
            raise
    return state


def verify_fS(state: RepresentationState, f, N: int, cfg: DriverConfig = DriverConfig(), book=None):
    """Re-measure ``m{|f - S_N| >= 3 delta_N}`` on ``[-N pi, N pi]`` from the retained blocks."""
    if not 1 <= N <= state.N:
        raise ValueError(f"step {N} not completed")
    f = resolve_target(f)
    g = window_grid(N, cfg.per_2pi)
    x = g.points
    S = np.zeros(x.size, dtype=np.complex128)
    for k in range(1, N + 1):
        if len(state.H[k]):
            S += state.H[k](x)
    delta_N = state.reports[N - 1].delta_N
    rep = exceedance_measure(f(x) - S, g, 3 * delta_N)
    return rep, rep.estimated_measure < 5 * cfg.measure_scale(N) / N ** 2


def maximal_decay(state: RepresentationState, N_range, g: SampleGrid) -> list[dict]:
    out = []
    for N in N_range:
        H, Q = state.H[N], state.Q[N]
        hs = maximal_function(H, g) if len(H) else np.zeros(g.count)
        rep = state.reports[N - 1]
        eps = rep.details.get("epsilon_l") or 0.0
        first = 2 * eps * a_norm(Q)
        second = np.abs(Q(g.points)) * state.P_u[N] if len(Q) else np.zeros(g.count)
        out.append({
            "N": N,
            "max": float(hs.max()),
            "median": float(np.median(hs)),
            "q90": float(np.quantile(hs, 0.9)),
            "first_summand": first,
            "first_below_1_over_N": first < 1.0 / N,
            "second_summand_max": float(second.max()),
            "split_bound_holds": bool(np.all(hs <= first + second + 1e-9)),
        })
    return out


def diagnostics_csv(state: RepresentationState, f, N: int, cfg: DriverConfig = DriverConfig(),
                    count: int | None = None) -> str:
    """Rows ``x, f, S_N, residual, H_N^*`` on ``[-N pi, N pi]`` (real parts of complex values)."""
    f = resolve_target(f)
    g = window_grid(N, cfg.per_2pi) if count is None else SampleGrid(-N * math.pi, N * math.pi, count)
    x = g.points
    S = np.zeros(x.size, dtype=np.complex128)
    for k in range(1, N + 1):
        if len(state.H[k]):
            S += state.H[k](x)
    fv = np.asarray(f(x), dtype=np.complex128)
    hs = maximal_function(state.H[N], g) if len(state.H[N]) else np.zeros(g.count)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "f", "S_N", "residual", "H_N_star"])
    for row in zip(x, fv.real, S.real, np.abs(fv - S), hs):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
