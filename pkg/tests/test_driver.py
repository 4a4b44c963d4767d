import json
import math

import numpy as np
import pytest

from almostint.basis import BasisLayer
from almostint.driver import (
    CsvTarget, DriverConfig, Pipeline, RepresentationState, StepReport, clipped_step, delta_schedule,
    diagnostics_csv, l_of_N, maximal_decay, partial_sum_samples, reconstruct, resolve_target, run,
    sigma_indices, step, verify_fS,
)
from almostint.errors import OutOfMaterializedRange, StepFailed
from almostint.l0approx import RhoRule
from almostint.spectrum import SpectrumPlan
from almostint.trigpoly import SampleGrid, TrigPoly, degree, u_norm_estimate

RHO = RhoRule()


class StubBook:
    """Mean-zero stand-in for the Korner book: four terms of size eps/2 at +-1, +-2."""

    def __init__(self, u_bound=20.0):
        self.u_bound = u_bound
        self.queries = []

    def polynomial(self, eps, delta):
        self.queries.append((eps, delta))
        return TrigPoly([-2, -1, 1, 2], [eps / 2] * 4)

    def degree_for(self, eps, delta):
        return 2

    def u_norm(self, eps, delta):
        return u_norm_estimate(self.polynomial(eps, delta))

    def u_bound_for_delta(self, delta):
        return self.u_bound


def synthetic_layers(L):
    """R_{r,l} = single unit term at consecutive sigma(n), so spectra increase."""
    out, base, prev = [], 1, 0.0
    for l in range(1, L + 1):
        polys = {r: TrigPoly([float(RHO.sigma(base + i))], [1.0]) for i, r in enumerate(range(-l, l + 1))}
        eta = degree(polys[l])
        out.append(BasisLayer(l, polys, eta, prev, 1.0))
        prev, base = eta, base + 2 * l + 1
    return out


def synthetic_pipeline(L=12, **kw):
    return Pipeline(RHO, book=StubBook(), layers=synthetic_layers(L), **kw)


@pytest.fixture(scope="module")
def step_one():
    pipe = synthetic_pipeline()
    return pipe, step(RepresentationState(), "clipped_step", pipe)


# ---- schedule and small helpers ----

def test_delta_schedule():
    faithful = DriverConfig(profile="faithful")
    assert delta_schedule(2, faithful, StubBook(20.0)) == 1 / 40
    vals = [delta_schedule(N, faithful, StubBook(20.0)) for N in range(1, 6)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert delta_schedule(4, DriverConfig()) == 0.05


def test_delta_schedule_pipeline_value():
    from almostint.korner import KornerBook, KornerConfig
    book = KornerBook(KornerConfig(probe_epsilons=(0.5,)))
    d1 = delta_schedule(1, DriverConfig(profile="faithful"), book)
    assert d1 == 1 / book.u_bound_for_delta(1 / 8)


def test_l_of_N():
    assert l_of_N(1, 0.2, 5, 1.6, 0) == 6
    assert l_of_N(2, 0.1, 3, 30.2, 6) == 31
    assert l_of_N(3, 0.5, 2, 1.0, 7) == 8


def test_targets():
    x = np.array([-1.0, -0.5, 0.0, 0.25, 2.0])
    np.testing.assert_allclose(clipped_step(x), [0, 0, 0.5, 0.75, 1])
    assert resolve_target("gaussian")(np.array([0.0]))[0] == 1.0
    with pytest.raises(ValueError):
        resolve_target("nope")


def test_csv_target(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("x,f\n0,1\n2,3\n")
    f = resolve_target(str(p))
    assert isinstance(f, CsvTarget)
    np.testing.assert_allclose(f(np.array([1.0, 5.0])), [2.0, 0.0])


def test_sigma_indices_exact():
    n = np.array([-7, -1, 0, 3, 12])
    np.testing.assert_array_equal(sigma_indices(RHO, RHO.sigma(n)), n)
    with pytest.raises(ValueError):
        sigma_indices(RHO, np.array([0.77]))


# ---- zero target ----

def test_zero_target_run():
    pipe = Pipeline(RHO, book=StubBook())
    state = run("zero", 3, pipe)
    assert state.N == 3 and not state.coefficients
    for r in state.reports:
        assert all(r.bound_checks.values()), r.bound_checks
        assert r.exceed_Gg == r.exceed_HG == r.exceed_KH_window == r.exceed_fS == 0
        assert r.g_a_norm == r.q_a_norm == r.h_star_max == 0
    assert [r.l_N for r in state.reports] == [6, 11, 16]
    assert pipe.plan.l_max == 0          # no layer was needed
    for N in (1, 2, 3):
        rep, ok = verify_fS(state, "zero", N)
        assert ok and rep.estimated_measure == 0
    decay = maximal_decay(state, range(1, 4), SampleGrid(-math.pi, math.pi, 64))
    assert all(d["max"] == d["median"] == 0 for d in decay)


def test_run_zero_steps():
    state = run("zero", 0, synthetic_pipeline())
    assert state.N == 0 and state.reports == [] and state.coefficients == {}


# ---- mechanics with synthetic layers ----

def test_step_structural_checks(step_one):
    pipe, state = step_one
    rep = state.reports[0]
    assert rep.l_N == l_of_N(1, rep.delta_N, rep.M_N, rep.g_a_norm, 0)
    for name in ("Gg", "HG_arith", "QnA", "containment", "disjoint", "first_summand"):
        assert rep.bound_checks[name], name
    assert rep.q_a_norm <= rep.g_a_norm * pipe.layer(rep.l_N).max_a_norm + 1e-9
    assert pipe.book.queries[0] == (pipe.plan.record(rep.l_N).epsilon_l, 1.0)


def test_step_pinned_baseline(step_one):
    rep = step_one[1].reports[0]
    assert (rep.M_N, rep.l_N) == (5, 6)
    assert rep.g_a_norm == pytest.approx(1.6731169406196007, rel=1e-9)


def test_containment_and_reconstruction(step_one):
    pipe, state = step_one
    rep = state.reports[0]
    rec = pipe.plan.record(rep.l_N)
    for m in state.coefficients:
        l, s, n = pipe.plan.decode(m)
        assert l == rep.l_N and 1 <= abs(s) <= rec.d_l and s != 0
    S = reconstruct(state, pipe.plan)
    x = np.linspace(-3, 3, 41)
    np.testing.assert_allclose(S(x), partial_sum_samples(state, x), atol=1e-9)
    np.testing.assert_allclose(S(x), state.H[1](x), atol=1e-9)


def test_fixed_point_gives_zero_block(step_one):
    pipe, state = step_one
    def f(x):
        return partial_sum_samples(state, x)
    nxt = step(state, f, pipe)
    assert nxt.H[2].is_zero()
    assert nxt.coefficients == state.coefficients
    assert nxt.reports[-1].g_a_norm == 0


def test_input_state_unchanged(step_one):
    _, state = step_one
    assert state.N == 1 and len(state.reports) == 1


def test_state_json_round_trip(step_one):
    _, state = step_one
    again = RepresentationState.from_dict(json.loads(state.to_json()))
    assert again.to_json() == state.to_json()
    assert again.H[1] == state.H[1]


def test_verify_reproduces_recorded_exceedance(step_one):
    _, state = step_one
    rep, ok = verify_fS(state, "clipped_step", 1)
    assert rep.estimated_measure == state.reports[0].exceed_fS
    assert ok == (rep.estimated_measure < 5.0)


def test_maximal_decay_split_bound(step_one):
    _, state = step_one
    d = maximal_decay(state, [1], SampleGrid(-math.pi, math.pi, 256))[0]
    assert d["first_below_1_over_N"] and d["split_bound_holds"]
    assert d["max"] >= d["q90"] >= d["median"] >= 0


def test_truncated_state_fails_verification():
    # S_1 = H_1 = 2 cos(x); target equals it, so verification passes until H_1 is dropped
    H = TrigPoly([-1.0, 1.0], [1.0, 1.0])
    report = StepReport(1, "desk", 0.2, 1, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, {})
    state = RepresentationState(N=1, reports=[report], H={1: H}, Q={1: TrigPoly()}, P_u={1: 0.0})
    def f(x):
        return 2 * np.cos(x)
    assert verify_fS(state, f, 1)[1]
    state.H[1] = TrigPoly()
    rep, ok = verify_fS(state, f, 1)
    assert not ok and rep.estimated_measure > 5.0


def test_step_failure_keeps_partial_state():
    pipe = synthetic_pipeline()
    cfg = DriverConfig(desk_delta_scale=1e-3, g_cap_budget=8)
    with pytest.raises(StepFailed) as ei:
        run("clipped_step", 2, pipe, cfg)
    assert ei.value.N == 1 and ei.value.stage == "G_N solve"
    assert ei.value.state.N == 0


def test_frozen_plan_refuses_extension():
    pipe = Pipeline(RHO, book=StubBook(), layers=synthetic_layers(3), plan=SpectrumPlan(RHO), frozen=True)
    with pytest.raises(OutOfMaterializedRange):
        pipe.ensure(2)
    with pytest.raises(StepFailed):
        step(RepresentationState(), "clipped_step", pipe)


def test_diagnostics_csv(step_one):
    _, state = step_one
    text = diagnostics_csv(state, "clipped_step", 1, count=16)
    lines = text.splitlines()
    assert lines[0] == "x,f,S_N,residual,H_N_star"
    assert len(lines) == 17


def test_config_round_trip():
    cfg = DriverConfig(profile="faithful", relaxation=3.0)
    assert DriverConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        DriverConfig(profile="fast")
