import math

import numpy as np
import pytest

from almostint.basis import (
    BasisConfig, BasisLayer, build_layer, build_layers, check_increasing_spectra, check_layer_spectrum,
    index_floor_for, layer_a_norm_max,
)
from almostint.errors import LayerBuildFailed
from almostint.gridmeasure import exceedance_of_difference, window_grid
from almostint.l0approx import RhoRule
from almostint.trigpoly import SampleGrid, TrigPoly, a_norm, degree

RHO = RhoRule()


def synthetic_layer(l, start_index, eta_prev=0.0):
    """Layer whose R_{r,l} are single unit terms at consecutive sigma(n)."""
    polys = {r: TrigPoly([float(RHO.sigma(start_index + i))], [1.0]) for i, r in enumerate(range(-l, l + 1))}
    return BasisLayer(l=l, polys=polys, eta_l=degree(polys[l]), eta_prev=eta_prev, max_a_norm=1.0)


def test_index_floor_for():
    assert index_floor_for(RHO, 0.0) == -1
    # sigma(-1) = -2/3, sigma(1) = 4/3: |sigma(n)| > 1 needs |n| > 1
    assert index_floor_for(RHO, 1.0) == 1
    assert index_floor_for(RHO, 288.00344827586207) == 288


def test_a_norm_max_synthetic():
    layer = synthetic_layer(2, 10)
    assert layer_a_norm_max(layer) == 1.0


def test_layer1_builds(layer1):
    assert layer1.l == 1 and sorted(layer1.polys) == [-1, 0, 1]
    assert layer1.eta_l == degree(layer1.polys[1])
    assert layer1.eta_prev == 0.0
    assert layer_a_norm_max(layer1) == layer1.max_a_norm
    for r, P in layer1.polys.items():
        rep = layer1.reports[r]["exceedance"]
        assert rep["estimated_measure"] < 1.0
        assert rep["threshold"] == 1.0
        assert rep["window"] == [-math.pi, math.pi]
        assert np.all(np.isin(P.freqs, RHO.sigma(np.arange(-400, 401))))


def test_layer1_pinned(layer1):
    assert layer1.eta_l == pytest.approx(288.00344827586207, rel=1e-12)
    assert layer1.max_a_norm == pytest.approx(18.69182873189569, rel=1e-6)


def test_layer1_exceedance_reproducible(layer1):
    for r, P in layer1.polys.items():
        info = layer1.reports[r]["exceedance"]
        g = SampleGrid(info["window"][0], info["window"][1], info["grid_count"])
        again = exceedance_of_difference(P, np.exp(1j * RHO.sigma(r) * g.points), g, 1.0)
        assert again.estimated_measure == info["estimated_measure"]


def test_layer1_spectra(layer1):
    assert check_increasing_spectra([layer1])
    assert check_layer_spectrum(layer1)


def test_layer_json_round_trip(layer1):
    again = BasisLayer.from_dict(layer1.to_dict())
    assert again.to_json() == layer1.to_json()
    assert all(again.polys[r] == layer1.polys[r] for r in layer1.polys)


def test_relaxed_layer_deterministic(layer1_relaxed):
    again = build_layer(1, None, RHO, BasisConfig(relaxation=2.0))
    assert again.to_json() == layer1_relaxed.to_json()
    assert layer1_relaxed.relaxation == 2.0
    assert layer1_relaxed.measure_bound == 2.0


def test_layer2_failure_carries_report(layer1_relaxed):
    cfg = BasisConfig(relaxation=2.0, max_pool=64)
    with pytest.raises(LayerBuildFailed) as ei:
        build_layers(2, RHO, cfg, start=[layer1_relaxed])
    exc = ei.value
    assert exc.l == 2 and exc.r == -2
    assert exc.report.achieved_exceedance >= 2.0 / 8
    assert exc.layers == [layer1_relaxed]


def test_predecessor_contract():
    with pytest.raises(ValueError):
        build_layer(2, None, RHO)
    with pytest.raises(ValueError):
        build_layer(1, synthetic_layer(1, 3), RHO)


def test_increasing_spectra_detects_overlap():
    a = synthetic_layer(1, 2)
    b = synthetic_layer(2, 10, eta_prev=a.eta_l)
    assert check_increasing_spectra([a, b])
    bad = synthetic_layer(2, 3, eta_prev=a.eta_l)
    assert not check_increasing_spectra([a, bad])


def test_layer_spectrum_check():
    layer = synthetic_layer(1, 5, eta_prev=4.0)
    assert check_layer_spectrum(layer)
    layer.polys[0] = TrigPoly([1.0], [1.0])
    assert not check_layer_spectrum(layer)


def test_config_round_trip():
    cfg = BasisConfig(relaxation=1.5, cap_budget=512)
    assert BasisConfig.from_dict(cfg.to_dict()) == cfg


def test_a_norm_max_recomputes(layer1):
    assert max(a_norm(P) for P in layer1.polys.values()) == layer1.max_a_norm
    assert window_grid(1).a == -math.pi
