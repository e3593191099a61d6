"""Solver checks against direct sparse solves and closed-form energies."""

import numpy as np
import pytest

from qhalf import data_maps
from qhalf.domain import build_halfdisk, INTERFACE
from qhalf.solver import (
    SolverConfig,
    check_collapsed,
    collapse_decompose,
    dirichlet_energy,
    edge_energy,
    harmonic_reference,
    interpolate_annulus,
    minimality_spot_check,
    minimize,
    multistart_minimize,
    sample_map,
)


@pytest.fixture(scope="module")
def dom16():
    return build_halfdisk(R=1.0, h=1.0 / 16)


@pytest.fixture(scope="module")
def dom32():
    return build_halfdisk(R=1.0, h=1.0 / 32)


def test_single_sheet_matches_direct_solve(dom32):
    # Q=1 sweep dynamics must land on the 5-point solution of the same
    # Dirichlet problem, computed here by a direct sparse factorization.
    data = data_maps.quadratic_harmonic(Q=1)
    cfg = SolverConfig(init="mean", update_stop=1e-12, max_sweeps=40000)
    u, info = minimize(dom32, data, cfg)
    assert info.converged

    def bfn(xy):
        return xy[:, 0:1] ** 2 - xy[:, 1:2] ** 2

    ref = harmonic_reference(dom32, "plus", bfn, bfn)
    err = np.abs(u.plus[:, 0, :] - ref).max()
    assert err < 1e-8


def test_energy_scales_with_sheet_copies(dom16):
    # Q identical sheets carry exactly Q times the single-sheet energy.
    d1 = data_maps.linear(Q=1)
    d3 = data_maps.linear(Q=3)
    u1 = sample_map(dom16, d1)
    u3 = sample_map(dom16, d3)
    e1p = edge_energy(u1.plus, dom16.plus.edges)
    e3p = edge_energy(u3.plus, dom16.plus.edges)
    assert e3p == pytest.approx(3.0 * e1p, rel=1e-12)


def test_linear_field_energy_refines_to_halfdisk_area():
    # f = y has |grad|^2 = 1, so the grid energy of the plus side should
    # approach the half-disk area pi/2 under refinement.
    target = np.pi / 2
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        dom = build_halfdisk(R=1.0, h=h)
        u = sample_map(dom, data_maps.linear(Q=1))
        errs.append(abs(edge_energy(u.plus, dom.plus.edges) - target))
    assert errs[2] < errs[0]
    assert errs[2] < 0.02 * target


def test_monotone_energy_trace(dom16):
    data = data_maps.odd_cubic(Q=3, amplitude=0.1)
    cfg = SolverConfig(init="collapsed", eps_stop=1e-13, max_sweeps=3000)
    u, info = minimize(dom16, data, cfg)
    tr = np.array(info.energy_trace)
    assert np.all(np.diff(tr) <= tr[:-1] * 1e-10 + 1e-12)
    assert info.energy < info.initial_energy


def test_multistart_agreement(dom16):
    data = data_maps.odd_cubic(Q=2, amplitude=0.05)
    cfg = SolverConfig(update_stop=1e-11, max_sweeps=60000)
    u, info, report = multistart_minimize(dom16, data, cfg)
    assert report["all_converged"]
    energies = list(report["energies"].values())
    assert max(energies) - min(energies) < 1e-8 * max(energies)
    assert report["value_spread"] < 1e-4


def test_collapsed_interface_is_pinned(dom16):
    data = data_maps.odd_cubic(Q=3, amplitude=0.05)
    cfg = SolverConfig(init="harmonic", eps_stop=1e-12, max_sweeps=5000)
    u, info = minimize(dom16, data, cfg)
    ok, worst = check_collapsed(u)
    assert ok
    assert worst == 0.0


def test_free_interface_descends_and_keeps_phi(dom16):
    data = data_maps.odd_cubic(Q=2, amplitude=0.05)
    cfg = SolverConfig(collapsed=False, init="harmonic",
                       eps_stop=1e-13, max_sweeps=4000)
    u, info = minimize(dom16, data, cfg)
    # phi slot untouched on the interface rows of the plus side
    if_ids = np.nonzero(dom16.tag == INTERFACE)[0]
    lp = dom16.plus.loc[if_ids]
    assert np.abs(u.plus[lp, -1, :] - u.phi).max() == 0.0
    # shared z identical between sides
    lm = dom16.minus.loc[if_ids]
    assert np.abs(u.plus[lp, :1, :] - u.minus[lm]).max() == 0.0
    # free interface reaches at most the collapsed energy
    uc, infoc = minimize(dom16, data, SolverConfig(init="harmonic",
                                                   eps_stop=1e-13,
                                                   max_sweeps=4000))
    assert info.energy <= infoc.energy * (1 + 1e-9)


def test_collapse_decompose_odd_data(dom16):
    data = data_maps.odd_cubic(Q=3, amplitude=0.025)
    cfg = SolverConfig(init="harmonic", update_stop=1e-11, max_sweeps=20000)
    u, info = minimize(dom16, data, cfg)
    rep = collapse_decompose(u, info)
    # sheet means stay odd across the straight interface
    assert rep.odd_defect is not None
    assert rep.odd_defect < 1e-7
    # the glued mean is discrete harmonic up to solver tolerance
    assert rep.harmonic_defect < 1e-4
    # spread is set by the boundary data, whose peak sits at (0, +-1)
    expected = 0.025 * np.sqrt(2.0)
    assert rep.sheet_spread == pytest.approx(expected, rel=1e-6)


def test_collapse_decompose_refuses_unconverged(dom16):
    data = data_maps.odd_cubic(Q=3, amplitude=0.05)
    cfg = SolverConfig(init="collapsed", max_sweeps=3)
    u, info = minimize(dom16, data, cfg)
    assert not info.converged
    with pytest.raises(ValueError):
        collapse_decompose(u, info)


def test_minimizer_passes_spot_check(dom16):
    data = data_maps.odd_cubic(Q=2, amplitude=0.05)
    u, info = minimize(dom16, data, SolverConfig(init="harmonic",
                                                 update_stop=1e-12,
                                                 max_sweeps=40000))
    rng = np.random.default_rng(7)
    drop = minimality_spot_check(u, rng, trials=40, scale=1e-4)
    assert drop > -1e-12


def test_interpolation_constant_pair():
    # For constant maps a != b the blend varies only radially across the
    # band, so its energy approaches Q |a-b|^2 * band_area / lam^2.
    dom = build_halfdisk(R=1.0, h=1.0 / 64)
    lam = 0.25
    Q = 2

    a, b = 0.3, -0.5

    def const_spec(val):
        def fld(xy):
            xy = np.atleast_2d(np.asarray(xy, float))
            return np.full((xy.shape[0], 1), val)

        return data_maps.DataSpec(
            Q=Q, n=1,
            plus=data_maps._tile(fld, Q),
            minus=data_maps._tile(fld, Q - 1),
            phi=fld, label=f"const({val})")

    f = sample_map(dom, const_spec(a), collapsed=False)
    g = sample_map(dom, const_spec(b), collapsed=False)
    # shared interface trace is required; overwrite f's phi with g's
    f.phi[:] = g.phi
    if_loc = dom.plus.loc[np.nonzero(dom.tag == INTERFACE)[0]]
    f.plus[if_loc, -1, :] = f.phi
    blended, rep = interpolate_annulus(f, g, lam)
    band_area = np.pi * (1.0 - (1.0 - lam) ** 2)  # full disk ring, both sides
    predicted = Q * (a - b) ** 2 * band_area / lam**2
    # phi stays fixed so one plus sheet and the shared z carry no energy
    # on interface rows; that deficit is O(h) relative and ignored here.
    assert rep.band_energy == pytest.approx(predicted, rel=0.08)
    assert rep.fitted_constant < 20.0


def test_interpolation_band_guard(dom16):
    data = data_maps.linear(Q=2)
    f = sample_map(dom16, data)
    g = sample_map(dom16, data)
    with pytest.raises(ValueError):
        interpolate_annulus(f, g, dom16.h * 1.5)


def test_interpolation_endpoints(dom16):
    lam = 0.3
    f = sample_map(dom16, data_maps.odd_cubic(Q=2, amplitude=0.1))
    g = sample_map(dom16, data_maps.linear(Q=2))
    blended, rep = interpolate_annulus(f, g, lam)
    r = np.hypot(dom16.plus.xy[:, 0], dom16.plus.xy[:, 1])
    inner = r <= 1.0 - lam + 1e-12
    assert np.allclose(blended.plus[inner], g.plus[inner])
    # outermost ring follows f up to sheet order
    rim = r >= 1.0 - 1e-9
    from qhalf.qpoint import batch_match_cost2

    c2 = batch_match_cost2(blended.plus[rim], f.plus[rim])
    assert np.sqrt(c2.max()) < 1e-12
