"""Experiment driver: JSON configs, canned presets, reports, plot data.

Each experiment kind wires existing pieces into a pipeline (build domain,
solve or sample, scan, check) and reduces the outcome to a list of named
checks. Reports are JSON with sorted keys behind a single timestamp
header line, so two runs of the same config and seed agree byte for byte
below the first line. CSV series for plotting are written next to the
report.

Exit codes: 0 all checks passed, 1 a check or the pipeline itself
failed, 2 the config or command line is malformed.
"""

import argparse
import csv
import datetime
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import jsonschema

from . import data_maps
from .domain import (
    BOUNDARY_MINUS,
    BOUNDARY_PLUS,
    InterfaceSpec,
    build_distance_field,
    build_halfdisk,
)
from .frequency import (
    FrequencyConfig,
    calibrate_kappa,
    check_doubling_bounds,
    check_monotonicity,
    check_outer_identity,
    frequency_scan,
    smallest_reliable_decade,
)
from .holomorphic import (
    ZeroMatchError,
    derivative_decay_check,
    find_zeros_numeric,
    predicted_zeros_in_annulus,
)
from .qpoint import QPoint, g_distance, g_distance_bruteforce
from .solver import (
    GridField,
    SolverConfig,
    collapse_decompose,
    harmonic_reference,
    interpolate_annulus,
    minimize,
    sample_map,
    suggested_omega,
)
from .surface import build_surface, density_at, surface_image, two_circles_density

KINDS = ("metric-suite", "solve", "frequency", "collapse", "zeros",
         "decay", "density", "two-circles")


class UsageError(Exception):
    """Config or command-line problem; carries the offending field path."""

    def __init__(self, message, path=""):
        super().__init__(message)
        self.path = path


@dataclass
class RunResult:
    report: dict
    series: dict = field(default_factory=dict)  # name -> (header, rows)


# ---------------------------------------------------------------------------
# config loading and validation

_SCHEMA = None


def _load_schema():
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("qhalf").joinpath(
            "presets/config.schema.json").read_text()
        _SCHEMA = json.loads(text)
    return _SCHEMA


def validate_config(cfg):
    """Schema-check a config dict; raises UsageError with a field path."""
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    validator = jsonschema.Draft202012Validator(_load_schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if err is not None:
        path = ".".join(str(p) for p in err.absolute_path)
        raise UsageError(err.message, path)


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def list_presets():
    """All shipped presets as (name, config) pairs, sorted by name."""
    out = []
    for entry in resources.files("qhalf").joinpath("presets").iterdir():
        if entry.name.endswith(".json") and entry.name != "config.schema.json":
            out.append((entry.name[:-5], json.loads(entry.read_text())))
    return sorted(out)


def load_preset(name):
    box = resources.files("qhalf").joinpath(f"presets/{name}.json")
    if not box.is_file():
        known = ", ".join(n for n, _ in list_presets())
        raise UsageError(f"unknown preset {name!r}; shipped presets: {known}")
    return json.loads(box.read_text())


# ---------------------------------------------------------------------------
# shared pipeline pieces

def _interface_from(icfg):
    if icfg is None or icfg["kind"] == "straight":
        return InterfaceSpec.straight()
    return InterfaceSpec.sine_wave(icfg["amplitude"], icfg["wavenumber"])


def _domain_from(dcfg, h):
    return build_halfdisk(R=dcfg.get("R", 1.0), h=h,
                          interface=_interface_from(dcfg.get("interface")),
                          min_angle_deg=dcfg.get("min_angle_deg", 30.0))


def _data_from(cfg):
    dcfg = cfg.get("data")
    if dcfg is None:
        raise UsageError(f"kind {cfg['kind']!r} needs boundary data", "data")
    params = dict(dcfg.get("params", {}))
    name = dcfg["generator"]
    if "Q" in cfg and name in ("linear", "quadratic-harmonic", "odd-cubic",
                               "frequency-drop"):
        params.setdefault("Q", cfg["Q"])
    try:
        spec = data_maps.make_boundary_data(name, **params)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc), "data.params")
    if "Q" in cfg and spec.Q != cfg["Q"]:
        raise UsageError(
            f"generator {name!r} yields Q={spec.Q} but config says Q={cfg['Q']}",
            "Q")
    return spec


def _solver_from(scfg, dom):
    kwargs = dict(scfg or {})
    omega = kwargs.pop("omega", "suggested")
    if omega == "suggested":
        omega = suggested_omega(dom)
    return SolverConfig(omega=float(omega), **kwargs)


def _scan_cfg(cfg):
    s = cfg.get("scan")
    return FrequencyConfig(**s) if s else None


def _need(cfg, key, path=None):
    if key not in cfg:
        raise UsageError(f"kind {cfg['kind']!r} requires {path or key!r}",
                         path or key)
    return cfg[key]


def _check_row(name, ok, value, bound, expect="pass", **extra):
    observed = "pass" if ok else "fail"
    row = {"name": name, "observed": observed, "expect": expect,
           "ok": bool(ok) if expect == "pass" else not ok,
           "value": value, "bound": bound}
    row.update(extra)
    return row


def _base_report(cfg):
    return {"kind": cfg["kind"], "label": cfg.get("label", cfg["kind"]),
            "seed": cfg.get("seed", 0), "checks": [], "summary": {}}


def _frequency_series(scan):
    header = ["r", "D", "H", "E", "Gq", "I"]
    rows = list(zip(scan.r, scan.D, scan.H, scan.E, scan.Gq, scan.I))
    return header, rows


def _doubling_series(scan, rep, m=2):
    """Per-pair H and D growth ratios against the two-sided bounds."""
    idx = smallest_reliable_decade(scan)
    lam, i0, c = rep.lam, rep.i0, rep.c_eff
    lo_h, hi_h = m - 1 + 2 * i0 / lam, m - 1 + 2 * lam * i0
    lo_d, hi_d = m - 2 + 2 * i0 / lam, m - 2 + 2 * lam * i0
    rows = []
    for ai in range(idx.size):
        for bi in range(ai + 1, idx.size):
            a, b = idx[ai], idx[bi]
            s, t = scan.r[a], scan.r[b]
            ratio, gap = t / s, np.exp(c * (t - s))
            rows.append((s, t,
                         scan.H[b] / scan.H[a],
                         ratio**lo_h / gap, ratio**hi_h * gap,
                         scan.D[b] / scan.D[a],
                         ratio**lo_d / (gap * lam**2),
                         ratio**hi_d * gap * lam**2))
    header = ["s", "t", "H_ratio", "H_lower", "H_upper",
              "D_ratio", "D_lower", "D_upper"]
    return header, rows


# ---------------------------------------------------------------------------
# experiment kinds

def _run_metric_suite(cfg):
    rng = np.random.default_rng(cfg.get("seed", 0))
    pairs = cfg.get("pairs", 1000)
    max_q, max_n = cfg.get("max_q", 6), cfg.get("max_n", 4)
    a_tol = cfg.get("assignment_tol", 1e-12)
    t_tol = cfg.get("triangle_tol", 1e-10)
    worst_assign = worst_sym = worst_self = 0.0
    worst_triangle = -math.inf
    for _ in range(pairs):
        q = int(rng.integers(1, max_q + 1))
        n = int(rng.integers(1, max_n + 1))
        a, b, c = (QPoint(p) for p in rng.uniform(-2.0, 2.0, size=(3, q, n)))
        dab = g_distance(a, b)
        worst_assign = max(worst_assign, abs(dab - g_distance_bruteforce(a, b)))
        worst_sym = max(worst_sym, abs(dab - g_distance(b, a)))
        worst_self = max(worst_self, g_distance(a, a))
        worst_triangle = max(worst_triangle,
                             g_distance(a, c) - dab - g_distance(b, c))
    report = _base_report(cfg)
    report["checks"] = [
        _check_row("assignment-matches-bruteforce", worst_assign <= a_tol,
                   worst_assign, a_tol),
        _check_row("symmetry", worst_sym <= a_tol, worst_sym, a_tol),
        _check_row("self-distance-zero", worst_self <= a_tol, worst_self, a_tol),
        _check_row("triangle-inequality", worst_triangle <= t_tol,
                   worst_triangle, t_tol),
    ]
    report["summary"] = {"pairs": pairs, "max_q": max_q, "max_n": max_n}
    return RunResult(report)


def _boundary_oscillation(dom, data):
    sel = dom.plus.tag == BOUNDARY_PLUS
    return data.oscillation(dom.plus.xy[sel])


def _run_solve(cfg):
    dcfg = _need(cfg, "domain")
    checks_cfg = cfg.get("checks", [])
    interp = [c for c in checks_cfg if c["type"] == "interpolation-bound"]
    if interp:
        return _run_interpolation_suite(cfg, dcfg, interp[0])
    if "h" not in dcfg:
        raise UsageError("solve needs a grid spacing", "domain.h")
    dom = _domain_from(dcfg, dcfg["h"])
    data = _data_from(cfg)
    u, info = minimize(dom, data, _solver_from(cfg.get("solver"), dom))
    report = _base_report(cfg)
    report["summary"] = {"h": dom.h, "Q": data.Q, "energy": info.energy,
                         "sweeps": info.sweeps, "converged": info.converged,
                         "stop_reason": info.stop_reason}
    for ccfg in checks_cfg:
        if ccfg["type"] == "classical-reference":
            if data.Q != 1:
                raise UsageError("classical-reference needs Q=1", "checks")
            tol = ccfg.get("tol", 1e-8)

            def bfn(xy):
                return np.asarray(data.plus(xy), dtype=float)[:, 0, :]

            ref = harmonic_reference(dom, "plus", bfn, bfn)
            err = float(np.abs(u.plus[:, 0, :] - ref).max())
            report["checks"].append(_check_row(
                "matches-direct-solve", err <= tol, err, tol,
                expect=ccfg.get("expect", "pass")))
        elif ccfg["type"] == "converged":
            report["checks"].append(_check_row(
                "solver-converged", info.converged, info.max_update,
                cfg.get("solver", {}).get("update_stop"),
                expect=ccfg.get("expect", "pass")))
        else:
            raise UsageError(f"check {ccfg['type']!r} does not apply to a "
                             "plain solve", "checks")
    return RunResult(report)


def _random_polynomial_spec(rng, q, degree_max, amplitude, phi_terms):
    def terms():
        ks = np.arange(degree_max + 1)
        c = amplitude * rng.uniform(-1.0, 1.0, size=(ks.size, 2)) / (1.0 + ks[:, None])
        return [(int(k), float(cr), float(ci)) for k, (cr, ci) in zip(ks, c)]

    coeffs = [[terms() for _ in range(q)], [terms() for _ in range(q - 1)]]
    return data_maps.custom_coefficients(coeffs, phi_coeffs=phi_terms)


def _run_interpolation_suite(cfg, dcfg, ccfg):
    """Random map pairs through the annulus blend, one shared constant.

    Every pair shares its interface trace (the blend requires that), the
    sheet values are independent harmonic polynomials. The reported
    constant is the worst ratio of band energy to the weighted collar
    bound over all pairs and band widths.
    """
    if "h" not in dcfg:
        raise UsageError("solve needs a grid spacing", "domain.h")
    dom = _domain_from(dcfg, dcfg["h"])
    rng = np.random.default_rng(cfg.get("seed", 0))
    pairs = ccfg.get("pairs", 50)
    lams = ccfg.get("lams", [0.1, 0.2])
    c_max = ccfg.get("c_max", 20.0)
    degree_max = ccfg.get("degree_max", 3)
    amplitude = ccfg.get("amplitude", 1.0)
    rows = []
    worst = 0.0
    for k in range(pairs):
        q = int(rng.integers(1, 4))
        phi_terms = [(int(j), float(cr), float(ci)) for j, (cr, ci) in
                     enumerate(amplitude * rng.uniform(-1.0, 1.0, size=(degree_max + 1, 2)))]
        f = sample_map(dom, _random_polynomial_spec(rng, q, degree_max,
                                                    amplitude, phi_terms))
        g = sample_map(dom, _random_polynomial_spec(rng, q, degree_max,
                                                    amplitude, phi_terms))
        for lam in lams:
            _, rep = interpolate_annulus(f, g, lam)
            worst = max(worst, rep.fitted_constant)
            rows.append((k, q, lam, rep.band_energy, rep.collar_energy_f,
                         rep.collar_energy_g, rep.collar_distance_sq,
                         rep.fitted_constant))
    report = _base_report(cfg)
    report["checks"] = [_check_row("interpolation-constant", worst <= c_max,
                                   worst, c_max,
                                   expect=ccfg.get("expect", "pass"))]
    report["summary"] = {"h": dom.h, "pairs": pairs, "lams": list(lams),
                         "fitted_constant": worst}
    header = ["pair", "Q", "lam", "band_energy", "collar_energy_f",
              "collar_energy_g", "collar_distance_sq", "fitted_constant"]
    return RunResult(report, {"interpolation": (header, rows)})


def _run_collapse(cfg):
    dcfg = _need(cfg, "domain")
    hs = dcfg.get("h_values")
    if not hs:
        raise UsageError("collapse needs the refinement list", "domain.h_values")
    data = _data_from(cfg)
    report = _base_report(cfg)
    series = {}
    levels = []
    solves = []
    for h in hs:
        dom = _domain_from(dcfg, h)
        u, info = minimize(dom, data, _solver_from(cfg.get("solver"), dom))
        rep = collapse_decompose(u, info)
        solves.append((dom, u))
        levels.append({"h": dom.h, "sheet_spread": rep.sheet_spread,
                       "harmonic_defect": rep.harmonic_defect,
                       "odd_defect": rep.odd_defect,
                       "oscillation": _boundary_oscillation(dom, data),
                       "energy": info.energy, "sweeps": info.sweeps,
                       "converged": info.converged})
    spreads = np.array([lv["sheet_spread"] for lv in levels])
    defects = np.array([lv["harmonic_defect"] for lv in levels])
    osc = levels[-1]["oscillation"]
    report["summary"] = {"levels": levels, "Q": data.Q, "data": data.label}

    for ccfg in cfg.get("checks", []):
        t = ccfg["type"]
        expect = ccfg.get("expect", "pass")
        if t == "spread-decreasing":
            step = float(np.diff(spreads).max()) if spreads.size > 1 else 0.0
            report["checks"].append(_check_row(
                "spread-decreasing", step < 0.0 or spreads.size == 1,
                step, 0.0, expect=expect))
        elif t == "spread-max":
            tol = ccfg.get("tol", 1e-8)
            report["checks"].append(_check_row(
                "spread-max", spreads[-1] <= tol, float(spreads[-1]), tol,
                expect=expect))
        elif t == "spread-vs-oscillation":
            ratio = ccfg.get("ratio", 0.02)
            val = float(spreads[-1] / osc)
            report["checks"].append(_check_row(
                "spread-vs-oscillation", val <= ratio, val, ratio,
                expect=expect))
        elif t == "defect-decreasing":
            step = float(np.diff(defects).max()) if defects.size > 1 else 0.0
            report["checks"].append(_check_row(
                "defect-decreasing", step < 0.0 or defects.size == 1,
                step, 0.0, expect=expect))
        elif t == "odd-defect-vs-oscillation":
            odd = levels[-1]["odd_defect"]
            if odd is None:
                raise UsageError("odd-defect check needs a straight interface",
                                 "checks")
            ratio = ccfg.get("ratio", 0.02)
            val = float(odd / osc)
            report["checks"].append(_check_row(
                "odd-defect-vs-oscillation", val <= ratio, val, ratio,
                expect=expect))
        elif t == "outer-identity-refinement":
            if len(solves) < 2:
                raise UsageError("identity refinement needs at least two "
                                 "grid spacings", "domain.h_values")
            tol = ccfg.get("tol", 0.05)
            shrink_min = ccfg.get("shrink_min", 1.5)
            worsts = []
            for dom, u in solves[-2:]:
                scan = frequency_scan(u, build_distance_field(dom),
                                      _scan_cfg(cfg))
                _, w = check_outer_identity(scan, tol)
                worsts.append(w)
                name = f"frequency-{int(round(1.0 / dom.h))}"
                series[name] = _frequency_series(scan)
            shrink = worsts[0] / worsts[1] if worsts[1] > 0 else math.inf
            ok = worsts[1] <= tol and shrink >= shrink_min
            report["checks"].append(_check_row(
                "outer-identity-refinement", ok, worsts[1], tol,
                expect=expect, coarse=worsts[0], shrink=shrink,
                shrink_min=shrink_min))
        else:
            raise UsageError(f"check {t!r} does not apply to collapse",
                             "checks")

    header = ["h", "sheet_spread", "harmonic_defect", "odd_defect",
              "oscillation", "energy"]
    rows = [(lv["h"], lv["sheet_spread"], lv["harmonic_defect"],
             lv["odd_defect"], lv["oscillation"], lv["energy"])
            for lv in levels]
    series["collapse"] = (header, rows)
    return RunResult(report, series)


def _run_frequency(cfg):
    dcfg = _need(cfg, "domain")
    if "h" not in dcfg:
        raise UsageError("frequency needs a grid spacing", "domain.h")
    dom = _domain_from(dcfg, dcfg["h"])
    data = _data_from(cfg)
    source = cfg.get("source", "minimize")
    report = _base_report(cfg)
    if source == "minimize":
        u, info = minimize(dom, data, _solver_from(cfg.get("solver"), dom))
        report["summary"]["converged"] = info.converged
        report["summary"]["energy"] = info.energy
    elif source == "sample":
        u = sample_map(dom, data)
    elif source == "glued-plus":
        u = GridField(dom, dom.plus, np.asarray(data.plus(dom.plus.xy), float))
    else:  # glued-full
        u = GridField(dom, dom.full, np.asarray(data.plus(dom.full.xy), float))
    dist = build_distance_field(dom)
    scan = frequency_scan(u, dist, _scan_cfg(cfg))
    series = {"frequency": _frequency_series(scan)}
    kappa_cache = {}

    def kappa_of(ccfg):
        k = ccfg.get("kappa", 0.0)
        if k == "calibrated":
            if "value" not in kappa_cache:
                kappa_cache["value"] = calibrate_kappa(dom)[0]
                report["summary"]["kappa"] = kappa_cache["value"]
            return kappa_cache["value"]
        return float(k)

    for ccfg in cfg.get("checks", []):
        t = ccfg["type"]
        expect = ccfg.get("expect", "pass")
        if t == "i-value":
            target = ccfg["target"]
            tol = ccfg.get("tol", 0.02)
            vals = scan.I[scan.reliable]
            worst = float(np.abs(vals - target).max()) if vals.size else math.inf
            report["checks"].append(_check_row(
                f"frequency-near-{target:g}", worst <= tol, worst, tol,
                expect=expect))
        elif t == "outer-identity":
            tol = ccfg.get("tol", 0.05)
            ok, worst = check_outer_identity(scan, tol)
            report["checks"].append(_check_row(
                "outer-identity", ok, worst, tol, expect=expect))
        elif t == "monotonicity":
            tol = ccfg.get("tol", 0.02)
            ok, worst, c_eff = check_monotonicity(scan, tol=tol,
                                                  kappa=kappa_of(ccfg))
            report["checks"].append(_check_row(
                "almost-monotone", ok, worst, tol, expect=expect,
                c_eff=c_eff))
        elif t == "doubling":
            rep = check_doubling_bounds(scan, lam=ccfg.get("lam", 1.2),
                                        kappa=kappa_of(ccfg))
            worst = max(rep.worst_h_margin, rep.worst_d_margin)
            report["checks"].append(_check_row(
                "doubling-bounds", rep.passed, worst, 0.0, expect=expect,
                h_pass=rep.h_pass, d_pass=rep.d_pass,
                range_pass=rep.range_pass, pairs=rep.pairs, c_eff=rep.c_eff))
            series["doubling"] = _doubling_series(scan, rep)
        else:
            raise UsageError(f"check {t!r} does not apply to frequency",
                             "checks")
    report["summary"].update({"h": scan.h, "i0": scan.i0,
                              "c_mono": scan.c_mono,
                              "reliable_radii": int(scan.reliable.sum()),
                              "source": source})
    return RunResult(report, series)


def _run_zeros(cfg):
    alpha = cfg.get("alpha", 0.5)
    mtol = cfg.get("match_tol", 1e-10)
    annuli = cfg.get("annuli")
    if annuli is None:
        pad = cfg.get("ring_pad", 2.0)
        annuli = [{"r_lo": math.exp(n * math.pi) / pad,
                   "r_hi": math.exp(n * math.pi) * pad}
                  for n in cfg.get("rings", [0])]
    report = _base_report(cfg)
    rows = []
    for ann in annuli:
        r_lo, r_hi = ann["r_lo"], ann["r_hi"]
        predicted = predicted_zeros_in_annulus(r_lo, r_hi)
        name = f"zero-match-[{r_lo:.4g},{r_hi:.4g}]"
        try:
            zeros = find_zeros_numeric(r_lo, r_hi, alpha, match_tol=mtol)
        except ZeroMatchError as exc:
            report["checks"].append(_check_row(
                name, False, None, mtol, count=len(predicted),
                detail=str(exc)))
            continue
        worst = 0.0
        for z in zeros:
            gaps = np.abs(predicted - z)
            j = int(np.argmin(gaps))
            worst = max(worst, float(gaps[j]))
            ring = int(round(math.log(abs(z)) / math.pi))
            rows.append((ring, z.real, z.imag,
                         predicted[j].real, predicted[j].imag))
        report["checks"].append(_check_row(
            name, worst <= mtol, worst, mtol, count=len(zeros)))
    report["summary"] = {"alpha": alpha, "annuli": annuli,
                         "zeros_found": len(rows)}
    header = ["ring", "re", "im", "re_predicted", "im_predicted"]
    return RunResult(report, {"zeros": (header, rows)})


def _run_decay(cfg):
    alpha = cfg.get("alpha", 0.5)
    orders = cfg.get("orders", [0, 1, 2, 3, 4])
    rtol = cfg.get("exponent_rtol", 0.2)
    report = _base_report(cfg)
    series = {}
    for order in orders:
        rep = derivative_decay_check(order, alpha)
        report["checks"].append(_check_row(
            f"order-{order}-tail-monotone", rep.tail_monotone,
            rep.crossover, None))
        gap = abs(rep.fitted_exponent - rep.expected_exponent)
        report["checks"].append(_check_row(
            f"order-{order}-exponent", gap <= rtol * rep.expected_exponent,
            rep.fitted_exponent, rep.expected_exponent, rtol=rtol))
        if rep.envelope_ok is not None:
            report["checks"].append(_check_row(
                f"order-{order}-envelope", rep.envelope_ok, None, None))
        series[f"decay-{order}"] = (["s", "magnitude"],
                                    list(zip(rep.s, rep.magnitude)))
    report["summary"] = {"alpha": alpha, "orders": list(orders),
                         "expected_exponent": alpha / 3.0}
    return RunResult(report, series)


def _run_density(cfg):
    scfg = cfg.get("surface", {})
    alpha = scfg.get("alpha", 0.5)
    surf = build_surface(alpha=alpha, tau=scfg.get("tau", 1.2),
                         fillet=scfg.get("fillet", 0.2))
    depth = cfg.get("depth", 8)
    report = _base_report(cfg)
    series = {}
    for pt in _need(cfg, "points"):
        name = pt["name"]
        if "coords" in pt:
            point = np.asarray(pt["coords"], dtype=float)
        else:
            point = surface_image(complex(pt["z"][0], pt["z"][1]), alpha)
        rep = density_at(surf, point, np.asarray(pt["radii"], float),
                         depth=depth)
        expect, tol = pt["expect"], pt["tol"]
        ok = abs(rep.extrapolated - expect) <= tol * expect
        extra = {"expected": expect}
        if "seeds" in pt:
            ok = ok and len(rep.seeds) == pt["seeds"]
            extra["preimages"] = len(rep.seeds)
        report["checks"].append(_check_row(
            f"density-{name}", ok, rep.extrapolated, tol, **extra))
        series[f"density-{name}"] = (["r", "ratio"],
                                     list(zip(rep.radii, rep.ratios)))
    tf = cfg.get("theta_floor")
    if tf:
        floor = tf.get("floor", 0.5)
        slack = tf.get("slack", 0.01)
        radii = np.asarray(tf.get("radii", [0.08, 0.05]), dtype=float)
        worst = math.inf
        for z in tf["z_points"]:
            rep = density_at(surf, surface_image(complex(z[0], z[1]), alpha),
                             radii, depth=depth)
            worst = min(worst, rep.extrapolated)
        report["checks"].append(_check_row(
            "density-floor-on-boundary", worst >= floor - slack, worst,
            floor - slack, sampled=len(tf["z_points"])))
    report["summary"] = {"alpha": alpha, "depth": depth}
    return RunResult(report, series)


def _run_two_circles(cfg):
    r1 = _need(cfg, "r_inner")
    r2 = _need(cfg, "r_outer")
    point = complex(cfg["point"][0], cfg["point"][1]) if "point" in cfg else None
    radii = np.asarray(cfg["radii"], float) if "radii" in cfg else None
    rep = two_circles_density(r1, r2, point=point, radii=radii)
    report = _base_report(cfg)
    small = int(np.argmin(rep.radii))
    limit_tol = cfg.get("limit_tol", 0.01)
    scale = rep.exact if rep.exact > 0 else 1.0
    gap = float(abs(rep.ratios[small] - rep.exact))
    report["checks"].append(_check_row(
        "ratio-limit", gap <= limit_tol * scale, float(rep.ratios[small]),
        rep.exact, tol=limit_tol))
    if "expect" in cfg:
        report["checks"].append(_check_row(
            "exact-value", rep.exact == cfg["expect"], rep.exact,
            cfg["expect"]))
    if rep.location == "on inner circle":
        # half plane plus full disk: the closed-form small-radius model
        model = 1.5 - rep.radii / (3.0 * np.pi * r1)
        worst = float(np.abs(rep.ratios - model).max())
        mtol = cfg.get("model_tol", 1e-4)
        report["checks"].append(_check_row(
            "analytic-model", worst <= mtol, worst, mtol))
    order = np.argsort(rep.radii)
    mono = float(np.diff(rep.ratios[order]).max()) if order.size > 1 else 0.0
    report["checks"].append(_check_row(
        "ratio-monotone-in-r", mono <= 1e-12, mono, 1e-12))
    report["summary"] = {"r_inner": r1, "r_outer": r2,
                         "location": rep.location, "exact": rep.exact}
    return RunResult(report, {"density": (["r", "ratio"],
                                          list(zip(rep.radii, rep.ratios)))})


_RUNNERS = {
    "metric-suite": _run_metric_suite,
    "solve": _run_solve,
    "frequency": _run_frequency,
    "collapse": _run_collapse,
    "zeros": _run_zeros,
    "decay": _run_decay,
    "density": _run_density,
    "two-circles": _run_two_circles,
}


# ---------------------------------------------------------------------------
# report and plot-data emission

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def emit_plotdata(result, out_dir, label):
    """Write every CSV series of a run; an empty series keeps its header."""
    written = {}
    for name in sorted(result.series):
        header, rows = result.series[name]
        fname = f"{label}-{name}.csv"
        with open(os.path.join(out_dir, fname), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_csv_cell(v) for v in row])
        written[name] = fname
    return written


def write_report(report, out_dir, label):
    """Sorted-keys JSON behind one timestamped header line."""
    stamp = datetime.datetime.now(datetime.timezone.utc)
    body = json.dumps(_jsonable(report), indent=2, sort_keys=True)
    path = os.path.join(out_dir, f"{label}-report.json")
    with open(path, "w") as fh:
        fh.write(f"# generated {stamp.strftime('%Y-%m-%dT%H:%M:%SZ')}\n")
        fh.write(body + "\n")
    return path


def read_report(path):
    """Load a report file back, skipping the timestamp header."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    return json.loads("\n".join(ln for ln in lines if not ln.startswith("#")))


def run(config, out_dir="qhalf-out", seed=None):
    """Validate, dispatch, and write the report plus plot data.

    Returns the exit status: 0 when every check passed, 1 when a check
    or the pipeline failed. Config problems raise UsageError instead.
    """
    validate_config(config)
    cfg = dict(config)
    if seed is not None:
        cfg["seed"] = int(seed)
    label = cfg.get("label", cfg["kind"])
    os.makedirs(out_dir, exist_ok=True)
    try:
        result = _RUNNERS[cfg["kind"]](cfg)
    except UsageError:
        raise
    except Exception as exc:
        report = {"kind": cfg["kind"], "label": label, "passed": False,
                  "error": {"type": type(exc).__name__, "message": str(exc)}}
        write_report(report, out_dir, label)
        return 1
    report = result.report
    report["series"] = emit_plotdata(result, out_dir, label)
    report["passed"] = all(c["ok"] for c in report["checks"])
    write_report(report, out_dir, label)
    return 0 if report["passed"] else 1


# ---------------------------------------------------------------------------
# command line

def _build_parser():
    p = argparse.ArgumentParser(
        prog="qhalf",
        description="Run a named experiment pipeline from a JSON config "
                    "or a shipped preset and write report plus plot data.")
    p.add_argument("kind", nargs="?", choices=KINDS,
                   help="experiment kind; must match the config")
    p.add_argument("--config", metavar="FILE", help="JSON config file")
    p.add_argument("--preset", metavar="NAME", help="shipped preset name")
    p.add_argument("--out", metavar="DIR", default="qhalf-out",
                   help="output directory (default qhalf-out)")
    p.add_argument("--seed", type=int, metavar="N",
                   help="override the config seed")
    p.add_argument("--list-presets", action="store_true",
                   help="list shipped presets and exit")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.list_presets:
            for name, cfg in list_presets():
                print(f"{name:24s} {cfg['kind']:13s} "
                      f"{cfg.get('description', '')}")
            return 0
        if args.kind is None:
            raise UsageError("an experiment kind is required "
                             "(or use --list-presets)")
        if (args.config is None) == (args.preset is None):
            raise UsageError("exactly one of --config or --preset is required")
        cfg = load_config(args.config) if args.config else load_preset(args.preset)
        if cfg.get("kind") != args.kind:
            raise UsageError(f"config kind {cfg.get('kind')!r} does not match "
                             f"the command line kind {args.kind!r}", "kind")
        return run(cfg, out_dir=args.out, seed=args.seed)
    except UsageError as exc:
        where = f" at {exc.path}" if exc.path else ""
        print(f"qhalf: config error{where}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
