"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a one-line verdict; the lines are printed as they are
produced and again in the terminal summary.
"""
import csv
import time
from functools import lru_cache

import numpy as np
import pytest

from mixedgreen import cli
from mixedgreen import green as gr
from mixedgreen import verifiers as vf
from mixedgreen.bogovskii import BogovskiiOperator, build_chain, solve_div
from mixedgreen.fem import FESpace
from mixedgreen.geometry import (
    BoundaryDecomposition,
    GeometryError,
    PolygonalDomain,
    ahlfors_david_check,
    opening_check,
)
from mixedgreen.mesh import refine, triangulate
from mixedgreen.norms import field_samples, lorentz_norm

from conftest import ACCEPTANCE_LINES, BOTTOM, LEFT, square

MIXED = [BOTTOM, LEFT]


def record(n, name, ok, detail):
    line = f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@lru_cache(maxsize=None)
def mixed_space(level):
    """Mixed square (D = bottom + left) at h = 1/16 * 2^-level, by uniform refinement."""
    if level == 0:
        dom, dec = square(MIXED)
        return FESpace(triangulate(dom, dec, 1 / 16))
    return FESpace(refine(mixed_space(level - 1).mesh))


# ---------------------------------------------------------------- 1
def test_criterion_01_manufactured_convergence(tmp_path):
    loads = tmp_path / "loads.json"
    loads.write_text('{"manufactured": "trig"}')
    t0 = time.perf_counter()
    code = cli.main(["solve", "--domain", "square_mixed", "--mesh-h", "0.125", "--refine", "3",
                     "--loads", str(loads), "--out", str(tmp_path / "out")])
    elapsed = time.perf_counter() - t0
    assert code == 0
    with open(tmp_path / "out" / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    h = np.array([float(r["h"]) for r in rows])
    eu = np.array([float(r["velocity_H1_error"]) for r in rows])
    ep = np.array([float(r["pressure_L2_error"]) for r in rows])
    rate_u = np.polyfit(np.log(h), np.log(eu), 1)[0]
    rate_p = np.polyfit(np.log(h), np.log(ep), 1)[0]
    ok = (
        np.allclose(h, [1 / 8, 1 / 16, 1 / 32, 1 / 64])
        and np.all(np.diff(eu) < 0)
        and np.all(np.diff(ep) < 0)
        and rate_u >= 1.8
        and rate_p >= 1.8
        and elapsed <= 120
    )
    assert record(1, "manufactured convergence",
                  ok, f"rates u {rate_u:.3f}, p {rate_p:.3f} over h = 1/8..1/64, runtime {elapsed:.1f} s")


# ---------------------------------------------------------------- 2
def test_criterion_02_korn():
    dom, dec = square([BOTTOM])
    m = triangulate(dom, dec, 1 / 8)
    cs = []
    for k in range(4):
        if k:
            m = refine(m)
        rep = vf.korn_constant(FESpace(m))
        assert rep["converged"]
        cs.append(rep["constant"])
    drift = abs(cs[3] - cs[2]) / cs[2]
    dom0, dec0 = square([])
    empty = vf.korn_constant(FESpace(triangulate(dom0, dec0, 1 / 8)))
    ok = min(cs) > 0.01 and drift <= 0.10 and abs(empty["constant"]) <= 1e-8 and "rigid rotation" in empty["witness"]
    assert record(2, "Korn constant", ok,
                  f"c = {', '.join(f'{c:.5f}' for c in cs)} (finest drift {drift:.2%}); "
                  f"D empty: c = {empty['constant']:.1e} via {empty['witness']}")


# ---------------------------------------------------------------- 3
def test_criterion_03_bogovskii():
    dom, dec = square(MIXED)
    chain = build_chain(dom, dec)
    rng = np.random.default_rng(2024)
    A = rng.standard_normal((20, 6))
    A[:5, 0] = 0.0  # a few with small mean, the rest carry a constant part

    def make(a):
        return lambda p: (a[0] + a[1] * np.sin(np.pi * p[:, 0]) + a[2] * np.cos(2 * np.pi * p[:, 1])
                          + a[3] * p[:, 0] * p[:, 1] + a[4] * np.exp(p[:, 0]) + a[5] * (p[:, 1] - 0.5))

    m = triangulate(dom, dec, 1 / 8)
    worst_res, worst_tr, stab, flux_err, means = 0.0, 0.0, [], 0.0, []
    for k in range(3):
        if k:
            m = refine(m)
        V = FESpace(m)
        op = BogovskiiOperator(V, chain)
        st = []
        for a in A:
            f = make(a)
            if k == 0:
                means.append(float(np.sum(V.quad_weights * f(V.quad_points.reshape(-1, 2)).reshape(V.quad_weights.shape))))
            _, info = solve_div(V, f=f, operator=op)
            worst_res = max(worst_res, info["residual"])
            worst_tr = max(worst_tr, info["d_trace"])
            st.append(info["stability"])
        stab.append(max(st))
        _, info = solve_div(V, f=lambda p: np.ones(len(p)), operator=op)
        flux_err = max(flux_err, abs(info["n_flux"] - dom.area))
    drift = max(stab) / min(stab) - 1
    n_nonzero = sum(abs(mu) > 1e-3 for mu in means)
    ok = worst_res <= 1e-8 and worst_tr <= 1e-12 and drift <= 0.25 and flux_err <= 1e-8 and n_nonzero >= 10
    assert record(3, "Bogovskii right inverse", ok,
                  f"20 f ({n_nonzero} nonzero mean): residual {worst_res:.1e}, D-trace {worst_tr:.1e}, "
                  f"stability {', '.join(f'{s:.2f}' for s in stab)} (drift {drift:.1%}), |flux - |Ω|| {flux_err:.1e}")


# ---------------------------------------------------------------- 4
SYM_PAIRS = [((0.3, 0.3), (0.7, 0.7)), ((0.25, 0.5), (0.6, 0.35)), ((0.5, 0.2), (0.5, 0.8)), ((0.2, 0.75), (0.75, 0.25))]


def test_criterion_04_green_symmetry():
    rel = np.array([[gr.symmetry_probe(mixed_space(k), x, y)["relative"] for x, y in SYM_PAIRS] for k in range(3)])
    seps = [np.hypot(*np.subtract(x, y)) for x, y in SYM_PAIRS]
    monotone = bool(np.all(rel[1] < rel[0]) and np.all(rel[2] < rel[1]))
    V = mixed_space(2)
    x = (0.5, 0.5)
    c1 = gr.green_columns(V, x)
    c2 = gr.green_columns(V, x, c1[0].rho / 2)
    ys = np.array([[0.5, 0.75], [0.8, 0.5], [0.3, 0.3], [0.75, 0.8], [0.5, 0.25]])
    assert np.all(np.linalg.norm(ys - x, axis=1) >= 0.2)
    G1, _ = gr.evaluate_green(c1, ys)
    G2, _ = gr.evaluate_green(c2, ys)
    moll = float(np.max(np.abs(G1 - G2).max(axis=(1, 2)) / np.abs(G1).max(axis=(1, 2))))
    ok = min(seps) >= 0.25 and rel[2].max() <= 0.05 and monotone and moll <= 0.02
    assert record(4, "Green symmetry", ok,
                  f"max relative defect at h = 1/16, 1/32, 1/64: {', '.join(f'{r:.2e}' for r in rel.max(axis=1))} "
                  f"(separations {min(seps):.2f}..{max(seps):.2f}, monotone {monotone}); "
                  f"ρ vs ρ/2 difference {moll:.2e}")


# ---------------------------------------------------------------- 5
def test_criterion_05_log_bound():
    dom, dec = square(MIXED)
    fits = [gr.log_bound_fit(dom, dec, x, 1 / 16, levels=6) for x in ((0.5, 0.5), (0.6, 0.4))]
    ok = all(f["r2"] >= 0.95 and 0.04 <= f["slope"] <= 0.16 for f in fits)
    assert record(5, "logarithmic bound", ok,
                  "; ".join(f"pole {f['pole']}: slope {f['slope']:.4f}, R² {f['r2']:.4f}, {len(f['radii'])} radii" for f in fits)
                  + f" (Stokeslet 1/4π = {1 / (4 * np.pi):.4f})")


# ---------------------------------------------------------------- 6
def test_criterion_06_weak_l2_uniformity():
    V1, V2 = mixed_space(1), mixed_space(2)
    h = V1.mesh.h
    poles = [(0.5, 0.5), (0.3, 0.3), (0.7, 0.35), (0.35, 0.7), (0.5, 8 * h), (0.5, 1 - 8 * h), (1 - 8 * h, 0.5)]
    assert min(V1.mesh.domain.distance_to_boundary(np.array(poles))) == pytest.approx(8 * h)
    w1, w2 = gr.weak_l2_norms(V1, poles), gr.weak_l2_norms(V2, poles)
    g1, p1 = np.array([e["grad_G"] for e in w1]), np.array([e["Pi"] for e in w1])
    g2, p2 = np.array([e["grad_G"] for e in w2]), np.array([e["Pi"] for e in w2])
    ratios = [v.max() / v.min() for v in (g1, p1, g2, p2)]
    # the uniform bound (sup over poles) must not grow; a single interior pole
    # may still creep up toward its near-field value 1/(2√(2π)) as the mesh
    # resolves more of the 1/r profile, but stays under the coarse bound
    growth = max(g2.max() / g1.max(), p2.max() / p1.max())
    per_pole = max((g2 / g1).max(), (p2 / p1).max())
    under = bool(np.all(g2 <= g1.max() * 1.05) and np.all(p2 <= p1.max() * 1.05))
    ok = max(ratios) <= 3 and growth <= 1.05 and under
    assert record(6, "weak-L² uniformity", ok,
                  f"{len(poles)} poles (min dist 8h): max/min ∇G {ratios[0]:.2f}→{ratios[2]:.2f}, "
                  f"Π {ratios[1]:.2f}→{ratios[3]:.2f}; sup growth under refinement {growth:.4f}; "
                  f"largest single-pole growth {per_pole:.3f} (near-field value {1 / (2 * np.sqrt(2 * np.pi)):.4f})")


# ---------------------------------------------------------------- 7
def test_criterion_07_representation():
    V = mixed_space(2)
    dom = V.mesh.domain
    probes = np.array([[0.3, 0.3], [0.5, 0.5], [0.7, 0.35], [0.35, 0.7], [0.8, 0.8], [0.5, 0.9]])
    rep = cli._representation(V, probes, dom)
    ok = all(v["relative_l2"] <= 0.05 for v in rep.values())
    assert record(7, "representation formula", ok,
                  ", ".join(f"{k}: relative L² {v['relative_l2']:.2e} (mollified identity {v['mollified_identity_defect']:.1e})"
                            for k, v in rep.items()) + f" over {len(probes)} probes at h = 1/64")


# ---------------------------------------------------------------- 8
def test_criterion_08_holder_and_local_estimates():
    pole = np.array([0.3, 0.3])
    centers = [(0.75, 0.75), (0.8, 0.5), (0.5, 0.85), (0.85, 0.2)]
    radii = [0.05, 0.1]
    out = []
    for k in (1, 2):
        V = mixed_space(k)
        cols = gr.green_columns(V, pole)
        hf = gr.holder_fit(cols, V.mesh.domain, seed=0)
        mvt = [vf.local_holder_check(c.velocity, x, 0.1, seed=0)["mvt_constant"] for c in cols for x in centers]
        cac = vf.caccioppoli_check([c.velocity for c in cols], centers, radii, pole=pole, pole_radius=cols[0].rho)
        out.append((hf["gamma"], np.array(mvt), cac["constant"], V))
    (g1, mv1, c1, _), (g2, mv2, c2, V) = out
    neg = vf.caccioppoli_negative_control(V, centers, radii, bound=c2, seed=0)
    mvt_drift = float(np.max(np.abs(mv2 - mv1) / mv1))
    cac_drift = abs(c2 - c1) / c1
    ok = (min(g1, g2) >= 0.1 and np.all(np.isfinite(mv2)) and mvt_drift <= 0.05
          and np.isfinite(c2) and cac_drift <= 0.10 and neg["violates_bound"])
    assert record(8, "Hölder and local estimates", ok,
                  f"γ {g1:.3f}, {g2:.3f}; MVT max {mv2.max():.3f} (drift {mvt_drift:.2%}); "
                  f"Caccioppoli {c1:.3f}, {c2:.3f} (drift {cac_drift:.2%}); negative control {neg['constant']:.1f} > {c2:.3f}")


# ---------------------------------------------------------------- 9
def test_criterion_09_disk_weak_l2_oracle():
    th = 2 * np.pi * np.arange(128) / 128
    dom = PolygonalDomain(np.column_stack([np.cos(th), np.sin(th)]), M=2, R0=0.1)
    V = FESpace(triangulate(dom, BoundaryDecomposition.all_dirichlet(dom), 0.025))
    r = np.hypot(*V.quad_points.reshape(-1, 2).T).reshape(V.quad_weights.shape)
    val = lorentz_norm(field_samples(V, 1.0 / r), 2, np.inf, min_measure=np.pi * (4 * V.mesh.h) ** 2)
    err = abs(val / np.sqrt(np.pi) - 1)
    assert record(9, "weak-L² disk oracle", err <= 0.03, f"{val:.5f} vs √π = {np.sqrt(np.pi):.5f} ({err:.2%}) at h = 0.025")


# ---------------------------------------------------------------- 10
def _gate(name):
    _, _, dom, dec = cli.read_domain(name)
    try:
        ad = ahlfors_david_check(dom, dec)["pass"]
    except GeometryError:
        ad = False
    return ad, opening_check(dom, dec)["pass"]


def test_criterion_10_geometry_gate():
    names = cli.shipped_domains()
    good = [n for n in names if not n.startswith("counterexample")]
    bad = [n for n in names if n.startswith("counterexample")]
    res = {n: _gate(n) for n in names}
    accepted = all(all(res[n]) for n in good)
    rejected = all(not all(res[n]) for n in bad)
    want = {"counterexample_point_d", "counterexample_no_n"} <= set(bad)
    ok = accepted and rejected and want and len(good) >= 5
    assert record(10, "geometry gate", ok,
                  f"accepted {len(good)} shipped domains ({', '.join(good)}); rejected "
                  + ", ".join(f"{n} (AD {'ok' if res[n][0] else 'fails'}, opening {'ok' if res[n][1] else 'fails'})" for n in bad))
