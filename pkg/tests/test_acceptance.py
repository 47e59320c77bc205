"""End-to-end acceptance checks.

Each test certifies one property of the full pipeline at desk scale and
prints a single pass/fail line.  Tolerances are part of the contract:
exact where construction permits, statistical (3-4 sigma) for Monte
Carlo, and bounded-variation surrogates for uniform-in-k constants.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from vdwalk import (LatticeParams, Vertex, build_kernel, build_lattice,
                    davies_weight_check, dirichlet_form, dirichlet_form_jump,
                    hk_bound_constant, iso_scan, transition_distribution,
                    weighted_part)
from vdwalk.cli import acceptance_bumps, main
from vdwalk.generator import (apply_discrete_generator, convergence_report,
                              make_test_function)
from vdwalk.inequalities import PLANE_PART, RAY_PART
from vdwalk.kernel import transition_matrix_multi
from vdwalk.lattice import PLANE
from vdwalk import montecarlo as mc

EPS8 = Fraction(1, 8)
TOL = 1e-10


def _report(label, ok, detail=""):
    print(f"\n[{label}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"{label}: {detail}"


def _lat(k, eps=EPS8, R=Fraction(3, 4)):
    return build_lattice(LatticeParams(k=k, epsilon=eps, window_radius=R))


def test_01_construction_invariants():
    for k in (5, 6, 7, 8):
        lat = _lat(k)
        lat.check_invariants()
    theory = _lat(10, Fraction(1, 128), Fraction(1, 16))
    theory.check_invariants()
    ok = (theory.params.theory_regime
          and theory.mass[0] < 2.0 ** -10
          and theory.degree[0] <= 56 * float(theory.params.epsilon) * 2 ** 10 + 28)
    _report("construction invariants", ok,
            f"darning mass {theory.mass[0]:.3e}, degree {theory.degree[0]}")


def test_02_form_equivalence():
    lat = _lat(5)
    kern = build_kernel(lat)
    rng = np.random.default_rng(12)
    interior = lat.interior_mask(2)
    worst = 0.0
    for _ in range(100):
        f = np.where(interior, rng.normal(size=lat.n_vertices), 0.0)
        g = np.where(interior, rng.normal(size=lat.n_vertices), 0.0)
        a = dirichlet_form(lat, f, g)
        b = dirichlet_form_jump(lat, kern, f, g)
        scale = max(abs(a), abs(b), 1e-30)
        worst = max(worst, abs(a - b) / scale)
    tiny = build_lattice(LatticeParams(k=4, epsilon=EPS8,
                                       window_radius=Fraction(1, 2)))
    ktiny = build_kernel(tiny)
    exact_ok = True
    for trial in range(3):
        rngi = np.random.default_rng(trial)
        f = np.array([Fraction(int(v), 5)
                      for v in rngi.integers(-4, 5, tiny.n_vertices)], dtype=object)
        exact_ok &= dirichlet_form(tiny, f) == dirichlet_form_jump(tiny, ktiny, f)
    ok = worst <= 1e-12 and exact_ok
    _report("energy-form equivalence", ok,
            f"max float rel err {worst:.2e}, rational mode exact={exact_ok}")


def test_03_kernel_symmetry_conservation_semigroup():
    lat = _lat(5)
    kern = build_kernel(lat)
    n = lat.n_vertices
    blocks = transition_matrix_multi(lat, kern, list(range(n)), [0.01, 0.05], TOL)
    sym_bound = 2 * TOL / lat.mass.min()
    worst_sym = 0.0
    worst_cons = 0.0
    for t in (0.01, 0.05):
        dens = blocks[t] / lat.mass[:, None]
        worst_sym = max(worst_sym, float(np.abs(dens - dens.T).max()))
        totals = blocks[t].sum(axis=0)
        worst_cons = max(worst_cons, float(np.abs(totals - 1.0).max()))
    d_sum = transition_distribution(lat, kern, Vertex.darning(), 0.06, TOL)
    composed = blocks[0.05] @ transition_distribution(
        lat, kern, Vertex.darning(), 0.01, TOL).probs
    semi = float(np.abs(composed - d_sum.probs).sum())
    ok = worst_sym <= sym_bound and worst_cons <= TOL and semi <= 4 * TOL
    _report("kernel symmetry/conservation/semigroup", ok,
            f"sym {worst_sym:.2e} (<= {sym_bound:.2e}), "
            f"cons {worst_cons:.2e}, semigroup {semi:.2e}")


def test_04_mc_kernel_agreement():
    lat = _lat(5)
    kern = build_kernel(lat)
    t, n, seed = 0.01, 1_000_000, 1234
    exact = transition_distribution(lat, kern, Vertex.darning(), t, TOL).probs
    summ = mc.mc_summary(lat, kern, Vertex.darning(), t, n, seed)
    phat = summ.counts / n
    sel = exact >= 1e-3
    se = np.sqrt(exact[sel] * (1 - exact[sel]) / n)
    worst_z = float((np.abs(phat[sel] - exact[sel]) / se).max())
    rep = mc.holding_time_report_exact(summ, kern.speed, t)
    ok = (worst_z <= 3.0 and abs(rep.mean_z) <= 4.0 and rep.p_value > 1e-3)
    _report("Monte Carlo vs exact kernel", ok,
            f"max cell z {worst_z:.2f}, holding mean z {rep.mean_z:.2f}, "
            f"Poisson chi2 p {rep.p_value:.3g} over {sel.sum()} cells")


def test_05_isoperimetric_minima():
    minima = {PLANE_PART: [], RAY_PART: []}
    for k in (5, 6, 7):
        lat = _lat(k, R=Fraction(9, 16))
        for name in (PLANE_PART, RAY_PART):
            part = weighted_part(lat, name)
            res = iso_scan(lat, part, exhaustive_max_size=4, n_random=1000,
                           seed=100 + k, max_random_size=1000)
            minima[name].append(res.min_constant)
    ok = True
    detail = []
    for name, vals in minima.items():
        lo, hi = min(vals), max(vals)
        ok &= lo > 0 and hi <= 1.25 * lo
        detail.append(f"{name} minima {[round(v, 4) for v in vals]}")
    _report("isoperimetric minima ladder", ok, "; ".join(detail))


def test_06_exponential_weight_bound():
    lat = _lat(10, Fraction(1, 128), Fraction(1, 16))
    assert lat.params.theory_regime
    kern = build_kernel(lat)
    k = 10
    diam_cap = lat.n_vertices  # larger than any graph distance: uncapped
    ok = True
    worst = 0.0
    for alpha in (2.0 ** (k - 3), 2.0 ** (k - 2), 2.0 ** (k - 1)):
        for cap in (2.0, 10.0, float(diam_cap)):
            rep = davies_weight_check(lat, kern, alpha, cap)
            ok &= rep.ok
            worst = max(worst, rep.max_sqrt_gamma / rep.bound)
    _report("exponential-weight energy bound", ok,
            f"max sqrt-density/bound ratio {worst:.4f} (must be <= 1)")


def test_07_heat_kernel_constants():
    times = [0.01, 0.05, 0.1]
    per_k = {"near": {}, "far": {}}
    for k in (5, 6, 7):
        lat = _lat(k)
        kern = build_kernel(lat)
        for rep in hk_bound_constant(lat, kern, times, TOL):
            if rep.cells_checked > 0:
                cur = per_k[rep.regime].get(k, 0.0)
                per_k[rep.regime][k] = max(cur, rep.max_ratio)
    ok = True
    detail = []
    for regime, by_k in per_k.items():
        if not by_k:
            detail.append(f"{regime}: no cells above floor")
            continue
        vals = list(by_k.values())
        ok &= all(math.isfinite(v) and v > 0 for v in vals)
        ok &= max(vals) <= 3.0 * min(vals)
        detail.append(f"{regime} C3 per k {[round(v, 3) for v in vals]}")
    _report("heat-kernel empirical constants", ok, "; ".join(detail))


def test_08_generator_convergence():
    lats = [build_lattice(LatticeParams(k=k, epsilon=EPS8,
                                        window_radius=Fraction(33, 32)))
            for k in (5, 6, 7)]
    ok = True
    detail = []
    for tf in acceptance_bumps():
        rows = convergence_report(lats, tf)
        ratios = [b.sup_error / a.sup_error for a, b in zip(rows, rows[1:])]
        ok &= all(0.3 <= r <= 0.8 for r in ratios)
        detail.append(f"beta={tf.params['junction_beta']} "
                      f"ratios {[round(r, 3) for r in ratios]}")
    quad = make_test_function("quadratic_window")
    for lat in lats:
        kern = build_kernel(lat)
        lk = apply_discrete_generator(lat, kern, quad)
        px, py, _ = lat.embed_all()
        r = np.hypot(px, py)
        h = lat.params.mesh
        flat = ((lat.kind == PLANE)
                & (r >= quad.params["rise_end"] + 1.5 * h)
                & (r <= quad.params["fall_start"] - 1.5 * h))
        err = float(np.abs(lk[flat] - 1.0).max())
        ok &= err == 0.0
        detail.append(f"quad err k={lat.params.k}: {err}")
    _report("generator convergence", ok, "; ".join(detail))


def test_09_tightness_statistics():
    # sup-displacement exceedance decays in M on common random numbers
    lat6 = build_lattice(LatticeParams(k=6, epsilon=EPS8,
                                       window_radius=Fraction(13, 4)))
    kern6 = build_kernel(lat6)
    T, n = 0.25, 10000
    sams = mc.sup_rho_samples(lat6, kern6, Vertex.darning(), T, n, seed=400)
    decays = []
    for M in (0.25, 0.5, 0.75, 1.0):
        est = mc.estimate_sup_exceedance(lat6, kern6, Vertex.darning(), T, M,
                                         n, seed=400, _samples=sams)
        assert not est.warnings
        decays.append(est.value)
    mono = all(a >= b for a, b in zip(decays, decays[1:]))

    # modulus exceedance across the ladder: no explosion over the k=5
    # reference within the combined two-sample confidence widths
    mod = {}
    for k in (5, 6, 7):
        lat = build_lattice(LatticeParams(k=k, epsilon=EPS8,
                                          window_radius=Fraction(2)))
        kern = build_kernel(lat)
        rep = mc.estimate_modulus(lat, kern, Vertex.darning(), T, delta=0.01,
                                  n=2000, seed=900 + k,
                                  thresholds=(0.3, 0.35, 0.4, 0.5))
        mod[k] = rep.estimates
    no_explosion = True
    for col in (1, 2, 3):  # thresholds 0.35, 0.4, 0.5
        base = mod[5][col]
        for k in (6, 7):
            est = mod[k][col]
            no_explosion &= est.value <= base.value + base.half_width + est.half_width

    # successive-k laws of the distance statistic draw together
    laws = {}
    for k in (5, 6, 7):
        lat = build_lattice(LatticeParams(k=k, epsilon=EPS8,
                                          window_radius=Fraction(2)))
        kern = build_kernel(lat)
        laws[k] = mc.empirical_law(lat, kern, Vertex.darning(), T, 20000,
                                   seed=k)
    d56 = mc.ks_distance(laws[5].sample, laws[6].sample)
    d67 = mc.ks_distance(laws[6].sample, laws[7].sample)
    floor = mc.ks_noise_floor(20000, 20000)
    ks_ok = d67 <= d56 + 2.0 * floor

    ok = mono and no_explosion and ks_ok
    _report("tightness statistics", ok,
            f"exceedance {[round(v, 4) for v in decays]}, "
            f"modulus no-explosion={no_explosion}, "
            f"KS {d56:.4f} -> {d67:.4f} (floor {floor:.4f})")


def test_10_reproducibility(tmp_path):
    import json
    import os

    hashes = []
    for tag, threads in (("a", "1"), ("b", "3")):
        out = str(tmp_path / tag)
        rc = main(["tightness", "--out", out, "--seed", "7",
                   "--threads", threads, "k=5", "window_radius=2",
                   "n=2000", "delta=0.05"])
        assert rc == 0
        with open(os.path.join(out, "manifest.json")) as fh:
            hashes.append(json.load(fh)["files"])
    ok = hashes[0] == hashes[1] and len(hashes[0]) >= 2
    _report("reproducibility across runs and thread counts", ok,
            f"{len(hashes[0])} files, identical sha256")
