"""Test functions, the discrete generator, and convergence diagnostics.

Test functions are constant on the disc, match that constant at the ray
origin, are C3 everywhere and compactly supported.  Profiles are built
from closed-form polynomial pieces (plus an optional Hoelder-type power
at the ray junction) so that values, Laplacians and second derivatives
are all analytic, never numeric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ParameterError
from .kernel import JumpKernel, build_kernel, transition_distribution
from .lattice import DARNING, PLANE, RAY, LatticeParams, SpacePoint, VdLattice, Vertex
from .montecarlo import _chunks, _simulate_chunk

# C3 smoothstep on [0, 1]: first three derivatives vanish at both ends.
_SMOOTH = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])


def _mapped(poly: Polynomial, lo: float, hi: float) -> Polynomial:
    """The polynomial in the local variable (x - lo)/(hi - lo), as a
    Polynomial of the global variable with correct derivatives."""
    return poly(Polynomial([-lo / (hi - lo), 1.0 / (hi - lo)]))


class Piecewise:
    """Scalar piecewise function with analytic derivatives.

    pieces: list of (lo, hi, fns) with fns = (f, f', f'') vectorized
    callables of the global coordinate; zero outside all pieces.
    """

    def __init__(self, pieces):
        self.pieces = pieces

    def __call__(self, x, d: int = 0):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for lo, hi, fns in self.pieces:
            m = (x >= lo) & (x < hi)
            if m.any():
                out[m] = fns[d](x[m])
        return out


def _poly_fns(poly: Polynomial):
    d1 = poly.deriv()
    d2 = d1.deriv()
    return (poly, d1, d2)


def _const_fns(c: float):
    return (lambda x, c=c: np.full_like(x, c),
            lambda x: np.zeros_like(x),
            lambda x: np.zeros_like(x))


@dataclass
class TestFunction:
    """Member of the generator test class.

    plane profile and its Laplacian are radial; the ray part carries an
    analytic second derivative.  The plane profile is identically
    disc_constant on a neighborhood of the disc, so the constant-on-disc
    matching holds exactly by construction.
    """

    name: str
    disc_constant: float
    support_radius: float
    plane_profile: Piecewise
    ray_profile: Piecewise
    flat_radius: float
    params: dict = field(default_factory=dict)
    # optional exact evaluation from the squared radius; r*r after a rounded
    # hypot is not the dyadic (i^2+j^2)h^2, which matters when the discrete
    # generator must annihilate the profile to the last bit
    plane_value_r2: object = None

    def plane_value(self, r):
        return self.plane_profile(r)

    def plane_lap(self, r):
        r = np.asarray(r, dtype=float)
        return self.plane_profile(r, 2) + np.where(
            r > 0, self.plane_profile(r, 1) / np.where(r > 0, r, 1.0), 0.0)

    def ray_value(self, s):
        return self.ray_profile(s)

    def ray_dd(self, s):
        return self.ray_profile(s, 2)

    def value_at(self, p: SpacePoint) -> float:
        if p.kind == "darning":
            return self.disc_constant
        if p.kind == "plane":
            r2 = p.x * p.x + p.y * p.y
            if self.plane_value_r2 is not None:
                return float(self.plane_value_r2(r2, math.sqrt(r2)))
            return float(self.plane_value(math.sqrt(r2)))
        return float(self.ray_value(p.x))

    def on_lattice(self, lat: VdLattice) -> np.ndarray:
        px, py, _ = lat.embed_all()
        r = np.hypot(px, py)
        out = np.empty(lat.n_vertices)
        plane = lat.kind == PLANE
        ray = lat.kind == RAY
        if self.plane_value_r2 is not None:
            r2 = px * px + py * py
            out[plane] = self.plane_value_r2(r2[plane], r[plane])
        else:
            out[plane] = self.plane_value(r[plane])
        out[ray] = self.ray_value(px[ray])
        out[lat.kind == DARNING] = self.disc_constant
        return out

    def limit_on_lattice(self, lat: VdLattice) -> np.ndarray:
        """Limit generator values per vertex (nan at the darning point)."""
        px, py, _ = lat.embed_all()
        r = np.hypot(px, py)
        out = np.full(lat.n_vertices, np.nan)
        plane = lat.kind == PLANE
        ray = lat.kind == RAY
        out[plane] = 0.25 * self.plane_lap(r[plane])
        out[ray] = 0.5 * self.ray_dd(px[ray])
        return out


def _descending_window(c: float, lo: float, hi: float):
    """C3 window equal to c at lo, zero at hi, three flat derivatives."""
    poly = c * (1.0 - _SMOOTH)
    return (lo, hi, _poly_fns(_mapped(poly, lo, hi)))


def make_test_function(profile: str, params: dict | None = None) -> TestFunction:
    params = dict(params or {})

    def take(key, default):
        return float(params.pop(key, default))

    if profile == "bump":
        c = take("disc_constant", 1.0 / 512)
        a = take("junction_coeff", 1.0)
        beta = take("junction_beta", 0.5)
        sc = take("ray_flat", 1.0 / 8)
        s2 = take("ray_support", 15.0 / 16)
        r0 = take("flat_radius", 0.25)
        r1 = take("plane_support", 15.0 / 16)
        if params:
            raise ParameterError(f"unknown bump parameters {sorted(params)}")
        if not (0 < beta <= 1 and 0 < sc < s2 and 0 < r0 < r1):
            raise ParameterError("inconsistent bump parameters")
        p = 3.0 + beta

        # The ray part is c * (wide C3 window) + a * u^p with
        # u = s(s2-s)/s2.  The power term is C3 with an unbounded fourth
        # derivative at both junctions, so the discrete-generator error
        # decays at the rate h^{1+beta} driven by the junction cells; the
        # window term is polynomial-smooth and contributes only at h^2
        # with a small constant (c is kept small for that reason).
        wfns = _poly_fns(_mapped(1.0 - _SMOOTH, sc, s2))

        def _wc(s, d):
            if d == 0:
                return np.where(s < sc, 1.0, wfns[0](s))
            return np.where(s < sc, 0.0, wfns[d](s))

        def _u(s):
            return s * (s2 - s) / s2

        def _u1(s):
            return 1.0 - 2.0 * s / s2

        def ray0(s):
            return c * _wc(s, 0) + a * _u(s) ** p

        def ray1(s):
            return c * _wc(s, 1) + a * p * _u(s) ** (p - 1) * _u1(s)

        def ray2(s):
            u = _u(s)
            return (c * _wc(s, 2)
                    + a * p * (p - 1) * u ** (p - 2) * _u1(s) ** 2
                    - a * p * u ** (p - 1) * 2.0 / s2)

        plane = Piecewise([(0.0, r0, _const_fns(c)),
                           _descending_window(c, r0, r1)])
        ray = Piecewise([(0.0, s2, (ray0, ray1, ray2))])
        return TestFunction(name="bump", disc_constant=c,
                            support_radius=max(r1, s2),
                            plane_profile=plane, ray_profile=ray,
                            flat_radius=r0,
                            params=dict(disc_constant=c, junction_coeff=a,
                                        junction_beta=beta, ray_flat=sc,
                                        ray_support=s2, flat_radius=r0,
                                        plane_support=r1))

    if profile == "quadratic_window":
        a0 = take("rise_start", 3.0 / 16)
        a1 = take("rise_end", 5.0 / 16)
        b0 = take("fall_start", 1.0 / 2)
        b1 = take("fall_end", 11.0 / 16)
        if params:
            raise ParameterError(f"unknown parameters {sorted(params)}")
        if not 0 < a0 < a1 < b0 < b1:
            raise ParameterError("window breakpoints must increase")
        chi = Piecewise([(a0, a1, _poly_fns(_mapped(_SMOOTH, a0, a1))),
                         (a1, b0, _const_fns(1.0)),
                         (b0, b1, _poly_fns(_mapped(1.0 - _SMOOTH, b0, b1)))])

        def val(r):
            return r * r * chi(r)

        def d1(r):
            return 2 * r * chi(r) + r * r * chi(r, 1)

        def d2(r):
            return 2 * chi(r) + 4 * r * chi(r, 1) + r * r * chi(r, 2)

        plane = Piecewise([(a0, b1, (val, d1, d2))])
        ray = Piecewise([])
        tf = TestFunction(name="quadratic_window", disc_constant=0.0,
                          support_radius=b1, plane_profile=plane,
                          ray_profile=ray, flat_radius=a0,
                          params=dict(rise_start=a0, rise_end=a1,
                                      fall_start=b0, fall_end=b1),
                          plane_value_r2=lambda r2, r: r2 * chi(r))
        return tf

    if profile == "radial_poly":
        c = take("disc_constant", 1.0)
        r0 = take("flat_radius", 0.25)
        r1 = take("plane_support", 7.0 / 8)
        s2 = take("ray_support", 7.0 / 8)
        if params:
            raise ParameterError(f"unknown parameters {sorted(params)}")
        if not (0 < r0 < r1 and s2 > 0):
            raise ParameterError("inconsistent radial_poly parameters")
        g = c * Polynomial([1, 0, 0, 0, -1]) ** 4  # c*(1 - v^4)^4
        plane = Piecewise([(0.0, r0, _const_fns(c)),
                           (r0, r1, _poly_fns(_mapped(g, r0, r1)))])
        ray = Piecewise([(0.0, s2, _poly_fns(_mapped(g, 0.0, s2)))])
        return TestFunction(name="radial_poly", disc_constant=c,
                            support_radius=max(r1, s2),
                            plane_profile=plane, ray_profile=ray,
                            flat_radius=r0,
                            params=dict(disc_constant=c, flat_radius=r0,
                                        plane_support=r1, ray_support=s2))

    raise ParameterError(f"unknown profile {profile!r}")


# -- generators ----------------------------------------------------------

def apply_discrete_generator(lat: VdLattice, kern: JumpKernel, f,
                             x: Vertex | None = None):
    """2^{2k} * sum_y (f(y) - f(x)) j_k(x, y), vectorized over vertices."""
    vals = f.on_lattice(lat) if isinstance(f, TestFunction) else np.asarray(f, dtype=float)
    out = kern.speed * (kern.matrix @ vals - vals)
    if x is None:
        return out
    return float(out[lat.index_of(x)])


def apply_limit_generator(f: TestFunction, p: SpacePoint) -> float:
    """Quarter-Laplacian on the plane, half second derivative on the ray."""
    if p.kind == "darning":
        raise ParameterError("the limit generator is not defined at the darning point")
    if p.kind == "plane":
        return float(0.25 * f.plane_lap(np.hypot(p.x, p.y)))
    return float(0.5 * f.ray_dd(p.x))


def s_k_mask(lat: VdLattice, margin_cells: int = 2) -> np.ndarray:
    """Full-degree plane vertices away from the darning point and window
    margin, plus the (margin-trimmed) ray."""
    interior = lat.interior_mask(margin_cells)
    darning_adjacent = np.zeros(lat.n_vertices, dtype=bool)
    darning_adjacent[lat.neighbors(0)] = True
    plane_ok = (lat.kind == PLANE) & (lat.degree == 4) & ~darning_adjacent & interior
    ray_ok = (lat.kind == RAY) & interior
    return plane_ok | ray_ok


@dataclass
class ConvergenceRow:
    k: int
    sup_error: float
    max_abs_generator: float
    argmax: str


def convergence_report(lats: list[VdLattice], f: TestFunction,
                       kerns: list[JumpKernel] | None = None) -> list[ConvergenceRow]:
    """Sup-error of the discrete generator against the limit generator
    over the full-degree set, per lattice of an increasing-k ladder."""
    eps = {lat.params.epsilon for lat in lats}
    if len(eps) != 1:
        raise ParameterError("ladder lattices must share epsilon")
    if kerns is None:
        kerns = [build_kernel(lat) for lat in lats]
    rows = []
    for lat, kern in zip(lats, kerns):
        lk = apply_discrete_generator(lat, kern, f)
        target = f.limit_on_lattice(lat)
        mask = s_k_mask(lat)
        err = np.abs(lk[mask] - target[mask])
        i = int(np.argmax(err))
        vid = np.nonzero(mask)[0][i]
        rows.append(ConvergenceRow(k=lat.params.k,
                                   sup_error=float(err[i]),
                                   max_abs_generator=float(np.abs(lk).max()),
                                   argmax=repr(lat.vertex(int(vid)))))
    return rows


@dataclass
class OccupationReport:
    times: np.ndarray
    estimates: np.ndarray
    half_widths: np.ndarray
    exact: dict


def darning_occupation(lat: VdLattice, kern: JumpKernel, T: float,
                       delta: float, n: int, seed: int, n_times: int = 5,
                       exact_times=(), times=None) -> OccupationReport:
    """P[X_t outside the full-degree set] on a grid over [2^{-k}/delta, T],
    started at the darning point; optionally cross-checked exactly."""
    if not 0 < delta < min(1.0, T) / 4:
        raise ParameterError("delta must lie in (0, (1 ^ T)/4)")
    if n < 1000:
        raise ParameterError("need at least 1000 paths")
    t_lo = lat.params.mesh / delta
    if t_lo > T:
        raise ParameterError("2^{-k}/delta exceeds the horizon")
    if times is not None:
        grid = np.asarray(times, dtype=float)
        if grid.min() < t_lo or grid.max() > T:
            raise ParameterError("times must lie in [2^{-k}/delta, T]")
    else:
        grid = np.linspace(t_lo, T, n_times)
    not_s = ~s_k_mask(lat)
    hits = np.zeros(len(grid))
    for lo, hi in _chunks(n):
        times, gaps, n_events, states = _simulate_chunk(
            lat, kern, 0, T, seed, lo, hi)
        full = np.concatenate(
            [np.zeros((hi - lo, 1), dtype=np.int64), states], axis=1)
        for i, t in enumerate(grid):
            pos = (times <= t).sum(axis=1)
            at_t = np.take_along_axis(full, pos[:, None], axis=1)[:, 0]
            hits[i] += int(not_s[at_t].sum())
    est = hits / n
    half = 1.96 * np.sqrt(est * (1 - est) / n)
    exact = {}
    for t in exact_times:
        dist = transition_distribution(lat, kern, Vertex.darning(), float(t))
        exact[float(t)] = float(dist.probs[not_s].sum())
    return OccupationReport(times=grid, estimates=est, half_widths=half,
                            exact=exact)
