"""Experiment orchestration: config parsing, subcommands, run manifests.

Config files are flat `key = value` text with dotted keys allowed;
command-line overrides (key=value) win over the file.  Every run writes
its outputs plus a manifest with content hashes into the output
directory.  Exit codes: 0 success, 1 usage error, 2 failed check.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__, backend
from . import generator as gen
from . import inequalities as ineq
from . import montecarlo as mc
from .errors import BudgetError, ContractViolation, DegenerateGeometryError, ParameterError
from .kernel import build_kernel, heat_kernel_density, transition_distribution
from .lattice import LatticeParams, VdLattice, Vertex, build_lattice


class UsageError(Exception):
    pass


class CheckFailure(Exception):
    pass


# -- config handling -----------------------------------------------------

def _bool(s):
    if str(s).lower() in ("1", "true", "yes", "on"):
        return True
    if str(s).lower() in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def _floats(s):
    return [float(x) for x in str(s).split(",") if x.strip() != ""]


def _ints(s):
    return [int(x) for x in str(s).split(",") if x.strip() != ""]


_COMMON = {
    "seed": (int, 0),
    "threads": (int, 1),
    "boundary": (str, "induced"),
}

_SCHEMAS = {
    "lattice-info": {
        "k": (int, 6), "epsilon": (str, "1/8"), "window_radius": (str, "3/4"),
        "write_edges": (_bool, False),
    },
    "kernel": {
        "k": (int, 5), "epsilon": (str, "1/8"), "window_radius": (str, "3/4"),
        "x0": (str, "darning"), "t": (float, 0.01), "tol": (float, 1e-10),
    },
    "simulate": {
        "k": (int, 5), "epsilon": (str, "1/8"), "window_radius": (str, "3/4"),
        "x0": (str, "darning"), "horizon": (float, 0.25), "path_index": (int, 0),
    },
    "tightness": {
        "k": (int, 6), "epsilon": (str, "1/8"), "window_radius": (str, "13/4"),
        "x0": (str, "darning"), "horizon": (float, 0.25), "n": (int, 10000),
        "m_grid": (_floats, [0.25, 0.5, 0.75, 1.0]),
        "delta": (float, 0.01),
        "thresholds": (_floats, [0.1, 0.2, 0.3, 0.5]),
    },
    "check-iso": {
        "k": (int, 5), "epsilon": (str, "1/8"), "window_radius": (str, "9/16"),
        "exhaustive_max_size": (int, 4), "n_random": (int, 1000),
        "max_random_size": (int, 1000),
    },
    "check-nash": {
        "k": (int, 5), "epsilon": (str, "1/8"), "window_radius": (str, "3/4"),
        "n_funcs": (int, 20),
    },
    "check-davies": {
        "k": (int, 10), "epsilon": (str, "1/128"), "window_radius": (str, "1/16"),
        "alphas": (str, "auto"), "caps": (str, "2,10,inf"),
    },
    "check-hk": {
        "k_list": (_ints, [5, 6, 7]), "epsilon": (str, "1/8"),
        "window_radius": (str, "3/4"),
        "times": (_floats, [0.01, 0.05, 0.1]), "tol": (float, 1e-10),
        "floor": (float, 1e-12),
    },
    "check-generator": {
        "k_list": (_ints, [5, 6, 7]), "epsilon": (str, "1/8"),
        "window_radius": (str, "33/32"),
    },
    "converge": {
        "k_list": (_ints, [5, 6, 7]), "epsilon": (str, "1/8"),
        "window_radius": (str, "2"), "horizon": (float, 0.25),
        "n": (int, 20000), "x0": (str, "darning"),
    },
}


def parse_config_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def resolve_config(subcommand: str, file_values: dict, overrides: dict) -> dict:
    schema = dict(_COMMON)
    schema.update(_SCHEMAS[subcommand])
    merged = dict(file_values)
    merged.update(overrides)
    unknown = sorted(set(merged) - set(schema))
    if unknown:
        raise UsageError(f"unknown config keys for {subcommand}: {unknown}")
    resolved = {}
    for key, (conv, default) in schema.items():
        if key in merged:
            try:
                resolved[key] = conv(merged[key])
            except (ValueError, TypeError) as exc:
                raise UsageError(f"bad value for {key}: {merged[key]!r} ({exc})")
        else:
            resolved[key] = default
    return resolved


def _params(cfg, k=None) -> LatticeParams:
    try:
        return LatticeParams(
            k=k if k is not None else cfg["k"],
            epsilon=Fraction(cfg["epsilon"]),
            window_radius=Fraction(cfg["window_radius"]),
            boundary_mode=cfg["boundary"])
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(str(exc))


def _vertex(spec: str) -> Vertex:
    if spec == "darning":
        return Vertex.darning()
    kind, _, rest = spec.partition(":")
    try:
        if kind == "ray":
            return Vertex.ray(int(rest))
        if kind == "plane":
            i, j = rest.split(",")
            return Vertex.plane(int(i), int(j))
    except ValueError:
        pass
    raise UsageError(f"bad vertex spec {spec!r}; use darning, ray:N or plane:I,J")


# -- output helpers ------------------------------------------------------

class RunDir:
    def __init__(self, path: str):
        self.path = path
        self.files: list[str] = []
        self.warnings: list[str] = []
        os.makedirs(path, exist_ok=True)

    def open_csv(self, name: str, header: list[str]):
        full = os.path.join(self.path, name)
        fh = open(full, "w", newline="")
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(header)
        self.files.append(name)
        return fh, writer

    def write_json(self, name: str, payload) -> None:
        full = os.path.join(self.path, name)
        with open(full, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        self.files.append(name)

    def finalize(self, subcommand: str, config: dict, t0: float) -> None:
        hashes = {}
        for name in self.files:
            digest = hashlib.sha256()
            with open(os.path.join(self.path, name), "rb") as fh:
                digest.update(fh.read())
            hashes[name] = digest.hexdigest()
        manifest = {
            "schema_version": 1,
            "subcommand": subcommand,
            "config": config,
            "version": __version__,
            "backend": backend.BACKEND,
            "seed": config.get("seed"),
            "wall_time_s": round(time.monotonic() - t0, 3),
            "warnings": self.warnings,
            "files": hashes,
        }
        tmp = os.path.join(self.path, "manifest.json.tmp")
        with open(tmp, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        os.replace(tmp, os.path.join(self.path, "manifest.json"))

    def cleanup(self) -> None:
        for name in self.files:
            try:
                os.remove(os.path.join(self.path, name))
            except OSError:
                pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


# -- subcommand implementations ------------------------------------------

def _cmd_lattice_info(cfg, run: RunDir):
    lat = build_lattice(_params(cfg))
    lat.check_invariants()
    run.warnings.extend(lat.warnings)
    run.write_json("lattice.json", lat.manifest())
    if cfg["write_edges"]:
        path = os.path.join(run.path, "edges.csv")
        lat.write_edge_csv(path)
        run.files.append("edges.csv")


def _cmd_kernel(cfg, run: RunDir):
    lat = build_lattice(_params(cfg))
    kern = build_kernel(lat)
    x0 = _vertex(cfg["x0"])
    dist = transition_distribution(lat, kern, x0, cfg["t"], cfg["tol"])
    dens = dist.probs / lat.mass
    fh, w = run.open_csv("kernel.csv", ["index", "kind", "i", "j",
                                        "probability", "density"])
    with fh:
        for t in range(lat.n_vertices):
            v = lat.vertex(t)
            w.writerow([t, ["darning", "plane", "ray"][int(lat.kind[t])],
                        v.i, v.j, _fmt(float(dist.probs[t])),
                        _fmt(float(dens[t]))])
    run.write_json("kernel.json", {
        "k": lat.params.k, "epsilon": str(lat.params.epsilon),
        "t": cfg["t"], "tol": cfg["tol"], "n_terms": dist.n_terms,
        "truncation_error": dist.truncation_error,
        "leaked_mass": dist.leaked_mass})


def _cmd_simulate(cfg, run: RunDir):
    lat = build_lattice(_params(cfg))
    kern = build_kernel(lat)
    path = mc.sample_path(lat, kern, _vertex(cfg["x0"]), cfg["horizon"],
                          cfg["seed"], cfg["path_index"])
    fh, w = run.open_csv("path.csv", ["jump_time", "vertex"])
    with fh:
        for t, v in path.events:
            w.writerow([_fmt(t), repr(v)])
    run.write_json("path.json", {
        "start": repr(path.start), "horizon": path.horizon,
        "n_events": path.n_events(), "seed": path.seed,
        "path_index": path.path_index, "truncated": path.truncated})


def _cmd_tightness(cfg, run: RunDir):
    lat = build_lattice(_params(cfg))
    kern = build_kernel(lat)
    x0 = _vertex(cfg["x0"])
    T, n, seed = cfg["horizon"], cfg["n"], cfg["seed"]
    sams = mc.sup_rho_samples(lat, kern, x0, T, n, seed)
    fh, w = run.open_csv("exceedance.csv", ["M", "estimate", "half_width", "n"])
    with fh:
        for M in cfg["m_grid"]:
            est = mc.estimate_sup_exceedance(lat, kern, x0, T, M, n, seed,
                                             _samples=sams)
            run.warnings.extend(est.warnings)
            w.writerow([_fmt(M), _fmt(est.value), _fmt(est.half_width), n])
    rep = mc.estimate_modulus(lat, kern, x0, T, cfg["delta"], n, seed,
                              thresholds=cfg["thresholds"])
    fh, w = run.open_csv("modulus.csv",
                         ["delta", "threshold", "estimate", "half_width", "n"])
    with fh:
        for d1, est in zip(rep.thresholds, rep.estimates):
            w.writerow([_fmt(cfg["delta"]), _fmt(float(d1)),
                        _fmt(est.value), _fmt(est.half_width), n])


def _cmd_check_iso(cfg, run: RunDir):
    lat = build_lattice(_params(cfg))
    payload = {}
    failed = False
    for part_name in (ineq.PLANE_PART, ineq.RAY_PART):
        part = ineq.weighted_part(lat, part_name)
        res = ineq.iso_scan(lat, part, cfg["exhaustive_max_size"],
                            cfg["n_random"], cfg["seed"],
                            cfg["max_random_size"])
        payload[part_name] = {
            "min_constant": res.min_constant,
            "witness": [repr(lat.vertex(v)) for v in res.witness],
            "n_enumerated": res.n_enumerated,
            "n_random": res.n_random,
        }
        if not res.min_constant > 0:
            failed = True
    run.write_json("iso.json", payload)
    if failed:
        raise CheckFailure("isoperimetric minimum is not strictly positive")


def _random_bumps(lat: VdLattice, n_funcs: int, seed: int):
    """Seeded family of lattice bump functions supported in the interior."""
    rng = np.random.default_rng(seed)
    px, py, rho = lat.embed_all()
    interior = lat.interior_mask(2)
    for _ in range(n_funcs):
        width = rng.uniform(0.1, 0.4)
        cx, cy = rng.uniform(-0.3, 0.3, size=2)
        f = np.clip(1.0 - np.hypot(px - cx, py - cy) / width, 0.0, None) ** 2
        f += np.clip(1.0 - rho / width, 0.0, None) ** 2 * (lat.kind != 1)
        f *= interior
        if f.any():
            yield f


def _cmd_check_nash(cfg, run: RunDir):
    lat = build_lattice(_params(cfg))
    fh, w = run.open_csv("nash.csv", ["plane_constant", "ray_constant",
                                      "combined_constant"])
    worst = math.inf
    with fh:
        for f in _random_bumps(lat, cfg["n_funcs"], cfg["seed"]):
            rep = ineq.nash_check(lat, f)
            w.writerow([_fmt(rep.plane_constant), _fmt(rep.ray_constant),
                        _fmt(rep.combined_constant)])
            worst = min(worst, rep.plane_constant, rep.ray_constant,
                        rep.combined_constant)
    if not (worst > 0 and math.isfinite(worst)):
        raise CheckFailure("Nash implied constant not strictly positive/finite")


def _cmd_check_davies(cfg, run: RunDir):
    lat = build_lattice(_params(cfg))
    kern = build_kernel(lat)
    k = lat.params.k
    if cfg["alphas"] == "auto":
        alphas = [2.0 ** (k - 3), 2.0 ** (k - 2), 2.0 ** (k - 1)]
    else:
        alphas = _floats(cfg["alphas"])
    caps = [math.inf if c.strip() == "inf" else float(c)
            for c in cfg["caps"].split(",")]
    rows = []
    failed = False
    for alpha in alphas:
        for cap in caps:
            rep = ineq.davies_weight_check(lat, kern, alpha, cap)
            rows.append({"alpha": alpha, "cap": cap,
                         "max_sqrt_gamma": rep.max_sqrt_gamma,
                         "bound": rep.bound, "ok": rep.ok})
            failed |= not rep.ok
    run.write_json("davies.json", {"k": k, "epsilon": str(lat.params.epsilon),
                                   "results": rows})
    if failed:
        raise CheckFailure("exponential-weight energy bound violated")


def _cmd_check_hk(cfg, run: RunDir):
    rows = []
    for k in cfg["k_list"]:
        lat = build_lattice(_params(cfg, k=k))
        kern = build_kernel(lat)
        for rep in ineq.hk_bound_constant(lat, kern, cfg["times"],
                                          cfg["tol"], floor=cfg["floor"]):
            rows.append({"k": k, "t": rep.t, "regime": rep.regime,
                         "max_ratio": rep.max_ratio,
                         "cells_checked": rep.cells_checked,
                         "cells_skipped": rep.cells_skipped})
    run.write_json("hk.json", {"results": rows})
    finite = [r["max_ratio"] for r in rows if r["cells_checked"] > 0]
    if not all(math.isfinite(v) for v in finite):
        raise CheckFailure("heat-kernel ratio is not finite")


def acceptance_bumps() -> list[gen.TestFunction]:
    """The two bump profiles used by the ladder checks: Hoelder exponents
    3.5 and 3.25 at the ray junction, flat near the disc."""
    return [
        gen.make_test_function("bump", {"junction_beta": 0.5,
                                        "junction_coeff": 1.0}),
        gen.make_test_function("bump", {"junction_beta": 0.25,
                                        "junction_coeff": 1.0,
                                        "disc_constant": 1.0 / 512}),
    ]


def _cmd_check_generator(cfg, run: RunDir):
    lats = [build_lattice(_params(cfg, k=k)) for k in cfg["k_list"]]
    fh, w = run.open_csv("generator.csv",
                         ["profile", "k", "sup_error", "max_abs_generator"])
    failed = False
    with fh:
        for tf in acceptance_bumps():
            rows = gen.convergence_report(lats, tf)
            for row in rows:
                w.writerow([tf.name + f"-beta{tf.params['junction_beta']}",
                            row.k, _fmt(row.sup_error),
                            _fmt(row.max_abs_generator)])
            for a, b in zip(rows, rows[1:]):
                ratio = b.sup_error / a.sup_error
                if not 0.3 <= ratio <= 0.8:
                    failed = True
        quad = gen.make_test_function("quadratic_window")
        for lat in lats:
            kern = build_kernel(lat)
            lk = gen.apply_discrete_generator(lat, kern, quad)
            px, py, _ = lat.embed_all()
            r = np.hypot(px, py)
            h = lat.params.mesh
            flat = ((lat.kind == 1)
                    & (r >= quad.params["rise_end"] + 1.5 * h)
                    & (r <= quad.params["fall_start"] - 1.5 * h))
            err = float(np.abs(lk[flat] - 1.0).max()) if flat.any() else 0.0
            w.writerow(["quadratic_window", lat.params.k, _fmt(err), _fmt(0.0)])
            if err != 0.0:
                failed = True
    if failed:
        raise CheckFailure("generator convergence check failed")


def _cmd_converge(cfg, run: RunDir):
    x0 = _vertex(cfg["x0"])
    T, n, seed = cfg["horizon"], cfg["n"], cfg["seed"]
    laws = {}
    for k in cfg["k_list"]:
        lat = build_lattice(_params(cfg, k=k))
        kern = build_kernel(lat)
        laws[k] = mc.empirical_law(lat, kern, x0, T, n, seed + k)
    ks = sorted(laws)
    fh, w = run.open_csv("ks.csv", ["k_lo", "k_hi", "ks_distance",
                                    "noise_floor", "n"])
    with fh:
        for a, b in zip(ks, ks[1:]):
            d = mc.ks_distance(laws[a].sample, laws[b].sample)
            w.writerow([a, b, _fmt(d), _fmt(mc.ks_noise_floor(n, n)), n])


_COMMANDS = {
    "lattice-info": _cmd_lattice_info,
    "kernel": _cmd_kernel,
    "simulate": _cmd_simulate,
    "tightness": _cmd_tightness,
    "check-iso": _cmd_check_iso,
    "check-nash": _cmd_check_nash,
    "check-davies": _cmd_check_davies,
    "check-hk": _cmd_check_hk,
    "check-generator": _cmd_check_generator,
    "converge": _cmd_converge,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vdwalk",
        description="Random walks on a varying-dimension lattice: exact "
                    "kernels, Monte Carlo, and inequality certification.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--boundary", default=None)
        p.add_argument("overrides", nargs="*", metavar="key=value")
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return 0 if exc.code == 0 else 1
        file_values = parse_config_file(args.config) if args.config else {}
        overrides = {}
        for item in args.overrides:
            if "=" not in item:
                raise UsageError(f"override must be key=value: {item!r}")
            key, val = item.split("=", 1)
            overrides[key.strip()] = val.strip()
        for flag in ("seed", "threads", "boundary"):
            if getattr(args, flag) is not None:
                overrides[flag] = getattr(args, flag)
        cfg = resolve_config(args.subcommand, file_values, overrides)
        out = args.out or f"run-{args.subcommand}"
        run = RunDir(out)
        t0 = time.monotonic()
        try:
            _COMMANDS[args.subcommand](cfg, run)
        except (CheckFailure, AssertionError) as exc:
            run.cleanup()
            print(f"check failed: {exc}", file=sys.stderr)
            return 2
        except Exception:
            run.cleanup()
            raise
        run.finalize(args.subcommand, cfg, t0)
        print(os.path.join(run.path, "manifest.json"))
        return 0
    except (UsageError, ParameterError, DegenerateGeometryError,
            ContractViolation, BudgetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
