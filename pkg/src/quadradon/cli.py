"""Command line interface: the only I/O boundary of the package.

Exit codes: 0 success, 1 configuration error, 2 domain error, 3 I/O error.
"""
import argparse
import sys
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import CovectorPoint, off_source_maxima, overlay_psf, predict_artifacts
from .classifier import bolker_check, classify, sigma1_scan
from .config import U64_MAX, emit, parse_config, validate
from .canonical import find_sigma_points, offset, sigma_K
from .errors import ConfigError, QuadradonError, ValidationError
from .geometry import ParaboloidFamily, SurfaceKind
from .io import config_hash, read_grid, read_sinogram_csv, write_grid, write_json, write_sinogram_csv
from .radon import Blob, ImageGrid, Phantom, adjoint, forward, normal_op, psf, rasterize

EXIT_CONFIG, EXIT_DOMAIN, EXIT_IO = 1, 2, 3

SIGMA1_CONVENTION = ("sigma_1 = {K = 0, F = 0} with F summing |d_i q|^2 over every tangential "
                     "index i = 1..n-1; a display starting at i = 2 is not used")
OUT_OF_SCOPE = "artifact strength and order; open-umbrella geometry of the fold/cusp composition"


# ---------------------------------------------------------------------------
# builders

def _phantom(cfg):
    return Phantom([Blob(kind, np.array(c), size, amp) for kind, c, size, amp in cfg.phantom])


def _grid(cfg):
    if cfg.grid is None:
        raise ValidationError("grid", "[grid] section is required for this command")
    g = cfg.grid
    return ImageGrid(origin=np.array(g.origin), spacing=g.spacing, dims=g.dims)


def _centers_ts(cfg):
    if cfg.sinogram is None:
        raise ValidationError("sinogram", "[sinogram] section is required for this command")
    s = cfg.sinogram
    axes = [np.linspace(a, b, m) for a, b, m in zip(s.centers_lo, s.centers_hi, s.n_centers)]
    centers = np.array(list(product(*axes)), dtype=float)
    return centers, np.linspace(s.t_min, s.t_max, s.n_t)


def _source(cfg):
    if cfg.source is None:
        raise ValidationError("source", "[source] section is required for this command")
    return CovectorPoint(np.array(cfg.source["x"]), np.array(cfg.source["xi"]))


def _diag_pm1(A):
    return np.all(A == np.diag(np.diag(A))) and np.all(np.abs(np.diag(A)) == 1)


def theorem_verdict(family, S):
    """Name of the structural result matching the geometry, if any."""
    n = S.n
    if isinstance(family, ParaboloidFamily):
        if family.k == n - 1:
            return "paraboloid family with k = n-1: Bolker condition"
        return "paraboloid family with k < n-1: rank drop n-k-1"
    k_pos, k_neg = family.signature
    A = family.A
    strictly_convex = S.kind is SurfaceKind.HEMISPHERE
    if k_neg == 0 and strictly_convex:
        return "positive definite form, definite surface Hessian: two-sided fold"
    # the +1 entry may sit in any slot, the last one included
    if strictly_convex and k_pos == 1 and _diag_pm1(A):
        return "diagonal form with one positive entry, strictly convex surface: two-sided fold"
    if strictly_convex and 2 <= k_pos <= n - 1:
        return "indefinite form with k >= 2 positive eigenvalues, strictly convex surface: left cusp, right fold"
    if S.kind is SurfaceKind.HALF_CYLINDER and _diag_pm1(A):
        if k_pos == 1:
            # any slot for the +1 entry, by interchanging coordinates
            return "diagonal form with one positive entry, half cylinder: two-sided fold"
        if 2 <= k_pos <= n - 1 and np.all(np.diag(A)[:k_pos] == 1):
            # the published statement and its proof disagree on which side cusps;
            # the report carries the measured classes instead of either reading
            return "diagonal form with k >= 2 positive entries, half cylinder: see measured classes"
    return "unclassified geometry"


def theoretical_class(verdict):
    if "Bolker" in verdict:
        return "pseudodifferential normal operator: no artifacts"
    if verdict.endswith("two-sided fold"):
        return "two-sided fold: normal operator adds a mirror relation"
    return "no theoretical class available"


# ---------------------------------------------------------------------------
# serialization of results

def _finite(v):
    return float(v) if np.isfinite(v) else None


def _cp(cp):
    return {"y": cp.y, "x": cp.x, "omega": cp.omega}


def _report(r):
    return {"point": _cp(r.point), "K": r.K, "F": r.F, "dKv": r.dKv, "right_val": r.right_val,
            "gradG_norm": r.gradG_norm, "right_gradG_norm": r.right_gradG_norm,
            "left_class": r.left_class.value, "right_class": r.right_class.value}


def _bolker(b):
    return {"roundtrip_max_err": b.roundtrip_max_err, "min_singular_value": b.min_singular_value,
            "min_scaled_singular_value": b.min_scaled_singular_value,
            "rank_drop": b.rank_drop, "verdict": b.verdict.value, "samples": b.samples}


def _geometry(cfg):
    out = {"surface": dict(cfg.surface)}
    if cfg.quadric is not None:
        out["quadric"] = cfg.quadric
    else:
        out["paraboloid"] = cfg.paraboloid
    return out


def _sigma1(res, Q, S):
    pts = []
    for cp in res.points:
        r = classify(cp, Q, S)
        pts.append({"point": _cp(cp), "left_class": r.left_class.value,
                    "right_class": r.right_class.value, "F": r.F})
    return {"points": pts, "empty": res.empty, "starts": res.starts,
            "converged": res.converged, "max_t": _finite(res.max_t),
            "evidence": "sampling evidence, not a proof",
            "convention": SIGMA1_CONVENTION}


# ---------------------------------------------------------------------------
# commands

def _region(cfg):
    return np.array(cfg.scan.region_lo), np.array(cfg.scan.region_hi)


def cmd_classify(cfg, meta, out, threads):
    fam, S = cfg.family(), cfg.center_surface()
    verdict = theorem_verdict(fam, S)
    rep = {"meta": meta, "geometry": _geometry(cfg)}
    if isinstance(fam, ParaboloidFamily):
        rep["bolker"] = _bolker(bolker_check(fam, S, cfg.scan.samples, cfg.scan.seed))
    else:
        sc = cfg.scan
        pts = find_sigma_points(fam, S, _region(cfg), sc.t_min, sc.samples, sc.seed)
        reports = [classify(cp, fam, S) for cp in pts]
        summary = {}
        for side in ("left", "right"):
            for cls in ("REGULAR", "FOLD", "CUSP", "BLOWDOWN", "UNDETERMINED"):
                summary[f"{cls}_{side}"] = sum(getattr(r, f"{side}_class").value == cls for r in reports)
        s1 = _sigma1(sigma1_scan(fam, S, _region(cfg), sc.t_min, sc.starts, sc.seed, sc.samples), fam, S)
        # random fold-set samples almost never land on sigma_1; the scan hits are counted apart
        summary["CUSP_sigma1"] = sum(p["left_class"] == "CUSP" for p in s1["points"])
        summary["CUSP"] = summary["CUSP_left"] + summary["CUSP_right"] + summary["CUSP_sigma1"]
        rep.update(samples=[_report(r) for r in reports], summary=summary, sigma1=s1)
    rep["theorem_verdict"] = verdict
    write_json(out, rep)


def cmd_scan_sigma(cfg, meta, out, threads):
    fam, S = cfg.family(), cfg.center_surface()
    if isinstance(fam, ParaboloidFamily):
        raise ValidationError("quadric", "scan-sigma needs a [quadric] section")
    sc = cfg.scan
    pts = find_sigma_points(fam, S, _region(cfg), sc.t_min, sc.samples, sc.seed)
    samples = []
    for cp in pts:
        xT = offset(cp.y, cp.x, S)
        samples.append({"point": _cp(cp), "K": sigma_K(cp.y, cp.x, S), "t": float(xT @ fam.A @ xT)})
    s1 = _sigma1(sigma1_scan(fam, S, _region(cfg), sc.t_min, sc.starts, sc.seed, sc.samples), fam, S)
    write_json(out, {"meta": meta, "geometry": _geometry(cfg), "sigma": samples, "sigma1": s1})


def cmd_bolker(cfg, meta, out, threads):
    fam, S = cfg.family(), cfg.center_surface()
    if not isinstance(fam, ParaboloidFamily):
        raise ValidationError("paraboloid", "bolker needs a [paraboloid] section")
    rep = _bolker(bolker_check(fam, S, cfg.scan.samples, cfg.scan.seed))
    write_json(out, {"meta": meta, "geometry": _geometry(cfg), "bolker": rep,
                     "theorem_verdict": theorem_verdict(fam, S)})


def cmd_forward(cfg, meta, out, threads):
    fam, S = cfg.family(), cfg.center_surface()
    centers, ts = _centers_ts(cfg)
    sino = forward(_phantom(cfg), fam, S, centers, ts, cfg.sinogram.density)
    write_sinogram_csv(out, sino)
    write_json(str(out) + ".meta.json", meta)


def cmd_adjoint(cfg, meta, out, threads):
    fam, S = cfg.family(), cfg.center_surface()
    if "sinogram" not in cfg.inputs:
        raise ValidationError("input.sinogram", "adjoint needs an input sinogram path")
    sino = read_sinogram_csv(cfg.inputs["sinogram"])
    density = cfg.sinogram.density if cfg.sinogram else 512
    img = adjoint(sino, _grid(cfg), fam, S, density, threads)
    write_grid(out, img, meta)


def cmd_normal(cfg, meta, out, threads):
    fam, S = cfg.family(), cfg.center_surface()
    centers, ts = _centers_ts(cfg)
    image = rasterize(_phantom(cfg), _grid(cfg))
    write_grid(out, normal_op(image, fam, S, centers, ts, cfg.sinogram.density, threads), meta)


def _psf(cfg, threads):
    fam, S = cfg.family(), cfg.center_surface()
    centers, ts = _centers_ts(cfg)
    return psf(_source(cfg).x, _grid(cfg), fam, S, centers, ts, cfg.sinogram.density, threads)


def cmd_psf(cfg, meta, out, threads):
    write_grid(out, _psf(cfg, threads), meta)


def cmd_artifacts(cfg, meta, out, threads):
    fam, S = cfg.family(), cfg.center_surface()
    src = _source(cfg)
    pred = predict_artifacts(src, fam, S)
    thr, hit = cfg.artifacts["threshold"], cfg.artifacts["hit_radius"]
    image = read_grid(cfg.inputs["psf"]) if "psf" in cfg.inputs else _psf(cfg, threads)
    verdict = theorem_verdict(fam, S)
    rep = {
        "meta": meta,
        "geometry": _geometry(cfg),
        "source": {"x": src.x, "xi": src.xi},
        "data_points": [{"y": d.y, "t": d.t, "eta": d.eta, "tau": d.tau} for d in pred.data_points],
        "mirrors": [{"x": m.x, "xi": m.xi} for m in pred.mirrors],
        "residuals": pred.residuals,
        "overlay": [{"x": r["x"], "distance_cells": _finite(r["distance_cells"]), "hit": r["hit"]}
                    for r in overlay_psf(pred, image, thr, hit)],
        "off_source_maxima": off_source_maxima(image, src.x, thr, hit),
        "theorem_verdict": verdict,
        "theoretical_class": theoretical_class(verdict),
        "out_of_scope": OUT_OF_SCOPE,
    }
    write_json(out, rep)


COMMANDS = {
    "classify": cmd_classify,
    "scan-sigma": cmd_scan_sigma,
    "bolker": cmd_bolker,
    "forward": cmd_forward,
    "adjoint": cmd_adjoint,
    "normal": cmd_normal,
    "psf": cmd_psf,
    "artifacts": cmd_artifacts,
}


def build_parser():
    p = argparse.ArgumentParser(prog="quadradon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="configuration file")
        sp.add_argument("--out", required=True, help="output path")
        sp.add_argument("--seed", type=int, help="override [scan] seed (u64)")
        sp.add_argument("--samples", type=int, help="override [scan] samples")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default all)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            if not 0 <= args.seed <= U64_MAX:
                raise ValidationError("seed", "seed must be a 64-bit unsigned integer")
            cfg.scan.seed = args.seed
        if args.samples is not None:
            cfg.scan.samples = args.samples
        if args.threads is not None and args.threads < 1:
            raise ValidationError("threads", "must be positive")
        validate(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    # the hash covers the effective configuration, overrides included
    meta = {"config_hash": config_hash(emit(cfg)), "seed": cfg.scan.seed, "version": __version__,
            "command": args.command}
    try:
        COMMANDS[args.command](cfg, meta, args.out, args.threads)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (QuadradonError, ValueError) as e:
        print(f"domain error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    return 0


if __name__ == "__main__":
    sys.exit(main())
