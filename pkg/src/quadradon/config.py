"""Run configuration: a line-oriented ``[section] key = value`` format.

Lists are comma separated; matrices are given one row per key (``row1``,
``row2``, ...). Unknown sections or keys are hard errors. ``emit`` writes a
canonical text that parses back to an equal :class:`RunConfig`.
"""
import configparser
import re
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import (BadDomain, BadParaboloid, NotSymmetric, ParseError,
                     QuadradonError, Singular, UnknownKind, ValidationError)
from .geometry import builtin_surface, make_paraboloid, make_quadric

U64_MAX = 2**64 - 1

# section -> (fixed keys, pattern for numbered keys)
_KEYS = {
    "quadric": ({"diag"}, r"row\d+"),
    "paraboloid": ({"n", "k", "diag", "b"}, r"row\d+"),
    "surface": ({"kind", "n", "margin", "half_length", "height", "lo", "hi"}, r"term\d+"),
    "scan": ({"region_lo", "region_hi", "t_min", "samples", "seed", "starts"}, None),
    "phantom": (set(), r"blob\d+"),
    "grid": ({"origin", "spacing", "dims"}, None),
    "sinogram": ({"centers_lo", "centers_hi", "n_centers", "t_min", "t_max", "n_t", "density"}, None),
    "source": ({"x", "xi"}, None),
    "artifacts": ({"threshold", "hit_radius"}, None),
    "input": ({"sinogram", "psf"}, None),
}


@dataclass
class ScanSpec:
    region_lo: tuple = (-2.0, -2.0, -2.0)
    region_hi: tuple = (2.0, 2.0, 2.0)
    t_min: float = 1e-6
    samples: int = 200
    seed: int = 0
    starts: int = 2000


@dataclass
class GridSpec:
    origin: tuple
    spacing: float
    dims: tuple


@dataclass
class SinogramSpec:
    centers_lo: tuple
    centers_hi: tuple
    n_centers: tuple
    t_min: float
    t_max: float
    n_t: int
    density: int = 512


@dataclass
class RunConfig:
    # exactly one of quadric / paraboloid; matrices as tuples of row tuples
    quadric: tuple = None
    paraboloid: dict = None
    surface: dict = None
    scan: ScanSpec = field(default_factory=ScanSpec)
    phantom: tuple = ()
    grid: GridSpec = None
    sinogram: SinogramSpec = None
    source: dict = None
    artifacts: dict = field(default_factory=lambda: {"threshold": 0.5, "hit_radius": 2.0})
    inputs: dict = field(default_factory=dict)

    def family(self):
        """Build the level-set family (quadric or paraboloid)."""
        if self.quadric is not None:
            return make_quadric(np.array(self.quadric))
        p = self.paraboloid
        return make_paraboloid(p["n"], p["k"], np.array(p["a"]), np.array(p["b"]))

    def center_surface(self):
        s = dict(self.surface)
        kind, n = s.pop("kind"), s.pop("n")
        if "terms" in s:
            s["terms"] = [(e, c) for e, c in s["terms"]]
        return builtin_surface(kind, n, s)

    @property
    def n(self):
        return self.surface["n"]


def _floats(text, field_name):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(field_name, f"expected numbers, got {text!r}") from None


def _float(text, field_name):
    v = _floats(text, field_name)
    if len(v) != 1:
        raise ValidationError(field_name, "expected a single number")
    return v[0]


def _ints(text, field_name):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(field_name, f"expected integers, got {text!r}") from None


def _int(text, field_name):
    v = _ints(text, field_name)
    if len(v) != 1:
        raise ValidationError(field_name, "expected a single integer")
    return v[0]


def _numbered(sec, prefix):
    keys = sorted((k for k in sec if re.fullmatch(prefix + r"\d+", k)),
                  key=lambda k: int(k[len(prefix):]))
    if [int(k[len(prefix):]) for k in keys] != list(range(1, len(keys) + 1)):
        raise ValidationError(prefix, f"{prefix} keys must be numbered 1..N")
    return keys


def _matrix(sec, name):
    if "diag" in sec:
        if _numbered(sec, "row"):
            raise ValidationError(f"{name}.diag", "give diag or rows, not both")
        d = _floats(sec["diag"], f"{name}.diag")
        return tuple(tuple(d[i] if i == j else 0.0 for j in range(len(d))) for i in range(len(d)))
    keys = _numbered(sec, "row")
    if not keys:
        raise ValidationError(name, "matrix required (diag or row1..rowN)")
    rows = tuple(_floats(sec[k], f"{name}.{k}") for k in keys)
    if any(len(r) != len(rows) for r in rows):
        raise ValidationError(name, "matrix must be square")
    return rows


def _line_of(text, section, key=None):
    cur = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.fullmatch(r"\[(.+)\]", line)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return i
        elif key is not None and cur == section:
            k = re.split(r"[=:]", line, 1)[0].strip().lower()
            if k == key:
                return i
    return 0


def _read(text):
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=None,
                                   empty_lines_in_values=False, default_section="\0")
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ParseError(e.lineno, "key outside of a section") from None
    except configparser.DuplicateSectionError as e:
        raise ParseError(e.lineno or 0, f"duplicate section [{e.section}]") from None
    except configparser.DuplicateOptionError as e:
        raise ParseError(e.lineno or 0, f"duplicate key {e.option!r}") from None
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] if e.errors else 0
        raise ParseError(lineno, "expected 'key = value'") from None
    for name in cp.sections():
        if name not in _KEYS:
            raise ParseError(_line_of(text, name), f"unknown section [{name}]")
        fixed, pattern = _KEYS[name]
        for key in cp[name]:
            if key not in fixed and not (pattern and re.fullmatch(pattern, key)):
                raise ParseError(_line_of(text, name, key), f"unknown key {key!r} in [{name}]")
    return cp


def parse_config(text):
    """Parse and validate configuration text into a :class:`RunConfig`."""
    cp = _read(text)
    cfg = RunConfig()
    has_q, has_p = cp.has_section("quadric"), cp.has_section("paraboloid")
    if has_q == has_p:
        raise ValidationError("quadric", "exactly one of [quadric] or [paraboloid] is required")
    if not cp.has_section("surface"):
        raise ValidationError("surface", "[surface] section is required")

    sec = cp["surface"]
    for req in ("kind", "n"):
        if req not in sec:
            raise ValidationError(f"surface.{req}", "required")
    surf = {"kind": sec["kind"].strip().lower(), "n": _int(sec["n"], "surface.n")}
    for key in ("margin", "half_length", "height"):
        if key in sec:
            surf[key] = _float(sec[key], f"surface.{key}")
    for key in ("lo", "hi"):
        if key in sec:
            surf[key] = _floats(sec[key], f"surface.{key}")
    terms = []
    for key in _numbered(sec, "term"):
        v = _floats(sec[key], f"surface.{key}")
        if len(v) != surf["n"]:
            raise ValidationError(f"surface.{key}", "expected n-1 exponents and a coefficient")
        exps = v[:-1]
        if any(e != int(e) for e in exps):
            raise ValidationError(f"surface.{key}", "exponents must be integers")
        terms.append((tuple(int(e) for e in exps), v[-1]))
    if terms:
        surf["terms"] = tuple(terms)
    cfg.surface = surf

    if has_q:
        cfg.quadric = _matrix(cp["quadric"], "quadric")
    else:
        sec = cp["paraboloid"]
        p = {}
        for req in ("n", "k"):
            if req not in sec:
                raise ValidationError(f"paraboloid.{req}", "required")
            p[req] = _int(sec[req], f"paraboloid.{req}")
        p["a"] = _matrix(sec, "paraboloid")
        if "b" not in sec:
            raise ValidationError("paraboloid.b", "b required, nonzero")
        p["b"] = _floats(sec["b"], "paraboloid.b")
        cfg.paraboloid = p

    n = cfg.surface["n"]
    kw = {"region_lo": (-2.0,) * n, "region_hi": (2.0,) * n}
    if cp.has_section("scan"):
        sec = cp["scan"]
        for key in ("region_lo", "region_hi"):
            if key in sec:
                kw[key] = _floats(sec[key], f"scan.{key}")
        if "t_min" in sec:
            kw["t_min"] = _float(sec["t_min"], "scan.t_min")
        for key in ("samples", "seed", "starts"):
            if key in sec:
                kw[key] = _int(sec[key], f"scan.{key}")
    cfg.scan = ScanSpec(**kw)

    if cp.has_section("phantom"):
        sec = cp["phantom"]
        blobs = []
        for key in _numbered(sec, "blob"):
            parts = [v.strip() for v in sec[key].split(",")]
            kind = parts[0].lower()
            if kind not in ("gaussian", "disk"):
                raise ValidationError(f"phantom.{key}", "blob kind must be gaussian or disk")
            vals = _floats(",".join(parts[1:]), f"phantom.{key}")
            if len(vals) != cfg.surface["n"] + 2:
                raise ValidationError(f"phantom.{key}", "expected kind, n center coordinates, size, amplitude")
            blobs.append((kind, vals[:-2], vals[-2], vals[-1]))
        cfg.phantom = tuple(blobs)

    if cp.has_section("grid"):
        sec = cp["grid"]
        try:
            cfg.grid = GridSpec(origin=_floats(sec["origin"], "grid.origin"),
                                spacing=_float(sec["spacing"], "grid.spacing"),
                                dims=_ints(sec["dims"], "grid.dims"))
        except KeyError as e:
            raise ValidationError(f"grid.{e.args[0]}", "required") from None

    if cp.has_section("sinogram"):
        sec = cp["sinogram"]
        try:
            cfg.sinogram = SinogramSpec(
                centers_lo=_floats(sec["centers_lo"], "sinogram.centers_lo"),
                centers_hi=_floats(sec["centers_hi"], "sinogram.centers_hi"),
                n_centers=_ints(sec["n_centers"], "sinogram.n_centers"),
                t_min=_float(sec["t_min"], "sinogram.t_min"),
                t_max=_float(sec["t_max"], "sinogram.t_max"),
                n_t=_int(sec["n_t"], "sinogram.n_t"),
                density=_int(sec.get("density", "512"), "sinogram.density"))
        except KeyError as e:
            raise ValidationError(f"sinogram.{e.args[0]}", "required") from None

    if cp.has_section("source"):
        sec = cp["source"]
        if "x" not in sec or "xi" not in sec:
            raise ValidationError("source", "x and xi are required")
        cfg.source = {"x": _floats(sec["x"], "source.x"), "xi": _floats(sec["xi"], "source.xi")}

    if cp.has_section("artifacts"):
        sec = cp["artifacts"]
        for key in ("threshold", "hit_radius"):
            if key in sec:
                cfg.artifacts[key] = _float(sec[key], f"artifacts.{key}")

    if cp.has_section("input"):
        cfg.inputs = {k: v.strip() for k, v in cp["input"].items()}

    validate(cfg)
    return cfg


def validate(cfg):
    """Semantic checks; domain constructors are run and their errors mapped."""
    n = cfg.surface["n"]
    try:
        cfg.center_surface()
        fam = cfg.family()
    except Singular as e:
        raise ValidationError("Singular", str(e)) from None
    except NotSymmetric as e:
        raise ValidationError("NotSymmetric", str(e)) from None
    except BadParaboloid as e:
        raise ValidationError("paraboloid.b" if "b " in str(e) else "paraboloid", str(e)) from None
    except (UnknownKind, BadDomain) as e:
        raise ValidationError("surface", str(e)) from None
    except QuadradonError as e:
        raise ValidationError("geometry", str(e)) from None
    if fam.n != n:
        raise ValidationError("surface.n", "surface and family dimensions differ")
    sc = cfg.scan
    if not 0 <= sc.seed <= U64_MAX:
        raise ValidationError("scan.seed", "seed must be a 64-bit unsigned integer")
    if len(sc.region_lo) != n or len(sc.region_hi) != n:
        raise ValidationError("scan.region_lo", f"region bounds need {n} entries")
    if any(a >= b for a, b in zip(sc.region_lo, sc.region_hi)):
        raise ValidationError("scan.region_lo", "empty region")
    if sc.samples < 1 or sc.starts < 1:
        raise ValidationError("scan.samples", "counts must be positive")
    for _, c, size, amp in cfg.phantom:
        if len(c) != n or size <= 0:
            raise ValidationError("phantom", "blob center must have n entries and size > 0")
    if cfg.grid is not None:
        g = cfg.grid
        if len(g.origin) != n or len(g.dims) != n or g.spacing <= 0 or min(g.dims) < 2:
            raise ValidationError("grid", "grid needs n-dimensional origin/dims, spacing > 0, dims >= 2")
    if cfg.sinogram is not None:
        s = cfg.sinogram
        m = n - 1
        if len(s.centers_lo) != m or len(s.centers_hi) != m or len(s.n_centers) != m:
            raise ValidationError("sinogram", f"center bounds need {m} entries")
        if min(s.n_centers) < 1 or s.n_t < 1 or s.density < 8:
            raise ValidationError("sinogram", "counts must be positive and density >= 8")
        if s.t_max < s.t_min:
            raise ValidationError("sinogram.t_max", "t_max < t_min")
    if cfg.source is not None:
        if len(cfg.source["x"]) != n or len(cfg.source["xi"]) != n:
            raise ValidationError("source", f"x and xi need {n} entries")
        if not any(cfg.source["xi"]):
            raise ValidationError("source.xi", "covector must be nonzero")
    return cfg


def _fmt(values):
    return ", ".join(repr(float(v)) if isinstance(v, float) else str(v) for v in values)


def _emit_matrix(lines, rows):
    for i, r in enumerate(rows, 1):
        lines.append(f"row{i} = {_fmt(r)}")


def emit(cfg):
    """Canonical text form of ``cfg``; floats use shortest round-trip repr."""
    lines = []
    if cfg.quadric is not None:
        lines.append("[quadric]")
        _emit_matrix(lines, cfg.quadric)
    else:
        p = cfg.paraboloid
        lines += ["[paraboloid]", f"n = {p['n']}", f"k = {p['k']}"]
        _emit_matrix(lines, p["a"])
        lines.append(f"b = {_fmt(p['b'])}")
    s = cfg.surface
    lines += ["", "[surface]", f"kind = {s['kind']}", f"n = {s['n']}"]
    for key in ("margin", "half_length", "height"):
        if key in s:
            lines.append(f"{key} = {s[key]!r}")
    for key in ("lo", "hi"):
        if key in s:
            lines.append(f"{key} = {_fmt(s[key])}")
    for i, (exps, c) in enumerate(s.get("terms", ()), 1):
        lines.append(f"term{i} = {_fmt(tuple(exps) + (c,))}")
    sc = cfg.scan
    lines += ["", "[scan]", f"region_lo = {_fmt(sc.region_lo)}", f"region_hi = {_fmt(sc.region_hi)}",
              f"t_min = {sc.t_min!r}", f"samples = {sc.samples}", f"seed = {sc.seed}",
              f"starts = {sc.starts}"]
    if cfg.phantom:
        lines += ["", "[phantom]"]
        for i, (kind, c, size, amp) in enumerate(cfg.phantom, 1):
            lines.append(f"blob{i} = {kind}, {_fmt(tuple(c) + (size, amp))}")
    if cfg.grid is not None:
        g = cfg.grid
        lines += ["", "[grid]", f"origin = {_fmt(g.origin)}", f"spacing = {g.spacing!r}",
                  f"dims = {_fmt(g.dims)}"]
    if cfg.sinogram is not None:
        sg = cfg.sinogram
        lines += ["", "[sinogram]"]
        for f in fields(sg):
            v = getattr(sg, f.name)
            lines.append(f"{f.name} = {_fmt(v) if isinstance(v, tuple) else repr(v)}")
    if cfg.source is not None:
        lines += ["", "[source]", f"x = {_fmt(cfg.source['x'])}", f"xi = {_fmt(cfg.source['xi'])}"]
    lines += ["", "[artifacts]"] + [f"{k} = {v!r}" for k, v in sorted(cfg.artifacts.items())]
    if cfg.inputs:
        lines += ["", "[input]"] + [f"{k} = {v}" for k, v in sorted(cfg.inputs.items())]
    return "\n".join(lines) + "\n"
