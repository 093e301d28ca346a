"""Command-line front end: ``mixedgreen solve | green | verify``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.  Failures are
reported on stderr as one JSON object ``{"error", "message", "exit_code"}``.
All files are written atomically; floats carry 17 significant digits.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import green as gr
from .bogovskii import BogovskiiOperator, build_chain, solve_div
from .fem import RESIDUAL_TOL, FESpace, Field, IncompatibleDataError, SolverError, assemble, solve
from .geometry import GeometryError, ahlfors_david_check, domain_from_dict, opening_check
from .mesh import MeshError, refine, triangulate
from .reporting import dumps, input_hash, write_csv, write_json
from .verifiers import korn_constant, poincare_sobolev_check, rigid_rotation

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
GREEN_CHECKS = ("symmetry", "logbound", "weakl2", "holder", "representation", "gradnorm")
VERIFY_CHECKS = ("ahlfors_david", "opening", "korn", "poincare_sobolev", "bogovskii")
DEFAULTS = {"mesh_h": 1.0 / 16, "refine": 0, "seed": 0, "out": "mixedgreen-out", "check": None, "loads": None, "probes": None}


class InputError(ValueError):
    """Invalid command-line input (bad file, bad JSON, unknown option value)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


# ------------------------------------------------------------------ inputs
def _read_text(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def _parse_json(text, what):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {what}: {exc}") from None


def shipped_domains():
    """Names of the example domains bundled with the package."""
    root = resources.files("mixedgreen") / "data" / "domains"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def read_domain(ref):
    """Domain file path or bundled name -> (text, spec dict, domain, decomposition)."""
    p = Path(ref)
    if not p.exists() and ref in shipped_domains():
        text = (resources.files("mixedgreen") / "data" / "domains" / f"{ref}.json").read_text()
    else:
        text = _read_text(ref)
    spec = _parse_json(text, ref)
    if not isinstance(spec, dict):
        raise InputError("domain file must hold a JSON object")
    try:
        dom, dec = domain_from_dict(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid domain: {exc}") from None
    return text, spec, dom, dec


_NAMES = {
    "pi": np.pi, "e": np.e, "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "sinh": np.sinh, "cosh": np.cosh,
    "tanh": np.tanh, "arctan2": np.arctan2, "where": np.where, "minimum": np.minimum,
    "maximum": np.maximum,
}


def _expr(src, normal=False):
    """Compile a scalar expression in ``x, y`` (and ``nx, ny`` for tractions)."""
    if isinstance(src, (int, float)) and not isinstance(src, bool):
        c = float(src)
        return lambda p, n=None: np.full(len(p), c)
    if not isinstance(src, str):
        raise InputError(f"load component must be a number or an expression string, got {src!r}")
    try:
        code = compile(src, "<load>", "eval")
    except SyntaxError as exc:
        raise InputError(f"bad load expression {src!r}: {exc.msg}") from None
    allowed = set(_NAMES) | {"x", "y"} | ({"nx", "ny"} if normal else set())
    bad = set(code.co_names) - allowed
    if bad:
        raise InputError(f"unknown names in load expression {src!r}: {sorted(bad)}")

    def fn(p, n=None):
        env = {"x": p[:, 0], "y": p[:, 1]}
        if n is not None:
            env.update(nx=n[:, 0], ny=n[:, 1])
        v = eval(code, {"__builtins__": {}}, {**_NAMES, **env})
        return np.broadcast_to(np.asarray(v, dtype=float), (len(p),)).copy()

    return fn


def _nodal(space, values, shape):
    """P1 interpolant of per-vertex data as a callable (and its gradient)."""
    v = np.asarray(values, dtype=float)
    n = space.n_vertices
    if v.shape != (n,) + shape:
        raise InputError(f"nodal load must have shape {(n,) + shape}, got {v.shape}")
    cols = [v] if shape == () else [v[:, k] for k in range(shape[0])]
    fields = [Field(space, c, "pressure") for c in cols]
    if shape == ():
        return (lambda p: fields[0](p)), (lambda p: fields[0].gradient(p))
    return (lambda p: np.column_stack([f(p) for f in fields])), None


def _vector(src, normal=False):
    if not isinstance(src, (list, tuple)) or len(src) != 2:
        raise InputError("vector loads need two components")
    c0, c1 = _expr(src[0], normal), _expr(src[1], normal)
    if normal:
        return lambda p, n: np.column_stack([c0(p, n), c1(p, n)])
    return lambda p: np.column_stack([c0(p), c1(p)])


MANUFACTURED = "trig"


def manufactured_solution():
    """Smooth exact pair with ``div u = 0``: ``u = (sin πx sin πy, cos πx cos πy)``, ``p = sin πx``."""
    pi = np.pi

    def u(x):
        return np.column_stack([np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1]), np.cos(pi * x[:, 0]) * np.cos(pi * x[:, 1])])

    def grad_u(x):
        X, Y = x[:, 0], x[:, 1]
        g = np.array([
            [pi * np.cos(pi * X) * np.sin(pi * Y), pi * np.sin(pi * X) * np.cos(pi * Y)],
            [-pi * np.sin(pi * X) * np.cos(pi * Y), -pi * np.cos(pi * X) * np.sin(pi * Y)],
        ])
        return g.transpose(2, 0, 1)

    def p(x):
        return np.sin(pi * x[:, 0])

    def f(x):
        # -div(2ε(u)) + ∇p = -Δu + ∇p since div u = 0
        return 2 * pi**2 * u(x) + np.column_stack([pi * np.cos(pi * x[:, 0]), 0 * x[:, 0]])

    def f_N(x, n):
        G = grad_u(x)
        return np.einsum("nij,nj->ni", G + G.transpose(0, 2, 1), n) - p(x)[:, None] * n

    return {"u": u, "grad_u": grad_u, "p": p, "f": f, "f_N": f_N, "f_D": u}


def build_loads(space, spec):
    """Load spec dict -> keyword arguments of :func:`fem.assemble`."""
    if spec is None:
        return {}
    if not isinstance(spec, dict):
        raise InputError("load spec must be a JSON object")
    unknown = set(spec) - {"f", "g", "f_N", "f_D", "grad_g", "manufactured", "description"}
    if unknown:
        raise InputError(f"unknown load keys: {sorted(unknown)}")
    if spec.get("manufactured"):
        if spec["manufactured"] != MANUFACTURED:
            raise InputError(f"unknown manufactured solution {spec['manufactured']!r}")
        m = manufactured_solution()
        return {"f": m["f"], "f_N": m["f_N"], "f_D": m["f_D"]}
    out = {}
    for key in ("f", "f_D"):
        if key in spec:
            v = spec[key]
            out[key] = _nodal(space, v["nodal"], (2,))[0] if isinstance(v, dict) else _vector(v)
    if "f_N" in spec:
        if isinstance(spec["f_N"], dict):
            raise InputError("f_N must be given by expressions")
        out["f_N"] = _vector(spec["f_N"], normal=True)
    if "g" in spec:
        v = spec["g"]
        if isinstance(v, dict):
            out["g"], out["grad_g"] = _nodal(space, v["nodal"], ())
        else:
            gfn = _expr(v)
            out["g"] = lambda p: gfn(p)
    if "grad_g" in spec:
        out["grad_g"] = _vector(spec["grad_g"])
    return out


# ------------------------------------------------------------------- meshes
def make_mesh(dom, dec, h, n_refine):
    mesh = triangulate(dom, dec, h)
    for _ in range(n_refine):
        mesh = refine(mesh)
    return mesh


def mesh_info(mesh):
    return {"h": mesh.h, "n_nodes": mesh.n_nodes, "n_triangles": mesh.n_triangles, "min_angle": mesh.min_angle}


def _base_report(command, args, texts):
    return {
        "command": command,
        "input_hash": input_hash(command, *texts, dumps(_arg_record(args))),
        "parameters": _arg_record(args),
        "tolerances": {"residual": RESIDUAL_TOL},
    }


def _arg_record(args):
    return {k: args[k] for k in ("mesh_h", "refine", "seed", "check") if k in args}


def field_rows(u, p):
    xy = u.space.mesh.nodes
    uv = u.nodal_values()
    pv = p.nodal_values()
    return [(float(a), float(b), float(c), float(d), float(e)) for (a, b), (c, d), e in zip(xy, uv, pv)]


# ---------------------------------------------------------------- commands
def cmd_solve(args):
    text, _, dom, dec = read_domain(args["domain"])
    load_text = _read_text(args["loads"]) if args.get("loads") else ""
    load_spec = _parse_json(load_text, args["loads"]) if load_text else None
    out = Path(args["out"])
    report = _base_report("solve", args, [text, load_text])
    report["domain"] = {"n_edges": dom.n_edges, "M": dom.M, "R0": dom.R0, "area": dom.area}
    manufactured = bool(load_spec and load_spec.get("manufactured"))

    if manufactured:
        m = manufactured_solution()
        mesh = triangulate(dom, dec, args["mesh_h"])
        levels = max(int(args["refine"]), 1)
        table = []
        for k in range(levels + 1):
            if k:
                mesh = refine(mesh)
            space = FESpace(mesh)
            u, p = solve(assemble(space, **build_loads(space, load_spec)))
            w = space.quad_weights
            eu = u.grad_at_quadrature() - space.quad_values(m["grad_u"], (2, 2))
            e0 = u.at_quadrature() - space.quad_values(m["u"], (2,))
            # the pressure is unique when N is nonempty; otherwise compare mean-free parts
            ep = p.at_quadrature() - space.quad_values(m["p"], ())
            if not space.has_neumann:
                ep = ep - np.sum(w * ep) / w.sum()
            row = {
                "h": mesh.h,
                "n_triangles": mesh.n_triangles,
                "n_unknowns": space.n_velocity + space.n_pressure,
                "velocity_H1_error": float(np.sqrt(np.sum(w * (np.sum(eu**2, axis=(2, 3)) + np.sum(e0**2, axis=2))))),
                "pressure_L2_error": float(np.sqrt(np.sum(w * ep**2))),
                "residual_velocity": u.residuals[0],
                "residual_pressure": u.residuals[1],
            }
            if table:
                prev = table[-1]
                ratio = prev["h"] / row["h"]
                row["rate_velocity"] = float(np.log(prev["velocity_H1_error"] / row["velocity_H1_error"]) / np.log(ratio))
                row["rate_pressure"] = float(np.log(prev["pressure_L2_error"] / row["pressure_L2_error"]) / np.log(ratio))
            table.append(row)
        cols = ["h", "n_triangles", "n_unknowns", "velocity_H1_error", "pressure_L2_error", "rate_velocity", "rate_pressure"]
        write_csv(out / "convergence.csv", cols, [[r.get(c, float("nan")) for c in cols] for r in table])
        report["convergence"] = table
    else:
        mesh = make_mesh(dom, dec, args["mesh_h"], int(args["refine"]))
        space = FESpace(mesh)
        u, p = solve(assemble(space, **build_loads(space, load_spec)))

    report["mesh"] = mesh_info(mesh)
    report["unknowns"] = {"velocity": space.n_velocity, "pressure": space.n_pressure}
    report["residuals"] = {"velocity": u.residuals[0], "pressure": u.residuals[1]}
    report["pressure_normalization"] = "pinned, zero mean" if not space.has_neumann else "unique"
    write_csv(out / "field.csv", ["x", "y", "u1", "u2", "p"], field_rows(u, p))
    write_json(out / "report.json", report)
    return report


def _default_points(dom, h, k=5):
    """Deterministic interior grid points at least ``max(4h, 0.15 d)`` from the boundary."""
    minx, miny, maxx, maxy = dom.polygon.bounds
    gx, gy = np.meshgrid(np.linspace(minx, maxx, 2 * k + 1)[1:-1], np.linspace(miny, maxy, 2 * k + 1)[1:-1])
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    ok = dom.contains(pts, closed=False)
    pts = pts[ok]
    dist = dom.distance_to_boundary(pts)
    keep = pts[dist >= max(4 * h, 0.15 * dom.diameter)]
    return keep if len(keep) else pts[np.argsort(-dist)[:1]]


def _probe_spec(args, dom, h):
    spec = {}
    text = ""
    if args.get("probes"):
        text = _read_text(args["probes"])
        spec = _parse_json(text, args["probes"])
        if not isinstance(spec, dict):
            raise InputError("probe spec must be a JSON object")
    pts = _default_points(dom, h)
    centre = pts[np.argmin(np.linalg.norm(pts - pts.mean(axis=0), axis=1))]
    if "poles" in spec:
        poles = np.asarray(spec["poles"], dtype=float).reshape(-1, 2)
    else:
        poles = pts[np.linspace(0, len(pts) - 1, min(5, len(pts))).astype(int)]
    if "pairs" in spec:
        pairs = np.asarray(spec["pairs"], dtype=float).reshape(-1, 2, 2)
    else:
        D = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        i, j = np.unravel_index(np.argmax(D), D.shape)
        pairs = np.array([[pts[i], pts[j]]])
    probes = np.asarray(spec.get("probes", pts[:: max(1, len(pts) // 4)][:4]), dtype=float).reshape(-1, 2)
    pole = np.asarray(spec.get("pole", centre), dtype=float)
    for name, arr in (("poles", poles), ("probes", probes), ("pole", pole[None]), ("pairs", pairs.reshape(-1, 2))):
        if not np.all(dom.contains(arr, closed=False)):
            raise InputError(f"{name} must lie inside the domain")
    return text, {"poles": poles, "pairs": pairs, "probes": probes, "pole": pole, "load": spec.get("load")}


def _bump(c, s):
    c = np.asarray(c, dtype=float)
    return lambda p: np.exp(-np.sum((p - c) ** 2, axis=1) / s**2)


def _representation(space, probes, dom):
    """Direct solve vs Green quadrature for a pure-f and a pure-g load."""
    c = dom.polygon.centroid.coords[0]
    s = 0.2 * dom.diameter
    b = _bump(c, s)
    g_grad = lambda p: (-2 * (p - np.asarray(c)) / s**2) * b(p)[:, None]
    loads = {
        "pure_f": {"f": lambda p: np.column_stack([b(p), -0.5 * b(p)])},
        "pure_g": {"g": b, "grad_g": g_grad},
    }
    cols = [gr.green_columns(space, x) for x in probes]
    out = {}
    for name, ld in loads.items():
        u, _ = solve(assemble(space, **ld))
        rep = gr.representation_solve(space, cols, **ld)
        direct = u(probes)
        moll = np.array([gr.mollified_value(u, x, cc[0].rho) for x, cc in zip(probes, cols)])
        rel = float(np.linalg.norm(rep - direct) / max(np.linalg.norm(direct), 1e-300))
        out[name] = {
            "probes": probes.tolist(),
            "direct": direct.tolist(),
            "representation": rep.tolist(),
            "relative_l2": rel,
            "mollified_identity_defect": float(np.abs(rep - moll).max()),
            "pass": bool(rel <= 0.05),
        }
    return out


def cmd_green(args):
    text, _, dom, dec = read_domain(args["domain"])
    checks = _checks(args, GREEN_CHECKS, default=("symmetry", "logbound"))
    mesh = make_mesh(dom, dec, args["mesh_h"], int(args["refine"]))
    space = FESpace(mesh)
    probe_text, ps = _probe_spec(args, dom, mesh.h)
    out = Path(args["out"])
    report = _base_report("green", args, [text, probe_text])
    report["mesh"] = mesh_info(mesh)
    report["checks"] = {}
    sweep = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if "symmetry" in checks:
            rows = []
            for x, y in ps["pairs"]:
                r = gr.symmetry_probe(space, x, y)
                rows.append(r)
                for a, b, G in ((x, y, r["G_xy"]), (y, x, r["G_yx"])):
                    cols = gr.green_columns(space, a)
                    _, Pi = gr.evaluate_green(cols, b)
                    sweep.append(gr.GreenSample(np.asarray(a), np.asarray(b), np.asarray(G), Pi[0]).row())
            write_csv(out / "symmetry.csv", ["x1", "x2", "y1", "y2", "r", "defect", "relative"],
                      [[*r["x"], *r["y"], r["r"], r["defect"], r["relative"]] for r in rows])
            report["checks"]["symmetry"] = {
                "pairs": [{k: r[k] for k in ("x", "y", "r", "defect", "relative")} for r in rows],
                "max_relative": max(r["relative"] for r in rows),
                "pass": bool(max(r["relative"] for r in rows) <= 0.05),
            }
        if "logbound" in checks:
            lb = gr.log_bound_fit(dom, dec, ps["pole"], args["mesh_h"], mesh=None)
            sweep.extend(lb.pop("rows"))
            write_csv(out / "logbound.csv", ["r", "max_abs_G"], list(zip(lb["radii"], lb["max_abs_G"])))
            lb["pass"] = bool(lb["r2"] >= 0.95 and 0.04 <= lb["slope"] <= 0.16)
            report["checks"]["logbound"] = lb
        if "weakl2" in checks:
            w = gr.weak_l2_norms(space, ps["poles"])
            g = [e["grad_G"] for e in w]
            p = [e["Pi"] for e in w]
            report["checks"]["weakl2"] = {
                "poles": w,
                "ratio_grad_G": max(g) / min(g),
                "ratio_Pi": max(p) / min(p),
                "pass": bool(max(g) / min(g) <= 3 and max(p) / min(p) <= 3),
            }
        if "holder" in checks:
            cols = gr.green_columns(space, ps["pole"])
            hf = gr.holder_fit(cols, dom, seed=int(args["seed"]))
            hf["pass"] = bool(hf["gamma"] >= 0.1)
            report["checks"]["holder"] = hf
        if "gradnorm" in checks:
            cols = gr.green_columns(space, ps["pole"])
            v = gr.green_grad_norm(cols)
            report["checks"]["gradnorm"] = {"q": 2.2, "value": v, "pass": bool(np.isfinite(v))}
        if "representation" in checks:
            rep = _representation(space, ps["probes"], dom)
            rep["pass"] = all(v["pass"] for v in rep.values())
            report["checks"]["representation"] = rep
    report["warnings"] = sorted({str(w.message) for w in caught})
    report["pass"] = all(c["pass"] for c in report["checks"].values())
    write_csv(out / "green_sweep.csv", gr.SWEEP_COLUMNS, sweep)
    write_json(out / "green_report.json", report)
    return report


def _checks(args, known, default):
    raw = args.get("check")
    if not raw:
        return tuple(default)
    names = raw if isinstance(raw, (list, tuple)) else [c.strip() for c in str(raw).split(",") if c.strip()]
    bad = [c for c in names if c not in known]
    if bad:
        raise InputError(f"unknown check(s) {bad}; choose from {list(known)}")
    return tuple(names)


def cmd_verify(args):
    text, _, dom, dec = read_domain(args["domain"])
    checks = _checks(args, VERIFY_CHECKS, default=VERIFY_CHECKS)
    out = Path(args["out"])
    report = _base_report("verify", args, [text])
    mesh = make_mesh(dom, dec, args["mesh_h"], int(args["refine"]))
    space = FESpace(mesh)
    report["mesh"] = mesh_info(mesh)
    res = {}
    if "ahlfors_david" in checks:
        try:
            res["ahlfors_david"] = ahlfors_david_check(dom, dec)
        except GeometryError as exc:
            res["ahlfors_david"] = {"check": "ahlfors_david", "pass": False, "hypothesis": str(exc)}
    if "opening" in checks:
        oc = opening_check(dom, dec)
        if not oc["pass"]:
            oc["hypothesis"] = ", ".join(k + " fails" for k, lab in (("DOpen", "D_open"), ("NOpen", "N_open")) if not oc[lab])
        res["opening"] = oc
    if "korn" in checks:
        k = korn_constant(space, seed=int(args["seed"]))
        k.pop("minimizer", None)
        w = rigid_rotation(space).coef
        # the rotation has zero symmetric gradient; it is admissible only when D is degenerate
        k["rigid_rotation_energy"] = float(w @ (space.stiffness_eps @ w))
        res["korn"] = k
    if "poincare_sobolev" in checks:
        R0 = dom.R0
        centers = _default_points(dom, mesh.h, k=2)[:3]
        pc = poincare_sobolev_check(space, centers, [R0 / 2, R0 / 4], seed=int(args["seed"]))
        pc["per_scale"] = [{"r": r, "ratio": v} for r, v in pc["per_scale"].items()]
        pc.pop("entries")
        res["poincare_sobolev"] = pc
    if "bogovskii" in checks:
        try:
            chain = build_chain(dom, dec)
            op = BogovskiiOperator(space, chain)
            rng = np.random.default_rng(int(args["seed"]))
            runs = []
            for k in range(3):
                a = rng.standard_normal(4)
                f = lambda p, a=a: a[0] + a[1] * np.sin(np.pi * p[:, 0]) + a[2] * np.cos(np.pi * p[:, 1]) + a[3] * p[:, 0] * p[:, 1]
                _, info = solve_div(space, f=f, operator=op)
                runs.append({key: info[key] for key in ("residual", "d_trace", "stability", "n_flux")})
            res["bogovskii"] = {
                "check": "bogovskii",
                "n_domains": len(chain),
                "runs": runs,
                "max_residual": max(r["residual"] for r in runs),
                "max_d_trace": max(r["d_trace"] for r in runs),
                "pass": bool(max(r["residual"] for r in runs) <= 1e-8 and max(r["d_trace"] for r in runs) <= 1e-12),
            }
        except GeometryError as exc:
            res["bogovskii"] = {"check": "bogovskii", "pass": False, "hypothesis": str(exc)}
    report["checks"] = res
    report["failed"] = sorted(k for k, v in res.items() if not v["pass"])
    report["pass"] = not report["failed"]
    write_json(out / "verify_report.json", report)
    return report


COMMANDS = {"solve": cmd_solve, "green": cmd_green, "verify": cmd_verify}


def build_parser():
    p = _Parser(prog="mixedgreen", description="Mixed Dirichlet/traction Stokes numerical laboratory")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name, help_ in (("solve", "solve the mixed problem"), ("green", "Green-function sweeps"),
                        ("verify", "consolidated hypothesis and inequality checks")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--domain", help="domain JSON file or bundled name")
        s.add_argument("--mesh-h", dest="mesh_h", type=float)
        s.add_argument("--refine", type=int, help="uniform refinements (solve: levels of the convergence table)")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--check", help="comma-separated check names")
        s.add_argument("--config", help="JSON file with any of the options above")
        if name == "solve":
            s.add_argument("--loads", help="load spec JSON")
        if name == "green":
            s.add_argument("--probes", help="probe spec JSON")
    return p


def resolve_args(ns):
    """Merge defaults, an optional JSON config and explicit flags (flags win)."""
    args = dict(DEFAULTS)
    if ns.config:
        cfg = _parse_json(_read_text(ns.config), ns.config)
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = set(cfg) - set(DEFAULTS) - {"domain"}
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        args.update(cfg)
    for k, v in vars(ns).items():
        if v is not None and k not in ("config", "command"):
            args[k] = v
    if not args.get("domain"):
        raise InputError("--domain is required")
    try:
        args["mesh_h"] = float(args["mesh_h"])
        args["refine"] = int(args["refine"])
        args["seed"] = int(args["seed"])
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad numeric option: {exc}") from None
    if not args["mesh_h"] > 0 or args["refine"] < 0:
        raise InputError("--mesh-h must be positive and --refine non-negative")
    return args


def _fail(kind, message, code):
    sys.stderr.write(dumps({"error": kind, "message": message, "exit_code": code}, indent=0).replace("\n", " ").strip() + "\n")
    return code


def main(argv=None):
    try:
        ns = build_parser().parse_args(argv)
        if ns.command is None:
            raise InputError("a command is required: solve, green or verify")
        args = resolve_args(ns)
        report = COMMANDS[ns.command](args)
    except (InputError, GeometryError, IncompatibleDataError, MeshError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_INPUT)
    except (SolverError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_NUMERICAL)
    sys.stdout.write(dumps({"command": ns.command, "out": str(args["out"]), "pass": report.get("pass", True)}, indent=0).replace("\n", " ").strip() + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
