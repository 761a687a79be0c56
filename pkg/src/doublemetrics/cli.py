"""Batch command-line front end.

Every subcommand reads JSON inputs, validates them, runs one computation and
emits a RunReport (JSON) with a checklist of asserted invariants.

Exit codes: 0 all checks pass, 1 a check failed, 2 unknown subcommand or bad
usage, 3 malformed input.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as dio
from .algebra import EquivalenceConfig, compose, coarse_equivalent, distortion_profile, idempotent_defect, sandwich_check, star
from .euclid import PartialIsometry, PolarGrid, chi_euclid, default_radii, planar_directions, psi_euclid, _angle
from .generators import random_cross, random_space
from .rays import RayConfig
from .spaces import InvalidMetricError, check_cross, check_space, subset_metric
from .sphi import PhiSet, block_idempotents, enumerate_sphi, pb_semigroup
from .trees import RootedTree, chi_tree, corollary_check, psi_tree, transport_distortion, word_label

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_MALFORMED = 0, 1, 2, 3

SUBCOMMANDS = (
    "validate", "compose", "star", "idempotent", "subset-metric", "profile",
    "equivalence", "sphi-enumerate", "tree-chi", "tree-psi", "tree-roundtrip",
    "euclid-chi", "euclid-psi", "euclid-roundtrip", "corollary-check",
)

DEFAULT_DEPTH = 8
DEFAULT_RMAX = 1000.0


@dataclass
class RunReport:
    subcommand: str
    inputs_digest: str
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    duration_s: float = 0.0
    artifacts: dict = field(default_factory=dict, repr=False)

    def check(self, name: str, passed: bool, detail=None) -> bool:
        entry = {"name": name, "passed": bool(passed)}
        if detail is not None:
            entry["detail"] = detail
        self.checks.append(entry)
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def payload(self) -> dict:
        """The deterministic part of the report."""
        return {
            "subcommand": self.subcommand,
            "inputs_digest": self.inputs_digest,
            "results": self.results,
            "checks": self.checks,
            "passed": self.passed,
        }

    def to_dict(self) -> dict:
        return {**self.payload(), "duration_s": round(self.duration_s, 6)}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="doublemetrics", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", help=", ".join(SUBCOMMANDS))
    p.add_argument("--input", help="primary JSON input")
    p.add_argument("--input2", help="secondary JSON input")
    p.add_argument("--out", help="report path (stdout if omitted)")
    p.add_argument("--config", help="JSON config (flags take precedence)")
    p.add_argument("--seed", type=int, help="generate a random fixture instead of reading --input")
    p.add_argument("--depth", type=int, help="tree truncation depth")
    p.add_argument("--rmax", type=float, help="largest grid radius")
    p.add_argument("--subset", help="comma-separated point labels")
    p.add_argument("--thresholds", help="comma-separated profile thresholds")
    p.add_argument("--divergence-bound", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--angular-tol", type=float)
    return p


def _threads() -> int:
    raw = os.environ.get("WORKBENCH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise dio.MalformedInput("WORKBENCH_THREADS", f"not an integer: {raw!r}") from None
    if n < 1:
        raise dio.MalformedInput("WORKBENCH_THREADS", "must be at least 1")
    return n


def _digest(paths, settings: dict) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(b"\0" if p is None else Path(p).read_bytes())
        h.update(b"\x1e")
    h.update(json.dumps(settings, sort_keys=True).encode())
    return h.hexdigest()


def _settings(args) -> dict:
    """Config file values overridden by explicit flags."""
    cfg = dio.load_json(args.config) if args.config else {}
    if not isinstance(cfg, dict):
        raise dio.MalformedInput(str(args.config), "config must be a JSON object")
    out = {k: cfg[k] for k in ("divergence_bound", "window", "thresholds", "angular_tol", "depth", "rmax", "tail_fraction") if k in cfg}
    for key, flag in (("divergence_bound", args.divergence_bound), ("window", args.window),
                      ("angular_tol", args.angular_tol), ("depth", args.depth), ("rmax", args.rmax)):
        if flag is not None:
            out[key] = flag
    if args.thresholds:
        out["thresholds"] = args.thresholds.split(",")
    try:
        if "thresholds" in out:
            out["thresholds"] = [float(t) for t in out["thresholds"]]
        for k in ("divergence_bound", "angular_tol", "rmax", "tail_fraction"):
            if k in out:
                out[k] = float(out[k])
        for k in ("window", "depth"):
            if k in out:
                out[k] = int(out[k])
    except (TypeError, ValueError) as exc:
        raise dio.MalformedInput(args.config or "flags", f"bad config value ({exc})") from None
    return out


def _ray_config(s: dict) -> RayConfig:
    kw = {k: s[k] for k in ("divergence_bound", "window", "tail_fraction") if k in s}
    return RayConfig(**kw)


def _need(path, flag: str):
    if not path:
        raise UsageError(f"this subcommand needs {flag}")
    return path


def _load_cross(args, path_attr="input"):
    path = getattr(args, path_attr)
    if path is None and args.seed is not None:
        # both seeded inputs share one space so they can be composed
        rng = np.random.default_rng(args.seed)
        space = random_space(rng, int(rng.integers(2, 7)))
        rho = random_cross(rng, space)
        return random_cross(rng, space) if path_attr == "input2" else rho
    return dio.load_cross(_need(path, "--" + path_attr))


def _violations(vs) -> list:
    return [str(v) for v in vs]


def _cross_result(rho) -> dict:
    return {"points": list(rho.space.point_ids), "cross": dio.matrix_out(rho.cross), "min_gap": dio.num(rho.min_gap)}


def cmd_validate(args, s, rep: RunReport):
    doc = dio.load_json(_need(args.input, "--input")) if args.input else None
    if doc is not None and "cross" not in doc and "stages" not in doc:
        space = dio.space_from_dict(doc, args.input, validate=False)
        v = check_space(space.dist)
        rep.results = {"kind": "space", "points": len(space), "violations": _violations(v)}
        rep.check("metric axioms", not v, _violations(v))
        return
    if doc is not None and "stages" in doc:
        fam = dio.family_from_dict(doc, args.input)
        rep.results = {"kind": "family", "stages": len(fam), "scales": [dio.num(x) for x in fam.scales]}
        rep.check("family coherent", True)
        return
    if doc is not None:
        rho = dio.cross_from_dict(doc, Path(args.input).parent, args.input, validate=False)
    else:
        rho = _load_cross(args)
    vs, vc = check_space(rho.space.dist), check_cross(rho.space, rho.cross, rho.min_gap)
    rep.results = {"kind": "cross", "points": len(rho), "violations": _violations(vs + vc)}
    rep.check("metric axioms", not vs, _violations(vs))
    rep.check("cross metric axioms", not vc, _violations(vc))


def cmd_compose(args, s, rep: RunReport):
    rho, sigma = _load_cross(args), _load_cross(args, "input2")
    out = compose(rho, sigma)
    rep.results = _cross_result(out)
    v = check_cross(out.space, out.cross, out.min_gap)
    rep.check("composite is a cross metric", not v, _violations(v))
    lhs, rhs = star(out).cross, compose(star(sigma), star(rho)).cross
    rep.check("(rho o sigma)* = sigma* o rho*", np.array_equal(lhs, rhs))


def cmd_star(args, s, rep: RunReport):
    rho = _load_cross(args)
    out = star(rho)
    rep.results = _cross_result(out)
    rep.check("star is involutive", np.array_equal(star(out).cross, rho.cross))
    rep.check("sandwich rho o rho* o rho >= rho + 2", sandwich_check(rho))


def cmd_idempotent(args, s, rep: RunReport):
    rho = _load_cross(args)
    defect = idempotent_defect(rho)
    rep.results = {"defect": dio.num(defect), "exact_idempotent_shape": defect == 0}
    rep.check("sandwich rho o rho* o rho >= rho + 2", sandwich_check(rho))


def cmd_subset_metric(args, s, rep: RunReport):
    doc = dio.load_json(_need(args.input, "--input"))
    space = dio.space_from_dict(doc.get("space", doc), args.input)
    if not args.subset:
        raise UsageError("subset-metric needs --subset")
    labels = [_coerce_label(x, space.point_ids) for x in args.subset.split(",")]
    try:
        rho = subset_metric(space, labels, by_label=True)
    except KeyError as exc:
        raise dio.MalformedInput("--subset", f"unknown point {exc}") from None
    rep.results = {**_cross_result(rho), "subset": labels, "defect": dio.num(idempotent_defect(rho))}
    v = check_cross(space, rho.cross)
    rep.check("subset metric is a cross metric", not v, _violations(v))
    rep.check("rho_A o rho_A = rho_A + 2", idempotent_defect(rho) == 0)


def _coerce_label(raw: str, ids):
    raw = raw.strip()
    if raw in ids:
        return raw
    for cast in (int, float):
        try:
            v = cast(raw)
        except ValueError:
            continue
        if v in ids:
            return v
    raise dio.MalformedInput("--subset", f"unknown point {raw!r}")


def _families(args):
    f1 = dio.family_from_dict(dio.load_json(_need(args.input, "--input")), args.input)
    f2 = dio.family_from_dict(dio.load_json(_need(args.input2, "--input2")), args.input2)
    return f1, f2


def _profile_rows(fwd, bwd):
    for k, R in enumerate(fwd.scales):
        for j, t in enumerate(fwd.thresholds):
            yield dio.num(R), dio.num(t), dio.num(fwd.values[k, j]), dio.num(bwd.values[k, j])


PROFILE_HEADER = ("scale", "threshold", "phi_forward", "phi_backward")


def cmd_profile(args, s, rep: RunReport):
    f1, f2 = _families(args)
    thr = s.get("thresholds", list(EquivalenceConfig().thresholds))
    fwd, bwd = distortion_profile(f1, f2, thr), distortion_profile(f2, f1, thr)
    rep.results = {"header": list(PROFILE_HEADER), "rows": [list(r) for r in _profile_rows(fwd, bwd)]}
    rep.check("profiles monotone in threshold and scale", fwd.is_monotone() and bwd.is_monotone())
    rep.artifacts["profile.csv"] = dio.csv_text(PROFILE_HEADER, _profile_rows(fwd, bwd))


def cmd_equivalence(args, s, rep: RunReport):
    f1, f2 = _families(args)
    kw = {k: s[k] for k in ("divergence_bound", "window") if k in s}
    if "thresholds" in s:
        kw["thresholds"] = tuple(s["thresholds"])
    verdict = coarse_equivalent(f1, f2, EquivalenceConfig(**kw))
    rep.results = json.loads(dio.dump_json(verdict.to_dict()))
    rep.check("profiles monotone in threshold and scale", verdict.forward.is_monotone() and verdict.backward.is_monotone())
    rep.artifacts["profile.csv"] = dio.csv_text(PROFILE_HEADER, _profile_rows(verdict.forward, verdict.backward))


def cmd_sphi_enumerate(args, s, rep: RunReport):
    doc = dio.load_json(_need(args.input, "--input"))
    try:
        n = int(doc["n"])
        blocks = [[int(x) for x in b] for b in doc["phi"]]
        S = pb_semigroup(n)
        phi = PhiSet(S, block_idempotents(n, blocks))
    except (KeyError, TypeError, ValueError) as exc:
        raise dio.MalformedInput(args.input, f"bad S_Phi input ({exc})") from None
    en = enumerate_sphi(S, phi)
    classes = en.classes
    rep.results = {
        "semigroup_size": len(S),
        "phi_size": len(phi),
        "element_count": len(en.elements),
        "alpha_class_count": len(classes),
        "classes": [
            {"alpha": a.to_dict()["pairs"], "size": len(members)}
            for a, members in sorted(classes.items())
        ],
    }
    expected = len(pb_semigroup(len(phi))) if len(phi) <= 6 else None
    rep.check("alpha is onto PB(Phi)", expected is None or len(classes) == expected, {"expected": expected})
    members = set(en.elements)
    image = dict(zip(en.elements, en.images))
    closed = all(S.mul(a, b) in members for a in en.elements for b in en.elements)
    rep.check("S_Phi closed under product", closed)
    rep.check("S_Phi closed under star", all(S.star(a) in members for a in en.elements))
    hom = closed and all(image[S.mul(a, b)] == image[a] * image[b] for a in en.elements for b in en.elements)
    rep.check("alpha(st) = alpha(s) alpha(t)", hom)


def _tree(args, s, attr="input2"):
    path = getattr(args, attr)
    if path:
        return dio.tree_from_dict(dio.load_json(path), path)
    return RootedTree.regular(2, s.get("depth", DEFAULT_DEPTH))


def _prefix_map(path, tree):
    F = dio.prefix_map_from_dict(dio.load_json(path), path)
    errs = F.problems(tree)
    if errs:
        raise dio.MalformedInput(path, "; ".join(errs))
    return F


def _transport_check(rep, tree, F):
    rows = transport_distortion(tree, F)
    rep.check("node transport distortion <= 2C per stratum", all(r["ok"] for r in rows), rows)


def _leaf_pairs(m: dict) -> list:
    return [[word_label(r), word_label(t)] for r, t in sorted(m.items())]


def cmd_tree_chi(args, s, rep: RunReport):
    tree = _tree(args, s)
    F = _prefix_map(_need(args.input, "--input"), tree)
    rho = chi_tree(tree, F)
    rep.results = {"nodes": len(tree), **_cross_result(rho)}
    v = check_cross(rho.space, rho.cross)
    rep.check("chi_tree output is a cross metric", not v, _violations(v[:5]))
    _transport_check(rep, tree, F)


def cmd_tree_psi(args, s, rep: RunReport):
    tree = _tree(args, s)
    rho = dio.load_cross(_need(args.input, "--input"), tree.space())
    rec = psi_tree(rho, tree, _ray_config(s))
    rep.results = rec.to_dict()
    bij = len(set(rec.mapping.values())) == len(rec.mapping)
    rep.check("recovered map is injective", bij)


def cmd_tree_roundtrip(args, s, rep: RunReport):
    tree = _tree(args, s)
    F = _prefix_map(_need(args.input, "--input"), tree)
    rho = chi_tree(tree, F)
    rec = psi_tree(rho, tree, _ray_config(s))
    want = F.boundary_map(tree)
    same = rec.mapping == want
    rep.results = {"input": _leaf_pairs(want), "recovered": rec.to_dict(), "recovered = input": same}
    v = check_cross(rho.space, rho.cross)
    rep.check("chi_tree output is a cross metric", not v, _violations(v[:5]))
    _transport_check(rep, tree, F)
    rep.check("recovered = input", same)


def _isometry(path):
    return dio.isometry_from_dict(dio.load_json(path), path)


def _grid(args, s, pi: PartialIsometry | None = None, attr="input2") -> PolarGrid:
    path = getattr(args, attr)
    if path:
        grid = dio.grid_from_dict(dio.load_json(path), path)
        if "rmax" in s:
            grid = grid.with_radii(default_radii(s["rmax"]))
        return grid
    grid = PolarGrid(planar_directions(8), default_radii(s.get("rmax", DEFAULT_RMAX)))
    return grid if pi is None else grid.with_images(pi.u)


def cmd_euclid_chi(args, s, rep: RunReport):
    pi = _isometry(_need(args.input, "--input"))
    grid = _grid(args, s, pi)
    try:
        rho = chi_euclid(grid, pi)
    except ValueError as exc:
        raise dio.MalformedInput(args.input, str(exc)) from None
    rep.results = {"grid": _grid_summary(grid), **_cross_result(rho)}
    v = check_cross(rho.space, rho.cross)
    rep.check("chi_euclid output is a cross metric", not v, _violations(v[:5]))


def _grid_summary(grid: PolarGrid) -> dict:
    return {"n": grid.n, "directions": len(grid.directions), "radii": [dio.num(r) for r in grid.radii]}


def cmd_euclid_psi(args, s, rep: RunReport):
    grid = _grid(args, s)
    rho = dio.load_cross(_need(args.input, "--input"), grid.space)
    est = psi_euclid(rho, grid, _ray_config(s), s.get("angular_tol", 1e-2))
    rep.results = json.loads(dio.dump_json(est.to_dict()))
    rep.check("recovered directions fit an orthogonal map", est.conforming, {"max_residual": est.max_residual})


def cmd_euclid_roundtrip(args, s, rep: RunReport):
    pi = _isometry(_need(args.input, "--input"))
    grid = _grid(args, s, pi)
    tol = s.get("angular_tol", 1e-2)
    try:
        rho = chi_euclid(grid, pi)
    except ValueError as exc:
        raise dio.MalformedInput(args.input, str(exc)) from None
    est = psi_euclid(rho, grid, _ray_config(s), tol)
    dom = sorted(pi.domain)
    err = max((_angle(est.u @ grid.directions[i], pi.u @ grid.directions[i]) for i in dom), default=0.0) if est.u is not None else math.inf
    rep.results = {"grid": _grid_summary(grid), "recovered": json.loads(dio.dump_json(est.to_dict())),
                   "domain": dom, "max_angle_error": err}
    v = check_cross(rho.space, rho.cross)
    rep.check("chi_euclid output is a cross metric", not v, _violations(v[:5]))
    rep.check("recovered domain = input domain", sorted(est.pairs) == dom)
    rep.check("recovered directions match u", est.pairs == pi.direction_map(grid))
    rep.check("u recovered within angular tolerance", err <= tol, {"tolerance": tol})


def cmd_corollary_check(args, s, rep: RunReport):
    report = corollary_check(s.get("depth", 6))
    out = {}
    for name, r in report.items():
        maps = [{"map": _leaf_pairs(dict(k)), "roundtrip": ok} for k, ok in sorted(r["roundtrip"].items())]
        out[name] = {"distinct_maps": len(maps), "maps": maps}
        rep.check(f"{name}: every constructible map round-trips", all(m["roundtrip"] for m in maps))
    rep.results = out
    rep.check("half_line: only the empty and identity maps", out["half_line"]["distinct_maps"] == 2)
    rep.check("two_ray_line: all 7 partial bijections", out["two_ray_line"]["distinct_maps"] == 7)


COMMANDS = {
    "validate": cmd_validate,
    "compose": cmd_compose,
    "star": cmd_star,
    "idempotent": cmd_idempotent,
    "subset-metric": cmd_subset_metric,
    "profile": cmd_profile,
    "equivalence": cmd_equivalence,
    "sphi-enumerate": cmd_sphi_enumerate,
    "tree-chi": cmd_tree_chi,
    "tree-psi": cmd_tree_psi,
    "tree-roundtrip": cmd_tree_roundtrip,
    "euclid-chi": cmd_euclid_chi,
    "euclid-psi": cmd_euclid_psi,
    "euclid-roundtrip": cmd_euclid_roundtrip,
    "corollary-check": cmd_corollary_check,
}


def _emit(rep: RunReport, out, stdout) -> None:
    text = dio.dump_json(rep.to_dict())
    if out:
        dio.write_atomic(out, text)
        for name, body in rep.artifacts.items():
            dio.write_atomic(Path(out).with_name(f"{Path(out).stem}.{name}"), body)
    else:
        stdout.write(text)


def run(argv=None, stdout=None, stderr=None) -> tuple[int, RunReport | None]:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return (EXIT_USAGE if exc.code else EXIT_OK), None
    if args.subcommand not in COMMANDS:
        print(f"unknown subcommand {args.subcommand!r}; expected one of: {', '.join(SUBCOMMANDS)}", file=stderr)
        return EXIT_USAGE, None
    t0 = time.perf_counter()
    try:
        _threads()
        settings = _settings(args)
        for p in (args.input, args.input2):
            if p and not Path(p).is_file():
                raise dio.MalformedInput(p, "no such file")
        digest = _digest([args.input, args.input2], {**settings, "seed": args.seed, "subset": args.subset})
        rep = RunReport(args.subcommand, digest)
        COMMANDS[args.subcommand](args, settings, rep)
    except UsageError as exc:
        print(f"usage error: {exc}", file=stderr)
        return EXIT_USAGE, None
    except dio.MalformedInput as exc:
        print(f"malformed input at {exc}", file=stderr)
        return EXIT_MALFORMED, None
    except (InvalidMetricError, ValueError) as exc:
        # module-level rejections of well-formed but inadmissible inputs
        print(f"malformed input: {exc}", file=stderr)
        return EXIT_MALFORMED, None
    rep.duration_s = time.perf_counter() - t0
    _emit(rep, args.out, stdout)
    if not rep.passed:
        for c in rep.checks:
            if not c["passed"]:
                print(f"FAILED: {c['name']}", file=stderr)
        return EXIT_CHECK, rep
    return EXIT_OK, rep


def main(argv=None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
