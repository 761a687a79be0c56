"""JSON documents for spaces, cross metrics, families, trees, grids and maps.

Numbers are written as decimal strings so fixtures round-trip exactly;
readers accept either strings or plain JSON numbers.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .euclid import PartialIsometry, PolarGrid
from .spaces import CrossMetric, FiniteMetricSpace, ScaleFamily, validate_cross, validate_space
from .sphi import PartialBijection
from .trees import PrefixMap, RootedTree


class MalformedInput(ValueError):
    """A document could not be parsed; ``where`` names the offending part."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


def num(x) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def read_num(v) -> float:
    return float(v)


def matrix_out(m) -> list:
    return [[num(x) for x in row] for row in np.asarray(m)]


def matrix_in(rows, where: str) -> np.ndarray:
    try:
        m = np.array([[read_num(x) for x in row] for row in rows], dtype=float)
    except (TypeError, ValueError) as exc:
        raise MalformedInput(where, f"not a numeric matrix ({exc})") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise MalformedInput(where, f"matrix must be square, got shape {m.shape}")
    return m


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    except OSError as exc:
        raise MalformedInput(str(path), exc.strerror or str(exc)) from None


def _field(doc: dict, key: str, where: str):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise MalformedInput(where, f"missing field {key!r}") from None


def space_to_dict(space: FiniteMetricSpace) -> dict:
    return {
        "points": list(space.point_ids),
        "basepoint": space.point_ids[space.basepoint],
        "dist": matrix_out(space.dist),
    }


def space_from_dict(doc: dict, where: str = "space", validate: bool = True) -> FiniteMetricSpace:
    points = list(_field(doc, "points", where))
    d = matrix_in(_field(doc, "dist", where), f"{where}.dist")
    if len(points) != len(d):
        raise MalformedInput(where, "points and dist disagree in size")
    base = doc.get("basepoint", points[0] if points else None)
    if base not in points:
        raise MalformedInput(where, f"basepoint {base!r} is not a point")
    if validate:
        return validate_space(d, points.index(base), points)
    return FiniteMetricSpace(points, d, points.index(base))


def cross_to_dict(rho: CrossMetric, space_ref: str | None = None) -> dict:
    doc = {"cross": matrix_out(rho.cross), "min_gap": num(rho.min_gap)}
    if space_ref is None:
        doc["space"] = space_to_dict(rho.space)
    else:
        doc["space_ref"] = space_ref
    return doc


def cross_from_dict(doc: dict, base_dir=".", where: str = "cross", space: FiniteMetricSpace | None = None, validate: bool = True) -> CrossMetric:
    if space is None:
        if "space" in doc:
            space = space_from_dict(doc["space"], f"{where}.space", validate)
        else:
            ref = Path(base_dir) / _field(doc, "space_ref", where)
            space = space_from_dict(load_json(ref), str(ref), validate)
    c = matrix_in(_field(doc, "cross", where), f"{where}.cross")
    gap = read_num(doc.get("min_gap", 1))
    if validate:
        return validate_cross(space, c, gap)
    return CrossMetric(space, c, gap)


def load_cross(path, space: FiniteMetricSpace | None = None, validate: bool = True) -> CrossMetric:
    return cross_from_dict(load_json(path), Path(path).parent, str(path), space, validate)


def family_to_dict(fam: ScaleFamily) -> dict:
    stages = []
    for st in fam.stages:
        doc = space_to_dict(st.space)
        doc["cross"] = matrix_out(st.cross)
        doc["min_gap"] = num(st.min_gap)
        stages.append(doc)
    incl = [
        [fam.stages[t + 1].space.point_ids[k] for k in inc]
        for t, inc in enumerate(fam.inclusions)
    ]
    return {"scales": [num(s) for s in fam.scales], "stages": stages, "inclusions": incl}


def family_from_dict(doc: dict, where: str = "family") -> ScaleFamily:
    stages = []
    for t, st in enumerate(_field(doc, "stages", where)):
        sp = space_from_dict(st, f"{where}.stages[{t}]")
        stages.append(cross_from_dict(st, where=f"{where}.stages[{t}]", space=sp))
    scales = [read_num(s) for s in _field(doc, "scales", where)]
    incl = []
    for t, labels in enumerate(doc.get("inclusions", [])):
        try:
            incl.append(stages[t + 1].space.indices(labels))
        except (KeyError, IndexError):
            raise MalformedInput(f"{where}.inclusions[{t}]", "unknown point label") from None
    try:
        return ScaleFamily(scales, stages, incl)
    except ValueError as exc:
        raise MalformedInput(where, str(exc)) from None


def tree_from_dict(doc: dict, where: str = "tree") -> RootedTree:
    depth = int(_field(doc, "depth", where))
    try:
        if "branching" in doc:
            return RootedTree.regular(int(doc["branching"]), depth)
        return RootedTree.from_levels(depth, _field(doc, "children", where))
    except ValueError as exc:
        raise MalformedInput(where, str(exc)) from None


def prefix_map_from_dict(doc: dict, where: str = "prefix map") -> PrefixMap:
    try:
        return PrefixMap.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(where, f"bad prefix pair ({exc})") from None


def grid_from_dict(doc: dict, where: str = "grid") -> PolarGrid:
    dirs = np.array([[read_num(x) for x in d] for d in _field(doc, "directions", where)])
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = [read_num(r) for r in _field(doc, "radii", where)]
    if "n" in doc and int(doc["n"]) != dirs.shape[1]:
        raise MalformedInput(where, "n does not match the direction length")
    return PolarGrid(dirs, radii)


def isometry_from_dict(doc: dict, where: str = "isometry") -> PartialIsometry:
    try:
        u = np.array([[read_num(x) for x in row] for row in doc["matrix"]])
        strata = tuple((int(s["m"]), [int(i) for i in s["directions"]]) for s in doc["strata"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(where, f"bad isometry document ({exc})") from None
    try:
        return PartialIsometry(u, strata)
    except ValueError as exc:
        raise MalformedInput(where, str(exc)) from None


def isometry_to_dict(pi: PartialIsometry) -> dict:
    return {"matrix": matrix_out(pi.u), "strata": [{"m": m, "directions": sorted(A)} for m, A in pi.strata]}


def partial_bijection_from_dict(doc: dict) -> PartialBijection:
    return PartialBijection(int(doc["n"]), tuple(tuple(p) for p in doc["pairs"]))


def write_atomic(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
