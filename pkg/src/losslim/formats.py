"""File formats: state-space and network JSON, gain-matrix CSV.

All writers are byte-stable: floats are written in Python's shortest
round-trip representation (JSON) or with 17 significant digits (CSV), keys
appear in a fixed order and files end with a newline.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .analysis import GainMatrix
from .errors import InputError
from .numlin import StateSpace
from .swing import Bus, Line, PowerNetwork


def dumps(obj) -> str:
    try:
        return json.dumps(obj, indent=2, allow_nan=False) + "\n"
    except ValueError as exc:
        raise InputError(f"cannot serialize non-finite value: {exc}") from exc


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def write_text(path, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _matrix(data, rows, cols, name):
    try:
        arr = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} is not a numeric matrix") from exc
    if arr.size == 0 and rows * cols == 0:
        return np.zeros((rows, cols))
    if arr.shape != (rows, cols):
        raise InputError(f"{name} has shape {arr.shape}, expected {(rows, cols)}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def _rows(M) -> list:
    return [[float(v) for v in row] for row in np.asarray(M)]


# state space -----------------------------------------------------------------

def statespace_to_dict(sys: StateSpace) -> dict:
    return {"n": sys.n, "m": sys.m, "p": sys.p,
            "A": _rows(sys.A), "B": _rows(sys.B), "C": _rows(sys.C), "D": _rows(sys.D)}


def statespace_from_dict(data) -> StateSpace:
    if not isinstance(data, dict):
        raise InputError("state-space file must hold a JSON object")
    try:
        n, m, p = (int(data[k]) for k in ("n", "m", "p"))
        A = _matrix(data["A"], n, n, "A")
        B = _matrix(data["B"], n, m, "B")
        C = _matrix(data["C"], p, n, "C")
        D = _matrix(data["D"], p, m, "D")
    except KeyError as exc:
        raise InputError(f"state-space file lacks field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad dimension field: {exc}") from exc
    if min(n, m, p) < 0:
        raise InputError("dimensions must be nonnegative")
    return StateSpace(A, B, C, D)


def write_statespace(path, sys: StateSpace, **extra):
    data = statespace_to_dict(sys)
    data.update(extra)
    write_text(path, dumps(data))


def read_statespace(path) -> StateSpace:
    return statespace_from_dict(read_json(path))


# networks --------------------------------------------------------------------

def network_to_dict(net: PowerNetwork) -> dict:
    buses = []
    for b in net.buses:
        entry = {"id": b.id, "kind": b.kind, "power": float(b.power)}
        if b.inertia is not None:
            entry["inertia"] = float(b.inertia)
        entry["position"] = [float(b.position[0]), float(b.position[1])]
        entry["cluster"] = b.cluster
        buses.append(entry)
    lines = [{"i": ln.i, "j": ln.j, "susceptance": float(ln.susceptance),
              "load_angle": float(ln.load_angle), "tier": ln.tier} for ln in net.lines]
    return {"buses": buses, "lines": lines}


def network_from_dict(data) -> PowerNetwork:
    if not isinstance(data, dict) or "buses" not in data or "lines" not in data:
        raise InputError("network file must hold an object with 'buses' and 'lines'")
    try:
        buses = []
        for b in data["buses"]:
            inertia = b.get("inertia")
            buses.append(Bus(
                id=int(b["id"]),
                kind=str(b["kind"]),
                power=float(b.get("power", 0.0)),
                inertia=None if inertia is None else float(inertia),
                position=tuple(float(c) for c in b.get("position", (0.0, 0.0))),
                cluster=int(b.get("cluster", 0)),
            ))
        lines = [Line(i=int(ln["i"]), j=int(ln["j"]),
                      susceptance=float(ln["susceptance"]),
                      load_angle=float(ln.get("load_angle", 0.0)),
                      tier=str(ln.get("tier", "transmission")))
                 for ln in data["lines"]]
        return PowerNetwork(tuple(buses), tuple(lines))
    except KeyError as exc:
        raise InputError(f"network entry lacks field {exc.args[0]!r}") from exc
    except (TypeError, AttributeError) as exc:
        raise InputError(f"malformed network entry: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed network: {exc}") from exc


def write_network(path, net: PowerNetwork):
    write_text(path, dumps(network_to_dict(net)))


def read_network(path) -> PowerNetwork:
    return network_from_dict(read_json(path))


def is_network_dict(data) -> bool:
    return isinstance(data, dict) and "buses" in data and "lines" in data


# gain matrices ---------------------------------------------------------------

def gains_to_csv(g: GainMatrix) -> str:
    if g.log_transformed:
        raise ValueError("CSV files hold raw gains; write the matrix before taking logs")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([str(b) for b in g.bus_ids])
    for row in g.values:
        w.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


def gains_from_csv(text: str, metric: str, clusters=None) -> GainMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InputError("empty gain file")
    try:
        ids = [int(x) for x in rows[0]]
        values = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise InputError(f"malformed gain file: {exc}") from exc
    if values.shape != (len(ids), len(ids)):
        raise InputError(f"gain file has {values.shape} values for {len(ids)} buses")
    return GainMatrix(values, metric, ids, list(clusters) if clusters is not None else [])


def write_gains(path, g: GainMatrix):
    write_text(path, gains_to_csv(g))


def read_gains(path, metric: str, clusters=None) -> GainMatrix:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return gains_from_csv(text, metric, clusters)


def gains_to_dict(g: GainMatrix) -> dict:
    return {"metric": g.metric, "bus_ids": list(g.bus_ids), "clusters": list(g.clusters),
            "values": _rows(g.values)}


def gains_from_dict(data) -> GainMatrix:
    try:
        return GainMatrix(np.array(data["values"], dtype=float), data["metric"],
                          list(data["bus_ids"]), list(data.get("clusters", [])))
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed gain object: {exc}") from exc
