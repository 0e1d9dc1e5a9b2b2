"""CSV trace bundles and run manifests.

Files written for a run (one row per slot, or per slot and agent):

* ``states.csv``      k, agent, x, y, ux, uy        true state and the control applied next
* ``estimates.csv``   k, agent, y_x, y_y, est_x, est_y, cov_trace
* ``consensus.csv``   k, agent, moment, zeta, eta, rho
* ``monitor.csv``     k, r, sat, status, conf_agent_0 .. conf_agent_{N-1}
* ``metrics.csv``     k, e_s, rho_max, waypoint
* ``events.csv``      optional input for ``monitor``: k, then one 0/1 column per event

Floats are written with 17 significant digits so that they read back exactly.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .stl import MomentTrace

FLOAT_FMT = "%.17g"


class TraceFormatError(ValueError):
    pass


def _fmt(x) -> str:
    return FLOAT_FMT % x


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _grid(T: int, N: int):
    return np.repeat(np.arange(T), N), np.tile(np.arange(N), T)


def _write_table(path: Path, columns: dict):
    """Columns of equal length; integer arrays are written as integers."""
    cols = []
    for arr in columns.values():
        arr = np.asarray(arr)
        if np.issubdtype(arr.dtype, np.integer):
            cols.append(arr.astype(str))
        else:
            cols.append(np.char.mod(FLOAT_FMT, arr.astype(float)))
    lines = [",".join(columns)]
    lines += [",".join(r) for r in zip(*cols)]
    path.write_text("\n".join(lines) + "\n")


def write_bundle(bundle, out_dir) -> list[str]:
    """Write the trace CSVs of a finished run; returns the file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T, N, _ = bundle.states.shape
    ks, ag = _grid(T, N)
    s, u, y, e = bundle.states, bundle.controls, bundle.measurements, bundle.estimates
    _write_table(out / "states.csv", {
        "k": ks, "agent": ag, "x": s[..., 0].ravel(), "y": s[..., 1].ravel(),
        "ux": u[..., 0].ravel(), "uy": u[..., 1].ravel()})
    _write_table(out / "estimates.csv", {
        "k": ks, "agent": ag, "y_x": y[..., 0].ravel(), "y_y": y[..., 1].ravel(),
        "est_x": e[..., 0].ravel(), "est_y": e[..., 1].ravel(), "cov_trace": bundle.cov_trace.ravel()})
    write_consensus(out / "consensus.csv", bundle.moment_trace())
    files = ["states.csv", "estimates.csv", "consensus.csv"]
    if bundle.monitor is not None:
        write_monitor(out / "monitor.csv", bundle.monitor)
        files.append("monitor.csv")
    _write_table(out / "metrics.csv", {"k": np.arange(T), "e_s": bundle.e_s,
                                       "rho_max": bundle.rho.max(axis=1), "waypoint": bundle.waypoint})
    files.append("metrics.csv")
    return files


def write_consensus(path, trace: MomentTrace):
    T, N, v = trace.zeta.shape
    k = np.repeat(np.arange(T), N * v)
    agent = np.tile(np.repeat(np.arange(N), v), T)
    names = np.tile(np.asarray(trace.moment_names, dtype=object), T * N)
    eta = np.full((T, N, v), np.nan) if trace.eta is None else np.broadcast_to(trace.eta[:, None, :], (T, N, v))
    rho = np.broadcast_to(trace.rho[:, None, :], (T, N, v))
    z, e, r = (np.char.mod(FLOAT_FMT, a.ravel()) for a in (trace.zeta, eta, rho))
    lines = ["k,agent,moment,zeta,eta,rho"]
    lines += [f"{a},{b},{c},{d},{f},{g}" for a, b, c, d, f, g in zip(k, agent, names, z, e, r)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_consensus(path) -> MomentTrace:
    path = Path(path)
    if not path.exists():
        raise TraceFormatError(f"{path.name} is missing")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        need = ["k", "agent", "moment", "zeta", "eta", "rho"]
        if header is None or any(c not in header for c in need):
            missing = [c for c in need if header is None or c not in header]
            raise TraceFormatError(f"{path.name}: missing columns {missing}")
        idx = [header.index(c) for c in need]
        rows = [[r[i] for i in idx] for r in reader if r]
    if not rows:
        raise TraceFormatError(f"{path.name} has no rows")
    names = list(dict.fromkeys(r[2] for r in rows))
    ks = np.array([int(r[0]) for r in rows])
    agents = np.array([int(r[1]) for r in rows])
    T, N, v = ks.max() + 1, agents.max() + 1, len(names)
    if len(rows) != T * N * v:
        raise TraceFormatError(f"{path.name}: expected {T * N * v} rows, found {len(rows)}")
    mi = np.array([names.index(r[2]) for r in rows])
    vals = np.array([[float(r[3]), float(r[4]), float(r[5])] for r in rows])
    zeta = np.empty((T, N, v))
    eta = np.empty((T, N, v))
    rho = np.empty((T, N, v))
    zeta[ks, agents, mi] = vals[:, 0]
    eta[ks, agents, mi] = vals[:, 1]
    rho[ks, agents, mi] = vals[:, 2]
    eta0 = eta[:, 0, :]
    return MomentTrace(tuple(names), zeta, rho[:, 0, :], None if np.isnan(eta0).all() else eta0)


def read_events(path, T: int) -> dict:
    path = Path(path)
    if not path.exists():
        return {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if not header or header[0] != "k":
        raise TraceFormatError(f"{path.name}: first column must be k")
    data = np.array([[int(x) for x in r] for r in rows], dtype=int).reshape(-1, len(header))
    if data.shape[0] != T or not np.array_equal(data[:, 0], np.arange(T)):
        raise TraceFormatError(f"{path.name}: expected one row per slot 0..{T - 1}")
    return {name: data[:, i].astype(bool) for i, name in enumerate(header) if i}


def write_monitor(path, result):
    T, N = result.confidence.shape
    header = ["k", "r", "sat", "status"] + [f"conf_agent_{j}" for j in range(N)]
    rows = []
    for k in range(T):
        r = result.r[k]
        sat = "" if np.isnan(r) else str(int(bool(result.sat[k])))
        rows.append([str(k), _fmt(r), sat, str(result.status[k])]
                    + [_fmt(c) for c in result.confidence[k]])
    _write_rows(Path(path), header, rows)


def read_monitor(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    conf_cols = [c for c in reader.fieldnames if c.startswith("conf_agent_")]
    return {
        "k": np.array([int(r["k"]) for r in rows]),
        "r": np.array([float(r["r"]) for r in rows]),
        "sat": np.array([r["sat"] == "1" for r in rows]),
        "status": np.array([r["status"] for r in rows]),
        "confidence": np.array([[float(r[c]) for c in conf_cols] for r in rows]),
    }


def read_table(path) -> dict:
    """Numeric CSV as a dict of column arrays."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in reader.fieldnames}


def write_json_atomic(path, doc):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        os.chmod(tmp, 0o644)
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
