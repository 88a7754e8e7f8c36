"""Reading and writing pipeline artifacts.

Every JSON artifact carries ``config_hash`` and ``seed`` at top level so a
later stage can refuse inputs produced under a different configuration.
"""
import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .dynamics import Dataset
from .errors import ArtifactError


def config_hash(cfg):
    """Short sha256 of the canonical JSON form of ``cfg``."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _open(path, mode):
    path = Path(path)
    try:
        if "w" in mode:
            path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, mode, newline="" if path.suffix == ".csv" else None)
    except OSError as e:
        raise ArtifactError(f"cannot open {path}: {e.strerror or e}") from e


def write_json(path, payload, cfg_hash=None, seed=None):
    doc = {"config_hash": cfg_hash, "seed": seed}
    doc.update(payload)
    with _open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return Path(path)


def read_json(path, expect_hash=None):
    with _open(path, "r") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ArtifactError(f"{path} is not valid JSON: {e}") from e
    if expect_hash is not None and doc.get("config_hash") != expect_hash:
        raise ArtifactError(
            f"{path} was produced under config {doc.get('config_hash')}, expected {expect_hash}"
        )
    return doc


def sidecar(path):
    return Path(path).with_suffix(".json")


def write_dataset(path, ds, bbox=None, cfg_hash=None):
    """CSV ``s_0..s_{t-1}[,x_0..x_{d-1}]`` plus a JSON sidecar with dims and bbox."""
    t = ds.s.shape[1]
    cols = [f"s_{i}" for i in range(t)]
    data = ds.s
    if ds.x is not None:
        cols += [f"x_{j}" for j in range(ds.x.shape[1])]
        data = np.hstack([ds.s, ds.x])
    with _open(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
    lo, hi = bbox if bbox is not None else ds.bbox
    meta = {
        "dims": {"s": t, "x": 0 if ds.x is None else int(ds.x.shape[1]), "control": int(ds.control_dim)},
        "lo": np.asarray(lo, dtype=float).tolist(),
        "hi": np.asarray(hi, dtype=float).tolist(),
        "kind": ds.kind,
        "rows": len(ds),
    }
    write_json(sidecar(path), meta, cfg_hash, ds.seed)
    return Path(path)


def read_dataset(path, expect_hash=None):
    """Returns ``(Dataset, bbox)``."""
    meta = read_json(sidecar(path), expect_hash)
    with _open(path, "r") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ArtifactError(f"{path} is empty")
    dims = meta["dims"]
    if len(rows[0]) != dims["s"] + dims["x"]:
        raise ArtifactError(f"{path}: header does not match sidecar dims")
    arr = np.asarray(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    ds = Dataset(
        arr[:, : dims["s"]],
        arr[:, dims["s"]:] if dims["x"] else None,
        kind=meta["kind"],
        seed=meta["seed"],
        control_dim=dims.get("control", 0),
    )
    bbox = (np.asarray(meta["lo"], dtype=float), np.asarray(meta["hi"], dtype=float))
    return ds, bbox


def write_rows(path, rows, columns):
    """Plain CSV of dict rows; floats written with full precision."""
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return v

    with _open(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])
    return Path(path)


def read_rows(path):
    with _open(path, "r") as fh:
        return list(csv.DictReader(fh))
