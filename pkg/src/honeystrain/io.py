"""Deterministic CSV / JSON / PGM writers shared by the command-line tools."""

import json
from pathlib import Path

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, complex) or isinstance(obj, np.complexfloating):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"
    path.write_text(text, encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path):
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return header, data


SNAPSHOT_HEADER = ["Y1", "Y2", "re_a1", "im_a1", "re_a2", "im_a2"]


def write_snapshot(path, grid, psi):
    """Spinor snapshot as flat CSV rows ``(Y1, Y2, Re a1, Im a1, Re a2, Im a2)``."""
    Y1, Y2 = grid.mesh()
    rows = np.column_stack([Y1.ravel(), Y2.ravel(), psi[0].real.ravel(), psi[0].imag.ravel(),
                            psi[1].real.ravel(), psi[1].imag.ravel()])
    return write_csv(path, SNAPSHOT_HEADER, rows)


def read_snapshot(path, shape):
    _, data = read_csv(path)
    a1 = (data[:, 2] + 1j * data[:, 3]).reshape(shape)
    a2 = (data[:, 4] + 1j * data[:, 5]).reshape(shape)
    return np.stack([a1, a2])


def write_pgm(path, density, maxval=255):
    """Binary portable graymap of a nonnegative 2D array (rows along Y2, top = max Y2)."""
    d = np.asarray(density, dtype=float).T[::-1]
    top = d.max()
    img = np.zeros_like(d) if top <= 0 else np.rint(d / top * maxval)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = f"P5\n{d.shape[1]} {d.shape[0]}\n{maxval}\n".encode("ascii")
    path.write_bytes(head + img.astype(np.uint8).tobytes())
    return path


def read_pgm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def manifest(command, cfg, cfg_hash, tolerances, **extra):
    doc = {"command": command, "config": cfg, "config_hash": cfg_hash,
           "tolerances": tolerances}
    doc.update(extra)
    return doc
