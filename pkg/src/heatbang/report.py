"""Result persistence: JSON summaries, CSV tables, plot data and the run manifest.

Every writer formats floats with ``repr`` and sorts JSON keys, so equal
inputs give byte-identical files.  The manifest carries timestamps and
timings and is therefore the one file excluded from that guarantee.

Plot-data format
----------------
One block per curve::

    # curve: <name>
    # columns: <x-label> <y-label>
    x0 y0
    x1 y1

Blocks are separated by two blank lines, which gnuplot reads as
``index 0, 1, ...`` and ``numpy.loadtxt`` can split on.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "SCHEMA_VERSION",
    "to_jsonable",
    "write_json",
    "write_csv",
    "write_plot_data",
    "read_plot_data",
    "write_manifest",
    "load_schema",
    "validate_summary",
]

SCHEMA_VERSION = "1.0"


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings ``"inf"``, ``"-inf"``, ``"nan"``."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _atomic_write(path: Path, text: str) -> None:
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


def write_json(path: str | Path, payload) -> Path:
    path = Path(path)
    text = json.dumps(to_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"
    _atomic_write(path, text)
    return path


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """UTF-8 CSV with a header row and ``\\n`` line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(header))
            for row in rows:
                w.writerow([_cell(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_plot_data(path: str | Path, curves: Sequence[tuple[str, str, str, np.ndarray, np.ndarray]]) -> Path:
    """Write ``(name, x_label, y_label, x, y)`` curves in the two-column block format."""
    blocks = []
    for name, xl, yl, x, y in curves:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if x.shape != y.shape:
            raise ValueError(f"curve {name}: x and y differ in length")
        lines = [f"# curve: {name}", f"# columns: {xl} {yl}"]
        lines += [f"{xi!r} {yi!r}" for xi, yi in zip(x.tolist(), y.tolist())]
        blocks.append("\n".join(lines))
    _atomic_write(Path(path), "\n\n\n".join(blocks) + "\n")
    return Path(path)


def read_plot_data(path: str | Path) -> dict[str, np.ndarray]:
    """Inverse of :func:`write_plot_data`; returns ``{name: (n, 2) array}``."""
    out: dict[str, np.ndarray] = {}
    name, rows = None, []
    for line in Path(path).read_text(encoding="utf-8").splitlines() + [""]:
        if line.startswith("# curve:"):
            if name is not None:
                out[name] = np.array(rows, dtype=float).reshape(-1, 2)
            name, rows = line.split(":", 1)[1].strip(), []
        elif line and not line.startswith("#"):
            rows.append([float(v) for v in line.split()])
    if name is not None:
        out[name] = np.array(rows, dtype=float).reshape(-1, 2)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(directory: str | Path, manifest: dict) -> Path:
    """Write ``manifest.json`` atomically after checking that every listed file exists."""
    directory = Path(directory)
    files = []
    for rel in manifest.get("files", []):
        p = directory / rel
        if not p.is_file():
            raise FileNotFoundError(f"manifest lists missing file {p}")
        files.append({"path": rel, "bytes": p.stat().st_size, "sha256": _sha256(p)})
    payload = dict(manifest)
    payload["files"] = files
    return write_json(directory / "manifest.json", payload)


def load_schema() -> dict:
    text = resources.files("heatbang").joinpath("schema/report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_summary(summary: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``summary`` breaks the report schema."""
    import jsonschema

    jsonschema.validate(to_jsonable(summary), load_schema())
