"""CSV, JSON and SVG writers for solver outputs.

CSV files start with one ``# {json}`` header line.  Floats are written with
17 significant digits in CSV and as shortest round-trip reprs in JSON, so
every value parses back to the same double.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = ["write_csv", "read_csv", "write_json", "to_jsonable", "line_plot_svg"]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and tuples to plain JSON types.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], header: Optional[dict] = None
              ) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header is not None:
            fh.write("# " + json.dumps(to_jsonable(header), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[Optional[dict], list[str], list[list[str]]]:
    """Inverse of :func:`write_csv`: ``(header, columns, rows)`` with string cells."""
    lines = Path(path).read_text().splitlines()
    header = None
    if lines and lines[0].startswith("# "):
        header = json.loads(lines[0][2:])
        lines = lines[1:]
    rows = list(csv.reader(lines))
    return header, rows[0], rows[1:]


def line_plot_svg(path, series: Sequence[tuple], title: str = "", xlabel: str = "",
                  ylabel: str = "", loglog: bool = False, timestamp: bool = True) -> Path:
    """Write a line plot.  ``series`` holds ``(label, x, y, style)`` tuples.

    Output is deterministic apart from the date metadata, which is dropped
    when ``timestamp`` is false.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "thinodal", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, x, y, style in series:
            ax.plot(x, y, style, label=label, lw=1.2, ms=4)
        if loglog:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        meta = {} if timestamp else {"Date": None}
        fig.savefig(path, format="svg", metadata=meta)
        plt.close(fig)
    return Path(path)
