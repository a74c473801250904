"""Deterministic file output: JSONL and CSV trajectories, SVG line charts."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..solver import IterationRecord


class EmitError(OSError):
    pass


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_clean(a) for a in v.tolist()]
    return v


def record_rows(records, extra: dict | None = None) -> list[dict]:
    """Records as dicts in declared column order, optionally prefixed with run identifiers."""
    extra = extra or {}
    rows = []
    for r in records:
        d = dict(extra)
        d.update({k: _clean(v) for k, v in r.to_dict().items()})
        rows.append(d)
    return rows


def jsonl_text(rows) -> str:
    return "".join(json.dumps(r, sort_keys=False, separators=(",", ":")) + "\n" for r in rows)


def csv_text(rows, columns=None) -> str:
    if columns is None:
        columns = list(rows[0].keys()) if rows else IterationRecord.columns()
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


def write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc}") from exc
    return path


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b"]


def svg_chart(series, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 640, height: int = 400, logy: bool = False) -> str:
    """Line chart with optional shaded bands.

    ``series`` is a list of dicts with keys ``label``, ``x``, ``y`` and
    optionally ``lo`` / ``hi``.  Output depends only on the inputs.
    """
    if not series:
        raise EmitError("nothing to plot")
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def ty(v):
        v = np.asarray(v, dtype=float)
        return np.log10(np.maximum(v, 1e-300)) if logy else v

    xs = np.concatenate([np.asarray(s["x"], dtype=float) for s in series])
    ys = np.concatenate([ty(s[k]) for s in series for k in ("y", "lo", "hi") if s.get(k) is not None])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return ml + (np.asarray(v, dtype=float) - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (ty(v) - y0) / (y1 - y0) * ph

    def pts(a, b):
        return " ".join(f"{u:.2f},{w:.2f}" for u, w in zip(a, b))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
           f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>']
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        X = ml + pw * i / 4
        Y = mt + ph - ph * i / 4
        out.append(f'<text x="{X:.1f}" y="{mt + ph + 16}" text-anchor="middle">{fx:.4g}</text>')
        lab = f"1e{fy:.2g}" if logy else f"{fy:.4g}"
        out.append(f'<text x="{ml - 6}" y="{Y + 4:.1f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        X = px(s["x"])
        if s.get("lo") is not None and s.get("hi") is not None:
            poly = pts(X, py(s["hi"])) + " " + pts(X[::-1], py(s["lo"])[::-1])
            out.append(f'<polygon points="{poly}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline points="{pts(X, py(s["y"]))}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = mt + 14 + 18 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly}">{_esc(s["label"])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
