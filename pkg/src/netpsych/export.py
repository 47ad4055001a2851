"""Artifact writers: JSON, DOT, GraphML and small deterministic SVG figures."""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def to_jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), indent=2) + "\n", encoding="utf-8")
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# networks

def network_dot(nodes: Sequence[str], weights: np.ndarray, membership: Sequence[int] | None = None,
                name: str = "network") -> str:
    lines = [f"graph {name} {{", "  node [shape=circle, style=filled];"]
    for i, n in enumerate(nodes):
        color = PALETTE[(membership[i] - 1) % len(PALETTE)] if membership is not None else "#dddddd"
        extra = f", community={membership[i]}" if membership is not None else ""
        lines.append(f'  "{n}" [fillcolor="{color}"{extra}];')
    iu, ju = np.triu_indices(len(nodes), 1)
    for i, j in zip(iu, ju):
        w = float(weights[i, j])
        if w != 0:
            lines.append(f'  "{nodes[i]}" -- "{nodes[j]}" [weight={w:.6f}, penwidth={1 + 6 * abs(w):.3f}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def network_graphml(nodes: Sequence[str], weights: np.ndarray, membership: Sequence[int] | None = None,
                    metadata: Mapping | None = None) -> str:
    ns = "http://graphml.graphdrawing.org/xmlns"
    root = ET.Element("graphml", xmlns=ns)
    ET.SubElement(root, "key", id="w", attrib={"for": "edge", "attr.name": "weight", "attr.type": "double"})
    ET.SubElement(root, "key", id="c", attrib={"for": "node", "attr.name": "community", "attr.type": "int"})
    for i, k in enumerate(sorted(metadata or {})):
        ET.SubElement(root, "key", id=f"g{i}", attrib={"for": "graph", "attr.name": k, "attr.type": "string"})
    g = ET.SubElement(root, "graph", id="G", edgedefault="undirected")
    for i, k in enumerate(sorted(metadata or {})):
        ET.SubElement(g, "data", key=f"g{i}").text = str(metadata[k])
    for i, n in enumerate(nodes):
        el = ET.SubElement(g, "node", id=str(n))
        if membership is not None:
            ET.SubElement(el, "data", key="c").text = str(membership[i])
    iu, ju = np.triu_indices(len(nodes), 1)
    for e, (i, j) in enumerate(zip(iu, ju)):
        w = float(weights[i, j])
        if w != 0:
            el = ET.SubElement(g, "edge", id=f"e{e}", source=str(nodes[i]), target=str(nodes[j]))
            ET.SubElement(el, "data", key="w").text = f"{w:.10g}"
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


# --------------------------------------------------------------------------
# SVG

def _svg(width: float, height: float, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
            f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f"<!-- netpsych {__version__} -->", *body, "</svg>"]) + "\n"


def _esc(s) -> str:
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def _diverging(v: float) -> str:
    v = max(-1.0, min(1.0, v))
    if v >= 0:
        r, g, b = 255, int(255 * (1 - v)), int(255 * (1 - v))
    else:
        r, g, b = int(255 * (1 + v)), int(255 * (1 + v)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(values: np.ndarray, row_labels: Sequence[str], col_labels: Sequence[str] | None = None,
                blank: np.ndarray | None = None, title: str = "", cell: int = 22) -> str:
    """Correlogram; cells with ``blank`` True are left empty."""
    values = np.asarray(values, dtype=float)
    col_labels = row_labels if col_labels is None else col_labels
    left, top = 70, 60 if title else 40
    nr, nc = values.shape
    body = []
    if title:
        body.append(f'<text x="{left}" y="18" font-size="13">{_esc(title)}</text>')
    for j, lab in enumerate(col_labels):
        x = left + j * cell + cell / 2
        body.append(f'<text x="{x:.1f}" y="{top - 6}" text-anchor="middle">{_esc(lab)}</text>')
    for i, lab in enumerate(row_labels):
        y = top + i * cell
        body.append(f'<text x="{left - 6}" y="{y + cell * 0.65:.1f}" text-anchor="end">{_esc(lab)}</text>')
        for j in range(nc):
            x = left + j * cell
            if blank is not None and blank[i, j]:
                fill = "#ffffff"
            else:
                fill = _diverging(values[i, j])
            body.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#cccccc"/>')
    return _svg(left + nc * cell + 20, top + nr * cell + 20, body)


def _box_stats(v: np.ndarray):
    v = np.sort(np.asarray(v, dtype=float))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    lo, hi = (inside.min(), inside.max()) if inside.size else (q1, q3)
    out = v[(v < lo_fence) | (v > hi_fence)]
    return q1, med, q3, lo, hi, out


def boxplot_svg(panels: Mapping[str, Mapping[str, Sequence[float]]], y_range=(1.0, 5.0),
                title: str = "") -> str:
    """Grouped box plots: one panel per key, one box per series.

    Whiskers reach the furthest points within 1.5 IQR; points beyond are
    drawn as empty circles.
    """
    series = []
    for p in panels.values():
        for s in p:
            if s not in series:
                series.append(s)
    box_w, gap, panel_gap = 22, 8, 30
    left, top, plot_h = 50, 40, 240
    lo, hi = y_range
    y = lambda v: top + plot_h * (1 - (v - lo) / (hi - lo))  # noqa: E731
    body = []
    if title:
        body.append(f'<text x="{left}" y="18" font-size="13">{_esc(title)}</text>')
    for t in np.linspace(lo, hi, 5):
        body.append(f'<line x1="{left - 4}" y1="{y(t):.1f}" x2="{left}" y2="{y(t):.1f}" stroke="#000"/>')
        body.append(f'<text x="{left - 6}" y="{y(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    x = left + panel_gap / 2
    for pname, pdata in panels.items():
        x0 = x
        for si, s in enumerate(series):
            if s not in pdata or len(pdata[s]) == 0:
                x += box_w + gap
                continue
            q1, med, q3, wlo, whi, out = _box_stats(pdata[s])
            c = PALETTE[si % len(PALETTE)]
            cx = x + box_w / 2
            body.append(f'<line x1="{cx:.1f}" y1="{y(whi):.1f}" x2="{cx:.1f}" y2="{y(q3):.1f}" stroke="#000"/>')
            body.append(f'<line x1="{cx:.1f}" y1="{y(q1):.1f}" x2="{cx:.1f}" y2="{y(wlo):.1f}" stroke="#000"/>')
            body.append(f'<rect x="{x:.1f}" y="{y(q3):.1f}" width="{box_w}" height="{max(y(q1) - y(q3), 0.5):.1f}" '
                        f'fill="{c}" fill-opacity="0.6" stroke="#000"/>')
            body.append(f'<line x1="{x:.1f}" y1="{y(med):.1f}" x2="{x + box_w:.1f}" y2="{y(med):.1f}" stroke="#000" stroke-width="2"/>')
            for o in out:
                body.append(f'<circle cx="{cx:.1f}" cy="{y(o):.1f}" r="3" fill="none" stroke="#000"/>')
            x += box_w + gap
        body.append(f'<text x="{(x0 + x - gap) / 2:.1f}" y="{top + plot_h + 18}" text-anchor="middle">{_esc(pname)}</text>')
        x += panel_gap
    for si, s in enumerate(series):
        ly = top + plot_h + 36 + 14 * si
        body.append(f'<rect x="{left}" y="{ly - 9}" width="10" height="10" fill="{PALETTE[si % len(PALETTE)]}"/>')
        body.append(f'<text x="{left + 14}" y="{ly}">{_esc(s)}</text>')
    return _svg(x + 10, top + plot_h + 44 + 14 * len(series), body)


def stability_svg(stability: Mapping[str, float], membership: Mapping[str, int], title: str = "") -> str:
    """Horizontal bars per item, grouped and colored by community."""
    items = sorted(stability, key=lambda i: (membership[i], list(stability).index(i)))
    left, top, bar_h, width = 70, 40, 14, 300
    body = []
    if title:
        body.append(f'<text x="{left}" y="18" font-size="13">{_esc(title)}</text>')
    for k, it in enumerate(items):
        yy = top + k * (bar_h + 4)
        c = PALETTE[(membership[it] - 1) % len(PALETTE)]
        body.append(f'<text x="{left - 6}" y="{yy + bar_h - 3}" text-anchor="end">{_esc(it)}</text>')
        body.append(f'<rect x="{left}" y="{yy}" width="{width * stability[it]:.1f}" height="{bar_h}" fill="{c}"/>')
        body.append(f'<text x="{left + width * stability[it] + 4:.1f}" y="{yy + bar_h - 3}">{stability[it]:.2f}</text>')
    base = top + len(items) * (bar_h + 4) + 4
    for t in (0, 0.25, 0.5, 0.75, 1.0):
        body.append(f'<text x="{left + width * t:.1f}" y="{base + 12}" text-anchor="middle">{t:g}</text>')
    return _svg(left + width + 50, base + 24, body)
