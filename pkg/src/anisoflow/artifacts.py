"""Writers for the CSV, JSON and SVG files produced by the command line tool."""
import csv
import json
import os
import platform

import numpy as np

from . import __version__
from . import geometry as geo

CURVE_COLORS = ("#1f77b4", "#d62728", "#2ca02c")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    return obj


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_plain(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in r])


def versions():
    import scipy
    import sklearn
    return {"anisoflow": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


def write_manifest(out_dir, config_hash, files, wall_clock, status, extra=None,
                   name="manifest.json"):
    """Write a manifest listing ``files`` relative to ``out_dir``."""
    missing = [f for f in files if not os.path.exists(os.path.join(out_dir, f))]
    if status == "ok" and missing:
        raise FileNotFoundError(f"artifacts missing: {missing}")
    data = {"config_hash": config_hash, "files": sorted(files), "versions": versions(),
            "wall_clock_s": float(wall_clock), "status": status}
    if extra:
        data.update(extra)
    write_json(os.path.join(out_dir, name), data)


def _polyline(points, to_px, color, width):
    pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in (to_px(p) for p in points))
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}" stroke-linejoin="round"/>')


def network_svg(curves, wulff=None, title="", size=480, reference=None):
    """SVG drawing of a network, optionally with the reference frame and a Wulff inset."""
    curves = np.asarray(curves, dtype=float)
    pts = curves.reshape(-1, 2)
    if reference is not None:
        pts = np.vstack([pts, np.asarray(reference).reshape(-1, 2)])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-12))
    margin = 0.1 * size
    scale = (size - 2 * margin) / span

    def to_px(p):
        return margin + (p[0] - lo[0]) * scale, size - margin - (p[1] - lo[1]) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        parts.append(f'<text x="8" y="18" font-family="sans-serif" font-size="13">{title}</text>')
    if reference is not None:
        for c in np.asarray(reference):
            parts.append(_polyline(c, to_px, "#999999", 1).replace(
                "/>", ' stroke-dasharray="4 3"/>'))
    for i, c in enumerate(curves):
        parts.append(_polyline(c, to_px, CURVE_COLORS[i % 3], 2))
        x, y = to_px(c[0])
        parts.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="3" fill="black"/>')
    x, y = to_px(curves[:, -1].mean(axis=0))
    parts.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="4" fill="none" stroke="black"/>')
    if wulff is not None:
        w = np.asarray(wulff, dtype=float)
        inset = 0.22 * size
        cx, cy = size - 0.6 * inset, 0.6 * inset
        r = float(np.max(np.linalg.norm(w, axis=1)))
        s = 0.45 * inset / r
        closed = np.vstack([w, w[:1]])
        parts.append(_polyline(closed, lambda p: (cx + s * p[0], cy - s * p[1]), "#444444", 1))
        parts.append(f'<text x="{cx - 0.5 * inset:.1f}" y="{cy + 0.6 * inset:.1f}" '
                     f'font-family="sans-serif" font-size="10">Wulff shape</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_curve_tables(out_dir, prefix, curves, phi_polar):
    """One CSV per curve with ``x_param, px, py, kappa, kappa_phi``."""
    names = []
    for i, c in enumerate(np.asarray(curves)):
        name = f"{prefix}_curve{i + 1}.csv"
        write_csv(os.path.join(out_dir, name), ("x_param", "px", "py", "kappa", "kappa_phi"),
                  geo.curve_table(c, phi_polar))
        names.append(name)
    return names


def save_snapshots(path, traj):
    """Store snapshot times, curves and heights in a compressed ``.npz`` file."""
    times = np.array([s[0] for s in traj.snapshots], dtype=float)
    curves = np.array([s[1] for s in traj.snapshots], dtype=float)
    has_h = all(s[2] is not None for s in traj.snapshots)
    heights = np.array([s[2] for s in traj.snapshots], dtype=float) if has_h else np.zeros((0,))
    np.savez_compressed(path, t=times, curves=curves, h=heights)


def load_snapshots(path):
    data = np.load(path)
    times, curves, heights = data["t"], data["curves"], data["h"]
    out = []
    for k, t in enumerate(times):
        h = heights[k] if heights.size else None
        out.append((float(t), curves[k], h))
    return out
