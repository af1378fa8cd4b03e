"""Static PNG renderings of run snapshots.

One figure per field (vorticity, pressure, velocity magnitude), drawn
over the same per-element sub-triangulation the VTK writer emits so the
two outputs show identical data.  Rendering is headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.tri import Triangulation

from .reports import sample_fields

FIGURE_FIELDS = (
    ("vorticity", "vorticity_nodes", "RdBu_r"),
    ("pressure", "pressure", "viridis"),
    ("speed", "speed", "viridis"),
)


def render_field_figures(u, p, t, out_dir, stem) -> list:
    """Write {stem}_{field}.png contour plots; returns the paths."""
    s = sample_fields(u, p)
    tri = Triangulation(s.points[:, 0], s.points[:, 1], s.triangles)
    written = []
    for name, attr, cmap in FIGURE_FIELDS:
        vals = getattr(s, attr)
        lo, hi = float(vals.min()), float(vals.max())
        fig, ax = plt.subplots(figsize=(6.0, 5.0), constrained_layout=True)
        if hi - lo > 1e-12 * max(1.0, abs(hi), abs(lo)):
            mappable = ax.tricontourf(tri, vals, levels=24, cmap=cmap)
        else:
            # contouring needs a spread; constant fields render flat
            mappable = ax.tripcolor(tri, vals, cmap=cmap, shading="gouraud")
        fig.colorbar(mappable, ax=ax)
        ax.set_aspect("equal")
        ax.set_title(f"{name} at t={t:g}")
        path = os.path.join(out_dir, f"{stem}_{name}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
