"""Headless figure rendering."""

import numpy as np

from versatile_ns.cases import CaseConfig, setup_case
from versatile_ns.figures import render_field_figures
from versatile_ns.space import DiscreteField, interpolate_field

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def test_renders_three_figures(tmp_path):
    ctx = setup_case(CaseConfig(case="taylor_green", k=1, nx=5))
    u = interpolate_field(ctx.V, lambda p: ctx.initial_velocity(p))
    p = DiscreteField(ctx.Q, np.zeros(ctx.Q.n_dofs))
    paths = render_field_figures(u, p, 0.0, tmp_path, "snap")
    assert len(paths) == 3
    names = {str(p).rsplit("snap_", 1)[1] for p in paths}
    assert names == {"vorticity.png", "pressure.png", "speed.png"}
    for path in paths:
        with open(path, "rb") as fh:
            head = fh.read(8)
        assert head == PNG_MAGIC


def test_constant_fields_still_render(tmp_path):
    # zero velocity and pressure leave nothing to contour; the writer
    # must fall back instead of raising
    ctx = setup_case(CaseConfig(case="taylor_green", k=1, nx=4))
    u = DiscreteField(ctx.V, np.zeros(ctx.V.n_dofs))
    p = DiscreteField(ctx.Q, np.zeros(ctx.Q.n_dofs))
    paths = render_field_figures(u, p, 1.0, tmp_path, "flat")
    assert all(path and open(path, "rb").read(8) == PNG_MAGIC
               for path in paths)
