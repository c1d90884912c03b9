import numpy as np

from mmnetloc.bench import Curve
from mmnetloc.plotting import plot_sigma_panels


def test_panels_render_png(tmp_path):
    it = np.arange(20)
    curves = {
        "mm": Curve(it, it * 100, 1.0 / (1 + it), 0.1 / (1 + it)),
        "bb": Curve(it, it * 900, 2.0 / (1 + it), 0.2 / (1 + it)),
    }
    path = tmp_path / "fig.png"
    plot_sigma_panels(curves, 0.05, path)
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
