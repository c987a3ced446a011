import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

TWO_PI = 2 * np.pi
REPO = Path(__file__).resolve().parents[1]


def shell_chart(r0, r1, counts):
    return {"topology": "lat-long-sphere-shell", "radii": [r0, r1], "counts": list(counts)}


def box_chart(n, counts=8, extent=TWO_PI):
    return {"topology": "periodic-box", "extents": [extent] * n, "counts": [counts] * n}


def pg(orientation="future", chart=None, **kw):
    """Painleve-Gullstrand Schwarzschild slice, m = 1."""
    desc = {"preset": "schwarzschild", "mass": 1.0, "slicing": "painleve-gullstrand",
            "time_orientation": orientation, "chart": chart or shell_chart(1.5, 4.0, (9, 9, 10))}
    desc.update(kw)
    return desc


@pytest.fixture
def configs_dir():
    return REPO / "configs"
