import math

import numpy as np

from scalesense.geometry import CameraPose, look_at
from scalesense.priors import load_priors


def random_pose(rng, up=(0.0, 0.0, 1.0)):
    """Camera somewhere around the origin looking roughly at it, with some roll."""
    center = rng.normal(size=3) * 2.0
    center[2] = abs(center[2]) + 0.5
    R = look_at(center, rng.normal(size=3) * 0.1, up)
    roll = rng.uniform(-0.5, 0.5)
    c, s = math.cos(roll), math.sin(roll)
    Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return CameraPose.from_matrix(Rz @ R, center)


def delta_priors(height=0.30):
    return load_priors({"classes": [{"id": 0, "name": "bottle", "bins": [{"height_m": height, "prob": 1.0}]}]})


def uniform4_priors(heights=(0.20, 0.25, 0.30, 0.33)):
    return load_priors(
        {"classes": [{"id": 0, "name": "bottle", "bins": [{"height_m": h, "prob": 0.25} for h in heights]}]}
    )
