"""Ready-made scenarios."""
from __future__ import annotations

import numpy as np

from .bras import Scenario
from .models import DUBINS_LAYOUT
from .polytope import HPolytope


def turtlebot_scenario() -> Scenario:
    """Unit-box goal, one box obstacle, start ``[-4, 0, pi/5]``, ``tf = 4``.

    The parameter box ``K`` (speed, yaw rate) and the workspace bounds are
    choices of this package.
    """
    return Scenario(
        layout=DUBINS_LAYOUT,
        goal=HPolytope.box([-1.0, -1.0], [1.0, 1.0]),
        obstacles=(HPolytope.box([-2.5, -1.0], [-1.5, 0.0]),),
        K=HPolytope.box([0.5, -1.0], [2.0, 1.0]),
        P_other=HPolytope.box([-np.pi], [np.pi]),
        tf=4.0,
        workspace=HPolytope.box([-5.0, -3.0], [3.0, 3.0]),
        p0=np.array([-4.0, 0.0, np.pi / 5]),
    )
