"""Stylized 52-point neutral face layout and its landmark subsets.

Coordinates are image pixels, x to the right and y downward. Points carry a
small fixed irregularity so that no three of them are exactly collinear.
"""

import numpy as np

NEUTRAL_52 = np.array([
    # 0-4 left brow, 5-9 right brow
    (262.14, 178.09), (274.02, 171.41), (287.06, 170.56), (299.88, 171.42),
    (310.69, 176.54), (329.48, 175.97), (339.54, 171.49), (353.58, 169.48),
    (365.99, 171.89), (378.32, 177.49),
    # 10-15 left eye contour, 16 left eye center
    (272.00, 200.44), (281.89, 195.33), (298.05, 194.62), (308.33, 199.70),
    (298.13, 203.74), (282.60, 203.78), (289.77, 199.97),
    # 17-22 right eye contour, 23 right eye center
    (331.85, 200.21), (342.09, 194.90), (357.61, 194.57), (367.72, 200.56),
    (357.98, 203.95), (342.17, 203.85), (350.17, 200.58),
    # 24-27 nose bridge to tip, 28-29 alae, 30-31 nostrils, 32 subnasale
    (320.04, 199.83), (320.03, 215.01), (319.75, 229.63), (320.26, 245.00),
    (304.71, 248.32), (335.50, 248.10), (311.47, 252.06), (328.18, 252.37),
    (319.58, 255.44),
    # 33-44 outer lip contour, clockwise from the left corner
    (296.08, 284.93), (302.41, 278.62), (310.73, 276.51), (319.86, 277.05),
    (329.16, 276.32), (336.59, 278.55), (344.21, 284.60), (337.53, 291.86),
    (329.29, 295.67), (319.75, 297.50), (310.62, 295.91), (303.51, 291.68),
    # 45-50 inner lip contour, 51 chin
    (303.15, 284.60), (312.65, 281.69), (327.50, 281.52), (337.01, 284.62),
    (326.65, 287.46), (312.70, 287.44), (319.56, 329.80),
])

LEFT_EYE_CENTER = 16
RIGHT_EYE_CENTER = 23
EYE_CENTERS = (LEFT_EYE_CENTER, RIGHT_EYE_CENTER)
MOUTH_CORNERS = (33, 39)

_SUBSET_25 = (0, 2, 4, 5, 7, 9, 10, 11, 13, 16, 17, 19, 20, 23,
              24, 26, 27, 28, 29, 32, 33, 36, 39, 42, 51)
_SUBSET_34 = tuple(sorted(_SUBSET_25 + (1, 3, 6, 8, 35, 37, 41, 43, 47)))

LANDMARK_SUBSETS = {
    "25": _SUBSET_25,
    "34": _SUBSET_34,
    "52": tuple(range(52)),
    "all": None,
}


def resolve_subset(name, n_points):
    """Indices selected by a subset name, or ``None`` for every point.

    ``name`` is ``"all"``, one of the named schemes (``"25"``, ``"34"``,
    ``"52"``, defined on the 52-point layout) or a comma-separated list.
    """
    name = str(name).strip()
    if name in LANDMARK_SUBSETS:
        subset = LANDMARK_SUBSETS[name]
        if subset is not None and n_points != 52:
            raise ValueError(f"subset {name!r} is defined on 52 points, data has {n_points}")
    else:
        subset = tuple(int(t) for t in name.split(","))
        if list(subset) != sorted(set(subset)):
            raise ValueError("custom subset must list distinct indices in increasing order")
    if subset is not None and (len(subset) < 3 or subset[-1] >= n_points or subset[0] < 0):
        raise ValueError(f"invalid landmark subset {name!r} for {n_points} points")
    return subset
