"""Fixed 256-pair intensity comparison pattern for the binary descriptor.

Each row is ``(x1, y1, x2, y2)`` in pixels relative to the keypoint. Points were
drawn once from an isotropic Gaussian (sigma = 31/5 px) restricted to a disk of
radius 15 and frozen here; the pattern must never change, descriptors stored
in databases and maps depend on it.
"""

PATTERN = (
    (-7, -7, -4, 2), (-11, -1, 6, 5), (-9, 5, 0, 6), (-1, 4, -3, 1),
    (7, 1, 4, 0), (0, 11, 4, 4), (7, -9, 4, 10), (1, -7, -1, 4),
    (-6, 11, -2, -11), (-6, -4, -1, -4), (-3, 5, -10, -5), (6, 10, 4, 3),
    (-1, -5, -4, -2), (0, -1, -7, 3), (3, 2, -4, -11), (-3, -1, -8, 5),
    (-3, 1, -6, 1), (4, 1, 5, -1), (2, 6, -8, 4), (5, -8, -1, 0),
    (2, -3, 0, -9), (-3, 3, -7, 2), (5, -14, 5, 14), (-4, 9, -1, -4),
    (-6, 2, 8, 4), (8, -4, -4, 0), (3, -4, 5, 1), (-7, 3, -12, 6),
    (3, 1, -5, -2), (1, -3, 1, 3), (-5, 9, 10, 1), (4, -10, -5, -2),
    (-3, 4, -1, -2), (3, 3, 6, -4), (-11, -5, 0, 0), (-2, -8, 4, -2),
    (-6, 3, 4, -4), (8, -2, 7, -8), (10, 2, -10, -2), (2, 2, -14, 4),
    (-10, 3, -7, -10), (1, -5, 0, 0), (-7, 5, 2, 3), (-9, 6, 9, 3),
    (10, 10, 1, -5), (-3, 8, 3, 3), (-9, 5, -2, -5), (-3, 5, -1, -9),
    (6, -4, 1, -7), (1, 3, -1, 1), (-8, 0, 3, -4), (0, -11, -4, 8),
    (-7, 0, -1, -5), (-9, 5, 10, -6), (4, -3, 5, 9), (-3, 12, 4, 0),
    (-7, 6, -6, 5), (-8, 4, -2, -5), (-1, -2, -1, -1), (2, -12, 4, 0),
    (-1, -7, -6, 9), (-6, 8, -5, -2), (10, 1, 2, -6), (5, -8, 1, 3),
    (-6, 5, -3, 5), (0, -10, 4, -1), (-1, 12, 0, -4), (-2, 0, -1, 0),
    (-3, 6, -5, 3), (4, 6, -6, 2), (-2, 12, 4, 3), (-4, 2, 4, 8),
    (1, -1, 6, 5), (-5, -3, 1, 1), (4, -2, -6, -8), (-5, -2, 4, -2),
    (-8, 1, 6, -12), (13, 0, -5, 2), (8, 0, -11, -4), (-3, -4, -1, 3),
    (1, -7, 3, -6), (4, -2, -5, -4), (14, 2, -2, 2), (1, 11, 5, -6),
    (-6, -5, 1, -7), (1, -3, 9, 0), (9, -9, -7, -9), (7, 4, 0, 5),
    (-8, 3, 4, -1), (0, 5, 12, -6), (6, -3, 5, 3), (5, 14, 2, 9),
    (-8, 7, 6, 8), (6, -5, -4, -13), (-5, 8, 3, -4), (-5, 3, 3, 12),
    (-8, -7, 10, 4), (9, 7, 4, 3), (0, 3, 5, -1), (-6, -1, -8, 9),
    (7, -2, 1, -1), (-5, 3, -1, -8), (4, -1, 7, -3), (-10, -7, -6, 6),
    (10, -4, 3, 3), (-1, -4, 9, -4), (-11, -2, 1, 0), (-3, -5, 5, 3),
    (-9, 4, 11, -9), (9, 0, -6, 0), (-3, 3, -13, 2), (-9, 6, 0, -10),
    (-5, 2, 13, 2), (-2, 5, -4, -3), (-4, 5, -3, 5), (8, 1, 5, 2),
    (-4, 6, 12, -5), (1, -1, 5, 14), (7, 1, -1, 2), (-5, 7, -6, -9),
    (9, 9, 0, 4), (10, -3, 7, -3), (5, -10, 0, -5), (-7, -6, 3, 10),
    (-2, -4, -2, 1), (0, 3, 11, 0), (-1, -5, -10, 5), (2, 4, 14, 3),
    (5, -5, -5, 0), (7, 2, 1, 6), (-2, -5, 8, -1), (-3, 7, 7, -8),
    (3, 4, -4, 8), (1, 11, -1, 3), (6, 0, 3, -8), (10, -7, 1, -2),
    (2, 3, -10, -3), (9, -4, 6, -1), (2, 5, 0, 3), (-7, 3, 10, 5),
    (-1, -2, 4, 6), (-4, -2, -3, -3), (-10, -6, 4, 9), (1, -1, 8, 2),
    (-3, 4, -7, -3), (-2, -8, -12, 9), (2, 3, 4, -2), (4, -4, -4, 2),
    (-3, -4, 0, -15), (2, 4, 1, 6), (6, -5, 2, -6), (-7, -11, 4, -9),
    (-8, -1, 5, 14), (7, 6, 2, 1), (9, 9, 1, -1), (-4, 5, -5, 4),
    (-4, -3, -6, 0), (6, 2, -12, -2), (11, -7, 6, -2), (-5, -4, -6, -4),
    (14, -1, 1, 5), (-6, 4, 1, 0), (8, -2, 0, 2), (-1, -10, 4, 0),
    (5, 2, -4, 6), (-1, -4, 4, -13), (2, 2, -7, 9), (-3, -11, -8, -4),
    (4, 0, -1, 2), (11, -3, -5, 6), (-6, 0, -8, 8), (-6, -6, 3, 4),
    (7, -3, 2, 5), (-4, -2, 6, 2), (0, -6, 1, 0), (12, 8, -1, -4),
    (-1, -1, 0, -1), (6, -3, 3, 0), (-1, -3, -13, 0), (-7, -4, -3, -2),
    (4, -10, 3, 1), (-4, 7, -3, 8), (3, 0, 4, -5), (7, -4, 6, 9),
    (-10, -3, -11, 3), (2, 4, 1, 0), (-2, -2, 0, 2), (2, -4, 9, 1),
    (-5, 0, -2, 14), (-8, 2, -1, -8), (-4, 3, -1, -2), (4, 1, 8, 11),
    (-2, -4, 1, -6), (1, 4, -6, -3), (1, -2, 4, 5), (-2, 8, -5, 2),
    (1, -4, 14, 3), (-12, -2, 11, -2), (0, -2, -3, -4), (12, -1, 1, -1),
    (-1, -6, 7, -6), (6, -6, -8, 7), (-3, -7, -8, -4), (-3, 2, -9, 6),
    (1, 0, 5, 5), (-1, 8, 5, -9), (11, -2, 7, 0), (3, -2, 7, 0),
    (-7, 1, -2, 1), (-10, 2, 8, 1), (6, -9, -2, -5), (1, -4, 3, -1),
    (-4, 5, 2, -2), (-5, -6, 8, 2), (-1, 8, 7, -3), (-3, 5, -5, 3),
    (-13, -2, -6, 1), (-10, 9, 4, -2), (5, 0, 1, -3), (1, -7, -4, 2),
    (9, -1, -4, -2), (-6, 3, 8, 10), (5, -4, 7, -1), (-4, 4, -5, 3),
    (-4, -6, -1, -5), (2, 1, -5, 3), (6, 2, -3, 2), (1, -5, 3, -1),
    (6, 6, -10, 3), (6, -10, 13, -3), (-5, -7, 9, -3), (7, 1, 4, -14),
    (6, 11, 1, 8), (-2, -12, 1, -4), (-2, 5, 1, 1), (11, -3, -5, -7),
    (8, -8, -8, 9), (-4, -12, 3, -2), (3, 5, -3, 1), (-3, 6, -5, -3),
    (7, -3, -2, 0), (-5, 3, 2, -5), (7, 11, -1, -3), (-9, 2, 4, 14),
    (-6, 5, -7, -2), (2, -5, 10, -3), (2, -4, -7, 3), (-8, -1, -6, -4),
    (2, -2, -1, 4), (-1, -6, 3, -2), (-1, -3, 2, -3), (4, -8, -3, -8),
    (3, -3, -7, -10), (8, -2, 3, 3), (-3, 6, 9, 2), (-4, -14, 9, 2),
)
