"""Published weather-pair tables: location counts and the three accuracy tables."""

import numpy as np

NAN = float("nan")

COUNTS = np.array([
    [43738, 16782, 7771, 9193, 5063, 2617],
    [16782, 5468, 2852, 3275, 1851, 953],
    [7771, 2852, 864, 1539, 854, 442],
    [9193, 3275, 1539, 1318, 1007, 519],
    [5063, 1851, 854, 1007, 288, 287],
    [2617, 953, 442, 519, 287, 0],
])

CAMERA = np.array([
    [80.32, 83.20, 85.39, 84.61, 83.33, 83.03],
    [83.26, 85.55, 86.68, 87.27, 87.74, 86.99],
    [86.00, 87.24, 87.73, 89.99, 88.06, 88.46],
    [83.67, 85.74, 89.02, 90.14, 89.87, 86.71],
    [79.50, 84.39, 83.37, 89.77, 90.63, 83.28],
    [83.15, 84.78, 88.24, 88.25, 86.41, NAN],
])
CAMERA_ROW_MEANS = [82.08, 84.78, 86.98, 85.53, 82.39, 84.68]
CAMERA_COL_MEANS = [81.82, 84.37, 86.15, 86.47, 85.66, 84.72]
CAMERA_OVERALL = 83.49

LIDAR = np.array([
    [81.21, 81.27, 82.05, 81.05, 80.56, 81.47],
    [81.22, 78.58, 80.29, 78.69, 79.15, 79.64],
    [82.87, 82.71, 82.99, 82.00, 81.50, 84.16],
    [80.39, 77.80, 79.66, 83.31, 84.81, 78.03],
    [81.02, 79.90, 77.87, 86.30, 89.58, 82.58],
    [82.12, 83.32, 82.35, 80.35, 80.49, NAN],
])
LIDAR_ROW_MEANS = [81.25, 80.24, 82.71, 80.24, 81.39, 82.09]
LIDAR_COL_MEANS = [81.29, 80.55, 81.26, 81.15, 81.10, 81.05]
LIDAR_OVERALL = 81.11

FUSED = np.array([
    [83.86, 86.74, 88.25, 87.64, 87.70, 88.54],
    [86.31, 87.75, 90.08, 90.14, 90.49, 89.93],
    [88.05, 90.32, 89.81, 92.92, 90.16, 92.08],
    [87.27, 89.59, 91.36, 92.94, 92.55, 91.52],
    [85.52, 90.01, 88.41, 92.55, 94.79, 90.24],
    [87.08, 89.19, 90.95, 90.94, 92.33, NAN],
])
FUSED_ROW_MEANS = [85.61, 87.67, 89.38, 88.99, 87.86, 88.58]
FUSED_COL_MEANS = [85.29, 87.81, 89.14, 89.42, 89.36, 89.56]
FUSED_OVERALL = 86.91


def correct_counts(percent):
    """Correct-location counts implied by a percentage table and COUNTS."""
    return np.where(COUNTS > 0, np.round(np.nan_to_num(percent) / 100.0 * COUNTS), 0).astype(np.int64)
