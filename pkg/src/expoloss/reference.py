"""Published test accuracies (%) for symmetric label noise, kept for side-by-side
reports. None of these numbers are reproduced by this package; they come from
full-size networks trained by their original authors.

Rows are keyed by dataset then noise rate. The Forward, Backward, Boot-hard,
Boot-soft and D2L columns were collected by Ma et al. (2018); the three
``softmax_e*`` columns are the e-exponentiated softmax cross-entropy runs
reported alongside them.
"""

COLUMNS = ("forward", "backward", "boot_hard", "boot_soft", "d2l",
           "softmax_e1.00", "softmax_e0.75", "softmax_e0.60")

_ROWS = {
    "mnist": {
        0.0: (99.30, 99.23, 99.13, 99.20, 99.28, 99.28, 99.30, 99.30),
        0.2: (96.45, 90.12, 87.69, 88.50, 98.84, 88.29, 88.76, 89.16),
        0.4: (94.90, 70.89, 69.49, 70.19, 98.49, 68.70, 69.18, 71.93),
        0.6: (82.88, 52.83, 50.45, 46.04, 94.73, 46.12, 46.39, 49.23),
    },
    "svhn": {
        0.0: (90.22, 90.16, 89.47, 89.26, 90.32, 91.09, 91.02, 91.07),
        0.2: (85.51, 79.61, 81.21, 79.26, 87.63, 78.99, 79.03, 78.28),
        0.4: (79.09, 64.15, 63.25, 64.30, 82.68, 61.43, 61.15, 60.26),
        0.6: (62.57, 53.14, 47.61, 39.21, 80.92, 39.17, 39.23, 38.73),
    },
    "cifar10": {
        0.0: (90.27, 89.03, 89.06, 89.46, 89.41, 90.33, 90.36, 90.17),
        0.2: (84.61, 79.41, 81.19, 79.21, 85.13, 82.00, 82.94, 84.70),
        0.4: (82.84, 74.69, 76.67, 73.81, 83.36, 75.60, 75.86, 78.62),
        0.6: (72.41, 45.42, 70.57, 68.12, 72.84, 67.02, 68.36, 72.35),
    },
    "cifar100": {
        0.0: (68.54, 68.48, 68.31, 67.89, 68.60, 68.56, 68.34, 67.47),
        0.2: (60.25, 58.74, 58.49, 57.32, 62.20, 59.84, 61.08, 61.96),
        0.4: (51.27, 45.42, 44.41, 41.87, 52.01, 51.56, 53.05, 54.27),
        0.6: (41.22, 34.49, 36.65, 32.29, 42.27, 38.71, 39.41, 39.56),
    },
}

NOISY_LABEL_BASELINES = {
    ds: {f"{rate:.1f}": dict(zip(COLUMNS, vals)) for rate, vals in rows.items()}
    for ds, rows in _ROWS.items()
}


def reference_block(dataset: str | None = None) -> dict:
    """JSON-ready block for result documents, clearly marked as not reproduced."""
    table = NOISY_LABEL_BASELINES if dataset is None else {dataset: NOISY_LABEL_BASELINES.get(dataset, {})}
    return {
        "status": "published reference values, not reproduced",
        "units": "test accuracy (%)",
        "table": table,
    }
