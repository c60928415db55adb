"""Shared oracles and masks for the test modules."""

import numpy as np


def off_edge_mask(fn, alphas, margin):
    """True where a monotone step curve ``fn`` has no step within ``margin``.

    For a non-increasing curve ``fn(a - margin) == fn(a + margin)`` holds
    exactly when no step falls inside the window.
    """
    lo = np.array([fn(a - margin) for a in alphas])
    hi = np.array([fn(a + margin) for a in alphas])
    return np.abs(lo - hi) <= 1e-12 * np.maximum(np.abs(lo), 1e-300)


def db(x):
    return 10 * np.log10(np.asarray(x, dtype=float))


# One pass/fail line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: dict = {}


def report(key, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)
    return passed
