"""Shared helpers: random polynomial sources, finite-difference oracles."""

import numpy as np

from lagreg.expr import evaluate


def random_polynomial_source(rng, names, max_degree=4, n_terms=5):
    """Random polynomial of total degree <= max_degree as grammar source."""
    terms = []
    for _ in range(n_terms):
        coefficient = rng.uniform(-3.0, 3.0)
        degree = int(rng.integers(0, max_degree + 1))
        factors = [f"{coefficient:.6f}"]
        for _ in range(degree):
            factors.append(str(names[int(rng.integers(0, len(names)))]))
        terms.append("*".join(factors))
    return " + ".join(terms)


def central_gradient(expr, chart, arr, h=1e-5):
    """Finite-difference gradient oracle, independent of the dual sweep."""
    arr = np.asarray(arr, dtype=float)
    out = np.zeros(chart.dim)
    for i in range(chart.dim):
        step = np.zeros(chart.dim)
        step[i] = h
        out[i] = (evaluate(expr, arr + step) - evaluate(expr, arr - step)) / (2 * h)
    return out


def central_hessian_entry(expr, chart, arr, i, j, h=1e-4):
    arr = np.asarray(arr, dtype=float)
    ei = np.zeros(chart.dim)
    ej = np.zeros(chart.dim)
    ei[i] = h
    ej[j] = h
    return (
        evaluate(expr, arr + ei + ej)
        - evaluate(expr, arr + ei - ej)
        - evaluate(expr, arr - ei + ej)
        + evaluate(expr, arr - ei - ej)
    ) / (4 * h * h)
