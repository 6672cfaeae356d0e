"""Shared test oracles, independent of the implementations they check."""

import math

import numpy as np


def kappa_oracle(matrix):
    """Brute-force multirater kappa: expand counts back to rater labels and
    count agreeing ordered pairs by enumeration."""
    matrix = np.asarray(matrix)
    n_items, n_categories = matrix.shape
    n = int(matrix[0].sum())
    per_item_agreement = []
    all_labels = []
    for row in matrix:
        labels = []
        for category, count in enumerate(row):
            labels.extend([category] * int(count))
        all_labels.extend(labels)
        agreeing_pairs = sum(
            1
            for i in range(n)
            for j in range(n)
            if i != j and labels[i] == labels[j]
        )
        per_item_agreement.append(agreeing_pairs / (n * (n - 1)))
    p_bar = sum(per_item_agreement) / n_items
    p_j = [all_labels.count(c) / len(all_labels) for c in range(n_categories)]
    p_bar_e = sum(p * p for p in p_j)
    kappa = (p_bar - p_bar_e) / (1 - p_bar_e)
    sum_q = sum(p * (1 - p) for p in p_j)
    variance = (2 / (n_items * n * (n - 1))) * (
        (sum_q ** 2 - sum(p * (1 - p) * (1 - 2 * p) for p in p_j)) / sum_q ** 2
    )
    return kappa, math.sqrt(variance)


def random_rating_matrix(rng, max_items=20, max_raters=6, max_categories=5):
    """Random counts matrix with constant row sums and at least two used
    categories (so chance agreement stays below 1)."""
    while True:
        n_items = int(rng.integers(2, max_items + 1))
        n = int(rng.integers(2, max_raters + 1))
        q = int(rng.integers(2, max_categories + 1))
        matrix = np.zeros((n_items, q), dtype=np.int64)
        for i in range(n_items):
            for _ in range(n):
                matrix[i, int(rng.integers(0, q))] += 1
        if (matrix.sum(axis=0) > 0).sum() >= 2:
            return matrix
