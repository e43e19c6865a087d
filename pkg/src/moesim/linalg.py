"""Serial-order vector math over plain Python floats.

Every reduction accumulates left to right starting from 0.0, so results
are bit-identical to a straightforward nested-loop implementation on any
platform. Sizes here are desk-scale by design; reproducibility beats
throughput, and BLAS-backed reductions (pairwise/FMA) would not be
bit-stable against the naive oracles the tests use.
"""

from __future__ import annotations

import math
from operator import mul
from typing import Sequence

Vector = Sequence[float]
Matrix = Sequence[Sequence[float]]


def matvec(matrix: Matrix, x: Vector) -> list[float]:
    """rows(matrix) dot x, each row reduced serially left to right."""
    return [sum(map(mul, row, x), 0.0) for row in matrix]


def matvec_columns(matrix: Matrix, x: Vector) -> list[float]:
    """matrix.T dot x for a row-major matrix.

    out[j] accumulates terms in ascending row order, matching a naive
    per-column loop bit for bit.
    """
    if not matrix:
        return []
    ncols = len(matrix[0])
    out = [0.0] * ncols
    for xi, row in zip(x, matrix):
        for j in range(ncols):
            out[j] += xi * row[j]
    return out


def relu(x: Vector) -> list[float]:
    return [v if v > 0.0 else 0.0 for v in x]


def weighted_sum(vectors: Sequence[Vector], weights: Vector) -> list[float]:
    """sum_i weights[i] * vectors[i], accumulated in the given order."""
    out = [0.0] * len(vectors[0])
    for w, vec in zip(weights, vectors):
        for i, v in enumerate(vec):
            out[i] += w * v
    return out


def softmax(logits: Vector) -> list[float]:
    """Numerically stable softmax (max subtraction), serial normalizer."""
    m = max(logits)
    exps = [math.exp(v - m) for v in logits]
    total = sum(exps, 0.0)
    return [e / total for e in exps]


def all_finite(values: Vector) -> bool:
    return all(math.isfinite(v) for v in values)
