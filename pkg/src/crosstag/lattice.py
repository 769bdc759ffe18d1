"""Exact inference for linear-chain CRFs over a log-potential lattice.

The lattice is the sole input to inference: ``scores[i, a, b]`` holds the
log-potential of moving from tag ``a`` at position ``i-1`` to tag ``b`` at
position ``i``.  The previous-tag axis has ``k + 1`` rows so that the
beginning-of-tagging symbol can occupy row ``k``; that row is consulted
only at position 0, and rows ``0..k-1`` are ignored there.  All inference
runs in log space in double precision; probabilities only materialize in
:class:`Posteriors`.

Hard exclusions are expressed with the finite sentinel :data:`EXCLUDED`
rather than ``-inf`` so that downstream gradient arithmetic stays total.

The ``brute_force_*`` functions enumerate all ``k**n`` taggings and are
the reference semantics the dynamic programs are tested against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import backend

EXCLUDED = -1.0e9

_BRUTE_FORCE_LIMIT = 10**6


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LogLattice:
    """Per-sentence edge scores in natural-log units."""

    scores: np.ndarray  # float64, shape (n, k + 1, k)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.scores, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[2] < 1:
            raise LatticeError(f"bad lattice shape {arr.shape}")
        if arr.shape[1] != arr.shape[2] + 1:
            raise LatticeError(
                f"previous-tag axis must have k+1 rows, got shape {arr.shape}"
            )
        object.__setattr__(self, "scores", arr)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def k(self) -> int:
        return self.scores.shape[2]

    @property
    def bos(self) -> int:
        return self.k


@dataclass(frozen=True)
class Posteriors:
    """Node and edge marginals plus the log partition value.

    ``edge_marginals[i, a, b]`` is p(t_{i-1} = a, t_i = b | w); at i = 0
    only the beginning-of-tagging row carries mass and it equals the
    first node marginal row.
    """

    node_marginals: np.ndarray  # (n, k)
    edge_marginals: np.ndarray  # (n, k + 1, k)
    log_z: float


def _checked(lattice: LogLattice) -> np.ndarray:
    scores = lattice.scores
    if np.isnan(scores).any():
        raise LatticeError("lattice contains NaN")
    if np.isinf(scores).any():
        raise LatticeError("lattice contains infinities; use the EXCLUDED sentinel")
    return scores


def log_partition(lattice: LogLattice) -> float:
    """log of the sum over all k**n taggings of exp(path score)."""
    _, log_z = backend.crf_forward(_checked(lattice))
    return float(log_z)


def posteriors(lattice: LogLattice) -> Posteriors:
    """Forward-backward node and edge marginals."""
    scores = _checked(lattice)
    n, _, k = scores.shape
    alpha, log_z = backend.crf_forward(scores)
    beta = backend.crf_backward(scores)
    node = np.exp(alpha + beta - log_z)
    edge = np.zeros((n, k + 1, k))
    edge[0, k, :] = node[0]
    if n > 1:
        # alpha is offset by one position relative to the edge it enters.
        edge[1:, :k, :] = np.exp(
            alpha[:-1, :, None] + scores[1:, :k, :] + beta[1:, None, :] - log_z
        )
    return Posteriors(node_marginals=node, edge_marginals=edge, log_z=float(log_z))


def viterbi(lattice: LogLattice) -> tuple[list[int], float]:
    """Best tagging and its unnormalized log score.

    Ties break toward the lower tag index at every backpointer decision,
    including the final position.
    """
    path, score = backend.crf_viterbi(_checked(lattice))
    return [int(t) for t in path], float(score)


def sequence_log_score(lattice: LogLattice, tags) -> float:
    """Unnormalized log score of one tagging."""
    scores = _checked(lattice)
    n, _, k = scores.shape
    if len(tags) != n:
        raise LatticeError(f"expected {n} tags, got {len(tags)}")
    total = 0.0
    prev = k
    for i, tag in enumerate(tags):
        if not 0 <= tag < k:
            raise LatticeError(f"tag index {tag} out of range at position {i}")
        total += scores[i, prev, tag]
        prev = tag
    return total


def sequence_log_prob(lattice: LogLattice, tags) -> float:
    """log p(tags | lattice); never positive."""
    value = sequence_log_score(lattice, tags) - log_partition(lattice)
    # Roundoff can push the dominant path a few ulp above zero.
    return min(value, 0.0)


def _check_brute_force_size(lattice: LogLattice) -> None:
    if lattice.k**lattice.n > _BRUTE_FORCE_LIMIT:
        raise LatticeError(
            f"brute force over k^n = {lattice.k}^{lattice.n} paths exceeds "
            f"the {_BRUTE_FORCE_LIMIT} limit"
        )


def _all_path_scores(lattice: LogLattice):
    scores = _checked(lattice)
    n, _, k = scores.shape
    for path in itertools.product(range(k), repeat=n):
        total = scores[0, k, path[0]]
        for i in range(1, n):
            total += scores[i, path[i - 1], path[i]]
        yield path, float(total)


def brute_force_log_partition(lattice: LogLattice) -> float:
    """Exhaustive-enumeration reference for :func:`log_partition`."""
    _check_brute_force_size(lattice)
    values = np.array([s for _, s in _all_path_scores(lattice)])
    mx = values.max()
    return float(mx + math.log(np.exp(values - mx).sum()))


def brute_force_posteriors(lattice: LogLattice) -> Posteriors:
    """Exhaustive-enumeration reference for :func:`posteriors`."""
    _check_brute_force_size(lattice)
    n, k = lattice.n, lattice.k
    log_z = brute_force_log_partition(lattice)
    node = np.zeros((n, k))
    edge = np.zeros((n, k + 1, k))
    for path, score in _all_path_scores(lattice):
        p = math.exp(score - log_z)
        prev = k
        for i, tag in enumerate(path):
            node[i, tag] += p
            edge[i, prev, tag] += p
            prev = tag
    return Posteriors(node_marginals=node, edge_marginals=edge, log_z=log_z)


def brute_force_viterbi(lattice: LogLattice) -> tuple[list[int], float]:
    """Exhaustive-enumeration reference for :func:`viterbi`.

    Among equal-score paths this selects the one whose reversed tag
    sequence is lexicographically smallest, which is exactly the path the
    backpointer rule (lowest index, decided from the end) produces.
    """
    _check_brute_force_size(lattice)
    best_path = None
    best_score = None
    for path, score in _all_path_scores(lattice):
        if (
            best_score is None
            or score > best_score
            or (score == best_score and path[::-1] < best_path[::-1])
        ):
            best_path, best_score = path, score
    return list(best_path), best_score
