"""Permutation inference: pointwise, ball-wise and sup-adjusted p-values.

One permutation is shared across the whole domain within a replicate, so the
joint null distribution of the ball-wise integrated statistics is preserved.
p-values use the (1 + #{permuted >= observed}) / (B + 1) convention: ties
count as extreme and p is never zero. The adjusted value at a grid point is
the maximum ball-wise p over all family balls containing the point; since the
family always contains every singleton, adjusted >= pointwise holds by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import AdjustmentBall, AdjustmentFamily
from .glm import DesignSpec, HypothesisSpec, stat_field

__all__ = [
    "RNG_ALGORITHM",
    "PermutationPlan",
    "PValueFields",
    "NullDistribution",
    "InferenceResult",
    "integrated_stat",
    "generate_permutations",
    "permute_once",
    "null_distribution",
    "pvalues",
    "adjusted_from_ballwise",
    "run_inference",
]

# numpy's default bit generator; recorded in run manifests for reproducibility
RNG_ALGORITHM = "PCG64"

SCHEMES = ("freedman_lane", "raw_label_permutation")


@dataclass
class PermutationPlan:
    """How to generate the permutation null.

    ``null_design`` is the reduced design matrix under the null for the
    Freedman-Lane scheme (defaults to intercept-only). ``permutations`` may
    carry explicit row permutations (B x N), overriding random generation;
    used for exhaustive enumeration on small problems.
    """

    n_permutations: int
    seed: int = 0
    scheme: str = "freedman_lane"
    null_design: np.ndarray | None = None
    permutations: np.ndarray | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.permutations is not None:
            self.permutations = np.asarray(self.permutations, dtype=np.int64)
            self.n_permutations = self.permutations.shape[0]
        if self.n_permutations < 1:
            raise ValueError("need at least one permutation")
        if self.null_design is not None:
            self.null_design = np.asarray(self.null_design, dtype=float)


def generate_permutations(plan: PermutationPlan, n_obs: int) -> np.ndarray:
    """The (B, N) permutation array for a plan, deterministic in the seed."""
    if plan.permutations is not None:
        perms = plan.permutations
        if perms.shape[1] != n_obs:
            raise ValueError("explicit permutations have the wrong length")
        return perms
    rng = np.random.default_rng(plan.seed)
    return np.array(
        [rng.permutation(n_obs) for _ in range(plan.n_permutations)], dtype=np.int64
    )


def _reduced_fit(Y: np.ndarray, plan: PermutationPlan):
    """Fitted values and residuals of the null (reduced) model, columnwise."""
    n = Y.shape[0]
    X0 = plan.null_design
    if X0 is None:
        fits = np.broadcast_to(Y.mean(axis=0), Y.shape)
        return np.array(fits), Y - fits
    if X0.ndim == 1:
        X0 = X0[:, None]
    if np.linalg.matrix_rank(X0) < X0.shape[1]:
        raise ValueError("reduced design is rank deficient")
    beta, *_ = np.linalg.lstsq(X0, Y, rcond=None)
    fits = X0 @ beta
    return fits, Y - fits


def permute_once(
    signals: np.ndarray, plan: PermutationPlan, perm: np.ndarray
) -> np.ndarray:
    """One permuted copy of the signal matrix.

    Freedman-Lane permutes the reduced-model residual rows and adds back the
    reduced-model fits; the raw scheme permutes observation rows directly.
    """
    Y = np.asarray(signals, dtype=float)
    perm = np.asarray(perm, dtype=np.int64)
    if plan.scheme == "raw_label_permutation":
        return Y[perm]
    fits, resid = _reduced_fit(Y, plan)
    return fits + resid[perm]


def integrated_stat(stat_values: np.ndarray, b: AdjustmentBall) -> float:
    """Weighted sum of a stat field over a ball's support."""
    T = np.asarray(stat_values, dtype=float).ravel()
    return float(b.support_weights() @ T[b.support_indices()])


@dataclass
class NullDistribution:
    """Observed and permuted statistics, pointwise and per ball."""

    observed_field: np.ndarray          # (m,)
    observed_ball_stats: np.ndarray     # (n_balls,)
    permuted_fields: np.ndarray         # (B, m)
    permuted_ball_stats: np.ndarray     # (B, n_balls)

    @property
    def n_permutations(self) -> int:
        return self.permuted_fields.shape[0]


def null_distribution(
    signals: np.ndarray,
    design: DesignSpec,
    hypothesis: HypothesisSpec,
    family: AdjustmentFamily,
    plan: PermutationPlan,
) -> NullDistribution:
    """Materialize the full permutation null (small problems and oracles).

    For production-size runs prefer :func:`run_inference`, which accumulates
    counts in chunks and never stores the full permuted ball-stat matrix.
    """
    Y = np.asarray(signals, dtype=float)
    perms = generate_permutations(plan, Y.shape[0])
    T_obs = stat_field(Y, design, hypothesis)
    ball_obs = family.integrated_stats(T_obs)
    T_perm = np.stack(
        [stat_field(permute_once(Y, plan, p), design, hypothesis) for p in perms]
    )
    ball_perm = family.integrated_stats(T_perm).T
    return NullDistribution(T_obs, ball_obs, T_perm, ball_perm)


@dataclass
class PValueFields:
    """Pointwise, ball-wise and sup-adjusted permutation p-values."""

    pointwise: np.ndarray       # (m,)
    ballwise: np.ndarray        # (n_balls,)
    adjusted: np.ndarray        # (m,)
    n_permutations: int

    def tobytes(self) -> bytes:
        """Canonical byte serialization (reproducibility checks)."""
        return b"".join(
            [
                np.int64(self.n_permutations).tobytes(),
                np.ascontiguousarray(self.pointwise, dtype="<f8").tobytes(),
                np.ascontiguousarray(self.ballwise, dtype="<f8").tobytes(),
                np.ascontiguousarray(self.adjusted, dtype="<f8").tobytes(),
            ]
        )


def adjusted_from_ballwise(
    ballwise_p: np.ndarray, family: AdjustmentFamily, ball_mask: np.ndarray | None = None
) -> np.ndarray:
    """Scatter-max of ball-wise p-values into the grid points each ball covers.

    ``ball_mask`` restricts the sup to a sub-family (cap re-adjustment).
    Grid points not covered by any selected ball get 0; with singletons in the
    family every point is covered.
    """
    W = family.weight_matrix
    adj = np.zeros(W.shape[1])
    ball_ids = np.repeat(np.arange(family.n_balls), np.diff(W.indptr))
    entries = np.ones(W.nnz, dtype=bool)
    if ball_mask is not None:
        entries = np.asarray(ball_mask, dtype=bool)[ball_ids]
    np.maximum.at(adj, W.indices[entries], np.asarray(ballwise_p)[ball_ids[entries]])
    return adj


def _p_from_counts(counts: np.ndarray, n_permutations: int) -> np.ndarray:
    return (1.0 + counts) / (n_permutations + 1.0)


def pvalues(nd: NullDistribution, family: AdjustmentFamily) -> PValueFields:
    """p-value fields from a materialized permutation null."""
    B = nd.n_permutations
    point_counts = (nd.permuted_fields >= nd.observed_field).sum(axis=0)
    ball_counts = (nd.permuted_ball_stats >= nd.observed_ball_stats).sum(axis=0)
    p_point = _p_from_counts(point_counts, B)
    p_ball = _p_from_counts(ball_counts, B)
    return PValueFields(p_point, p_ball, adjusted_from_ballwise(p_ball, family), B)


@dataclass
class InferenceResult:
    """Observed statistics and the resulting p-value fields."""

    observed_field: np.ndarray
    observed_ball_stats: np.ndarray
    p: PValueFields


def run_inference(
    signals: np.ndarray,
    design: DesignSpec,
    hypothesis: HypothesisSpec,
    family: AdjustmentFamily,
    plan: PermutationPlan,
    chunk_size: int = 32,
) -> InferenceResult:
    """Full pipeline: permutation null, p-values, sup adjustment.

    Numerically identical to ``pvalues(null_distribution(...), family)`` but
    processes permutations in chunks so only counts are kept.
    """
    Y = np.asarray(signals, dtype=float)
    perms = generate_permutations(plan, Y.shape[0])
    B = perms.shape[0]
    T_obs = stat_field(Y, design, hypothesis)
    ball_obs = family.integrated_stats(T_obs)

    if plan.scheme == "freedman_lane":
        fits, resid = _reduced_fit(Y, plan)

    point_counts = np.zeros(T_obs.shape[0], dtype=np.int64)
    ball_counts = np.zeros(family.n_balls, dtype=np.int64)
    for start in range(0, B, chunk_size):
        batch = perms[start:start + chunk_size]
        if plan.scheme == "raw_label_permutation":
            fields = np.stack(
                [stat_field(Y[p], design, hypothesis) for p in batch]
            )
        else:
            fields = np.stack(
                [stat_field(fits + resid[p], design, hypothesis) for p in batch]
            )
        point_counts += (fields >= T_obs).sum(axis=0)
        ball_counts += (family.integrated_stats(fields) >= ball_obs[:, None]).sum(
            axis=1
        )

    p_point = _p_from_counts(point_counts, B)
    p_ball = _p_from_counts(ball_counts, B)
    fields_out = PValueFields(
        p_point, p_ball, adjusted_from_ballwise(p_ball, family), B
    )
    return InferenceResult(T_obs, ball_obs, fields_out)
