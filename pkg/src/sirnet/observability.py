"""Strong local observability of the infection states from aggregated output.

The measured output mixes all viruses, y_i = sum_k c^k_i x^k_i, so
recovering each virus's infection level requires the stacked matrix

    O = [O^1  O^2  ...  O^m],      O^k = [ C^k
                                           C^k M~^k[t]
                                           ...
                                           C^k M~^k[t] ... M~^k[t+m-2] ]

to have full rank mn.  The decision is made at the all-recovered state
(s = 0 everywhere), where the products collapse to powers of I - h*Gamma^k
and full rank holds exactly when the healing rates at every node are
pairwise distinct across viruses.  The general time-varying matrix is
available for diagnostics only; no observability verdict is attached to
it away from s = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import numerics
from .model import NetworkModel

# healing rates closer than this are flagged as near-degenerate even when
# the numerical rank is nominally full
GAMMA_DISTINCT_TOL = 1e-8


@dataclass(frozen=True)
class ObservabilityReport:
    matrix_dim: tuple[int, int]
    numerical_rank: int
    full_rank: bool
    distinct_gamma: np.ndarray           # per-node flag
    offending_nodes: tuple[str, ...]     # nodes with exactly equal rates
    near_degenerate_nodes: tuple[str, ...]  # conditioning warning


def build_O_block(model: NetworkModel, k: int,
                  states: Optional[Sequence] = None) -> np.ndarray:
    """Stacked (m*n, n) observability block for virus k.

    With ``states`` (a sequence of m-1 epidemic states or susceptible
    vectors) the block stacks C^k, C^k M~[t], ..., C^k M~[t]...M~[t+m-2].
    Without states the all-recovered form is built, where every product
    reduces to a power of I - h*Gamma^k.
    """
    from .analysis import build_M_tilde

    if not 0 <= k < model.m:
        raise ValueError(f"virus index {k} out of range [0, {model.m})")
    n, m = model.n, model.m
    Ck = np.diag(model.c[k])
    rows = [Ck]
    if states is None:
        decay = np.eye(n) - model.h * np.diag(model.gamma[k])
        prod = np.eye(n)
        for _ in range(m - 1):
            prod = prod @ decay
            rows.append(Ck @ prod)
    else:
        if len(states) != m - 1:
            raise ValueError(
                f"expected {m - 1} states for the time-varying block, "
                f"got {len(states)}")
        prod = np.eye(n)
        for st in states:
            prod = prod @ build_M_tilde(model, k, st)
            rows.append(Ck @ prod)
    return np.vstack(rows)


def observability_matrix(model: NetworkModel,
                         states: Optional[Sequence] = None) -> np.ndarray:
    """Full (mn, mn) stacked matrix over all viruses."""
    return np.hstack([build_O_block(model, k, states) for k in range(model.m)])


def observability_at_zero(model: NetworkModel,
                          rank_tol: float = numerics.DEFAULT_RANK_TOL
                          ) -> ObservabilityReport:
    """Observability verdict at the all-recovered state.

    Reports the numerical rank of the stacked matrix alongside the
    independent pairwise-distinct-healing-rate condition, which is
    sufficient for full rank.  Nodes where two viruses heal at nearly the
    same rate are flagged as near-degenerate even if the rank is full.
    """
    n, m = model.n, model.m
    O0 = observability_matrix(model)
    num_rank = numerics.rank(O0, rank_tol)

    distinct = np.ones(n, dtype=bool)
    offending, near = [], []
    for i in range(n):
        gaps = [abs(model.gamma[k, i] - model.gamma[k0, i])
                for k in range(m) for k0 in range(k + 1, m)]
        min_gap = min(gaps) if gaps else np.inf
        if min_gap == 0.0:
            distinct[i] = False
            offending.append(model.node_labels[i])
        elif min_gap < GAMMA_DISTINCT_TOL:
            near.append(model.node_labels[i])
    return ObservabilityReport(
        matrix_dim=(m * n, m * n),
        numerical_rank=num_rank,
        full_rank=num_rank == m * n,
        distinct_gamma=distinct,
        offending_nodes=tuple(offending),
        near_degenerate_nodes=tuple(near))
