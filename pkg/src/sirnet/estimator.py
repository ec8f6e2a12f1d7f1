"""Distributed Luenberger observer for the multi-virus network.

Each node measures only the aggregated symptomatic fraction
y_i = sum_k c^k_i x^k_i and shares its current estimates with neighbors
instantly and without error.  The observer propagates the model dynamics
on its own estimates and corrects with a per-node innovation term:

    xhat^k_i[t+1] = xhat^k_i[t]
                    + h*(shat_i[t] * sum_j beta^k_ij xhat^k_j[t]
                         - gamma^k_i xhat^k_i[t])
                    + L^k_i * (y_i[t] - yhat_i[t])

with yhat_i[t] = sum_k c^k_i xhat^k_i[t].  The recovered estimate
accumulates the healing outflow of the estimates, and the susceptible
estimate closes the simplex, shat = 1 - sum_k xhat^k - rhat.  With zero
gain and exact initialization the observer therefore replicates the
plant.

Estimates are deliberately not clamped to [0, 1]: an overly aggressive
gain makes them blow up, and that divergence must stay visible (see
``gain_sweep``).

Error bookkeeping: with e^k = x^k - xhat^k, the error obeys
e^k[t+1] = (M^k - L^k C^k) e^k[t] + w^k[t] where w^k collects every
nonlinear and cross-virus term.  w is computed residually from that
identity, and the ratio lstar^k[t] = ||w^k[t]|| / ||e^k[t]|| is the
empirical Lipschitz-like constant used to pick the gain-synthesis bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import build_M
from .model import NetworkModel, Trajectory, observe

DIVERGENCE_LIMIT = 10.0


@dataclass(frozen=True)
class ObserverGain:
    """Per-virus, per-node innovation gains, shape (m, n)."""

    L: np.ndarray

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        if not np.all(np.isfinite(L)):
            raise ValueError("observer gain has non-finite entries")
        object.__setattr__(self, "L", L)

    def scaled(self, eta: float) -> "ObserverGain":
        return ObserverGain(eta * self.L)


@dataclass(frozen=True)
class ObserverState:
    """Estimates at one time index.

    ``s_hat`` always equals 1 - sum_k x_hat^k - r_hat by construction.
    ``healing_accumulator`` is the running sum
    h * sum_{q<=t} sum_k gamma^k x_hat^k[q], i.e. the healing outflow of
    every estimate seen so far including the current one.
    """

    x_hat: np.ndarray
    r_hat: np.ndarray
    s_hat: np.ndarray
    healing_accumulator: np.ndarray
    t: int = 0


def initial_observer_state(model: NetworkModel, x_hat0,
                           r_hat0=None) -> ObserverState:
    """Observer state at t=0 from initial infection estimates."""
    x_hat = np.atleast_2d(np.asarray(x_hat0, dtype=float))
    if x_hat.shape != (model.m, model.n):
        raise ValueError(
            f"x_hat0 must have shape ({model.m}, {model.n}), got {x_hat.shape}")
    r_hat = np.zeros(model.n) if r_hat0 is None else np.asarray(r_hat0, dtype=float)
    s_hat = 1.0 - x_hat.sum(axis=0) - r_hat
    acc = model.h * (model.gamma * x_hat).sum(axis=0)
    return ObserverState(x_hat=x_hat, r_hat=r_hat, s_hat=s_hat,
                         healing_accumulator=acc, t=0)


def observer_step(model: NetworkModel, gain: ObserverGain, obs: ObserverState,
                  y: np.ndarray,
                  gamma_override: Optional[np.ndarray] = None) -> ObserverState:
    """One observer update driven by the measured output ``y``.

    ``gamma_override`` substitutes the healing rates used in the
    prediction and in the recovered-estimate accumulation; the feedback
    controller passes the boosted rates it is currently applying so the
    observer keeps modeling the plant it actually measures.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (model.n,):
        raise ValueError(f"y must have shape ({model.n},), got {y.shape}")
    gamma = model.gamma if gamma_override is None else np.asarray(gamma_override)
    x_hat, s_hat = obs.x_hat, obs.s_hat

    # estimates may blow up under aggressive gains; let them (divergence
    # must stay observable) but keep the overflow quiet
    with np.errstate(over="ignore", invalid="ignore"):
        y_hat = (model.c * x_hat).sum(axis=0)
        innovation = y - y_hat
        # same arithmetic as the plant kernel, plus the innovation correction
        pressure = np.einsum("kij,kj->ki", model.beta, x_hat)
        flow = model.h * s_hat * pressure
        heal = model.h * gamma * x_hat
        x_new = x_hat + flow - heal + gain.L * innovation

        r_new = obs.r_hat + heal.sum(axis=0)
        s_new = 1.0 - x_new.sum(axis=0) - r_new
        acc_new = obs.healing_accumulator + model.h * (gamma * x_new).sum(axis=0)
    return ObserverState(x_hat=x_new, r_hat=r_new, s_hat=s_new,
                         healing_accumulator=acc_new, t=obs.t + 1)


@dataclass(frozen=True)
class ErrorTrace:
    """Estimation-error records over a run against the true trajectory.

    e:          (T+1, m, n) errors x - xhat.
    w:          (T, m, n) residuals e[t+1] - (M - L C) e[t].
    lstar:      (T, m) ratios ||w^k[t]|| / ||e^k[t]||; NaN where undefined.
    lstar_defined: (T, m) flags; False where e^k[t] = 0 or the ratio is
                not finite (diverged estimates).
    aggregated: (T+1,) mean absolute error over all viruses and nodes.
    diverged:   first time index where an estimate left [-10, 10] or
                stopped being finite; None for a sane run.
    """

    e: np.ndarray
    w: np.ndarray
    lstar: np.ndarray
    lstar_defined: np.ndarray
    aggregated: np.ndarray
    diverged: Optional[int] = None


def run_observer(model: NetworkModel, gain: ObserverGain,
                 true_trajectory: Trajectory, obs0: ObserverState
                 ) -> tuple[list[ObserverState], ErrorTrace]:
    """Drive the observer with measurements from a true trajectory.

    Returns the estimate sequence and the full error trace (errors,
    residuals, and the Lipschitz-like ratio wherever the error is
    nonzero).
    """
    horizon = len(true_trajectory) - 1
    states = [obs0]
    obs = obs0
    diverged = None
    for t in range(horizon):
        y = observe(model, true_trajectory[t])
        obs = observer_step(model, gain, obs, y)
        states.append(obs)
        if diverged is None and (not np.all(np.isfinite(obs.x_hat))
                                 or np.abs(obs.x_hat).max() > DIVERGENCE_LIMIT):
            diverged = t + 1

    m, n = model.m, model.n
    e = np.array([true_trajectory[t].x - states[t].x_hat
                  for t in range(horizon + 1)])
    closed = [build_M(model, k) - np.diag(gain.L[k]) @ np.diag(model.c[k])
              for k in range(m)]
    w = np.empty((horizon, m, n))
    lstar = np.full((horizon, m), np.nan)
    defined = np.zeros((horizon, m), dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(horizon):
            for k in range(m):
                w[t, k] = e[t + 1, k] - closed[k] @ e[t, k]
                norm_e = float(np.linalg.norm(e[t, k]))
                ratio = float(np.linalg.norm(w[t, k])) / norm_e \
                    if norm_e > 0.0 else np.nan
                if np.isfinite(ratio):
                    lstar[t, k] = ratio
                    defined[t, k] = True
        aggregated = np.abs(e).mean(axis=(1, 2))
    return states, ErrorTrace(e=e, w=w, lstar=lstar, lstar_defined=defined,
                              aggregated=aggregated, diverged=diverged)


@dataclass(frozen=True)
class SweepPoint:
    eta: float
    t_star: Optional[int]   # first t from which the error stays below threshold
    diverged: bool


def gain_sweep(model: NetworkModel, true_trajectory: Trajectory,
               base_gain: ObserverGain, etas, obs0: ObserverState,
               threshold: float = 0.01) -> list[SweepPoint]:
    """Convergence time of the observer as the gain is scaled.

    For each scale eta the observer runs with eta * base_gain from the
    same initial estimates.  A point is flagged diverged as soon as an
    estimate leaves [-10, 10] or stops being finite; otherwise t* is the
    first index from which the aggregated error remains below
    ``threshold`` through the end of the horizon (None if it never
    settles).
    """
    horizon = len(true_trajectory) - 1
    results = []
    for eta in etas:
        gain = base_gain.scaled(float(eta))
        obs = obs0
        agg = [float(np.abs(true_trajectory[0].x - obs.x_hat).mean())]
        diverged = False
        for t in range(horizon):
            y = observe(model, true_trajectory[t])
            obs = observer_step(model, gain, obs, y)
            if not np.all(np.isfinite(obs.x_hat)) \
                    or np.abs(obs.x_hat).max() > DIVERGENCE_LIMIT:
                diverged = True
                break
            agg.append(float(np.abs(true_trajectory[t + 1].x - obs.x_hat).mean()))
        t_star = None
        if not diverged:
            below = np.array(agg) < threshold
            # last index where the error is still at/above threshold
            above = np.nonzero(~below)[0]
            candidate = 0 if above.size == 0 else int(above[-1]) + 1
            if candidate < len(agg):
                t_star = candidate
        results.append(SweepPoint(eta=float(eta), t_star=t_star, diverged=diverged))
    return results
