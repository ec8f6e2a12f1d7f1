"""Competitive multi-virus SIR dynamics on a node network.

A network of ``n`` subpopulations carries ``m`` mutually exclusive
viruses.  Per node, susceptible/infected/recovered fractions evolve by
the sampled update

    s_i[t+1] = s_i[t] - h * s_i[t] * sum_k sum_j beta^k_ij * x^k_j[t]
    x^k_i[t+1] = x^k_i[t] + h * (s_i[t] * sum_j beta^k_ij * x^k_j[t]
                                 - gamma^k_i * x^k_i[t])
    r_i[t+1] = r_i[t] + h * sum_k gamma^k_i * x^k_i[t]

which conserves s + sum_k x^k + r = 1 per node.  Well-definedness rests
on four model assumptions (initial simplex state, nonnegative rates with
positive healing, a small enough sampling step, and measurement
coefficients in (0, 1]); ``validate`` reports each one as pass/fail
rather than raising, so misconfigured models can be diagnosed.

The update kernel is shared with the observer and controller modules
(parameterized by the applied healing rates) so that loops which must
replicate the plant do so with identical arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-12
# slack for runtime output checks; rounding noise only, never model error
_STEP_CHECK_TOL = 1e-9


class ModelError(RuntimeError):
    """A dynamics step produced a state violating its invariants."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkModel:
    """Per-virus infection matrices, healing rates, measurement
    coefficients, and the sampling step.

    beta:   (m, n, n) array, beta[k][i][j] = transmission rate from node j
            to node i for virus k.
    gamma:  (m, n) healing rates.
    c:      (m, n) measurement coefficients (probability of showing
            symptoms when infected with virus k at node i).
    h:      sampling step.
    node_labels: names used in reports and CSV output.
    """

    beta: np.ndarray
    gamma: np.ndarray
    c: np.ndarray
    h: float = 1.0
    node_labels: tuple[str, ...] = ()

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        if beta.ndim == 2:
            beta = beta[np.newaxis, :, :]
        if beta.ndim != 3 or beta.shape[1] != beta.shape[2]:
            raise ValueError(f"beta must be (m, n, n), got shape {beta.shape}")
        m, n = beta.shape[0], beta.shape[1]
        if gamma.shape != (m, n):
            raise ValueError(f"gamma must have shape ({m}, {n}), got {gamma.shape}")
        if c.shape != (m, n):
            raise ValueError(f"c must have shape ({m}, {n}), got {c.shape}")
        for name, a in (("beta", beta), ("gamma", gamma), ("c", c)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError("sampling step h must be positive")
        labels = tuple(self.node_labels) or tuple(f"node{i}" for i in range(n))
        if len(labels) != n:
            raise ValueError(f"expected {n} node labels, got {len(labels)}")
        object.__setattr__(self, "beta", _freeze(beta))
        object.__setattr__(self, "gamma", _freeze(gamma))
        object.__setattr__(self, "c", _freeze(c))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "node_labels", labels)

    @property
    def n(self) -> int:
        return self.beta.shape[1]

    @property
    def m(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class EpidemicState:
    """Susceptible/infected/recovered fractions at one time index.

    s: (n,), x: (m, n) infected fraction per virus, r: (n,).
    """

    s: np.ndarray
    x: np.ndarray
    r: np.ndarray
    t: int = 0

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        if s.ndim != 1 or r.shape != s.shape or x.ndim != 2 or x.shape[1] != s.shape[0]:
            raise ValueError(
                f"inconsistent state shapes: s {s.shape}, x {x.shape}, r {r.shape}")
        for name, a in (("s", s), ("x", x), ("r", r)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"state component {name} has non-finite entries")
        object.__setattr__(self, "s", _freeze(s))
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "r", _freeze(r))
        object.__setattr__(self, "t", int(self.t))

    def simplex_residual(self) -> float:
        """max over nodes of |s + sum_k x^k + r - 1|."""
        return float(np.abs(self.s + self.x.sum(axis=0) + self.r - 1.0).max())


def initial_state(model: NetworkModel, x0, r0=None) -> EpidemicState:
    """State at t=0 with s chosen to close the per-node simplex."""
    x = np.atleast_2d(np.asarray(x0, dtype=float))
    if x.shape != (model.m, model.n):
        raise ValueError(f"x0 must have shape ({model.m}, {model.n}), got {x.shape}")
    r = np.zeros(model.n) if r0 is None else np.asarray(r0, dtype=float)
    s = 1.0 - x.sum(axis=0) - r
    return EpidemicState(s=s, x=x, r=r, t=0)


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    offenders: tuple = ()
    detail: str = ""

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        msg = f"{self.name}: {status}"
        if not self.passed and self.detail:
            msg += f" ({self.detail})"
        return msg


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[AssumptionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]

    def __str__(self) -> str:
        return "\n".join(str(c) for c in self.checks)


def validate(model: NetworkModel, state0: EpidemicState) -> ValidationReport:
    """Check the four model assumptions for (model, state0).

    Dimension mismatches raise; assumption violations are returned as
    report entries with the offending (virus, node) indices.
    """
    if state0.x.shape != (model.m, model.n):
        raise ValueError(
            f"state has {state0.x.shape} infection entries, "
            f"model expects ({model.m}, {model.n})")
    labels = model.node_labels
    checks = []

    comps = np.concatenate([state0.s[np.newaxis, :], state0.x,
                            state0.r[np.newaxis, :]])
    bad_bounds = np.argwhere((comps < -SIMPLEX_TOL) | (comps > 1.0 + SIMPLEX_TOL))
    residual = state0.simplex_residual()
    off = [labels[j] for _, j in bad_bounds]
    ok = len(off) == 0 and residual <= SIMPLEX_TOL
    detail = ""
    if off:
        detail = f"components outside [0,1] at nodes {sorted(set(off))}"
    elif residual > SIMPLEX_TOL:
        detail = f"per-node sums deviate from 1 by up to {residual:.3e}"
    checks.append(AssumptionCheck(
        "initial state on the unit simplex", ok, tuple(sorted(set(off))), detail))

    bad_beta = np.argwhere(model.beta < 0.0)
    bad_gamma = np.argwhere(model.gamma <= 0.0)
    offenders = [(int(k), labels[int(i)]) for k, i, _ in bad_beta]
    offenders += [(int(k), labels[int(i)]) for k, i in bad_gamma]
    ok = not offenders
    checks.append(AssumptionCheck(
        "nonnegative infection rates, positive healing rates", ok,
        tuple(offenders),
        "" if ok else f"offending (virus, node): {offenders}"))

    out_rate = model.h * model.beta.sum(axis=(0, 2))   # h * sum_k sum_j beta
    heal_rate = model.h * model.gamma.sum(axis=0)      # h * sum_k gamma
    bad = [labels[i] for i in range(model.n)
           if out_rate[i] > 1.0 + SIMPLEX_TOL or heal_rate[i] > 1.0 + SIMPLEX_TOL]
    ok = not bad
    checks.append(AssumptionCheck(
        "sampling step small enough (per-node total rates <= 1)", ok, tuple(bad),
        "" if ok else
        f"nodes with h*rate > 1: {bad}; worst infection row {out_rate.max():.4g}, "
        f"worst healing sum {heal_rate.max():.4g}"))

    bad_c = np.argwhere((model.c <= 0.0) | (model.c > 1.0))
    offenders = [(int(k), labels[int(i)]) for k, i in bad_c]
    ok = not offenders
    checks.append(AssumptionCheck(
        "measurement coefficients in (0, 1]", ok, tuple(offenders),
        "" if ok else f"offending (virus, node): {offenders}"))

    return ValidationReport(tuple(checks))


def step_with_healing(model: NetworkModel, state: EpidemicState,
                      gamma_eff: np.ndarray) -> EpidemicState:
    """One dynamics step with the given applied healing rates (m, n).

    This is the shared kernel: the plain dynamics use the model's healing
    rates, the feedback controller passes boosted ones.  New infections
    always use the model's infection rates and the current true s.
    """
    s, x = state.s, state.x
    pressure = np.einsum("kij,kj->ki", model.beta, x)   # (B^k x^k)_i
    flow = model.h * s * pressure                        # new infections, (m, n)
    heal = model.h * gamma_eff * x                       # recoveries, (m, n)
    s_new = s - flow.sum(axis=0)
    x_new = x + flow - heal
    r_new = state.r + heal.sum(axis=0)
    out = EpidemicState(s=s_new, x=x_new, r=r_new, t=state.t + 1)
    lo = min(s_new.min(), x_new.min(), r_new.min())
    hi = max(s_new.max(), x_new.max(), r_new.max())
    if lo < -_STEP_CHECK_TOL or hi > 1.0 + _STEP_CHECK_TOL \
            or out.simplex_residual() > _STEP_CHECK_TOL:
        raise ModelError(
            f"step produced an invalid state at t={out.t} "
            f"(range [{lo:.3e}, {hi:.3e}], simplex residual "
            f"{out.simplex_residual():.3e}); check the model assumptions")
    return out


def step(model: NetworkModel, state: EpidemicState) -> EpidemicState:
    """Advance one sampling step under the nominal healing rates."""
    return step_with_healing(model, state, model.gamma)


def step_compact(model: NetworkModel, state: EpidemicState, k: int) -> np.ndarray:
    """Infected-state update for virus k in compact matrix form.

    Returns (I + h*(diag(s) B^k - Gamma^k)) x^k, which must agree with the
    per-node update inside 1e-13.
    """
    if not 0 <= k < model.m:
        raise ValueError(f"virus index {k} out of range [0, {model.m})")
    n = model.n
    m_tilde = np.eye(n) + model.h * (np.diag(state.s) @ model.beta[k]
                                     - np.diag(model.gamma[k]))
    return m_tilde @ state.x[k]


@dataclass
class Trajectory:
    """Time-ordered states from one simulation run."""

    model: NetworkModel
    states: list[EpidemicState] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i) -> EpidemicState:
        return self.states[i]

    def infection(self, k: int) -> np.ndarray:
        """(T+1, n) infected fractions of virus k over time."""
        return np.array([st.x[k] for st in self.states])

    def total_infection(self, k: int) -> np.ndarray:
        """(T+1,) network-wide infected fraction sum for virus k."""
        return np.array([st.x[k].sum() for st in self.states])

    def susceptible(self) -> np.ndarray:
        return np.array([st.s for st in self.states])

    def recovered(self) -> np.ndarray:
        return np.array([st.r for st in self.states])

    def observations(self) -> np.ndarray:
        """(T+1, n) measured symptomatic output at every step."""
        return np.array([observe(self.model, st) for st in self.states])


def simulate(model: NetworkModel, state0: EpidemicState, horizon: int) -> Trajectory:
    """Run the dynamics for ``horizon`` steps; returns horizon+1 states."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    states = [state0]
    st = state0
    for _ in range(horizon):
        st = step(model, st)
        states.append(st)
    return Trajectory(model=model, states=states)


def observe(model: NetworkModel, state: EpidemicState) -> np.ndarray:
    """Aggregated symptomatic output y_i = sum_k c^k_i x^k_i."""
    return (model.c * state.x).sum(axis=0)
