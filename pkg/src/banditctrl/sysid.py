"""Method-of-moments identification of unknown linear dynamics.

Phase 1 excites the system with sign probes on top of a stabilizing gain
(u_t = -K0 x_t + xi_t, xi_t uniform on {-1, +1}^m) and averages the outer
products N_j = avg_t x_{t+j+1} xi_t'. In expectation N_j = (A - B K0)^j B,
so stacking k of them recovers B directly and A by one shifted least-squares
solve. Phase 2 hands the estimates to an ordinary controller and replays the
believed-dynamics machinery unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bco import BcoConfig
from .errors import ConfigError, ControllabilityError, SolverError
from .lds import CostFunction, LinearSystem, Trajectory, step
from .policies import (BanditPerturbationController, DacClassParams,
                       GradientPerturbationController, LqrController, solve_dare)

_DIVERGENCE_LIMIT = 1e6


@dataclass
class SysIdConfig:
    """Exploration budget and moment depth.

    budget: number of probe rounds T0 (transitions 0..T0 are recorded).
    k: controllability index; moments N_0..N_k are formed.
    probe_gain: stabilizing gain K0 applied during exploration (zero matrix
        is fine for stable systems).
    """

    budget: int
    k: int
    probe_gain: np.ndarray | None = None

    def __post_init__(self):
        if int(self.budget) < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")
        if int(self.k) < 1:
            raise ConfigError(f"controllability index must be >= 1, got {self.k}")
        if self.budget <= 2 * self.k:
            raise ConfigError("budget must exceed twice the controllability index")


def default_budget(horizon: int) -> int:
    """T0 = ceil(T^(2/3) * ln T), the exploration length the regret bound wants."""
    if horizon < 2:
        raise ConfigError("horizon too short to split into explore and commit phases")
    return int(np.ceil(horizon ** (2.0 / 3.0) * np.log(horizon)))


def explore(sys: LinearSystem, cfg: SysIdConfig, disturbances: np.ndarray,
            cost: CostFunction, rng: np.random.Generator):
    """Run the probe phase; returns the recorded trajectory and the probes.

    Rounds 0..budget are played, so states run to x_{budget+1} and the probe
    array has budget+1 rows.
    """
    n, m = sys.state_dim, sys.input_dim
    k0 = np.zeros((m, n)) if cfg.probe_gain is None else np.asarray(cfg.probe_gain, dtype=float)
    if k0.shape != (m, n):
        raise ConfigError(f"probe gain must be {m} x {n}, got {k0.shape}")
    t0 = cfg.budget
    if disturbances.shape[0] < t0 + 1:
        raise ConfigError("disturbance sequence shorter than the exploration budget")
    xi = rng.integers(0, 2, size=(t0 + 1, m)).astype(float) * 2.0 - 1.0
    states = np.zeros((t0 + 2, n))
    actions = np.zeros((t0 + 1, m))
    costs = np.zeros(t0 + 1)
    x = np.zeros(n)
    for t in range(t0 + 1):
        u = -k0 @ x + xi[t]
        c = cost.value(x, u)
        x_next = step(sys, x, u, disturbances[t])
        if np.linalg.norm(x_next) > _DIVERGENCE_LIMIT:
            raise SolverError(f"exploration diverged at round {t}; probe gain does not stabilize")
        states[t] = x
        actions[t] = u
        costs[t] = c
        x = x_next
    states[t0 + 1] = x
    traj = Trajectory(states=states, actions=actions,
                      disturbances=disturbances[:t0 + 1].copy(), costs=costs,
                      meta={"phase": "explore"})
    return traj, xi


@dataclass
class MomentEstimates:
    """Averaged outer products N_0..N_k, each n x m."""

    n_mats: np.ndarray
    samples: int

    @property
    def k(self) -> int:
        return self.n_mats.shape[0] - 1

    def c0(self) -> np.ndarray:
        """[N_0 ... N_{k-1}] stacked horizontally, n x km."""
        return np.concatenate(list(self.n_mats[:-1]), axis=1)

    def c1(self) -> np.ndarray:
        """[N_1 ... N_k] stacked horizontally, n x km."""
        return np.concatenate(list(self.n_mats[1:]), axis=1)


def estimate_moments(states: np.ndarray, xi: np.ndarray, k: int) -> MomentEstimates:
    """N_j = (1 / (T0 - k)) sum_{t=0}^{T0-k-1} x_{t+j+1} xi_t', j = 0..k."""
    t0 = xi.shape[0] - 1
    if t0 - k < 1:
        raise ConfigError("not enough probe rounds for the requested moment depth")
    if states.shape[0] < t0 + 2:
        raise ConfigError("state sequence too short for the probe sequence")
    count = t0 - k
    n = states.shape[1]
    m = xi.shape[1]
    n_mats = np.zeros((k + 1, n, m))
    for j in range(k + 1):
        # sum over t of x_{t+j+1} xi_t' as one matrix product
        n_mats[j] = states[j + 1:j + 1 + count].T @ xi[:count] / count
    return MomentEstimates(n_mats=n_mats, samples=count)


def exact_moments(sys: LinearSystem, probe_gain: np.ndarray, k: int) -> MomentEstimates:
    """Population values N_j = (A - B K0)^j B, for oracle checks."""
    k0 = np.asarray(probe_gain, dtype=float)
    closed = sys.a - sys.b @ k0
    n_mats = np.zeros((k + 1, sys.state_dim, sys.input_dim))
    acc = sys.b.copy()
    for j in range(k + 1):
        n_mats[j] = acc
        acc = closed @ acc
    return MomentEstimates(n_mats=n_mats, samples=0)


@dataclass
class IdentifiedSystem:
    """Recovered matrices plus diagnostics."""

    a_hat: np.ndarray
    b_hat: np.ndarray
    method: str
    cond: float = float("nan")
    used_pinv: bool = False
    err_a: float | None = None
    err_b: float | None = None
    meta: dict = field(default_factory=dict)

    def errors_against(self, sys: LinearSystem) -> "IdentifiedSystem":
        self.err_a = float(np.linalg.norm(self.a_hat - sys.a, "fro"))
        self.err_b = float(np.linalg.norm(self.b_hat - sys.b, "fro"))
        return self

    def report(self) -> dict:
        out = {
            "method": self.method,
            "a_hat": self.a_hat.tolist(),
            "b_hat": self.b_hat.tolist(),
            "cond": self.cond,
            "used_pinv": self.used_pinv,
        }
        if self.err_a is not None:
            out["err_a"] = self.err_a
            out["err_b"] = self.err_b
        out.update(self.meta)
        return out


_COND_LIMIT = 1e12


def recover(moments: MomentEstimates, probe_gain: np.ndarray) -> IdentifiedSystem:
    """Invert the moment identities: B = N_0 and A from the shifted stack.

    With C0 = [N_0..N_{k-1}] and C1 = [N_1..N_k], the closed-loop matrix
    satisfies C1 = (A - B K0) C0, so A = C1 C0'(C0 C0')^-1 + N_0 K0. An
    ill-conditioned C0 C0' means the probes did not excite enough directions
    within k steps.
    """
    c0 = moments.c0()
    c1 = moments.c1()
    gram = c0 @ c0.T
    cond = float(np.linalg.cond(gram))
    b_hat = moments.n_mats[0].copy()
    used_pinv = False
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        sol = c1 @ np.linalg.pinv(c0, rcond=1e-10)
        used_pinv = True
        if not np.all(np.isfinite(sol)):
            raise ControllabilityError(
                f"moment Gram matrix is singular (cond={cond:.3e}); "
                "increase the moment depth k or the probe budget")
    else:
        sol = np.linalg.solve(gram, c0 @ c1.T).T
    a_hat = sol + b_hat @ np.asarray(probe_gain, dtype=float)
    return IdentifiedSystem(a_hat=a_hat, b_hat=b_hat, method="moments",
                            cond=cond, used_pinv=used_pinv,
                            meta={"samples": moments.samples, "k": moments.k})


def least_squares_id(states: np.ndarray, actions: np.ndarray,
                     ridge: float = 1e-8) -> IdentifiedSystem:
    """Ridge regression of x_{t+1} on (x_t, u_t); baseline identifier."""
    t_count = actions.shape[0]
    if states.shape[0] < t_count + 1:
        raise ConfigError("need one more state than actions")
    if t_count < 1:
        raise ConfigError("need at least one transition")
    n = states.shape[1]
    m = actions.shape[1]
    z = np.concatenate([states[:t_count], actions], axis=1)  # (T, n + m)
    y = states[1:t_count + 1]
    gram = z.T @ z + ridge * np.eye(n + m)
    theta = np.linalg.solve(gram, z.T @ y).T  # (n, n + m)
    cond = float(np.linalg.cond(gram))
    return IdentifiedSystem(a_hat=theta[:, :n], b_hat=theta[:, n:],
                            method="least-squares", cond=cond,
                            meta={"samples": t_count, "ridge": ridge})


def identify(sys: LinearSystem, cfg: SysIdConfig, disturbances: np.ndarray,
             cost: CostFunction, rng: np.random.Generator,
             method: str = "moments"):
    """Explore then estimate; returns (trajectory, estimates)."""
    traj, xi = explore(sys, cfg, disturbances, cost, rng)
    k0 = (np.zeros((sys.input_dim, sys.state_dim)) if cfg.probe_gain is None
          else np.asarray(cfg.probe_gain, dtype=float))
    if method == "moments":
        moments = estimate_moments(traj.states, xi, cfg.k)
        ident = recover(moments, k0)
    elif method == "least-squares":
        ident = least_squares_id(traj.states, traj.actions)
    else:
        raise ConfigError(f"unknown identification method {method!r}")
    ident.errors_against(sys)
    return traj, ident


def estimate_disturbances(ident: IdentifiedSystem, states: np.ndarray,
                          actions: np.ndarray) -> np.ndarray:
    """w_hat_t = x_{t+1} - A_hat x_t - B_hat u_t for each recorded transition."""
    t_count = actions.shape[0]
    return (states[1:t_count + 1] - states[:t_count] @ ident.a_hat.T
            - actions @ ident.b_hat.T)


@dataclass
class Algorithm3Record:
    """Everything the explore-then-commit pipeline produced."""

    ident: IdentifiedSystem
    explore_traj: Trajectory
    commit_traj: Trajectory
    controller: object
    k_hat: np.ndarray


def run_algorithm3(sys: LinearSystem, cost: CostFunction, disturbances: np.ndarray,
                   horizon: int, sysid_cfg: SysIdConfig, params: DacClassParams,
                   bco_cfg: BcoConfig | None = None, method: str = "moments",
                   controller: str = "bpc", rng: np.random.Generator | None = None,
                   gpc_lr: float = 0.05, validate: bool = True) -> Algorithm3Record:
    """Explore for sysid_cfg.budget rounds, then commit to a learned controller.

    The commit-phase controller believes the identified matrices (A_hat,
    B_hat) and a gain K_hat solved from them, while the plant still runs the
    true dynamics. The first commit round inherits the exploration's final
    state: its carried disturbance estimate is that whole state (the believed
    rollout restarts from zero), and earlier estimates are zero. Rounds 0..
    horizon - budget - 1 of the commit phase consume the remaining
    disturbance rows.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    t0 = sysid_cfg.budget
    if horizon <= t0 + 1:
        raise ConfigError("horizon leaves no commit phase after exploration")
    if disturbances.shape[0] < horizon + 1:
        raise ConfigError("disturbance sequence shorter than the horizon")

    explore_traj, ident = identify(sys, sysid_cfg, disturbances, cost, rng, method=method)
    believed = LinearSystem(a=ident.a_hat, b=ident.b_hat, w_bound=sys.w_bound)
    k_hat = solve_dare(believed.a, believed.b).k

    commit_len = horizon - t0 - 1  # rounds t0+1 .. horizon
    if bco_cfg is None:
        bco_cfg = BcoConfig(horizon=commit_len + 1, memory=params.memory)

    if controller == "bpc":
        ctrl = BanditPerturbationController(believed, k_hat, params, bco_cfg,
                                            rng=rng, validate=validate)
    elif controller == "gpc":
        ctrl = GradientPerturbationController(believed, k_hat, params, cost, lr_scale=gpc_lr)
    elif controller == "lqr":
        ctrl = LqrController(k_hat)
    else:
        raise ConfigError(f"unknown commit controller {controller!r}")

    x = explore_traj.states[-1].copy()
    if hasattr(ctrl, "history"):
        # the believed rollout restarts here, so the inherited state is the
        # one disturbance the controller can account for
        ctrl.history.push(x)

    n = sys.state_dim
    m = sys.input_dim
    states = np.zeros((commit_len + 2, n))
    actions = np.zeros((commit_len + 1, m))
    costs = np.zeros(commit_len + 1)
    w_used = np.zeros((commit_len + 1, n))
    states[0] = x
    for i, t in enumerate(range(t0 + 1, horizon + 1)):
        u = ctrl.action(x)
        c = cost.value(x, u)
        x_next = step(sys, x, u, disturbances[t])
        if np.linalg.norm(x_next) > _DIVERGENCE_LIMIT:
            raise SolverError(f"commit phase diverged at round {t}")
        ctrl.update(c, x_next)
        actions[i] = u
        costs[i] = c
        w_used[i] = disturbances[t]
        x = x_next
        states[i + 1] = x
    commit_traj = Trajectory(states=states, actions=actions, disturbances=w_used,
                             costs=costs, meta={"phase": "commit", "controller": controller})
    return Algorithm3Record(ident=ident, explore_traj=explore_traj,
                            commit_traj=commit_traj, controller=ctrl, k_hat=k_hat)
