"""Experiment harness: repeated closed-loop runs, paired disturbances,
confidence intervals, and regret against the best disturbance-action policy
in hindsight.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import presets
from .bco import BcoConfig
from .errors import ConfigError, SolverError
from .lds import CostFunction, DisturbanceGenerator, LinearSystem, Trajectory, step
from .policies import (BanditPerturbationController, DacClassParams,
                       GradientPerturbationController, LqrController,
                       project_dac_class, solve_dare)
from .sysid import SysIdConfig, default_budget, run_algorithm3

_DIVERGENCE_LIMIT = 1e6

KNOWN_ALGORITHMS = ("lqr", "gpc", "bpc")
SYSID_CONTROLLERS = ("lqr", "gpc", "bpc")
SYSID_METHODS = ("moments", "least-squares")


def parse_algorithm(name: str):
    """Split an algorithm name into (controller, sysid_method or None)."""
    if name in KNOWN_ALGORITHMS:
        return name, None
    for ctrl in SYSID_CONTROLLERS:
        prefix = f"{ctrl}-sysid-"
        if name.startswith(prefix):
            method = name[len(prefix):]
            if method in SYSID_METHODS:
                return ctrl, method
    raise ConfigError(
        f"unknown algorithm {name!r}; use one of {KNOWN_ALGORITHMS} or "
        f"<controller>-sysid-<method> with methods {SYSID_METHODS}")


_NOISE_SUGAR = {
    "walk-var-1-over-T": {"kind": "random-walk", "walk_std": None},
    "walk-std-0.3": {"kind": "random-walk", "walk_std": 0.3},
}


@dataclass
class ExperimentConfig:
    """Everything one benchmark cell needs; plain values so it serializes."""

    name: str = "experiment"
    system: object = "double-integrator"
    noise: object = "iid-gaussian"
    cost: str = "quadratic"
    algorithms: tuple = ("lqr", "gpc", "bpc")
    horizon: int = 1000
    runs: int = 25
    seed: int = 0
    memory: int = 3
    kappa: float = 1.5
    gamma: float = 0.1
    kappa_b: Optional[float] = None
    eta_scale: float = 1.0
    delta_scale: float = 1.0
    delta: Optional[float] = None
    lipschitz: float = 1.0
    loss_bound: Optional[float] = None
    fixed_rate: bool = False
    gpc_lr: float = 0.05
    gpc_grad_mode: str = "analytic"
    oracle: bool = False
    oracle_memory: Optional[int] = None
    skip_transient: bool = False
    sysid_budget: Optional[int] = None
    sysid_k: Optional[int] = None
    jobs: int = 1
    validate: bool = True

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if int(self.runs) < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if int(self.memory) < 1:
            raise ConfigError(f"memory must be >= 1, got {self.memory}")
        if int(self.jobs) < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if int(self.seed) < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        self.algorithms = tuple(self.algorithms)
        if len(self.algorithms) == 0:
            raise ConfigError("need at least one algorithm")
        for alg in self.algorithms:
            parse_algorithm(alg)
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("duplicate algorithm names")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from a plain dict, applying a named preset first."""
    if not isinstance(raw, dict):
        raise ConfigError("experiment config must be a mapping")
    raw = dict(raw)
    merged = {}
    preset_name = raw.pop("preset", None)
    if preset_name is not None:
        merged.update(presets.experiment_preset(preset_name))
        merged.setdefault("name", preset_name)
    merged.update(raw)
    allowed = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(merged) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "algorithms" in merged:
        merged["algorithms"] = tuple(merged["algorithms"])
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def resolve_system(spec) -> LinearSystem:
    if isinstance(spec, LinearSystem):
        return spec
    if isinstance(spec, str):
        return presets.system_preset(spec)
    if isinstance(spec, dict):
        extra = set(spec) - {"a", "b", "w_bound"}
        if extra:
            raise ConfigError(f"unknown system keys: {sorted(extra)}")
        if "a" not in spec or "b" not in spec:
            raise ConfigError("inline system needs 'a' and 'b' matrices")
        return LinearSystem(a=np.array(spec["a"], dtype=float),
                            b=np.array(spec["b"], dtype=float),
                            w_bound=float(spec.get("w_bound", 10.0)))
    raise ConfigError(f"cannot interpret system spec {spec!r}")


def resolve_noise(spec, dim: int, horizon: int, bound: float) -> DisturbanceGenerator:
    if isinstance(spec, str):
        spec = _NOISE_SUGAR.get(spec, {"kind": spec})
    elif isinstance(spec, dict):
        spec = dict(spec)
        kind = spec.get("kind")
        if kind in _NOISE_SUGAR:
            base = dict(_NOISE_SUGAR[kind])
            base.update({k: v for k, v in spec.items() if k != "kind"})
            spec = base
    else:
        raise ConfigError(f"cannot interpret noise spec {spec!r}")
    extra = set(spec) - {"kind", "walk_std", "bound", "replay"}
    if extra:
        raise ConfigError(f"unknown noise keys: {sorted(extra)}")
    if "kind" not in spec:
        raise ConfigError("noise spec needs a 'kind'")
    return DisturbanceGenerator(kind=spec["kind"], dim=dim,
                                walk_std=spec.get("walk_std"),
                                replay=spec.get("replay"),
                                bound=spec.get("bound", bound))


# ---------------------------------------------------------------------------
# Closed-loop simulation


def simulate(sys: LinearSystem, controller, disturbances: np.ndarray,
             cost: CostFunction, horizon: int) -> Trajectory:
    """Drive a controller for rounds 0..horizon from the zero state."""
    if disturbances.shape[0] < horizon + 1:
        raise ConfigError("disturbance sequence shorter than the horizon")
    n = sys.state_dim
    m = sys.input_dim
    states = np.zeros((horizon + 2, n))
    actions = np.zeros((horizon + 1, m))
    costs = np.zeros(horizon + 1)
    x = np.zeros(n)
    for t in range(horizon + 1):
        u = np.asarray(controller.action(x), dtype=float).reshape(-1)
        c = cost.value(x, u)
        x_next = step(sys, x, u, disturbances[t])
        if np.linalg.norm(x_next) > _DIVERGENCE_LIMIT:
            raise SolverError(f"simulation diverged at round {t}")
        controller.update(c, x_next)
        states[t] = x
        actions[t] = u
        costs[t] = c
        x = x_next
    states[horizon + 1] = x
    return Trajectory(states=states, actions=actions,
                      disturbances=disturbances[:horizon + 1].copy(), costs=costs)


def counterfactual_dac_cost(sys: LinearSystem, k_gain: np.ndarray,
                            m_tensor: np.ndarray, disturbances: np.ndarray,
                            cost: CostFunction, horizon: int | None = None) -> np.ndarray:
    """Per-step costs of holding the DAC tensor fixed over the whole run.

    Straightforward replay loop; the hindsight oracle uses an independent
    affine decomposition, and the two must agree.
    """
    if horizon is None:
        horizon = disturbances.shape[0] - 1
    h = m_tensor.shape[0]
    n = sys.state_dim
    x = np.zeros(n)
    out = np.zeros(horizon + 1)
    for t in range(horizon + 1):
        u = -k_gain @ x
        for i in range(1, h + 1):
            if t - i >= 0:
                u = u + m_tensor[i - 1] @ disturbances[t - i]
        out[t] = cost.value(x, u)
        x = step(sys, x, u, disturbances[t])
    return out


# ---------------------------------------------------------------------------
# Hindsight oracle


def affine_replay(sys: LinearSystem, k_gain: np.ndarray, disturbances: np.ndarray,
                  memory: int, horizon: int | None = None):
    """Affine decomposition x_t(M) = P[t] + PHI[t] @ vec(M), u_t(M) = Q[t] + PSI[t] @ vec(M).

    Valid because the closed loop is linear in the policy tensor when the
    disturbances are held fixed.
    """
    if horizon is None:
        horizon = disturbances.shape[0] - 1
    n = sys.state_dim
    m = sys.input_dim
    h = memory
    d = h * m * n
    a_cl = sys.a - sys.b @ k_gain
    p = np.zeros((horizon + 1, n))
    phi = np.zeros((horizon + 1, n, d))
    q = np.zeros((horizon + 1, m))
    psi = np.zeros((horizon + 1, m, d))
    w_sel = np.zeros((m, d))
    for t in range(horizon + 1):
        w_sel[:] = 0.0
        for i in range(1, min(h, t) + 1):
            base = (i - 1) * m * n
            w_i = disturbances[t - i]
            for a in range(m):
                w_sel[a, base + a * n: base + a * n + n] = w_i
        q[t] = -k_gain @ p[t]
        psi[t] = -k_gain @ phi[t] + w_sel
        if t < horizon:
            p[t + 1] = a_cl @ p[t] + disturbances[t]
            phi[t + 1] = a_cl @ phi[t] + sys.b @ w_sel
    return p, phi, q, psi


@dataclass
class HindsightOracle:
    """Result of the best-fixed-DAC search on one disturbance realization."""

    m_star: np.ndarray
    objective: float
    iterations: int
    grad_norm: float
    converged: bool
    start_round: int = 0


def _oracle_objective(cost, p, phi, q, psi, mvec, start):
    xs = p + phi @ mvec
    us = q + psi @ mvec
    vals = cost.value_batch(xs, us)
    return float(np.sum(vals[start:])), xs, us


def _oracle_gradient(cost, phi, psi, xs, us, start):
    gx, gu = cost.grad_batch(xs, us)
    return (np.einsum("tnd,tn->d", phi[start:], gx[start:])
            + np.einsum("tmd,tm->d", psi[start:], gu[start:]))


def best_dac_in_hindsight(sys: LinearSystem, k_gain: np.ndarray,
                          disturbances: np.ndarray, cost: CostFunction,
                          params: DacClassParams, tol: float = 1e-6,
                          max_iter: int = 10_000, start_round: int = 0,
                          horizon: int | None = None) -> HindsightOracle:
    """Projected (sub)gradient descent from M = 0 on the fixed-DAC cost.

    Quadratic costs use backtracking line search; the nonsmooth kinds use a
    diminishing step and keep the best iterate seen. `converged` is False
    only when the iteration cap was hit while the gradient (or recent
    progress) was still large.
    """
    h = params.memory
    m = sys.input_dim
    n = sys.state_dim
    d = h * m * n
    p, phi, q, psi = affine_replay(sys, k_gain, disturbances, h, horizon=horizon)

    def project(vec):
        return project_dac_class(params, vec.reshape(h, m, n)).reshape(-1)

    cur = np.zeros(d)
    obj, xs, us = _oracle_objective(cost, p, phi, q, psi, cur, start_round)
    best_obj, best_vec = obj, cur.copy()
    g = _oracle_gradient(cost, phi, psi, xs, us, start_round)
    gnorm = float(np.linalg.norm(g))
    smooth = cost.kind == "quadratic"
    lr = 1.0
    base = float(np.sum(params.radii())) / (gnorm + 1e-12)
    it = 0
    converged = gnorm < tol
    stall = 0
    for it in range(1, max_iter + 1):
        if gnorm < tol:
            converged = True
            break
        if smooth:
            while True:
                cand = project(cur - lr * g)
                cand_obj, xs_c, us_c = _oracle_objective(cost, p, phi, q, psi, cand, start_round)
                if cand_obj <= obj - 1e-4 * lr * gnorm**2 or lr < 1e-14:
                    break
                lr *= 0.5
            if lr < 1e-14:
                # projected stationary point: steps no longer move the iterate
                converged = float(np.linalg.norm(cand - cur)) < 1e-12
                break
            cur, obj, xs, us = cand, cand_obj, xs_c, us_c
            lr = min(lr * 1.3, 1e6)
            if obj < best_obj - 1e-15:
                best_obj, best_vec = obj, cur.copy()
                stall = 0
            else:
                stall += 1
        else:
            lr_t = base / np.sqrt(it)
            cur = project(cur - lr_t * g)
            obj, xs, us = _oracle_objective(cost, p, phi, q, psi, cur, start_round)
            if obj < best_obj - 1e-12:
                best_obj, best_vec = obj, cur.copy()
                stall = 0
            else:
                stall += 1
        g = _oracle_gradient(cost, phi, psi, xs, us, start_round)
        gnorm = float(np.linalg.norm(g))
        if stall > 500:
            converged = True
            break
    return HindsightOracle(m_star=best_vec.reshape(h, m, n), objective=best_obj,
                           iterations=it, grad_norm=gnorm, converged=converged,
                           start_round=start_round)


def grid_best_dac(sys: LinearSystem, k_gain: np.ndarray, disturbances: np.ndarray,
                  cost: CostFunction, params: DacClassParams, spacing: float = 1e-2,
                  start_round: int = 0, horizon: int | None = None):
    """Brute-force reference for tiny policy classes (dimension <= 3).

    Evaluates the fixed-DAC cost on a regular grid over the class bounding
    box, skipping points outside the class, and returns the best tensor and
    its objective.
    """
    h = params.memory
    m = sys.input_dim
    n = sys.state_dim
    d = h * m * n
    if d > 3:
        raise ConfigError(f"grid search only supported up to dimension 3, got {d}")
    p, phi, q, psi = affine_replay(sys, k_gain, disturbances, h, horizon=horizon)
    radii = params.radii()
    caps = np.repeat(radii, m * n)
    axes = [np.arange(-c, c + spacing / 2, spacing) for c in caps]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.reshape(-1) for g in mesh], axis=1)
    # drop grid points outside the class (box is only its bounding box)
    keep = np.ones(pts.shape[0], dtype=bool)
    for j in range(h):
        block = pts[:, j * m * n:(j + 1) * m * n]
        if m == 1 or n == 1:
            norms = np.linalg.norm(block, axis=1)
        else:
            norms = np.linalg.norm(block.reshape(-1, m, n), ord=2, axis=(1, 2))
        keep &= norms <= radii[j] + 1e-12
    pts = pts[keep]
    best_obj = np.inf
    best_vec = np.zeros(d)
    chunk = 20_000
    for lo in range(0, pts.shape[0], chunk):
        batch = pts[lo:lo + chunk]
        xs = p[None, :, :] + np.einsum("tnd,gd->gtn", phi, batch)
        us = q[None, :, :] + np.einsum("tmd,gd->gtm", psi, batch)
        t_count = xs.shape[1]
        flat_x = xs.reshape(-1, n)
        flat_u = us.reshape(-1, m)
        vals = cost.value_batch(flat_x, flat_u).reshape(-1, t_count)
        objs = np.sum(vals[:, start_round:], axis=1)
        i = int(np.argmin(objs))
        if objs[i] < best_obj:
            best_obj = float(objs[i])
            best_vec = batch[i].copy()
    return best_vec.reshape(h, m, n), best_obj


# ---------------------------------------------------------------------------
# Experiment driver


@dataclass
class RunRecord:
    """All series produced by one experiment cell."""

    config: ExperimentConfig
    costs: dict                      # alg -> (runs, T+1)
    trajectories: dict               # alg -> list of Trajectory
    disturbances: list               # per seed (T+1, n)
    w_hashes: list
    loss_bounds: list
    k_gain: np.ndarray
    params: DacClassParams
    oracles: Optional[list] = None   # per seed HindsightOracle
    sysid_reports: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def cumulative(self, alg: str) -> np.ndarray:
        return np.cumsum(self.costs[alg], axis=1)

    def total_costs(self, alg: str) -> np.ndarray:
        start = self._start_round()
        return np.sum(self.costs[alg][:, start:], axis=1)

    def _start_round(self) -> int:
        return self.config.memory if self.config.skip_transient else 0

    def summary_rows(self) -> list:
        rows = []
        z = 1.96
        runs = self.config.runs
        regrets = self.regrets() if self.oracles is not None else {}
        for alg in self.config.algorithms:
            totals = self.total_costs(alg)
            mean = float(np.mean(totals))
            std = float(np.std(totals, ddof=1)) if runs > 1 else 0.0
            tail = self.costs[alg][:, -100:]
            row = {
                "algorithm": alg,
                "runs": runs,
                "horizon": self.config.horizon,
                "mean_total_cost": mean,
                "ci_half_width": float(z * std / np.sqrt(runs)),
                "mean_final100_cost": float(np.mean(tail)),
            }
            if alg in regrets:
                r = regrets[alg]
                rstd = float(np.std(r, ddof=1)) if runs > 1 else 0.0
                row["mean_regret"] = float(np.mean(r))
                row["regret_ci_half_width"] = float(z * rstd / np.sqrt(runs))
                row["regret_over_t34"] = float(np.mean(r)) / self.config.horizon**0.75
            rows.append(row)
        return rows

    def regrets(self) -> dict:
        """Per-algorithm per-seed regret against the hindsight oracle."""
        if self.oracles is None:
            raise ConfigError("experiment ran without the oracle enabled")
        out = {}
        for alg in self.config.algorithms:
            ctrl, method = parse_algorithm(alg)
            if method is not None:
                continue  # oracle comparator assumes known dynamics
            totals = self.total_costs(alg)
            out[alg] = totals - np.array([o.objective for o in self.oracles])
        return out


def _auto_loss_bound(sys: LinearSystem, k_gain: np.ndarray, disturbances: np.ndarray,
                     cost: CostFunction, horizon: int) -> float:
    """Scale losses by twice the worst cost of a plain LQR warmup rollout."""
    series = counterfactual_dac_cost(sys, k_gain, np.zeros((1, sys.input_dim, sys.state_dim)),
                                     disturbances, cost, horizon=horizon)
    return float(max(1.0, 2.0 * np.max(series)))


def _bco_config(cfg: ExperimentConfig, horizon: int, loss_bound: float) -> BcoConfig:
    return BcoConfig(horizon=horizon, memory=cfg.memory, delta=cfg.delta,
                     eta_scale=cfg.eta_scale, delta_scale=cfg.delta_scale,
                     lipschitz=cfg.lipschitz, loss_bound=loss_bound,
                     fixed_rate=cfg.fixed_rate)


def _resolved_params(cfg: ExperimentConfig, sys: LinearSystem) -> DacClassParams:
    kb = cfg.kappa_b if cfg.kappa_b is not None else max(1.0, sys.kappa_b)
    return DacClassParams(memory=cfg.memory, kappa=cfg.kappa, gamma=cfg.gamma, kappa_b=kb)


def _run_single(cfg: ExperimentConfig, run_index: int, root_entropy: int):
    """One seed: paired disturbances, every algorithm, optional oracle."""
    sys = resolve_system(cfg.system)
    cost = CostFunction(cfg.cost)
    params = _resolved_params(cfg, sys)
    lqr = solve_dare(sys.a, sys.b)
    seeds = np.random.SeedSequence([root_entropy, run_index]).spawn(3)
    noise_rng = np.random.default_rng(seeds[0])
    bandit_rng_seed = seeds[1]
    sysid_seed = seeds[2]

    gen = resolve_noise(cfg.noise, sys.state_dim, cfg.horizon, sys.w_bound)
    w = gen.generate(cfg.horizon, rng=noise_rng)
    w_hash = hashlib.sha256(np.ascontiguousarray(w).tobytes()).hexdigest()
    loss_bound = cfg.loss_bound
    if loss_bound is None:
        loss_bound = _auto_loss_bound(sys, lqr.k, w, cost, cfg.horizon)

    costs = {}
    trajs = {}
    reports = {}
    for alg in cfg.algorithms:
        ctrl_kind, method = parse_algorithm(alg)
        if method is None:
            if ctrl_kind == "lqr":
                controller = LqrController(lqr.k)
            elif ctrl_kind == "gpc":
                controller = GradientPerturbationController(
                    sys, lqr.k, params, cost, lr_scale=cfg.gpc_lr,
                    fixed_rate=cfg.fixed_rate, grad_mode=cfg.gpc_grad_mode)
            else:
                bco_cfg = _bco_config(cfg, cfg.horizon, loss_bound)
                controller = BanditPerturbationController(
                    sys, lqr.k, params, bco_cfg,
                    rng=np.random.default_rng(bandit_rng_seed),
                    validate=cfg.validate)
            traj = simulate(sys, controller, w, cost, cfg.horizon)
        else:
            budget = cfg.sysid_budget
            if budget is None:
                budget = default_budget(cfg.horizon)
            k_index = cfg.sysid_k if cfg.sysid_k is not None else sys.state_dim
            sid_cfg = SysIdConfig(budget=budget, k=k_index)
            commit_len = cfg.horizon - budget
            bco_cfg = _bco_config(cfg, max(commit_len, 1), loss_bound)
            rec = run_algorithm3(sys, cost, w, cfg.horizon, sid_cfg, params,
                                 bco_cfg=bco_cfg, method=method, controller=ctrl_kind,
                                 rng=np.random.default_rng(sysid_seed),
                                 gpc_lr=cfg.gpc_lr, validate=cfg.validate)
            traj = _merge_phases(rec.explore_traj, rec.commit_traj)
            reports[alg] = dict(rec.ident.report(), budget=budget,
                                k_hat=rec.k_hat.tolist())
        tr_hash = hashlib.sha256(np.ascontiguousarray(traj.disturbances).tobytes()).hexdigest()
        if tr_hash != w_hash:
            raise ConfigError(f"algorithm {alg} ran on a different disturbance sequence")
        costs[alg] = traj.costs
        trajs[alg] = traj

    oracle = None
    if cfg.oracle:
        o_mem = cfg.oracle_memory if cfg.oracle_memory is not None else cfg.memory
        o_params = DacClassParams(memory=o_mem, kappa=params.kappa,
                                  gamma=params.gamma, kappa_b=params.kappa_b)
        start = cfg.memory if cfg.skip_transient else 0
        oracle = best_dac_in_hindsight(sys, lqr.k, w, cost, o_params,
                                       start_round=start, horizon=cfg.horizon)
    return {"costs": costs, "trajs": trajs, "w": w, "w_hash": w_hash,
            "loss_bound": loss_bound, "oracle": oracle, "reports": reports,
            "k": lqr.k, "params": params}


def _merge_phases(explore_traj: Trajectory, commit_traj: Trajectory) -> Trajectory:
    if not np.array_equal(explore_traj.states[-1], commit_traj.states[0]):
        raise ConfigError("phase boundary states disagree")
    return Trajectory(
        states=np.concatenate([explore_traj.states[:-1], commit_traj.states]),
        actions=np.concatenate([explore_traj.actions, commit_traj.actions]),
        disturbances=np.concatenate([explore_traj.disturbances, commit_traj.disturbances]),
        costs=np.concatenate([explore_traj.costs, commit_traj.costs]),
        meta={"explore_rounds": explore_traj.actions.shape[0]})


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    """Run every algorithm over cfg.runs paired-disturbance seeds."""
    results = []
    if cfg.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_run_single, cfg, i, cfg.seed) for i in range(cfg.runs)]
            results = [f.result() for f in futures]
    else:
        results = [_run_single(cfg, i, cfg.seed) for i in range(cfg.runs)]

    costs = {alg: np.stack([r["costs"][alg] for r in results]) for alg in cfg.algorithms}
    trajs = {alg: [r["trajs"][alg] for r in results] for alg in cfg.algorithms}
    reports = {}
    for alg in cfg.algorithms:
        per_seed = [r["reports"].get(alg) for r in results]
        if any(p is not None for p in per_seed):
            reports[alg] = per_seed
    oracles = [r["oracle"] for r in results] if cfg.oracle else None
    return RunRecord(config=cfg, costs=costs, trajectories=trajs,
                     disturbances=[r["w"] for r in results],
                     w_hashes=[r["w_hash"] for r in results],
                     loss_bounds=[r["loss_bound"] for r in results],
                     k_gain=results[0]["k"], params=results[0]["params"],
                     oracles=oracles, sysid_reports=reports)


def regret_report(record: RunRecord) -> dict:
    """Regret summary with provenance hashes; needs the oracle enabled."""
    if record.oracles is None:
        raise ConfigError("regret report needs oracle=True in the config")
    cfg = record.config
    regrets = record.regrets()
    out = {
        "name": cfg.name,
        "horizon": cfg.horizon,
        "runs": cfg.runs,
        "seed": cfg.seed,
        "oracle_memory": cfg.oracle_memory if cfg.oracle_memory is not None else cfg.memory,
        "skip_transient": cfg.skip_transient,
        "w_hashes": record.w_hashes,
        "loss_bounds": record.loss_bounds,
        "oracle": {
            "objectives": [o.objective for o in record.oracles],
            "iterations": [o.iterations for o in record.oracles],
            "converged": [bool(o.converged) for o in record.oracles],
        },
        "algorithms": {},
    }
    z = 1.96
    for alg, r in regrets.items():
        std = float(np.std(r, ddof=1)) if cfg.runs > 1 else 0.0
        out["algorithms"][alg] = {
            "mean_regret": float(np.mean(r)),
            "ci_half_width": z * std / np.sqrt(cfg.runs),
            "per_seed": [float(v) for v in r],
            "regret_over_t34": float(np.mean(r)) / cfg.horizon**0.75,
        }
    return out


def horizon_ladder(cfg: ExperimentConfig, horizons, algorithms=None) -> list:
    """Re-run the cell at several horizons and tabulate regret / T^(3/4)."""
    rows = []
    for t_end in horizons:
        sub = replace(cfg, horizon=int(t_end), oracle=True,
                      algorithms=tuple(algorithms or cfg.algorithms), name=f"{cfg.name}-T{t_end}")
        record = run_experiment(sub)
        entry = {"horizon": int(t_end)}
        for alg, r in record.regrets().items():
            entry[alg] = {"mean_regret": float(np.mean(r)),
                          "regret_over_t34": float(np.mean(r)) / t_end**0.75}
        rows.append(entry)
    return rows


# ---------------------------------------------------------------------------
# Output writers


def _atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    import io
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_summary_csv(record: RunRecord, path: str) -> None:
    rows = record.summary_rows()
    header = []
    for row in rows:
        for key in row:
            if key not in header:
                header.append(key)
    data = [[row.get(k, "") for k in header] for row in rows]
    _atomic_write(path, _csv_text(header, data))


def write_raw_csvs(record: RunRecord, out_dir: str) -> list:
    paths = []
    for alg in record.config.algorithms:
        for seed_idx, traj in enumerate(record.trajectories[alg]):
            path = os.path.join(out_dir, "raw", alg, f"{seed_idx}.csv")
            _atomic_write(path, _csv_text(traj.header(), traj.to_rows()))
            paths.append(path)
    return paths


def write_regret_json(record: RunRecord, path: str) -> None:
    _atomic_write(path, json.dumps(regret_report(record), indent=2, sort_keys=True))


def write_plot_svg(record: RunRecord, path: str) -> None:
    """Mean cumulative cost per algorithm with a 95 percent CI band."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = record.config.name
    fig, ax = plt.subplots(figsize=(7, 4.5))
    z = 1.96
    runs = record.config.runs
    for alg in record.config.algorithms:
        cum = record.cumulative(alg)
        mean = np.mean(cum, axis=0)
        std = np.std(cum, axis=0, ddof=1) if runs > 1 else np.zeros_like(mean)
        half = z * std / np.sqrt(runs)
        t_axis = np.arange(mean.shape[0])
        ax.plot(t_axis, mean, label=alg)
        ax.fill_between(t_axis, mean - half, mean + half, alpha=0.2)
    ax.set_xlabel("round")
    ax.set_ylabel("mean cumulative cost")
    ax.set_title(record.config.name)
    ax.legend()
    fig.tight_layout()
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".svg")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def write_outputs(record: RunRecord, out_dir: str) -> dict:
    """summary.csv, per-run raw CSVs, regret.json when available, plot.svg."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {"summary": os.path.join(out_dir, "summary.csv")}
    write_summary_csv(record, paths["summary"])
    paths["raw"] = write_raw_csvs(record, out_dir)
    if record.oracles is not None:
        paths["regret"] = os.path.join(out_dir, "regret.json")
        write_regret_json(record, paths["regret"])
    paths["plot"] = os.path.join(out_dir, "plot.svg")
    write_plot_svg(record, paths["plot"])
    return paths
