"""Control policies: LQR state feedback, disturbance-action policies, and the
two online controllers (bandit-feedback and full-information).

A disturbance-action controller (DAC) plays

    u_t = -K x_t + sum_{i=1..H} M[i] w_{t-i}

on top of a stabilizing gain K, with the matrix tensor M constrained to a
product of shrinking operator-norm balls so the closed loop stays bounded.
The bandit controller tunes M from scalar cost feedback alone by flattening
the tensor into the memory-H bandit optimizer; the full-information baseline
tunes it by gradient descent on a truncated counterfactual loss.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .bco import BanditMemoryOptimizer, BcoConfig
from .errors import ConfigError, SolverError, StateError
from .geometry import OperatorNormProduct
from .lds import CostFunction, LinearSystem


# ---------------------------------------------------------------------------
# LQR


@dataclass
class LqrSolution:
    p: np.ndarray
    k: np.ndarray
    residual: float
    iterations: int


def solve_dare(a, b, q=None, r=None, tol: float = 1e-12, max_iter: int = 100_000) -> LqrSolution:
    """Infinite-horizon discrete Riccati solution by fixed-point iteration.

    Returns the cost matrix P and gain K = (R + B'PB)^-1 B'PA so that
    u = -K x is the optimal stationary policy for cost x'Qx + u'Ru.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    m = b.shape[1]
    if a.shape != (n, n) or b.shape != (n, m):
        raise ConfigError("A must be square and B conformable")
    q = np.eye(n) if q is None else np.asarray(q, dtype=float)
    r = np.eye(m) if r is None else np.asarray(r, dtype=float)
    if q.shape != (n, n) or r.shape != (m, m):
        raise ConfigError("Q / R dimension mismatch")
    if not np.allclose(q, q.T) or not np.allclose(r, r.T):
        raise ConfigError("Q and R must be symmetric")
    try:
        np.linalg.cholesky(r)
    except np.linalg.LinAlgError:
        raise ConfigError("R must be positive definite") from None

    p = q.copy()
    for it in range(1, max_iter + 1):
        btp = b.T @ p
        gain = np.linalg.solve(r + btp @ b, btp @ a)
        p_next = q + a.T @ p @ a - a.T @ p @ b @ gain
        p_next = 0.5 * (p_next + p_next.T)
        diff = float(np.linalg.norm(p_next - p, "fro"))
        p = p_next
        if diff <= tol:
            break
    else:
        raise SolverError(f"Riccati iteration did not converge in {max_iter} steps")

    btp = b.T @ p
    k = np.linalg.solve(r + btp @ b, btp @ a)
    resid = float(np.linalg.norm(
        a.T @ p @ a - p - a.T @ p @ b @ np.linalg.solve(r + btp @ b, btp @ a) + q, "fro"))
    return LqrSolution(p=p, k=k, residual=resid, iterations=it)


class LqrController:
    """Pure state feedback u = -K x; ignores cost feedback."""

    def __init__(self, k_gain):
        self.k = np.asarray(k_gain, dtype=float)

    def action(self, x) -> np.ndarray:
        return -self.k @ np.asarray(x, dtype=float).reshape(-1)

    def update(self, cost_value: float, x_next) -> None:
        pass

    def snapshot(self) -> dict:
        return {"policy": "lqr", "k": self.k.tolist()}


# ---------------------------------------------------------------------------
# DAC machinery


@dataclass(frozen=True)
class DacClassParams:
    """Comparator class: |M[i]|_op <= kappa^3 * kappa_b * (1 - gamma)^i, i = 1..memory."""

    memory: int
    kappa: float = 1.5
    gamma: float = 0.1
    kappa_b: float = 1.0

    def __post_init__(self):
        if int(self.memory) < 1:
            raise ConfigError(f"memory must be >= 1, got {self.memory}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.kappa < 1.0 or self.kappa_b <= 0.0:
            raise ConfigError("kappa must be >= 1 and kappa_b positive")

    def radii(self) -> np.ndarray:
        i = np.arange(1, self.memory + 1)
        return self.kappa**3 * self.kappa_b * (1.0 - self.gamma) ** i


def dac_action(k_gain: np.ndarray, m_tensor: np.ndarray, x: np.ndarray,
               w_recent: np.ndarray) -> np.ndarray:
    """u = -K x + sum_i M[i] w_recent[i-1], with w_recent most recent first."""
    h = m_tensor.shape[0]
    if w_recent.shape[0] != h:
        raise ConfigError(f"need {h} past disturbances, got {w_recent.shape[0]}")
    return -k_gain @ x + np.einsum("imn,in->m", m_tensor, w_recent)


def project_dac_class(params: DacClassParams, m_tensor: np.ndarray,
                      shrink: float = 0.0) -> np.ndarray:
    """Clip every factor's singular values to (1 - shrink) times its class radius."""
    h, m, n = m_tensor.shape
    caps = (1.0 - shrink) * params.radii()
    u, s, vt = np.linalg.svd(m_tensor, full_matrices=False)
    over = s[:, 0] > caps
    if not np.any(over):
        return m_tensor
    clipped = np.minimum(s, caps[:, None])
    out = m_tensor.copy()
    out[over] = (u[over] * clipped[over, None, :]) @ vt[over]
    return out


class DisturbanceHistory:
    """Fixed-depth most-recent-first buffer; times before the start read as zero."""

    def __init__(self, depth: int, dim: int):
        self.depth = depth
        self.dim = dim
        self._buf = deque([np.zeros(dim) for _ in range(depth)], maxlen=depth)

    def push(self, w) -> None:
        self._buf.appendleft(np.asarray(w, dtype=float).reshape(-1).copy())

    def view(self) -> np.ndarray:
        """(depth, dim) array: row 0 is the most recent disturbance."""
        return np.stack(list(self._buf))


@dataclass
class DacPolicy:
    """A fixed disturbance-action policy (no learning)."""

    k: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        if self.m.ndim != 3:
            raise ConfigError("M must be a (memory, m, n) tensor")
        if self.m.shape[1] != self.k.shape[0] or self.m.shape[2] != self.k.shape[1]:
            raise ConfigError("M factors must map state dim to input dim")

    @property
    def memory(self) -> int:
        return self.m.shape[0]

    def action(self, x, w_recent) -> np.ndarray:
        return dac_action(self.k, self.m, np.asarray(x, dtype=float).reshape(-1),
                          np.asarray(w_recent, dtype=float))

    def snapshot(self) -> dict:
        return {"policy": "dac", "k": self.k.tolist(), "m": self.m.tolist()}


# ---------------------------------------------------------------------------
# Bandit controller


class BanditPerturbationController:
    """Tunes a DAC from scalar cost feedback only.

    Flattens the M tensor into the memory-H bandit optimizer: each round the
    played tensor is the optimizer's perturbed point, the action is the DAC
    action under that tensor, and the observed cost is fed straight back as
    the bandit loss. Disturbances are inferred from the believed dynamics:
    w_t = x_{t+1} - A x_t - B u_t, so with exact matrices the controller
    recovers the true disturbances.

    When the smallest class radius is below 1 the whole tensor is optimized
    in rescaled units (radii divided by that minimum) so the optimizer's
    decision set still contains the unit ball; plays are scaled back before
    acting.
    """

    def __init__(self, believed: LinearSystem, k_gain, params: DacClassParams,
                 cfg: BcoConfig, rng: np.random.Generator | None = None,
                 validate: bool = True):
        if cfg.memory != params.memory:
            raise ConfigError("optimizer memory and DAC memory must match")
        self.believed = believed
        self.k = np.asarray(k_gain, dtype=float)
        self.params = params
        h = params.memory
        m, n = believed.input_dim, believed.state_dim
        if self.k.shape != (m, n):
            raise ConfigError(f"K must be {m} x {n}, got {self.k.shape}")
        radii = params.radii()
        self.scale = float(min(1.0, radii.min()))
        feasible = OperatorNormProduct(h, m, n, radii / self.scale)
        self.optimizer = BanditMemoryOptimizer(feasible, cfg, rng=rng, validate=validate)
        self.optimizer.reset()
        self.history = DisturbanceHistory(h, n)
        self._pending = None
        self.t = 0

    @property
    def memory(self) -> int:
        return self.params.memory

    def played_tensor(self) -> np.ndarray:
        h = self.params.memory
        m, n = self.believed.input_dim, self.believed.state_dim
        return (self.scale * self.optimizer.played).reshape(h, m, n)

    def center_tensor(self) -> np.ndarray:
        h = self.params.memory
        m, n = self.believed.input_dim, self.believed.state_dim
        return (self.scale * self.optimizer.center).reshape(h, m, n)

    def action(self, x) -> np.ndarray:
        if self._pending is not None:
            raise StateError("update() must be called before the next action()")
        x = np.asarray(x, dtype=float).reshape(-1)
        u = dac_action(self.k, self.played_tensor(), x, self.history.view())
        self._pending = (x, u)
        return u

    def update(self, cost_value: float, x_next) -> None:
        """Record the observed cost and next state; advances the optimizer."""
        if self._pending is None:
            raise StateError("action() must be called before update()")
        x, u = self._pending
        x_next = np.asarray(x_next, dtype=float).reshape(-1)
        w = x_next - self.believed.a @ x - self.believed.b @ u
        self.history.push(w)
        self.optimizer.step(cost_value)
        self._pending = None
        self.t += 1

    def snapshot(self) -> dict:
        return {
            "policy": "bpc",
            "k": self.k.tolist(),
            "m_center": self.center_tensor().tolist(),
            "m_played": self.played_tensor().tolist(),
            "memory": self.params.memory,
            "kappa": self.params.kappa,
            "gamma": self.params.gamma,
            "kappa_b": self.params.kappa_b,
            "delta": self.optimizer.delta,
            "round": self.t,
        }


# ---------------------------------------------------------------------------
# Full-information baseline


def truncated_counterfactual(a: np.ndarray, b: np.ndarray, k_gain: np.ndarray,
                             m_tensor: np.ndarray, w_recent: np.ndarray,
                             cost: CostFunction, want_grad: bool = True):
    """Cost of holding the DAC tensor M over a short replay, and its M-gradient.

    Replays the closed loop from the zero state using only the disturbances
    in w_recent (most recent first); anything older is treated as zero. With
    L = len(w_recent) the replay reconstructs a surrogate of the current
    state and action, and the gradient is propagated exactly through the
    replay via the chain rule.
    """
    h, m, n = m_tensor.shape
    ell = w_recent.shape[0]
    chron = w_recent[::-1]  # chron[j] is the disturbance j steps after the window start

    def w_at(j):
        return chron[j] if 0 <= j < ell else None

    x = np.zeros(n)
    jx = np.zeros((n, h * m * n)) if want_grad else None

    def dac_terms(sigma):
        u = -k_gain @ x
        pu = np.zeros((m, h, m, n)) if want_grad else None
        for i in range(1, h + 1):
            wj = w_at(sigma - i)
            if wj is None:
                continue
            u = u + m_tensor[i - 1] @ wj
            if want_grad:
                pu[np.arange(m), i - 1, np.arange(m), :] += wj
        if want_grad:
            ju = -k_gain @ jx + pu.reshape(m, h * m * n)
        else:
            ju = None
        return u, ju

    for sigma in range(ell):
        u, ju = dac_terms(sigma)
        x = a @ x + b @ u + chron[sigma]
        if want_grad:
            jx = a @ jx + b @ ju
    u, ju = dac_terms(ell)
    value = cost.value(x, u)
    if not want_grad:
        return value, None
    gx, gu = cost.grad(x, u)
    grad = jx.T @ gx + ju.T @ gu
    return value, grad.reshape(h, m, n)


class GradientPerturbationController:
    """Full-information baseline: online gradient descent on a truncated
    counterfactual loss.

    Each round it recovers w_t from the believed dynamics, then takes one
    projected gradient step on the cost the current tensor would have
    incurred had it been held fixed over the last 2H-1 disturbances.
    grad_mode "analytic" propagates exact Jacobians; "fd" uses central
    finite differences (slow, for cross-checking).
    """

    def __init__(self, believed: LinearSystem, k_gain, params: DacClassParams,
                 cost: CostFunction, lr_scale: float = 0.05, fixed_rate: bool = False,
                 grad_mode: str = "analytic"):
        if grad_mode not in ("analytic", "fd"):
            raise ConfigError(f"grad_mode must be 'analytic' or 'fd', got {grad_mode!r}")
        self.believed = believed
        self.k = np.asarray(k_gain, dtype=float)
        self.params = params
        self.cost = cost
        self.lr_scale = float(lr_scale)
        self.fixed_rate = fixed_rate
        self.grad_mode = grad_mode
        h = params.memory
        m, n = believed.input_dim, believed.state_dim
        if self.k.shape != (m, n):
            raise ConfigError(f"K must be {m} x {n}, got {self.k.shape}")
        self.m_tensor = np.zeros((h, m, n))
        self.window = 2 * h - 1
        self.history = DisturbanceHistory(self.window, n)
        self._pending = None
        self.t = 0

    def action(self, x) -> np.ndarray:
        if self._pending is not None:
            raise StateError("update() must be called before the next action()")
        x = np.asarray(x, dtype=float).reshape(-1)
        recent = self.history.view()[:self.params.memory]
        u = dac_action(self.k, self.m_tensor, x, recent)
        self._pending = (x, u)
        return u

    def _gradient(self) -> np.ndarray:
        w_recent = self.history.view()
        if self.grad_mode == "analytic":
            _, g = truncated_counterfactual(self.believed.a, self.believed.b, self.k,
                                            self.m_tensor, w_recent, self.cost)
            return g
        g = np.zeros_like(self.m_tensor)
        eps = 1e-6
        flat = self.m_tensor.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            bump = np.zeros_like(flat)
            bump[i] = eps
            hi, _ = truncated_counterfactual(self.believed.a, self.believed.b, self.k,
                                             (flat + bump).reshape(self.m_tensor.shape),
                                             w_recent, self.cost, want_grad=False)
            lo, _ = truncated_counterfactual(self.believed.a, self.believed.b, self.k,
                                             (flat - bump).reshape(self.m_tensor.shape),
                                             w_recent, self.cost, want_grad=False)
            gflat[i] = (hi - lo) / (2.0 * eps)
        return g

    def update(self, cost_value: float, x_next) -> None:
        if self._pending is None:
            raise StateError("action() must be called before update()")
        x, u = self._pending
        x_next = np.asarray(x_next, dtype=float).reshape(-1)
        w = x_next - self.believed.a @ x - self.believed.b @ u
        g = self._gradient()
        lr = self.lr_scale if self.fixed_rate else self.lr_scale / np.sqrt(self.t + 1.0)
        self.m_tensor = project_dac_class(self.params, self.m_tensor - lr * g)
        self.history.push(w)
        self._pending = None
        self.t += 1

    def snapshot(self) -> dict:
        return {
            "policy": "gpc",
            "k": self.k.tolist(),
            "m": self.m_tensor.tolist(),
            "memory": self.params.memory,
            "kappa": self.params.kappa,
            "gamma": self.params.gamma,
            "kappa_b": self.params.kappa_b,
            "round": self.t,
        }


def snapshot_to_json(policy) -> str:
    """Serialize any policy snapshot to a JSON document."""
    return json.dumps(policy.snapshot(), indent=2, sort_keys=True)
