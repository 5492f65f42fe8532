"""Linear dynamical system simulation: x_{t+1} = A x_t + B u_t + w_t."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class LinearSystem:
    """System matrices plus the norm bounds the controllers assume.

    kappa_a / kappa_b default to the actual operator norms; w_bound is the
    disturbance magnitude cap the generators enforce when wired through the
    harness.
    """

    a: np.ndarray
    b: np.ndarray
    kappa_a: float | None = None
    kappa_b: float | None = None
    w_bound: float = 10.0

    def __post_init__(self):
        self.a = np.array(self.a, dtype=float)
        self.b = np.array(self.b, dtype=float)
        if self.a.ndim != 2 or self.a.shape[0] != self.a.shape[1]:
            raise ConfigError(f"A must be square, got shape {self.a.shape}")
        if self.b.ndim != 2 or self.b.shape[0] != self.a.shape[0]:
            raise ConfigError(f"B must be {self.a.shape[0]} x m, got shape {self.b.shape}")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ConfigError("system matrices must be finite")
        if self.kappa_a is None:
            self.kappa_a = float(np.linalg.norm(self.a, 2))
        if self.kappa_b is None:
            self.kappa_b = float(np.linalg.norm(self.b, 2))
        if self.w_bound <= 0:
            raise ConfigError(f"w_bound must be positive, got {self.w_bound}")
        self.a.setflags(write=False)
        self.b.setflags(write=False)

    @property
    def state_dim(self) -> int:
        return self.a.shape[0]

    @property
    def input_dim(self) -> int:
        return self.b.shape[1]


def step(sys: LinearSystem, x, u, w) -> np.ndarray:
    """One transition A x + B u + w."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if x.shape[0] != sys.state_dim or w.shape[0] != sys.state_dim:
        raise ConfigError("state / disturbance dimension mismatch")
    if u.shape[0] != sys.input_dim:
        raise ConfigError("input dimension mismatch")
    return sys.a @ x + sys.b @ u + w


_NOISE_KINDS = ("iid-gaussian", "sinusoidal", "random-walk", "zero", "replay")


@dataclass
class DisturbanceGenerator:
    """Produces the full disturbance sequence for a run up front.

    kind:
      iid-gaussian  w_t ~ N(0, I)
      sinusoidal    w_t = sin(t / (20 pi)) in every coordinate
      random-walk   w_{t+1} ~ N(w_t, walk_std^2 I); walk_std defaults to
                    sqrt(1/horizon) when unset
      zero          w_t = 0
      replay        pass through a recorded array
    bound, when set, rescales any w_t with norm above it back onto the cap.
    """

    kind: str
    dim: int
    seed: int = 0
    walk_std: float | None = None
    replay: np.ndarray | None = None
    bound: float | None = None

    def __post_init__(self):
        if self.kind not in _NOISE_KINDS:
            raise ConfigError(f"unknown disturbance kind {self.kind!r}; choose from {_NOISE_KINDS}")
        if int(self.dim) < 1:
            raise ConfigError(f"disturbance dimension must be positive, got {self.dim}")
        if self.kind == "replay":
            if self.replay is None:
                raise ConfigError("replay kind needs the recorded array")
            self.replay = np.array(self.replay, dtype=float)
            if self.replay.ndim != 2 or self.replay.shape[1] != self.dim:
                raise ConfigError(f"replay array must be (T+1, {self.dim})")

    def generate(self, horizon: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Return w_0..w_horizon as a (horizon + 1, dim) array."""
        if horizon < 0:
            raise ConfigError(f"horizon must be >= 0, got {horizon}")
        n = horizon + 1
        if rng is None:
            rng = np.random.default_rng(self.seed)
        if self.kind == "iid-gaussian":
            w = rng.standard_normal((n, self.dim))
        elif self.kind == "sinusoidal":
            t = np.arange(n)
            w = np.tile(np.sin(t / (20.0 * np.pi))[:, None], (1, self.dim))
        elif self.kind == "random-walk":
            std = self.walk_std if self.walk_std is not None else (1.0 / max(horizon, 1)) ** 0.5
            steps = std * rng.standard_normal((n, self.dim))
            steps[0] = 0.0
            w = np.cumsum(steps, axis=0)
        elif self.kind == "zero":
            w = np.zeros((n, self.dim))
        else:
            if self.replay.shape[0] < n:
                raise ConfigError(f"replay array too short: {self.replay.shape[0]} < {n}")
            w = self.replay[:n].copy()
        if self.bound is not None:
            norms = np.linalg.norm(w, axis=1)
            over = norms > self.bound
            if np.any(over):
                w[over] *= (self.bound / norms[over])[:, None]
        return w


class CostFunction:
    """Per-step cost c(x, u), convex in (x, u), with a subgradient selection.

    kinds: quadratic |x|^2 + |u|^2, l1, linf (max abs entry over the stacked
    pair, ties resolved toward the earliest coordinate), relu (sum of
    positive parts of the stacked pair).
    """

    KINDS = ("quadratic", "l1", "linf", "relu")

    def __init__(self, kind: str):
        if kind not in self.KINDS:
            raise ConfigError(f"unknown cost kind {kind!r}; choose from {self.KINDS}")
        self.kind = kind

    def value(self, x, u) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        u = np.asarray(u, dtype=float).reshape(-1)
        if self.kind == "quadratic":
            return float(x @ x + u @ u)
        z = np.concatenate([x, u])
        if self.kind == "l1":
            return float(np.sum(np.abs(z)))
        if self.kind == "linf":
            return float(np.max(np.abs(z)))
        return float(np.sum(np.maximum(z, 0.0)))

    def grad(self, x, u):
        """Subgradient (g_x, g_u); sign(0) = 0, argmax ties pick the first index."""
        x = np.asarray(x, dtype=float).reshape(-1)
        u = np.asarray(u, dtype=float).reshape(-1)
        if self.kind == "quadratic":
            return 2.0 * x, 2.0 * u
        z = np.concatenate([x, u])
        if self.kind == "l1":
            g = np.sign(z)
        elif self.kind == "linf":
            g = np.zeros_like(z)
            if np.max(np.abs(z)) > 0.0:
                i = int(np.argmax(np.abs(z)))
                g[i] = np.sign(z[i])
        else:
            g = (z > 0.0).astype(float)
        return g[:x.size], g[x.size:]

    def value_batch(self, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
        """Row-wise value for stacked states (T, n) and inputs (T, m)."""
        if self.kind == "quadratic":
            return np.einsum("ij,ij->i", xs, xs) + np.einsum("ij,ij->i", us, us)
        z = np.concatenate([xs, us], axis=1)
        if self.kind == "l1":
            return np.sum(np.abs(z), axis=1)
        if self.kind == "linf":
            return np.max(np.abs(z), axis=1)
        return np.sum(np.maximum(z, 0.0), axis=1)

    def grad_batch(self, xs: np.ndarray, us: np.ndarray):
        if self.kind == "quadratic":
            return 2.0 * xs, 2.0 * us
        z = np.concatenate([xs, us], axis=1)
        if self.kind == "l1":
            g = np.sign(z)
        elif self.kind == "linf":
            g = np.zeros_like(z)
            rows = np.arange(z.shape[0])
            idx = np.argmax(np.abs(z), axis=1)
            vals = z[rows, idx]
            g[rows, idx] = np.sign(vals)
        else:
            g = (z > 0.0).astype(float)
        n = xs.shape[1]
        return g[:, :n], g[:, n:]

    def __repr__(self):
        return f"CostFunction({self.kind!r})"


@dataclass
class Trajectory:
    """A recorded closed-loop run.

    states holds x_0..x_{T+1} (one more row than actions) so the identity
    x_{t+1} = A x_t + B u_t + w_t is checkable at every recorded step;
    actions, disturbances and costs hold rounds 0..T.
    """

    states: np.ndarray
    actions: np.ndarray
    disturbances: np.ndarray
    costs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = self.actions.shape[0]
        if self.states.shape[0] != t + 1:
            raise ConfigError("states must hold exactly one more row than actions")
        if self.disturbances.shape[0] != t or self.costs.shape[0] != t:
            raise ConfigError("actions, disturbances, and costs must have equal length")

    @property
    def horizon(self) -> int:
        return self.actions.shape[0] - 1

    def cumulative_cost(self) -> float:
        return float(np.sum(self.costs))

    def to_rows(self):
        """Rows (t, cost, |x|, |u|, x..., u..., w...) for CSV export."""
        t_count = self.actions.shape[0]
        out = []
        for t in range(t_count):
            x = self.states[t]
            u = self.actions[t]
            w = self.disturbances[t]
            out.append([t, float(self.costs[t]), float(np.linalg.norm(x)),
                        float(np.linalg.norm(u))] + x.tolist() + u.tolist() + w.tolist())
        return out

    def header(self):
        n = self.states.shape[1]
        m = self.actions.shape[1]
        return (["t", "cost", "x_norm", "u_norm"]
                + [f"x{i}" for i in range(n)]
                + [f"u{i}" for i in range(m)]
                + [f"w{i}" for i in range(n)])
