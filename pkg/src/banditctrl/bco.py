"""Bandit convex optimization with memory.

The optimizer never sees a gradient. Each round it plays a perturbed point
y_t = x_t + delta * u_t with u_t uniform on the unit sphere, observes one
scalar loss that may depend on the last H plays, and forms the one-point
estimate

    g_t = (d / delta) * loss_t * sum_{i=0..H-1} u_{t-i}.

Because the loss couples H consecutive plays, the estimate built at round t
is only a valid (smoothed) gradient once the whole window it perturbs has
been played, so the center update at round t applies the estimate from round
t - (H - 1) rather than the fresh one. Rounds are numbered from 0 and the
first estimator-bearing loss is the one consumed at round t = H; earlier
losses are accepted and recorded but contribute a zero estimate.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StateError
from .geometry import DecisionSet, MinkowskiSubset


def sample_unit_sphere(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Uniform draw from the unit sphere in R^dim (for dim=1: +-1)."""
    if dim < 1:
        raise ConfigError(f"dimension must be positive, got {dim}")
    while True:
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


@dataclass
class BcoConfig:
    """Hyperparameters for the memory-H bandit optimizer.

    horizon: total number of rounds T the schedules are tuned for.
    memory: H, how many consecutive plays a single loss may depend on.
    delta: perturbation radius; when None it is set from the horizon as
        delta_scale * T^(-1/4) * D^(1/3) * G^(-1/3), capped into (0, 0.9].
    eta_scale / delta_scale: dimensionless tuning constants.
    lipschitz: loss Lipschitz constant G used by the schedules.
    loss_bound: M >= 1; observed losses are divided by it when M > 1 so the
        estimator works with values of order one.
    fixed_rate: freeze the step size at its horizon-T value instead of
        decaying it as t^(-3/4).
    seed: default RNG seed when no generator is supplied.
    """

    horizon: int
    memory: int
    delta: float | None = None
    eta_scale: float = 1.0
    delta_scale: float = 1.0
    lipschitz: float = 1.0
    smoothness: float | None = None
    loss_bound: float = 1.0
    fixed_rate: bool = False
    seed: int = 0

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if int(self.memory) < 1:
            raise ConfigError(f"memory must be >= 1, got {self.memory}")
        self.horizon = int(self.horizon)
        self.memory = int(self.memory)
        if self.delta is not None and not 0.0 < float(self.delta) < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("eta_scale", "delta_scale", "lipschitz", "loss_bound"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0.0:
                raise ConfigError(f"{name} must be positive and finite, got {v}")
        if self.loss_bound < 1.0:
            raise ConfigError(f"loss_bound must be >= 1, got {self.loss_bound}")


def perturbation_radius(cfg: BcoConfig, diameter: float) -> float:
    """Exploration radius delta for a decision set of the given diameter."""
    if cfg.delta is not None:
        return float(cfg.delta)
    raw = (cfg.delta_scale * cfg.horizon ** (-0.25)
           * diameter ** (1.0 / 3.0) * cfg.lipschitz ** (-1.0 / 3.0))
    if raw <= 0.0 or not np.isfinite(raw):
        raise ConfigError(f"derived delta is not usable: {raw}")
    return min(raw, 0.9)


def learning_rate(cfg: BcoConfig, dim: int, diameter: float, t: int) -> float:
    """Step size at round t; decays as t^(-3/4) unless fixed_rate."""
    tt = cfg.horizon if cfg.fixed_rate else max(int(t), 1)
    return (cfg.eta_scale * tt ** (-0.75) * cfg.memory ** (-1.5) / dim
            * diameter ** (2.0 / 3.0) * cfg.lipschitz ** (-2.0 / 3.0))


def gradient_estimate(loss_value: float, sphere_window, dim: int, delta: float) -> np.ndarray:
    """One-point estimate (d / delta) * loss * sum of the window's sphere samples."""
    window = list(sphere_window)
    if len(window) == 0:
        raise StateError("gradient estimate needs a non-empty perturbation window")
    if delta <= 0.0:
        raise ConfigError(f"delta must be positive, got {delta}")
    return (dim / delta) * float(loss_value) * np.sum(window, axis=0)


class BanditMemoryOptimizer:
    """Core engine: sphere perturbations, delayed one-point updates.

    Protocol::

        opt = BanditMemoryOptimizer(decision_set, cfg, rng=rng)
        y = opt.reset()            # play for round 0
        for t in range(T):
            y = opt.step(loss_t)   # consume loss for round t, get play t+1

    State kept per round t: the center x_t (always in the shrunk set), the
    play y_t = x_t + delta * u_t, the last 2H-1 sphere samples, and the last
    H gradient estimates so the update can reach back H-1 rounds.
    """

    def __init__(self, feasible: DecisionSet, cfg: BcoConfig,
                 rng: np.random.Generator | None = None, validate: bool = True):
        if isinstance(feasible, MinkowskiSubset):
            raise ConfigError("pass the full decision set; the engine shrinks it itself")
        self.feasible = feasible
        self.cfg = cfg
        self.delta = perturbation_radius(cfg, feasible.diameter)
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"perturbation radius {self.delta} outside (0, 1)")
        self.shrunk = feasible.shrink(self.delta)
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.validate = validate
        self.t = None
        self._x = None
        self._y = None
        self.last_estimate = None

    @property
    def center(self) -> np.ndarray:
        if self._x is None:
            raise StateError("optimizer not reset")
        return self._x.copy()

    @property
    def played(self) -> np.ndarray:
        if self._y is None:
            raise StateError("optimizer not reset")
        return self._y.copy()

    def _draw(self) -> np.ndarray:
        u = sample_unit_sphere(self.rng, self.feasible.dim)
        if self.validate:
            assert abs(np.linalg.norm(u) - 1.0) <= 1e-12
        return u

    def reset(self, x0=None) -> np.ndarray:
        """Start an episode at center x0 (origin by default); returns the round-0 play."""
        h = self.cfg.memory
        d = self.feasible.dim
        if x0 is None:
            self._x = np.zeros(d)
        else:
            self._x = self.shrunk.project(np.asarray(x0, dtype=float).reshape(-1))
        self.t = 0
        pre = [self._draw() for _ in range(h)]
        self._spheres = deque(maxlen=2 * h - 1)
        self._spheres.append(pre[0])
        self._pending = deque(pre[1:])
        self._grads = deque([np.zeros(d)] * (h - 1), maxlen=h)
        self.last_estimate = None
        self._y = self._x + self.delta * pre[0]
        self._check()
        return self.played

    def _check(self):
        if not self.validate:
            return
        if not self.shrunk.contains(self._x):
            raise StateError(f"center left the shrunk set at round {self.t}")
        if not self.feasible.contains(self._y):
            raise StateError(f"play left the decision set at round {self.t}")

    def step(self, loss_value: float) -> np.ndarray:
        """Consume the scalar loss for the current round, return the next play."""
        if self.t is None:
            raise StateError("call reset() before step()")
        if not np.isfinite(loss_value):
            raise ConfigError(f"loss must be finite, got {loss_value}")
        h = self.cfg.memory
        d = self.feasible.dim
        if self.t >= h:
            scaled = float(loss_value)
            if self.cfg.loss_bound > 1.0:
                scaled /= self.cfg.loss_bound
            window = list(self._spheres)[-h:]
            g = gradient_estimate(scaled, window, d, self.delta)
        else:
            g = np.zeros(d)
        self.last_estimate = g
        self._grads.append(g)
        delayed = self._grads[0]
        eta = learning_rate(self.cfg, d, self.feasible.diameter, self.t)
        self._x = self.shrunk.project(self._x - eta * delayed)
        nxt = self._pending.popleft() if self._pending else self._draw()
        self._spheres.append(nxt)
        self._y = self._x + self.delta * nxt
        self.t += 1
        self._check()
        return self.played


@dataclass
class BcoTrace:
    """Recorded run: plays y_0..y_T, centers x_0..x_T, losses (0 before round H)."""

    plays: np.ndarray
    centers: np.ndarray
    losses: np.ndarray
    delta: float
    memory: int = field(default=1)


def run_bco(loss_fn, feasible: DecisionSet, cfg: BcoConfig, x0=None,
            rng: np.random.Generator | None = None, validate: bool = True) -> BcoTrace:
    """Drive the optimizer for cfg.horizon rounds against a windowed loss oracle.

    loss_fn(t, window) receives the plays y_{t-H+1..t} as an (H, d) array,
    most recent last. It is only called from round H onward; earlier rounds
    record a zero loss and a zero estimate.
    """
    h = cfg.memory
    t_end = cfg.horizon
    opt = BanditMemoryOptimizer(feasible, cfg, rng=rng, validate=validate)
    plays = [opt.reset()]
    centers = [opt.center]
    losses = np.zeros(t_end + 1)
    for t in range(t_end + 1):
        if t >= h:
            window = np.stack(plays[t - h + 1:t + 1])
            losses[t] = float(loss_fn(t, window))
        if t < t_end:
            plays.append(opt.step(losses[t]))
            centers.append(opt.center)
    return BcoTrace(plays=np.stack(plays), centers=np.stack(centers),
                    losses=losses, delta=opt.delta, memory=h)


def regret_vs_fixed_point(trace: BcoTrace, loss_fn, x_ref) -> float:
    """Total loss of the trace minus the loss of holding x_ref, rounds H..T."""
    h = trace.memory
    t_end = trace.plays.shape[0] - 1
    if t_end < h:
        raise ConfigError("trace is shorter than one memory window")
    x_ref = np.asarray(x_ref, dtype=float).reshape(-1)
    ref_window = np.tile(x_ref, (h, 1))
    total = 0.0
    for t in range(h, t_end + 1):
        total += trace.losses[t] - float(loss_fn(t, ref_window))
    return total
