"""Macro-steppers over a fast-slow model: averaged, HMM and parallel HMM.

All three schemes advance the slow variables with macro step ``macro_dt``.
The HMM estimates the averaged drift from one short burst of the fast
process (micro step ``micro_dt`` on the unit-rate fast clock, so one micro
step advances slow time by ``eps * micro_dt``); the parallel variant
averages ``lam`` independent bursts instead, which restores the correct
fluctuation statistics. Burst length M is derived from
``macro_dt = lam * M * eps * micro_dt``.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .rng import RngStream
from .sde import (FastSlowModel, IntegrationFailure, Trajectory, _as_point,
                  direct_integrate)


@dataclass(frozen=True)
class SchemeConfig:
    """Discretization parameters shared by the multiscale schemes.

    Args:
        eps: time-scale separation.
        lam: integer speed-up factor (1 = no speed-up).
        macro_dt: slow-variable step.
        micro_dt: unit-rate fast-process step; one micro step covers
            ``eps * micro_dt`` of slow time.
        root_seed: seed of the random stream hierarchy.
        restart_fast: restart each burst from the initial fast state
            instead of carrying the previous burst's end state.

    The derived burst length ``micro_count`` must satisfy
    ``macro_dt == lam * micro_count * eps * micro_dt`` to one part in 1e12;
    configurations that round worse than that are rejected.
    """

    eps: float
    lam: int
    macro_dt: float
    micro_dt: float
    root_seed: int
    restart_fast: bool = False
    micro_count: int = 0  # derived

    def __post_init__(self):
        if self.eps <= 0 or self.macro_dt <= 0 or self.micro_dt <= 0:
            raise ValueError("eps, macro_dt and micro_dt must be positive")
        if self.lam < 1 or int(self.lam) != self.lam:
            raise ValueError(f"lam must be a positive integer, got {self.lam}")
        slow_per_micro = self.lam * self.eps * self.micro_dt
        m = max(1, round(self.macro_dt / slow_per_micro))
        if abs(self.macro_dt - m * slow_per_micro) > 1e-12 * self.macro_dt:
            raise ValueError(
                f"macro_dt={self.macro_dt} is not an integer number of micro "
                f"steps: lam*eps*micro_dt={slow_per_micro}, nearest M={m}")
        object.__setattr__(self, "micro_count", m)
        if self.lam * self.eps > 0.1:
            warnings.warn(
                f"lam*eps = {self.lam * self.eps:.3g} > 0.1; the multiscale "
                "approximation may be inaccurate", stacklevel=2)

    def config_hash(self) -> str:
        text = (f"eps={self.eps!r};lam={self.lam};macro_dt={self.macro_dt!r};"
                f"micro_dt={self.micro_dt!r};restart_fast={self.restart_fast}")
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def config_for_lambda(cfg: SchemeConfig, lam: int) -> SchemeConfig:
    """Nearest valid config at speed-up ``lam``, treating macro_dt as a target.

    Keeps eps and micro_dt; picks the burst length M closest to the
    requested macro step and recomputes macro_dt = lam*M*eps*micro_dt so the
    exactness invariant holds. Used by lambda sweeps where one macro step
    cannot divide evenly for every lambda.
    """
    slow_per_micro = lam * cfg.eps * cfg.micro_dt
    m = max(1, round(cfg.macro_dt / slow_per_micro))
    return replace(cfg, lam=lam, macro_dt=m * slow_per_micro)


@dataclass(frozen=True)
class MacroState:
    """Macro iterate: step index n, slow value x, and the carried fast states.

    ``replica_fast`` has shape (k, e) with k = 1 for HMM and k = lam for the
    parallel scheme.
    """

    n: int
    x: np.ndarray
    replica_fast: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        rf = np.asarray(self.replica_fast, dtype=float)
        if rf.ndim == 1:
            rf = rf[None, :]
        object.__setattr__(self, "replica_fast", rf)


def averaged_step(F, x, dt: float) -> np.ndarray:
    """One forward Euler step x + dt * F(x) of the averaged flow."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = x + dt * np.asarray(F(x), dtype=float)
    if not np.isfinite(out).all():
        raise IntegrationFailure("non-finite averaged step")
    return out


def hmm_micro_burst(model: FastSlowModel, x_frozen, y0, cfg: SchemeConfig,
                    stream: RngStream):
    """Advance the unit-rate fast process for one burst at frozen x.

    Runs M = cfg.micro_count Euler-Maruyama micro steps

        y_{m+1} = y_m + dt g(x, y_m) + sqrt(dt) sigma(x, y_m) xi_m

    and returns ``(f_avg, y_end)`` where f_avg averages f(x, y_m) over the
    post-update states m = 1..M. The Gaussian block for the whole burst is
    drawn from ``stream`` in one call of shape (M, e).
    """
    x = _as_point(x_frozen, model.slow_dim, "x_frozen")
    y = _as_point(y0, model.fast_dim, "y0")
    m_count, dt = cfg.micro_count, cfg.micro_dt
    sq_dt = math.sqrt(dt)
    xi = stream.normals((m_count, model.fast_dim))
    f_sum = np.zeros(model.slow_dim)
    for m in range(m_count):
        y = (y + dt * np.asarray(model.g(x, y), dtype=float)
             + sq_dt * (np.asarray(model.sigma(x, y), dtype=float) @ xi[m]))
        if not np.isfinite(y).all():
            raise IntegrationFailure("non-finite fast state in micro burst",
                                     micro_index=m + 1)
        f_sum += np.asarray(model.f(x, y), dtype=float)
    return f_sum / m_count, y


def hmm_step(model: FastSlowModel, state: MacroState, cfg: SchemeConfig,
             stream: RngStream) -> MacroState:
    """One HMM macro step: burst at frozen x_n, then x_{n+1} = x_n + dt f_avg.

    The burst's final fast state is carried into the returned MacroState.
    """
    if state.replica_fast.shape[0] != 1:
        raise ValueError("hmm_step expects a single carried fast state")
    try:
        f_avg, y_end = hmm_micro_burst(model, state.x, state.replica_fast[0],
                                       cfg, stream)
    except IntegrationFailure as err:
        raise IntegrationFailure("micro burst failed",
                                 macro_index=state.n,
                                 micro_index=err.micro_index) from err
    x_new = state.x + cfg.macro_dt * f_avg
    if not np.isfinite(x_new).all():
        raise IntegrationFailure("non-finite slow state", macro_index=state.n)
    return MacroState(state.n + 1, x_new, y_end[None, :])


def phmm_step(model: FastSlowModel, state: MacroState, cfg: SchemeConfig,
              streams: Sequence[RngStream], executor=None) -> MacroState:
    """One parallel-HMM macro step from ``lam`` independent bursts.

    Replica j advances its own fast copy with its own stream; the slow
    update uses the replica average ``x + dt * mean_j(f_avg_j)``, reduced in
    ascending replica order regardless of completion order. Bursts may run
    concurrently when an ``executor`` is supplied.
    """
    lam = cfg.lam
    if state.replica_fast.shape[0] != lam:
        raise ValueError(f"expected {lam} carried fast states, "
                         f"got {state.replica_fast.shape[0]}")
    if len(streams) != lam:
        raise ValueError(f"expected {lam} streams, got {len(streams)}")

    def one(j):
        try:
            return hmm_micro_burst(model, state.x, state.replica_fast[j], cfg,
                                   streams[j])
        except IntegrationFailure as err:
            raise IntegrationFailure("replica burst failed",
                                     macro_index=state.n,
                                     micro_index=err.micro_index,
                                     replica=j) from err

    if executor is None:
        results = [one(j) for j in range(lam)]
    else:
        futures = [executor.submit(one, j) for j in range(lam)]
        results = [fut.result() for fut in futures]

    f_bar = np.zeros(model.slow_dim)
    y_new = np.empty_like(state.replica_fast)
    for j in range(lam):
        f_avg_j, y_end_j = results[j]
        f_bar += f_avg_j
        y_new[j] = y_end_j
    f_bar /= lam
    x_new = state.x + cfg.macro_dt * f_bar
    if not np.isfinite(x_new).all():
        raise IntegrationFailure("non-finite slow state", macro_index=state.n)
    return MacroState(state.n + 1, x_new, y_new)


SCHEMES = ("direct", "averaged", "hmm", "phmm")


def run_scheme(model: FastSlowModel, scheme: str, x0, y0, cfg: SchemeConfig,
               T: float, record_stride: int = 1, executor=None) -> Trajectory:
    """Drive the chosen stepper over [0, T] and record the slow path.

    ``scheme`` is one of direct | averaged | hmm | phmm. Macro schemes take
    ceil(T / macro_dt) steps and record every ``record_stride``-th macro
    iterate; ``direct`` integrates at step eps*micro_dt and interprets the
    stride in those steps. All randomness derives from cfg.root_seed through
    keyed substreams, so output is independent of worker count.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    base = RngStream(cfg.root_seed)
    meta = {"scheme": scheme, "config_hash": cfg.config_hash(),
            "seed": cfg.root_seed, "model": model.name, "lam": cfg.lam,
            "eps": cfg.eps}

    if scheme == "direct":
        h = cfg.eps * cfg.micro_dt
        traj = direct_integrate(model, x0, y0, cfg.eps, h, T,
                                base.child(-2, 0), record_stride)
        traj.meta.update(meta)
        return traj

    if T < cfg.macro_dt:
        raise ValueError("T must cover at least one macro step")
    n_steps = math.ceil(T / cfg.macro_dt)
    x = _as_point(x0, model.slow_dim, "x0")

    if scheme == "averaged":
        if model.averaged_drift is None:
            raise ValueError("model has no averaged_drift; cannot run the "
                             "averaged scheme")
        times, states = [0.0], [x.copy()]
        for n in range(n_steps):
            x = averaged_step(model.averaged_drift, x, cfg.macro_dt)
            if (n + 1) % record_stride == 0:
                times.append((n + 1) * cfg.macro_dt)
                states.append(x.copy())
        return Trajectory(np.array(times), np.array(states), meta)

    y = _as_point(y0, model.fast_dim, "y0")
    model.check_shapes(x, y)
    n_rep = cfg.lam if scheme == "phmm" else 1
    y_init = np.repeat(y[None, :], n_rep, axis=0)
    state = MacroState(0, x, y_init.copy())
    times, states = [0.0], [state.x.copy()]
    for n in range(n_steps):
        if cfg.restart_fast:
            state = MacroState(state.n, state.x, y_init.copy())
        try:
            if scheme == "hmm":
                state = hmm_step(model, state, cfg, base.child(0, n))
            else:
                streams = [base.child(j, n) for j in range(cfg.lam)]
                state = phmm_step(model, state, cfg, streams, executor)
        except IntegrationFailure as err:
            raise IntegrationFailure(
                f"{scheme} failed", time=n * cfg.macro_dt, macro_index=n,
                micro_index=err.micro_index, replica=err.replica) from err
        if (n + 1) % record_stride == 0:
            times.append((n + 1) * cfg.macro_dt)
            states.append(state.x.copy())
    return Trajectory(np.array(times), np.array(states), meta)
