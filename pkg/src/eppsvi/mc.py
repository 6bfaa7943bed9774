"""Monte Carlo simulator for the constrained oscillator.

Independent of the PDE side: the stochastic variational inequality is
integrated by a projection Euler scheme,

    y' = y - (c0 y + k z) dt + dW,     z' = clamp(z + y dt, -Y, Y),
    x' = x + y dt,                     Delta' = x' - z',

and the invariant measure, short cycles and ray-hitting split are
estimated from paths.  The regime is read off the post-step state:
plastic+ iff z = Y and y > 0, plastic- iff z = -Y and y < 0 (the clamp
writes the bounds exactly, so equality tests are reliable).

A plastic phase completes on the first step where the pre-step regime
was plastic+/- and the new velocity crosses <= 0 / >= 0; completions are
the regeneration epochs of the cycle estimators.

Paths are advanced by numba kernels in chunks and recorded, so that
arbitrary Python functionals can be evaluated on the recorded states in
vectorized form.  Replica streams come from spawned SeedSequences, so
replicas are independent and any subset reproduces bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import OscillatorParams, PhasePoint, Functional

_CHUNK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    """Time step, horizon, burn-in fraction, replica count and seed."""

    dt: float = 1e-3
    horizon: float = 2e4
    burn_in: float = 0.1
    replicas: int = 8
    seed: int = 0
    step_cap: int = 100_000_000
    batches: int = 20

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if not 0.0 <= self.burn_in <= 0.5:
            raise ValueError(f"burn_in must be in [0, 0.5], got {self.burn_in}")
        if self.replicas < 1:
            raise ValueError(f"replicas must be >= 1, got {self.replicas}")
        if self.batches < 2:
            raise ValueError(f"batches must be >= 2, got {self.batches}")
        if self.step_cap < 1:
            raise ValueError(f"step_cap must be >= 1, got {self.step_cap}")

    def streams(self) -> list[np.random.Generator]:
        children = np.random.SeedSequence(self.seed).spawn(self.replicas)
        return [np.random.default_rng(c) for c in children]


_ELASTIC, _PLASTIC_PLUS, _PLASTIC_MINUS = "elastic", "plastic+", "plastic-"


def _regime_of(y: float, z: float, Y: float) -> str:
    if z == Y and y > 0:
        return _PLASTIC_PLUS
    if z == -Y and y < 0:
        return _PLASTIC_MINUS
    return _ELASTIC


@dataclass(frozen=True)
class SimState:
    """Velocity y, elastic component z, displacement x, regime and clock."""

    y: float
    z: float
    x: float = 0.0
    t: float = 0.0
    regime: str = _ELASTIC

    @property
    def Delta(self) -> float:
        """Plastic deformation, x - z by construction."""
        return self.x - self.z


def initial_state(params: OscillatorParams, y: float = 0.0,
                  z: float = 0.0) -> SimState:
    if abs(z) > params.Y:
        raise ValueError(f"|z| <= Y required, got z={z}")
    return SimState(y=y, z=z, regime=_regime_of(y, z, params.Y))


def step(state: SimState, params: OscillatorParams, dt: float,
         dW: float) -> SimState:
    """One projection Euler step (scalar reference implementation; the
    estimators use the equivalent compiled kernels)."""
    c0, k, Y = params.c0, params.k, params.Y
    y_new = state.y - (c0 * state.y + k * state.z) * dt + dW
    z_new = min(max(state.z + state.y * dt, -Y), Y)
    x_new = state.x + state.y * dt
    return SimState(y=y_new, z=z_new, x=x_new, t=state.t + dt,
                    regime=_regime_of(y_new, z_new, Y))


@njit(cache=True)
def _advance(y, z, x, dW, dt, c0, k, Y, y_out, z_out):  # pragma: no cover
    for i in range(dW.shape[0]):
        y_new = y - (c0 * y + k * z) * dt + dW[i]
        z_new = z + y * dt
        if z_new > Y:
            z_new = Y
        elif z_new < -Y:
            z_new = -Y
        x += y * dt
        y = y_new
        z = z_new
        y_out[i] = y
        z_out[i] = z
    return y, z, x


@njit(cache=True)
def _advance_cycle(y, z, r, dW, dt, c0, k, Y, y_out, z_out):  # pragma: no cover
    """Advance until a plastic phase completes or dW is exhausted.
    r is the regime code of the current state (+1/0/-1).
    Returns (steps taken, completed?, y, z, r)."""
    for i in range(dW.shape[0]):
        y_new = y - (c0 * y + k * z) * dt + dW[i]
        z_new = z + y * dt
        if z_new > Y:
            z_new = Y
        elif z_new < -Y:
            z_new = -Y
        done = (r == 1 and y_new <= 0.0) or (r == -1 and y_new >= 0.0)
        y = y_new
        z = z_new
        y_out[i] = y
        z_out[i] = z
        if z == Y and y > 0:
            r = 1
        elif z == -Y and y < 0:
            r = -1
        else:
            r = 0
        if done:
            return i + 1, True, y, z, r
    return dW.shape[0], False, y, z, r


@njit(cache=True)
def _advance_until_ray(y, z, dW, dt, c0, k, Y):  # pragma: no cover
    """Advance until the state first lies on a ray; returns
    (steps taken, ray code or 0 if dW exhausted, y, z)."""
    for i in range(dW.shape[0]):
        y_new = y - (c0 * y + k * z) * dt + dW[i]
        z_new = z + y * dt
        if z_new > Y:
            z_new = Y
        elif z_new < -Y:
            z_new = -Y
        y = y_new
        z = z_new
        if z == Y and y > 0:
            return i + 1, 1, y, z
        if z == -Y and y < 0:
            return i + 1, -1, y, z
    return dW.shape[0], 0, y, z


def _region_codes(y: np.ndarray, z: np.ndarray, Y: float) -> np.ndarray:
    return np.where((z == Y) & (y > 0), 1,
                    np.where((z == -Y) & (y < 0), -1, 0))


@dataclass
class PathStats:
    """Streaming accumulators for one replica's time average."""

    f_sum: float = 0.0
    steps: int = 0
    batch_sums: list = field(default_factory=list)
    batch_steps: list = field(default_factory=list)

    def add(self, contribs: np.ndarray, batch_edges_every: int) -> None:
        # append to the running batch, opening new batches as needed
        pos = 0
        n = contribs.shape[0]
        while pos < n:
            if not self.batch_steps or self.batch_steps[-1] >= batch_edges_every:
                self.batch_sums.append(0.0)
                self.batch_steps.append(0)
            room = batch_edges_every - self.batch_steps[-1]
            take = min(room, n - pos)
            s = float(np.sum(contribs[pos:pos + take]))
            self.batch_sums[-1] += s
            self.batch_steps[-1] += take
            self.f_sum += s
            self.steps += take
            pos += take


def estimate_time_average(f: Functional, params: OscillatorParams,
                          cfg: SimConfig) -> tuple[float, float]:
    """Long-run time average (1/T_eff) int f(y,z,regime) dt after burn-in,
    over all replicas; stderr by batch means."""
    c0, k, Y = params.c0, params.k, params.Y
    n_total = int(round(cfg.horizon / cfg.dt))
    n_burn = int(round(cfg.burn_in * n_total))
    n_avg = n_total - n_burn
    if n_avg < cfg.batches:
        raise ValueError(
            f"horizon too short: {n_avg} averaging steps < {cfg.batches} batches")
    per_batch = n_avg // cfg.batches
    y_buf = np.empty(_CHUNK)
    z_buf = np.empty(_CHUNK)
    all_batch_means = []
    total = 0.0
    total_steps = 0
    for rng in cfg.streams():
        y, z, x = 0.0, 0.0, 0.0
        stats = PathStats()
        done = 0
        while done < n_total:
            m = min(_CHUNK, n_total - done)
            dW = rng.standard_normal(m) * np.sqrt(cfg.dt)
            y, z, x = _advance(y, z, x, dW, cfg.dt, c0, k, Y,
                               y_buf[:m], z_buf[:m])
            lo = max(n_burn - done, 0)
            if lo < m:
                ys = y_buf[lo:m]
                zs = z_buf[lo:m]
                vals = np.asarray(f(ys, zs, _region_codes(ys, zs, Y)), float)
                stats.add(vals, per_batch)
            done += m
        total += stats.f_sum
        total_steps += stats.steps
        for s, c in zip(stats.batch_sums, stats.batch_steps):
            if c == per_batch:  # drop the ragged tail batch
                all_batch_means.append(s / c)
    estimate = total / total_steps
    bm = np.asarray(all_batch_means)
    stderr = float(bm.std(ddof=1) / np.sqrt(bm.size)) if bm.size > 1 else float("nan")
    return float(estimate), stderr


_CYCLE_STARTS = {
    "plus": lambda params: initial_state(params, 0.0, params.Y),
    "minus": lambda params: initial_state(params, 0.0, -params.Y),
}


@dataclass
class CycleEstimate:
    """Per-cycle integral of f and cycle duration, with stderr."""

    integral: float
    integral_stderr: float
    duration: float
    duration_stderr: float
    cycles: int
    discarded: int


def estimate_cycle(f: Functional, start, params: OscillatorParams,
                   cfg: SimConfig) -> CycleEstimate:
    """One cycle per replica: run from ``start`` ("plus", "minus" or an
    interior PhasePoint) until the first plastic-phase completion and
    accumulate int f dt and the duration.  Replicas hitting the step cap
    are discarded and counted."""
    c0, k, Y = params.c0, params.k, params.Y
    if isinstance(start, str):
        try:
            state0 = _CYCLE_STARTS[start](params)
        except KeyError:
            raise ValueError(f"start must be 'plus', 'minus' or a PhasePoint,"
                             f" got {start!r}") from None
    else:
        if start.region != "interior":
            raise ValueError("PhasePoint cycle starts must be interior")
        state0 = initial_state(params, start.y, start.z)
    r0 = {_ELASTIC: 0, _PLASTIC_PLUS: 1, _PLASTIC_MINUS: -1}[state0.regime]
    y_buf = np.empty(_CHUNK)
    z_buf = np.empty(_CHUNK)
    integrals = []
    durations = []
    discarded = 0
    for rng in cfg.streams():
        y, z, r = state0.y, state0.z, r0
        acc = 0.0
        steps = 0
        completed = False
        while steps < cfg.step_cap:
            m = min(_CHUNK, cfg.step_cap - steps)
            dW = rng.standard_normal(m) * np.sqrt(cfg.dt)
            used, completed, y, z, r = _advance_cycle(
                y, z, r, dW, cfg.dt, c0, k, Y, y_buf[:m], z_buf[:m])
            ys = y_buf[:used]
            zs = z_buf[:used]
            acc += float(np.sum(np.asarray(
                f(ys, zs, _region_codes(ys, zs, Y)), float))) * cfg.dt
            steps += used
            if completed:
                break
        if completed:
            integrals.append(acc)
            durations.append(steps * cfg.dt)
        else:
            discarded += 1
    if not integrals:
        raise RuntimeError("every replica hit the step cap without a cycle")
    ints = np.asarray(integrals)
    durs = np.asarray(durations)
    nrep = ints.size
    sem = lambda a: float(a.std(ddof=1) / np.sqrt(nrep)) if nrep > 1 else float("nan")
    return CycleEstimate(
        integral=float(ints.mean()), integral_stderr=sem(ints),
        duration=float(durs.mean()), duration_stderr=sem(durs),
        cycles=nrep, discarded=discarded,
    )


def estimate_pi(start: PhasePoint, params: OscillatorParams,
                cfg: SimConfig) -> tuple[float, float]:
    """Probability of first entering a plastic+ phase before a plastic-
    phase, from an interior start; stderr binomial."""
    if start.region != "interior":
        raise ValueError("estimate_pi requires an interior start")
    c0, k, Y = params.c0, params.k, params.Y
    hits_plus = 0
    decided = 0
    for rng in cfg.streams():
        y, z = start.y, start.z
        steps = 0
        ray = 0
        while steps < cfg.step_cap and ray == 0:
            m = min(_CHUNK, cfg.step_cap - steps)
            dW = rng.standard_normal(m) * np.sqrt(cfg.dt)
            used, ray, y, z = _advance_until_ray(y, z, dW, cfg.dt, c0, k, Y)
            steps += used
        if ray != 0:
            decided += 1
            if ray == 1:
                hits_plus += 1
    if decided == 0:
        raise RuntimeError("every replica hit the step cap before a ray")
    p = hits_plus / decided
    stderr = float(np.sqrt(p * (1.0 - p) / decided))
    return float(p), stderr


@njit(cache=True)
def _advance_xyz(y, z, x, dW, dt, c0, k, Y, y_out, z_out, x_out):  # pragma: no cover
    for i in range(dW.shape[0]):
        y_new = y - (c0 * y + k * z) * dt + dW[i]
        z_new = z + y * dt
        if z_new > Y:
            z_new = Y
        elif z_new < -Y:
            z_new = -Y
        x += y * dt
        y = y_new
        z = z_new
        y_out[i] = y
        z_out[i] = z
        x_out[i] = x
    return y, z, x


def simulate_path(params: OscillatorParams, cfg: SimConfig,
                  y0: float = 0.0, z0: float = 0.0,
                  record_every: int = 1) -> dict:
    """Single decimated trajectory for inspection/dumps.  Returns a dict of
    arrays t, y, z, x, Delta, regime (codes +1/0/-1), using the first
    replica stream."""
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    c0, k, Y = params.c0, params.k, params.Y
    n_total = int(round(cfg.horizon / cfg.dt))
    rng = cfg.streams()[0]
    y, z, x = float(y0), float(z0), 0.0
    y_buf = np.empty(_CHUNK)
    z_buf = np.empty(_CHUNK)
    x_buf = np.empty(_CHUNK)
    ys, zs, xs, ts = [], [], [], []
    done = 0
    while done < n_total:
        m = min(_CHUNK, n_total - done)
        dW = rng.standard_normal(m) * np.sqrt(cfg.dt)
        y, z, x = _advance_xyz(y, z, x, dW, cfg.dt, c0, k, Y,
                               y_buf[:m], z_buf[:m], x_buf[:m])
        sel = np.arange((-done) % record_every, m, record_every)
        ys.append(y_buf[sel].copy())
        zs.append(z_buf[sel].copy())
        xs.append(x_buf[sel].copy())
        ts.append((done + sel + 1) * cfg.dt)
        done += m
    yv = np.concatenate(ys)
    zv = np.concatenate(zs)
    xv = np.concatenate(xs)
    return {
        "t": np.concatenate(ts), "y": yv, "z": zv, "x": xv,
        "Delta": xv - zv, "regime": _region_codes(yv, zv, Y),
    }
