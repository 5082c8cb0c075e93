"""Coupled Matsuoka-oscillator CPG network with deterministic fixed-step integration.

The rhythm generator is a chain of four primitive Matsuoka oscillators.  Each
primitive unit is a mutually inhibiting extensor/flexor neuron pair with
adaptation:

    K_f * tau_r * dx_e/dt = -x_e - a*z_f - b*y_e - (coupling) + u_e + c
    K_f * tau_a * dy_e/dt =  z_e - y_e
    K_f * tau_r * dx_f/dt = -x_f - a*z_e - b*y_f - (coupling) + u_f + c
    K_f * tau_a * dy_f/dt =  z_f - y_f

with firing rates z = max(0, x).  The actuation command of unit i is
psi_i = A_z * (z_e[i] - z_f[i]); with the stock parameter set it stays inside
[-1, 1] for any tonic drive in [0, 1] (BIBO).

Chain coupling: unit 1 sits at the head and initiates the rhythm.  Each unit
inhibits its tail-side neighbour with weight ``w_down`` and its head-side
neighbour with weight ``w_up``, acting through the neighbour's adaptation
state of the *opposing* neuron type (extensor adaptation inhibits the
neighbour's flexor and vice versa).  With the stock weights this produces a
head-to-tail traveling wave, which is what pushes a snake forward; coupling
through the matching neuron type makes the wave run tail-to-head instead
(see ``demos/demo_cpg_waves.py``).

Integration is classical RK4 at a fixed step (default 1 ms).  The rectifier
max(0, x) is continuous, so RK4 behaves well; everything is deterministic and
bit-reproducible for identical inputs.  Tonic inputs are held piecewise
constant over a control interval (default 50 ms) with integration substeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, replace
from typing import Callable, Union

import numpy as np
from numba import njit

__all__ = [
    "OscillatorParams",
    "CpgOutput",
    "TonicInputs",
    "NetworkState",
    "Trajectory",
    "StabilityReport",
    "IntegrationDivergedError",
    "decode_action",
    "validate_params",
    "step_network",
    "simulate",
    "TRAJECTORY_COLUMNS",
]


class IntegrationDivergedError(RuntimeError):
    """Raised when a network state stops being finite during integration."""


# ---------------------------------------------------------------------------
# parameter and state containers
# ---------------------------------------------------------------------------

@dataclass
class OscillatorParams:
    """All Matsuoka/network coefficients plus integration settings.

    Defaults mirror the stock tuned configuration of the 4-unit net
    (tau_r=0.7696, tau_a=1.7728, a=2.0935, b=10.0355, w_down=8.8669,
    w_up=0.7844, A_z=4.6062, K_f=1).  ``c`` is the free-response tonic input;
    it is 0 unless the free-oscillation constraint is wanted.
    """

    tau_r: float = 0.7696      # discharge rate time constant [s]
    tau_a: float = 1.7728      # adaptation rate time constant [s]
    a: float = 2.0935          # extensor/flexor mutual inhibition weight
    b: float = 10.0355         # self (adaptation) inhibition weight
    w_down: float = 8.8669     # head-to-tail coupling weight
    w_up: float = 0.7844       # tail-to-head coupling weight
    k_f: float = 1.0           # frequency ratio (scales both time constants)
    c: float = 0.0             # free-response tonic input
    a_z: float = 4.6062        # output amplification
    n_oscillators: int = 4
    dt: float = 1e-3           # integration step [s]
    control_dt: float = 0.05   # tonic-input hold interval [s]

    def validate(self) -> None:
        if not (self.tau_r > 0 and self.tau_a > 0):
            raise ValueError(
                f"time constants must be positive: tau_r={self.tau_r}, tau_a={self.tau_a}")
        if self.b < 0 or self.a < 0:
            raise ValueError(f"inhibition weights must be >= 0: a={self.a}, b={self.b}")
        if self.k_f <= 0:
            raise ValueError(f"frequency ratio must be positive: k_f={self.k_f}")
        if self.c < 0:
            raise ValueError(f"free-response tonic input must be >= 0: c={self.c}")
        if self.n_oscillators < 1:
            raise ValueError("need at least one oscillator")
        if self.dt <= 0 or self.control_dt <= 0:
            raise ValueError("dt and control_dt must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "OscillatorParams":
        return replace(self, **kw)


@dataclass
class StabilityReport:
    """Result of the oscillation-existence check (tau_a - tau_r)^2 < 4 tau_r tau_a b."""

    oscillation_possible: bool
    lhs: float   # (tau_a - tau_r)^2
    rhs: float   # 4 * tau_r * tau_a * b


@dataclass
class TonicInputs:
    """Tonic drive vector: u_e[i], u_f[i] per oscillator.

    Exclusive pairs (u_e + u_f == 1 with both in [0, 1]) are what the action
    decoder produces and what the steering analysis assumes; direct
    construction allows arbitrary non-negative drives (the parameter-tuning
    fitness rollouts use all-ones).  Use :meth:`is_exclusive` to check.
    """

    u_e: np.ndarray
    u_f: np.ndarray

    def __post_init__(self):
        self.u_e = np.asarray(self.u_e, dtype=np.float64)
        self.u_f = np.asarray(self.u_f, dtype=np.float64)
        if self.u_e.shape != self.u_f.shape:
            raise ValueError("u_e and u_f must have the same shape")

    @classmethod
    def constant(cls, value: float, n: int = 4) -> "TonicInputs":
        return cls(np.full(n, float(value)), np.full(n, float(value)))

    @classmethod
    def exclusive(cls, u_e) -> "TonicInputs":
        u_e = np.asarray(u_e, dtype=np.float64)
        if np.any(u_e < 0) or np.any(u_e > 1):
            raise ValueError("exclusive tonic inputs require u_e in [0, 1]")
        return cls(u_e, 1.0 - u_e)

    def is_exclusive(self) -> bool:
        inside = np.all(self.u_e >= 0) and np.all(self.u_e <= 1)
        return bool(inside and np.all(self.u_e + self.u_f == 1.0))

    def as_vector(self) -> np.ndarray:
        """Interleaved drive vector [u_1^e, u_1^f, u_2^e, u_2^f, ...]."""
        out = np.empty(2 * self.u_e.size)
        out[0::2] = self.u_e
        out[1::2] = self.u_f
        return out


@dataclass
class NetworkState:
    """Neuron states of the coupled net: activation x and adaptation y per type."""

    x_e: np.ndarray
    y_e: np.ndarray
    x_f: np.ndarray
    y_f: np.ndarray

    def __post_init__(self):
        n = len(self.x_e)
        for name in ("x_e", "y_e", "x_f", "y_f"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise ValueError("state arrays must share one shape")
            setattr(self, name, arr)

    @classmethod
    def zeros(cls, n: int = 4) -> "NetworkState":
        return cls(*(np.zeros(n) for _ in range(4)))

    @classmethod
    def default(cls, n: int = 4, kick: float = 0.01) -> "NetworkState":
        """Zero state with a small head-extensor kick to break symmetry.

        The exact origin is a fixed point, so a symmetric start never
        oscillates; the kick seeds the limit cycle.
        """
        s = cls.zeros(n)
        s.x_e[0] = kick
        return s

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "NetworkState":
        vec = np.asarray(vec, dtype=np.float64)
        n = vec.size // 4
        return cls(vec[0:n].copy(), vec[n:2 * n].copy(),
                   vec[2 * n:3 * n].copy(), vec[3 * n:4 * n].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x_e, self.y_e, self.x_f, self.y_f])

    def mirrored(self) -> "NetworkState":
        """Swap extensor and flexor states (the e/f mirror image)."""
        return NetworkState(self.x_f.copy(), self.y_f.copy(),
                            self.x_e.copy(), self.y_e.copy())

    def psi(self, params: OscillatorParams) -> np.ndarray:
        """Actuation commands A_z * (z_e - z_f) for the current state."""
        return params.a_z * (np.maximum(0.0, self.x_e) - np.maximum(0.0, self.x_f))


@dataclass
class CpgOutput:
    """Actuation commands psi_i = A_z * (z_e[i] - z_f[i]), targeting [-1, 1]."""

    psi: np.ndarray

    @classmethod
    def from_state(cls, state: NetworkState, params: OscillatorParams) -> "CpgOutput":
        return cls(psi=state.psi(params))


@dataclass
class Trajectory:
    """Uniformly sampled simulation record (step = dt of the run)."""

    t: np.ndarray                # (m,)
    states: np.ndarray           # (m, 4n) rows [x_e | y_e | x_f | y_f]
    u_e: np.ndarray              # (m, n) drive held during [t, t+dt)
    u_f: np.ndarray              # (m, n)
    psi: np.ndarray              # (m, n)
    params: OscillatorParams = field(repr=False, default=None)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def n_oscillators(self) -> int:
        return self.psi.shape[1]

    def state_at(self, index: int) -> NetworkState:
        return NetworkState.from_vector(self.states[index])

    def channel(self, name: str) -> np.ndarray:
        """Column lookup by name, e.g. 'psi1', 'x_e2', 'u_f4' (1-based index)."""
        n = self.n_oscillators
        base, idx = name.rstrip("0123456789"), name[len(name.rstrip("0123456789")):]
        i = int(idx) - 1
        if not 0 <= i < n:
            raise KeyError(name)
        if base == "psi":
            return self.psi[:, i]
        if base in ("u_e", "u_f"):
            return (self.u_e if base == "u_e" else self.u_f)[:, i]
        offsets = {"x_e": 0, "y_e": n, "x_f": 2 * n, "y_f": 3 * n}
        if base in offsets:
            return self.states[:, offsets[base] + i]
        raise KeyError(name)


def TRAJECTORY_COLUMNS(n: int = 4) -> list[str]:
    cols = ["t"]
    for block in ("x_e", "x_f", "y_e", "y_f", "u_e", "u_f", "psi"):
        prefix = block if block != "psi" else "psi"
        cols += [f"{prefix}{i + 1}" for i in range(n)]
    return cols


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def validate_params(params: OscillatorParams) -> StabilityReport:
    """Check the oscillation-existence constraint (tau_a - tau_r)^2 < 4 tau_r tau_a b.

    Strict inequality; the report echoes both sides so callers can see the
    margin.  Raises ValueError for non-positive time constants.
    """
    params.validate()
    lhs = (params.tau_a - params.tau_r) ** 2
    rhs = 4.0 * params.tau_r * params.tau_a * params.b
    return StabilityReport(oscillation_possible=bool(lhs < rhs), lhs=lhs, rhs=rhs)


def decode_action(a_vec) -> TonicInputs:
    """Map an unbounded action vector to exclusive tonic inputs.

    u_e = sigmoid(a), u_f = 1 - u_e, so u_e + u_f == 1 exactly and both stay
    in [0, 1]; this halves the drive dimension the policy has to control.
    """
    a_vec = np.asarray(a_vec, dtype=np.float64)
    if not np.all(np.isfinite(a_vec)):
        raise ValueError("action vector must be finite")
    u_e = 1.0 / (1.0 + np.exp(-a_vec))
    return TonicInputs(u_e, 1.0 - u_e)


@njit(cache=True)
def _rk4_chain(s, u_e, u_f, a, b, w_down, w_up, tau_r, tau_a, k_f, c, dt, steps, n, out):
    """RK4-integrate the 4n-state chain for `steps` steps under constant drive.

    out must be (steps+1, 4n); out[0] is set to the initial state.  State
    layout: [x_e(0..n-1), y_e, x_f, y_f].  Coupling is cross-type: unit i's
    extensor is inhibited by neighbour adaptation y_f, the flexor by y_e.
    """
    out[0] = s
    k = np.empty((4, 4 * n))
    tmp = np.empty(4 * n)
    inv_tr = 1.0 / (k_f * tau_r)
    inv_ta = 1.0 / (k_f * tau_a)
    for step in range(steps):
        for stage in range(4):
            if stage == 0:
                for i in range(4 * n):
                    tmp[i] = s[i]
            elif stage < 3:
                for i in range(4 * n):
                    tmp[i] = s[i] + 0.5 * dt * k[stage - 1, i]
            else:
                for i in range(4 * n):
                    tmp[i] = s[i] + dt * k[2, i]
            for i in range(n):
                xe = tmp[i]
                ye = tmp[n + i]
                xf = tmp[2 * n + i]
                yf = tmp[3 * n + i]
                ze = xe if xe > 0.0 else 0.0
                zf = xf if xf > 0.0 else 0.0
                ce = 0.0
                cf = 0.0
                if i > 0:
                    ce += w_down * tmp[3 * n + i - 1]
                    cf += w_down * tmp[n + i - 1]
                if i < n - 1:
                    ce += w_up * tmp[3 * n + i + 1]
                    cf += w_up * tmp[n + i + 1]
                k[stage, i] = (-xe - a * zf - b * ye - ce + u_e[i] + c) * inv_tr
                k[stage, n + i] = (ze - ye) * inv_ta
                k[stage, 2 * n + i] = (-xf - a * ze - b * yf - cf + u_f[i] + c) * inv_tr
                k[stage, 3 * n + i] = (zf - yf) * inv_ta
        for i in range(4 * n):
            s[i] = s[i] + (dt / 6.0) * (k[0, i] + 2.0 * k[1, i] + 2.0 * k[2, i] + k[3, i])
        out[step + 1] = s
    return out


def _run_segment(state_vec, u: TonicInputs, params: OscillatorParams,
                 dt: float, steps: int) -> np.ndarray:
    n = params.n_oscillators
    out = np.empty((steps + 1, 4 * n))
    _rk4_chain(state_vec.copy(), u.u_e, u.u_f,
               params.a, params.b, params.w_down, params.w_up,
               params.tau_r, params.tau_a, params.k_f, params.c,
               dt, steps, n, out)
    return out


def _check_finite(block: np.ndarray, first_step_index: int, dt: float) -> None:
    if np.all(np.isfinite(block)):
        return
    bad = np.nonzero(~np.isfinite(block).all(axis=1))[0]
    step = first_step_index + int(bad[0])
    raise IntegrationDivergedError(
        f"network state became non-finite at step {step} (t = {step * dt:.6f} s)")


def step_network(state: NetworkState, u: TonicInputs, params: OscillatorParams,
                 dt: float | None = None) -> NetworkState:
    """Advance the network one RK4 step under constant tonic drive."""
    dt = params.dt if dt is None else float(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    params.validate()
    out = _run_segment(state.as_vector(), u, params, dt, 1)
    _check_finite(out[1:], 1, dt)
    return NetworkState.from_vector(out[1])


TonicSchedule = Union[TonicInputs, Callable[[float], TonicInputs]]


def simulate(params: OscillatorParams, tonic_schedule: TonicSchedule,
             duration: float, dt: float | None = None,
             ics: NetworkState | None = None) -> Trajectory:
    """Integrate the network for `duration` seconds and record everything.

    ``tonic_schedule`` is either a fixed :class:`TonicInputs` or a callable
    ``t -> TonicInputs``; a callable is sampled at the start of each control
    interval (``params.control_dt``) and held constant in between, matching
    how a discrete-time policy drives the net.  The result is sampled on the
    integration grid and is bit-deterministic for identical inputs.
    """
    dt = params.dt if dt is None else float(dt)
    params.validate()
    if duration < 0:
        raise ValueError("duration must be >= 0")
    n = params.n_oscillators
    state = (NetworkState.default(n) if ics is None else ics)
    vec = state.as_vector()
    if vec.size != 4 * n:
        raise ValueError("initial state size does not match n_oscillators")

    total_steps = int(round(duration / dt))
    scheduled = callable(tonic_schedule)
    steps_per_ctrl = max(1, int(round(params.control_dt / dt))) if scheduled else total_steps

    t = np.arange(total_steps + 1) * dt
    states = np.empty((total_steps + 1, 4 * n))
    u_e = np.empty((total_steps + 1, n))
    u_f = np.empty((total_steps + 1, n))
    states[0] = vec

    done = 0
    while done < total_steps:
        seg = min(steps_per_ctrl, total_steps - done)
        u = tonic_schedule(done * dt) if scheduled else tonic_schedule
        if u.u_e.size != n:
            raise ValueError("tonic input size does not match n_oscillators")
        block = _run_segment(vec, u, params, dt, seg)
        _check_finite(block[1:], done + 1, dt)
        states[done + 1:done + seg + 1] = block[1:]
        u_e[done:done + seg] = u.u_e
        u_f[done:done + seg] = u.u_f
        vec = block[-1]
        done += seg

    # drive at the final sample = last held value (or the schedule's value at T)
    if total_steps == 0:
        u0 = tonic_schedule(0.0) if scheduled else tonic_schedule
        u_e[0], u_f[0] = u0.u_e, u0.u_f
    else:
        u_e[-1], u_f[-1] = u_e[-2], u_f[-2]

    psi = params.a_z * (np.maximum(0.0, states[:, 0:n]) - np.maximum(0.0, states[:, 2 * n:3 * n]))
    return Trajectory(t=t, states=states, u_e=u_e, u_f=u_f, psi=psi, params=params)
