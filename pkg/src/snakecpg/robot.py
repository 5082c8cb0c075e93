"""Planar articulated snake surrogate with anisotropic friction.

Stand-in for a soft pneumatic snake: five point-mass bodies (head, three
connectors, tail) joined by four links.  Each link bends at its head-side
joint; the bend angle tracks the pressure command lambda * psi through a
first-order actuator lag (soft chambers inflate slowly), and curvature is
kappa_i = delta_i / l_i by construction.

Ground contact is modelled per body with direction-dependent friction: low
tangential resistance (passive wheels roll along the body axis) and high
lateral resistance (sliding across the wheels), as regularised Coulomb plus
viscous terms.  A traveling bending wave then produces serpentine thrust.

Global motion is exact point-mass mechanics for a body with prescribed
shape: linear momentum of the centre of mass and angular momentum about it
are integrated semi-implicitly, with the shape-change angular momentum
bookkept explicitly, so internal actuation enters only through the shape
wave and friction.  With zero actuation the model is a rigid body under
pure friction, so kinetic energy can only decay.

Determinism: one state in, one state out; no hidden RNG anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

import numpy as np
from joblib import Parallel, delayed
from numba import njit

from .cpg import (IntegrationDivergedError, NetworkState, OscillatorParams,
                  TonicInputs, _rk4_chain)

__all__ = [
    "PhysicsParams",
    "RobotState",
    "Goal",
    "Observation",
    "N_BODIES",
    "N_LINKS",
    "reset",
    "step_robot",
    "observe",
    "body_positions",
    "kinetic_energy",
    "CpgRobotSession",
    "velocity_sweep",
    "VelocitySweep",
]

N_LINKS = 4
N_BODIES = N_LINKS + 1
_STATE_SIZE = 10  # hx, hy, heading, vcx, vcy, omega, p1..p4


@dataclass
class PhysicsParams:
    """Surrogate physics; ranges of the first seven fields are the domain-
    randomization knobs, the rest are fixed model constants."""

    ground_friction: float = 0.8     # lateral Coulomb coefficient
    wheel_friction: float = 0.075    # tangential (rolling) Coulomb coefficient
    body_mass: float = 0.055         # each connector body [kg]
    tail_mass: float = 0.075         # [kg]
    head_mass: float = 0.1           # [kg]
    max_pressure: float = 8.5        # actuator pressure scale lambda [psi]
    gravity_angle: float = 0.0       # in-plane tilt of the ground [rad]
    actuator_lag: float = 0.5        # pressure first-order lag [s]
    link_length: float = 0.12        # [m]
    bend_gain: float = 0.45          # equilibrium bend per unit pressure [rad/psi]
    delta_max: float = 1.2           # soft saturation of the joint angle [rad]
    tangential_damping: float = 0.05  # viscous [N s/m] per body
    lateral_damping: float = 0.1      # viscous [N s/m] per body
    friction_vel_eps: float = 0.02    # Coulomb regularisation velocity [m/s]
    dt: float = 2e-3                  # integration step [s]
    gravity: float = 9.81

    def validate(self) -> None:
        if min(self.body_mass, self.tail_mass, self.head_mass) <= 0:
            raise ValueError("masses must be positive")
        if self.ground_friction < 0 or self.wheel_friction < 0:
            raise ValueError("friction coefficients must be >= 0")
        if self.max_pressure <= 0:
            raise ValueError("max pressure must be positive")
        if self.link_length <= 0 or self.actuator_lag <= 0 or self.dt <= 0:
            raise ValueError("link_length, actuator_lag and dt must be positive")

    def masses(self) -> np.ndarray:
        return np.array([self.head_mass, self.body_mass, self.body_mass,
                         self.body_mass, self.tail_mass])

    def as_kernel_vec(self) -> np.ndarray:
        return np.array([
            self.wheel_friction, self.ground_friction,
            self.head_mass, self.body_mass, self.tail_mass,
            self.max_pressure, self.gravity_angle, self.actuator_lag,
            self.link_length, self.bend_gain, self.delta_max,
            self.tangential_damping, self.lateral_damping,
            self.friction_vel_eps, self.gravity,
        ])

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "PhysicsParams":
        return replace(self, **kw)


@dataclass
class RobotState:
    """Planar pose, momenta and actuator memory of the surrogate."""

    head: np.ndarray              # (2,) head position [m]
    heading: float                # head tangent angle [rad]
    v_com: np.ndarray             # (2,) centre-of-mass velocity [m/s]
    omega: float                  # heading rate [rad/s]
    pressure: np.ndarray          # (4,) lagged normalized pressures in [-1, 1]
    delta: np.ndarray             # (4,) joint bend angles [rad] (slaved to pressure)
    origin: np.ndarray            # (2,) head position at reset (for distance-made-good)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.head, [self.heading], self.v_com,
                               [self.omega], self.pressure])

    @classmethod
    def from_vector(cls, vec, delta, origin) -> "RobotState":
        return cls(head=vec[0:2].copy(), heading=float(vec[2]), v_com=vec[3:5].copy(),
                   omega=float(vec[5]), pressure=vec[6:10].copy(),
                   delta=np.asarray(delta, dtype=np.float64).copy(),
                   origin=np.asarray(origin, dtype=np.float64).copy())

    def curvatures(self, phys: PhysicsParams) -> np.ndarray:
        return self.delta / phys.link_length

    @property
    def speed(self) -> float:
        return float(np.hypot(self.v_com[0], self.v_com[1]))


@dataclass
class Goal:
    position: np.ndarray
    radius: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if self.radius <= 0:
            raise ValueError("goal acceptance radius must be positive")


@dataclass
class Observation:
    """Goal-relative state fed to the controller.

    The canonical 8-vector is [rho_g, rho_dot, theta_g, theta_dot,
    kappa_1..kappa_4]; v_g (velocity made good) and d_g (travel along the
    goal direction from the reset origin) ride along for reward/fitness use.
    """

    rho_g: float
    rho_dot: float
    theta_g: float
    theta_dot: float
    kappa: np.ndarray
    v_g: float
    d_g: float
    speed: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.rho_g, self.rho_dot, self.theta_g, self.theta_dot,
                         *self.kappa])


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _chain_geometry(h, heading, delta, link_len, masses, r, ang):
    r[0, 0] = h[0]
    r[0, 1] = h[1]
    cum = heading + math.pi
    for i in range(N_LINKS):
        cum += delta[i]
        ang[i] = cum
        r[i + 1, 0] = r[i, 0] + link_len * math.cos(cum)
        r[i + 1, 1] = r[i, 1] + link_len * math.sin(cum)
    cx = 0.0
    cy = 0.0
    mt = 0.0
    for k in range(N_BODIES):
        cx += masses[k] * r[k, 0]
        cy += masses[k] * r[k, 1]
        mt += masses[k]
    return cx / mt, cy / mt


@njit(cache=True)
def _shape_rates(r, ddelta, masses, s_vel):
    """Body velocities produced by joint-angle rates at a frozen pose."""
    for k in range(N_BODIES):
        s_vel[k, 0] = 0.0
        s_vel[k, 1] = 0.0
    for j in range(N_LINKS):
        for k in range(j + 1, N_BODIES):
            rx = r[k, 0] - r[j, 0]
            ry = r[k, 1] - r[j, 1]
            s_vel[k, 0] += -ddelta[j] * ry
            s_vel[k, 1] += ddelta[j] * rx


@njit(cache=True)
def _inertia_and_shape_momentum(r, cx, cy, s_vel, masses):
    mt = 0.0
    sbx = 0.0
    sby = 0.0
    for k in range(N_BODIES):
        mt += masses[k]
        sbx += masses[k] * s_vel[k, 0]
        sby += masses[k] * s_vel[k, 1]
    sbx /= mt
    sby /= mt
    inertia = 0.0
    l_shape = 0.0
    for k in range(N_BODIES):
        rx = r[k, 0] - cx
        ry = r[k, 1] - cy
        inertia += masses[k] * (rx * rx + ry * ry)
        l_shape += masses[k] * (rx * (s_vel[k, 1] - sby) - ry * (s_vel[k, 0] - sbx))
    return inertia, l_shape, sbx, sby


@njit(cache=True)
def _robot_steps(state, psi_seq, kp, dt, n_steps):
    """Advance the 10-entry robot state through n_steps; psi_seq is (n_steps, 4).

    Returns the final joint angles (for the state cache).  Layout of kp is
    fixed by PhysicsParams.as_kernel_vec().
    """
    mu_t = kp[0]
    mu_n = kp[1]
    masses = np.empty(N_BODIES)
    masses[0] = kp[2]
    masses[1] = kp[3]
    masses[2] = kp[3]
    masses[3] = kp[3]
    masses[4] = kp[4]
    lam = kp[5]
    grav_angle = kp[6]
    t_lag = kp[7]
    link_len = kp[8]
    bend_gain = kp[9]
    delta_max = kp[10]
    c_t = kp[11]
    c_n = kp[12]
    v_eps = kp[13]
    grav = kp[14]
    m_total = masses[0] + masses[1] + masses[2] + masses[3] + masses[4]

    r = np.empty((N_BODIES, 2))
    r_new = np.empty((N_BODIES, 2))
    ang = np.empty(N_LINKS)
    ang_new = np.empty(N_LINKS)
    s_vel = np.empty((N_BODIES, 2))
    delta = np.empty(N_LINKS)
    delta_new = np.empty(N_LINKS)
    ddelta = np.empty(N_LINKS)
    t_hat = np.empty((N_BODIES, 2))

    n_normal = grav * math.cos(grav_angle)
    f_slope = grav * math.sin(grav_angle)

    for i in range(N_LINKS):
        q = bend_gain * lam * state[6 + i]
        delta[i] = delta_max * math.tanh(q / delta_max)

    for step in range(n_steps):
        # actuator lag on the clipped pressure command
        for i in range(N_LINKS):
            cmd = psi_seq[step, i]
            if cmd > 1.0:
                cmd = 1.0
            elif cmd < -1.0:
                cmd = -1.0
            p_new = state[6 + i] + dt * (cmd - state[6 + i]) / t_lag
            q = bend_gain * lam * p_new
            delta_new[i] = delta_max * math.tanh(q / delta_max)
            ddelta[i] = (delta_new[i] - delta[i]) / dt
            state[6 + i] = p_new

        heading = state[2]
        vcx = state[3]
        vcy = state[4]
        omega = state[5]

        cx, cy = _chain_geometry(state[0:2], heading, delta, link_len, masses, r, ang)
        _shape_rates(r, ddelta, masses, s_vel)
        inertia_old, l_shape_old, sbx, sby = _inertia_and_shape_momentum(
            r, cx, cy, s_vel, masses)

        # forward tangent per body: head uses the heading, connectors the
        # bisector of adjacent links, the tail its only link
        t_hat[0, 0] = math.cos(heading)
        t_hat[0, 1] = math.sin(heading)
        for i in range(1, N_BODIES - 1):
            dx = -(math.cos(ang[i - 1]) + math.cos(ang[i]))
            dy = -(math.sin(ang[i - 1]) + math.sin(ang[i]))
            nrm = math.sqrt(dx * dx + dy * dy)
            if nrm < 1e-12:
                dx, dy, nrm = math.cos(heading), math.sin(heading), 1.0
            t_hat[i, 0] = dx / nrm
            t_hat[i, 1] = dy / nrm
        t_hat[N_BODIES - 1, 0] = -math.cos(ang[N_LINKS - 1])
        t_hat[N_BODIES - 1, 1] = -math.sin(ang[N_LINKS - 1])

        fx_tot = 0.0
        fy_tot = 0.0
        torque = 0.0
        for k in range(N_BODIES):
            vx = vcx - omega * (r[k, 1] - cy) + (s_vel[k, 0] - sbx)
            vy = vcy + omega * (r[k, 0] - cx) + (s_vel[k, 1] - sby)
            tx = t_hat[k, 0]
            ty = t_hat[k, 1]
            vt = vx * tx + vy * ty
            vn = -vx * ty + vy * tx
            n_force = masses[k] * n_normal
            ft = -(mu_t * n_force * math.tanh(vt / v_eps) + c_t * vt)
            fn = -(mu_n * n_force * math.tanh(vn / v_eps) + c_n * vn)
            fx = ft * tx - fn * ty + masses[k] * f_slope
            fy = ft * ty + fn * tx
            fx_tot += fx
            fy_tot += fy
            torque += (r[k, 0] - cx) * fy - (r[k, 1] - cy) * fx

        # momentum balance (angular momentum about the COM includes the
        # shape-change term, evaluated before and after the joint update)
        vcx_new = vcx + dt * fx_tot / m_total
        vcy_new = vcy + dt * fy_tot / m_total

        ncx, ncy = _chain_geometry(state[0:2], heading, delta_new, link_len,
                                   masses, r_new, ang_new)
        _shape_rates(r_new, ddelta, masses, s_vel)
        inertia_new, l_shape_new, _, _ = _inertia_and_shape_momentum(
            r_new, ncx, ncy, s_vel, masses)
        omega_new = (inertia_old * omega + l_shape_old + dt * torque
                     - l_shape_new) / inertia_new

        heading_new = heading + dt * omega_new
        # place the head so the COM advances by exactly dt * v_com
        tgt_x = cx + dt * vcx_new
        tgt_y = cy + dt * vcy_new
        ocx, ocy = _chain_geometry(np.zeros(2), heading_new, delta_new, link_len,
                                   masses, r_new, ang_new)
        state[0] = tgt_x - ocx
        state[1] = tgt_y - ocy
        state[2] = heading_new
        state[3] = vcx_new
        state[4] = vcy_new
        state[5] = omega_new
        for i in range(N_LINKS):
            delta[i] = delta_new[i]

    return delta


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def reset(phys: PhysicsParams, pose=(0.0, 0.0, 0.0), seed: int | None = None) -> RobotState:
    """Robot at rest in the given (x, y, heading) pose; deterministic for a seed."""
    phys.validate()
    del seed  # kept for interface symmetry; the rest pose has no randomness
    x, y, heading = (float(v) for v in pose)
    return RobotState(head=np.array([x, y]), heading=heading,
                      v_com=np.zeros(2), omega=0.0,
                      pressure=np.zeros(N_LINKS), delta=np.zeros(N_LINKS),
                      origin=np.array([x, y]))


def _check_robot_finite(vec: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(vec)):
        raise IntegrationDivergedError(
            f"robot state became non-finite at t = {t:.6f} s")


def step_robot(state: RobotState, psi, phys: PhysicsParams,
               dt: float | None = None) -> RobotState:
    """One semi-implicit integration step under the actuation command psi."""
    dt = phys.dt if dt is None else float(dt)
    psi = np.asarray(psi, dtype=np.float64).reshape(1, N_LINKS)
    vec = state.as_vector()
    delta = _robot_steps(vec, psi, phys.as_kernel_vec(), dt, 1)
    _check_robot_finite(vec, dt)
    return RobotState.from_vector(vec, delta, state.origin)


def step_robot_sequence(state: RobotState, psi_seq: np.ndarray, phys: PhysicsParams,
                        dt: float | None = None, t0: float = 0.0) -> RobotState:
    """Advance through a (n, 4) actuation sequence, one step per row."""
    dt = phys.dt if dt is None else float(dt)
    psi_seq = np.ascontiguousarray(psi_seq, dtype=np.float64)
    vec = state.as_vector()
    delta = _robot_steps(vec, psi_seq, phys.as_kernel_vec(), dt, psi_seq.shape[0])
    _check_robot_finite(vec, t0 + psi_seq.shape[0] * dt)
    return RobotState.from_vector(vec, delta, state.origin)


def body_positions(state: RobotState, phys: PhysicsParams) -> np.ndarray:
    """World positions of the five bodies for the current pose and shape."""
    r = np.empty((N_BODIES, 2))
    ang = np.empty(N_LINKS)
    _chain_geometry(state.head, state.heading, state.delta, phys.link_length,
                    phys.masses(), r, ang)
    return r


def kinetic_energy(state: RobotState, phys: PhysicsParams,
                   ddelta: np.ndarray | None = None) -> float:
    """Total kinetic energy of the five bodies (shape rates default to zero)."""
    masses = phys.masses()
    r = np.empty((N_BODIES, 2))
    ang = np.empty(N_LINKS)
    cx, cy = _chain_geometry(state.head, state.heading, state.delta,
                             phys.link_length, masses, r, ang)
    s_vel = np.zeros((N_BODIES, 2))
    if ddelta is not None:
        _shape_rates(r, np.asarray(ddelta, dtype=np.float64), masses, s_vel)
    sb = (masses[:, None] * s_vel).sum(0) / masses.sum()
    ke = 0.0
    for k in range(N_BODIES):
        vx = state.v_com[0] - state.omega * (r[k, 1] - cy) + s_vel[k, 0] - sb[0]
        vy = state.v_com[1] + state.omega * (r[k, 0] - cx) + s_vel[k, 1] - sb[1]
        ke += 0.5 * masses[k] * (vx * vx + vy * vy)
    return float(ke)


def _wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def observe(state: RobotState, goal: Goal, phys: PhysicsParams,
            prev: Observation | None = None, dt: float = 0.05) -> Observation:
    """Goal-relative observation; derivatives are finite differences vs `prev`.

    theta_g is the signed (CCW-positive) angle from the velocity direction to
    the goal direction; below 1e-4 m/s the heading stands in for the velocity
    direction.  d_g is the travel along the fixed origin-to-goal direction.
    """
    diff = goal.position - state.head
    rho = float(np.hypot(diff[0], diff[1]))
    if rho > 1e-9:
        e_g = diff / rho
    else:
        e_g = np.array([math.cos(state.heading), math.sin(state.heading)])

    if state.speed >= 1e-4:
        v_ang = math.atan2(state.v_com[1], state.v_com[0])
    else:
        v_ang = state.heading
    theta = _wrap_angle(math.atan2(e_g[1], e_g[0]) - v_ang)

    v_g = float(state.v_com @ e_g)
    line = goal.position - state.origin
    norm = float(np.hypot(line[0], line[1]))
    d_g = float((state.head - state.origin) @ (line / norm)) if norm > 1e-9 else 0.0

    rho_dot = (rho - prev.rho_g) / dt if prev is not None else 0.0
    theta_dot = _wrap_angle(theta - prev.theta_g) / dt if prev is not None else 0.0
    return Observation(rho_g=rho, rho_dot=rho_dot, theta_g=theta, theta_dot=theta_dot,
                       kappa=state.curvatures(phys), v_g=v_g, d_g=d_g,
                       speed=state.speed)


# ---------------------------------------------------------------------------
# coupled CPG + robot driver
# ---------------------------------------------------------------------------

class CpgRobotSession:
    """Steps the oscillator net and the surrogate together, one control
    interval at a time (tonic inputs held constant in between)."""

    def __init__(self, params: OscillatorParams, phys: PhysicsParams,
                 pose=(0.0, 0.0, 0.0), cpg_state: NetworkState | None = None):
        params.validate()
        phys.validate()
        ratio = phys.dt / params.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("robot dt must be an integer multiple of the CPG dt")
        self.params = params
        self.phys = phys
        self.cpg_substeps = int(round(params.control_dt / params.dt))
        self.robot_substeps = int(round(params.control_dt / phys.dt))
        self.psi_stride = int(round(ratio))
        self.cpg_vec = (cpg_state if cpg_state is not None
                        else NetworkState.default(params.n_oscillators)).as_vector()
        self.robot = reset(phys, pose)
        self.t = 0.0
        self._kvec = phys.as_kernel_vec()
        n = params.n_oscillators
        self._cpg_out = np.empty((self.cpg_substeps + 1, 4 * n))

    @property
    def cpg_state(self) -> NetworkState:
        return NetworkState.from_vector(self.cpg_vec)

    def step_control(self, u: TonicInputs) -> np.ndarray:
        """Advance one control interval; returns psi samples on the CPG grid."""
        p = self.params
        n = p.n_oscillators
        _rk4_chain(self.cpg_vec, u.u_e, u.u_f, p.a, p.b, p.w_down, p.w_up,
                   p.tau_r, p.tau_a, p.k_f, p.c, p.dt, self.cpg_substeps, n,
                   self._cpg_out)
        block = self._cpg_out
        if not np.all(np.isfinite(block[-1])):
            raise IntegrationDivergedError(
                f"network state became non-finite near t = {self.t:.6f} s")
        self.cpg_vec = block[-1].copy()
        psi = p.a_z * (np.maximum(0.0, block[:, 0:n])
                       - np.maximum(0.0, block[:, 2 * n:3 * n]))
        # zero-order hold of psi onto the robot grid
        psi_robot = np.ascontiguousarray(psi[:-1:self.psi_stride][:, :N_LINKS])
        vec = self.robot.as_vector()
        delta = _robot_steps(vec, psi_robot, self._kvec, self.phys.dt,
                             psi_robot.shape[0])
        _check_robot_finite(vec, self.t)
        self.robot = RobotState.from_vector(vec, delta, self.robot.origin)
        self.t += p.control_dt
        return psi


def _velocity_cell(params, phys, c, k_f, u_value, duration):
    p = params.replace(c=c, k_f=k_f)
    session = CpgRobotSession(p, phys)
    u = TonicInputs.constant(u_value, p.n_oscillators)
    n_ctrl = int(round(duration / p.control_dt))
    start = session.robot.head.copy()
    for _ in range(n_ctrl):
        session.step_control(u)
    disp = session.robot.head - start
    return float(np.hypot(disp[0], disp[1]) / duration)


@dataclass
class VelocitySweep:
    c_grid: np.ndarray
    k_f_grid: np.ndarray
    speed: np.ndarray        # (len(c_grid), len(k_f_grid)); nan where a cell failed
    failures: list


def velocity_sweep(c_grid, k_f_grid, phys: PhysicsParams,
                   params: OscillatorParams | None = None, duration: float = 20.0,
                   u_value: float = 1.0, n_jobs: int = 1) -> VelocitySweep:
    """Average straight-line speed per (c, K_f) cell under constant tonic drive.

    Cells whose simulation diverges are recorded as nan and the sweep
    continues.  Default grids cover c in [0.4, 0.8] and K_f in [0.45, 1.05].
    """
    params = OscillatorParams() if params is None else params
    c_grid = np.asarray(c_grid, dtype=np.float64)
    k_f_grid = np.asarray(k_f_grid, dtype=np.float64)

    def cell(c, kf):
        try:
            return _velocity_cell(params, phys, float(c), float(kf), u_value, duration)
        except IntegrationDivergedError as err:
            return ("fail", str(err))

    flat = Parallel(n_jobs=n_jobs)(
        delayed(cell)(c, kf) for c in c_grid for kf in k_f_grid)
    speed = np.empty((len(c_grid), len(k_f_grid)))
    failures = []
    it = iter(flat)
    for i, c in enumerate(c_grid):
        for j, kf in enumerate(k_f_grid):
            val = next(it)
            if isinstance(val, tuple):
                speed[i, j] = np.nan
                failures.append({"c": float(c), "k_f": float(kf), "error": val[1]})
            else:
                speed[i, j] = val
    return VelocitySweep(c_grid=c_grid, k_f_grid=k_f_grid, speed=speed,
                         failures=failures)
