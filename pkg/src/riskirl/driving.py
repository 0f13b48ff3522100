"""Leader-follower driving scenario: kinematic follower, double/triple
integrator leader, maneuver library, window features, and a synthetic
Boltzmann expert for ground-truth experiments.

The leader resamples a maneuver (an N-step input sequence) every N steps;
the expert plans on the prepare-react clock, so within one planning window
the first N - n_d steps replay the tail of the maneuver already in progress
and the last n_d steps run the freshly sampled one.

Joint state layout (index order is fixed):
    xi = [x_f, y_f, theta_f, v_f, delta_f, x_l, v_xl, y_l, v_yl, a_yl]
"""

from dataclasses import dataclass

import numpy as np

from .costs import ControlBounds
from .envelopes import Pmf
from .likelihood import TrajectorySegment
from .planning import ActionLibrary, boltzmann, soft_bellman

WHEELBASE = 3.476  # m
CAR_LENGTH = 4.2  # m, for normalized reporting
FEATURE_STEEPNESS = (1.0, 0.05, 0.1, 1.0, 0.1, 0.5)
COLLISION_GAP = 2.5  # m, along-track threshold in phi1/phi2
ROAD_HALF_WIDTH = 2.0  # m, lateral threshold in phi6

IDX_XF, IDX_YF, IDX_TH, IDX_VF, IDX_DE = 0, 1, 2, 3, 4
IDX_XL, IDX_VXL, IDX_YL, IDX_VYL, IDX_AYL = 5, 6, 7, 8, 9


@dataclass(frozen=True, eq=False)
class FollowerState:
    x_f: float
    y_f: float
    v_f: float
    theta_f: float
    delta_f: float


@dataclass(frozen=True, eq=False)
class LeaderState:
    x_l: float
    v_xl: float
    y_l: float
    v_yl: float
    a_yl: float


def step_follower(s, u_a, u_s, dt):
    """Forward-Euler step of the kinematic follower car."""
    return FollowerState(
        x_f=s.x_f + dt * s.v_f * np.cos(s.theta_f),
        y_f=s.y_f + dt * s.v_f * np.sin(s.theta_f),
        v_f=s.v_f + dt * u_a,
        theta_f=s.theta_f - dt * (s.v_f / WHEELBASE) * np.tan(s.delta_f),
        delta_f=s.delta_f + dt * u_s,
    )


def step_leader(s, w_x, w_y, dt):
    """Forward-Euler step of the leader (double/triple integrator)."""
    return LeaderState(
        x_l=s.x_l + dt * s.v_xl,
        v_xl=s.v_xl + dt * w_x,
        y_l=s.y_l + dt * s.v_yl,
        v_yl=s.v_yl + dt * s.a_yl,
        a_yl=s.a_yl + dt * w_y,
    )


def follower_ode(state5, u_a, u_s):
    x, y, v, th, de = state5
    return np.array([v * np.cos(th), v * np.sin(th), u_a, -(v / WHEELBASE) * np.tan(de), u_s])


def rk4_follower_step(state5, u_a, u_s, dt):
    """RK4 reference integrator (tests only; analysis runs forward Euler)."""
    k1 = follower_ode(state5, u_a, u_s)
    k2 = follower_ode(state5 + 0.5 * dt * k1, u_a, u_s)
    k3 = follower_ode(state5 + 0.5 * dt * k2, u_a, u_s)
    k4 = follower_ode(state5 + dt * k3, u_a, u_s)
    return state5 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _step_joint(xi, u_a, u_s, w_x, w_y, dt):
    out = np.empty(10)
    out[IDX_XF] = xi[IDX_XF] + dt * xi[IDX_VF] * np.cos(xi[IDX_TH])
    out[IDX_YF] = xi[IDX_YF] + dt * xi[IDX_VF] * np.sin(xi[IDX_TH])
    out[IDX_TH] = xi[IDX_TH] - dt * (xi[IDX_VF] / WHEELBASE) * np.tan(xi[IDX_DE])
    out[IDX_VF] = xi[IDX_VF] + dt * u_a
    out[IDX_DE] = xi[IDX_DE] + dt * u_s
    out[IDX_XL] = xi[IDX_XL] + dt * xi[IDX_VXL]
    out[IDX_VXL] = xi[IDX_VXL] + dt * w_x
    out[IDX_YL] = xi[IDX_YL] + dt * xi[IDX_VYL]
    out[IDX_VYL] = xi[IDX_VYL] + dt * xi[IDX_AYL]
    out[IDX_AYL] = xi[IDX_AYL] + dt * w_y
    return out


def joint_state(follower, leader):
    return np.array([
        follower.x_f, follower.y_f, follower.theta_f, follower.v_f, follower.delta_f,
        leader.x_l, leader.v_xl, leader.y_l, leader.v_yl, leader.a_yl,
    ])


def relative_quantities(xi):
    """(x_rel, y_rel, v_x_rel, v_y_rel) between leader and follower."""
    x_rel = xi[IDX_XL] - xi[IDX_XF]
    y_rel = xi[IDX_YL] - xi[IDX_YF]
    v_x_rel = xi[IDX_VXL] - xi[IDX_VF] * np.cos(xi[IDX_TH])
    v_y_rel = xi[IDX_VYL] - xi[IDX_VF] * np.sin(xi[IDX_TH])
    return x_rel, y_rel, v_x_rel, v_y_rel


def _softplus_gap(z):
    # log(1 + e^z) - log 2, stable for large |z|
    return np.logaddexp(0.0, z) - np.log(2.0)


def step_features(xi):
    """Per-step feature vector (phi4 excluded; it is a window quantity)."""
    r1, r2, r3, _, r5, r6 = FEATURE_STEEPNESS
    x_rel, y_rel, v_x_rel, _ = relative_quantities(xi)
    phi = np.zeros(6)
    if x_rel < COLLISION_GAP:
        phi[0] = _softplus_gap(-r1 * (x_rel - COLLISION_GAP))
    if x_rel > COLLISION_GAP:
        phi[1] = _softplus_gap(r2 * (x_rel - COLLISION_GAP))
    phi[2] = _softplus_gap(r3 * abs(v_x_rel))
    phi[4] = _softplus_gap(r5 * abs(y_rel))
    y_f = xi[IDX_YF]
    if y_f > ROAD_HALF_WIDTH:
        phi[5] = _softplus_gap(r6 * (y_f - ROAD_HALF_WIDTH))
    elif y_f < -ROAD_HALF_WIDTH:
        phi[5] = _softplus_gap(-r6 * (y_f + ROAD_HALF_WIDTH))
    return phi


def features(traj, controls):
    """Window feature vector: per-step features summed over post-step states
    plus the along-track jerk penalty from the control sequence."""
    traj = np.atleast_2d(np.asarray(traj, dtype=float))
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    total = np.zeros(6)
    for xi in traj[1:]:
        total += step_features(xi)
    ua = controls[:, 0]
    total[3] = FEATURE_STEEPNESS[3] * float(np.sum((ua[1:] - ua[:-1]) ** 2))
    return total


# ---------------------------------------------------------------------------
# disturbance library
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DisturbanceLibrary:
    """L leader maneuvers, each an (N, 2) input sequence (w_x, w_y)."""

    maneuvers: np.ndarray  # (L, N, 2)
    pmf: Pmf

    def __post_init__(self):
        m = np.asarray(self.maneuvers, dtype=float)
        if m.ndim != 3 or m.shape[2] != 2:
            raise ValueError("maneuvers must be (L, N, 2)")
        if m.shape[0] != self.pmf.dim:
            raise ValueError("|maneuvers| != pmf dimension")
        object.__setattr__(self, "maneuvers", m)
        m.setflags(write=False)

    @property
    def L(self):
        return self.maneuvers.shape[0]

    @property
    def N(self):
        return self.maneuvers.shape[1]


def _lane_swap_jerk(N, dt, offset):
    """Minimum-norm lateral jerk sequence giving Delta y = offset with zero
    terminal lateral velocity and acceleration under forward Euler."""
    M = np.zeros((3, N))
    for k in range(N):
        a = v = y = 0.0
        impulse = np.zeros(N)
        impulse[k] = 1.0
        for s in range(N):
            y += dt * v
            v += dt * a
            a += dt * impulse[s]
        M[:, k] = (a, v, y)
    target = np.array([0.0, 0.0, offset])
    w, *_ = np.linalg.lstsq(M, target, rcond=None)
    return w


DEFAULT_MANEUVER_PARAMS = {"accel": 2.0, "decel": 2.0, "lane_offset": 3.0}


def make_disturbance_library(cfg, accel=2.0, decel=2.0, lane_offset=3.0):
    """nothing / accelerate / decelerate / lane-swap maneuvers, pmf
    [0.3, 0.3, 0.3, 0.1]."""
    N, dt = cfg.N, cfg.dt
    man = np.zeros((4, N, 2))
    man[1, :, 0] = accel
    man[2, :, 0] = -decel
    man[3, :, 1] = _lane_swap_jerk(N, dt, lane_offset)
    return DisturbanceLibrary(maneuvers=man, pmf=Pmf([0.3, 0.3, 0.3, 0.1]))


def scenario_from_config(d):
    """DrivingScenario from a scenario-config dict, honoring the optional
    maneuver_params entry {accel, decel, lane_offset}."""
    from .planning import ScenarioConfig

    cfg = ScenarioConfig.from_dict(d)
    params = dict(DEFAULT_MANEUVER_PARAMS)
    params.update(d.get("maneuver_params", {}))
    lib = make_disturbance_library(cfg, **params)
    return DrivingScenario(cfg, disturbances=lib)


# ---------------------------------------------------------------------------
# scenario rollouts
# ---------------------------------------------------------------------------


class DrivingScenario:
    """Rollout interface consumed by the Bellman recursions and the tree.

    Within a planning window of N steps, the leader replays steps
    [n_d, N) of the maneuver in progress, then steps [0, n_d) of the newly
    sampled one.
    """

    def __init__(self, cfg, disturbances=None, bounds=None):
        self.cfg = cfg
        self.disturbances = disturbances if disturbances is not None else make_disturbance_library(cfg)
        self.bounds = bounds if bounds is not None else ControlBounds(lower=[-4.0, -0.3], upper=[4.0, 0.3])
        if self.disturbances.N != cfg.N:
            raise ValueError("maneuver length != N")

    def rollout(self, state, action, prev_mode, realized_mode):
        """Joint-state trajectory (N+1, 10) for one realized window."""
        cfg = self.cfg
        xi = np.asarray(state, dtype=float).copy()
        out = [xi.copy()]
        prep = cfg.N - cfg.n_d
        for s in range(cfg.N):
            if s < prep:
                w = self.disturbances.maneuvers[prev_mode][cfg.n_d + s]
            else:
                w = self.disturbances.maneuvers[realized_mode][s - prep]
            xi = _step_joint(xi, action[s][0], action[s][1], w[0], w[1], cfg.dt)
            out.append(xi.copy())
        return np.array(out)

    def stage_features(self, state, action, prev_mode):
        cfg = self.cfg
        prep = cfg.N - cfg.n_d
        xi = np.asarray(state, dtype=float).copy()
        shared = np.zeros(6)
        for s in range(prep):
            w = self.disturbances.maneuvers[prev_mode][cfg.n_d + s]
            xi = _step_joint(xi, action[s][0], action[s][1], w[0], w[1], cfg.dt)
            shared += step_features(xi)
        phi = np.zeros((cfg.L, 6))
        next_states = []
        for j in range(cfg.L):
            xj = xi.copy()
            acc = shared.copy()
            for s in range(prep, cfg.N):
                w = self.disturbances.maneuvers[j][s - prep]
                xj = _step_joint(xj, action[s][0], action[s][1], w[0], w[1], cfg.dt)
                acc += step_features(xj)
            ua = np.asarray(action)[:, 0]
            acc[3] = FEATURE_STEEPNESS[3] * float(np.sum((ua[1:] - ua[:-1]) ** 2))
            phi[j] = acc
            next_states.append(xj)
        return phi, next_states


def default_action_library(cfg, accels=(-4.0, -2.0, 0.0, 2.0, 4.0), steers=(-0.1, 0.0, 0.1)):
    """Grid library: 15 constant (u_a, u_s) first-stage trajectories and the
    5 zero-steer trajectories for later stages."""
    first = []
    for ua in accels:
        for us in steers:
            traj = np.tile([ua, us], (cfg.N, 1))
            first.append(traj)
    later = [np.tile([ua, 0.0], (cfg.N, 1)) for ua in accels]
    return ActionLibrary(first_stage=np.array(first), later_stage=np.array(later))


def default_initial_state(gap=12.0, speed=10.0):
    return np.array([0.0, 0.0, 0.0, speed, 0.0, gap, speed, 0.0, 0.0, 0.0])


def synthetic_expert_run(cfg, crm, c, episode_len, seed, scenario=None, lib=None, x0=None):
    """Simulate a Boltzmann expert over `episode_len` planning windows.

    Every window: compute soft Bellman values at the current state given the
    maneuver in progress, sample the action from the Boltzmann distribution,
    sample the next maneuver from the pmf, roll the window forward, and
    record the segment.
    """
    scenario = scenario if scenario is not None else DrivingScenario(cfg)
    lib = lib if lib is not None else default_action_library(cfg)
    rng = np.random.default_rng(seed)
    xi = default_initial_state() if x0 is None else np.asarray(x0, dtype=float).copy()
    prev_mode = int(rng.choice(cfg.L, p=cfg.pmf.probs))
    segments = []
    c = np.asarray(c, dtype=float)
    for _ in range(episode_len):
        values = soft_bellman(xi, prev_mode, lib, cfg, crm, scenario, c, beta=cfg.beta)
        probs = boltzmann(values, cfg.beta)
        k = int(rng.choice(len(values), p=probs))
        new_mode = int(rng.choice(cfg.L, p=cfg.pmf.probs))
        action = lib.first_stage[k]
        segments.append(TrajectorySegment(prev_mode=prev_mode, realized_mode=new_mode, observed_action=action, start_state=xi.copy()))
        xi = scenario.rollout(xi, action, prev_mode, new_mode)[-1]
        prev_mode = new_mode
    return segments
