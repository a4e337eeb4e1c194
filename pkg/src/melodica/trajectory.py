"""Arm kinematics and strike planning for the simulated mallet player.

A note sequence becomes, per arm, a list of timed joint-space control points
(ready above the bar, strike on the bar, back to ready) joined by cubic
Bezier segments and sampled at 50 Hz.  ``execute_sim`` closes the loop by
walking the sampled trajectory through forward kinematics and reporting when
the mallet head crosses a bar's top surface downward.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import InstrumentPlacement, rotation_about_axis
from .instrument import Melody, XylophoneModel

IK_TOL_CM = 0.1  # 1 mm
IK_MAX_ITERS = 200
READY_HEIGHT_CM = 4.0
STRIKE_PENETRATION_CM = 0.2  # nominal press into the bar so crossings register
DEFAULT_STRIKE_DUR_S = 0.2
SAMPLE_HZ = 50.0


class Arm(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class JointLimit(ValueError):
    def __init__(self, index: int, value: float):
        self.index = index
        super().__init__(f"joint {index} at {value:.3f} rad violates its limit")


class Unreachable(ValueError):
    pass


class MissingConfig(KeyError):
    pass


class OnsetCollision(ValueError):
    pass


@dataclass(frozen=True)
class JointSpec:
    axis: tuple[float, float, float]
    offset_cm: tuple[float, float, float]
    lo: float
    hi: float


@dataclass(frozen=True)
class KinematicChain:
    """One 5-DOF arm plus the gripped mallet, rooted at the shoulder."""

    arm: Arm
    shoulder_cm: tuple[float, float, float]
    joints: tuple[JointSpec, ...]
    head_offset_cm: tuple[float, float, float]
    mallet_length_cm: float = 21.0
    mallet_head_radius_cm: float = 0.8

    @classmethod
    def default(cls, arm: Arm) -> "KinematicChain":
        side = 1.0 if arm is Arm.LEFT else -1.0
        upper, fore, hand, mallet = 10.5, 10.5, 10.0, 21.0
        # The gripper cants the mallet ~0.6 rad below the forearm axis, so the
        # wrist joint actually steers the head (a straight mallet would leave
        # the head on the wrist axis and waste the fifth degree of freedom).
        cant = 0.6
        head = (hand + mallet * math.cos(cant), 0.0, -mallet * math.sin(cant))
        joints = (
            JointSpec(axis=(0, 1, 0), offset_cm=(0, 0, 0), lo=-2.1, hi=2.1),   # shoulder pitch
            JointSpec(axis=(0, 0, 1), offset_cm=(0, 0, 0), lo=-1.8, hi=1.8),   # shoulder roll
            JointSpec(axis=(1, 0, 0), offset_cm=(upper, 0, 0), lo=-2.1, hi=2.1),  # elbow yaw
            JointSpec(axis=(0, 0, 1), offset_cm=(0, 0, 0), lo=-2.3, hi=2.3),   # elbow roll
            JointSpec(axis=(1, 0, 0), offset_cm=(fore, 0, 0), lo=-1.9, hi=1.9),  # wrist yaw
        )
        return cls(
            arm=arm,
            shoulder_cm=(0.0, 9.0 * side, 0.0),
            joints=joints,
            head_offset_cm=head,
            mallet_length_cm=mallet,
        )

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def reach_cm(self) -> float:
        reach = np.linalg.norm(self.head_offset_cm)
        for j in self.joints:
            reach += np.linalg.norm(j.offset_cm)
        return float(reach)

    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.lo for j in self.joints])
        hi = np.array([j.hi for j in self.joints])
        return lo, hi

    def clamp(self, angles: np.ndarray) -> np.ndarray:
        lo, hi = self.limits()
        return np.clip(angles, lo, hi)

    def check(self, angles) -> np.ndarray:
        q = np.asarray(angles, dtype=float)
        if q.shape != (self.n_joints,):
            raise ValueError(f"expected {self.n_joints} joint angles, got shape {q.shape}")
        for i, (joint, value) in enumerate(zip(self.joints, q)):
            if not joint.lo - 1e-12 <= value <= joint.hi + 1e-12:
                raise JointLimit(i, float(value))
        return q


def _fk_unchecked(chain: KinematicChain, q: np.ndarray):
    rot = np.eye(3)
    pos = np.array(chain.shoulder_cm, dtype=float)
    for joint, angle in zip(chain.joints, q):
        pos = pos + rot @ np.asarray(joint.offset_cm, dtype=float)
        rot = rot @ rotation_about_axis(joint.axis, angle)
    head = pos + rot @ np.asarray(chain.head_offset_cm, dtype=float)
    return head, rot


def forward_kinematics(chain: KinematicChain, angles) -> tuple[np.ndarray, np.ndarray]:
    """Mallet-head position (cm) and orientation matrix for joint angles."""
    q = chain.check(angles)
    return _fk_unchecked(chain, q)


def _jacobian(chain: KinematicChain, q: np.ndarray, h: float = 1e-4) -> np.ndarray:
    # central finite differences on the head position
    jac = np.zeros((3, chain.n_joints))
    for i in range(chain.n_joints):
        dq = np.zeros(chain.n_joints)
        dq[i] = h
        hi_pos, _ = _fk_unchecked(chain, q + dq)
        lo_pos, _ = _fk_unchecked(chain, q - dq)
        jac[:, i] = (hi_pos - lo_pos) / (2 * h)
    return jac


# Coarse joint-space posture atlas per chain, used to re-seed the solver when
# the caller's seed sits in the wrong basin of attraction.
_ATLAS_LEVELS = 6
_ATLAS_RESTARTS = 8
_atlas_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _posture_atlas(chain: KinematicChain) -> tuple[np.ndarray, np.ndarray]:
    key = (chain.arm, chain.shoulder_cm, chain.joints, chain.head_offset_cm)
    if key not in _atlas_cache:
        lo, hi = chain.limits()
        axes = [np.linspace(l + 0.05, h - 0.05, _ATLAS_LEVELS) for l, h in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, chain.n_joints)
        heads = np.array([_fk_unchecked(chain, q)[0] for q in grid])
        _atlas_cache[key] = (grid, heads)
    return _atlas_cache[key]


def inverse_kinematics(chain: KinematicChain, target, seed) -> np.ndarray:
    """Damped-least-squares IK for the mallet-head position.

    Runs DLS from the caller's seed (at most 200 iterations, clamped to the
    joint limits each step, Levenberg-style adaptive damping) until the
    residual drops to 1 mm.  If that descent stalls, it retries from the
    postures of a precomputed atlas nearest the target; the whole procedure
    is deterministic.  Raises Unreachable when no attempt closes the gap.
    """
    target = np.asarray(target, dtype=float)
    if np.linalg.norm(target - np.asarray(chain.shoulder_cm)) > chain.reach_cm:
        raise Unreachable(f"target {target} beyond reach {chain.reach_cm:.1f} cm")

    grid, heads = _posture_atlas(chain)
    order = np.argsort(np.linalg.norm(heads - target, axis=1), kind="stable")
    starts = [np.asarray(seed, dtype=float)] + [grid[i] for i in order[:_ATLAS_RESTARTS]]

    best_err = math.inf
    for start in starts:
        q = chain.clamp(start.copy())
        pos, _ = _fk_unchecked(chain, q)
        err = target - pos
        lam = 0.5
        stall = 0
        for _ in range(IK_MAX_ITERS):
            if np.linalg.norm(err) <= IK_TOL_CM:
                return q
            jac = _jacobian(chain, q)
            a = jac @ jac.T + (lam**2) * np.eye(3)
            dq = jac.T @ np.linalg.solve(a, err)
            step = np.linalg.norm(dq)
            if step > 0.5:
                dq *= 0.5 / step
            q_new = chain.clamp(q + dq)
            pos_new, _ = _fk_unchecked(chain, q_new)
            err_new = target - pos_new
            if np.linalg.norm(err_new) < np.linalg.norm(err) - 1e-12:
                q, err = q_new, err_new
                lam = max(lam * 0.5, 1e-3)
                stall = 0
            else:
                lam = min(lam * 4.0, 1e3)
                stall += 1
                if stall >= 12:
                    break
        if np.linalg.norm(err) <= IK_TOL_CM:
            return q
        best_err = min(best_err, float(np.linalg.norm(err)))
    raise Unreachable(f"residual {best_err:.3f} cm at iteration cap")


@dataclass(frozen=True)
class StrikeConfig:
    note: int
    arm: Arm
    ready: np.ndarray
    strike: np.ndarray
    carry: np.ndarray  # raised transfer pose well clear of the bars


@dataclass
class StrikeTable:
    """Solved ready/strike configurations per (note, arm)."""

    configs: dict[tuple[int, Arm], StrikeConfig] = field(default_factory=dict)

    def arms_for(self, note: int) -> list[Arm]:
        return [arm for (n, arm) in self.configs if n == note]

    def get(self, note: int, arm: Arm) -> StrikeConfig:
        try:
            return self.configs[(note, arm)]
        except KeyError:
            raise MissingConfig(f"no strike configuration for note {note} on {arm.value} arm")


def _assigned_arms(note: int) -> tuple[Arm, ...]:
    if note < 6:
        return (Arm.LEFT,)
    if note > 6:
        return (Arm.RIGHT,)
    return (Arm.LEFT, Arm.RIGHT)


CARRY_HEIGHT_CM = 7.0


def strike_configs(model: XylophoneModel, chains: dict[Arm, KinematicChain],
                   placement: InstrumentPlacement) -> StrikeTable:
    """Solve ready/strike/carry joint vectors for every bar.

    Bars 1..6 go to the left arm and 6..11 to the right; bar 6 is solved for
    both so the generator can pick the cheaper arm.  Bars are solved in
    spatial order, each seeded from its neighbor's solution, so adjacent
    bars land in the same arm posture and joint-space interpolation between
    them stays clear of the instrument.
    """
    table = StrikeTable()
    order = {
        Arm.LEFT: [n for n in (6, 5, 4, 3, 2, 1)],
        Arm.RIGHT: [n for n in (6, 7, 8, 9, 10, 11)],
    }
    for arm, notes in order.items():
        chain = chains[arm]
        seed = np.array([0.9, 0.0, 0.0, 0.0, 0.0])
        for note in notes:
            bar = model.bar(note)
            strike_pt = placement.instrument_to_robot(
                np.array([bar.center_cm[0], bar.center_cm[1], -STRIKE_PENETRATION_CM])
            )
            ready_pt = strike_pt + np.array([0.0, 0.0, READY_HEIGHT_CM + STRIKE_PENETRATION_CM])
            carry_pt = strike_pt + np.array([0.0, 0.0, CARRY_HEIGHT_CM + STRIKE_PENETRATION_CM])
            try:
                strike_q = inverse_kinematics(chain, strike_pt, seed)
                ready_q = inverse_kinematics(chain, ready_pt, strike_q)
                carry_q = inverse_kinematics(chain, carry_pt, ready_q)
            except Unreachable as exc:
                raise Unreachable(f"note {note} unreachable by {arm.value} arm: {exc}") from exc
            table.configs[(note, arm)] = StrikeConfig(
                note=note, arm=arm, ready=ready_q, strike=strike_q, carry=carry_q
            )
            seed = strike_q
    return table


@dataclass(frozen=True)
class JointTrajectory:
    arm: Arm
    points: tuple[tuple[float, np.ndarray], ...]

    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.points])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_s", "q1", "q2", "q3", "q4", "q5"])
            for t, q in self.points:
                writer.writerow([f"{t:.6f}"] + [f"{v:.8f}" for v in q])


def _choose_arm(note: int, last_bar_by_arm: dict[Arm, int | None],
                model: XylophoneModel) -> Arm:
    arms = _assigned_arms(note)
    if len(arms) == 1:
        return arms[0]
    # bar 6: prefer the arm whose last strike was nearest; untouched arms
    # measure from their side's home bar (3 for left, 9 for right)
    homes = {Arm.LEFT: 3, Arm.RIGHT: 9}

    def travel(arm: Arm) -> float:
        ref = last_bar_by_arm.get(arm) or homes[arm]
        a = np.array(model.bar(ref).center_cm)
        b = np.array(model.bar(note).center_cm)
        return float(np.linalg.norm(a - b))

    left, right = travel(Arm.LEFT), travel(Arm.RIGHT)
    return Arm.LEFT if left <= right else Arm.RIGHT


def _bezier(p0: np.ndarray, p3: np.ndarray, s: float) -> np.ndarray:
    # cubic with control points on the chord at 1/3 and 2/3
    p1 = p0 + (p3 - p0) / 3.0
    p2 = p0 + 2.0 * (p3 - p0) / 3.0
    u = 1.0 - s
    return u**3 * p0 + 3 * u**2 * s * p1 + 3 * u * s**2 * p2 + s**3 * p3


def generate_trajectory(melody: Melody, table: StrikeTable, model: XylophoneModel,
                        strike_dur_s: float = DEFAULT_STRIKE_DUR_S,
                        sample_hz: float = SAMPLE_HZ) -> dict[Arm, JointTrajectory]:
    """Timed joint trajectories realizing the melody, one per arm used.

    Every strike contributes ready/strike/ready control points centered on
    its onset, so the first point sits half a strike before the first onset
    (possibly at negative time).  Control-point instants are included in the
    50 Hz sampling, which keeps each strike vector exact in the output.
    """
    if not melody.notes:
        raise ValueError("melody must be nonempty")
    onsets = melody.onset_times()
    half = strike_dur_s / 2.0

    per_arm: dict[Arm, list[tuple[float, np.ndarray]]] = {}
    last_onset: dict[Arm, float] = {}
    last_bar: dict[Arm, int | None] = {}
    last_cfg: dict[Arm, StrikeConfig] = {}
    for note, onset in zip(melody.notes, onsets):
        arm = _choose_arm(note, last_bar, model)
        cfgs = table.get(note, arm)
        if arm in last_onset and onset - last_onset[arm] < strike_dur_s:
            raise OnsetCollision(
                f"strikes at {last_onset[arm]:.3f}s and {onset:.3f}s on {arm.value} "
                f"arm are closer than {strike_dur_s}s"
            )
        pts = per_arm.setdefault(arm, [])
        approach = (onset - half, cfgs.ready)
        if pts and math.isclose(pts[-1][0], approach[0], abs_tol=1e-9):
            if not np.allclose(pts[-1][1], approach[1]):
                raise OnsetCollision(f"conflicting control points at t={approach[0]:.3f}s")
        else:
            if pts and last_bar[arm] != note:
                # transfer to a different bar goes through raised carry poses
                # so the head clears the intervening bars
                t_prev, gap = pts[-1][0], approach[0] - pts[-1][0]
                if gap > 1e-9:
                    pts.append((t_prev + gap / 3.0, last_cfg[arm].carry))
                    pts.append((t_prev + 2.0 * gap / 3.0, cfgs.carry))
            pts.append(approach)
        pts.append((onset, cfgs.strike))
        pts.append((onset + half, cfgs.ready))
        last_onset[arm] = onset
        last_bar[arm] = note
        last_cfg[arm] = cfgs

    out: dict[Arm, JointTrajectory] = {}
    for arm, pts in per_arm.items():
        out[arm] = JointTrajectory(arm=arm, points=tuple(_sample(pts, sample_hz)))
    return out


def _sample(control: list[tuple[float, np.ndarray]], sample_hz: float):
    t0, t1 = control[0][0], control[-1][0]
    grid = np.arange(t0, t1, 1.0 / sample_hz)
    times = np.union1d(grid, [t for t, _ in control])
    times = times[(times >= t0 - 1e-12) & (times <= t1 + 1e-12)]
    # drop float-noise duplicates so control instants appear exactly once,
    # keeping the later time of a cluster (the exact control instant)
    keep = np.concatenate([np.diff(times) > 1e-9, [True]])
    times = times[keep]
    samples = []
    seg = 0
    for t in times:
        while seg < len(control) - 2 and t > control[seg + 1][0]:
            seg += 1
        ta, qa = control[seg]
        tb, qb = control[seg + 1]
        s = 0.0 if tb == ta else min(1.0, max(0.0, (t - ta) / (tb - ta)))
        samples.append((float(t), _bezier(qa, qb, s)))
    return samples


def execute_sim(trajectories: dict[Arm, JointTrajectory],
                chains: dict[Arm, KinematicChain],
                model: XylophoneModel,
                placement: InstrumentPlacement) -> list[tuple[int, float]]:
    """Strike events from walking the trajectories through FK.

    An event fires when the mallet head crosses the bar-top plane downward
    inside some bar's playable area; the event time interpolates the crossing
    between samples.
    """
    events: list[tuple[int, float]] = []
    for arm, traj in trajectories.items():
        chain = chains[arm]
        heads = np.array([_fk_unchecked(chain, q)[0] for _, q in traj.points])
        times = traj.times()
        local = placement.robot_to_instrument(heads)
        w = local[:, 2]
        for i in range(1, len(times)):
            if not (w[i - 1] > 0.0 >= w[i]):
                continue
            frac = w[i - 1] / (w[i - 1] - w[i])
            t_cross = times[i - 1] + frac * (times[i] - times[i - 1])
            uv = local[i - 1, :2] + frac * (local[i, :2] - local[i - 1, :2])
            note = _bar_at(model, uv)
            if note is not None:
                events.append((note, float(t_cross)))
    events.sort(key=lambda e: e[1])
    return events


def _bar_at(model: XylophoneModel, uv: np.ndarray) -> int | None:
    for bar in model.bars:
        du = abs(uv[0] - bar.center_cm[0])
        dv = abs(uv[1] - bar.center_cm[1])
        if du <= bar.playable_area_cm[1] / 2 and dv <= bar.playable_area_cm[0] / 2:
            return bar.note
    return None


def make_kinematic_imitator(model: XylophoneModel, chains: dict[Arm, KinematicChain],
                            table: StrikeTable, placement: InstrumentPlacement,
                            tempo_bpm: float = 110.0):
    """Note-sequence imitator that actually swings the simulated arms.

    Returns a callable mapping detected notes to the notes the simulated
    execution strikes (game mode 3's copy-me loop).
    """

    def imitate(notes: tuple[int, ...]) -> tuple[int, ...]:
        if not notes:
            return ()
        melody = Melody(notes=tuple(notes), tempo_bpm=tempo_bpm)
        trajs = generate_trajectory(melody, table, model)
        events = execute_sim(trajs, chains, model, placement)
        return tuple(n for n, _ in events)

    return imitate
