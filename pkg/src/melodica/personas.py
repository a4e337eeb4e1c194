"""Scripted participants that drive a session engine to completion.

The driver owns a virtual clock, reacts to engine actions the way the
transport layer would (acknowledging demonstrations, issuing cues, elapsing
windows), and lets a persona decide what to strike.  Everything is seeded,
so a (plan, seed, persona) triple always produces the same event/action log.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from .instrument import parse_hex_melody
from .session import (
    Begin,
    CueIssued,
    DemonstrationDone,
    EmotionAnswer,
    Event,
    FeedbackDone,
    GameplayDone,
    ModeSelected,
    Rating,
    SessionEngine,
    SessionPlan,
    StrikeEvent,
    WindowElapsed,
)

SPEECH_S = 1.0
FLASH_S = 0.2
FEEDBACK_READ_S = 1.0
ANSWER_DELAY_S = 0.6
STRIKE_SPACING_S = 0.45
FIRST_STRIKE_DELAY_S = 0.5
FREE_PLAY_DITTY = "151"


@dataclass
class LogRecord:
    seq: int
    t_s: float
    direction: str  # "in" for events, "out" for actions
    type: str
    body: dict

    def to_json_dict(self) -> dict:
        return {
            "seq": self.seq,
            "t_s": round(self.t_s, 6),
            "dir": self.direction,
            "type": self.type,
            "body": self.body,
        }


class Persona:
    """Base scripted participant: answers prompts, never strikes."""

    name = "silent"

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def playback_strikes(self, target: list[int], window_open_s: float,
                         window_s: float) -> list[tuple[int, float]]:
        return []

    def early_strike(self, target: list[int]) -> int | None:
        """Note struck before the cue, or None to wait properly."""
        return None

    def free_play(self, window_open_s: float) -> list[tuple[int, float]]:
        return []

    def emotion_answer(self) -> str:
        return "(no answer)"

    def rating(self) -> int:
        return 3


class PerfectPersona(Persona):
    name = "perfect"

    def playback_strikes(self, target, window_open_s, window_s):
        t = window_open_s + FIRST_STRIKE_DELAY_S
        strikes = []
        for note in target:
            strikes.append((note, t))
            t += STRIKE_SPACING_S
        return [(n, t) for n, t in strikes if t <= window_open_s + window_s]

    def free_play(self, window_open_s):
        notes = [int(ch, 16) for ch in FREE_PLAY_DITTY]
        return [(n, window_open_s + 0.5 + i * 0.5) for i, n in enumerate(notes)]

    def emotion_answer(self):
        return "happy"

    def rating(self):
        return 5


class NoisyPersona(PerfectPersona):
    """Mostly follows along, with seeded wrong notes and early strikes."""

    name = "noisy"

    def playback_strikes(self, target, window_open_s, window_s):
        strikes = super().playback_strikes(target, window_open_s, window_s)
        out = []
        for note, t in strikes:
            if self.rng.random() < 0.2:
                note = note % 11 + 1
            out.append((note, t))
        return out

    def early_strike(self, target):
        if target and self.rng.random() < 0.25:
            return target[0]
        return None

    def emotion_answer(self):
        return self.rng.choice(["happy", "calm", "excited", "not sure"])

    def rating(self):
        return self.rng.randint(2, 5)


class SilentPersona(Persona):
    name = "silent"


PERSONAS: dict[str, Callable[[int], Persona]] = {
    "perfect": PerfectPersona,
    "noisy": NoisyPersona,
    "silent": SilentPersona,
}


@dataclass
class ScriptedRun:
    log: list[LogRecord] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _melody_duration_s(melody_hex: str, tempo_bpm: float) -> float:
    if not melody_hex:
        return 0.5
    beat = 60.0 / tempo_bpm
    return len(melody_hex) * beat + 0.5  # ring-out allowance


class _Driver:
    """Transport simulation: reacts to actions, advancing a virtual clock.

    The clock is quantized to microseconds so the JSONL log carries event
    times exactly and a replayed engine sees byte-identical inputs.
    """

    def __init__(self, engine: SessionEngine, persona: Persona):
        self.engine = engine
        self.persona = persona
        self.clock = 0.0
        self.target: list[int] = []
        self.last_cue_t = 0.0

    def _advance_clock(self, dt: float) -> float:
        self.clock = round(self.clock + dt, 6)
        return self.clock

    def react(self, action) -> list[Event]:
        body = action.body
        if action.type == "demonstrate":
            self.target = [int(ch, 16) for ch in body["melody"]]
            dur = _melody_duration_s(body["melody"], body.get("tempo_bpm", 100.0))
            return [DemonstrationDone(t_s=self._advance_clock(dur))]
        if action.type == "verbal_cue":
            self._advance_clock(SPEECH_S)
            return []
        if action.type == "eye_flash":
            self.last_cue_t = self._advance_clock(FLASH_S)
            events: list[Event] = []
            early = self.persona.early_strike(self.target)
            if early is not None:
                events.append(StrikeEvent(t_s=round(self.clock - 0.05, 6), note=early))
            events.append(CueIssued(t_s=self.clock))
            return events
        if action.type == "open_response_window":
            window_s = float(body["seconds"])
            open_t = self.last_cue_t
            if self.engine.state.game_context.get("mode") == 3:
                strikes = self.persona.free_play(open_t)
            else:
                strikes = self.persona.playback_strikes(self.target, open_t, window_s)
            events = [StrikeEvent(t_s=round(ts, 6), note=note) for note, ts in strikes]
            self.clock = round(open_t + window_s, 6)
            events.append(WindowElapsed(t_s=self.clock))
            return events
        if action.type == "feedback":
            return [FeedbackDone(t_s=self._advance_clock(FEEDBACK_READ_S))]
        if action.type == "ask_emotion":
            return [EmotionAnswer(t_s=self._advance_clock(ANSWER_DELAY_S),
                                  text=self.persona.emotion_answer())]
        if action.type == "ask_rating":
            return [Rating(t_s=self._advance_clock(ANSWER_DELAY_S),
                           stars=self.persona.rating())]
        if action.type == "robot_imitation":
            self._advance_clock(_melody_duration_s(body.get("played", ""), 110.0))
            return []
        if action.type == "game_prompt":
            t = self._advance_clock(0.5)
            remaining = body.get("remaining", [])
            if remaining:
                return [ModeSelected(t_s=t, mode=remaining[0])]
            return [GameplayDone(t_s=t)]
        return []


def run_scripted_session(plan: SessionPlan, seed: int, persona: Persona,
                         imitator=None, max_steps: int = 10000) -> ScriptedRun:
    """Drive the engine to Done with a virtual clock; returns the full log."""
    engine = SessionEngine(plan, seed, imitator=imitator)
    driver = _Driver(engine, persona)
    run = ScriptedRun()
    seq = 0
    pending: list[Event] = [Begin(t_s=0.0)]

    def log(direction: str, type_: str, body: dict, t_s: float):
        nonlocal seq
        run.log.append(LogRecord(seq=seq, t_s=t_s, direction=direction, type=type_, body=body))
        seq += 1

    steps = 0
    while pending:
        steps += 1
        if steps > max_steps:
            raise RuntimeError("scripted session did not terminate")
        event = pending.pop(0)
        driver.clock = max(driver.clock, event.t_s)
        log("in", event.type, event.payload(), event.t_s)
        actions = engine.advance(event)
        for action in actions:
            log("out", action.type, action.body, driver.clock)
            if action.type == "session_done":
                run.summary = action.body["summary"]
                pending.clear()
                break
            pending.extend(driver.react(action))
        if not pending and not engine.state.done:
            raise RuntimeError(f"stalled in stage {engine.state.stage}")
    return run
