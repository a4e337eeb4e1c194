"""The therapy-session automaton.

One session runs a fixed phase list (warm-up, practice, gameplay variants)
driven entirely by external events carrying timestamps; the engine is a
deterministic single-writer state machine, so identical (plan, seed, event
trace) produce identical action streams.  The atomic exchange is the
conversation: the robot demonstrates, the participant repeats inside a
response window, the robot presents the result.  Each closed conversation
receives a turn-taking grade from its strike timing.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable

from .instrument import Melody, render_hex_melody
from .scoring import AccuracyTracker, TrialRecord, Verdict, practice_policy
from .song_bank import TWINKLE, Song, default_song_bank

CUE_TEXT = "Now, you shall play right after my eye flashes."
DEFAULT_RESPONSE_WINDOW_S = 7.0
FREE_PLAY_WINDOW_S = 5.0
WARM_UP_TRIALS = 3
MAX_PRACTICE_TRIALS = 10

CONSONANT_SEMITONES = {3, 4, 5, 7, 8, 9, 12}
DISSONANT_SEMITONES = {1, 2, 6, 11}


class IllegalEvent(RuntimeError):
    def __init__(self, state: str, event):
        super().__init__(f"event {event!r} is illegal in state {state}")


class OpenConversation(RuntimeError):
    pass


class NoGrades(ValueError):
    pass


class UnknownSong(KeyError):
    pass


class Phase(str, Enum):
    WARM_UP = "warm_up"
    SINGLE_PRACTICE = "single_practice"
    MUSIC_PRACTICE = "music_practice"
    GAMEPLAY = "gameplay"


class TurnTakingGrade(IntEnum):
    INDIFFERENT = 0
    HEAVY_INTERRUPT = 1
    LIGHT_INTERRUPT = 2
    WELL_DONE = 3


# ---------------------------------------------------------------------------
# events (inputs) and actions (outputs)


@dataclass(frozen=True)
class Event:
    t_s: float

    @property
    def type(self) -> str:
        return _SNAKE_NAMES[type(self).__name__]

    def payload(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "t_s"}
        return d


@dataclass(frozen=True)
class Begin(Event):
    pass


@dataclass(frozen=True)
class DemonstrationDone(Event):
    pass


@dataclass(frozen=True)
class CueIssued(Event):
    pass


@dataclass(frozen=True)
class StrikeEvent(Event):
    note: int


@dataclass(frozen=True)
class WindowElapsed(Event):
    pass


@dataclass(frozen=True)
class FeedbackDone(Event):
    pass


@dataclass(frozen=True)
class ModeSelected(Event):
    mode: int


@dataclass(frozen=True)
class EmotionAnswer(Event):
    text: str


@dataclass(frozen=True)
class Rating(Event):
    stars: int


@dataclass(frozen=True)
class GameplayDone(Event):
    pass


_SNAKE_NAMES = {
    "Begin": "begin",
    "DemonstrationDone": "demonstration_done",
    "CueIssued": "cue_issued",
    "StrikeEvent": "strike",
    "WindowElapsed": "window_elapsed",
    "FeedbackDone": "feedback_done",
    "ModeSelected": "mode_selected",
    "EmotionAnswer": "emotion_answer",
    "Rating": "rating",
    "GameplayDone": "gameplay_done",
}

EVENT_TYPES = {name: cls for cls, name in (
    (Begin, "begin"), (DemonstrationDone, "demonstration_done"), (CueIssued, "cue_issued"),
    (StrikeEvent, "strike"), (WindowElapsed, "window_elapsed"), (FeedbackDone, "feedback_done"),
    (ModeSelected, "mode_selected"), (EmotionAnswer, "emotion_answer"), (Rating, "rating"),
    (GameplayDone, "gameplay_done"),
)}


@dataclass(frozen=True)
class Action:
    type: str
    body: dict = field(default_factory=dict)


def _act(type_: str, **body) -> Action:
    return Action(type=type_, body=body)


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class SessionPlan:
    kind: str  # "baseline" | "intervention" | "exit"
    intervention_index: int  # 1..4, 0 otherwise
    song: Song
    phases: tuple[Phase, ...]
    practice_unit_len: int
    response_window_s: float = DEFAULT_RESPONSE_WINDOW_S

    def describe(self) -> str:
        if self.kind == "intervention":
            return f"intervention:{self.intervention_index}"
        return self.kind


def practice_unit_length(intervention_index: int, song_len: int) -> int:
    """Difficulty ladder: single note, short groups, half song, full song."""
    half = -(-song_len // 2)
    ladder = {1: 1, 2: min(3, half), 3: half, 4: song_len}
    return ladder[intervention_index]


def plan_session(kind: str, participant_song: str | None = None,
                 song_bank: dict[str, Song] | None = None,
                 response_window_s: float = DEFAULT_RESPONSE_WINDOW_S) -> SessionPlan:
    """Build the phase plan: baseline pins Twinkle, exit takes the choice."""
    bank = song_bank if song_bank is not None else default_song_bank()
    if not bank:
        raise UnknownSong("song bank is empty")
    index = 0
    if kind.startswith("intervention"):
        index = int(kind.split(":", 1)[1]) if ":" in kind else 1
        if not 1 <= index <= 4:
            raise ValueError(f"intervention index must be 1..4, got {index}")
        kind = "intervention"
    if kind == "baseline":
        song = bank.get(TWINKLE)
        if song is None:
            raise UnknownSong(TWINKLE)
        phases = (Phase.MUSIC_PRACTICE, Phase.GAMEPLAY)
        unit = len(song.melody.notes)
    elif kind == "exit":
        name = participant_song if participant_song else TWINKLE
        if name not in bank:
            raise UnknownSong(name)
        song = bank[name]
        phases = (Phase.MUSIC_PRACTICE, Phase.GAMEPLAY)
        unit = len(song.melody.notes)
    elif kind == "intervention":
        name = participant_song if participant_song else TWINKLE
        if name not in bank:
            raise UnknownSong(name)
        song = bank[name]
        phases = (Phase.WARM_UP, Phase.SINGLE_PRACTICE, Phase.GAMEPLAY)
        unit = practice_unit_length(index, len(song.melody.notes))
    else:
        raise ValueError(f"unknown session kind {kind!r}")
    return SessionPlan(
        kind=kind,
        intervention_index=index,
        song=song,
        phases=phases,
        practice_unit_len=unit,
        response_window_s=response_window_s,
    )


def split_units(notes: tuple[int, ...], unit_len: int) -> list[tuple[int, ...]]:
    return [notes[i : i + unit_len] for i in range(0, len(notes), unit_len)]


# ---------------------------------------------------------------------------
# conversations and grading


@dataclass
class Conversation:
    target: tuple[int, ...]
    graded: bool = True  # warm-up conversations never gate progression
    demo_start_s: float = 0.0
    demo_end_s: float | None = None
    window_open_s: float | None = None
    window_close_s: float | None = None
    result_end_s: float | None = None
    strikes: list[tuple[int, float]] = field(default_factory=list)
    trial: TrialRecord | None = None
    grade: TurnTakingGrade | None = None

    @property
    def closed(self) -> bool:
        return self.result_end_s is not None

    def strikes_in_window(self) -> list[int]:
        if self.window_open_s is None or self.window_close_s is None:
            return []
        return [n for n, t in self.strikes if self.window_open_s <= t <= self.window_close_s]


def grade_turn_taking(conv: Conversation) -> TurnTakingGrade:
    """Behavioral grade from strike timing relative to the three movements.

    This automates what human annotators scored by watching the videos; the
    timing rules stand in for their judgment.
    """
    if not conv.closed:
        raise OpenConversation("conversation still open")
    if not conv.strikes:
        return TurnTakingGrade.INDIFFERENT
    demo_end = conv.demo_end_s if conv.demo_end_s is not None else conv.demo_start_s
    during_demo = [t for _, t in conv.strikes if conv.demo_start_s <= t < demo_end]
    if during_demo:
        return TurnTakingGrade.HEAVY_INTERRUPT
    first = min(t for _, t in conv.strikes)
    early = conv.window_open_s is not None and first < conv.window_open_s
    during_result = (
        conv.window_close_s is not None
        and any(t > conv.window_close_s for _, t in conv.strikes)
    )
    if early or during_result:
        return TurnTakingGrade.LIGHT_INTERRUPT
    return TurnTakingGrade.WELL_DONE


def normalize_scores(grades) -> float:
    grades = list(grades)
    if not grades:
        raise NoGrades("no turn-taking grades recorded")
    return 100.0 * sum(int(g) for g in grades) / (3.0 * len(grades))


# ---------------------------------------------------------------------------
# game-mode melody generation


def generate_styled_melody(rng: random.Random, consonant: bool, length: int = 5) -> Melody:
    """Random diatonic melody whose adjacent intervals stay in one style set."""
    from .instrument import midi_for_note

    allowed = CONSONANT_SEMITONES if consonant else DISSONANT_SEMITONES
    notes = [rng.randint(1, 11)]
    for _ in range(length - 1):
        options = [
            n for n in range(1, 12)
            if abs(midi_for_note(n) - midi_for_note(notes[-1])) in allowed
        ]
        if not options:  # dead end: restart from any bar
            options = list(range(1, 12))
        notes.append(rng.choice(options))
    return Melody(notes=tuple(notes), tempo_bpm=110.0)


# ---------------------------------------------------------------------------
# the engine


@dataclass
class SessionState:
    plan: SessionPlan
    seed: int
    phase_index: int = -1
    stage: str = "idle"  # idle|demonstrating|cueing|window|feedback|game_menu|
    #                      game_emotion|game_rating|done
    conversation: Conversation | None = None
    trial_queue: list[tuple[int, ...]] = field(default_factory=list)
    extra_round_used: bool = False
    trackers: dict[str, AccuracyTracker] = field(default_factory=dict)
    grades: list[TurnTakingGrade] = field(default_factory=list)
    modes_played: set[int] = field(default_factory=set)
    game_context: dict = field(default_factory=dict)
    emotion_answers: list[dict] = field(default_factory=list)
    ratings: list[dict] = field(default_factory=list)

    @property
    def phase(self) -> Phase | None:
        if 0 <= self.phase_index < len(self.plan.phases):
            return self.plan.phases[self.phase_index]
        return None

    @property
    def done(self) -> bool:
        return self.stage == "done"


class SessionEngine:
    """Single-writer automaton: feed events via advance(), collect actions.

    An optional imitator callback turns detected notes into the robot's
    playback for game mode 3 (the service wires the full arm-simulation loop
    through here).
    """

    def __init__(self, plan: SessionPlan, seed: int,
                 imitator: Callable[[tuple[int, ...]], tuple[int, ...]] | None = None):
        self.state = SessionState(plan=plan, seed=seed)
        self.rng = random.Random(seed)
        self.imitator = imitator if imitator is not None else lambda notes: notes
        self.song_bank = default_song_bank()

    # -- public ---------------------------------------------------------

    def advance(self, event: Event) -> list[Action]:
        st = self.state
        if st.done:
            raise IllegalEvent("done", event)
        if isinstance(event, Begin):
            if st.stage != "idle":
                raise IllegalEvent(st.stage, event)
            return self._next_phase(event.t_s)
        if isinstance(event, StrikeEvent):
            return self._on_strike(event)
        if isinstance(event, DemonstrationDone):
            return self._on_demo_done(event)
        if isinstance(event, CueIssued):
            return self._on_cue_issued(event)
        if isinstance(event, WindowElapsed):
            return self._on_window_elapsed(event)
        if isinstance(event, FeedbackDone):
            return self._on_feedback_done(event)
        if isinstance(event, ModeSelected):
            return self._on_mode_selected(event)
        if isinstance(event, EmotionAnswer):
            return self._on_emotion(event)
        if isinstance(event, Rating):
            return self._on_rating(event)
        if isinstance(event, GameplayDone):
            return self._on_gameplay_done(event)
        raise IllegalEvent(st.stage, event)

    def summary(self) -> dict:
        st = self.state
        return {
            "session": st.plan.describe(),
            "song": st.plan.song.name,
            "accuracy": {
                name: {"correct": t.correct, "total": t.total,
                       "pct": round(100.0 * t.accuracy, 2)}
                for name, t in st.trackers.items()
            },
            "turn_taking_pct": round(normalize_scores(st.grades), 2) if st.grades else None,
            "modes_played": sorted(st.modes_played),
            "ratings": st.ratings,
            "emotion_answers": st.emotion_answers,
        }

    # -- phase sequencing -------------------------------------------------

    def _next_phase(self, t_s: float) -> list[Action]:
        st = self.state
        st.phase_index += 1
        if st.phase_index >= len(st.plan.phases):
            st.stage = "done"
            return [_act("session_done", summary=self.summary())]
        phase = st.plan.phases[st.phase_index]
        actions = [_act("phase_started", phase=phase.value)]
        song_notes = st.plan.song.melody.notes
        if phase is Phase.WARM_UP:
            units = split_units(song_notes, st.plan.practice_unit_len)
            st.trial_queue = [units[i % len(units)] for i in range(WARM_UP_TRIALS)]
            st.extra_round_used = False
            actions += self._start_trial(t_s, graded=False)
        elif phase in (Phase.SINGLE_PRACTICE, Phase.MUSIC_PRACTICE):
            if phase is Phase.MUSIC_PRACTICE:
                half = -(-len(song_notes) // 2)
                st.trial_queue = [song_notes[:half], song_notes[half:], song_notes]
            else:
                st.trial_queue = split_units(song_notes, st.plan.practice_unit_len)
                st.trial_queue = st.trial_queue[:MAX_PRACTICE_TRIALS]
            st.extra_round_used = False
            actions += self._start_trial(t_s, graded=True)
        elif phase is Phase.GAMEPLAY:
            st.stage = "game_menu"
            actions.append(self._game_prompt())
        return actions

    def _game_prompt(self) -> Action:
        remaining = sorted({1, 2, 3} - self.state.modes_played)
        return _act("game_prompt", modes=[1, 2, 3], remaining=remaining,
                    can_finish=not remaining)

    # -- practice conversations -------------------------------------------

    def _tracker(self) -> AccuracyTracker:
        name = self.state.phase.value
        return self.state.trackers.setdefault(name, AccuracyTracker())

    def _start_trial(self, t_s: float, graded: bool) -> list[Action]:
        st = self.state
        target = st.trial_queue.pop(0)
        st.conversation = Conversation(target=target, graded=graded, demo_start_s=t_s)
        st.stage = "demonstrating"
        return [_act("demonstrate", melody=render_hex_melody(list(target)),
                     tempo_bpm=st.plan.song.melody.tempo_bpm,
                     color_hint=[int(n) for n in target])]

    def _on_demo_done(self, event: DemonstrationDone) -> list[Action]:
        st = self.state
        if st.stage != "demonstrating" or st.conversation is None:
            raise IllegalEvent(st.stage, event)
        st.conversation.demo_end_s = event.t_s
        st.stage = "cueing"
        if st.game_context.get("mode") == 1:
            # mode 1 has no playback: ask about the feeling instead
            st.stage = "game_emotion"
            return [_act("ask_emotion", prompt="How did that song make you feel?")]
        if st.game_context.get("mode") == 2:
            st.stage = "game_emotion"
            return [_act("ask_emotion",
                         prompt="How does that melody feel? Tell me, then play it back.")]
        return [_act("verbal_cue", text=CUE_TEXT), _act("eye_flash")]

    def _on_cue_issued(self, event: CueIssued) -> list[Action]:
        st = self.state
        if st.stage != "cueing" or st.conversation is None:
            raise IllegalEvent(st.stage, event)
        if st.game_context.get("mode") == 3:
            window = FREE_PLAY_WINDOW_S
        else:
            # half/full-song trials cannot fit the short nominal window, so
            # it stretches with the target length
            window = max(st.plan.response_window_s,
                         1.5 + 0.5 * len(st.conversation.target))
        st.conversation.window_open_s = event.t_s
        st.stage = "window"
        return [_act("open_response_window", seconds=window)]

    def _on_strike(self, event: StrikeEvent) -> list[Action]:
        st = self.state
        conv = st.conversation
        if conv is None or conv.closed:
            # strikes outside any conversation are logged by the caller only
            return []
        conv.strikes.append((event.note, event.t_s))
        return []

    def _on_window_elapsed(self, event: WindowElapsed) -> list[Action]:
        st = self.state
        conv = st.conversation
        if st.stage != "window" or conv is None:
            raise IllegalEvent(st.stage, event)
        conv.window_close_s = event.t_s
        detected = conv.strikes_in_window()
        if st.game_context.get("mode") == 3:
            return self._mode3_imitation(detected)
        conv.trial = TrialRecord.evaluate(conv.target, detected, event.t_s)
        if conv.graded:
            self._tracker().record(conv.trial.verdict)
        st.stage = "feedback"
        text = _feedback_text(conv.trial)
        return [_act("feedback", verdict=conv.trial.verdict.value, text=text,
                     likelihood=round(conv.trial.likelihood, 4),
                     detected=render_hex_melody(list(conv.trial.detected)),
                     accuracy_pct=round(100.0 * self._tracker().accuracy, 2)
                     if conv.graded else None)]

    def _on_feedback_done(self, event: FeedbackDone) -> list[Action]:
        st = self.state
        conv = st.conversation
        if st.stage != "feedback" or conv is None:
            raise IllegalEvent(st.stage, event)
        conv.result_end_s = event.t_s
        conv.grade = grade_turn_taking(conv)
        st.grades.append(conv.grade)
        actions = [_act("turn_graded", grade=int(conv.grade), label=conv.grade.name.lower())]
        st.conversation = None
        if st.game_context:
            st.game_context = {}
            st.stage = "game_menu"
            return actions + [self._game_prompt()]
        if st.trial_queue:
            return actions + self._start_trial(event.t_s, graded=conv.graded)
        if st.phase in (Phase.SINGLE_PRACTICE, Phase.MUSIC_PRACTICE) and not st.extra_round_used:
            tracker = self._tracker()
            decision = practice_policy(tracker)
            if decision.extra_trials > 0:
                st.extra_round_used = True
                failed = self._failed_units()
                st.trial_queue = [failed[i % len(failed)] for i in range(decision.extra_trials)]
                actions.append(_act("extra_practice", count=decision.extra_trials))
                return actions + self._start_trial(event.t_s, graded=True)
        return actions + self._next_phase(event.t_s)

    def _failed_units(self) -> list[tuple[int, ...]]:
        st = self.state
        units = split_units(st.plan.song.melody.notes, st.plan.practice_unit_len)
        tracker = self._tracker()
        failed = [
            units[i % len(units)]
            for i, verdict in enumerate(tracker.history)
            if verdict is Verdict.FAIL
        ]
        return failed if failed else units

    # -- gameplay -----------------------------------------------------------

    def _on_mode_selected(self, event: ModeSelected) -> list[Action]:
        st = self.state
        if st.stage != "game_menu":
            raise IllegalEvent(st.stage, event)
        if event.mode not in (1, 2, 3):
            return [_act("error", message=f"unknown game mode {event.mode}")]
        st.modes_played.add(event.mode)
        st.game_context = {"mode": event.mode}
        if event.mode == 1:
            name = self.rng.choice(sorted(self.song_bank))
            song = self.song_bank[name]
            st.game_context["song"] = name
            st.conversation = Conversation(target=song.melody.notes, graded=False,
                                           demo_start_s=event.t_s)
            st.stage = "demonstrating"
            return [_act("demonstrate", melody=song.melody.to_hex(),
                         tempo_bpm=song.melody.tempo_bpm, song=name)]
        if event.mode == 2:
            consonant = self.rng.random() < 0.5
            melody = generate_styled_melody(self.rng, consonant)
            st.game_context["consonant"] = consonant
            st.conversation = Conversation(target=melody.notes, graded=False,
                                           demo_start_s=event.t_s)
            st.stage = "demonstrating"
            return [_act("demonstrate", melody=melody.to_hex(),
                         tempo_bpm=melody.tempo_bpm,
                         style="consonant" if consonant else "dissonant")]
        # mode 3: the participant leads with five seconds of free play
        st.conversation = Conversation(target=(), graded=False, demo_start_s=event.t_s,
                                       demo_end_s=event.t_s)
        st.stage = "cueing"
        return [
            _act("verbal_cue", text="Your turn: five seconds of free play, then I copy you."),
            _act("eye_flash"),
        ]

    def _on_emotion(self, event: EmotionAnswer) -> list[Action]:
        st = self.state
        if st.stage != "game_emotion":
            raise IllegalEvent(st.stage, event)
        st.emotion_answers.append({
            "mode": st.game_context.get("mode"),
            "song": st.game_context.get("song"),
            "style": ("consonant" if st.game_context.get("consonant") else "dissonant")
            if "consonant" in st.game_context else None,
            "answer": event.text,
            "t_s": event.t_s,
        })
        if st.game_context.get("mode") == 2:
            st.stage = "cueing"
            return [_act("verbal_cue", text=CUE_TEXT), _act("eye_flash")]
        # mode 1 closes without a playback movement, so it earns no
        # turn-taking grade (there is no repeat to wait for)
        conv = st.conversation
        conv.window_open_s = conv.window_close_s = event.t_s
        conv.result_end_s = event.t_s
        st.conversation = None
        st.game_context = {}
        st.stage = "game_menu"
        return [self._game_prompt()]

    def _mode3_imitation(self, detected: list[int]) -> list[Action]:
        st = self.state
        conv = st.conversation
        played = self.imitator(tuple(detected))
        conv.trial = TrialRecord.evaluate(tuple(detected) or (1,), tuple(played), conv.window_close_s) \
            if detected else None
        st.stage = "game_rating"
        return [
            _act("robot_imitation", heard=render_hex_melody(detected),
                 played=render_hex_melody(list(played))),
            _act("ask_rating", prompt="Rate my copy from 1 to 5!"),
        ]

    def _on_rating(self, event: Rating) -> list[Action]:
        st = self.state
        if st.stage != "game_rating":
            raise IllegalEvent(st.stage, event)
        if not 1 <= event.stars <= 5:
            return [_act("error", message="rating must be 1..5")]
        st.ratings.append({"stars": event.stars, "t_s": event.t_s})
        conv = st.conversation
        conv.result_end_s = event.t_s
        conv.grade = grade_turn_taking(conv)
        st.grades.append(conv.grade)
        st.conversation = None
        st.game_context = {}
        st.stage = "game_menu"
        return [self._game_prompt()]

    def _on_gameplay_done(self, event: GameplayDone) -> list[Action]:
        st = self.state
        if st.stage != "game_menu":
            raise IllegalEvent(st.stage, event)
        remaining = sorted({1, 2, 3} - st.modes_played)
        if remaining:
            return [
                _act("verbal_cue", text="Let's try every game mode at least once!"),
                self._game_prompt(),
            ]
        return self._next_phase(event.t_s)


def _feedback_text(trial: TrialRecord) -> str:
    if trial.verdict is Verdict.PASS:
        return "Well done! That sounded great."
    if trial.likelihood > 0.3:
        return "Close! Let's try that part once more."
    return "Good try! Listen again and copy me."
