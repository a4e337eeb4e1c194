import json
import random

import pytest

from melodica.instrument import midi_for_note
from melodica.personas import PERSONAS, PerfectPersona, run_scripted_session
from melodica.scoring import Verdict
from melodica.session import (
    CONSONANT_SEMITONES,
    Begin,
    Conversation,
    CueIssued,
    DemonstrationDone,
    FeedbackDone,
    IllegalEvent,
    NoGrades,
    OpenConversation,
    Phase,
    SessionEngine,
    StrikeEvent,
    TurnTakingGrade,
    UnknownSong,
    WindowElapsed,
    generate_styled_melody,
    grade_turn_taking,
    normalize_scores,
    plan_session,
    practice_unit_length,
)
from melodica.song_bank import TWINKLE, default_song_bank, load_song_bank, save_song_bank


# ---------------------------------------------------------------------------
# planning


def test_baseline_pins_twinkle():
    plan = plan_session("baseline")
    assert plan.song.name == TWINKLE
    assert plan.phases == (Phase.MUSIC_PRACTICE, Phase.GAMEPLAY)


def test_intervention_one_single_note():
    plan = plan_session("intervention:1")
    assert plan.practice_unit_len == 1
    assert plan.phases == (Phase.WARM_UP, Phase.SINGLE_PRACTICE, Phase.GAMEPLAY)


def test_exit_uses_participant_song():
    plan = plan_session("exit", participant_song="Can Can")
    assert plan.song.name == "Can Can"


def test_unknown_song_rejected():
    with pytest.raises(UnknownSong):
        plan_session("exit", participant_song="Free Bird")


def test_difficulty_nondecreasing():
    for length in (6, 11, 17, 42):
        units = [practice_unit_length(n, length) for n in (1, 2, 3, 4)]
        assert units[0] == 1
        assert units[-1] == length
        assert all(b >= a for a, b in zip(units, units[1:]))


def test_song_bank_roundtrip(tmp_path):
    bank = default_song_bank()
    assert TWINKLE in bank
    assert len(bank[TWINKLE].melody.notes) == 42
    path = tmp_path / "songs.json"
    save_song_bank(path, bank)
    back = load_song_bank(path)
    assert set(back) == set(bank)
    assert back[TWINKLE].melody.notes == bank[TWINKLE].melody.notes


# ---------------------------------------------------------------------------
# turn-taking grading


def closed_conversation(strikes, demo=(0.0, 3.0), window=(4.0, 11.0), result_end=12.0):
    return Conversation(
        target=(1, 2),
        demo_start_s=demo[0],
        demo_end_s=demo[1],
        window_open_s=window[0],
        window_close_s=window[1],
        result_end_s=result_end,
        strikes=strikes,
    )


def test_grade_well_done():
    conv = closed_conversation([(1, 5.0), (2, 5.5)])
    assert grade_turn_taking(conv) is TurnTakingGrade.WELL_DONE


def test_grade_light_early_strike():
    conv = closed_conversation([(1, 3.5), (1, 5.0)])
    assert grade_turn_taking(conv) is TurnTakingGrade.LIGHT_INTERRUPT


def test_grade_light_strike_during_result():
    conv = closed_conversation([(1, 5.0), (2, 11.5)])
    assert grade_turn_taking(conv) is TurnTakingGrade.LIGHT_INTERRUPT


def test_grade_heavy_strike_during_demo():
    conv = closed_conversation([(1, 1.0), (1, 5.0)])
    assert grade_turn_taking(conv) is TurnTakingGrade.HEAVY_INTERRUPT


def test_grade_indifferent_no_strikes():
    conv = closed_conversation([])
    assert grade_turn_taking(conv) is TurnTakingGrade.INDIFFERENT


def test_grade_open_conversation_raises():
    conv = closed_conversation([(1, 5.0)])
    conv.result_end_s = None
    with pytest.raises(OpenConversation):
        grade_turn_taking(conv)


def test_normalize_scores():
    assert normalize_scores([TurnTakingGrade.WELL_DONE] * 4) == 100.0
    assert normalize_scores([3, 2, 1, 0]) == 50.0
    with pytest.raises(NoGrades):
        normalize_scores([])


# ---------------------------------------------------------------------------
# engine flow


def test_conversation_pass_flow():
    plan = plan_session("intervention:1")
    engine = SessionEngine(plan, seed=1)
    actions = engine.advance(Begin(t_s=0.0))
    assert [a.type for a in actions][:2] == ["phase_started", "demonstrate"]
    target = [int(ch, 16) for ch in actions[1].body["melody"]]

    actions = engine.advance(DemonstrationDone(t_s=2.0))
    assert [a.type for a in actions] == ["verbal_cue", "eye_flash"]
    actions = engine.advance(CueIssued(t_s=3.0))
    assert actions[0].type == "open_response_window"

    for i, note in enumerate(target):
        engine.advance(StrikeEvent(t_s=3.5 + 0.4 * i, note=note))
    actions = engine.advance(WindowElapsed(t_s=3.0 + actions[0].body["seconds"]))
    assert actions[0].type == "feedback"
    assert actions[0].body["verdict"] == Verdict.PASS.value

    actions = engine.advance(FeedbackDone(t_s=12.0))
    assert actions[0].type == "turn_graded"
    assert actions[0].body["grade"] == 3


def test_strike_during_demo_marks_interruption():
    plan = plan_session("intervention:1")
    engine = SessionEngine(plan, seed=1)
    engine.advance(Begin(t_s=0.0))
    engine.advance(StrikeEvent(t_s=0.5, note=4))  # mid-demonstration
    engine.advance(DemonstrationDone(t_s=2.0))
    engine.advance(CueIssued(t_s=3.0))
    engine.advance(StrikeEvent(t_s=3.5, note=engine.state.conversation.target[0]))
    engine.advance(WindowElapsed(t_s=10.0))
    actions = engine.advance(FeedbackDone(t_s=11.0))
    assert actions[0].body["grade"] == int(TurnTakingGrade.HEAVY_INTERRUPT)


def test_illegal_event_rejected():
    plan = plan_session("baseline")
    engine = SessionEngine(plan, seed=1)
    with pytest.raises(IllegalEvent):
        engine.advance(WindowElapsed(t_s=0.0))


def test_phase_order_intervention():
    plan = plan_session("intervention:2")
    run = run_scripted_session(plan, seed=9, persona=PERSONAS["perfect"](seed=9))
    phases = [r.body["phase"] for r in run.log if r.type == "phase_started"]
    assert phases == ["warm_up", "single_practice", "gameplay"]


def test_all_modes_played_before_done():
    plan = plan_session("baseline")
    run = run_scripted_session(plan, seed=3, persona=PERSONAS["perfect"](seed=3))
    assert run.summary["modes_played"] == [1, 2, 3]
    assert run.log[-1].type == "session_done"


def test_gameplay_done_blocked_until_all_modes():
    plan = plan_session("baseline")
    engine = SessionEngine(plan, seed=1)
    # fast-forward through practice with a scripted driver is overkill here;
    # drive gameplay directly by faking the phase position
    engine.state.phase_index = 0
    actions = engine._next_phase(0.0)  # enters gameplay
    assert engine.state.phase is Phase.GAMEPLAY
    from melodica.session import GameplayDone

    actions = engine.advance(GameplayDone(t_s=1.0))
    assert any(a.type == "game_prompt" for a in actions)
    assert not engine.state.done


def test_full_determinism_byte_identical():
    plan = plan_session("intervention:3")
    runs = []
    for _ in range(2):
        run = run_scripted_session(plan, seed=11, persona=PERSONAS["noisy"](seed=11))
        runs.append(json.dumps([r.to_json_dict() for r in run.log], sort_keys=True))
    assert runs[0] == runs[1]


def test_different_seeds_differ():
    plan = plan_session("baseline")
    a = run_scripted_session(plan, seed=1, persona=PERSONAS["perfect"](seed=1))
    b = run_scripted_session(plan, seed=2, persona=PERSONAS["perfect"](seed=2))
    la = [r.to_json_dict() for r in a.log]
    lb = [r.to_json_dict() for r in b.log]
    assert la != lb  # mode-1 song choice and mode-2 melody depend on the seed


def test_personas_turn_taking_extremes():
    plan = plan_session("intervention:1")
    perfect = run_scripted_session(plan, seed=5, persona=PERSONAS["perfect"](seed=5))
    silent = run_scripted_session(plan, seed=5, persona=PERSONAS["silent"](seed=5))
    assert perfect.summary["turn_taking_pct"] == 100.0
    assert silent.summary["turn_taking_pct"] == 0.0
    assert perfect.summary["accuracy"]["single_practice"]["pct"] == 100.0


def test_no_open_conversation_at_done():
    for kind in ("baseline", "intervention:1", "exit"):
        plan = plan_session(kind)
        run = run_scripted_session(plan, seed=4, persona=PERSONAS["noisy"](seed=4))
        assert run.log[-1].type == "session_done"


def test_mode1_seeded_song_choice_stable():
    plan = plan_session("baseline")
    songs = []
    for _ in range(2):
        run = run_scripted_session(plan, seed=21, persona=PERSONAS["perfect"](seed=21))
        songs.append([r.body.get("song") for r in run.log
                      if r.type == "demonstrate" and "song" in r.body])
    assert songs[0] == songs[1] and songs[0]


def test_mode2_consonant_intervals():
    rng = random.Random(13)
    for _ in range(50):
        melody = generate_styled_melody(rng, consonant=True, length=6)
        for a, b in zip(melody.notes, melody.notes[1:]):
            assert abs(midi_for_note(a) - midi_for_note(b)) in CONSONANT_SEMITONES


def test_mode2_dissonant_intervals():
    from melodica.session import DISSONANT_SEMITONES

    rng = random.Random(14)
    for _ in range(50):
        melody = generate_styled_melody(rng, consonant=False, length=5)
        for a, b in zip(melody.notes, melody.notes[1:]):
            assert abs(midi_for_note(a) - midi_for_note(b)) in DISSONANT_SEMITONES


def test_extra_practice_scheduled_when_failing():
    plan = plan_session("intervention:1")
    run = run_scripted_session(plan, seed=6, persona=PERSONAS["silent"](seed=6))
    extra = [r for r in run.log if r.type == "extra_practice"]
    assert len(extra) == 1
    assert extra[0].body["count"] >= 1


def test_warm_up_never_gates():
    plan = plan_session("intervention:1")
    run = run_scripted_session(plan, seed=6, persona=PERSONAS["silent"](seed=6))
    # warm-up trials never enter the practice tracker
    assert "warm_up" not in run.summary["accuracy"]


class DittyPersona(PerfectPersona):
    def free_play(self, window_open_s):
        notes = [1, 5, 11]
        return [(n, window_open_s + 0.5 + 0.5 * i) for i, n in enumerate(notes)]


@pytest.mark.slow
def test_mode3_kinematic_imitation():
    from melodica.geometry import InstrumentPlacement
    from melodica.instrument import XylophoneModel
    from melodica.trajectory import Arm, KinematicChain, make_kinematic_imitator, strike_configs

    model = XylophoneModel.default()
    placement = InstrumentPlacement()
    chains = {Arm.LEFT: KinematicChain.default(Arm.LEFT), Arm.RIGHT: KinematicChain.default(Arm.RIGHT)}
    table = strike_configs(model, chains, placement)
    imitator = make_kinematic_imitator(model, chains, table, placement)

    plan = plan_session("baseline")
    run = run_scripted_session(plan, seed=8, persona=DittyPersona(seed=8), imitator=imitator)
    imitations = [r for r in run.log if r.type == "robot_imitation"]
    assert len(imitations) == 1
    assert imitations[0].body["heard"] == "15b"
    assert imitations[0].body["played"] == "15b"
