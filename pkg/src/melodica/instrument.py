"""Model of the 11-bar toy glockenspiel shared by every other subsystem.

The instrument is a diatonic C-major glockenspiel spanning C6..F7.  Notes are
identified by the integers 1..11 and written as single hex digits '1'..'b'
wherever melodies travel as text.  Bar frequencies follow 12-tone equal
temperament with A4 = 440 Hz.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

NOTE_MIN = 1
NOTE_MAX = 11

# Diatonic C-major degrees from C6 upward, as MIDI note numbers.
_MIDI_C6 = 84
_MAJOR_SCALE_SEMITONES = (0, 2, 4, 5, 7, 9, 11)

_PITCH_NAMES = ("C6", "D6", "E6", "F6", "G6", "A6", "B6", "C7", "D7", "E7", "F7")

# Fixed rainbow palette; bar 6 is the pure-blue reference bar the vision
# subsystem keys on.  No other color may fall inside the blue HSV window.
_BAR_COLORS = (
    (230, 0, 0),
    (255, 140, 0),
    (255, 230, 0),
    (160, 230, 0),
    (0, 180, 60),
    (0, 0, 255),
    (0, 190, 190),
    (130, 60, 200),
    (220, 0, 180),
    (255, 120, 170),
    (255, 245, 230),
)

BODY_CM = (31.0, 9.5, 4.0)  # length x depth x height
BAR_WIDTH_CM = 2.0
BAR_LEN_MAX_CM = 4.8  # bar 1
BAR_LEN_MIN_CM = 2.8  # bar 11

DEFAULT_TOL_RATIO = 0.03


class InvalidDigit(ValueError):
    """A melody string contained a character outside '1'..'b'."""

    def __init__(self, position: int, char: str):
        self.position = position
        self.char = char
        super().__init__(f"invalid melody digit {char!r} at position {position}")


def midi_for_note(n: int) -> int:
    """MIDI number of the n-th diatonic degree counting from C6 = 1."""
    _check_note(n)
    octave, degree = divmod(n - 1, 7)
    return _MIDI_C6 + 12 * octave + _MAJOR_SCALE_SEMITONES[degree]


def note_frequency(n: int) -> float:
    """Equal-temperament frequency in Hz of bar ``n`` (A4 = 440 Hz)."""
    return 440.0 * 2.0 ** ((midi_for_note(n) - 69) / 12.0)


def nearest_note(freq_hz: float, tol_ratio: float = DEFAULT_TOL_RATIO) -> int | None:
    """Bar whose frequency is relatively closest to ``freq_hz``.

    Returns None when the best relative error exceeds ``tol_ratio``.  Ties
    break toward the lower note.
    """
    if freq_hz <= 0:
        return None
    best = None
    best_err = math.inf
    for n in range(NOTE_MIN, NOTE_MAX + 1):
        f = note_frequency(n)
        err = abs(freq_hz - f) / f
        if err < best_err - 1e-12:
            best, best_err = n, err
    return best if best_err <= tol_ratio else None


def render_hex_note(n: int) -> str:
    _check_note(n)
    return format(n, "x")


def parse_hex_note(ch: str) -> int:
    n = int(ch, 16) if ch in "123456789ab" else 0
    if not NOTE_MIN <= n <= NOTE_MAX:
        raise InvalidDigit(0, ch)
    return n


def render_hex_melody(notes: list[int]) -> str:
    return "".join(render_hex_note(n) for n in notes)


@dataclass(frozen=True)
class Melody:
    """A note sequence, optionally with explicit onset times."""

    notes: tuple[int, ...]
    onsets_s: tuple[float, ...] | None = None
    tempo_bpm: float = 100.0

    def __post_init__(self):
        for n in self.notes:
            _check_note(n)
        if self.tempo_bpm <= 0:
            raise ValueError("tempo_bpm must be positive")
        if self.onsets_s is not None:
            if len(self.onsets_s) != len(self.notes):
                raise ValueError("onsets_s must match notes in length")
            if any(b <= a for a, b in zip(self.onsets_s, self.onsets_s[1:])):
                raise ValueError("onsets_s must be strictly increasing")

    def onset_times(self) -> tuple[float, ...]:
        """Explicit onsets if present, else a uniform grid from the tempo."""
        if self.onsets_s is not None:
            return self.onsets_s
        beat = 60.0 / self.tempo_bpm
        return tuple(i * beat for i in range(len(self.notes)))

    def to_hex(self) -> str:
        return render_hex_melody(list(self.notes))


def parse_hex_melody(s: str, tempo_bpm: float = 100.0) -> Melody:
    """Parse a string of hex digits '1'..'b' into a Melody (no onsets)."""
    if not s:
        raise ValueError("empty melody string")
    notes = []
    for i, ch in enumerate(s):
        if ch not in "123456789ab":
            raise InvalidDigit(i, ch)
        notes.append(int(ch, 16))
    return Melody(notes=tuple(notes), tempo_bpm=tempo_bpm)


@dataclass(frozen=True)
class Bar:
    note: int
    pitch_name: str
    frequency_hz: float
    color_rgb: tuple[int, int, int]
    # (length across the body depth, width along the body length), cm
    playable_area_cm: tuple[float, float]
    # center of the playable surface in the instrument frame, cm
    center_cm: tuple[float, float, float]
    is_reference: bool = False


def _bar_length(n: int) -> float:
    return BAR_LEN_MAX_CM - (BAR_LEN_MAX_CM - BAR_LEN_MIN_CM) * (n - 1) / (NOTE_MAX - 1)


def _bar_center_u(n: int) -> float:
    # Bars are spaced uniformly along the 31 cm body; bar 1 sits at +u so the
    # low notes land under the robot's left arm at the canonical placement.
    spacing = BODY_CM[0] / NOTE_MAX
    return (6 - n) * spacing


@dataclass(frozen=True)
class XylophoneModel:
    """Geometry, colors and tuning of the whole instrument.

    Instrument frame: origin at the center of the top face, +u along the
    31 cm body axis (toward bar 1), +v across the 9.5 cm depth, +w up.
    """

    bars: tuple[Bar, ...] = field(default_factory=tuple)
    body_cm: tuple[float, float, float] = BODY_CM
    stand_height_cm: float = 40.0
    body_color_rgb: tuple[int, int, int] = (92, 58, 28)

    @classmethod
    def default(cls, stand_height_cm: float = 40.0) -> "XylophoneModel":
        bars = tuple(
            Bar(
                note=n,
                pitch_name=_PITCH_NAMES[n - 1],
                frequency_hz=note_frequency(n),
                color_rgb=_BAR_COLORS[n - 1],
                playable_area_cm=(_bar_length(n), BAR_WIDTH_CM),
                center_cm=(_bar_center_u(n), 0.0, 0.0),
                is_reference=(n == 6),
            )
            for n in range(NOTE_MIN, NOTE_MAX + 1)
        )
        return cls(bars=bars, stand_height_cm=stand_height_cm)

    def bar(self, n: int) -> Bar:
        _check_note(n)
        return self.bars[n - 1]

    @property
    def reference_bar(self) -> Bar:
        return next(b for b in self.bars if b.is_reference)

    def to_config(self) -> dict:
        return {
            "body_cm": list(self.body_cm),
            "stand_height_cm": self.stand_height_cm,
            "body_color": list(self.body_color_rgb),
            "bars": [
                {
                    "note": render_hex_note(b.note),
                    "pitch": b.pitch_name,
                    "freq_hz": round(b.frequency_hz, 4),
                    "color": list(b.color_rgb),
                    "playable_cm": list(b.playable_area_cm),
                    "center_cm": list(b.center_cm),
                }
                for b in self.bars
            ],
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "XylophoneModel":
        bars = []
        for entry in cfg["bars"]:
            note = parse_hex_note(entry["note"])
            bars.append(
                Bar(
                    note=note,
                    pitch_name=entry.get("pitch", _PITCH_NAMES[note - 1]),
                    frequency_hz=float(entry["freq_hz"]),
                    color_rgb=tuple(entry["color"]),
                    playable_area_cm=tuple(entry.get("playable_cm", (_bar_length(note), BAR_WIDTH_CM))),
                    center_cm=tuple(entry.get("center_cm", (_bar_center_u(note), 0.0, 0.0))),
                    is_reference=(note == 6),
                )
            )
        bars.sort(key=lambda b: b.note)
        return cls(
            bars=tuple(bars),
            body_cm=tuple(cfg.get("body_cm", BODY_CM)),
            stand_height_cm=float(cfg.get("stand_height_cm", 40.0)),
            body_color_rgb=tuple(cfg.get("body_color", (92, 58, 28))),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_config(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "XylophoneModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_config(json.load(fh))


def _check_note(n: int) -> None:
    if not isinstance(n, int) or not NOTE_MIN <= n <= NOTE_MAX:
        raise ValueError(f"note must be an integer in [{NOTE_MIN}, {NOTE_MAX}], got {n!r}")
