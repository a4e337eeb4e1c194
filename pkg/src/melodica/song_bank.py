"""Song bank: named hex melodies with tempos, loadable from a JSON file.

Twinkle, Twinkle, Little Star is the entry-level song used by baseline
sessions; the other titles ship as short placeholder transcriptions so the
bank exercises multi-song flows without claiming musical fidelity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .instrument import Melody, parse_hex_melody

TWINKLE = "Twinkle, Twinkle, Little Star"


@dataclass(frozen=True)
class Song:
    name: str
    melody: Melody
    placeholder: bool = False


_DEFAULT_SONGS = [
    # C C G G A A G | F F E E D D C | G G F F E E D | G G F F E E D | repeat head
    (TWINKLE, "115566544332215544332554433211556654433221", 100, False),
    ("Can Can", "5533881155338811", 126, True),
    ("Shake It Off", "5566553355665533", 120, True),
    ("SpongeBob SquarePants", "1458145814581111", 112, True),
    ("You Are My Sunshine", "1345554431345531", 96, True),
]


def default_song_bank() -> dict[str, Song]:
    bank = {}
    for name, hex_melody, bpm, placeholder in _DEFAULT_SONGS:
        bank[name] = Song(name=name, melody=parse_hex_melody(hex_melody, tempo_bpm=bpm),
                          placeholder=placeholder)
    return bank


def save_song_bank(path, bank: dict[str, Song]) -> None:
    doc = {
        "songs": [
            {
                "name": song.name,
                "melody": song.melody.to_hex(),
                "tempo_bpm": song.melody.tempo_bpm,
                "placeholder": song.placeholder,
            }
            for song in bank.values()
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_song_bank(path) -> dict[str, Song]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    bank = {}
    for entry in doc["songs"]:
        bank[entry["name"]] = Song(
            name=entry["name"],
            melody=parse_hex_melody(entry["melody"], tempo_bpm=float(entry.get("tempo_bpm", 100))),
            placeholder=bool(entry.get("placeholder", False)),
        )
    if not bank:
        raise ValueError(f"song bank {path} is empty")
    return bank
