"""Engine configuration: one JSON file overriding the built-in defaults.

The file named by the MELODICA_CONFIG environment variable (or passed
explicitly) may override the instrument definition, the instrument
placement, detection parameters, and session options.  Every key is
optional.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .audio import DetectionConfig
from .geometry import InstrumentPlacement
from .instrument import XylophoneModel
from .session import DEFAULT_RESPONSE_WINDOW_S

ENV_VAR = "MELODICA_CONFIG"


@dataclass
class EngineConfig:
    instrument: XylophoneModel = field(default_factory=XylophoneModel.default)
    placement: InstrumentPlacement = field(default_factory=InstrumentPlacement)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    response_window_s: float = DEFAULT_RESPONSE_WINDOW_S
    wav_channel: int = 0

    @classmethod
    def load(cls, path=None) -> "EngineConfig":
        """Config from an explicit path, else $MELODICA_CONFIG, else defaults."""
        if path is None:
            path = os.environ.get(ENV_VAR)
        if not path:
            return cls()
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        cfg = cls()
        if "instrument" in doc:
            cfg.instrument = XylophoneModel.from_config(doc["instrument"])
        if "placement" in doc:
            p = doc["placement"]
            cfg.placement = InstrumentPlacement(
                x_cm=float(p.get("x_cm", cfg.placement.x_cm)),
                y_cm=float(p.get("y_cm", cfg.placement.y_cm)),
                z_cm=float(p.get("z_cm", cfg.placement.z_cm)),
                yaw_rad=float(p.get("yaw_rad", cfg.placement.yaw_rad)),
            )
        if "detection" in doc:
            d = doc["detection"]
            base = DetectionConfig()
            cfg.detection = DetectionConfig(
                band_hz=tuple(d.get("band_hz", base.band_hz)),
                energy_floor=float(d.get("energy_floor", base.energy_floor)),
                split_ratio=float(d.get("split_ratio", base.split_ratio)),
                dominance_min=float(d.get("dominance_min", base.dominance_min)),
                min_note_s=float(d.get("min_note_s", base.min_note_s)),
                tol_ratio=float(d.get("tol_ratio", base.tol_ratio)),
                window_len=int(d.get("window_len", base.window_len)),
                hop=int(d.get("hop", base.hop)),
            )
        cfg.response_window_s = float(doc.get("response_window_s", cfg.response_window_s))
        cfg.wav_channel = int(doc.get("wav_channel", cfg.wav_channel))
        return cfg
