"""EDA recordings: synthesis, annotations, conversation segmentation, CSV I/O.

A recording is a 32 Hz skin-conductance trace plus interval annotations.
Each annotated conversation (~45 s) carries three sub-segments (learn, play,
feedback) and a class label; segmentation slices the trace accordingly for
feature extraction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .wavelet import EDA_SAMPLE_RATE

SUBSEGMENT_KINDS = ("learn", "play", "feedback")
SCR_TAU_RISE_S = 0.75
SCR_TAU_DECAY_S = 2.0


class MissingAnnotations(ValueError):
    pass


@dataclass(frozen=True)
class SubAnnotation:
    start_s: float
    end_s: float
    kind: str  # learn | play | feedback


@dataclass(frozen=True)
class ConversationAnnotation:
    start_s: float
    end_s: float
    section: str  # S1 | S2 | S3 (or any task tag)
    label: str  # classification label for this conversation
    subsegments: tuple[SubAnnotation, ...] = ()


@dataclass(frozen=True)
class EdaRecording:
    samples_us: np.ndarray  # microsiemens
    sample_rate: int = EDA_SAMPLE_RATE
    annotations: tuple[ConversationAnnotation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "samples_us", np.asarray(self.samples_us, dtype=float))
        if self.sample_rate != EDA_SAMPLE_RATE:
            raise ValueError(f"EDA recordings are fixed at {EDA_SAMPLE_RATE} Hz")

    @property
    def duration_s(self) -> float:
        return len(self.samples_us) / self.sample_rate


@dataclass(frozen=True)
class Segment:
    samples_us: np.ndarray
    section: str
    label: str
    segment_id: str
    start_s: float
    end_s: float
    subsegments: tuple[tuple[str, np.ndarray], ...] = ()


def segment_conversations(recording: EdaRecording) -> list[Segment]:
    """One Segment per annotated conversation, with its three sub-slices.

    Validates that sub-segments sit inside their conversation and that
    intervals are sane; raises MissingAnnotations otherwise.
    """
    if not recording.annotations:
        raise MissingAnnotations("recording has no conversation annotations")
    fs = recording.sample_rate
    n = len(recording.samples_us)
    out = []
    for idx, conv in enumerate(recording.annotations):
        if not (0.0 <= conv.start_s < conv.end_s and conv.end_s * fs <= n + 1e-6):
            raise MissingAnnotations(
                f"conversation {idx} interval [{conv.start_s}, {conv.end_s}] outside recording"
            )
        lo, hi = int(round(conv.start_s * fs)), int(round(conv.end_s * fs))
        subs = []
        for sub in conv.subsegments:
            if sub.kind not in SUBSEGMENT_KINDS:
                raise MissingAnnotations(f"unknown sub-segment kind {sub.kind!r}")
            if sub.start_s < conv.start_s - 1e-6 or sub.end_s > conv.end_s + 1e-6:
                raise MissingAnnotations(
                    f"sub-segment {sub.kind} [{sub.start_s}, {sub.end_s}] outside conversation {idx}"
                )
            s_lo, s_hi = int(round(sub.start_s * fs)), int(round(sub.end_s * fs))
            subs.append((sub.kind, recording.samples_us[s_lo:s_hi]))
        out.append(
            Segment(
                samples_us=recording.samples_us[lo:hi],
                section=conv.section,
                label=conv.label,
                segment_id=f"conv{idx:03d}",
                start_s=conv.start_s,
                end_s=conv.end_s,
                subsegments=tuple(subs),
            )
        )
    return out


# ---------------------------------------------------------------------------
# synthetic EDA


@dataclass(frozen=True)
class EdaClassParams:
    """Generator knobs for one synthetic arousal class."""

    tonic_level_us: float = 5.0
    drift_us_per_s: float = 0.001
    scr_rate_per_min: float = 4.0
    scr_amp_us: float = 0.6
    seed: int = 0


# Three arousal levels standing in for the warm-up / practice / gameplay
# sections: tonic level and phasic rate both rise with arousal.
DEFAULT_CLASS_PRESETS = {
    "S1": EdaClassParams(tonic_level_us=4.0, drift_us_per_s=0.001,
                         scr_rate_per_min=2.0, scr_amp_us=0.6, seed=101),
    "S2": EdaClassParams(tonic_level_us=6.5, drift_us_per_s=0.001,
                         scr_rate_per_min=5.0, scr_amp_us=0.6, seed=202),
    "S3": EdaClassParams(tonic_level_us=9.0, drift_us_per_s=0.001,
                         scr_rate_per_min=8.0, scr_amp_us=0.6, seed=303),
}


def synth_eda_dataset(segments_per_class: int = 40,
                      presets: dict[str, EdaClassParams] | None = None):
    """(features, labels) from synthetic recordings, one per class.

    Runs the real pipeline: synthesize, segment, extract features.
    """
    from .wavelet import extract_features

    presets = presets if presets is not None else DEFAULT_CLASS_PRESETS
    feats, labels = [], []
    for section, params in presets.items():
        rec = synth_eda(params, duration_s=45.0 * segments_per_class, section=section)
        for seg in segment_conversations(rec):
            fv = extract_features(seg.samples_us, segment_id=seg.segment_id, label=seg.label)
            feats.append(fv.values)
            labels.append(seg.label)
    return np.array(feats), labels


def synth_eda(params: EdaClassParams, duration_s: float,
              section: str = "S1", label: str | None = None,
              conversation_s: float = 45.0) -> EdaRecording:
    """Synthetic skin-conductance trace with scheduled annotations.

    Tonic level plus linear drift plus phasic responses at seeded-Poisson
    onsets; each response is amp * (exp(-t/tau_decay) - exp(-t/tau_rise)).
    Whole conversations of ``conversation_s`` are annotated with three equal
    sub-segments until the duration is filled.
    """
    if duration_s <= 0 or params.scr_rate_per_min < 0:
        raise ValueError("duration and SCR rate must be nonnegative")
    fs = EDA_SAMPLE_RATE
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    x = params.tonic_level_us + params.drift_us_per_s * t

    rng = np.random.default_rng(params.seed)
    if params.scr_rate_per_min > 0:
        rate_per_s = params.scr_rate_per_min / 60.0
        onset = rng.exponential(1.0 / rate_per_s)
        while onset < duration_s:
            start = int(round(onset * fs))
            tail = t[: n - start]
            pulse = params.scr_amp_us * (
                np.exp(-tail / SCR_TAU_DECAY_S) - np.exp(-tail / SCR_TAU_RISE_S)
            )
            # normalize the bi-exponential so its peak equals scr_amp_us
            peak_t = (
                SCR_TAU_DECAY_S * SCR_TAU_RISE_S / (SCR_TAU_DECAY_S - SCR_TAU_RISE_S)
                * np.log(SCR_TAU_DECAY_S / SCR_TAU_RISE_S)
            )
            peak = np.exp(-peak_t / SCR_TAU_DECAY_S) - np.exp(-peak_t / SCR_TAU_RISE_S)
            x[start:] += pulse / peak
            onset += rng.exponential(1.0 / rate_per_s)

    label = label if label is not None else section
    annotations = []
    conv_start = 0.0
    while conv_start + conversation_s <= duration_s + 1e-9:
        third = conversation_s / 3.0
        subs = tuple(
            SubAnnotation(conv_start + i * third, conv_start + (i + 1) * third, kind)
            for i, kind in enumerate(SUBSEGMENT_KINDS)
        )
        annotations.append(
            ConversationAnnotation(
                start_s=conv_start,
                end_s=conv_start + conversation_s,
                section=section,
                label=label,
                subsegments=subs,
            )
        )
        conv_start += conversation_s
    return EdaRecording(samples_us=x, annotations=tuple(annotations))


# ---------------------------------------------------------------------------
# CSV interchange


def write_eda_csv(data_path, recording: EdaRecording, annotation_path=None) -> None:
    fs = recording.sample_rate
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "microsiemens"])
        for i, v in enumerate(recording.samples_us):
            writer.writerow([f"{i / fs:.6f}", f"{v:.8f}"])
    if annotation_path is not None:
        write_annotations_csv(annotation_path, recording.annotations)


def write_annotations_csv(path, annotations) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_s", "end_s", "section", "subsegment", "label"])
        for conv in annotations:
            for sub in conv.subsegments:
                writer.writerow(
                    [f"{sub.start_s:.6f}", f"{sub.end_s:.6f}", conv.section, sub.kind, conv.label]
                )


def read_eda_csv(data_path, annotation_path=None) -> EdaRecording:
    samples = []
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "microsiemens" not in reader.fieldnames:
            raise MissingAnnotations(f"{data_path} is not an EDA data CSV")
        for row in reader:
            samples.append(float(row["microsiemens"]))
    annotations = read_annotations_csv(annotation_path) if annotation_path else ()
    return EdaRecording(samples_us=np.array(samples), annotations=annotations)


def read_annotations_csv(path) -> tuple[ConversationAnnotation, ...]:
    """Rebuild conversations from the flat sub-segment rows.

    Every 'learn' row opens a new conversation; its span is the union of its
    sub-segment intervals.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(row)
    conversations: list[ConversationAnnotation] = []
    current: list[dict] = []

    def flush():
        if not current:
            return
        subs = tuple(
            SubAnnotation(float(r["start_s"]), float(r["end_s"]), r["subsegment"]) for r in current
        )
        conversations.append(
            ConversationAnnotation(
                start_s=min(s.start_s for s in subs),
                end_s=max(s.end_s for s in subs),
                section=current[0]["section"],
                label=current[0]["label"],
                subsegments=subs,
            )
        )
        current.clear()

    for row in rows:
        if row["subsegment"] == "learn":
            flush()
        current.append(row)
    flush()
    return tuple(conversations)
