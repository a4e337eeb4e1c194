"""Melody synthesis and STFT-based note detection.

The detector turns a mono clip into the hex-digit note sequence the scoring
subsystem consumes.  Analysis runs on a Hann-window STFT (4096/1024 at
48 kHz by default, ~11.7 Hz bins); each active frame is labeled with the bar
nearest its in-band spectral peak, frame labels are merged into note events,
and event onsets are refined against the time-domain attack envelope.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from .instrument import Melody, nearest_note

DEFAULT_SAMPLE_RATE = 48000
DEFAULT_WINDOW = 4096
DEFAULT_HOP = 1024


class EmptySignal(ValueError):
    pass


class WindowTooLong(ValueError):
    pass


class MalformedHeader(ValueError):
    pass


class UnsupportedEncoding(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    magnitudes_sq: np.ndarray  # [frames x bins], squared magnitudes
    window_len: int
    hop: int
    window_kind: str
    bin_hz: float

    @property
    def n_frames(self) -> int:
        return self.magnitudes_sq.shape[0]


@dataclass(frozen=True)
class DetectionConfig:
    band_hz: tuple[float, float] = (900.0, 3100.0)
    # Frames count as active above energy_floor x the loudest frame's in-band
    # energy; an event splits when energy recovers through split_ratio x its
    # running peak after dipping below it (repeated strikes on one bar).
    energy_floor: float = 1e-4
    split_ratio: float = 0.15
    dominance_min: float = 0.2
    min_note_s: float = 0.08
    tol_ratio: float = 0.03
    window_len: int = DEFAULT_WINDOW
    hop: int = DEFAULT_HOP

    def __post_init__(self):
        if self.band_hz[0] >= self.band_hz[1]:
            raise ValueError("band_hz must be (low, high) with low < high")
        if self.energy_floor <= 0 or self.split_ratio <= 0 or self.min_note_s <= 0:
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class Timbre:
    """Struck-bar sound model: exponentially decaying sine per strike."""

    decay_tau_s: float = 0.22
    amplitude: float = 0.8
    noise_rms: float = 0.0
    seed: int = 0


def stft(clip: AudioClip, window_len: int = DEFAULT_WINDOW, hop: int = DEFAULT_HOP):
    """Windowed DFT of the clip.

    Frame t, bin k holds sum_n x[n] w[n - t*hop] exp(-2j pi k n / N) with a
    periodic Hann window, i.e. the sliding-window transform with the phase
    reference fixed at n = 0.  Returns (complex matrix, Spectrogram).
    """
    spectrum, starts = _windowed_rfft(clip, window_len, hop)
    # Absolute-time phase reference: X[t,k] picks up exp(-2j pi k t hop / N).
    k = np.arange(spectrum.shape[1])
    twiddle = np.exp(-2j * np.pi * np.outer(starts, k) / window_len)
    spectrum = spectrum * twiddle
    return spectrum, _to_spectrogram(spectrum, clip.sample_rate, window_len, hop)


def _windowed_rfft(clip: AudioClip, window_len: int, hop: int):
    x = clip.samples
    if len(x) == 0:
        raise EmptySignal("cannot transform an empty clip")
    if window_len > len(x):
        raise WindowTooLong(f"window {window_len} exceeds clip length {len(x)}")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    window = np.hanning(window_len)
    starts = np.arange(0, len(x) - window_len + 1, hop)
    frames = np.lib.stride_tricks.sliding_window_view(x, window_len)[starts]
    return np.fft.rfft(frames * window, axis=1), starts


def _to_spectrogram(spectrum: np.ndarray, sample_rate: int, window_len: int, hop: int) -> Spectrogram:
    # One-sided PSD scaling: interior bins carry both spectral halves.
    mags = np.abs(spectrum) ** 2
    mags[:, 1 : window_len // 2 + (window_len % 2)] *= 2.0
    return Spectrogram(
        magnitudes_sq=mags,
        window_len=window_len,
        hop=hop,
        window_kind="hann",
        bin_hz=sample_rate / window_len,
    )


def synthesize_melody(melody: Melody, timbre: Timbre = Timbre(),
                      sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioClip:
    """Render a melody as summed decaying sines, one per strike.

    Each note contributes amplitude * exp(-t/tau) * sin(2 pi f t) from its
    onset to the end of the clip; the clip runs 5 decay constants past the
    last onset.  White noise is added at noise_rms, and the result is peak
    normalized to at most 1.
    """
    if not melody.notes:
        raise ValueError("melody must be nonempty")
    from .instrument import note_frequency

    onsets = melody.onset_times()
    tail = 5.0 * timbre.decay_tau_s
    n_samples = int(round((onsets[-1] + tail) * sample_rate)) + 1
    if n_samples <= 0:
        raise ValueError("melody ends before the clip starts")
    x = np.zeros(n_samples)
    for note, onset in zip(melody.notes, onsets):
        # strikes before t=0 enter the clip already ringing
        start = max(0, int(np.ceil(onset * sample_rate - 1e-9)))
        if start >= n_samples:
            continue
        t = np.arange(start, n_samples) / sample_rate - onset
        f = note_frequency(note)
        x[start:] += timbre.amplitude * np.exp(-t / timbre.decay_tau_s) * np.sin(2 * np.pi * f * t)
    if timbre.noise_rms > 0:
        rng = np.random.default_rng(timbre.seed)
        x += rng.normal(0.0, timbre.noise_rms, n_samples)
    peak = np.max(np.abs(x)) if n_samples else 0.0
    if peak > 1.0:
        x /= peak
    return AudioClip(samples=x, sample_rate=sample_rate)


@dataclass(frozen=True)
class _Event:
    note: int
    start_frame: int
    end_frame: int  # exclusive
    split_opened: bool


def detect_notes(clip: AudioClip, cfg: DetectionConfig = DetectionConfig()) -> list[tuple[int, float]]:
    """Detect struck notes; returns [(note, onset_s)] with increasing onsets.

    Deterministic: identical clip and config give identical output.
    """
    if len(clip.samples) == 0:
        raise EmptySignal("cannot detect notes in an empty clip")
    if len(clip.samples) <= cfg.window_len:
        return []

    # Phase is irrelevant for detection, so skip stft()'s phase reference.
    spectrum, _ = _windowed_rfft(clip, cfg.window_len, cfg.hop)
    spec = _to_spectrogram(spectrum, clip.sample_rate, cfg.window_len, cfg.hop)
    mags = spec.magnitudes_sq
    freqs = np.arange(mags.shape[1]) * spec.bin_hz
    band = (freqs >= cfg.band_hz[0]) & (freqs <= cfg.band_hz[1])
    if not band.any():
        return []
    band_mags = mags[:, band]
    band_freqs = freqs[band]

    energy = band_mags.sum(axis=1)
    peak_idx = band_mags.argmax(axis=1)
    peak_mag = band_mags[np.arange(len(energy)), peak_idx]
    e_max = energy.max()
    if e_max <= 0:
        return []
    floor = cfg.energy_floor * e_max

    labels: list[int | None] = []
    for t in range(len(energy)):
        if energy[t] < floor or energy[t] <= 0.0:
            labels.append(None)
            continue
        if peak_mag[t] / energy[t] < cfg.dominance_min:
            labels.append(None)
            continue
        labels.append(nearest_note(band_freqs[peak_idx[t]], cfg.tol_ratio))

    events = _assemble_events(labels, energy, cfg)
    min_frames = max(1, int(round(cfg.min_note_s * clip.sample_rate / cfg.hop)))
    events = [ev for ev in events if ev.end_frame - ev.start_frame >= min_frames]
    events = _merge_unsplit_neighbors(events)

    envelope = _attack_envelope(clip.samples)
    out: list[tuple[int, float]] = []
    for ev in events:
        onset = _refine_onset(envelope, ev.start_frame * cfg.hop, cfg.window_len, clip.sample_rate)
        if out and onset <= out[-1][1]:
            onset = out[-1][1] + 1.0 / clip.sample_rate
        out.append((ev.note, onset))
    return out


def _assemble_events(labels: list[int | None], energy: np.ndarray, cfg: DetectionConfig) -> list[_Event]:
    events: list[_Event] = []
    cur_note: int | None = None
    cur_start = 0
    cur_split = False
    running_peak = 0.0
    dipped = False

    def close(end: int):
        nonlocal cur_note
        if cur_note is not None:
            events.append(_Event(cur_note, cur_start, end, cur_split))
        cur_note = None

    for t, label in enumerate(labels):
        if label is None:
            close(t)
            continue
        if cur_note is None:
            # Rising through the activity floor after silence re-opens.
            prev_active = t > 0 and labels[t - 1] is not None
            cur_note, cur_start, cur_split = label, t, not prev_active and t > 0
            running_peak, dipped = energy[t], False
            continue
        recovered = dipped and energy[t] >= cfg.split_ratio * running_peak
        if label != cur_note or recovered:
            close(t)
            cur_note, cur_start, cur_split = label, t, recovered
            running_peak, dipped = energy[t], False
            continue
        running_peak = max(running_peak, energy[t])
        if energy[t] < cfg.split_ratio * running_peak:
            dipped = True
    close(len(labels))
    return events


def _merge_unsplit_neighbors(events: list[_Event]) -> list[_Event]:
    # Dropping sub-minimum junk can leave two fragments of one note adjacent;
    # fragments separated by a genuine re-onset keep their boundary.
    merged: list[_Event] = []
    for ev in events:
        if merged and merged[-1].note == ev.note and not ev.split_opened:
            prev = merged.pop()
            merged.append(_Event(prev.note, prev.start_frame, ev.end_frame, prev.split_opened))
        else:
            merged.append(ev)
    return merged


_ENV_SMOOTH = 128
_ENV_LAG = 32


def _attack_envelope(x: np.ndarray) -> np.ndarray:
    kernel = np.ones(_ENV_SMOOTH) / _ENV_SMOOTH
    return np.convolve(np.abs(x), kernel, mode="full")[: len(x)]


def _refine_onset(envelope: np.ndarray, frame_start: int, window_len: int, sample_rate: int) -> float:
    """Locate the attack inside the first active frame's neighborhood.

    The coarse frame grid only bounds the onset to within a window; the
    steepest rise of the smoothed rectified envelope pins it down to a
    couple of milliseconds.
    """
    lo = max(0, frame_start - window_len)
    hi = min(len(envelope), frame_start + 2 * window_len)
    if hi - lo <= _ENV_LAG:
        return lo / sample_rate
    seg = envelope[lo:hi]
    diff = seg[_ENV_LAG:] - seg[:-_ENV_LAG]
    idx = int(np.argmax(diff)) + _ENV_LAG
    onset = lo + idx - (_ENV_SMOOTH + _ENV_LAG) // 2
    return max(0, onset) / sample_rate


def read_wav(path, channel: int = 0) -> AudioClip:
    """Read a RIFF PCM16 WAV file, selecting one channel, scaled to [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as fh:
            n_channels = fh.getnchannels()
            sampwidth = fh.getsampwidth()
            comptype = fh.getcomptype()
            rate = fh.getframerate()
            n_frames = fh.getnframes()
            raw = fh.readframes(n_frames)
    except (wave.Error, EOFError, FileNotFoundError, IsADirectoryError, struct.error) as exc:
        raise MalformedHeader(f"cannot read {path}: {exc}") from exc
    if comptype != "NONE" or sampwidth != 2:
        raise UnsupportedEncoding(f"only PCM16 supported, got comptype={comptype} width={sampwidth}")
    if not 1 <= n_channels <= 4:
        raise UnsupportedEncoding(f"expected 1-4 channels, got {n_channels}")
    if not 0 <= channel < n_channels:
        raise ValueError(f"channel {channel} out of range for {n_channels}-channel file")
    data = np.frombuffer(raw, dtype="<i2").reshape(-1, n_channels)
    return AudioClip(samples=data[:, channel].astype(np.float64) / 32768.0, sample_rate=rate)


def write_wav(path, clip: AudioClip) -> None:
    """Write a mono PCM16 WAV; read_wav(write_wav(x)) matches x within 1 LSB."""
    scaled = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(clip.sample_rate)
        fh.writeframes(scaled.tobytes())
