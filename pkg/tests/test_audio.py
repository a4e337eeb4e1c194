import numpy as np
import pytest

from melodica.audio import (
    AudioClip,
    DetectionConfig,
    EmptySignal,
    MalformedHeader,
    Timbre,
    UnsupportedEncoding,
    detect_notes,
    read_wav,
    stft,
    synthesize_melody,
    write_wav,
)
from melodica.instrument import Melody, note_frequency, parse_hex_melody

FS = 48000


def sine_clip(freq, duration_s=1.0, amp=1.0):
    t = np.arange(int(FS * duration_s)) / FS
    return AudioClip(samples=amp * np.sin(2 * np.pi * freq * t), sample_rate=FS)


def test_stft_zero_clip_is_zero():
    clip = AudioClip(samples=np.zeros(FS // 2), sample_rate=FS)
    _, spec = stft(clip)
    assert spec.magnitudes_sq.shape[1] == 4096 // 2 + 1
    assert np.all(spec.magnitudes_sq == 0)


def test_stft_peak_bin_of_c6_sine():
    # bin = round(1046.5 / (48000 / 4096)) = 89
    _, spec = stft(sine_clip(1046.5))
    interior = spec.magnitudes_sq[2:-2]
    assert np.all(interior.argmax(axis=1) == 89)


def test_stft_two_sines_two_peaks():
    t = np.arange(FS) / FS
    x = np.sin(2 * np.pi * 1046.5 * t) + np.sin(2 * np.pi * 1567.98 * t)
    _, spec = stft(AudioClip(samples=x / 2, sample_rate=FS))
    frame = spec.magnitudes_sq[5]
    for expect_bin in (89, 134):
        local = frame[expect_bin - 3 : expect_bin + 4]
        assert local.argmax() + expect_bin - 3 == expect_bin
        assert frame[expect_bin] > 100 * np.median(frame)


def test_stft_errors():
    with pytest.raises(EmptySignal):
        stft(AudioClip(samples=np.zeros(0), sample_rate=FS))
    with pytest.raises(Exception):
        stft(AudioClip(samples=np.zeros(100), sample_rate=FS), window_len=4096)


def test_stft_parseval_hann_75_overlap():
    # With hop = N/4 the squared Hann window tiles to a constant 1.5, so the
    # spectrogram total is N * 1.5 * signal energy away from the edges.
    rng = np.random.default_rng(7)
    n, hop = 512, 128
    x = rng.normal(0, 0.3, 200 * n)
    clip = AudioClip(samples=np.clip(x, -1, 1), sample_rate=FS)
    _, spec = stft(clip, window_len=n, hop=hop)
    total = spec.magnitudes_sq.sum()
    expected = n * 1.5 * np.sum(clip.samples**2)
    assert total == pytest.approx(expected, rel=0.01)


def test_synthesize_single_note_dominant_bin():
    clip = synthesize_melody(Melody(notes=(1,), tempo_bpm=120.0))
    _, spec = stft(clip)
    peak_bin = spec.magnitudes_sq[1].argmax()
    assert peak_bin == 89


def test_synthesize_zero_amplitude_is_silent():
    clip = synthesize_melody(parse_hex_melody("15"), Timbre(amplitude=0.0))
    assert np.all(clip.samples == 0)


def test_synthesize_onset_spacing_60bpm():
    melody = Melody(notes=(1, 5), tempo_bpm=60.0)
    clip = synthesize_melody(melody, Timbre(noise_rms=0.0))
    # second onset lands exactly at 1.0 s: first sample where the G6 partial
    # appears; check signal discontinuity in derivative energy
    assert clip.duration_s > 1.0
    one_s = FS
    # amplitude at 1.0 s jumps by the fresh strike
    before = np.abs(clip.samples[one_s - 200 : one_s]).max()
    after = np.abs(clip.samples[one_s : one_s + 200]).max()
    assert after > before


def test_synthesize_peak_normalized():
    clip = synthesize_melody(parse_hex_melody("11111111"), Timbre(amplitude=5.0))
    assert np.max(np.abs(clip.samples)) <= 1.0 + 1e-12


def test_detect_silence_is_empty():
    clip = AudioClip(samples=np.zeros(FS // 2), sample_rate=FS)
    assert detect_notes(clip) == []


def test_detect_empty_raises():
    with pytest.raises(EmptySignal):
        detect_notes(AudioClip(samples=np.zeros(0), sample_rate=FS))


def test_detect_single_note_near_zero_onset():
    clip = synthesize_melody(parse_hex_melody("1", tempo_bpm=120.0))
    events = detect_notes(clip)
    assert [n for n, _ in events] == [1]
    assert events[0][1] == pytest.approx(0.0, abs=0.012)


def test_detect_twinkle_opening_roundtrip():
    melody = parse_hex_melody("1155665", tempo_bpm=120.0)
    clip = synthesize_melody(melody)
    events = detect_notes(clip)
    assert [n for n, _ in events] == [1, 1, 5, 5, 6, 6, 5]
    half_hop = 512 / FS
    for (_, onset), expected in zip(events, melody.onset_times()):
        assert onset == pytest.approx(expected, abs=half_hop)


def test_detect_all_eleven_bars_clean():
    for n in range(1, 12):
        clip = synthesize_melody(Melody(notes=(n,), tempo_bpm=100.0))
        events = detect_notes(clip)
        assert [x for x, _ in events] == [n]


def test_detect_deterministic():
    melody = parse_hex_melody("18b3", tempo_bpm=100.0)
    clip = synthesize_melody(melody, Timbre(noise_rms=0.01, seed=5))
    assert detect_notes(clip) == detect_notes(clip)


def test_detect_roundtrip_random_melodies_with_noise():
    rng = np.random.default_rng(42)
    for _ in range(25):
        length = rng.integers(1, 17)
        notes = tuple(int(x) for x in rng.integers(1, 12, length))
        bpm = float(rng.uniform(60, 140))
        melody = Melody(notes=notes, tempo_bpm=bpm)
        # SNR >= 20 dB relative to typical struck amplitude
        clip = synthesize_melody(melody, Timbre(noise_rms=0.02, seed=int(rng.integers(1 << 30))))
        events = detect_notes(clip)
        assert tuple(n for n, _ in events) == notes, f"melody={notes} bpm={bpm:.1f}"
        onsets = [t for _, t in events]
        assert all(b > a for a, b in zip(onsets, onsets[1:]))


def test_wav_roundtrip_within_one_lsb(tmp_path):
    clip = sine_clip(440.0, duration_s=0.25, amp=0.9)
    path = tmp_path / "sine.wav"
    write_wav(path, clip)
    back = read_wav(path)
    assert back.sample_rate == FS
    assert np.max(np.abs(back.samples - clip.samples)) <= 1.0 / 32768


def test_wav_channel_selection(tmp_path):
    import wave

    frames = np.zeros((1000, 4), dtype="<i2")
    for ch in range(4):
        frames[:, ch] = (ch + 1) * 1000
    path = tmp_path / "quad.wav"
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(4)
        fh.setsampwidth(2)
        fh.setframerate(FS)
        fh.writeframes(frames.tobytes())
    clip = read_wav(path, channel=2)
    assert np.all(clip.samples == 3000 / 32768)


def test_wav_truncated_header(tmp_path):
    path = tmp_path / "broken.wav"
    path.write_bytes(b"RIFF\x00\x00")
    with pytest.raises(MalformedHeader):
        read_wav(path)


def test_wav_missing_file(tmp_path):
    with pytest.raises(MalformedHeader):
        read_wav(tmp_path / "nope.wav")


def test_wav_unsupported_width(tmp_path):
    import wave

    path = tmp_path / "w8.wav"
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(1)
        fh.setframerate(FS)
        fh.writeframes(b"\x00" * 100)
    with pytest.raises(UnsupportedEncoding):
        read_wav(path)


def test_detect_rejects_out_of_band_tone():
    # a loud 500 Hz tone sits outside the detection band entirely
    clip = sine_clip(500.0, duration_s=0.5)
    assert detect_notes(clip) == []


def test_detection_config_validation():
    with pytest.raises(ValueError):
        DetectionConfig(band_hz=(2000.0, 1000.0))
    with pytest.raises(ValueError):
        DetectionConfig(energy_floor=0.0)


def test_note_frequencies_inside_detection_band():
    cfg = DetectionConfig()
    for n in range(1, 12):
        assert cfg.band_hz[0] < note_frequency(n) < cfg.band_hz[1]
