"""Complex-Morlet CWT and the fixed wavelet feature layout for EDA segments.

The wavelet is psi(t) = (pi*f_b)^(-1/2) * exp(2j pi f_c t) * exp(-t^2/f_b);
W(a, b) = a^(-1/2) * sum_n x[n] psi*((n - b) / a), evaluated by FFT
convolution per scale.  Pseudo-frequency of scale a is f_c * fs / a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

EDA_SAMPLE_RATE = 32
MIN_SIGNAL_LEN = 64

DEFAULT_FC = 1.0
DEFAULT_FB = 1.0
N_SCALES = 24
N_BANDS = 6
N_TIME_CELLS = 4
# requested analysis band; the upper edge is capped below Nyquist
BAND_HZ = (0.5, 50.0)

FEATURE_LEN = N_BANDS * N_TIME_CELLS * 3 + 3  # 75


class SignalTooShort(ValueError):
    pass


@dataclass(frozen=True)
class Scalogram:
    coefficients: np.ndarray  # complex, [scales x time]
    scales: np.ndarray
    pseudo_freqs_hz: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.abs(self.coefficients)


def band_limits_hz(sample_rate: float = EDA_SAMPLE_RATE) -> tuple[float, float]:
    """Analysis band clipped to Nyquist; 32 Hz EDA caps at 15.9 Hz."""
    nyquist = sample_rate / 2.0
    return BAND_HZ[0], min(BAND_HZ[1], nyquist - 0.1)


def default_scales(sample_rate: float = EDA_SAMPLE_RATE, f_c: float = DEFAULT_FC,
                   n_scales: int = N_SCALES) -> np.ndarray:
    lo, hi = band_limits_hz(sample_rate)
    freqs = np.geomspace(hi, lo, n_scales)
    return f_c * sample_rate / freqs  # ascending scales, descending frequency


def cwt(signal, f_c: float = DEFAULT_FC, f_b: float = DEFAULT_FB,
        scales=None, sample_rate: float = EDA_SAMPLE_RATE) -> Scalogram:
    x = np.asarray(signal, dtype=float)
    if len(x) < MIN_SIGNAL_LEN:
        raise SignalTooShort(f"need at least {MIN_SIGNAL_LEN} samples, got {len(x)}")
    if scales is None:
        scales = default_scales(sample_rate, f_c)
    scales = np.asarray(scales, dtype=float)
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")

    norm = (math.pi * f_b) ** -0.5
    rows = []
    for a in scales:
        half = max(1, int(math.ceil(4.0 * a * math.sqrt(f_b))))
        t = np.arange(-half, half + 1) / a
        kernel = norm * np.exp(2j * math.pi * f_c * t) * np.exp(-(t**2) / f_b) / math.sqrt(a)
        rows.append(fftconvolve(x, kernel, mode="same"))
    coeff = np.array(rows)
    return Scalogram(
        coefficients=coeff,
        scales=scales,
        pseudo_freqs_hz=f_c * sample_rate / scales,
    )


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    segment_id: str = ""
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")


def extract_features(segment, segment_id: str = "", label: str = "",
                     sample_rate: float = EDA_SAMPLE_RATE,
                     f_c: float = DEFAULT_FC, f_b: float = DEFAULT_FB) -> FeatureVector:
    """75-dim wavelet feature vector for one conversation segment.

    Scalogram magnitude over 24 log-spaced scales, partitioned into 6
    log-frequency bands x 4 equal time cells with {mean, std, max} per cell,
    plus total energy, tonic mean, and phasic (mean-removed) std.  Purely a
    function of the samples and the extraction config.
    """
    x = np.asarray(segment, dtype=float)
    scalogram = cwt(x, f_c=f_c, f_b=f_b, sample_rate=sample_rate)
    mag = scalogram.magnitude()

    per_band = N_SCALES // N_BANDS
    cells = np.array_split(np.arange(mag.shape[1]), N_TIME_CELLS)
    values = []
    for band in range(N_BANDS):
        band_mag = mag[band * per_band : (band + 1) * per_band]
        for cell in cells:
            chunk = band_mag[:, cell]
            values.extend([chunk.mean(), chunk.std(), chunk.max()])
    values.append(float(np.sum(x**2)))  # total energy
    values.append(float(np.mean(x)))  # tonic mean
    values.append(float(np.std(x)))  # phasic std
    return FeatureVector(values=np.array(values), segment_id=segment_id, label=label)
