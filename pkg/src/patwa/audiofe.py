"""Audio front end: resampling to 16 kHz and Whisper-style log-mel features.

Feature constants follow the convention of the Whisper model family (400-point
Hann STFT, hop 160, 80 HTK-scale mel bands up to 8 kHz, log10 floor 1e-10,
8-decade dynamic range clamp, ``(x + 4) / 4`` scaling).

Feature files (``.lmf``) are little-endian::

    offset  size  field
    0       4     magic b"LMEL"
    4       2     format version (1)
    6       2     reserved (0)
    8       4     frames       (uint32)
    12      4     n_mels       (uint32)
    16      4     hop          (uint32, samples)
    20      4     sample_rate  (uint32, Hz)
    24      ...   frames * n_mels float32, row-major (frame-major)
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import kaiser_beta, kaiserord, upfirdn

TARGET_RATE = 16_000
CLIP_SECONDS = 30.0


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("audio buffer must be mono (1-D)")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio buffer contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class FrontEndConfig:
    sample_rate: int = TARGET_RATE
    fft_size: int = 400
    hop: int = 160
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    dynamic_range: float = 8.0  # log10 units below the global max

    def __post_init__(self):
        if self.fft_size < self.hop:
            raise ValueError("fft_size must be >= hop")
        if self.fmax > self.sample_rate / 2:
            raise ValueError("fmax above Nyquist")
        if not 0 <= self.fmin < self.fmax:
            raise ValueError("need 0 <= fmin < fmax")

    @property
    def normalized_floor(self) -> float:
        return (math.log10(self.log_floor) + 4.0) / 4.0


@dataclass(frozen=True, eq=False)
class LogMelFeature:
    values: np.ndarray  # (frames, n_mels) float32
    frame_hop_s: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


# -- resampling ---------------------------------------------------------------

STOPBAND_DB = 80.0
TRANSITION = 0.1  # fraction of the output band given to the transition


def design_lowpass(up: int, down: int, stopband_db: float = STOPBAND_DB, transition: float = TRANSITION) -> np.ndarray:
    """Kaiser-windowed sinc for rational resampling by ``up/down``.

    Runs at the upsampled rate. The stopband begins at the lower of the two
    Nyquist frequencies; passband gain is ``up`` so amplitude is preserved.
    """
    band = 1.0 / max(up, down)  # lower Nyquist, as a fraction of the upsampled Nyquist
    width = transition * band
    numtaps, _ = kaiserord(stopband_db, width)
    numtaps |= 1  # odd length keeps the delay an integer
    cutoff = band - width / 2
    n = np.arange(numtaps) - (numtaps - 1) / 2
    h = cutoff * np.sinc(cutoff * n) * np.kaiser(numtaps, kaiser_beta(stopband_db))
    return h * (up / h.sum())


def resample(b: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited rational resampling.

    Output length is ``round(len * target / source)``; equal rates return an
    exact copy.
    """
    if target_rate <= 0:
        raise ValueError("target rate must be positive")
    n = len(b)
    if n == 0:
        raise ValueError("empty buffer")
    if target_rate == b.sample_rate_hz:
        return AudioBuffer(b.samples.copy(), b.sample_rate_hz)

    g = math.gcd(target_rate, b.sample_rate_hz)
    up, down = target_rate // g, b.sample_rate_hz // g
    out_len = (2 * n * up + down) // (2 * down)

    h = design_lowpass(up, down)
    half = (len(h) - 1) // 2
    # pre-pad the filter so its group delay lands on an output sample
    pre = (-half) % down
    h = np.concatenate([np.zeros(pre), h])
    skip = (half + pre) // down
    y = upfirdn(h, b.samples, up, down)[skip : skip + out_len]
    if len(y) < out_len:
        y = np.concatenate([y, np.zeros(out_len - len(y))])
    return AudioBuffer(y, target_rate)


def pad_or_trim(b: AudioBuffer, target_s: float = CLIP_SECONDS) -> AudioBuffer:
    n = int(round(target_s * b.sample_rate_hz))
    x = b.samples
    if len(x) >= n:
        return AudioBuffer(x[:n].copy(), b.sample_rate_hz)
    return AudioBuffer(np.concatenate([x, np.zeros(n - len(x))]), b.sample_rate_hz)


# -- log-mel ------------------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg: FrontEndConfig) -> np.ndarray:
    """``n_mels + 2`` HTK-mel-equispaced frequencies; band ``k`` peaks at ``edges[k + 1]``."""
    return mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))


def mel_filterbank(cfg: FrontEndConfig) -> np.ndarray:
    """Triangular filters (n_mels, fft_size // 2 + 1), unit peak, no area normalization."""
    edges = mel_band_edges(cfg)
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def n_frames(n_samples: int, cfg: FrontEndConfig) -> int:
    return -(-n_samples // cfg.hop)


def _hann(n: int) -> np.ndarray:
    # periodic form, as used for STFT analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def power_spectrogram(x: np.ndarray, cfg: FrontEndConfig) -> np.ndarray:
    """|STFT|^2 of reflect-padded frames, shape (ceil(len / hop), fft_size // 2 + 1)."""
    pad = cfg.fft_size // 2
    xp = np.pad(x, pad, mode="reflect") if len(x) > 1 else np.pad(x, pad, mode="edge")
    frames = np.lib.stride_tricks.sliding_window_view(xp, cfg.fft_size)[:: cfg.hop][: n_frames(len(x), cfg)]
    spec = np.fft.rfft(frames * _hann(cfg.fft_size), axis=-1)
    return spec.real**2 + spec.imag**2


def mel_power(b: AudioBuffer, cfg: FrontEndConfig = FrontEndConfig()) -> np.ndarray:
    """Mel-band power before any log compression, shape (frames, n_mels)."""
    if b.sample_rate_hz != cfg.sample_rate:
        raise ValueError(f"expected {cfg.sample_rate} Hz audio, got {b.sample_rate_hz} Hz")
    if len(b) == 0:
        raise ValueError("empty buffer")
    return power_spectrogram(b.samples, cfg) @ mel_filterbank(cfg).T


def log_mel(b: AudioBuffer, cfg: FrontEndConfig = FrontEndConfig()) -> LogMelFeature:
    logspec = np.log10(np.maximum(mel_power(b, cfg), cfg.log_floor))
    logspec = np.maximum(logspec, logspec.max() - cfg.dynamic_range)
    values = ((logspec + 4.0) / 4.0).astype(np.float32)
    return LogMelFeature(values, cfg.hop / cfg.sample_rate)


def features_for_clip(b: AudioBuffer, cfg: FrontEndConfig = FrontEndConfig(), clip_s: float = CLIP_SECONDS) -> LogMelFeature:
    """Resample to the front-end rate, fix the length to ``clip_s`` and extract log-mel."""
    return log_mel(pad_or_trim(resample(b, cfg.sample_rate), clip_s), cfg)


# -- I/O ----------------------------------------------------------------------

_MAGIC = b"LMEL"
_HEADER = struct.Struct("<4sHHIIII")


def write_features(feat: LogMelFeature, path, sample_rate: int = TARGET_RATE) -> None:
    frames, n_mels = feat.values.shape
    hop = int(round(feat.frame_hop_s * sample_rate))
    payload = _HEADER.pack(_MAGIC, 1, 0, frames, n_mels, hop, sample_rate)
    payload += np.ascontiguousarray(feat.values, dtype="<f4").tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    tmp.write_bytes(payload)
    tmp.replace(path)


def read_features(path) -> LogMelFeature:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated feature file")
    magic, version, _, frames, n_mels, hop, rate = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not a version-1 LMEL feature file")
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    if values.size != frames * n_mels:
        raise ValueError(f"{path}: expected {frames * n_mels} values, found {values.size}")
    return LogMelFeature(values.reshape(frames, n_mels).astype(np.float32), hop / rate)


def read_wav(path) -> AudioBuffer:
    """Read a PCM (8/16/32-bit int) or float WAV; multichannel input is averaged to mono."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError, EOFError) as e:
        raise ValueError(f"{path}: undecodable audio ({e})") from None
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.integer):
        x = data.astype(np.float64) / float(-np.iinfo(data.dtype).min)
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioBuffer(x, int(rate))


def write_wav(b: AudioBuffer, path, dtype: str = "int16") -> None:
    if dtype == "int16":
        data = np.clip(np.round(b.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif dtype == "float32":
        data = b.samples.astype(np.float32)
    else:
        raise ValueError(f"unsupported WAV sample type {dtype!r}")
    wavfile.write(path, b.sample_rate_hz, data)
