"""Audio and video frontends: spectrogram features, patches, tubelets, lip crops.

Core routines accept arrays with arbitrary leading batch axes so the
estimators can featurize a whole corpus in one call; the dataclass wrappers
carry the single-clip contracts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
WIN = 400
HOP = 160
NFFT = 512
LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if np.asarray(self.samples).size == 0:
            raise ValueError("waveform is empty")


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray  # (bins, frames)

    @property
    def bins(self) -> int:
        return self.values.shape[-2]

    @property
    def frames(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True)
class FrameStack:
    frames: np.ndarray  # (T, H, W)

    def __post_init__(self):
        if np.ndim(self.frames) != 3 or len(self.frames) < 1:
            raise ValueError("frame stack must be (T, H, W) with T >= 1")


@dataclass(frozen=True)
class PatchSequence:
    tokens: np.ndarray  # (N, D)
    grid: tuple


def _samples(w) -> np.ndarray:
    return np.asarray(w.samples if isinstance(w, Waveform) else w, dtype=np.float64)


def n_frames(length: int, win: int = WIN, hop: int = HOP) -> int:
    return (length - win) // hop + 1


def stft_power(samples: np.ndarray, win: int = WIN, hop: int = HOP, nfft: int = NFFT) -> np.ndarray:
    """Hann-windowed power spectrum, shape ``(..., nfft//2 + 1, frames)``."""
    samples = np.asarray(samples, dtype=np.float64)
    if win > nfft:
        raise ValueError("window longer than nfft")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    length = samples.shape[-1]
    if length < win:
        raise ValueError(f"signal of {length} samples is shorter than one window ({win})")
    frames = np.lib.stride_tricks.sliding_window_view(samples, win, axis=-1)[..., ::hop, :]
    spec = np.fft.rfft(frames * np.hanning(win), n=nfft, axis=-1)
    power = spec.real**2 + spec.imag**2
    return np.swapaxes(power, -1, -2)


def stft_magnitude(w, win: int = WIN, hop: int = HOP, nfft: int = NFFT) -> Spectrogram:
    return Spectrogram(np.sqrt(stft_power(_samples(w), win, hop, nfft)))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, nfft: int = NFFT, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular HTK-mel filters over 0..sr/2, shape ``(n_mels, nfft//2 + 1)``."""
    if n_mels < 2:
        raise ValueError("need at least 2 mel bands")
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))
    freqs = np.linspace(0.0, sample_rate / 2, nfft // 2 + 1)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_centers(n_mels: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))[1:-1]


def log_mel(samples, n_mels: int, win: int = WIN, hop: int = HOP, nfft: int = NFFT,
            floor: float = LOG_FLOOR, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    power = stft_power(samples, win, hop, nfft)
    energy = mel_filterbank(n_mels, nfft, sample_rate) @ power
    return np.log(np.maximum(energy, floor))


def mel_spectrogram(w, n_mels: int = 64, win: int = WIN, hop: int = HOP, nfft: int = NFFT,
                    floor: float = LOG_FLOOR) -> Spectrogram:
    sr = w.sample_rate if isinstance(w, Waveform) else SAMPLE_RATE
    return Spectrogram(log_mel(_samples(w), n_mels, win, hop, nfft, floor, sr))


def fit_frames(values: np.ndarray, target_frames: int) -> np.ndarray:
    """Truncate or extend the last axis to ``target_frames`` by repeating the final frame."""
    if target_frames < 1:
        raise ValueError("target_frames must be >= 1")
    have = values.shape[-1]
    if have >= target_frames:
        return values[..., :target_frames]
    pad = [(0, 0)] * (values.ndim - 1) + [(0, target_frames - have)]
    return np.pad(values, pad, mode="edge")


def log_filterbank(w, n_filters: int = 26, win: int = WIN, hop: int = HOP, nfft: int = NFFT,
                   target_frames: int = 64, floor: float = LOG_FLOOR) -> Spectrogram:
    if target_frames < 1:
        raise ValueError("target_frames must be >= 1")
    spec = mel_spectrogram(w, n_filters, win, hop, nfft, floor)
    return Spectrogram(fit_frames(spec.values, target_frames))


def patch_count(length: int, patch: int, stride: int) -> int:
    return (length - patch) // stride + 1


def patchify_2d_array(values: np.ndarray, patch: int = 16, stride: int = 10) -> np.ndarray:
    """``(..., rows, cols)`` -> ``(..., n_patches, patch*patch)``, row-major patch order."""
    rows, cols = values.shape[-2:]
    if rows < patch or cols < patch:
        raise ValueError(f"{rows}x{cols} input is smaller than one {patch}x{patch} patch")
    win = np.lib.stride_tricks.sliding_window_view(values, (patch, patch), axis=(-2, -1))
    win = win[..., ::stride, ::stride, :, :]
    lead = values.shape[:-2]
    nr, nc = win.shape[-4], win.shape[-3]
    return win.reshape(lead + (nr * nc, patch * patch))


def patchify_2d(s: Spectrogram, patch: int = 16, stride: int = 10) -> PatchSequence:
    values = s.values
    grid = (patch_count(values.shape[0], patch, stride), patch_count(values.shape[1], patch, stride))
    return PatchSequence(patchify_2d_array(values, patch, stride), grid)


def tubelet_array(frames: np.ndarray, segment_len: int = 4, tubelet=(4, 8, 8)) -> np.ndarray:
    """``(..., T, H, W)`` -> ``(..., segments, tokens_per_segment, t*h*w)``."""
    t, h, w = tubelet
    T, H, W = frames.shape[-3:]
    if T % segment_len:
        raise ValueError(f"{T} frames not divisible into segments of {segment_len}")
    if segment_len % t:
        raise ValueError(f"segment length {segment_len} not divisible by tubelet depth {t}")
    if H % h or W % w:
        raise ValueError(f"{H}x{W} frames not divisible by {h}x{w} tubelets")
    lead = frames.shape[:-3]
    nl = len(lead)
    x = frames.reshape(lead + (T // segment_len, segment_len // t, t, H // h, h, W // w, w))
    # (..., seg, nt, t, nh, h, nw, w) -> (..., seg, nt, nh, nw, t, h, w)
    order = tuple(range(nl)) + tuple(nl + i for i in (0, 1, 3, 5, 2, 4, 6))
    x = x.transpose(order)
    per_seg = (segment_len // t) * (H // h) * (W // w)
    return x.reshape(lead + (T // segment_len, per_seg, t * h * w))


def tubelet_patchify(v: FrameStack, segment_len: int = 4, tubelet=(4, 8, 8)) -> list:
    arr = tubelet_array(np.asarray(v.frames, dtype=np.float64), segment_len, tubelet)
    t, h, w = tubelet
    H, W = v.frames.shape[1:]
    grid = (segment_len // t, H // h, W // w)
    return [PatchSequence(seg, grid) for seg in arr]


def crop_lip(v: FrameStack, box) -> FrameStack:
    top, left, height, width = (int(b) for b in box)
    _, H, W = v.frames.shape
    if top < 0 or left < 0 or height < 1 or width < 1 or top + height > H or left + width > W:
        raise ValueError(f"box {tuple(box)} outside {H}x{W} frames")
    return FrameStack(np.array(v.frames[:, top:top + height, left:left + width]))


def stack_audio_array(fb: np.ndarray, video_frames: int) -> np.ndarray:
    """``(..., bins, 4*T)`` -> ``(..., T, 4*bins)``; each row holds 4 consecutive audio frames."""
    bins, frames = fb.shape[-2:]
    if frames % video_frames or frames // video_frames != 4:
        raise ValueError(f"{frames} audio frames do not align with {video_frames} video frames at 4:1")
    lead = fb.shape[:-2]
    x = np.swapaxes(fb, -1, -2).reshape(lead + (video_frames, 4 * bins))
    return x


def stack_audio_frames(fb: Spectrogram, video_frames: int) -> np.ndarray:
    return stack_audio_array(fb.values, video_frames)
