"""PCM16 WAV and binary PGM (P5) readers/writers."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE


def quantize_audio(samples: np.ndarray) -> np.ndarray:
    """Snap samples to the PCM16 grid so a write/read cycle is lossless."""
    ints = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767)
    return ints / 32768.0


def quantize_frames(frames: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(frames) * 255.0), 0, 255) / 255.0


def write_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    ints = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(ints.tobytes())


def read_wav(path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected mono PCM16")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, rate


def write_pgm(path, frame: np.ndarray) -> None:
    pixels = np.clip(np.round(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while not blob[end:end + 1].isspace():
            end += 1
        fields.append(blob[pos:end])
        pos = end
    pos += 1  # single whitespace before raster
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise ValueError(f"{path}: maxval {maxval} unsupported")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / 255.0


def frame_name(i: int) -> str:
    return f"frame_{i:03d}.pgm"


def write_frames(directory, frames: np.ndarray) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_pgm(directory / frame_name(i), frame)


def read_frames(directory) -> np.ndarray:
    paths = sorted(Path(directory).glob("frame_*.pgm"))
    if not paths:
        raise FileNotFoundError(f"no frame_*.pgm files in {directory}")
    return np.stack([read_pgm(p) for p in paths])
