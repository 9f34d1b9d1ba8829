"""Input validation for the estimators.

Estimators take ``X`` as a :class:`Clips` bundle (or anything ``check_clips``
can coerce: a dict with ``audio``/``video``/``lip_box`` keys, or a list of
``AVSample``) and ``y`` as 0/1 labels with 1 = fake.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLIP_SAMPLES = 10240
VIDEO_SHAPE = (16, 32, 32)


@dataclass
class Clips:
    audio: np.ndarray  # (n, samples)
    video: np.ndarray  # (n, T, H, W)
    lip_box: np.ndarray  # (n, 4) top, left, height, width
    ids: tuple = ()

    def __len__(self):
        return len(self.audio)

    def take(self, index) -> "Clips":
        index = np.asarray(index)
        ids = tuple(self.ids[i] for i in index) if self.ids else ()
        return Clips(self.audio[index], self.video[index], self.lip_box[index], ids)


def check_clips(X, audio_len: int = CLIP_SAMPLES, video_shape=VIDEO_SHAPE) -> Clips:
    if isinstance(X, Clips):
        clips = X
    elif isinstance(X, dict):
        clips = Clips(np.asarray(X["audio"]), np.asarray(X["video"]), np.asarray(X["lip_box"]),
                      tuple(X.get("ids", ())))
    elif isinstance(X, (list, tuple)) and X and hasattr(X[0], "waveform"):
        clips = Clips(np.stack([s.waveform for s in X]), np.stack([s.frames for s in X]),
                      np.array([s.lip_box for s in X]), tuple(s.id for s in X))
    else:
        raise TypeError(f"cannot interpret {type(X).__name__} as clips")
    audio = np.asarray(clips.audio, dtype=np.float64)
    video = np.asarray(clips.video, dtype=np.float64)
    lip_box = np.asarray(clips.lip_box, dtype=np.int64)
    n = len(audio)
    if n == 0:
        raise ValueError("no clips given")
    if audio.shape != (n, audio_len):
        raise ValueError(f"audio must be (n, {audio_len}) at 16 kHz, got {audio.shape}")
    if video.shape != (n,) + tuple(video_shape):
        raise ValueError(f"video must be (n, {', '.join(map(str, video_shape))}), got {video.shape}")
    if lip_box.shape != (n, 4):
        raise ValueError(f"lip_box must be (n, 4), got {lip_box.shape}")
    if not (np.all(np.isfinite(audio)) and np.all(np.isfinite(video))):
        raise ValueError("clips contain non-finite values")
    return Clips(audio, video, lip_box, clips.ids)


def check_fake_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 (real) or 1 (fake)")
    return y.astype(np.int64)
