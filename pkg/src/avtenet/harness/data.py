from __future__ import annotations

import numpy as np

from ..synthdata import Manifest
from ..validation import Clips


def load_clips(manifest: Manifest, records) -> Clips:
    samples = [manifest.load(r) for r in records]
    return Clips(np.stack([s.waveform for s in samples]), np.stack([s.frames for s in samples]),
                 np.array([s.lip_box for s in samples]), tuple(s.id for s in samples))


def featurize_records(estimator, manifest: Manifest, records, chunk: int = 256) -> tuple:
    """Featurize records chunk by chunk so raw media never sits in memory all at once."""
    parts = []
    for start in range(0, len(records), chunk):
        parts.append(estimator.featurize(load_clips(manifest, records[start:start + chunk])))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))


def iter_clip_chunks(manifest: Manifest, records, chunk: int = 256):
    for start in range(0, len(records), chunk):
        yield load_clips(manifest, records[start:start + chunk])


def map_clip_chunks(fn, manifest: Manifest, records, jobs: int = 1, chunk: int = 256) -> list:
    """``[fn(clips) for clips in chunks]``, optionally on ``jobs`` threads; order is kept."""
    if jobs <= 1:
        return [fn(clips) for clips in iter_clip_chunks(manifest, records, chunk)]
    from concurrent.futures import ThreadPoolExecutor

    starts = range(0, len(records), chunk)
    with ThreadPoolExecutor(jobs) as pool:
        return list(pool.map(lambda s: fn(load_clips(manifest, records[s:s + chunk])), starts))
