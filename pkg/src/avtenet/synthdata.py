"""Deterministic synthetic talking-head corpus with four manipulation categories.

A real clip is a subject-specific harmonic voice, amplitude-modulated by a
smooth syllable envelope, paired with a face-like blob whose mouth opens in
phase with that envelope. Audio manipulation injects an inharmonic partial and
re-phases the envelope; visual manipulation gives the mouth an independent
envelope and swaps the smooth skin texture for a pixel-level grain. Both
streams carry additive noise (sigma 0.01) and are stored quantized, so media
written to disk re-ingests bit-exactly.

Seeding: each sample's seed is ``splitmix64(global_seed * 2**20 + index)``;
scene, manipulation and noise draws come from separate child streams of that
seed, so a manipulated sample and its clean counterpart (same seed) share
every draw except the manipulated stream.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import mediaio
from .dsp import SAMPLE_RATE

CLIP_SAMPLES = 10240  # 0.64 s at 16 kHz
N_FRAMES = 16  # 25 fps
FRAME_SIZE = 32
LIP_SIZE = 16
NOISE_STD = 0.01

MASK64 = (1 << 64) - 1


class Category(str, Enum):
    RvRa = "RvRa"
    RvFa = "RvFa"
    FvRa = "FvRa"
    FvFa = "FvFa"

    @property
    def visual_fake(self) -> bool:
        return self.value.startswith("Fv")

    @property
    def audio_fake(self) -> bool:
        return self.value.endswith("Fa")

    @classmethod
    def from_flags(cls, visual_fake: bool, audio_fake: bool) -> "Category":
        return {(0, 0): cls.RvRa, (0, 1): cls.RvFa, (1, 0): cls.FvRa, (1, 1): cls.FvFa}[
            (int(visual_fake), int(audio_fake))]


class NetworkKind(str, Enum):
    VN = "VN"
    AN = "AN"
    AVN = "AVN"


# fake categories per network; everything else is that network's real class
TRAINING_FAKES = {
    NetworkKind.VN: (Category.FvFa, Category.FvRa),
    NetworkKind.AN: (Category.RvFa, Category.FvFa),
    NetworkKind.AVN: (Category.FvFa, Category.FvRa, Category.RvFa),
}

# test-set manipulation techniques and the category each one produces
TECHNIQUES = {
    "faceswap": Category.FvRa,
    "fsgan": Category.FvRa,
    "rtvc": Category.RvFa,
    "wav2lip": Category.FvFa,
    "faceswap-wav2lip": Category.FvFa,
    "fsgan-wav2lip": Category.FvFa,
}

SINGLE_SUBSETS = {
    "visual-only": Category.FvRa,
    "audio-only": Category.RvFa,
    "both": Category.FvFa,
}
SUBSETS = ("visual-only", "audio-only", "both", "mixed-I", "mixed-II", "full")

# stored per-stream labels use 1 for real
LABEL_FAKE, LABEL_REAL = 0, 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def sample_seed(global_seed: int, index: int) -> int:
    return splitmix64(((global_seed & MASK64) * (1 << 20) + index) & MASK64)


def subject_seed(global_seed: int, subject_id: int) -> int:
    return splitmix64(splitmix64(global_seed & MASK64) ^ (subject_id + 1))


@dataclass
class AVSample:
    id: str
    subject_id: int
    waveform: np.ndarray
    frames: np.ndarray
    category: Category
    lip_box: tuple
    seed: int

    @property
    def visual_label(self) -> int:
        return LABEL_FAKE if self.category.visual_fake else LABEL_REAL

    @property
    def audio_label(self) -> int:
        return LABEL_FAKE if self.category.audio_fake else LABEL_REAL


@dataclass(frozen=True)
class Subject:
    f0: float
    harmonics: np.ndarray
    env_rate: float
    face_center: tuple
    lip_box: tuple
    skin: np.ndarray
    brightness: float


def make_subject(global_seed: int, subject_id: int) -> Subject:
    rng = np.random.default_rng(subject_seed(global_seed, subject_id))
    f0 = rng.uniform(110.0, 260.0)
    harmonics = rng.uniform(0.3, 1.0, size=5) / np.arange(1, 6)
    env_rate = rng.uniform(3.0, 6.0)
    cy, cx = rng.integers(-1, 2), rng.integers(-1, 2)
    lip_box = (int(15 + cy), int(8 + cx), LIP_SIZE, LIP_SIZE)
    coarse = rng.normal(0.0, 1.0, size=(5, 5))
    yy = np.linspace(0, 4, FRAME_SIZE)
    # bilinear upsampling of a coarse field gives a smooth skin texture
    rows = np.array([np.interp(yy, np.arange(5), coarse[:, j]) for j in range(5)]).T
    skin = np.array([np.interp(yy, np.arange(5), r) for r in rows])
    skin = 0.04 * skin / (np.abs(skin).max() + 1e-12)
    return Subject(f0, harmonics, env_rate, (16.0 + cy, 16.0 + cx), lip_box, skin,
                   rng.uniform(0.55, 0.7))


def _envelope(t: np.ndarray, rate: float, phase: float) -> np.ndarray:
    return 0.5 + 0.5 * np.sin(2 * np.pi * rate * t + phase)


def _render_audio(subject: Subject, phases: np.ndarray, env_phase: float) -> np.ndarray:
    t = np.arange(CLIP_SAMPLES) / SAMPLE_RATE
    voice = np.zeros_like(t)
    for h, (amp, ph) in enumerate(zip(subject.harmonics, phases), start=1):
        voice += amp * np.sin(2 * np.pi * h * subject.f0 * t + ph)
    voice *= 0.45 / subject.harmonics.sum()
    return voice * (0.2 + 0.8 * _envelope(t, subject.env_rate, env_phase))


def _render_frames(subject: Subject, mouth: np.ndarray, texture: np.ndarray) -> np.ndarray:
    yy, xx = np.mgrid[0:FRAME_SIZE, 0:FRAME_SIZE].astype(np.float64)
    cy, cx = subject.face_center
    face = ((yy - cy) / 13.0) ** 2 + ((xx - cx) / 10.0) ** 2 <= 1.0
    base = np.where(face, subject.brightness, 0.15) + np.where(face, texture, 0.0)
    for ex in (cx - 4.5, cx + 4.5):
        eye = ((yy - (cy - 5)) / 1.5) ** 2 + ((xx - ex) / 2.0) ** 2 <= 1.0
        base = np.where(eye, 0.1, base)
    top, left, h, w = subject.lip_box
    my, mx = top + h / 2.0, left + w / 2.0
    frames = np.empty((N_FRAMES, FRAME_SIZE, FRAME_SIZE))
    for i, openness in enumerate(mouth):
        half_h = 0.8 + 4.5 * openness
        mouth_px = ((yy - my) / half_h) ** 2 + ((xx - mx) / 5.5) ** 2 <= 1.0
        frames[i] = np.where(mouth_px, 0.05 + 0.1 * (1 - openness), base)
    return frames


def generate_sample(global_seed: int, index: int, subject_id: int, category,
                    sample_id: str | None = None) -> AVSample:
    category = Category(category)
    seed = sample_seed(global_seed, index)
    scene, audio_fake, video_fake, noise = (np.random.default_rng(s) for s in
                                            np.random.SeedSequence(seed).spawn(4))
    subject = make_subject(global_seed, subject_id)

    phases = scene.uniform(0, 2 * np.pi, size=5)
    env_phase = scene.uniform(0, 2 * np.pi)

    # manipulation draws are always consumed so streams stay aligned across categories
    partial_hz = audio_fake.uniform(2600.0, 3800.0)
    partial_amp = audio_fake.uniform(0.06, 0.1)
    partial_phase = audio_fake.uniform(0, 2 * np.pi)
    fake_env_phase = env_phase + audio_fake.uniform(0.6, 1.4) * np.pi
    lip_rate = video_fake.uniform(3.0, 8.0)
    lip_phase = video_fake.uniform(0, 2 * np.pi)
    grain_amp = video_fake.uniform(0.05, 0.08)
    audio_noise = noise.normal(0.0, NOISE_STD, size=CLIP_SAMPLES)
    video_noise = noise.normal(0.0, NOISE_STD, size=(N_FRAMES, FRAME_SIZE, FRAME_SIZE))

    if category.audio_fake:
        wav = _render_audio(subject, phases, fake_env_phase)
        t = np.arange(CLIP_SAMPLES) / SAMPLE_RATE
        wav = wav + partial_amp * np.sin(2 * np.pi * partial_hz * t + partial_phase)
    else:
        wav = _render_audio(subject, phases, env_phase)

    frame_t = np.arange(N_FRAMES) / 25.0
    if category.visual_fake:
        mouth = _envelope(frame_t, lip_rate, lip_phase)
        yy, xx = np.mgrid[0:FRAME_SIZE, 0:FRAME_SIZE]
        texture = grain_amp * np.where((yy + xx) % 2 == 0, 1.0, -1.0)
    else:
        mouth = _envelope(frame_t, subject.env_rate, env_phase)
        texture = subject.skin
    frames = _render_frames(subject, mouth, texture)

    wav = mediaio.quantize_audio(np.clip(wav + audio_noise, -1.0, 1.0))
    frames = mediaio.quantize_frames(np.clip(frames + video_noise, 0.0, 1.0))
    return AVSample(sample_id or f"s{index:05d}", subject_id, wav, frames, category,
                    subject.lip_box, seed)


# -- corpus -----------------------------------------------------------------

@dataclass
class GenerationConfig:
    train_counts: dict = field(default_factory=lambda: {c.value: 500 for c in Category})
    n_test_real: int = 60
    n_test_fake: int = 60
    n_train_subjects: int = 50
    n_test_subjects: int = 12
    global_seed: int = 42
    balance: bool = True

    def validate(self) -> None:
        for name, n in self.train_counts.items():
            Category(name)
            if n < 0:
                raise ValueError(f"negative count for {name}")
        if sum(self.train_counts.values()) == 0 and self.n_test_real + self.n_test_fake == 0:
            raise ValueError("all counts are zero")
        if self.n_test_fake % 6:
            raise ValueError("n_test_fake must be divisible by 6 (mixed subsets draw equal shares)")
        if self.n_train_subjects < 1 or self.n_test_subjects < 1:
            raise ValueError("subject pools must be non-empty")

    def to_json(self) -> dict:
        d = asdict(self)
        d["train_counts"] = {c.value: int(self.train_counts.get(c.value, 0)) for c in Category}
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_counts(spec: str) -> dict:
    """``"RvRa=10,RvFa=10"`` -> ``{"RvRa": 10, "RvFa": 10, "FvRa": 0, "FvFa": 0}``."""
    counts = {c.value: 0 for c in Category}
    for part in filter(None, (p.strip() for p in spec.split(","))):
        name, _, value = part.partition("=")
        name = name.strip()
        if name not in counts or not value.strip().lstrip("-").isdigit():
            raise ValueError(f"bad count entry {part!r}")
        counts[name] = int(value)
    return counts


@dataclass
class Record:
    id: str
    subject_id: int
    category: str
    visual_label: int
    audio_label: int
    wav_path: str
    frames_dir: str
    lip_box: list
    seed: int
    split: str
    subsets: list = field(default_factory=list)

    @property
    def cat(self) -> Category:
        return Category(self.category)

    @property
    def is_fake(self) -> bool:
        return self.cat != Category.RvRa


class Manifest:
    """Ordered sample records plus the generating config."""

    def __init__(self, records, config: GenerationConfig, root=None):
        self.records = list(records)
        self.config = config
        self.root = Path(root) if root is not None else None
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate record ids")

    @property
    def digest(self) -> str:
        return self.config.digest()

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]

    def subset(self, name: str) -> list:
        if name not in SUBSETS:
            raise KeyError(f"unknown subset {name!r}; choose from {', '.join(SUBSETS)}")
        return [r for r in self.records if name in r.subsets]

    def dumps(self) -> str:
        lines = [json.dumps({"config_digest": self.digest, "config": self.config.to_json()},
                            sort_keys=True)]
        lines += [json.dumps(asdict(r), sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def read(cls, path) -> "Manifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.jsonl"
        lines = path.read_text().splitlines()
        head = json.loads(lines[0])
        config = GenerationConfig(**head["config"])
        if config.digest() != head["config_digest"]:
            raise ValueError("manifest config digest mismatch")
        records = [Record(**json.loads(line)) for line in lines[1:] if line.strip()]
        return cls(records, config, root=path.parent)

    def validate(self) -> None:
        for r in self.records:
            cat = r.cat
            if r.visual_label != (LABEL_FAKE if cat.visual_fake else LABEL_REAL):
                raise ValueError(f"{r.id}: visual label inconsistent with {cat.value}")
            if r.audio_label != (LABEL_FAKE if cat.audio_fake else LABEL_REAL):
                raise ValueError(f"{r.id}: audio label inconsistent with {cat.value}")
            if self.root is not None:
                if not (self.root / r.wav_path).is_file() or not (self.root / r.frames_dir).is_dir():
                    raise FileNotFoundError(f"{r.id}: media missing under {self.root}")
        train = self.split("train")
        for cat in Category:
            want = self.config.train_counts.get(cat.value, 0)
            have = sum(r.category == cat.value for r in train)
            if want != have:
                raise ValueError(f"{cat.value}: {have} train records, config says {want}")
        train_subjects = {r.subject_id for r in self.records if r.split != "test"}
        test_subjects = {r.subject_id for r in self.records if r.split == "test"}
        if train_subjects & test_subjects:
            raise ValueError("train and test subject pools overlap")

    def load(self, record: Record) -> AVSample:
        if self.root is None:
            raise ValueError("manifest has no media root")
        wav, rate = mediaio.read_wav(self.root / record.wav_path)
        if rate != SAMPLE_RATE:
            raise ValueError(f"{record.wav_path}: sample rate {rate}")
        frames = mediaio.read_frames(self.root / record.frames_dir)
        return AVSample(record.id, record.subject_id, wav, frames, record.cat,
                        tuple(record.lip_box), record.seed)


def _plan(cfg: GenerationConfig) -> list:
    """(split, id, category, subject_id, subsets) in generation order."""
    plan = []
    n_tr, n_te = cfg.n_train_subjects, cfg.n_test_subjects
    i = 0
    for cat in Category:
        for _ in range(cfg.train_counts.get(cat.value, 0)):
            plan.append(("train", f"train-{i:05d}", cat, i % n_tr, []))
            i += 1
    if cfg.balance:
        fake = sum(cfg.train_counts.get(c.value, 0) for c in TRAINING_FAKES[NetworkKind.AVN])
        real = cfg.train_counts.get(Category.RvRa.value, 0)
        for j in range(max(0, fake - real)):
            plan.append(("balance", f"balance-{j:05d}", Category.RvRa, (i + j) % n_tr, []))
    test_subject = n_tr
    k = 0

    def test_id():
        nonlocal k
        k += 1
        return f"test-{k - 1:05d}"

    for j in range(cfg.n_test_real):
        plan.append(("test", test_id(), Category.RvRa, test_subject + j % n_te, list(SUBSETS)))
    per_technique = cfg.n_test_fake // len(TECHNIQUES)
    mixed_i = {cat: sum(per_technique for c in TECHNIQUES.values() if c == cat)
               for cat in SINGLE_SUBSETS.values()}
    mixed_ii = cfg.n_test_fake // 3
    for name, cat in SINGLE_SUBSETS.items():
        for j in range(cfg.n_test_fake):
            subsets = [name, "full"]
            if j < mixed_i[cat]:
                subsets.append("mixed-I")
            if j < mixed_ii:
                subsets.append("mixed-II")
            plan.append(("test", test_id(), cat, test_subject + j % n_te, sorted(subsets)))
    return plan


def _write_one(root: Path, global_seed: int, index: int, entry) -> Record:
    split, sid, cat, subject, subsets = entry
    s = generate_sample(global_seed, index, subject, cat, sid)
    wav_rel = f"media/{sid}.wav"
    frames_rel = f"media/{sid}"
    mediaio.write_wav(root / wav_rel, s.waveform)
    mediaio.write_frames(root / frames_rel, s.frames)
    return Record(sid, subject, cat.value, s.visual_label, s.audio_label, wav_rel, frames_rel,
                  list(s.lip_box), s.seed, split, subsets)


def generate_dataset(out_dir, cfg: GenerationConfig | None = None, jobs: int = 1) -> Manifest:
    """Write media and ``manifest.jsonl`` under ``out_dir``."""
    cfg = cfg or GenerationConfig()
    cfg.validate()
    root = Path(out_dir)
    (root / "media").mkdir(parents=True, exist_ok=True)
    plan = _plan(cfg)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            records = list(pool.map(_write_one, [root] * len(plan), [cfg.global_seed] * len(plan),
                                    range(len(plan)), plan, chunksize=32))
    else:
        records = [_write_one(root, cfg.global_seed, i, e) for i, e in enumerate(plan)]
    manifest = Manifest(records, cfg, root)
    manifest.write(root / "manifest.jsonl")
    return manifest


def build_training_set(m: Manifest, kind) -> list:
    """``[(record, is_fake)]`` for one network, class-balanced with extra reals."""
    kind = NetworkKind(kind)
    fakes = set(TRAINING_FAKES[kind])
    train = m.split("train")
    labeled = [(r, int(r.cat in fakes)) for r in train]
    n_fake = sum(y for _, y in labeled)
    n_real = len(labeled) - n_fake
    extra = m.split("balance")[:max(0, n_fake - n_real)]
    return labeled + [(r, 0) for r in extra]
