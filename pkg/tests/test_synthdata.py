import hashlib
from collections import Counter

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import StandardScaler

from avtenet import dsp, mediaio
from avtenet.synthdata import (
    LABEL_FAKE,
    LABEL_REAL,
    SUBSETS,
    Category,
    GenerationConfig,
    Manifest,
    NetworkKind,
    _plan,
    build_training_set,
    generate_dataset,
    generate_sample,
    parse_counts,
    sample_seed,
    splitmix64,
)

from conftest import small_config


def tree_hash(root):
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


# -- seeding --------------------------------------------------------------

def test_splitmix64_reference_values():
    # first outputs of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_sample_seeds_are_distinct():
    seeds = {sample_seed(42, i) for i in range(5000)}
    assert len(seeds) == 5000
    assert sample_seed(42, 0) != sample_seed(43, 0)


# -- single samples -------------------------------------------------------

def test_sample_geometry():
    s = generate_sample(42, 0, 0, "RvRa")
    assert s.waveform.shape == (10240,)
    assert s.frames.shape == (16, 32, 32)
    assert s.visual_label == LABEL_REAL and s.audio_label == LABEL_REAL


def test_same_seed_same_bytes(tmp_path):
    for tag in ("a", "b"):
        s = generate_sample(42, 17, 3, "FvFa")
        mediaio.write_wav(tmp_path / f"{tag}.wav", s.waveform)
        mediaio.write_frames(tmp_path / tag, s.frames)
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()
    for i in range(16):
        name = f"frame_{i:03d}.pgm"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("index", [0, 5, 99])
def test_audio_fake_versus_counterpart(index):
    clean = generate_sample(42, index, 2, "RvRa")
    fake = generate_sample(42, index, 2, "RvFa")
    np.testing.assert_array_equal(fake.frames, clean.frames)
    assert np.linalg.norm(fake.waveform - clean.waveform) > 0.1


@pytest.mark.parametrize("index", [0, 5, 99])
def test_visual_fake_versus_counterpart(index):
    clean = generate_sample(42, index, 2, "RvRa")
    fake = generate_sample(42, index, 2, "FvRa")
    np.testing.assert_array_equal(fake.waveform, clean.waveform)
    top, left, h, w = fake.lip_box
    inside = (slice(None), slice(top, top + h), slice(left, left + w))
    assert np.any(fake.frames[inside] != clean.frames[inside])


def test_labels_follow_category():
    for cat in Category:
        s = generate_sample(1, 0, 0, cat)
        assert (s.visual_label == LABEL_FAKE) == cat.visual_fake
        assert (s.audio_label == LABEL_FAKE) == cat.audio_fake
        assert Category.from_flags(cat.visual_fake, cat.audio_fake) is cat


def test_unknown_category():
    with pytest.raises(ValueError):
        generate_sample(1, 0, 0, "RvXa")


def test_audio_fakes_are_linearly_detectable():
    feats, labels = [], []
    for i in range(160):
        cat = Category.RvFa if i % 2 else Category.RvRa
        s = generate_sample(7, i, i % 10, cat)
        feats.append(dsp.mel_spectrogram(dsp.Waveform(s.waveform), 64).values.mean(axis=1))
        labels.append(int(cat.audio_fake))
    x = StandardScaler().fit_transform(np.array(feats))
    y = np.array(labels)
    probe = LogisticRegression(max_iter=1000).fit(x[:100], y[:100])
    assert probe.score(x[100:], y[100:]) > 0.7


# -- counts and config ----------------------------------------------------

def test_parse_counts():
    assert parse_counts("RvRa=10,FvFa=3") == {"RvRa": 10, "RvFa": 0, "FvRa": 0, "FvFa": 3}
    with pytest.raises(ValueError):
        parse_counts("XX=1")
    with pytest.raises(ValueError):
        parse_counts("RvRa=ten")


def test_default_plan_counts():
    plan = _plan(GenerationConfig())
    train = Counter(e[2].value for e in plan if e[0] == "train")
    assert sum(train.values()) == 2000
    assert train == {c.value: 500 for c in Category}
    assert len(plan) == 3240


def test_default_plan_subsets():
    plan = [e for e in _plan(GenerationConfig()) if e[0] == "test"]
    by_subset = {name: Counter(e[2].value for e in plan if name in e[4]) for name in SUBSETS}
    assert by_subset["mixed-II"] == {"RvRa": 60, "RvFa": 20, "FvRa": 20, "FvFa": 20}
    assert by_subset["mixed-I"] == {"RvRa": 60, "FvRa": 20, "RvFa": 10, "FvFa": 30}
    assert by_subset["audio-only"] == {"RvRa": 60, "RvFa": 60}
    assert by_subset["visual-only"] == {"RvRa": 60, "FvRa": 60}
    assert by_subset["both"] == {"RvRa": 60, "FvFa": 60}


@pytest.mark.parametrize("bad", [
    dict(train_counts={"RvRa": -1}),
    dict(train_counts={"RvRa": 0}, n_test_real=0, n_test_fake=0),
    dict(n_test_fake=7),
    dict(n_test_subjects=0),
    dict(train_counts={"Nope": 1}),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        GenerationConfig(**bad).validate()


def test_config_digest_tracks_seed():
    assert GenerationConfig().digest() == GenerationConfig().digest()
    assert GenerationConfig().digest() != GenerationConfig(global_seed=1).digest()


# -- corpus ---------------------------------------------------------------

def test_corpus_counts(small_corpus):
    train = Counter(r.category for r in small_corpus.split("train"))
    assert train == {c.value: 6 for c in Category}
    small_corpus.validate()


def test_audio_only_fakes_have_real_video(small_corpus):
    fakes = [r for r in small_corpus.subset("audio-only") if r.is_fake]
    assert fakes and all(r.visual_label == LABEL_REAL for r in fakes)


def test_mixed_ii_is_equal_per_category(small_corpus):
    counts = Counter(r.category for r in small_corpus.subset("mixed-II"))
    assert counts == {"RvRa": 6, "RvFa": 2, "FvRa": 2, "FvFa": 2}


def test_subject_pools_disjoint(small_corpus):
    train = {r.subject_id for r in small_corpus.records if r.split != "test"}
    test = {r.subject_id for r in small_corpus.records if r.split == "test"}
    assert train and test and not train & test


def test_unknown_subset(small_corpus):
    with pytest.raises(KeyError):
        small_corpus.subset("mixed-III")


def test_manifest_roundtrip(small_corpus):
    path = small_corpus.root / "manifest.jsonl"
    back = Manifest.read(path)
    assert back.dumps() == path.read_text()
    assert back.digest == small_corpus.digest


def test_manifest_digest_is_checked(tmp_path, small_corpus):
    text = (small_corpus.root / "manifest.jsonl").read_text()
    (tmp_path / "manifest.jsonl").write_text(text.replace('"global_seed": 42', '"global_seed": 41', 1))
    with pytest.raises(ValueError):
        Manifest.read(tmp_path)


def test_media_reingests_to_generated_tensors(small_corpus):
    for r in small_corpus.records[::7]:
        loaded = small_corpus.load(r)
        fresh = generate_sample(small_corpus.config.global_seed, small_corpus.records.index(r),
                                r.subject_id, r.category)
        np.testing.assert_array_equal(loaded.waveform, fresh.waveform)
        np.testing.assert_array_equal(loaded.frames, fresh.frames)


def test_validate_detects_missing_media(tmp_path):
    m = generate_dataset(tmp_path, small_config())
    (tmp_path / m.records[0].wav_path).unlink()
    with pytest.raises(FileNotFoundError):
        m.validate()


def test_validate_detects_count_mismatch(small_corpus):
    broken = Manifest(small_corpus.split("train")[1:], small_corpus.config)
    with pytest.raises(ValueError):
        broken.validate()


def test_regeneration_is_byte_identical(tmp_path, small_corpus):
    generate_dataset(tmp_path, small_config())
    assert tree_hash(tmp_path) == tree_hash(small_corpus.root)


def test_parallel_generation_matches_serial(tmp_path, small_corpus):
    generate_dataset(tmp_path, small_config(), jobs=2)
    assert tree_hash(tmp_path) == tree_hash(small_corpus.root)


# -- training sets --------------------------------------------------------

def test_training_set_label_mapping(small_corpus):
    labels = {kind: {} for kind in NetworkKind}
    for kind in NetworkKind:
        for r, y in build_training_set(small_corpus, kind):
            if r.split == "train":
                labels[kind].setdefault(r.category, set()).add(y)
    assert labels[NetworkKind.VN]["FvRa"] == {1}
    assert labels[NetworkKind.AN]["FvRa"] == {0}
    assert labels[NetworkKind.AVN]["RvFa"] == {1}
    assert labels[NetworkKind.VN]["RvFa"] == {0}
    assert labels[NetworkKind.AN]["RvFa"] == {1}
    assert labels[NetworkKind.AVN]["RvRa"] == {0}


@pytest.mark.parametrize("kind", list(NetworkKind))
def test_training_sets_are_balanced(small_corpus, kind):
    ys = [y for _, y in build_training_set(small_corpus, kind)]
    assert ys.count(0) == ys.count(1)


def test_training_set_unknown_kind(small_corpus):
    with pytest.raises(ValueError):
        build_training_set(small_corpus, "XN")
