"""The four classifiers: VN, AN, AVN (fused, lip + filterbank) and AVN (concatenated cls).

Every network maps featurized inputs to ``(logits, embedding)`` with logits
ordered ``[real, fake]``; the embedding is the penultimate representation fed
to the linear head.
"""

from __future__ import annotations

import numpy as np

from .. import dsp
from ..tensor import Module, Tensor, concat, gelu
from .layers import (
    MSTCN,
    Encoder,
    EncoderConfig,
    Head,
    Linear,
    MSTCNConfig,
    ResBlock2d,
    encoder_forward,
    mstcn_forward,
)

# fixed affine maps bringing log-energies and pixel values to roughly unit scale
LOG_ENERGY_SHIFT, LOG_ENERGY_SCALE = 1.0, 2.5
PIXEL_SHIFT, PIXEL_SCALE = 0.3, 0.25

N_VIDEO_FRAMES = 16


def _norm_energy(x):
    return (x + LOG_ENERGY_SHIFT) / LOG_ENERGY_SCALE


def _norm_pixels(x):
    return (x - PIXEL_SHIFT) / PIXEL_SCALE


class Network(Module):
    kind = ""
    prefix = ""

    def meta(self) -> dict:
        raise NotImplementedError

    def featurize(self, audio, video, lip_box) -> tuple:
        raise NotImplementedError

    def forward(self, *inputs):
        raise NotImplementedError

    def parameters(self):
        return self.named_parameters(self.prefix)


class VideoNet(Network):
    """Factorized spatial/temporal encoder over tubelet tokens."""

    kind = "vn"
    prefix = "vn"

    def __init__(self, rng, enc: EncoderConfig = EncoderConfig(), segment_len: int = 4,
                 tubelet=(4, 8, 8), frame_shape=(N_VIDEO_FRAMES, 32, 32), with_head: bool = True):
        t, h, w = tubelet
        T, H, W = frame_shape
        self.segment_len, self.tubelet, self.frame_shape = segment_len, tuple(tubelet), tuple(frame_shape)
        self.n_segments = T // segment_len
        n_tokens = (segment_len // t) * (H // h) * (W // w)
        self.enc_cfg = enc
        spatial = EncoderConfig(enc.d_model, enc.heads, enc.layers, enc.ffn_dim, n_tokens + 1)
        temporal = EncoderConfig(enc.d_model, enc.heads, enc.layers, enc.ffn_dim, self.n_segments + 1)
        self.embed = Linear(rng, t * h * w, enc.d_model)
        self.spatial = Encoder(rng, spatial)
        self.temporal = Encoder(rng, temporal)
        self.head = Head(rng, enc.d_model) if with_head else None

    def meta(self):
        return {"d_model": self.enc_cfg.d_model, "heads": self.enc_cfg.heads,
                "layers": self.enc_cfg.layers, "ffn_dim": self.enc_cfg.ffn_dim,
                "segment_len": self.segment_len}

    def featurize(self, audio, video, lip_box):
        video = np.asarray(video, dtype=np.float64)
        if video.shape[1:] != self.frame_shape:
            raise ValueError(f"VN expects clips of shape {self.frame_shape}, got {video.shape[1:]}")
        return (_norm_pixels(dsp.tubelet_array(video, self.segment_len, self.tubelet)),)

    def segment_embeddings(self, tubelets) -> Tensor:
        x = self.embed(Tensor(tubelets) if not isinstance(tubelets, Tensor) else tubelets)
        cls, _ = encoder_forward(x, self.spatial)  # (B, S, d)
        return cls

    def embedding(self, tubelets) -> Tensor:
        emb, _ = encoder_forward(self.segment_embeddings(tubelets), self.temporal)
        return emb

    def forward(self, tubelets):
        emb = self.embedding(tubelets)
        return self.head(emb), emb


class AudioNet(Network):
    """Spectrogram patch encoder with a cls token."""

    kind = "an"
    prefix = "an"

    def __init__(self, rng, enc: EncoderConfig = EncoderConfig(), n_mels: int = 64, patch: int = 16,
                 stride: int = 10, target_frames: int = 64, with_head: bool = True):
        self.n_mels, self.patch, self.stride, self.target_frames = n_mels, patch, stride, target_frames
        n_tokens = dsp.patch_count(n_mels, patch, stride) * dsp.patch_count(target_frames, patch, stride)
        self.enc_cfg = enc
        self.embed = Linear(rng, patch * patch, enc.d_model)
        self.encoder = Encoder(rng, EncoderConfig(enc.d_model, enc.heads, enc.layers, enc.ffn_dim,
                                                  n_tokens + 1))
        self.head = Head(rng, enc.d_model) if with_head else None

    def meta(self):
        return {"d_model": self.enc_cfg.d_model, "heads": self.enc_cfg.heads,
                "layers": self.enc_cfg.layers, "ffn_dim": self.enc_cfg.ffn_dim, "n_mels": self.n_mels}

    def featurize(self, audio, video, lip_box):
        audio = np.asarray(audio, dtype=np.float64)
        mel = dsp.fit_frames(dsp.log_mel(audio, self.n_mels), self.target_frames)
        return (_norm_energy(dsp.patchify_2d_array(mel, self.patch, self.stride)),)

    def embedding(self, patches) -> Tensor:
        x = self.embed(Tensor(patches) if not isinstance(patches, Tensor) else patches)
        emb, _ = encoder_forward(x, self.encoder)
        return emb

    def forward(self, patches):
        emb = self.embedding(patches)
        return self.head(emb), emb


class AudioVisualNet(Network):
    """Lip conv stack + filterbank FFN -> shared encoder -> MS-TCN -> temporal mean pool."""

    kind = "avn_fused"
    prefix = "avn_fused"

    def __init__(self, rng, enc: EncoderConfig = EncoderConfig(), n_filters: int = 26,
                 conv_channels=(8, 16), lip_size: int = 16, mstcn: MSTCNConfig = MSTCNConfig(),
                 n_frames: int = N_VIDEO_FRAMES):
        d = enc.d_model
        if d % 2:
            raise ValueError("AVN model dim must be even (half visual, half audio)")
        self.enc_cfg, self.mstcn_cfg = enc, mstcn
        self.n_filters, self.lip_size, self.n_frames = n_filters, lip_size, n_frames
        self.conv_channels = tuple(conv_channels)
        c1, c2 = self.conv_channels
        self.res1 = ResBlock2d(rng, 1, c1)
        self.res2 = ResBlock2d(rng, c1, c2)
        self.visual_proj = Linear(rng, c2 * lip_size * lip_size, d // 2)
        self.audio_fc1 = Linear(rng, 4 * n_filters, d)
        self.audio_fc2 = Linear(rng, d, d // 2)
        self.encoder = Encoder(rng, EncoderConfig(d, enc.heads, enc.layers, enc.ffn_dim, n_frames),
                               cls_token=False)
        self.tcn_in = Linear(rng, d, mstcn.channels)
        self.tcn = MSTCN(rng, mstcn)
        self.tcn_out = Linear(rng, mstcn.channels, d)
        self.head = Head(rng, d)

    def meta(self):
        return {"d_model": self.enc_cfg.d_model, "heads": self.enc_cfg.heads,
                "layers": self.enc_cfg.layers, "ffn_dim": self.enc_cfg.ffn_dim,
                "conv1": self.conv_channels[0], "conv2": self.conv_channels[1],
                "mstcn_blocks": self.mstcn_cfg.blocks, "mstcn_channels": self.mstcn_cfg.channels}

    def featurize(self, audio, video, lip_box):
        audio = np.asarray(audio, dtype=np.float64)
        video = np.asarray(video, dtype=np.float64)
        lip_box = np.asarray(lip_box, dtype=int)
        fb = dsp.fit_frames(dsp.log_mel(audio, self.n_filters), 4 * self.n_frames)
        stacked = _norm_energy(dsp.stack_audio_array(fb, self.n_frames))
        lips = np.empty((len(video), self.n_frames, self.lip_size, self.lip_size))
        for i, (clip, box) in enumerate(zip(video, lip_box)):
            if box[2] != self.lip_size or box[3] != self.lip_size:
                raise ValueError(f"lip box {tuple(box)} is not {self.lip_size}x{self.lip_size}")
            lips[i] = dsp.crop_lip(dsp.FrameStack(clip), box).frames
        return stacked, _norm_pixels(lips)

    def visual_features(self, lips) -> Tensor:
        b, t, h, w = lips.shape
        x = Tensor(np.asarray(lips).reshape(b * t, 1, h, w))
        x = self.res2(self.res1(x))
        return self.visual_proj(x.reshape(b, t, -1))

    def audio_features(self, stacked) -> Tensor:
        return self.audio_fc2(gelu(self.audio_fc1(Tensor(stacked))))

    def fused_tokens(self, stacked, lips) -> Tensor:
        if stacked.shape[1] != lips.shape[1]:
            raise ValueError(f"{stacked.shape[1]} audio steps vs {lips.shape[1]} lip frames")
        return concat([self.visual_features(lips), self.audio_features(stacked)], axis=-1)

    def pooled(self, encoded) -> Tensor:
        seq = mstcn_forward(self.tcn_in(encoded), self.tcn)
        return self.tcn_out(seq).mean(axis=-2)

    def forward(self, stacked, lips):
        emb = self.pooled(self.encoder(self.fused_tokens(stacked, lips)))
        return self.head(emb), emb


class ConcatAVNet(Network):
    """Separate AN-style and VN-style backbones; embedding is their concatenated cls outputs."""

    kind = "avn_concat"
    prefix = "avn_concat"

    def __init__(self, rng, enc: EncoderConfig = EncoderConfig()):
        self.enc_cfg = enc
        self.audio = AudioNet(rng, enc, with_head=False)
        self.video = VideoNet(rng, enc, with_head=False)
        self.head = Head(rng, 2 * enc.d_model)

    def meta(self):
        return {"d_model": self.enc_cfg.d_model, "heads": self.enc_cfg.heads,
                "layers": self.enc_cfg.layers, "ffn_dim": self.enc_cfg.ffn_dim}

    def featurize(self, audio, video, lip_box):
        return self.audio.featurize(audio, video, lip_box) + self.video.featurize(audio, video, lip_box)

    def forward(self, patches, tubelets):
        emb = concat([self.audio.embedding(patches), self.video.embedding(tubelets)], axis=-1)
        return self.head(emb), emb


NETWORKS = {cls.kind: cls for cls in (VideoNet, AudioNet, AudioVisualNet, ConcatAVNet)}
