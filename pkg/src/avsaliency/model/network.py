"""Two-stream 3D-convolutional encoder-decoder for audio-visual saliency."""

from __future__ import annotations

import enum
import math
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from ..core import SaliencyError

N_FRAMES = 16
SPATIAL_REDUCTION = 32
OUTPUT_REDUCTION = 8

TOY_WIDTHS = (8, 16, 32, 64, 64)
TOY_DECODER = (32, 16)
FULL_WIDTHS = (64, 64, 128, 256, 512)
FULL_BLOCKS = (1, 2, 2, 2, 2)
FULL_DECODER = (256, 128)


class Mode(str, enum.Enum):
    AV = "av"
    VIDEO = "video"
    AUDIO = "audio"


class ConvBlock3d(nn.Module):
    def __init__(self, c_in, c_out, stride, residual=False):
        super().__init__()
        self.conv = nn.Conv3d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.bn = nn.BatchNorm3d(c_out)
        self.residual = residual and c_in == c_out and stride == (1, 1, 1)

    def forward(self, x):
        y = self.bn(self.conv(x))
        if self.residual:
            y = y + x
        return F.relu(y)


def _stage_strides(n_stages: int, n_frames: int) -> list[tuple[int, int, int]]:
    # temporal stride 2 until the clip collapses to a single step
    t_halvings = int(math.log2(n_frames))
    strides = []
    for i in range(n_stages):
        t = 2 if i >= n_stages - t_halvings else 1
        strides.append((t, 2, 2))
    return strides


class Encoder3d(nn.Module):
    """Stack of stride-2 3D conv stages, reducing space by 32 and time to 1."""

    def __init__(self, widths: Sequence[int], blocks: Optional[Sequence[int]] = None, in_channels: int = 3):
        super().__init__()
        if len(widths) != 5:
            raise SaliencyError("an encoder needs exactly five stages to reach /32")
        blocks = blocks or (1,) * len(widths)
        stages = []
        c_in = in_channels
        for width, n_blocks, stride in zip(widths, blocks, _stage_strides(len(widths), N_FRAMES)):
            layers = [ConvBlock3d(c_in, width, stride)]
            layers += [ConvBlock3d(width, width, (1, 1, 1), residual=True) for _ in range(n_blocks - 1)]
            stages.append(nn.Sequential(*layers))
            c_in = width
        self.stages = nn.Sequential(*stages)
        self.out_channels = c_in

    def forward(self, x):
        return self.stages(x)


class Decoder(nn.Module):
    """Two [bilinear x2, 3x3 conv, batch norm, ReLU] blocks, a 1x1 conv and spatial softmax."""

    def __init__(self, c_in: int, widths: Sequence[int]):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, widths[0], 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(widths[0])
        self.conv2 = nn.Conv2d(widths[0], widths[1], 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(widths[1])
        self.head = nn.Conv2d(widths[1], 1, 1)
        self.in_channels = c_in

    def logits(self, x):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = F.relu(self.bn1(self.conv1(x)))
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = F.relu(self.bn2(self.conv2(x)))
        return self.head(x)[:, 0]

    def forward(self, x):
        z = self.logits(x)
        n, h, w = z.shape
        return torch.softmax(z.reshape(n, -1), dim=1).reshape(n, h, w)


class SaliencyNet(nn.Module):
    """Video encoder, audio encoder, 1x1 fusion mixer and shared decoder.

    Video input is ``(N, 16, 3, H, W)``; audio input is ``(N, 16, 3, 64, 64)``.
    Both encoders end with the same channel count so the mixer output
    (half the concatenated width) matches what the video path alone feeds
    the decoder.
    """

    def __init__(
        self,
        video_widths: Sequence[int] = TOY_WIDTHS,
        audio_widths: Sequence[int] = TOY_WIDTHS,
        decoder_widths: Sequence[int] = TOY_DECODER,
        blocks: Optional[Sequence[int]] = None,
        audio_grid: tuple[int, int] = (2, 3),
    ):
        super().__init__()
        if video_widths[-1] != audio_widths[-1]:
            raise SaliencyError("video and audio encoders must end with the same width")
        self.video_encoder = Encoder3d(video_widths, blocks)
        self.audio_encoder = Encoder3d(audio_widths, blocks)
        cv, ca = self.video_encoder.out_channels, self.audio_encoder.out_channels
        self.mixer = nn.Conv2d(cv + ca, (cv + ca) // 2, 1)
        self.decoder = Decoder((cv + ca) // 2, decoder_widths)
        self.audio_grid = tuple(audio_grid)

    def video_encode(self, clip):
        n, f, c, h, w = clip.shape
        if f != N_FRAMES or c != 3:
            raise SaliencyError(f"video clip must be (N, {N_FRAMES}, 3, H, W), got {tuple(clip.shape)}")
        if h % SPATIAL_REDUCTION or w % SPATIAL_REDUCTION:
            raise SaliencyError(f"clip height and width must be divisible by {SPATIAL_REDUCTION}, got {h}x{w}")
        out = self.video_encoder(clip.transpose(1, 2))
        return out[:, :, 0]

    def audio_encode(self, audio):
        if tuple(audio.shape[1:]) != (N_FRAMES, 3, 64, 64):
            raise SaliencyError(f"audio tensor must be (N, 16, 3, 64, 64), got {tuple(audio.shape)}")
        out = self.audio_encoder(audio.transpose(1, 2))
        return out.mean(dim=(2, 3, 4))

    def fuse(self, v, a):
        if v.shape[1] + a.shape[1] != self.mixer.in_channels:
            raise SaliencyError("channel counts do not match the fusion mixer")
        tiled = a[:, :, None, None].expand(-1, -1, v.shape[2], v.shape[3])
        return self.mixer(torch.cat([v, tiled], dim=1))

    def decode(self, features):
        if features.shape[1] != self.decoder.in_channels:
            raise SaliencyError("feature width does not match the decoder")
        return self.decoder(features)

    def forward(self, clip=None, audio=None, mode: Mode | str = Mode.AV):
        mode = Mode(mode)
        if mode is not Mode.AUDIO and clip is None:
            raise SaliencyError(f"mode {mode.value} needs a video clip")
        if mode is not Mode.VIDEO and audio is None:
            raise SaliencyError(f"mode {mode.value} needs an audio tensor")
        if mode is Mode.VIDEO:
            return self.decode(self.video_encode(clip))
        a = self.audio_encode(audio)
        if mode is Mode.AUDIO:
            gh, gw = self.audio_grid
            return self.decode(a[:, :, None, None].expand(-1, -1, gh, gw))
        return self.decode(self.fuse(self.video_encode(clip), a))

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        return {
            "video_encoder": list(self.video_encoder.parameters()),
            "audio_encoder": list(self.audio_encoder.parameters()),
            "mixer": list(self.mixer.parameters()),
            "decoder": list(self.decoder.parameters()),
        }


def init_params(net: nn.Module, seed: int) -> None:
    """Seeded uniform fan-in initialisation; zero biases, unit batch-norm scale."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in net.named_parameters():
            module_name, _, kind = name.rpartition(".")
            module = net.get_submodule(module_name)
            if isinstance(module, (nn.BatchNorm2d, nn.BatchNorm3d)):
                p.fill_(1.0 if kind == "weight" else 0.0)
            elif kind == "bias":
                p.zero_()
            else:
                fan_in = p[0].numel()
                bound = math.sqrt(6.0 / fan_in)
                p.copy_(torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 * bound - bound)
