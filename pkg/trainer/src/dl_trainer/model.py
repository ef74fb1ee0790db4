"""Residual U-Net: ResNet18-style encoder, transposed-convolution decoder.

The encoder downsamples through five levels while channels grow from 16
to 256 (two basic residual blocks per level).  The decoder mirrors it
with five stride-2 transposed convolutions and skip connections.  All
3x3 convolutions use replicate padding and the upsampling kernels start
phase-tied (every tap equal), so an untrained network maps a constant
input to a constant output with no border or checkerboard artifacts.
"""

from __future__ import annotations

import torch
from torch import nn

from .data import ConfigError, UnetConfig

ENCODER_CHANNELS = (16, 32, 64, 128, 256, 256)


def _conv3(cin, cout, stride=1):
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1, padding_mode="replicate")


class BasicBlock(nn.Module):
    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = _conv3(cin, cout, stride)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = _conv3(cout, cout)
        self.bn2 = nn.BatchNorm2d(cout)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride), nn.BatchNorm2d(cout)
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class _Stage(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.block1 = BasicBlock(cin, cout, stride=2)
        self.block2 = BasicBlock(cout, cout)

    def forward(self, x):
        return self.block2(self.block1(x))


class _DecoderLevel(nn.Module):
    def __init__(self, cin, skip, cout):
        super().__init__()
        self.up = nn.ConvTranspose2d(cin, cout, 2, stride=2)
        self.conv = _conv3(cout + skip, cout)
        self.bn = nn.BatchNorm2d(cout)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x, skip):
        x = self.up(x)
        x = torch.cat([x, skip], dim=1)
        return self.relu(self.bn(self.conv(x)))


class ResUNet(nn.Module):
    def __init__(self, in_channels: int):
        super().__init__()
        if in_channels not in (4, 6):
            raise ConfigError(f"in_channels must be 4 or 6, got {in_channels}")
        c = ENCODER_CHANNELS
        self.stem = nn.Sequential(
            _conv3(in_channels, c[0]), nn.BatchNorm2d(c[0]), nn.ReLU(inplace=True)
        )
        self.enc1 = _Stage(c[0], c[1])
        self.enc2 = _Stage(c[1], c[2])
        self.enc3 = _Stage(c[2], c[3])
        self.enc4 = _Stage(c[3], c[4])
        self.enc5 = _Stage(c[4], c[5])
        self.dec5 = _DecoderLevel(c[5], c[4], c[4])
        self.dec4 = _DecoderLevel(c[4], c[3], c[3])
        self.dec3 = _DecoderLevel(c[3], c[2], c[2])
        self.dec2 = _DecoderLevel(c[2], c[1], c[1])
        self.dec1 = _DecoderLevel(c[1], c[0], c[0])
        self.head = nn.Conv2d(c[0], 1, 1)
        self._tie_upsampling_phases()

    def _tie_upsampling_phases(self):
        # Shift-invariant start for the stride-2 kernels: all four taps
        # share one weight, like a nearest-upsample followed by 1x1 conv.
        with torch.no_grad():
            for mod in self.modules():
                if isinstance(mod, nn.ConvTranspose2d):
                    tap = mod.weight[:, :, :1, :1]
                    mod.weight.copy_(tap.expand_as(mod.weight))

    def forward(self, x):
        if x.shape[-1] % 32 or x.shape[-2] % 32:
            raise ConfigError("input height and width must be divisible by 32")
        s0 = self.stem(x)
        s1 = self.enc1(s0)
        s2 = self.enc2(s1)
        s3 = self.enc3(s2)
        s4 = self.enc4(s3)
        bottom = self.enc5(s4)
        d = self.dec5(bottom, s4)
        d = self.dec4(d, s3)
        d = self.dec3(d, s2)
        d = self.dec2(d, s1)
        d = self.dec1(d, s0)
        return torch.sigmoid(self.head(d))


def build_unet(cfg: UnetConfig) -> ResUNet:
    """Seeded construction: identical parameters for identical seeds."""
    torch.manual_seed(cfg.seed)
    return ResUNet(cfg.in_channels)
