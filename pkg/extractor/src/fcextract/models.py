"""Model construction and classifier-head resolution.

Two weight sources are supported:

* ``standard-zoo``: torchvision models with their published pretrained
  weights and preprocessing.
* ``focal-calibration-release``: CIFAR checkpoints trained by the public
  focal-calibration codebase (state-dict files supplied locally via
  ``--weights-path``); the CIFAR ResNet variants below mirror that
  codebase's layer layout (3x3 stem, no max-pool).
"""

from __future__ import annotations

import torch
from torch import nn


# ---------------------------------------------------------------------------
# CIFAR ResNets (3x3 stem, no max-pool)
# ---------------------------------------------------------------------------

class _Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, in_planes, planes, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_planes, planes, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.conv3 = nn.Conv2d(planes, planes * self.expansion, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(planes * self.expansion)
        self.shortcut = nn.Sequential()
        if stride != 1 or in_planes != planes * self.expansion:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_planes, planes * self.expansion, 1, stride=stride,
                          bias=False),
                nn.BatchNorm2d(planes * self.expansion))
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        out = out + self.shortcut(x)
        return self.relu(out)


class _BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, in_planes, planes, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_planes, planes, 3, stride=stride, padding=1,
                               bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.shortcut = nn.Sequential()
        if stride != 1 or in_planes != planes * self.expansion:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_planes, planes * self.expansion, 1, stride=stride,
                          bias=False),
                nn.BatchNorm2d(planes * self.expansion))
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        out = out + self.shortcut(x)
        return self.relu(out)


class CifarResNet(nn.Module):
    """Four-stage bottleneck ResNet for 32x32 inputs (ResNet-50 layout)."""

    def __init__(self, block, blocks_per_stage, num_classes, widths=(64, 128, 256, 512)):
        super().__init__()
        self.in_planes = widths[0]
        self.conv1 = nn.Conv2d(3, widths[0], 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(widths[0])
        self.relu = nn.ReLU(inplace=True)
        stages = []
        for i, (width, count) in enumerate(zip(widths, blocks_per_stage)):
            stages.append(self._make_stage(block, width, count, 1 if i == 0 else 2))
        self.stages = nn.Sequential(*stages)
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(widths[-1] * block.expansion, num_classes)

    def _make_stage(self, block, planes, count, stride):
        layers = []
        for s in [stride] + [1] * (count - 1):
            layers.append(block(self.in_planes, planes, s))
            self.in_planes = planes * block.expansion
        return nn.Sequential(*layers)

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.stages(out)
        out = torch.flatten(self.avgpool(out), 1)
        return self.fc(out)


class CifarPlainResNet(nn.Module):
    """Three-stage basic-block ResNet for 32x32 inputs (ResNet-110 layout)."""

    def __init__(self, blocks_per_stage, num_classes):
        super().__init__()
        self.in_planes = 16
        self.conv1 = nn.Conv2d(3, 16, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(16)
        self.relu = nn.ReLU(inplace=True)
        stages = []
        for i, width in enumerate((16, 32, 64)):
            layers = []
            stride = 1 if i == 0 else 2
            for s in [stride] + [1] * (blocks_per_stage - 1):
                layers.append(_BasicBlock(self.in_planes, width, s))
                self.in_planes = width
            stages.append(nn.Sequential(*layers))
        self.stages = nn.Sequential(*stages)
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(64, num_classes)

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.stages(out)
        out = torch.flatten(self.avgpool(out), 1)
        return self.fc(out)


def cifar_resnet50(num_classes: int) -> nn.Module:
    return CifarResNet(_Bottleneck, (3, 4, 6, 3), num_classes)


def cifar_resnet110(num_classes: int) -> nn.Module:
    return CifarPlainResNet(18, num_classes)


# ---------------------------------------------------------------------------
# head resolution and checkpoint loading
# ---------------------------------------------------------------------------

def find_head(model: nn.Module) -> nn.Linear:
    """The classification head: the last nn.Linear in registration order.

    Holds for every cataloged torchvision classifier (resnet.fc,
    densenet.classifier, mobilenet/efficientnet classifier[-1], vit
    heads.head, swin.head) and for the CIFAR nets above. The capture step
    double-checks that the captured feature width equals the head's
    in_features.
    """
    head = None
    for module in model.modules():
        if isinstance(module, nn.Linear):
            head = module
    if head is None:
        raise ValueError("model has no nn.Linear classification head")
    return head


def load_state_dict_tolerant(model: nn.Module, path) -> None:
    """Load a checkpoint, stripping DataParallel 'module.' prefixes and
    unwrapping common {'state_dict': ...} containers."""
    state = torch.load(path, map_location="cpu", weights_only=False)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    if isinstance(state, dict) and "model" in state and isinstance(state["model"], dict):
        state = state["model"]
    cleaned = {k[len("module."):] if k.startswith("module.") else k: v
               for k, v in state.items()}
    model.load_state_dict(cleaned)
