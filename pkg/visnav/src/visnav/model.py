"""Two-branch convolutional regression network.

Both branches see the same normalized image and are architecturally
identical up to their regularization and output width: three valid
(unpadded) 3x3 convolutions, each followed by a 2x2 max-pool, then two
dense layers and a linear regression head. The position branch (3
outputs: delta N, E, D) drops out after the first dense layer; the
rotation branch (4 outputs: quaternion) drops out after the second.
Zero-probability dropout layers are kept in place so the asymmetry is
visible in the module structure, not just in behaviour.
"""

from __future__ import annotations

import torch
from torch import nn

CONV_CHANNELS = (16, 32, 64)
DENSE1_WIDTH = 500
# width of the second dense layer; any small positive value works, the
# output heads are what fix the regression shape
DENSE2_WIDTH = 100

POSITION_OUTPUTS = 3
ROTATION_OUTPUTS = 4

POSITION_DROPOUT = (0.5, 0.0)  # after dense-1, after dense-2
ROTATION_DROPOUT = (0.0, 0.25)


def conv_stack_widths(image_size: int) -> list[int]:
    """Spatial widths after each conv and pool, e.g. 224 ->
    [222, 111, 109, 54, 52, 26]."""
    widths = []
    w = image_size
    for _ in CONV_CHANNELS:
        w = w - 2  # valid 3x3 convolution
        widths.append(w)
        w = w // 2  # 2x2 max-pool, floor
        widths.append(w)
    return widths


def flat_width(image_size: int) -> int:
    final = conv_stack_widths(image_size)[-1]
    return final * final * CONV_CHANNELS[-1]


def _branch(image_size: int, dropouts: tuple[float, float],
            head_width: int, dense2_width: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    in_ch = 3
    for out_ch in CONV_CHANNELS:
        layers += [nn.Conv2d(in_ch, out_ch, kernel_size=3), nn.ReLU(),
                   nn.MaxPool2d(2)]
        in_ch = out_ch
    layers += [
        nn.Flatten(),
        nn.Linear(flat_width(image_size), DENSE1_WIDTH),
        nn.ReLU(),
        nn.Dropout(dropouts[0]),
        nn.Linear(DENSE1_WIDTH, dense2_width),
        nn.ReLU(),
        nn.Dropout(dropouts[1]),
        nn.Linear(dense2_width, head_width),
    ]
    return nn.Sequential(*layers)


class TwoBranchPolicyNet(nn.Module):
    """Maps a batch of HxWx3 images to (position deltas, quaternions).

    Input tensor layout is NCHW float32. The two heads are returned
    separately; `predict` concatenates them into the seven-value action
    vector the wire protocol carries.
    """

    def __init__(self, image_size: int = 112, dense2_width: int = DENSE2_WIDTH):
        super().__init__()
        if conv_stack_widths(image_size)[-1] < 1:
            raise ValueError(f"image size {image_size} too small for the conv stack")
        self.image_size = image_size
        self.dense2_width = dense2_width
        self.position_branch = _branch(
            image_size, POSITION_DROPOUT, POSITION_OUTPUTS, dense2_width
        )
        self.rotation_branch = _branch(
            image_size, ROTATION_DROPOUT, ROTATION_OUTPUTS, dense2_width
        )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.position_branch(x), self.rotation_branch(x)

    def predict(self, x: torch.Tensor) -> torch.Tensor:
        pos, rot = self.forward(x)
        return torch.cat([pos, rot], dim=1)
