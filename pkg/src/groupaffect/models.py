"""Layer-spec builders for the two convolutional architectures."""

from __future__ import annotations

import enum

from .nn import (
    BatchNormSpec,
    Conv2dSpec,
    DenseSpec,
    DropoutSpec,
    FlattenSpec,
    MaxPoolSpec,
    ReLUSpec,
    ShapeError,
    SoftmaxSpec,
    ZeroPadSpec,
    infer_shapes,
)

N_CLASSES = 3
THREE_CONV_MIN_HW = 22
ALEXNET_MIN_HW = 67


class ModelKind(str, enum.Enum):
    THREE_CONV = "3convnn"
    ALEXNET = "alexnet"

    @property
    def default_input_hw(self) -> int:
        return 256 if self is ModelKind.THREE_CONV else 227


def _scaled(filters: int, width_mult: float) -> int:
    return max(1, int(round(filters * width_mult)))


def build_3convnn(input_hw: int = 256, width_mult: float = 1.0) -> list:
    """Conv(32)-Pool-Conv(32)-Pool-Conv(64)-Pool-Flatten-Dropout-Dense(3)-Softmax.

    ``width_mult`` scales the filter counts for desk-scale runs. Input below
    22 px underflows the third pooling stage.
    """
    if input_hw < THREE_CONV_MIN_HW:
        raise ShapeError(f"3-ConvNN needs input_hw >= {THREE_CONV_MIN_HW}, got {input_hw}")
    if width_mult <= 0:
        raise ValueError("width_mult must be positive")
    specs = []
    for filters in (32, 32, 64):
        specs += [Conv2dSpec(_scaled(filters, width_mult), 3, 3), ReLUSpec(), MaxPoolSpec(2)]
    specs += [FlattenSpec(), DropoutSpec(0.5), DenseSpec(N_CLASSES), SoftmaxSpec()]
    infer_shapes(specs, (input_hw, input_hw, 3))
    return specs


def build_alexnet_variant(input_hw: int = 227) -> list:
    """The printed AlexNet-style stack (no 5x5 second stage)."""
    if input_hw < ALEXNET_MIN_HW:
        raise ShapeError(f"AlexNet variant needs input_hw >= {ALEXNET_MIN_HW}, got {input_hw}")
    specs = [
        Conv2dSpec(96, 11, 11, stride=4), ReLUSpec(),
        MaxPoolSpec(3, stride=2),
        BatchNormSpec(),
    ]
    for filters in (384, 384, 256):
        specs += [ZeroPadSpec(1), Conv2dSpec(filters, 3, 3), ReLUSpec()]
    specs += [
        MaxPoolSpec(3, stride=2),
        FlattenSpec(),
        DenseSpec(4096), ReLUSpec(), DropoutSpec(0.5),
        DenseSpec(4096), ReLUSpec(), DropoutSpec(0.5),
        DenseSpec(N_CLASSES), SoftmaxSpec(),
    ]
    infer_shapes(specs, (input_hw, input_hw, 3))
    return specs


def build(kind: ModelKind | str, input_hw: int | None = None, width_mult: float = 1.0) -> list:
    kind = ModelKind(kind)
    hw = kind.default_input_hw if input_hw is None else input_hw
    if kind is ModelKind.THREE_CONV:
        return build_3convnn(hw, width_mult)
    if width_mult != 1.0:
        raise ValueError("width_mult applies to 3-ConvNN only")
    return build_alexnet_variant(hw)
