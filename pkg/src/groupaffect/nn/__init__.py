"""Minimal sequential network engine: numpy layers, Adam/SGD, checkpoints."""

from .layers import (
    BatchNorm,
    BatchNormSpec,
    Conv2d,
    Conv2dSpec,
    Dense,
    DenseSpec,
    Dropout,
    DropoutSpec,
    Flatten,
    FlattenSpec,
    MaxPool,
    MaxPoolSpec,
    Param,
    ReLU,
    ReLUSpec,
    ShapeError,
    Softmax,
    SoftmaxSpec,
    ZeroPad,
    ZeroPadSpec,
    count_params,
    infer_shapes,
    softmax,
    softmax_cross_entropy,
    spec_from_dict,
    spec_to_dict,
)
from .network import Network, load_checkpoint, save_checkpoint
from .optim import AdamSpec, AdamState, Optimizer, SGDSpec, adam_step, sgd_step
