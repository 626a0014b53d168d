"""A small from-scratch CNN: layers, the recognition network, training."""
from .gradcheck import GradCheckResult, gradient_check, run_gradient_check, small_network
from .layers import (
    Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU,
    conv2d_backward, conv2d_forward, maxpool2d_backward, maxpool2d_forward,
    softmax, softmax_cross_entropy,
)
from .network import ModelWeights, Network, NetworkSpec, build_network, network_weights, param_count
from .train import (
    EpochStats, TrainConfig, load_weights, predict, prepare_batch, prepare_crop,
    save_weights, train, write_history_csv,
)
