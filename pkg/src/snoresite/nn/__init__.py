"""From-scratch numpy neural networks: dense/conv/BN/pool layers, LSTM, bottleneck ResNet."""

from .gradcheck import GradCheckResult, activation_pattern, check_module, grad_check, rel_error
from .layers import BatchNorm, Conv2d, Dense, GlobalAvgPool, MaxPool2d, Module, ReLU, Sequential
from .losses import softmax, softmax_xent
from .lstm import LSTM, BiLSTMClassifier, lstm_cell, lstm_cell_backward
from .optim import Adam, SGDMomentum, TrainConfig, make_optimizer
from .resnet import Bottleneck, ResNet, ResNetConfig, resnet_parameter_count
from .train import DivergenceError, fit, load_checkpoint, predict_logits, save_checkpoint
