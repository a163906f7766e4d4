"""多项逻辑回归：参数向量 θ 依次存放权重 W (K x D_f，行优先) 与偏置 b (K)"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from hagg.errors import ParameterError


@dataclass(frozen=True)
class ModelParams:
    n_features: int
    n_classes: int

    @property
    def dimension(self) -> int:
        return self.n_features * self.n_classes + self.n_classes

    def split(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if theta.shape != (self.dimension,):
            raise ParameterError(f"参数维度 {theta.shape} 与模型 {self.dimension} 不符")
        boundary = self.n_features * self.n_classes
        return theta[:boundary].reshape(self.n_classes, self.n_features), theta[boundary:]


def init_params(model: ModelParams) -> np.ndarray:
    return np.zeros(model.dimension, dtype=np.float64)


def _probabilities(theta: np.ndarray, features: np.ndarray, model: ModelParams) -> np.ndarray:
    W, b = model.split(theta)
    logits = features @ W.T + b
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    return exp / exp.sum(axis=1, keepdims=True)


def predict(theta: np.ndarray, features: np.ndarray, model: ModelParams) -> np.ndarray:
    W, b = model.split(theta)
    return np.argmax(features @ W.T + b, axis=1)


def accuracy(theta: np.ndarray, features: np.ndarray, labels: np.ndarray, model: ModelParams) -> float:
    if labels.size == 0:
        return 0.0
    return float(np.mean(predict(theta, features, model) == labels))


def loss(theta: np.ndarray, features: np.ndarray, labels: np.ndarray, model: ModelParams,
         l2: float = 0.0) -> float:
    """批均值负对数似然加 (l2/2)·||θ||²"""
    if labels.size == 0:
        raise ParameterError("批次不能为空")
    probs = _probabilities(theta, features, model)
    nll = -np.mean(np.log(probs[np.arange(labels.size), labels]))
    return float(nll + 0.5 * l2 * theta @ theta)


def gradient(theta: np.ndarray, features: np.ndarray, labels: np.ndarray, model: ModelParams,
             l2: float = 0.0) -> np.ndarray:
    """批均值梯度加 l2·θ，与 loss 对应"""
    if labels.size == 0:
        raise ParameterError("批次不能为空")
    residual = _probabilities(theta, features, model)
    residual[np.arange(labels.size), labels] -= 1.0
    residual /= labels.size
    grad_w = residual.T @ features
    grad_b = residual.sum(axis=0)
    return np.concatenate([grad_w.ravel(), grad_b]) + l2 * theta
