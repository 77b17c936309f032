"""
Adam optimizer over named numpy parameters.

Shared by stage-1 training, transfer-matrix training and tail classifier
adjustment. Parameters are updated in place, in insertion order.
"""

from typing import Dict, Optional

import numpy as np

DEFAULT_LR = 0.01
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8


class Adam:
    """Adam with bias-corrected moment estimates."""

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        lr: float = DEFAULT_LR,
        beta1: float = DEFAULT_BETA1,
        beta2: float = DEFAULT_BETA2,
        eps: float = DEFAULT_EPS,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, grads: Dict[str, Optional[np.ndarray]]) -> None:
        """Apply one update; parameters without a gradient are left alone."""
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, param in self.params.items():
            grad = grads.get(name)
            if grad is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (grad * grad)
            m_hat = m / correction1
            v_hat = v / correction2
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
