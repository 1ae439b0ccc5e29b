"""Adam over a named parameter dict."""

import numpy as np


class OptimError(RuntimeError):
    pass


class Adam:
    """Standard Adam with bias correction.

    Parameters with a None gradient are treated as zero-gradient and left
    untouched (their moments do not advance either).  A non-finite
    gradient raises, naming the offending parameter path.
    """

    def __init__(self, params: dict, lr: float = 1e-3,
                 betas: tuple = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = {k: 0 for k in params}

    def step(self) -> None:
        for path in sorted(self.params):
            p = self.params[path]
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise OptimError(f"non-finite gradient at {path}")
            self.t[path] += 1
            t = self.t[path]
            m = self.m[path]
            v = self.v[path]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
