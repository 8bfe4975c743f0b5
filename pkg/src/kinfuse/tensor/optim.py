"""Adam with bias correction, plus a small convenience wrapper for models."""

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8


def adam_init(n_params, lr=0.001, beta1=0.9, beta2=0.999, eps_hat=1e-8):
    return AdamState(first_moment=np.zeros(n_params),
                     second_moment=np.zeros(n_params),
                     lr=lr, beta1=beta1, beta2=beta2, eps_hat=eps_hat)


def adam_step(params, grads, state):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError(
            f"adam_step: length mismatch params {params.shape}, grads {grads.shape}, "
            f"moments {state.first_moment.shape}")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


class Adam:
    """Per-tensor Adam states over a list of parameter Tensors."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps_hat=1e-8):
        self.params = list(params)
        self.states = [adam_init(p.data.size, lr, beta1, beta2, eps_hat)
                       for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for p, st in zip(self.params, self.states):
            if p.grad is None:
                continue
            new, st2 = adam_step(p.data.ravel(), p.grad.ravel(), st)
            p.data = new.reshape(p.data.shape)
            st.first_moment = st2.first_moment
            st.second_moment = st2.second_moment
            st.step_count = st2.step_count
