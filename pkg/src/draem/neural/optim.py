"""Adam with named state and the step-decay learning-rate schedule."""
from __future__ import annotations

import math

import torch


class NonFiniteGradientError(FloatingPointError):
    pass


def lr_at(epoch: int, base_lr: float, milestones) -> float:
    """Piecewise-constant schedule: multiply by 0.1 at each milestone reached."""
    return base_lr * 0.1 ** sum(1 for m in milestones if epoch >= m)


class Adam:
    """Bias-corrected Adam over a dict of named parameters.

    Moment buffers are keyed by parameter name so they can be checkpointed
    alongside the weights.
    """

    def __init__(self, params: dict[str, torch.nn.Parameter], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.exp_avg = {n: torch.zeros_like(p) for n, p in self.params.items()}
        self.exp_avg_sq = {n: torch.zeros_like(p) for n, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def gradients(self) -> dict[str, torch.Tensor]:
        return {n: (p.grad if p.grad is not None else torch.zeros_like(p)) for n, p in self.params.items()}

    @torch.no_grad()
    def step(self, lr: float, grads: dict[str, torch.Tensor] | None = None) -> None:
        grads = self.gradients() if grads is None else grads
        bad = [n for n, g in grads.items() if not torch.isfinite(g).all()]
        if bad:
            raise NonFiniteGradientError(f"non-finite gradient in {', '.join(bad[:5])}"
                                         f"{' ...' if len(bad) > 5 else ''} at step {self.step_count + 1}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1 - self.beta1 ** t
        bc2 = 1 - self.beta2 ** t
        for name, p in self.params.items():
            g = grads[name]
            m, v = self.exp_avg[name], self.exp_avg_sq[name]
            m.mul_(self.beta1).add_(g, alpha=1 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1 - self.beta2)
            denom = (v / bc2).sqrt_().add_(self.eps)
            p.addcdiv_(m, denom, value=-lr / bc1)

    def state_tensors(self) -> dict[str, torch.Tensor]:
        out = {}
        for name in self.params:
            out[f"adam.exp_avg.{name}"] = self.exp_avg[name]
            out[f"adam.exp_avg_sq.{name}"] = self.exp_avg_sq[name]
        return out

    def load_state_tensors(self, tensors: dict[str, torch.Tensor], step_count: int) -> None:
        for name in self.params:
            self.exp_avg[name].copy_(tensors[f"adam.exp_avg.{name}"])
            self.exp_avg_sq[name].copy_(tensors[f"adam.exp_avg_sq.{name}"])
        self.step_count = int(step_count)


def optimizer_step(optimizer: Adam, lr: float, grads=None) -> None:
    if not math.isfinite(lr) or lr <= 0:
        raise ValueError("learning rate must be positive and finite")
    optimizer.step(lr, grads)
