"""Finite-difference gradient oracle shared by the loss/baseline tests."""

import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters


def analytic_grad(model, loss_fn) -> torch.Tensor:
    """Backprop gradient of ``loss_fn(model)`` w.r.t. all parameters."""
    model.zero_grad()
    loss = loss_fn(model)
    loss.backward()
    return torch.cat([
        (p.grad if p.grad is not None else torch.zeros_like(p)).flatten()
        for p in model.parameters()
    ]).detach().clone()


def fd_grad(model, loss_fn, eps: float = 1e-5) -> torch.Tensor:
    """Central finite differences over every parameter coordinate.

    ``loss_fn`` must be deterministic given the parameters (seed any internal
    stochasticity by reconstructing generators inside it).
    """
    params = list(model.parameters())
    vec = parameters_to_vector(params).detach().clone()
    grad = torch.zeros_like(vec)
    try:
        for i in range(vec.numel()):
            plus, minus = vec.clone(), vec.clone()
            plus[i] += eps
            minus[i] -= eps
            with torch.no_grad():
                vector_to_parameters(plus, params)
            up = float(loss_fn(model).detach())
            with torch.no_grad():
                vector_to_parameters(minus, params)
            down = float(loss_fn(model).detach())
            grad[i] = (up - down) / (2 * eps)
    finally:
        with torch.no_grad():
            vector_to_parameters(vec, params)
    return grad


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(float(a.norm()), float(b.norm()), 1e-12)
    return float((a - b).norm()) / denom
