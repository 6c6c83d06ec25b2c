"""
Shared fixtures for the amif test suite: tiny model configs and a central
finite-difference gradient check.
"""
import torch
import torch.nn as nn

from amif.backbone import EncoderConfig
from amif.ccwm import WatermarkConfig
from amif.csamic import CouplingConfig
from amif.network import AMIFNet, ModelConfig

FD_STEP = 1e-5
FD_TOLERANCE = 1e-3


def tiny_model_config(image_size=16, coupling_blocks=2, use_attention=True, source='memory'):
    return ModelConfig(
        encoder=EncoderConfig(num_blocks=1, num_heads=2, feat_dim=8, image_size=image_size, detail_nodes=1),
        coupling=CouplingConfig(num_blocks=coupling_blocks, growth=8, layers=2, use_attention=use_attention),
        watermark=WatermarkConfig(memory_slots=4, stem_channels=4, token_grid=4, source=source),
    )


def tiny_model(seed=0, **kwargs):
    torch.manual_seed(seed)
    return AMIFNet(tiny_model_config(**kwargs)).eval()


def tiny_train_dict(data_root, output_dir, **overrides):
    config = tiny_model_config()
    data = {
        'data_root': str(data_root),
        'output_dir': str(output_dir),
        'epochs': 1,
        'batch_size': 2,
        'log_every': 1,
        'model': config.to_dict(),
    }
    data.update(overrides)
    return data


class Zero(nn.Module):
    def forward(self, x):
        return torch.zeros_like(x)


def _rel_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-4)


def _sample(tensor, count, generator):
    flat = torch.randperm(tensor.numel(), generator=generator)[:count]
    return [tuple(int(i) for i in torch.unravel_index(idx, tensor.shape)) for idx in flat]


def input_gradient_error(fn, inputs, count=10, seed=0):
    """
    Largest relative error between autograd and central differences of the
    scalar ``fn(*inputs)`` over ``count`` sampled coordinates of every input.
    Inputs must be float64 leaf tensors.
    """
    generator = torch.Generator().manual_seed(seed)
    inputs = [x.detach().clone().requires_grad_(True) for x in inputs]
    grads = torch.autograd.grad(fn(*inputs), inputs, allow_unused=True)
    worst = 0.0
    for x, grad in zip(inputs, grads):
        grad = torch.zeros_like(x) if grad is None else grad
        for idx in _sample(x, count, generator):
            with torch.no_grad():
                original = x[idx].item()
                x[idx] = original + FD_STEP
                up = fn(*inputs).item()
                x[idx] = original - FD_STEP
                down = fn(*inputs).item()
                x[idx] = original
            worst = max(worst, _rel_error(grad[idx].item(), (up - down) / (2 * FD_STEP)))
    return worst


def parameter_gradient_error(module, loss_fn, count=10, seed=0):
    """Same check over ``count`` coordinates of every parameter of a float64 module."""
    generator = torch.Generator().manual_seed(seed)
    module.zero_grad()
    loss_fn().backward()
    worst = 0.0
    for param in module.parameters():
        grad = torch.zeros_like(param) if param.grad is None else param.grad.clone()
        for idx in _sample(param, count, generator):
            with torch.no_grad():
                original = param[idx].item()
                param[idx] = original + FD_STEP
                up = loss_fn().item()
                param[idx] = original - FD_STEP
                down = loss_fn().item()
                param[idx] = original
            worst = max(worst, _rel_error(grad[idx].item(), (up - down) / (2 * FD_STEP)))
    return worst


def jitter_(module, std=0.05, seed=0):
    """Perturb every parameter so zero-initialized paths carry gradient."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for param in module.parameters():
            param.add_(std * torch.randn(param.shape, generator=generator, dtype=param.dtype))
    return module
