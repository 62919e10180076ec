"""Shared fixtures-as-functions for the test modules."""
import numpy as np

from ts2img.classifier import NetworkSpec, _loss_grad_logits, init_network


def tiny_spec(edge=8, filters=2, num_classes=3):
    return NetworkSpec([
        {"type": "conv", "out_channels": filters, "kernel": 3, "stride": 1},
        {"type": "relu"},
        {"type": "maxpool", "kernel": 2},
        {"type": "flatten"},
        {"type": "dense", "out_features": num_classes},
        {"type": "softmax"},
    ], input_edge=edge, num_classes=num_classes)


def gradient_check(net, x, y, eps=1e-4):
    """Worst relative error of the analytic gradient against central differences."""
    _, grads, _ = _loss_grad_logits(net, x, y)
    worst = 0.0
    for name, p in net.params.items():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + eps
            up = _loss_grad_logits(net, x, y)[0]
            flat[k] = old - eps
            down = _loss_grad_logits(net, x, y)[0]
            flat[k] = old
            num = (up - down) / (2 * eps)
            denom = max(abs(num), abs(g[k]), 1e-6)
            worst = max(worst, abs(num - g[k]) / denom)
    return worst


def tiny_problem(seed=0, n=6, edge=8):
    rng = np.random.default_rng(seed)
    net = init_network(tiny_spec(edge), rng_seed=seed)
    x = rng.random((n, 1, edge, edge))
    y = rng.integers(0, 3, n)
    return net, x, y
