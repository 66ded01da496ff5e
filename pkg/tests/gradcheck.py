"""Central finite-difference checks for single layers and whole networks."""
import numpy as np

from scalprl import nn

H = 1e-4


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.maximum(np.abs(a) + np.abs(b), 1e-6)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def numeric(f, x, h=H):
    """d f / d x for scalar ``f`` by central differences, mutating ``x`` in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def check_layer(layer, in_shape, batch=2, seed=0):
    """Max relative error over input and parameter gradients of ``sum(R * layer(x))``."""
    rng = np.random.default_rng(seed)
    p = layer.init(rng, in_shape)
    if isinstance(layer, nn.Standardize):
        p = {"mean": rng.normal(size=in_shape), "std": rng.uniform(0.5, 2.0, size=in_shape)}
    x = rng.normal(size=(batch, *in_shape))
    y, cache = layer.forward(p, x)
    r = rng.normal(size=y.shape)

    def f():
        return float(np.sum(layer.forward(p, x)[0] * r))

    dx, g = layer.backward(p, cache, r)
    worst = rel_err(dx, numeric(f, x))
    for k, v in g.items():
        worst = max(worst, rel_err(v, numeric(f, p[k])))
    return worst


def check_network(spec, inputs, target, seed=0, params=None):
    params = params if params is not None else nn.init_params(spec, seed)
    _, grads = nn.gradients(spec, params, inputs, target)
    worst = 0.0
    for k, v in params.items():
        if k.endswith(nn.FIXED_SUFFIXES):
            continue

        def f():
            return nn.gradients(spec, params, inputs, target)[0]

        worst = max(worst, rel_err(grads[k], numeric(f, v)))
    return worst
