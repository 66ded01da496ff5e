"""Small numpy neural-network kernels with hand-written reverse-mode gradients.

Every layer works on batched float64 arrays (leading axis = batch) and exposes
``init``/``out_shape``/``forward``/``backward``.  A :class:`NetworkSpec` wires
several input branches into a dense trunk, which is enough to express the
order-book network (two Conv3D branches, one Conv1D branch, remaining-time
scalar) as well as the small dense nets used in tests.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NonFiniteLoss, ShapeMismatch

Params = dict[str, np.ndarray]

HEAD_WIDTH = 2  # Q(s, a=0), Q(s, a=1)


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class Conv3D:
    """Valid cross-correlation over three spatial axes.

    Input ``(B, D1, D2, D3, C)``, kernel ``(k1, k2, k3, C, F)``.
    """

    kernel: tuple[int, int, int]
    channels: int

    def out_shape(self, in_shape):
        if len(in_shape) != 4:
            raise ShapeMismatch(f"Conv3D expects (D1, D2, D3, C), got {in_shape}")
        dims = [d - k + 1 for d, k in zip(in_shape[:3], self.kernel)]
        if min(dims) < 1:
            raise ShapeMismatch(f"kernel {self.kernel} does not fit input {in_shape}")
        return (*dims, self.channels)

    def init(self, rng, in_shape) -> Params:
        c = in_shape[-1]
        fan_in = int(np.prod(self.kernel)) * c
        return {
            "w": _fan_in_uniform(rng, (*self.kernel, c, self.channels), fan_in),
            "b": np.zeros(self.channels),
        }

    def forward(self, p, x):
        w = p["w"]
        if x.ndim != 5 or x.shape[-1] != w.shape[3]:
            raise ShapeMismatch(f"Conv3D input {x.shape} vs kernel {w.shape}")
        self.out_shape(x.shape[1:])
        win = sliding_window_view(x, w.shape[:3], axis=(1, 2, 3))
        # win: (B, O1, O2, O3, C, k1, k2, k3)
        y = np.tensordot(win, w, axes=([5, 6, 7, 4], [0, 1, 2, 3])) + p["b"]
        return y, x

    def backward(self, p, x, dy, need_dx=True):
        w = p["w"]
        k1, k2, k3 = w.shape[:3]
        o1, o2, o3 = dy.shape[1:4]
        win = sliding_window_view(x, (k1, k2, k3), axis=(1, 2, 3))
        dw = np.tensordot(win, dy, axes=([0, 1, 2, 3], [0, 1, 2, 3]))  # (C, k1, k2, k3, F)
        grads = {"w": np.moveaxis(dw, 0, 3), "b": dy.sum(axis=(0, 1, 2, 3))}
        if not need_dx:
            return None, grads
        # one matmul for every kernel offset, then scatter back
        cols = dy @ w.reshape(-1, w.shape[4]).T  # (B, O1, O2, O3, k1*k2*k3*C)
        cols = cols.reshape(*dy.shape[:4], k1, k2, k3, w.shape[3])
        dx = np.zeros_like(x)
        for i in range(k1):
            for j in range(k2):
                for k in range(k3):
                    dx[:, i:i + o1, j:j + o2, k:k + o3, :] += cols[:, :, :, :, i, j, k, :]
        return dx, grads


@dataclass(frozen=True)
class Conv1D:
    """Valid 1-D cross-correlation. Input ``(B, T, C)``, kernel ``(k, C, F)``."""

    kernel: int
    channels: int

    def out_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeMismatch(f"Conv1D expects (T, C), got {in_shape}")
        t = in_shape[0] - self.kernel + 1
        if t < 1:
            raise ShapeMismatch(f"kernel {self.kernel} does not fit input {in_shape}")
        return (t, self.channels)

    def init(self, rng, in_shape) -> Params:
        c = in_shape[-1]
        return {
            "w": _fan_in_uniform(rng, (self.kernel, c, self.channels), self.kernel * c),
            "b": np.zeros(self.channels),
        }

    def forward(self, p, x):
        w = p["w"]
        if x.ndim != 3 or x.shape[-1] != w.shape[1]:
            raise ShapeMismatch(f"Conv1D input {x.shape} vs kernel {w.shape}")
        self.out_shape(x.shape[1:])
        win = sliding_window_view(x, w.shape[0], axis=1)  # (B, T', C, k)
        y = np.tensordot(win, w, axes=([3, 2], [0, 1])) + p["b"]
        return y, x

    def backward(self, p, x, dy, need_dx=True):
        w = p["w"]
        k = w.shape[0]
        t = dy.shape[1]
        win = sliding_window_view(x, k, axis=1)
        dw = np.moveaxis(np.tensordot(win, dy, axes=([0, 1], [0, 1])), 0, 1)  # (k, C, F)
        grads = {"w": dw, "b": dy.sum(axis=(0, 1))}
        if not need_dx:
            return None, grads
        dx = np.zeros_like(x)
        for i in range(k):
            dx[:, i:i + t, :] += dy @ w[i].T
        return dx, grads


@dataclass(frozen=True)
class Standardize:
    """Fixed per-channel affine normalization ``(x - mean) / std`` over the last axis.

    ``mean``/``std`` are set from data with :func:`fit_standardization` and
    receive no gradient.
    """

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def init(self, rng, in_shape) -> Params:
        return {"mean": np.zeros(in_shape[-1]), "std": np.ones(in_shape[-1])}

    def forward(self, p, x):
        return (x - p["mean"]) / p["std"], p["std"]

    def backward(self, p, std, dy, need_dx=True):
        return (dy / std if need_dx else None), {}


@dataclass(frozen=True)
class Flatten:
    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def init(self, rng, in_shape) -> Params:
        return {}

    def forward(self, p, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, p, shape, dy, need_dx=True):
        return dy.reshape(shape), {}


@dataclass(frozen=True)
class Dense:
    width: int
    zero_init: bool = False

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeMismatch(f"Dense expects a flat input, got {in_shape}")
        return (self.width,)

    def init(self, rng, in_shape) -> Params:
        n = in_shape[0]
        if self.zero_init:
            w = np.zeros((n, self.width))
        else:
            w = _fan_in_uniform(rng, (n, self.width), n)
        return {"w": w, "b": np.zeros(self.width)}

    def forward(self, p, x):
        if x.ndim != 2 or x.shape[1] != p["w"].shape[0]:
            raise ShapeMismatch(f"Dense input {x.shape} vs weight {p['w'].shape}")
        return x @ p["w"] + p["b"], x

    def backward(self, p, x, dy, need_dx=True):
        dx = dy @ p["w"].T if need_dx else None
        return dx, {"w": x.T @ dy, "b": dy.sum(axis=0)}


@dataclass(frozen=True)
class ReLU:
    def out_shape(self, in_shape):
        return tuple(in_shape)

    def init(self, rng, in_shape) -> Params:
        return {}

    def forward(self, p, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, p, mask, dy, need_dx=True):
        return dy * mask, {}


@dataclass(frozen=True)
class NetworkSpec:
    """Named input branches, flattened and concatenated, then a dense trunk.

    ``inputs`` maps branch name to the per-sample input shape; ``branches``
    maps the same names to their layer stacks (an empty stack passes the input
    straight to the concatenation).
    """

    inputs: Mapping[str, tuple]
    branches: Mapping[str, tuple]
    trunk: tuple

    def __post_init__(self):
        self.validate()

    def validate(self) -> int:
        if set(self.inputs) != set(self.branches):
            raise ShapeMismatch("branch names must match input names")
        width = 0
        for name in self.inputs:
            shape = tuple(self.inputs[name])
            for layer in self.branches[name]:
                shape = layer.out_shape(shape)
            width += int(np.prod(shape))
        shape = (width,)
        for layer in self.trunk:
            shape = layer.out_shape(shape)
        if shape != (HEAD_WIDTH,):
            raise ShapeMismatch(f"network must end in width {HEAD_WIDTH}, got {shape}")
        return width

    def layers(self):
        """Yield ``(param_prefix, layer, input_shape)`` in forward order."""
        width = 0
        for name in self.inputs:
            shape = tuple(self.inputs[name])
            for i, layer in enumerate(self.branches[name]):
                yield f"{name}.{i}", layer, shape
                shape = layer.out_shape(shape)
            width += int(np.prod(shape))
        shape = (width,)
        for i, layer in enumerate(self.trunk):
            yield f"trunk.{i}", layer, shape
            shape = layer.out_shape(shape)


def orderbook_network(
    window_shape=(12, 10, 10, 2),
    trade_shape=(120, 11),
    conv3d_kernel=(2, 3, 3),
    conv3d_channels=8,
    conv1d_kernel=5,
    conv1d_channels=16,
    neurons=100,
    with_lt=True,
    zero_head=False,
) -> NetworkSpec:
    """The order-book network: ask/bid Conv3D branches, trade Conv1D branch."""
    conv3 = (Standardize(), Conv3D(tuple(conv3d_kernel), conv3d_channels), ReLU(), Flatten())
    inputs = {"ask": tuple(window_shape), "bid": tuple(window_shape), "trade": tuple(trade_shape)}
    branches = {
        "ask": conv3,
        "bid": conv3,
        "trade": (Standardize(), Conv1D(conv1d_kernel, conv1d_channels), ReLU(), Flatten()),
    }
    if with_lt:
        inputs["lt"] = (1,)
        branches["lt"] = ()
    trunk = (Dense(neurons), ReLU(), Dense(HEAD_WIDTH, zero_init=zero_head))
    return NetworkSpec(inputs=inputs, branches=branches, trunk=trunk)


def init_params(spec: NetworkSpec, seed: int) -> Params:
    rng = np.random.default_rng(seed)
    params: Params = {}
    for prefix, layer, shape in spec.layers():
        for k, v in layer.init(rng, shape).items():
            params[f"{prefix}.{k}"] = v
    return params


FIXED_SUFFIXES = (".mean", ".std")


def fit_standardization(spec: NetworkSpec, params: Params, inputs: Mapping[str, np.ndarray]) -> Params:
    """Set every branch-leading :class:`Standardize` layer from a sample of inputs."""
    params = dict(params)
    for name, stack in spec.branches.items():
        if stack and isinstance(stack[0], Standardize):
            x = np.asarray(inputs[name], dtype=np.float64)
            flat = x.reshape(-1, x.shape[-1])
            std = flat.std(axis=0)
            params[f"{name}.0.mean"] = flat.mean(axis=0)
            params[f"{name}.0.std"] = np.where(std > 1e-8, std, 1.0)
    return params


def copy_fixed(src: Params, dst: Params) -> Params:
    """Copy non-trainable normalization statistics from ``src`` into a copy of ``dst``."""
    out = dict(dst)
    for k, v in src.items():
        if k.endswith(FIXED_SUFFIXES) and k in out:
            out[k] = np.array(v, copy=True)
    return out


def _trainable(params: Params, prefix: str) -> bool:
    head = prefix + "."
    return any(k.startswith(head) and not k.endswith(FIXED_SUFFIXES) for k in params)


def _sub(params: Params, prefix: str) -> Params:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + ".") and "." not in k[n:]}


def _forward(spec: NetworkSpec, params: Params, inputs: Mapping[str, np.ndarray]):
    tape = []
    feats = []
    batch = None
    for name, shape in spec.inputs.items():
        if name not in inputs:
            raise ShapeMismatch(f"missing input {name!r}")
        x = np.asarray(inputs[name], dtype=np.float64)
        if x.shape[1:] != tuple(shape):
            raise ShapeMismatch(f"input {name!r}: expected (B, {shape}), got {x.shape}")
        if batch is None:
            batch = x.shape[0]
        elif x.shape[0] != batch:
            raise ShapeMismatch("inputs disagree on batch size")
        for i, layer in enumerate(spec.branches[name]):
            prefix = f"{name}.{i}"
            x, cache = layer.forward(_sub(params, prefix), x)
            tape.append((prefix, layer, cache))
        feats.append(x.reshape(x.shape[0], -1))
    h = np.concatenate(feats, axis=1)
    for i, layer in enumerate(spec.trunk):
        prefix = f"trunk.{i}"
        h, cache = layer.forward(_sub(params, prefix), h)
        tape.append((prefix, layer, cache))
    return h, tape, [f.shape[1] for f in feats]


def forward(spec: NetworkSpec, params: Params, inputs: Mapping[str, np.ndarray]) -> np.ndarray:
    """Return the ``(B, 2)`` head outputs."""
    return _forward(spec, params, inputs)[0]


def gradients(
    spec: NetworkSpec,
    params: Params,
    inputs: Mapping[str, np.ndarray],
    target: np.ndarray,
    mask: np.ndarray | None = None,
    *,
    offset: np.ndarray | None = None,
) -> tuple[float, Params]:
    """Loss and exact gradients of ``0.5 * mean_b sum_a mask * (out + offset - target)**2``.

    ``offset`` is added to the network output before the loss (used for
    mixing a frozen Q estimate into the prediction); it carries no gradient.
    """
    out, tape, widths = _forward(spec, params, inputs)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != out.shape:
        raise ShapeMismatch(f"target {target.shape} vs output {out.shape}")
    mask = np.ones_like(out) if mask is None else np.asarray(mask, dtype=np.float64)
    pred = out if offset is None else out + offset
    err = (pred - target) * mask
    batch = out.shape[0]
    loss = 0.5 * float(np.sum(err * err)) / batch
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    grads: Params = {k: np.zeros_like(v) for k, v in params.items()}
    d = err / batch
    n_trunk = len(spec.trunk)
    trunk_tape = tape[len(tape) - n_trunk:]
    for prefix, layer, cache in reversed(trunk_tape):
        d, g = layer.backward(_sub(params, prefix), cache, d)
        for k, v in g.items():
            grads[f"{prefix}.{k}"] += v
    splits = np.cumsum(widths)[:-1]
    pieces = np.split(d, splits, axis=1)
    pos = 0
    for (name, shape), piece in zip(spec.inputs.items(), pieces):
        stack = spec.branches[name]
        own = tape[pos:pos + len(stack)]
        pos += len(stack)
        if not own:
            continue
        out_shape = tuple(shape)
        for layer in stack:
            out_shape = layer.out_shape(out_shape)
        dx = piece.reshape(batch, *out_shape)
        # nothing below the first trainable layer needs an input gradient
        first = next((d for d, (prefix, _, _) in enumerate(own) if _trainable(params, prefix)), 0)
        for depth, (prefix, layer, cache) in reversed(list(enumerate(own))):
            if depth < first:
                break
            dx, g = layer.backward(_sub(params, prefix), cache, dx, need_dx=depth > first)
            for k, v in g.items():
                grads[f"{prefix}.{k}"] += v
    return loss, grads


@dataclass
class AdamState:
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def optimizer_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Params:
    """One bias-corrected Adam update. Returns new arrays; ``state`` is advanced in place."""
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    new: Params = {}
    for k, p in params.items():
        if k.endswith(FIXED_SUFFIXES):
            new[k] = p
            continue
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeMismatch(f"grad {k}: {g.shape} vs {p.shape}")
        m = beta1 * state.m.get(k, 0.0) + (1 - beta1) * g
        v = beta2 * state.v.get(k, 0.0) + (1 - beta2) * g * g
        state.m[k], state.v[k] = m, v
        new[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return new


def params_checksum(params: Params) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k], dtype="<f8").tobytes())
    return h.hexdigest()


MAGIC = b"SGNN1"


def save_checkpoint(path, params: Params) -> None:
    """Write ``params`` in the self-describing ``SGNN1`` binary format."""
    chunks = [MAGIC, struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> Params:
    buf = Path(path).read_bytes()
    if buf[:5] != MAGIC:
        raise ValueError(f"{path}: not an SGNN1 checkpoint")
    pos = 5
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    params: Params = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        params[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(dims).copy()
        pos += 8 * size
    return params
