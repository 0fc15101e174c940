"""Minimal NN engine: strided conv / transposed conv, ReLU, MSE, RMSProp.

Tensors are numpy arrays shaped (batch, channels, height, width). Layers
cache their forward inputs so ``backward`` can be called right after
``forward``. Two convolution routes exist behind the same contract: a
direct nested-loop reference and a lowered (im2col) fast path; the fast
path is the default and is tested for equivalence against the reference.

All convolutions use "same"-style zero padding of (k-1)/2 (odd k only), so
a stride-s conv maps spatial extent H to ceil(H/s) and its transpose maps
H to H*s.
"""

import numpy as np


def conv_out_extent(extent, stride):
    """Spatial size after a same-padded strided conv: ceil(extent/stride)."""
    return -(-extent // stride)


def _out_dims(h, w, k, stride, pad):
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def _pad_channel_first(x, pad):
    """Padded copy of (N, C, H, W) input in (C, N, H+2p, W+2p) layout."""
    n, c, h, w = x.shape
    xpc = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xpc[:, :, pad:pad + h, pad:pad + w] = x.transpose(1, 0, 2, 3)
    return xpc


def _shifted_view(xpc, u, v, stride, out_h, out_w):
    """Strided window of the padded input aligned with kernel tap (u, v)."""
    return xpc[:, :,
               u:u + stride * (out_h - 1) + 1:stride,
               v:v + stride * (out_w - 1) + 1:stride]


def _im2col(x, k, stride, pad):
    """Lower the input to a (C*k*k, N*out_h*out_w) patch matrix.

    Row order is (channel, tap row, tap col), matching the flattening of a
    (co, ci, k, k) weight, so a convolution becomes one GEMM.
    """
    n, ci, h, w = x.shape
    out_h, out_w = _out_dims(h, w, k, stride, pad)
    xpc = _pad_channel_first(x, pad)
    cols = np.empty((ci, k, k, n * out_h * out_w), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            cols[:, u, v, :] = _shifted_view(
                xpc, u, v, stride, out_h, out_w).reshape(ci, -1)
    return cols.reshape(ci * k * k, -1), out_h, out_w


def _conv_fwd(x, w, b, stride, pad):
    n = x.shape[0]
    co, _, k, _ = w.shape
    cols, out_h, out_w = _im2col(x, k, stride, pad)
    yc = np.matmul(w.reshape(co, -1), cols)
    y = yc.reshape(co, n, out_h, out_w).transpose(1, 0, 2, 3).copy()
    y += b[None, :, None, None]
    return y


def _conv_bwd_input(gy, w, stride, pad, x_shape):
    n, ci, h, wd = x_shape
    co, _, k, _ = w.shape
    _, _, out_h, out_w = gy.shape
    gyc = np.ascontiguousarray(gy.transpose(1, 0, 2, 3)).reshape(co, -1)
    colsg = np.matmul(w.reshape(co, -1).T, gyc).reshape(ci, k, k, -1)
    gxpc = np.zeros((ci, n, h + 2 * pad, wd + 2 * pad), dtype=gy.dtype)
    for u in range(k):
        for v in range(k):
            # taps land on disjoint regular grids, so += on the strided
            # view is a safe accumulation
            gs = _shifted_view(gxpc, u, v, stride, out_h, out_w)
            gs += colsg[:, u, v, :].reshape(ci, n, out_h, out_w)
    core = gxpc[:, :, pad:pad + h, pad:pad + wd] if pad else gxpc
    return core.transpose(1, 0, 2, 3).copy()


def _conv_bwd_weight(x, gy, w_shape, stride, pad):
    co, _, k, _ = w_shape
    cols, _, _ = _im2col(x, k, stride, pad)
    gyc = np.ascontiguousarray(gy.transpose(1, 0, 2, 3)).reshape(co, -1)
    gw = np.matmul(gyc, cols.T).reshape(w_shape)
    return gw, gy.sum(axis=(0, 2, 3))


def conv2d_direct(x, w, b, stride, pad):
    """Nested-loop reference convolution (slow; used as an oracle)."""
    n, ci, h, wd = x.shape
    co, _, k, _ = w.shape
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (wd + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    y = np.empty((n, co, out_h, out_w), dtype=x.dtype)
    for p in range(out_h):
        for q in range(out_w):
            window = xp[:, :, p * stride:p * stride + k, q * stride:q * stride + k]
            y[:, :, p, q] = np.einsum("ncuv,ocuv->no", window, w) + b
    return y


def _init_weight(shape, rng, dtype):
    fan_in = int(np.prod(shape[1:]))
    fan_out = shape[0] * shape[2] * shape[3]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class ConvLayer:
    """Strided 2D convolution, or its transpose when ``transposed=True``.

    A transposed layer applies the adjoint of the corresponding forward
    convolution, so its weight lives in conv orientation with the channel
    roles swapped: shape (in_channels, out_channels, k, k).
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride,
                 transposed=False, rng=None, dtype=np.float32):
        if kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd (same padding)")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.transposed = transposed
        self.pad = (kernel_size - 1) // 2
        if transposed:
            w_shape = (in_channels, out_channels, kernel_size, kernel_size)
        else:
            w_shape = (out_channels, in_channels, kernel_size, kernel_size)
        rng = rng or np.random.default_rng(0)
        self.w = _init_weight(w_shape, rng, dtype)
        self.b = np.zeros(out_channels, dtype=dtype)
        self._x = None

    @property
    def parameter_count(self):
        return self.w.size + self.b.size

    def params(self):
        return {"w": self.w, "b": self.b}

    def astype(self, dtype):
        self.w = self.w.astype(dtype)
        self.b = self.b.astype(dtype)
        return self

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[1]}"
            )
        self._x = x
        if self.transposed:
            n, ci, h, w = x.shape
            out_shape = (n, self.out_channels, h * self.stride, w * self.stride)
            y = _conv_bwd_input(x, self.w, self.stride, self.pad, out_shape)
            y += self.b[None, :, None, None]
            return y
        return _conv_fwd(x, self.w, self.b, self.stride, self.pad)

    def backward(self, gy):
        """Gradient w.r.t. input; parameter grads stored as .gw/.gb."""
        x = self._x
        if self.transposed:
            # forward was the adjoint, so input grad is the plain conv
            gx = _conv_fwd(gy, self.w, np.zeros(self.in_channels, gy.dtype),
                           self.stride, self.pad)
            self.gw, _ = _conv_bwd_weight(gy, x, self.w.shape, self.stride, self.pad)
            self.gb = gy.sum(axis=(0, 2, 3))
        else:
            gx = _conv_bwd_input(gy, self.w, self.stride, self.pad, x.shape)
            self.gw, self.gb = _conv_bwd_weight(x, gy, self.w.shape,
                                                self.stride, self.pad)
        if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(self.gw))):
            raise FloatingPointError("non-finite gradient in conv backward")
        return gx

    def grads(self):
        return {"w": self.gw, "b": self.gb}


def relu(x):
    return np.maximum(x, 0)


def relu_backward(gy, x):
    """Pass-through where x > 0; the subgradient at 0 is taken as 0."""
    return gy * (x > 0)


def mse_loss(pred, target):
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    return float(np.mean(diff * diff))


def mse_loss_backward(pred, target):
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return (2.0 / pred.size) * (pred - target)


class RmsPropState:
    """Per-parameter squared-gradient accumulators plus hyperparameters."""

    def __init__(self, rho=0.9, eps=1e-8, lr=1e-3):
        self.rho = rho
        self.eps = eps
        self.lr = lr
        self.v = {}

    def step(self, params, grads):
        """v <- rho v + (1-rho) g^2;  p <- p - lr * g / (sqrt(v) + eps)."""
        for name, p in params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {name!r}")
            v = self.v.get(name)
            if v is None:
                v = np.zeros_like(p, dtype=np.float64)
                self.v[name] = v
            v *= self.rho
            v += (1.0 - self.rho) * np.square(g, dtype=np.float64)
            p -= (self.lr * g / (np.sqrt(v) + self.eps)).astype(p.dtype)


def gradient_check(module, x, target=None, step=1e-5, seed=0, sample=None):
    """Max relative error of analytic vs central-difference gradients.

    ``module`` needs float64 ``forward(x)``/``backward(gy)`` and
    ``params()``/``grads()``. Loss is the MSE against ``target`` (random by
    default). Every input entry is checked; parameter entries are all
    checked unless ``sample`` caps the count, in which case a seeded
    uniform subset across all parameter tensors is used.
    """
    x = x.astype(np.float64)
    rng = np.random.default_rng(seed)
    y = module.forward(x)
    if target is None:
        target = rng.standard_normal(y.shape)

    def loss_now():
        return mse_loss(module.forward(x), target)

    gx = module.backward(mse_loss_backward(module.forward(x), target))
    analytic = {"__input__": gx}
    analytic.update(module.grads())

    params = module.params()
    entries = [("__input__", idx) for idx in range(x.size)]
    param_entries = [(name, idx) for name, p in params.items()
                     for idx in range(p.size)]
    if sample is not None and sample < len(param_entries):
        chosen = rng.choice(len(param_entries), size=sample, replace=False)
        param_entries = [param_entries[i] for i in sorted(chosen)]
    entries += param_entries

    tensors = {"__input__": x, **params}
    worst = 0.0
    for name, idx in entries:
        flat = tensors[name].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + step
        hi = loss_now()
        flat[idx] = orig - step
        lo = loss_now()
        flat[idx] = orig
        numeric = (hi - lo) / (2.0 * step)
        av = analytic[name].reshape(-1)[idx]
        denom = max(abs(av), abs(numeric), 1e-4)
        worst = max(worst, abs(av - numeric) / denom)
    return worst
