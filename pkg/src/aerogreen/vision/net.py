"""A small convolutional classifier written directly on numpy.

Three 3x3 conv blocks (ReLU, 2x2 max pool) feed a two-layer head. All
math is float64 and every op has an explicit backward pass, which keeps
the whole model checkable by finite differences. Convolution uses the
im2col trick so the inner loop is one matrix product.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..simcore import HEALTH_CLASSES

_NET_STREAM = 0x636E6574
CHECKPOINT_FORMAT = "aerogreen-convnet"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.empty((c, k, k, n, h, w))
    for dr in range(k):
        for dc in range(k):
            windows[:, dr, dc] = xp[:, :, dr : dr + h, dc : dc + w].transpose(
                1, 0, 2, 3
            )
    return windows.reshape(c * k * k, n * h * w)


def _col2im(cols: np.ndarray, shape: tuple, k: int, pad: int) -> np.ndarray:
    n, c, h, w = shape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    windows = cols.reshape(c, k, k, n, h, w)
    for dr in range(k):
        for dc in range(k):
            dxp[:, :, dr : dr + h, dc : dc + w] += windows[:, dr, dc].transpose(
                1, 0, 2, 3
            )
    return dxp[:, :, pad : pad + h, pad : pad + w]


def _conv_forward(x, w, b):
    n, _, h, wd = x.shape
    f = w.shape[0]
    cols = _im2col(x, 3, 1)
    out = (w.reshape(f, -1) @ cols + b[:, None]).reshape(f, n, h, wd)
    return out.transpose(1, 0, 2, 3), (x.shape, cols, w)


def _conv_backward(dout, cache):
    x_shape, cols, w = cache
    f = w.shape[0]
    dm = dout.transpose(1, 0, 2, 3).reshape(f, -1)
    dw = (dm @ cols.T).reshape(w.shape)
    db = dm.sum(axis=1)
    dcols = w.reshape(f, -1).T @ dm
    return _col2im(dcols, x_shape, 3, 1), dw, db


def _pool_forward(x):
    n, c, h, w = x.shape
    groups = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    # argmax takes the first maximum, so pooling ties break deterministically
    idx = groups.argmax(axis=-1)
    out = np.take_along_axis(groups, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def _pool_backward(dout, cache):
    idx, (n, c, h, w) = cache
    spread = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(spread, idx[..., None], dout[..., None], axis=-1)
    return (
        spread.reshape(n, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_ce(logits, labels):
    p = softmax(logits)
    n = len(labels)
    picked = np.clip(p[np.arange(n), labels], 1e-300, None)
    loss = -float(np.log(picked).mean())
    dlogits = p.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def to_input(pixels: np.ndarray) -> np.ndarray:
    """uint8 HxWx3 -> centered float64 CxHxW."""
    return (pixels.astype(np.float64) / 255.0 - 0.5).transpose(2, 0, 1)


class ConvNet:
    """Parameter container plus forward/backward over the fixed topology."""

    def __init__(
        self,
        seed: int = 0,
        channels: tuple[int, ...] = (8, 16, 32),
        hidden: int = 64,
        input_shape: tuple[int, int, int] = (3, 64, 64),
        classes: tuple[str, ...] = HEALTH_CLASSES,
    ) -> None:
        c_in, h, w = input_shape
        factor = 2 ** len(channels)
        if h % factor or w % factor:
            raise ModelError(
                f"input {h}x{w} not divisible by pooling factor {factor}"
            )
        self.channels = tuple(int(c) for c in channels)
        self.hidden = int(hidden)
        self.input_shape = (int(c_in), int(h), int(w))
        self.classes = tuple(classes)
        rng = np.random.default_rng(np.random.SeedSequence([_NET_STREAM, seed]))
        params: dict[str, np.ndarray] = {}
        for i, c_out in enumerate(self.channels, start=1):
            scale = math.sqrt(2.0 / (c_in * 9))
            params[f"conv{i}_w"] = rng.normal(0.0, scale, (c_out, c_in, 3, 3))
            params[f"conv{i}_b"] = np.zeros(c_out)
            c_in = c_out
        feat = c_in * (h // factor) * (w // factor)
        params["fc1_w"] = rng.normal(0.0, math.sqrt(2.0 / feat), (feat, hidden))
        params["fc1_b"] = np.zeros(hidden)
        params["fc2_w"] = rng.normal(
            0.0, math.sqrt(2.0 / hidden), (hidden, len(self.classes))
        )
        params["fc2_b"] = np.zeros(len(self.classes))
        self.params = params

    @property
    def backbone_names(self) -> tuple[str, ...]:
        return tuple(k for k in self.params if k.startswith("conv"))

    @property
    def head_names(self) -> tuple[str, ...]:
        return tuple(k for k in self.params if k.startswith("fc"))

    def _check_batch(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ModelError(
                f"batch shape {x.shape} does not match input {self.input_shape}"
            )

    def _forward(self, x: np.ndarray):
        self._check_batch(x)
        p = self.params
        caches = []
        out = x
        for i in range(1, len(self.channels) + 1):
            out, conv_cache = _conv_forward(out, p[f"conv{i}_w"], p[f"conv{i}_b"])
            relu_mask = out > 0
            out = out * relu_mask
            out, pool_cache = _pool_forward(out)
            caches.append((conv_cache, relu_mask, pool_cache))
        flat = out.reshape(len(x), -1)
        pre = flat @ p["fc1_w"] + p["fc1_b"]
        hid_mask = pre > 0
        hid = pre * hid_mask
        logits = hid @ p["fc2_w"] + p["fc2_b"]
        caches.append((flat, hid_mask, hid, out.shape))
        return logits, caches

    def _backward(self, dlogits: np.ndarray, caches) -> dict[str, np.ndarray]:
        p = self.params
        flat, hid_mask, hid, conv_out_shape = caches[-1]
        grads: dict[str, np.ndarray] = {}
        grads["fc2_w"] = hid.T @ dlogits
        grads["fc2_b"] = dlogits.sum(axis=0)
        dhid = (dlogits @ p["fc2_w"].T) * hid_mask
        grads["fc1_w"] = flat.T @ dhid
        grads["fc1_b"] = dhid.sum(axis=0)
        dout = (dhid @ p["fc1_w"].T).reshape(conv_out_shape)
        for i in range(len(self.channels), 0, -1):
            conv_cache, relu_mask, pool_cache = caches[i - 1]
            dout = _pool_backward(dout, pool_cache)
            dout = dout * relu_mask
            dout, grads[f"conv{i}_w"], grads[f"conv{i}_b"] = _conv_backward(
                dout, conv_cache
            )
        return grads

    def forward(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self._forward(x)
        return logits

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray):
        logits, caches = self._forward(x)
        loss, dlogits = _softmax_ce(logits, labels)
        return loss, self._backward(dlogits, caches)

    def loss_with_signature(self, x: np.ndarray, labels: np.ndarray):
        """Loss plus a fingerprint of every ReLU branch and pool argmax.

        Two evaluations with equal fingerprints lie on the same smooth
        piece of the loss, which is what finite differences require.
        """
        logits, caches = self._forward(x)
        loss, _ = _softmax_ce(logits, labels)
        parts = []
        for _, relu_mask, (pool_idx, _) in caches[:-1]:
            parts.append(np.packbits(relu_mask).tobytes())
            parts.append(pool_idx.astype(np.uint8).tobytes())
        parts.append(np.packbits(caches[-1][1]).tobytes())
        return loss, b"".join(parts)

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x))

    def predict(self, pixels: np.ndarray) -> tuple[str, np.ndarray]:
        """Classify one uint8 image; ties go to the lowest class index."""
        probs = self.predict_batch(to_input(pixels)[None])[0]
        return self.classes[int(np.argmax(probs))], probs


def gradient_check(
    model,
    x: np.ndarray,
    labels: np.ndarray,
    epsilon: float = 1e-4,
    samples: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Works on anything exposing `params` and `loss_and_grads`; samples
    parameters uniformly across all tensors. Central differences only
    mean anything on a smooth neighborhood, so when the model exposes
    loss_with_signature, draws whose perturbation flips a ReLU branch or
    a pooling argmax are discarded and redrawn.
    """
    _, grads = model.loss_and_grads(x, labels)
    probe = getattr(model, "loss_with_signature", None)
    if probe is None:
        def probe(px, py):
            return model.loss_and_grads(px, py)[0], b""
    _, center_sig = probe(x, labels)
    names = sorted(model.params)
    sizes = np.array([model.params[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(np.random.SeedSequence([_NET_STREAM, seed, 1]))
    worst = 0.0
    checked = 0
    attempts = 0
    while checked < samples:
        attempts += 1
        if attempts > samples * 10:
            raise ModelError(
                f"only {checked} of {samples} draws landed on smooth "
                f"neighborhoods; reduce epsilon"
            )
        flat_idx = int(rng.integers(0, offsets[-1]))
        slot = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        name = names[slot]
        local = int(flat_idx - offsets[slot])
        tensor = model.params[name]
        saved = tensor.flat[local]
        tensor.flat[local] = saved + epsilon
        hi, sig_hi = probe(x, labels)
        tensor.flat[local] = saved - epsilon
        lo, sig_lo = probe(x, labels)
        tensor.flat[local] = saved
        if sig_hi != center_sig or sig_lo != center_sig:
            continue
        checked += 1
        numeric = (hi - lo) / (2.0 * epsilon)
        analytic = grads[name].flat[local]
        denom = max(1e-12, abs(analytic) + abs(numeric))
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def save_model(model: ConvNet, path: str | Path) -> None:
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "channels": list(model.channels),
        "hidden": model.hidden,
        "input_shape": list(model.input_shape),
        "classes": list(model.classes),
    }
    arrays = {f"param_{k}": v for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.bytes_(json.dumps(meta)), **arrays)


def load_model(path: str | Path) -> ConvNet:
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"].item()).decode("utf-8"))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ModelError(f"{path} is not a model checkpoint")
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ModelError(
                    f"checkpoint version {meta.get('version')} unsupported"
                )
            model = ConvNet(
                channels=tuple(meta["channels"]),
                hidden=meta["hidden"],
                input_shape=tuple(meta["input_shape"]),
                classes=tuple(meta["classes"]),
            )
            for name in model.params:
                model.params[name] = data[f"param_{name}"].copy()
            return model
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"cannot load model from {path}: {exc}") from exc
