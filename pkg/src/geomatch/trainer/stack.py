"""Trainable feature post-processor with manual reverse-mode gradients.

The stack is a flat list of layers over a closed op set (conv1x1, conv3x3
with same padding, relu, residual_add); the output is L2-normalized per
location. Parameters and gradients live in one flat float64 vector so the
optimizer and finite-difference checks can treat the model as a plain
vector function. All math is 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError, NumericalError
from ..tensor import FeatureMap

LAYER_KINDS = ("conv1x1", "conv3x3", "relu", "residual_add")


@dataclass(frozen=True)
class LayerSpec:
    """One layer. residual_add layers add the input of layer `skip_from`."""

    kind: str
    in_channels: int
    out_channels: int
    skip_from: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise InputError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("relu", "residual_add") and self.in_channels != self.out_channels:
            raise InputError(f"{self.kind} cannot change channel count")
        if self.kind == "residual_add" and self.skip_from is None:
            raise InputError("residual_add needs skip_from")

    @property
    def n_params(self) -> int:
        if self.kind == "conv1x1":
            return self.out_channels * self.in_channels + self.out_channels
        if self.kind == "conv3x3":
            return self.out_channels * self.in_channels * 9 + self.out_channels
        return 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "in_channels": self.in_channels,
                "out_channels": self.out_channels, "skip_from": self.skip_from}

    @classmethod
    def from_dict(cls, doc: dict) -> "LayerSpec":
        return cls(kind=doc["kind"], in_channels=int(doc["in_channels"]),
                   out_channels=int(doc["out_channels"]),
                   skip_from=None if doc.get("skip_from") is None else int(doc["skip_from"]))


def bottleneck_specs(channels: int, bottleneck: int = 64, blocks: int = 2) -> tuple[LayerSpec, ...]:
    """Default architecture: `blocks` bottleneck blocks (1x1 reduce, relu,
    3x3, relu, 1x1 expand, residual add). The expand conv carries no
    rectification so the block can emit signed corrections and, zero
    initialized, starts as an exact identity."""
    specs: list[LayerSpec] = []
    for _ in range(blocks):
        start = len(specs)
        specs.append(LayerSpec("conv1x1", channels, bottleneck))
        specs.append(LayerSpec("relu", bottleneck, bottleneck))
        specs.append(LayerSpec("conv3x3", bottleneck, bottleneck))
        specs.append(LayerSpec("relu", bottleneck, bottleneck))
        specs.append(LayerSpec("conv1x1", bottleneck, channels))
        specs.append(LayerSpec("residual_add", channels, channels, skip_from=start))
    return tuple(specs)


def _validate_specs(specs: tuple[LayerSpec, ...]) -> None:
    if not specs:
        raise InputError("empty layer stack")
    for i, spec in enumerate(specs):
        if i > 0 and spec.in_channels != specs[i - 1].out_channels:
            raise InputError(f"layer {i} expects {spec.in_channels} channels, "
                             f"gets {specs[i - 1].out_channels}")
        if spec.kind == "residual_add":
            if not 0 <= spec.skip_from <= i:
                raise InputError(f"layer {i}: skip_from {spec.skip_from} out of range")
            src = specs[spec.skip_from].in_channels if spec.skip_from < len(specs) else 0
            if src != spec.in_channels:
                raise InputError(f"layer {i}: residual add joins {src} to {spec.in_channels} channels")


@dataclass
class PostProcessor:
    """Layer specs plus flat parameter and gradient vectors."""

    specs: tuple[LayerSpec, ...]
    params: np.ndarray
    grads: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        _validate_specs(self.specs)
        total = sum(s.n_params for s in self.specs)
        self.params = np.asarray(self.params, dtype=np.float64).reshape(-1)
        if self.params.size != total:
            raise InputError(f"parameter vector has {self.params.size} entries, stack needs {total}")
        if self.grads is None:
            self.grads = np.zeros(total, dtype=np.float64)
        offsets = []
        pos = 0
        for s in self.specs:
            offsets.append(pos)
            pos += s.n_params
        self._offsets = offsets

    @property
    def in_channels(self) -> int:
        return self.specs[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.specs[-1].out_channels

    def layer_params(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(weights, bias) views for conv layer i."""
        s = self.specs[i]
        off = self._offsets[i]
        if s.kind == "conv1x1":
            nw = s.out_channels * s.in_channels
            w = self.params[off:off + nw].reshape(s.out_channels, s.in_channels)
        elif s.kind == "conv3x3":
            nw = s.out_channels * s.in_channels * 9
            w = self.params[off:off + nw].reshape(s.out_channels, s.in_channels, 3, 3)
        else:
            raise InputError(f"layer {i} ({s.kind}) has no parameters")
        b = self.params[off + nw:off + s.n_params]
        return w, b

    def _layer_grads(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s = self.specs[i]
        off = self._offsets[i]
        if s.kind == "conv1x1":
            nw = s.out_channels * s.in_channels
            g = self.grads[off:off + nw].reshape(s.out_channels, s.in_channels)
        else:
            nw = s.out_channels * s.in_channels * 9
            g = self.grads[off:off + nw].reshape(s.out_channels, s.in_channels, 3, 3)
        return g, self.grads[off + nw:off + s.n_params]

    @classmethod
    def build(cls, specs: tuple[LayerSpec, ...], seed: int = 0,
              zero_init: tuple[int, ...] | None = None) -> "PostProcessor":
        """Fan-in-scaled uniform kernel init, zero biases.

        zero_init lists layer indices initialized to zero; default: the last
        conv before every residual_add, so each block starts as identity.
        """
        _validate_specs(specs)
        if zero_init is None:
            zeroed = set()
            for i, s in enumerate(specs):
                if s.kind == "residual_add":
                    for j in range(i - 1, -1, -1):
                        if specs[j].kind in ("conv1x1", "conv3x3"):
                            zeroed.add(j)
                            break
        else:
            zeroed = set(zero_init)
        rng = np.random.Generator(np.random.Philox(seed))
        chunks = []
        for i, s in enumerate(specs):
            if s.n_params == 0:
                continue
            k = 1 if s.kind == "conv1x1" else 3
            nw = s.out_channels * s.in_channels * k * k
            if i in zeroed:
                chunks.append(np.zeros(s.n_params, dtype=np.float64))
                continue
            bound = 1.0 / np.sqrt(s.in_channels * k * k)
            w = rng.uniform(-bound, bound, size=nw)
            chunks.append(np.concatenate([w, np.zeros(s.out_channels)]))
        params = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(specs=specs, params=params)

    def zero_grads(self) -> None:
        self.grads[:] = 0.0

    # forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Run the stack plus final per-location L2 normalization.

        Returns the normalized (H, W, C) float64 output and the activation
        cache backward() consumes.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise InputError(f"input must be (H, W, {self.in_channels})")
        acts = [x]
        for i, s in enumerate(self.specs):
            cur = acts[i]
            if s.kind == "conv1x1":
                w, b = self.layer_params(i)
                acts.append(cur @ w.T + b)
            elif s.kind == "conv3x3":
                acts.append(self._conv3x3_forward(i, cur))
            elif s.kind == "relu":
                acts.append(np.maximum(cur, 0.0))
            else:
                acts.append(cur + acts[s.skip_from])
        raw = acts[-1]
        norms = np.sqrt(np.einsum("hwc,hwc->hw", raw, raw))
        bad = norms < 1e-12
        if np.any(bad):
            y, x_ = [int(v) for v in np.argwhere(bad)[0]]
            raise NumericalError(f"degenerate descriptor at cell (y={y}, x={x_})")
        out = raw / norms[:, :, None]
        return out, [acts, norms, out]

    def _conv3x3_forward(self, i: int, x: np.ndarray) -> np.ndarray:
        w, b = self.layer_params(i)
        h, wid, cin = x.shape
        xp = np.zeros((h + 2, wid + 2, cin), dtype=np.float64)
        xp[1:-1, 1:-1] = x
        cols = np.empty((h, wid, 3, 3, cin), dtype=np.float64)
        for dy in range(3):
            for dx in range(3):
                cols[:, :, dy, dx, :] = xp[dy:dy + h, dx:dx + wid, :]
        flat = cols.reshape(h * wid, 9 * cin)
        # kernel laid out (out, in, ky, kx) -> match cols order (ky, kx, in)
        kmat = np.transpose(w, (0, 2, 3, 1)).reshape(w.shape[0], 9 * cin)
        return (flat @ kmat.T + b).reshape(h, wid, w.shape[0])

    def backward(self, cache: list, d_out: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; return gradient wrt the input."""
        acts, norms, out = cache
        d_out = np.asarray(d_out, dtype=np.float64)
        dots = np.einsum("hwc,hwc->hw", out, d_out)
        grad = (d_out - out * dots[:, :, None]) / norms[:, :, None]
        d_acts = [None] * len(acts)
        d_acts[-1] = grad
        for i in range(len(self.specs) - 1, -1, -1):
            s = self.specs[i]
            dy = d_acts[i + 1]
            if s.kind == "conv1x1":
                w, _ = self.layer_params(i)
                gw, gb = self._layer_grads(i)
                x = acts[i]
                gw += np.einsum("hwo,hwi->oi", dy, x)
                gb += dy.sum(axis=(0, 1))
                dx = dy @ w
            elif s.kind == "conv3x3":
                dx = self._conv3x3_backward(i, acts[i], dy)
            elif s.kind == "relu":
                dx = dy * (acts[i] > 0.0)
            else:
                dx = dy
                prev = d_acts[s.skip_from]
                d_acts[s.skip_from] = dy.copy() if prev is None else prev + dy
            prev = d_acts[i]
            d_acts[i] = dx if prev is None else prev + dx
        return d_acts[0]

    def _conv3x3_backward(self, i: int, x: np.ndarray, dy: np.ndarray) -> np.ndarray:
        w, _ = self.layer_params(i)
        gw, gb = self._layer_grads(i)
        h, wid, cin = x.shape
        cout = w.shape[0]
        xp = np.zeros((h + 2, wid + 2, cin), dtype=np.float64)
        xp[1:-1, 1:-1] = x
        cols = np.empty((h, wid, 3, 3, cin), dtype=np.float64)
        for dyk in range(3):
            for dxk in range(3):
                cols[:, :, dyk, dxk, :] = xp[dyk:dyk + h, dxk:dxk + wid, :]
        flat = cols.reshape(h * wid, 9 * cin)
        dy_flat = dy.reshape(h * wid, cout)
        gk = dy_flat.T @ flat  # (out, 9*cin) in (ky, kx, in) order
        gw += np.transpose(gk.reshape(cout, 3, 3, cin), (0, 3, 1, 2))
        gb += dy_flat.sum(axis=0)
        kmat = np.transpose(w, (0, 2, 3, 1)).reshape(cout, 9 * cin)
        dcols = (dy_flat @ kmat).reshape(h, wid, 3, 3, cin)
        dxp = np.zeros_like(xp)
        for dyk in range(3):
            for dxk in range(3):
                dxp[dyk:dyk + h, dxk:dxk + wid, :] += dcols[:, :, dyk, dxk, :]
        return dxp[1:-1, 1:-1, :]


def postprocess(proc: PostProcessor, f: FeatureMap) -> FeatureMap:
    """Inference-facing wrapper: float32 in, normalized float32 out."""
    out, _ = proc.forward(np.asarray(f.data, dtype=np.float64))
    return FeatureMap(data=out.astype(np.float32), normalized=True)
