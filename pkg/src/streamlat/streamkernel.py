"""Executable streaming models with cached padding, plus an offline reference.

The streaming path (float32) keeps per-layer history buffers so that
feeding a signal block by block reproduces the offline result exactly,
for any partition of the input into whole compression blocks.  The
offline path is an independent, deliberately naive implementation
(full-signal convolutions in float64) that serves as the oracle for the
streaming-equivalence and receptive-field tests.

Non-causal layers (lookahead > 0) are made streamable by delaying each
layer's output until the frames it needs have arrived.  Stride-1 and
transposed layers absorb their lookahead purely as bookkeeping;
downsampling layers additionally shift their tap grid by a fixed offset
so the emitted stream is the offline output delayed by exactly
archgraph.cumulative_delay(spec) samples.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from . import pqmf
from .archgraph import (
    ArchitectureSpec,
    FilterbankSpec,
    LayerSpec,
    PlanStep,
    compression_ratio,
    cumulative_delay,
    lower,
)
from .errors import (
    DegenerateWeightsError,
    InfeasibleBlockError,
    ManifestError,
    ShapeError,
)

LEAKY_SLOPE = 0.2


# ---------------------------------------------------------------------------
# Small tensor wrapper (wire type for the block API)
# ---------------------------------------------------------------------------


@dataclass
class TensorBlock:
    """A (channels, frames) float32 block."""

    channels: int
    frames: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32).reshape(
            self.channels, self.frames
        )
        if not np.all(np.isfinite(self.data)):
            raise ShapeError("TensorBlock requires finite values")

    @staticmethod
    def mono(samples: np.ndarray) -> "TensorBlock":
        samples = np.asarray(samples, dtype=np.float32).reshape(-1)
        return TensorBlock(1, len(samples), samples[None, :])


# ---------------------------------------------------------------------------
# Streaming layers
# ---------------------------------------------------------------------------


def _leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


class _Conv:
    """Causal strided/dilated conv with cached history.

    tap_offset shifts all taps into the past; it realizes the extra
    delay needed when a lookahead layer is reconfigured for streaming.
    """

    def __init__(self, w, b, stride=1, dilation=1, tap_offset=0):
        self.w = np.asarray(w, dtype=np.float32)
        self.b = np.asarray(b, dtype=np.float32)
        self.out_ch, self.in_ch, self.k = self.w.shape
        self.stride = stride
        self.dilation = dilation
        self.tap_offset = tap_offset
        self.cache_len = (self.k - 1) * dilation + tap_offset
        # dense frequency-domain path pays off for long single-channel kernels
        self._use_fft = self.in_ch == 1 and self.out_ch == 1 and self.k >= 129
        if self._use_fft:
            # full convolution with this kernel evaluates y[m] = sum_j W_j x[m - j*d]
            wd = np.zeros((self.k - 1) * dilation + 1, dtype=np.float32)
            wd[:: dilation] = self.w[0, 0, :]
            self._wd = wd
        self.reset()

    def reset(self):
        self.cache = np.zeros((self.in_ch, self.cache_len), dtype=np.float32)

    def forward(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[1]
        if n % self.stride:
            raise ShapeError("conv block length must be a multiple of its stride")
        ext = np.concatenate([self.cache, x], axis=1)
        t_out = n // self.stride
        base = self.cache_len + self.stride - 1 - self.tap_offset
        if self._use_fft:
            # float64 keeps FFT round-off ~1e-16 so silent stretches stay silent
            full = sps.oaconvolve(ext[0].astype(np.float64), self._wd.astype(np.float64))
            y = full[base : base + n : self.stride][None, :].astype(np.float32)
        else:
            idx = (
                base
                + np.arange(t_out)[:, None] * self.stride
                - np.arange(self.k)[None, :] * self.dilation
            )
            g = ext[:, idx]  # (in, t_out, k)
            y = np.einsum("itk,oik->ot", g, self.w, optimize=True)
        y = y + self.b[:, None]
        if self.cache_len:
            self.cache = ext[:, -self.cache_len :].copy()
        return y


class _TConv:
    """Causal transposed conv: scatter each input frame over the next k outputs."""

    def __init__(self, w, b, stride):
        self.w = np.asarray(w, dtype=np.float32)
        self.b = np.asarray(b, dtype=np.float32)
        self.out_ch, self.in_ch, self.k = self.w.shape
        self.stride = stride
        self.carry_len = max(self.k - stride, 0)
        self.reset()

    def reset(self):
        self.carry = np.zeros((self.out_ch, self.carry_len), dtype=np.float32)

    def forward(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[1]
        s = self.stride
        buf = np.zeros((self.out_ch, n * s + self.carry_len), dtype=np.float32)
        if self.carry_len:
            buf[:, : self.carry_len] += self.carry
        contrib = np.einsum("oik,it->otk", self.w, x, optimize=True)
        for j in range(self.k):
            buf[:, j : j + n * s : s] += contrib[:, :, j]
        out = buf[:, : n * s] + self.b[:, None]
        if self.carry_len:
            self.carry = buf[:, n * s :].copy()
        return out


class _ResidualStack:
    """Dilated residual sublayers: x + pw(leaky(dconv(leaky(x))))."""

    def __init__(self, sublayers):
        self.sublayers = sublayers  # list of (dconv, pw)

    def reset(self):
        for dconv, pw in self.sublayers:
            dconv.reset()
            pw.reset()

    def forward(self, x: np.ndarray) -> np.ndarray:
        for dconv, pw in self.sublayers:
            h = pw.forward(_leaky(dconv.forward(_leaky(x))))
            x = x + h
        return x


class _Act:
    def __init__(self, variant):
        self.variant = variant

    def reset(self):
        pass

    def forward(self, x):
        return np.tanh(x) if self.variant == "tanh" else _leaky(x)


class _PqmfAnalysis:
    def __init__(self, bank):
        self.state = pqmf.AnalysisState(bank, dtype=np.float32)

    def reset(self):
        self.state.reset()

    def forward(self, x):
        return self.state.process(x[0])


class _PqmfSynthesis:
    def __init__(self, bank):
        self.state = pqmf.SynthesisState(bank, dtype=np.float32)

    def reset(self):
        self.state.reset()

    def forward(self, y):
        return self.state.process(y)[None, :]


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


def weight_shapes(spec: ArchitectureSpec) -> dict[str, tuple[int, ...]]:
    """Tensor name -> shape for every trainable tensor of a spec."""
    enc, dec = lower(spec)
    shapes: dict[str, tuple[int, ...]] = {}
    for step in enc + dec:
        cin, cout = step.channels
        if step.op == "conv":
            shapes[f"{step.name}.weight"] = (cout, cin, step.kernel)
            shapes[f"{step.name}.bias"] = (cout,)
        elif step.op == "tconv":
            shapes[f"{step.name}.weight"] = (cout, cin, step.kernel)
            shapes[f"{step.name}.bias"] = (cout,)
        elif step.op == "rstack":
            for i in range(len(step.dilations)):
                shapes[f"{step.name}.{i}.dconv.weight"] = (cout, cin, step.kernel)
                shapes[f"{step.name}.{i}.dconv.bias"] = (cout,)
                shapes[f"{step.name}.{i}.pw.weight"] = (cout, cin, 1)
                shapes[f"{step.name}.{i}.pw.bias"] = (cout,)
    return shapes


def init_weights(
    spec: ArchitectureSpec, seed: int = 0, zero_bias: bool = False
) -> dict[str, np.ndarray]:
    """Seeded uniform init: weights in [-a, a], a = 1/sqrt(fan_in * kernel)."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in weight_shapes(spec).items():
        if name.endswith(".bias"):
            if zero_bias:
                weights[name] = np.zeros(shape, dtype=np.float32)
            else:
                a = 1.0 / math.sqrt(max(weights[name[:-5] + ".weight"].shape[1], 1))
                weights[name] = rng.uniform(-a, a, size=shape).astype(np.float32)
        else:
            _, cin, k = shape
            a = 1.0 / math.sqrt(cin * k)
            weights[name] = rng.uniform(-a, a, size=shape).astype(np.float32)
    return weights


def _resolve_weight_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix == ".json":
        return p, p.with_suffix(".bin")
    if p.suffix == ".bin":
        return p.with_suffix(".json"), p
    return p.with_suffix(".json"), p.with_suffix(".bin")


def save_weights(weights: dict[str, np.ndarray], path) -> tuple[Path, Path]:
    """Write a manifest (.json) plus one little-endian float32 blob (.bin)."""
    manifest_path, blob_path = _resolve_weight_paths(path)
    tensors = []
    offset = 0
    with open(blob_path, "wb") as blob:
        for name in sorted(weights):
            arr = np.ascontiguousarray(weights[name], dtype="<f4")
            tensors.append(
                {"name": name, "shape": list(arr.shape), "offset": offset}
            )
            blob.write(arr.tobytes())
            offset += arr.nbytes
    with open(manifest_path, "w") as f:
        json.dump(
            {
                "dtype": "float32",
                "byte_order": "little",
                "blob": blob_path.name,
                "tensors": tensors,
            },
            f,
            indent=2,
        )
        f.write("\n")
    return manifest_path, blob_path


def load_weights(path) -> dict[str, np.ndarray]:
    manifest_path, blob_path = _resolve_weight_paths(path)
    with open(manifest_path) as f:
        manifest = json.load(f)
    blob_file = manifest_path.parent / manifest.get("blob", blob_path.name)
    raw = blob_file.read_bytes()
    weights = {}
    for t in manifest["tensors"]:
        shape = tuple(t["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(
            raw, dtype="<f4", count=count, offset=int(t["offset"])
        ).reshape(shape)
        weights[t["name"]] = arr.astype(np.float32)
    return weights


def _check_weights(spec: ArchitectureSpec, weights: dict[str, np.ndarray]) -> None:
    expected = weight_shapes(spec)
    bad = []
    for name, shape in expected.items():
        if name not in weights:
            bad.append(f"{name}: missing (expected shape {shape})")
        elif tuple(weights[name].shape) != shape:
            bad.append(
                f"{name}: shape {tuple(weights[name].shape)} != expected {shape}"
            )
    extra = set(weights) - set(expected)
    bad.extend(f"{name}: unexpected tensor" for name in sorted(extra))
    if bad:
        raise ManifestError("weight manifest mismatch:\n  " + "\n  ".join(bad))


# ---------------------------------------------------------------------------
# Model instance
# ---------------------------------------------------------------------------


def _delay_plan(steps: list[PlanStep]) -> tuple[list[int], int]:
    """Per-step tap offsets for streaming, and the final delay in output frames."""
    offsets = []
    delay = 0  # frames at the current step's input rate
    for step in steps:
        if step.op == "act":
            offsets.append(0)
        elif step.op == "conv":
            d_out = math.ceil((delay + step.lookahead) / step.stride)
            offsets.append(d_out * step.stride - step.lookahead - delay)
            delay = d_out
        elif step.op == "rstack":
            offsets.append(0)
            delay += step.lookahead
        elif step.op == "tconv":
            offsets.append(0)
            delay = (delay + step.lookahead) * step.stride
        elif step.op == "pqmf_analysis":
            d_out = math.ceil(delay / step.stride)
            offsets.append(d_out * step.stride - delay)
            delay = d_out
        elif step.op == "pqmf_synthesis":
            offsets.append(0)
            delay = delay * step.stride
    return offsets, delay


class ModelInstance:
    """Spec + weights + per-layer cached state, executable block by block."""

    def __init__(self, spec: ArchitectureSpec, weights: dict[str, np.ndarray]):
        spec.validate()
        _check_weights(spec, weights)
        self.spec = spec
        self.weights = weights
        self.bank = pqmf.design(spec.filterbank)
        self.compression_ratio = compression_ratio(spec)
        self.streaming_delay_samples = cumulative_delay(spec)
        enc_steps, dec_steps = lower(spec)
        self._enc_steps, self._dec_steps = enc_steps, dec_steps
        offsets, _ = _delay_plan(enc_steps + dec_steps)
        self._enc = [
            self._build(step, off)
            for step, off in zip(enc_steps, offsets[: len(enc_steps)])
        ]
        self._dec = [
            self._build(step, off)
            for step, off in zip(dec_steps, offsets[len(enc_steps) :])
        ]

    def _build(self, step: PlanStep, tap_offset: int):
        w = self.weights
        if step.op == "pqmf_analysis":
            layer = _PqmfAnalysis(self.bank)
            if tap_offset:
                raise AssertionError("filterbank front end cannot carry delay")
            return layer
        if step.op == "pqmf_synthesis":
            return _PqmfSynthesis(self.bank)
        if step.op == "act":
            return _Act(step.activation)
        if step.op == "conv":
            return _Conv(
                w[f"{step.name}.weight"],
                w[f"{step.name}.bias"],
                stride=step.stride,
                dilation=step.dilations[0] if step.dilations else 1,
                tap_offset=tap_offset,
            )
        if step.op == "tconv":
            return _TConv(
                w[f"{step.name}.weight"], w[f"{step.name}.bias"], stride=step.stride
            )
        if step.op == "rstack":
            subs = []
            for i, d in enumerate(step.dilations):
                subs.append(
                    (
                        _Conv(
                            w[f"{step.name}.{i}.dconv.weight"],
                            w[f"{step.name}.{i}.dconv.bias"],
                            dilation=d,
                        ),
                        _Conv(
                            w[f"{step.name}.{i}.pw.weight"],
                            w[f"{step.name}.{i}.pw.bias"],
                        ),
                    )
                )
            return _ResidualStack(subs)
        raise AssertionError(step.op)

    # -- state ------------------------------------------------------------

    def reset(self) -> None:
        for layer in self._enc + self._dec:
            layer.reset()

    @property
    def parameter_count(self) -> int:
        return sum(int(np.prod(w.shape)) for w in self.weights.values())

    # -- execution ---------------------------------------------------------

    def encode_block(self, audio: np.ndarray) -> np.ndarray:
        x = np.asarray(audio, dtype=np.float32)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[0] != 1:
            raise ShapeError("encoder input must be mono")
        if x.shape[1] % self.compression_ratio:
            raise InfeasibleBlockError(
                f"block of {x.shape[1]} frames is not a multiple of the "
                f"compression ratio ({self.compression_ratio})"
            )
        for layer in self._enc:
            x = layer.forward(x)
        return x

    def decode_block(self, latent: np.ndarray) -> np.ndarray:
        x = np.asarray(latent, dtype=np.float32)
        for layer in self._dec:
            x = layer.forward(x)
        return x

    def process_block_array(self, audio: np.ndarray) -> np.ndarray:
        return self.decode_block(self.encode_block(audio))


def instantiate(
    spec: ArchitectureSpec,
    seed: int | None = 0,
    weights_path=None,
    weights: dict[str, np.ndarray] | None = None,
    zero_bias: bool = False,
) -> ModelInstance:
    """Build an executable instance from seeded random or stored weights."""
    if weights is None:
        if weights_path is not None:
            weights = load_weights(weights_path)
        else:
            weights = init_weights(spec, seed=seed or 0, zero_bias=zero_bias)
    return ModelInstance(spec, weights)


def process_block(instance: ModelInstance, block: TensorBlock) -> TensorBlock:
    """Stream one block through the model (stateful)."""
    if block.channels != 1:
        raise ShapeError("process_block expects mono input")
    out = instance.process_block_array(block.data)
    return TensorBlock(out.shape[0], out.shape[1], out)


def stream_signal(
    instance: ModelInstance, audio: np.ndarray, block_samples: int | None = None
) -> np.ndarray:
    """Reset, then stream a whole signal; returns the mono output.

    With block_samples=None the signal is processed as a single block,
    which by the streaming-equivalence property yields the same samples
    as any finer partition.
    """
    instance.reset()
    x = np.asarray(audio, dtype=np.float32).reshape(-1)
    c_r = instance.compression_ratio
    usable = len(x) - len(x) % c_r
    x = x[:usable]
    if block_samples is None:
        return instance.process_block_array(x[None, :])[0]
    if block_samples < c_r or block_samples % c_r:
        raise InfeasibleBlockError(
            f"block of {block_samples} is not a positive multiple of {c_r}"
        )
    out = [
        instance.process_block_array(x[None, i : i + block_samples])[0]
        for i in range(0, usable - usable % block_samples, block_samples)
    ]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.float32)


def reconfigure_noncausal(instance: ModelInstance) -> ModelInstance:
    """Return a streaming-safe instance of a lookahead spec.

    Delay lines are sized so the streamed output equals the offline
    non-causal output delayed by cumulative_delay(spec) samples.  On a
    fully causal spec this is a no-op and only emits a warning.
    """
    if instance.streaming_delay_samples == 0:
        warnings.warn("reconfigure_noncausal called on a causal spec; no-op")
        fresh = ModelInstance(instance.spec, instance.weights)
        fresh.was_causal_noop = True
        return fresh
    fresh = ModelInstance(instance.spec, instance.weights)
    fresh.was_causal_noop = False
    return fresh


# ---------------------------------------------------------------------------
# Offline reference (oracle)
# ---------------------------------------------------------------------------


def _offline_conv(x, w, b, stride, dilation, lookahead):
    cin, t_in = x.shape
    cout = w.shape[0]
    t_out = t_in // stride
    pad = (w.shape[2] - 1) * dilation + lookahead + stride
    xp = np.concatenate([np.zeros((cin, pad)), x, np.zeros((cin, pad))], axis=1)
    idx = (
        pad
        + np.arange(t_out)[:, None] * stride
        + (stride - 1)
        + lookahead
        - np.arange(w.shape[2])[None, :] * dilation
    )
    y = np.zeros((cout, t_out))
    for o in range(cout):
        for i in range(cin):
            y[o] += np.sum(xp[i][idx] * w[o, i][None, :], axis=1)
        y[o] += b[o]
    return y


def _offline_tconv(x, w, b, stride, lookahead):
    cin, t_in = x.shape
    cout, _, k = w.shape
    if lookahead:
        x = np.concatenate([x[:, lookahead:], np.zeros((cin, lookahead))], axis=1)
    y = np.zeros((cout, t_in * stride + k))
    for o in range(cout):
        for i in range(cin):
            up = np.zeros(t_in * stride)
            up[::stride] = x[i]
            y[o, : t_in * stride + k - 1] += np.convolve(up, w[o, i])
    return y[:, : t_in * stride] + b[:, None]


def process_offline(
    spec: ArchitectureSpec,
    weights: dict[str, np.ndarray],
    audio: np.ndarray,
    return_latent: bool = False,
):
    """Stateless reference: the whole signal through full-length convolutions.

    Runs in float64.  Defines the ground truth both for streaming
    equivalence and (with lookahead) for cumulative-delay alignment.
    """
    spec.validate()
    _check_weights(spec, weights)
    bank = pqmf.design(spec.filterbank)
    x = np.asarray(audio, dtype=np.float64).reshape(-1)
    c_r = compression_ratio(spec)
    x = x[: len(x) - len(x) % c_r]
    enc_steps, dec_steps = lower(spec)
    latent, _ = _offline_chain(enc_steps, weights, bank, x[None, :])
    if return_latent:
        return latent
    out, _ = _offline_chain(dec_steps, weights, bank, latent)
    return out[0]


def offline_decode(spec, weights, latent):
    """Decoder-only offline reference from a latent sequence."""
    bank = pqmf.design(spec.filterbank)
    _, dec_steps = lower(spec)
    out, _ = _offline_chain(dec_steps, weights, bank, np.asarray(latent, np.float64))
    return out[0]


def _leaky_gain(x):
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


def _offline_chain(steps, weights, bank, x, dx=None):
    """Run the offline reference, optionally co-propagating a delta signal.

    The delta follows the exact forward-mode derivative of the chain at
    the baseline input (the infinitesimal limit of a two-run
    perturbation), which keeps arbitrarily small dependency paths
    representable instead of being absorbed into the baseline values.
    """
    for step in steps:
        if step.op == "pqmf_analysis":
            x = _offline_pqmf_analysis(x, bank, step)
            if dx is not None:
                dx = _offline_pqmf_analysis(dx, bank, step)
        elif step.op == "pqmf_synthesis":
            x = _offline_pqmf_synthesis(x, bank, step)
            if dx is not None:
                dx = _offline_pqmf_synthesis(dx, bank, step)
        elif step.op == "act":
            if step.activation == "tanh":
                y = np.tanh(x)
                if dx is not None:
                    dx = (1.0 - y * y) * dx
                x = y
            else:
                if dx is not None:
                    dx = _leaky_gain(x) * dx
                x = _leaky(x)
        elif step.op == "conv":
            w = weights[f"{step.name}.weight"].astype(np.float64)
            b = weights[f"{step.name}.bias"].astype(np.float64)
            d = step.dilations[0] if step.dilations else 1
            if dx is not None:
                dx = _offline_conv(dx, w, np.zeros_like(b), step.stride, d, step.lookahead)
            x = _offline_conv(x, w, b, step.stride, d, step.lookahead)
        elif step.op == "tconv":
            w = weights[f"{step.name}.weight"].astype(np.float64)
            b = weights[f"{step.name}.bias"].astype(np.float64)
            if dx is not None:
                dx = _offline_tconv(dx, w, np.zeros_like(b), step.stride, step.lookahead)
            x = _offline_tconv(x, w, b, step.stride, step.lookahead)
        elif step.op == "rstack":
            la = step.lookahead
            for i, d in enumerate(step.dilations):
                wd = weights[f"{step.name}.{i}.dconv.weight"].astype(np.float64)
                bd = weights[f"{step.name}.{i}.dconv.bias"].astype(np.float64)
                wp = weights[f"{step.name}.{i}.pw.weight"].astype(np.float64)
                bp = weights[f"{step.name}.{i}.pw.bias"].astype(np.float64)
                a = _leaky(x)
                u = _offline_conv(a, wd, bd, 1, d, 0)
                v = _leaky(u)
                h = _offline_conv(v, wp, bp, 1, 1, 0)
                if dx is not None:
                    da = _leaky_gain(x) * dx
                    du = _offline_conv(da, wd, np.zeros_like(bd), 1, d, 0)
                    dv = _leaky_gain(u) * du
                    dh = _offline_conv(dv, wp, np.zeros_like(bp), 1, 1, 0)
                    dx = dx + dh
                x = x + h
            if la:
                # whole-stack lookahead: advanced causal output
                x = np.concatenate([x[:, la:], np.zeros((x.shape[0], la))], axis=1)
                if dx is not None:
                    dx = np.concatenate(
                        [dx[:, la:], np.zeros((dx.shape[0], la))], axis=1
                    )
        else:
            raise AssertionError(step.op)
    return x, dx


def _offline_pqmf_analysis(x, bank, step):
    m = step.stride
    t_frames = x.shape[1] // m
    ys = []
    for kband in range(bank.bands):
        full = np.convolve(x[0], bank.analysis_filters[kband])
        ys.append(full[m - 1 :: m][:t_frames])
    return np.stack(ys)


def _offline_pqmf_synthesis(x, bank, step):
    m, taps = step.stride, step.kernel
    n = x.shape[1]
    acc = np.zeros(n * m + taps + m)
    for kband in range(bank.bands):
        up = np.zeros(n * m)
        up[::m] = x[kband]
        acc[: n * m + taps - 1] += np.convolve(up, bank.synthesis_filters[kband])
    out = np.concatenate([np.zeros(m - 1), acc])[: n * m]
    return out[None, :]


# ---------------------------------------------------------------------------
# Empirical receptive fields (perturbation oracle)
# ---------------------------------------------------------------------------


def _perturb_reach(spec, weights, bank, x, p):
    """Forward-mode delta of a unit perturbation at sample p.

    Returns (delta_latent, delta_audio): the exact first-order response
    of the model around the baseline buffer x.  Running the delta as its
    own signal keeps faint dependency paths from being rounded away
    against the baseline, so support detection is exact.
    """
    enc_steps, dec_steps = lower(spec)
    dx = np.zeros((1, len(x)))
    dx[0, p] = 1.0
    lat, dlat = _offline_chain(enc_steps, weights, bank, x[None, :], dx)
    out, dout = _offline_chain(dec_steps, weights, bank, lat, dlat)
    return dlat, dout[0]


def measure_receptive_field(
    instance: ModelInstance, positions: int | None = None, seed: int = 1234
) -> int:
    """Total receptive field in audio samples by single-sample perturbation.

    A long random buffer is fed with a unit perturbation at one sample;
    the span runs from the perturbed index to the end of the compression
    block holding the last responding output sample (output commits
    block by block; at a compression ratio of 1 it is literally the last
    differing sample), maximized over one full input phase period and at
    least 8 positions.  Phases never read by a kernel shorter than its
    stride respond nowhere and are skipped.
    """
    spec, weights = instance.spec, instance.weights
    bank = pqmf.design(spec.filterbank)
    c_r = instance.compression_ratio
    rng = np.random.default_rng(seed)
    phases = max(8, c_r) if positions is None else max(positions, 1)
    length = 4 * c_r
    while True:
        from .archgraph import analyze  # sizing hint only; result not trusted

        try:
            hint = analyze(spec).rf_total_samples
        except Exception:
            hint = length
        length = max(length, 2 * hint + 8 * c_r)
        length = (length // c_r + 2) * c_r
        x = rng.uniform(-0.5, 0.5, size=length)
        p0 = length // 2 - (length // 2) % c_r
        best = 0
        hits = 0
        saturated = False
        for phi in range(phases):
            p = p0 + phi
            _, dout = _perturb_reach(spec, weights, bank, x, p)
            nz = np.flatnonzero(dout)
            if len(nz) == 0:
                continue
            hits += 1
            if nz[-1] >= length - c_r:
                saturated = True
                break
            best = max(best, (int(nz[-1]) // c_r + 1) * c_r - p)
        if saturated:
            length *= 2
            continue
        if hits == 0:
            raise DegenerateWeightsError(
                "no perturbation produced an output response; retry with a "
                "different weight seed"
            )
        return best


def measure_encoder_receptive_field(instance: ModelInstance, seed: int = 99) -> int:
    """Audio samples influencing one latent frame, by perturbation.

    For each input phase, the last latent frame still responding marks a
    window whose newest sample is (tau+1)*C_r - 1; the maximum of
    newest-sample-minus-perturbed-index over one period recovers the
    window span exactly.
    """
    spec, weights = instance.spec, instance.weights
    bank = pqmf.design(spec.filterbank)
    enc_steps, _ = lower(spec)
    c_r = instance.compression_ratio
    rng = np.random.default_rng(seed)
    length = 8 * c_r
    while True:
        try:
            from .archgraph import encoder_receptive_field

            hint = encoder_receptive_field(spec)
        except Exception:
            hint = length
        length = max(length, 2 * hint + 8 * c_r)
        length = (length // c_r + 2) * c_r
        x = rng.uniform(-0.5, 0.5, size=length)
        p0 = length // 2 - (length // 2) % c_r
        best = 0
        hits = 0
        saturated = False
        for phi in range(c_r):
            p = p0 + phi
            dx = np.zeros((1, length))
            dx[0, p] = 1.0
            _, dlat = _offline_chain(enc_steps, weights, bank, x[None, :], dx)
            nz = np.flatnonzero(np.any(dlat != 0.0, axis=0))
            if len(nz) == 0:
                continue  # phase unread by a kernel shorter than its stride
            hits += 1
            if nz[-1] >= dlat.shape[1] - 2:
                saturated = True
                break
            best = max(best, (int(nz[-1]) + 1) * c_r - p)
        if saturated:
            length *= 2
            continue
        if hits == 0:
            raise DegenerateWeightsError("no latent response; retry seed")
        return best


def measure_decoder_receptive_field(instance: ModelInstance, seed: int = 7) -> int:
    """Latent frames influencing one audio sample, by latent perturbation.

    One perturbed latent frame responds over a contiguous audio
    interval; tiling that interval at one frame per compression block
    gives the maximal per-sample latent coverage directly.
    """
    spec, weights = instance.spec, instance.weights
    bank = pqmf.design(spec.filterbank)
    _, dec_steps = lower(spec)
    c_r = instance.compression_ratio
    rng = np.random.default_rng(seed)
    frames = 16
    while True:
        lat = rng.uniform(-0.5, 0.5, size=(spec.latent_dim, frames))
        tau = frames // 2
        dlat = np.zeros_like(lat)
        dlat[:, tau] = 1.0
        _, dout = _offline_chain(dec_steps, weights, bank, lat, dlat)
        nz = np.flatnonzero(dout[0])
        if len(nz) == 0:
            raise DegenerateWeightsError("no decoder output response; retry seed")
        if nz[0] <= c_r or nz[-1] >= dout.shape[1] - c_r:
            frames *= 2
            continue
        return (int(nz[-1]) - int(nz[0])) // c_r + 1


# ---------------------------------------------------------------------------
# Fixture specs
# ---------------------------------------------------------------------------


def make_delay_spec(delay: int, sample_rate: int = 44100) -> ArchitectureSpec:
    """Single-tap FIR model: output = input delayed by `delay` samples."""
    return ArchitectureSpec(
        name=f"delay_{delay}",
        sample_rate=sample_rate,
        filterbank=FilterbankSpec(bands=1, attenuation_db=100.0),
        encoder=(LayerSpec(kind="conv", kernel=delay + 1, stride=1, channels=(1, 1)),),
        latent_dim=1,
        decoder=(LayerSpec(kind="conv", kernel=1, stride=1, channels=(1, 1)),),
    )


def delay_line_instance(delay: int, sample_rate: int = 44100) -> ModelInstance:
    spec = make_delay_spec(delay, sample_rate)
    weights = init_weights(spec, seed=0, zero_bias=True)
    w = np.zeros((1, 1, delay + 1), dtype=np.float32)
    w[0, 0, delay] = 1.0
    weights["enc0.conv.weight"] = w
    weights["dec0.conv.weight"] = np.ones((1, 1, 1), dtype=np.float32)
    return ModelInstance(spec, weights)


def make_identity_spec(sample_rate: int = 44100) -> ArchitectureSpec:
    return make_delay_spec(0, sample_rate)


def identity_instance(sample_rate: int = 44100) -> ModelInstance:
    return delay_line_instance(0, sample_rate)
