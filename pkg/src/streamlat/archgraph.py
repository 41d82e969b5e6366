"""Declarative streaming-autoencoder architectures and their analytic latency budget.

An architecture is a filterbank front end plus an encoder (strided
convolutions down to a latent sequence) and a decoder (transposed
convolutions interleaved with dilated residual stacks back up to the
multiband signal).  Everything in this module is pure integer
arithmetic over immutable specs: receptive fields, compression ratio,
and the per-source latency decomposition are computed without
instantiating any weights.

Receptive fields are computed by propagating index intervals backwards
through the layer graph, layer by layer, using the exact dependency
window of each operation.  The same layer conventions are used by the
execution kernel, and the results are required (by the test suite) to
match empirical perturbation measurements sample for sample.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

from .errors import (
    InfeasibleBlockError,
    SpecValidationError,
    UnsupportedLayoutError,
)

CONV_KINDS = ("conv", "transposed-conv", "residual-stack")
LAYER_KINDS = CONV_KINDS + ("activation",)
ACTIVATION_VARIANTS = ("leaky", "tanh")


def ms(samples: float, sample_rate: int) -> float:
    """Convert a sample count to milliseconds at the given rate."""
    return samples / sample_rate * 1000.0


# ---------------------------------------------------------------------------
# Spec types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerSpec:
    """One layer of an encoder or decoder graph.

    kernel is in frames at the layer's own input rate.  stride acts as a
    downsampling factor for "conv" and an upsampling factor for
    "transposed-conv".  dilations is only meaningful for
    "residual-stack", where each entry is one dilated sublayer (all
    sharing the same kernel length).  lookahead counts future input
    frames consumed by the layer; 0 means causal.
    """

    kind: str
    kernel: int = 1
    stride: int = 1
    dilations: tuple[int, ...] = ()
    channels: tuple[int, int] = (1, 1)
    lookahead: int = 0
    activation: str = "leaky"  # only used by kind == "activation"

    def validate(self, where: str = "layer") -> None:
        if self.kind not in LAYER_KINDS:
            raise SpecValidationError(f"{where}: unknown layer kind {self.kind!r}")
        if self.kind == "activation":
            if self.activation not in ACTIVATION_VARIANTS:
                raise SpecValidationError(
                    f"{where}: unknown activation variant {self.activation!r}"
                )
            return
        if self.kernel < 1:
            raise SpecValidationError(f"{where}: kernel_length >= 1 violated")
        if self.stride < 1:
            raise SpecValidationError(f"{where}: stride >= 1 violated")
        if self.kind == "residual-stack":
            if not self.dilations:
                raise SpecValidationError(
                    f"{where}: residual-stack requires non-empty dilations"
                )
            if any(d < 1 for d in self.dilations):
                raise SpecValidationError(f"{where}: dilations must be positive")
            if self.stride != 1:
                raise SpecValidationError(f"{where}: residual-stack stride must be 1")
        if any(c < 1 for c in self.channels):
            raise SpecValidationError(f"{where}: channels must be positive")
        if self.lookahead < 0:
            raise SpecValidationError(f"{where}: lookahead must be non-negative")
        if self.kind == "conv" and self.lookahead >= self.kernel:
            raise SpecValidationError(
                f"{where}: lookahead < kernel_length violated "
                f"({self.lookahead} >= {self.kernel})"
            )

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "activation":
            d["variant"] = self.activation
            return d
        d["kernel"] = self.kernel
        d["stride"] = self.stride
        if self.kind == "residual-stack":
            d["dilations"] = list(self.dilations)
        d["channels"] = list(self.channels)
        d["lookahead"] = self.lookahead
        return d

    @staticmethod
    def from_dict(d: dict) -> "LayerSpec":
        kind = d.get("kind")
        if kind == "activation":
            return LayerSpec(kind="activation", activation=d.get("variant", "leaky"))
        return LayerSpec(
            kind=kind,
            kernel=int(d.get("kernel", 1)),
            stride=int(d.get("stride", 1)),
            dilations=tuple(int(x) for x in d.get("dilations", ())),
            channels=tuple(int(x) for x in d.get("channels", (1, 1))),
            lookahead=int(d.get("lookahead", 0)),
        )


@dataclass(frozen=True)
class FilterbankSpec:
    """Pseudo-QMF front end: band count and minimum inter-band attenuation."""

    bands: int
    attenuation_db: float = 100.0

    def validate(self) -> None:
        if self.bands < 1 or (self.bands & (self.bands - 1)) != 0:
            raise SpecValidationError("filterbank: bands must be a power of two")
        if not (30.0 <= self.attenuation_db <= 120.0):
            raise SpecValidationError(
                "filterbank: attenuation_db must lie in [30, 120] dB"
            )


@dataclass(frozen=True)
class ArchitectureSpec:
    """Complete description of a streaming autoencoder."""

    name: str
    sample_rate: int
    filterbank: FilterbankSpec
    encoder: tuple[LayerSpec, ...]
    latent_dim: int
    decoder: tuple[LayerSpec, ...]

    def validate(self) -> None:
        self.filterbank.validate()
        if self.latent_dim < 1:
            raise SpecValidationError("latent_dim > 0 violated")
        if self.sample_rate < 1:
            raise SpecValidationError("sample_rate must be positive")
        if not self.encoder or not self.decoder:
            raise SpecValidationError("encoder and decoder must be non-empty")
        for i, layer in enumerate(self.encoder):
            layer.validate(f"encoder[{i}]")
            if layer.kind == "transposed-conv":
                raise SpecValidationError(
                    f"encoder[{i}]: transposed-conv not allowed in encoder"
                )
        for i, layer in enumerate(self.decoder):
            layer.validate(f"decoder[{i}]")
        down = 1
        for layer in self.encoder:
            if layer.kind == "conv":
                down *= layer.stride
        up = 1
        for layer in self.decoder:
            if layer.kind == "transposed-conv":
                up *= layer.stride
        if down != up:
            raise SpecValidationError(
                "autoencoder rate symmetry violated: encoder stride product "
                f"{down} != decoder upsampling product {up}"
            )
        # channel continuity, latent width at both ends
        convs_e = [l for l in self.encoder if l.kind in CONV_KINDS]
        convs_d = [l for l in self.decoder if l.kind in CONV_KINDS]
        if convs_e[0].channels[0] != self.filterbank.bands:
            raise SpecValidationError(
                "encoder input channels must equal filterbank bands"
            )
        if convs_e[-1].channels[1] != self.latent_dim:
            raise SpecValidationError("encoder output channels must equal latent_dim")
        if convs_d[0].channels[0] != self.latent_dim:
            raise SpecValidationError("decoder input channels must equal latent_dim")
        if convs_d[-1].channels[1] != self.filterbank.bands:
            raise SpecValidationError(
                "decoder output channels must equal filterbank bands"
            )
        for prev, cur in zip(convs_e, convs_e[1:]):
            if prev.channels[1] != cur.channels[0]:
                raise SpecValidationError("encoder channel chain mismatch")
        for prev, cur in zip(convs_d, convs_d[1:]):
            if prev.channels[1] != cur.channels[0]:
                raise SpecValidationError("decoder channel chain mismatch")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sample_rate": self.sample_rate,
            "filterbank": {
                "bands": self.filterbank.bands,
                "attenuation_db": self.filterbank.attenuation_db,
            },
            "encoder": [l.to_dict() for l in self.encoder],
            "latent_dim": self.latent_dim,
            "decoder": [l.to_dict() for l in self.decoder],
        }

    @staticmethod
    def from_dict(d: dict) -> "ArchitectureSpec":
        try:
            fb = d["filterbank"]
            spec = ArchitectureSpec(
                name=str(d.get("name", "unnamed")),
                sample_rate=int(d["sample_rate"]),
                filterbank=FilterbankSpec(
                    bands=int(fb["bands"]),
                    attenuation_db=float(fb.get("attenuation_db", 100.0)),
                ),
                encoder=tuple(LayerSpec.from_dict(x) for x in d["encoder"]),
                latent_dim=int(d["latent_dim"]),
                decoder=tuple(LayerSpec.from_dict(x) for x in d["decoder"]),
            )
        except KeyError as e:
            raise SpecValidationError(f"missing required spec key: {e.args[0]}") from e
        spec.validate()
        return spec

    @staticmethod
    def from_file(path) -> "ArchitectureSpec":
        with open(path) as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise SpecValidationError(
                    f"{path}: parse error at line {e.lineno}, column {e.colno}: {e.msg}"
                ) from e
        return ArchitectureSpec.from_dict(d)

    def to_file(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


# ---------------------------------------------------------------------------
# Lowering to primitive steps with exact index semantics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanStep:
    """One primitive operation with its rate bookkeeping.

    hop_in/hop_out are audio samples per frame at the step's input and
    output.  All dependency-window computations live here so the
    analytic path and the execution kernel cannot drift apart
    structurally.
    """

    op: str  # pqmf_analysis | conv | tconv | rstack | act | pqmf_synthesis
    name: str
    kernel: int = 1
    stride: int = 1
    dilations: tuple[int, ...] = ()
    channels: tuple[int, int] = (1, 1)
    lookahead: int = 0
    activation: str = "leaky"
    hop_in: int = 1
    hop_out: int = 1

    def backward(self, lo: int, hi: int) -> tuple[int, int]:
        """Map an output frame interval to the input frames it depends on."""
        if self.op == "act":
            return lo, hi
        if self.op == "conv":
            s, k, d, la = self.stride, self.kernel, max(self.dilations or (1,)), 0
            d = self.dilations[0] if self.dilations else 1
            la = self.lookahead
            return (
                lo * s + (s - 1) + la - (k - 1) * d,
                hi * s + (s - 1) + la,
            )
        if self.op == "rstack":
            span = sum((self.kernel - 1) * d for d in self.dilations)
            return lo - span + self.lookahead, hi + self.lookahead
        if self.op == "tconv":
            s, k, la = self.stride, self.kernel, self.lookahead
            return (
                math.ceil((lo - k + 1) / s) + la,
                math.floor(hi / s) + la,
            )
        if self.op == "pqmf_analysis":
            b, taps = self.stride, self.kernel
            return lo * b + (b - 1) - (taps - 1), hi * b + (b - 1)
        if self.op == "pqmf_synthesis":
            b, taps = self.stride, self.kernel
            return (
                math.ceil((lo - (b - 1) - (taps - 1)) / b),
                math.floor((hi - (b - 1)) / b),
            )
        raise UnsupportedLayoutError(f"unknown plan op {self.op!r}")


def _prototype_length(fb: FilterbankSpec) -> int:
    # local import: pqmf depends on this module for FilterbankSpec
    from .pqmf import prototype_length

    return prototype_length(fb.bands, fb.attenuation_db)


def lower(spec: ArchitectureSpec) -> tuple[list[PlanStep], list[PlanStep]]:
    """Flatten a spec into encoder and decoder step lists (filterbank included)."""
    spec.validate()
    bands = spec.filterbank.bands
    taps = _prototype_length(spec.filterbank)

    enc: list[PlanStep] = [
        PlanStep(
            op="pqmf_analysis",
            name="pqmf.analysis",
            kernel=taps,
            stride=bands,
            channels=(1, bands),
            hop_in=1,
            hop_out=bands,
        )
    ]
    hop = bands
    for i, layer in enumerate(spec.encoder):
        if layer.kind == "activation":
            enc.append(
                PlanStep(
                    op="act",
                    name=f"enc{i}.act",
                    activation=layer.activation,
                    hop_in=hop,
                    hop_out=hop,
                )
            )
            continue
        if layer.kind != "conv":
            raise UnsupportedLayoutError(
                f"encoder[{i}]: kind {layer.kind!r} unsupported in encoder"
            )
        enc.append(
            PlanStep(
                op="conv",
                name=f"enc{i}.conv",
                kernel=layer.kernel,
                stride=layer.stride,
                dilations=(1,),
                channels=layer.channels,
                lookahead=layer.lookahead,
                hop_in=hop,
                hop_out=hop * layer.stride,
            )
        )
        hop *= layer.stride

    dec: list[PlanStep] = []
    for i, layer in enumerate(spec.decoder):
        if layer.kind == "activation":
            dec.append(
                PlanStep(
                    op="act",
                    name=f"dec{i}.act",
                    activation=layer.activation,
                    hop_in=hop,
                    hop_out=hop,
                )
            )
        elif layer.kind == "conv":
            dec.append(
                PlanStep(
                    op="conv",
                    name=f"dec{i}.conv",
                    kernel=layer.kernel,
                    stride=layer.stride,
                    dilations=(1,),
                    channels=layer.channels,
                    lookahead=layer.lookahead,
                    hop_in=hop,
                    hop_out=hop * layer.stride,
                )
            )
            hop *= layer.stride
        elif layer.kind == "transposed-conv":
            if hop % layer.stride != 0:
                raise SpecValidationError(
                    f"decoder[{i}]: upsampling stride {layer.stride} does not divide "
                    f"frame hop {hop}"
                )
            dec.append(
                PlanStep(
                    op="tconv",
                    name=f"dec{i}.tconv",
                    kernel=layer.kernel,
                    stride=layer.stride,
                    channels=layer.channels,
                    lookahead=layer.lookahead,
                    hop_in=hop,
                    hop_out=hop // layer.stride,
                )
            )
            hop //= layer.stride
        elif layer.kind == "residual-stack":
            dec.append(
                PlanStep(
                    op="rstack",
                    name=f"dec{i}.stack",
                    kernel=layer.kernel,
                    dilations=layer.dilations,
                    channels=layer.channels,
                    lookahead=layer.lookahead,
                    hop_in=hop,
                    hop_out=hop,
                )
            )
        else:
            raise UnsupportedLayoutError(f"decoder[{i}]: kind {layer.kind!r}")
    if hop != bands:
        raise SpecValidationError(
            f"decoder output hop {hop} does not return to filterbank rate {bands}"
        )
    dec.append(
        PlanStep(
            op="pqmf_synthesis",
            name="pqmf.synthesis",
            kernel=taps,
            stride=bands,
            channels=(bands, 1),
            hop_in=bands,
            hop_out=1,
        )
    )
    return enc, dec


# ---------------------------------------------------------------------------
# Report types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyBudget:
    """Per-source analytic latency decomposition for one block size."""

    sample_rate: int
    block_samples: int
    buffering_samples: int
    representation_samples: int
    cumulative_samples: int
    jitter_bound_samples: int

    @property
    def block_ms(self) -> float:
        return ms(self.block_samples, self.sample_rate)

    @property
    def buffering_ms(self) -> float:
        return ms(self.buffering_samples, self.sample_rate)

    @property
    def representation_ms(self) -> float:
        return ms(self.representation_samples, self.sample_rate)

    @property
    def cumulative_ms(self) -> float:
        return ms(self.cumulative_samples, self.sample_rate)

    @property
    def jitter_bound_ms(self) -> float:
        return ms(self.jitter_bound_samples, self.sample_rate)

    def to_dict(self) -> dict:
        return {
            "block_samples": self.block_samples,
            "block_ms": self.block_ms,
            "buffering_samples": self.buffering_samples,
            "buffering_ms": self.buffering_ms,
            "representation_samples": self.representation_samples,
            "representation_ms": self.representation_ms,
            "cumulative_samples": self.cumulative_samples,
            "cumulative_ms": self.cumulative_ms,
            "jitter_bound_samples": self.jitter_bound_samples,
            "jitter_bound_ms": self.jitter_bound_ms,
        }


@dataclass(frozen=True)
class AnalysisReport:
    """Static analysis of one architecture at one block size."""

    name: str
    sample_rate: int
    compression_ratio: int
    rf_encoder_samples: int
    rf_decoder_latents: int
    rf_total_samples: int
    budget: LatencyBudget

    @property
    def rf_total_ms(self) -> float:
        return ms(self.rf_total_samples, self.sample_rate)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sample_rate": self.sample_rate,
            "compression_ratio": self.compression_ratio,
            "rf_encoder_samples": self.rf_encoder_samples,
            "rf_decoder_latents": self.rf_decoder_latents,
            "rf_total_samples": self.rf_total_samples,
            "rf_total_ms": self.rf_total_ms,
            "budget": self.budget.to_dict(),
        }


# ---------------------------------------------------------------------------
# Analytic operations
# ---------------------------------------------------------------------------


def compression_ratio(spec: ArchitectureSpec) -> int:
    """Audio samples per latent timestep: bands times the encoder stride product."""
    spec.validate()
    ratio = spec.filterbank.bands
    for layer in spec.encoder:
        if layer.kind == "conv":
            ratio *= layer.stride
    return ratio


def _backward_span(steps: Sequence[PlanStep], lo: int, hi: int) -> tuple[int, int]:
    for step in reversed(steps):
        lo, hi = step.backward(lo, hi)
    return lo, hi


def encoder_receptive_field(spec: ArchitectureSpec) -> int:
    """Audio samples influencing one latent timestep (filterbank span included).

    The encoder is a pure downsampling chain, so the span is the same for
    every latent frame and reduces to the forward recurrence: one plus
    the sum over conv layers of (kernel - 1) * dilation at each layer's
    input rate, plus the analysis prototype span.
    """
    enc, _ = lower(spec)
    t = 1 << 24  # far from any boundary; result is position independent
    lo, hi = _backward_span(enc, t, t)
    return hi - lo + 1


def decoder_receptive_field(spec: ArchitectureSpec) -> int:
    """Latent timesteps influencing one output audio sample.

    The dependency window of an output sample varies with its phase
    inside one compression block (transposed convolutions and the
    synthesis filterbank tile unevenly), so the span is maximized over
    one full period.  Ties at stride boundaries resolve to the maximal
    span by construction.
    """
    _, dec = lower(spec)
    c_r = compression_ratio(spec)
    base = (1 << 24) * c_r
    best = 0
    for m in range(base, base + c_r):
        lo, hi = _backward_span(dec, m, m)
        best = max(best, hi - lo + 1)
    return best


def total_receptive_field(r_fe: int, r_fd: int, c_r: int) -> int:
    """Total span in audio samples: a sliding encoder field across the
    decoder's latent window."""
    if r_fe < 1 or r_fd < 1 or c_r < 1:
        raise SpecValidationError("receptive-field terms must be positive")
    return r_fe + (r_fd - 1) * c_r


def cumulative_delay(spec: ArchitectureSpec) -> int:
    """Audio-rate delay introduced when lookahead layers are made streamable.

    Each layer's lookahead is absorbed by delaying its output until the
    required future frames have arrived; the delay is propagated through
    the graph in frames at each layer's own rate.  Strided layers can
    only shift their output grid by whole strides, so the running delay
    is rounded up to the next stride multiple there (exactly what the
    execution kernel implements).  For fully causal specs the result
    is 0, and whenever every intermediate delay divides the strides it
    meets, the result equals the plain sum of lookahead times the
    audio-rate hop at each layer.
    """
    enc, dec = lower(spec)
    delay = 0  # frames at the current step's input rate
    for step in enc + dec:
        if step.op in ("act",):
            continue
        if step.op == "conv":
            delay = math.ceil((delay + step.lookahead) / step.stride)
        elif step.op == "rstack":
            delay = delay + step.lookahead
        elif step.op == "tconv":
            delay = (delay + step.lookahead) * step.stride
        elif step.op == "pqmf_analysis":
            # causal, stride = bands; delay arrives at audio rate (hop 1)
            delay = math.ceil(delay / step.stride)
        elif step.op == "pqmf_synthesis":
            delay = delay * step.stride
    return delay  # final hop is 1 audio sample


def representation_delay(fb: FilterbankSpec) -> int:
    """Round-trip group delay of the filterbank at audio rate.

    One shared linear-phase prototype serves analysis and synthesis, so
    the total is (prototype_length - 1): half on each side.
    """
    fb.validate()
    if fb.bands == 1:
        return 0
    return _prototype_length(fb) - 1


def jitter_bound(c_r: int, sample_rate: int) -> float:
    """Positional-uncertainty span of one block, in milliseconds."""
    if c_r < 1:
        raise SpecValidationError("compression ratio must be >= 1")
    return ms(c_r, sample_rate)


def latency_budget(spec: ArchitectureSpec, block_samples: int) -> LatencyBudget:
    """Aggregate the four analytic latency sources for a block size."""
    c_r = compression_ratio(spec)
    if block_samples < c_r:
        raise InfeasibleBlockError(
            f"block of {block_samples} samples is below the minimum block size "
            f"of the compression ratio ({c_r})"
        )
    if block_samples % c_r != 0:
        raise InfeasibleBlockError(
            f"block of {block_samples} samples is not a multiple of the "
            f"compression ratio ({c_r})"
        )
    return LatencyBudget(
        sample_rate=spec.sample_rate,
        block_samples=block_samples,
        buffering_samples=2 * block_samples,
        representation_samples=representation_delay(spec.filterbank),
        cumulative_samples=cumulative_delay(spec),
        jitter_bound_samples=block_samples,
    )


def analyze(spec: ArchitectureSpec, block_samples: Optional[int] = None) -> AnalysisReport:
    """Full static analysis: receptive fields plus the latency budget.

    block_samples defaults to the minimum feasible block (one
    compression block).
    """
    c_r = compression_ratio(spec)
    if block_samples is None:
        block_samples = c_r
    r_fe = encoder_receptive_field(spec)
    r_fd = decoder_receptive_field(spec)
    r_f = total_receptive_field(r_fe, r_fd, c_r)
    # consistency guard: the whole-chain window must reproduce eq-style total
    enc, dec = lower(spec)
    base = (1 << 24) * c_r
    whole = 0
    for m in range(base, base + c_r):
        lo, hi = _backward_span(enc + dec, m, m)
        whole = max(whole, hi - lo + 1)
    if whole != r_f:
        raise AssertionError(
            f"internal inconsistency: whole-chain span {whole} != composed total {r_f}"
        )
    return AnalysisReport(
        name=spec.name,
        sample_rate=spec.sample_rate,
        compression_ratio=c_r,
        rf_encoder_samples=r_fe,
        rf_decoder_latents=r_fd,
        rf_total_samples=r_f,
        budget=latency_budget(spec, block_samples),
    )
