"""Near-perfect-reconstruction pseudo-QMF filterbanks.

A single linear-phase Kaiser-windowed lowpass prototype is cosine
modulated into the analysis bank; the synthesis bank is the
time-reversed analysis bank.  The prototype length is the smallest
(2^j * bands + 1) covering the Kaiser length estimate for the requested
stopband attenuation with a transition band of pi / (2 * bands); the
cutoff is then tuned by a scalar search that flattens the distortion
function.  Total analysis+synthesis delay is exactly
prototype_length - 1 samples.

Design runs in double precision.  Streaming execution mirrors the
offline path bit for bit given identical dtype.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, signal

from .archgraph import FilterbankSpec
from .errors import DesignRangeError, ShapeError

SNR_CAP_DB = 300.0  # reported for lossless (passthrough) round trips


def prototype_length(bands: int, attenuation_db: float) -> int:
    """Prototype tap count for a band count / attenuation pair.

    Kaiser estimate for the target attenuation over a transition band of
    pi / (2 * bands), rounded up to the next power-of-two multiple of the
    band count plus one (odd length, type-I linear phase, and a tap count
    that tiles the polyphase grid evenly).
    """
    if bands == 1:
        return 1
    if not (30.0 <= attenuation_db <= 120.0):
        raise DesignRangeError(
            f"attenuation {attenuation_db} dB outside the [30, 120] design range"
        )
    estimate, _ = signal.kaiserord(attenuation_db, 1.0 / (2 * bands))
    n = bands
    while n + 1 < estimate:
        n *= 2
    return n + 1


@dataclass(frozen=True)
class PqmfBank:
    """Designed filterbank: prototype plus modulated analysis/synthesis banks."""

    bands: int
    attenuation_db: float
    prototype: np.ndarray  # (taps,) float64, symmetric
    analysis_filters: np.ndarray  # (bands, taps)
    synthesis_filters: np.ndarray  # (bands, taps)
    group_delay_samples: int

    @property
    def taps(self) -> int:
        return len(self.prototype)

    @property
    def roundtrip_delay_samples(self) -> int:
        return self.taps - 1

    def to_dict(self) -> dict:
        return {
            "bands": self.bands,
            "attenuation_db": self.attenuation_db,
            "prototype": [float(v) for v in self.prototype],
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)
            f.write("\n")

    @staticmethod
    def load(path) -> "PqmfBank":
        with open(path) as f:
            d = json.load(f)
        proto = np.asarray(d["prototype"], dtype=np.float64)
        return _bank_from_prototype(int(d["bands"]), float(d["attenuation_db"]), proto)


def _modulate(prototype: np.ndarray, bands: int) -> tuple[np.ndarray, np.ndarray]:
    taps = len(prototype)
    n = np.arange(taps)
    centered = n - (taps - 1) / 2.0
    k = np.arange(bands)[:, None]
    phase = (2 * k + 1) * (np.pi / (2 * bands)) * centered[None, :]
    sign = ((-1.0) ** k) * np.pi / 4
    # symmetric sqrt(bands) split keeps the analysis stage energy preserving
    analysis = 2.0 * np.sqrt(bands) * prototype[None, :] * np.cos(phase + sign)
    synthesis = analysis[:, ::-1].copy()  # time-reversed modulated prototype
    return analysis, synthesis


def _bank_from_prototype(
    bands: int, attenuation_db: float, prototype: np.ndarray
) -> PqmfBank:
    if bands == 1:
        proto = np.ones(1, dtype=np.float64)
        return PqmfBank(
            bands=1,
            attenuation_db=attenuation_db,
            prototype=proto,
            analysis_filters=proto[None, :].copy(),
            synthesis_filters=proto[None, :].copy(),
            group_delay_samples=0,
        )
    analysis, synthesis = _modulate(prototype, bands)
    return PqmfBank(
        bands=bands,
        attenuation_db=attenuation_db,
        prototype=prototype,
        analysis_filters=analysis,
        synthesis_filters=synthesis,
        group_delay_samples=(len(prototype) - 1) // 2,
    )


def _distortion(cutoff_factor: float, bands: int, taps: int, beta: float) -> float:
    """Aliasing/flatness proxy: residual autocorrelation at 2*bands lags."""
    h = signal.firwin(
        taps, cutoff_factor / (2 * bands), window=("kaiser", beta), scale=True
    )
    g = np.convolve(h, h[::-1])
    center = taps - 1
    lags = g[center :: 2 * bands][1:]
    return float(np.max(np.abs(lags)))


@lru_cache(maxsize=32)
def _design_cached(bands: int, attenuation_db: float) -> PqmfBank:
    if bands == 1:
        return _bank_from_prototype(1, attenuation_db, np.ones(1))
    taps = prototype_length(bands, attenuation_db)
    beta = signal.kaiser_beta(attenuation_db)
    res = optimize.minimize_scalar(
        _distortion,
        bounds=(0.55, 1.45),
        args=(bands, taps, beta),
        method="bounded",
        options={"xatol": 1e-8},
    )
    h = signal.firwin(
        taps, res.x / (2 * bands), window=("kaiser", beta), scale=True
    )
    bank = _bank_from_prototype(bands, attenuation_db, h)
    # normalize round-trip gain to exactly one at the linear-phase delay
    gain = _roundtrip_gain(bank)
    bank = _bank_from_prototype(bands, attenuation_db, h / np.sqrt(gain))
    return bank


def design(fb: FilterbankSpec) -> PqmfBank:
    """Design the bank for a filterbank spec (cached per parameter pair)."""
    fb.validate()
    if not (30.0 <= fb.attenuation_db <= 120.0) and fb.bands > 1:
        raise DesignRangeError(
            f"attenuation {fb.attenuation_db} dB outside the [30, 120] design range"
        )
    return _design_cached(fb.bands, float(fb.attenuation_db))


def _roundtrip_gain(bank: PqmfBank) -> float:
    taps = bank.taps
    x = np.zeros(4 * taps + 4 * bank.bands)
    p = taps + bank.bands
    x[p] = 1.0
    y = synthesize(bank, analyze(bank, x))
    return float(y[p + taps - 1])


# ---------------------------------------------------------------------------
# Offline execution
# ---------------------------------------------------------------------------


def analyze(bank: PqmfBank, audio: np.ndarray) -> np.ndarray:
    """Split mono audio into (bands, frames) multiband frames.

    Frame t of band k is the dot product of analysis filter k with the
    input window ending at sample t*bands + bands - 1 (causal; zero
    history before the signal).  Input is zero padded up to a whole
    number of frames.
    """
    x = np.asarray(audio)
    if x.ndim != 1:
        raise ShapeError("analyze expects a mono 1-D signal")
    m = bank.bands
    if len(x) % m:
        x = np.concatenate([x, np.zeros(m - len(x) % m, dtype=x.dtype)])
    state = AnalysisState(bank, dtype=x.dtype)
    return state.process(x)


def synthesize(bank: PqmfBank, frames: np.ndarray) -> np.ndarray:
    """Invert (bands, frames) multiband frames back to mono audio."""
    y = np.asarray(frames)
    if y.ndim != 2 or y.shape[0] != bank.bands:
        raise ShapeError(
            f"synthesize expects ({bank.bands}, frames), got {y.shape}"
        )
    state = SynthesisState(bank, dtype=y.dtype)
    return state.process(y)


# ---------------------------------------------------------------------------
# Streaming execution
# ---------------------------------------------------------------------------


class AnalysisState:
    """Streaming analysis: retains the last taps-1 input samples."""

    def __init__(self, bank: PqmfBank, dtype=np.float32):
        self.bank = bank
        self.dtype = np.dtype(dtype)
        # filters as (taps, bands), time reversed for windowed dot products
        self._hrev = np.ascontiguousarray(
            bank.analysis_filters[:, ::-1].T.astype(self.dtype)
        )
        self.reset()

    def reset(self) -> None:
        self._hist = np.zeros(self.bank.taps - 1, dtype=self.dtype)

    def process(self, block: np.ndarray) -> np.ndarray:
        m = self.bank.bands
        x = np.asarray(block, dtype=self.dtype)
        if len(x) % m:
            raise ShapeError(f"analysis block length must be a multiple of {m}")
        if m == 1 and self.bank.taps == 1:
            return x[None, :].copy()
        xp = np.concatenate([self._hist, x])
        windows = np.lib.stride_tricks.sliding_window_view(xp, self.bank.taps)
        frames = windows[m - 1 :: m]
        out = frames @ self._hrev  # (n_frames, bands)
        if len(xp) > self.bank.taps - 1:
            self._hist = xp[-(self.bank.taps - 1) :].copy()
        return np.ascontiguousarray(out.T)


class SynthesisState:
    """Streaming synthesis: overlap-add with a persistent taps-1 tail."""

    def __init__(self, bank: PqmfBank, dtype=np.float32):
        self.bank = bank
        self.dtype = np.dtype(dtype)
        self._g = np.ascontiguousarray(bank.synthesis_filters.astype(self.dtype))
        self.reset()

    def reset(self) -> None:
        self._tail = np.zeros(self.bank.taps - 1, dtype=self.dtype)

    def process(self, frames: np.ndarray) -> np.ndarray:
        m = self.bank.bands
        y = np.asarray(frames, dtype=self.dtype)
        if y.ndim != 2 or y.shape[0] != m:
            raise ShapeError(f"synthesis block must be ({m}, frames), got {y.shape}")
        n = y.shape[1]
        taps = self.bank.taps
        if m == 1 and taps == 1:
            return y[0].copy()
        out = np.zeros(n * m + taps - 1 + (m - 1), dtype=self.dtype)
        out[: taps - 1] += self._tail
        contrib = y.T @ self._g  # (n, taps)
        # frame t writes at offset t*m + m - 1 (keeps round trip = taps - 1)
        for j in range(taps):
            out[m - 1 + j : m - 1 + j + n * m : m] += contrib[:, j]
        emitted = out[: n * m].copy()
        self._tail = out[n * m : n * m + taps - 1].copy()
        return emitted


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------


def measure_bank(bank: PqmfBank, n_freq: int = 8192, seed: int = 0) -> dict:
    """Stopband attenuation, round-trip SNR, and round-trip delay."""
    if bank.bands == 1:
        return {
            "stopband_db": float("inf"),
            "roundtrip_snr_db": SNR_CAP_DB,
            "roundtrip_delay_samples": 0,
        }
    # stopband: prototype magnitude response beyond pi / bands
    H = np.abs(np.fft.rfft(bank.prototype, 2 * n_freq))
    freqs = np.linspace(0, np.pi, len(H))
    ref = H[0]
    stop = H[freqs >= np.pi / bank.bands]
    stopband_db = float(-20.0 * np.log10(np.max(stop) / ref))

    # delay: impulse round trip, exact integer peak position
    taps = bank.taps
    x = np.zeros(4 * taps + 4 * bank.bands)
    p = taps + bank.bands
    x[p] = 1.0
    y = synthesize(bank, analyze(bank, x))
    delay = int(np.argmax(np.abs(y[: len(x)]))) - p

    # SNR: white-noise round trip with delay compensation
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(1 << 15)
    padded = np.concatenate([noise, np.zeros(2 * taps)])
    rec = synthesize(bank, analyze(bank, padded))
    aligned = rec[delay : delay + len(noise)]
    err = aligned - noise
    snr = float(10.0 * np.log10(np.sum(noise**2) / max(np.sum(err**2), 1e-300)))
    return {
        "stopband_db": stopband_db,
        "roundtrip_snr_db": min(snr, SNR_CAP_DB),
        "roundtrip_delay_samples": delay,
    }
